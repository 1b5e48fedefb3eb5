//! The `NTCC` container and storage accounting.
//!
//! All integers are little-endian `u32`:
//!
//! ```text
//! "NTCC" | version
//! width height channels num_mips g0_ratio c0 b0 c1 b1
//! hidden_width hidden_layers activation address_mode num_levels name_count
//! name_count × (start len byte_len utf8-bytes)
//! num_levels × (first_mip last_mip r0 r1)
//! num_levels × (g0 codes, g1 codes)   B bits per code, LSB-first, (y, x, channel)
//!                                      order, each grid zero-padded to a byte
//! per layer: weights (out × in, row-major) then biases, raw f32
//! CRC-32 of everything above
//! ```
//!
//! A grid code is the quantization index shifted to `0..2^B`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::grid::AddressMode;
use crate::mlp::{Activation, DecoderWeights, HIDDEN_LAYERS, MAX_OUTPUT_CHANNELS};
use crate::model::Model;
use crate::profile::Profile;
use crate::pyramid::{grid_geometry, mips_for_level, num_feature_levels, FeatureLevel, FeaturePyramid, Grid};
use crate::quant::QuantSpec;
use crate::texture::{mip_count, validate_spans, ChannelSpan};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"NTCC";
pub const VERSION: u32 = 1;
const HEADER_FIELDS: usize = 15;
const LEVEL_FIELDS: usize = 4;
const MAX_WIDTH: u32 = 1 << 16;

/// Fixed-size header values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub num_mips: u32,
    pub g0_ratio: u32,
    pub c0: u32,
    pub b0: u32,
    pub c1: u32,
    pub b1: u32,
    pub hidden_width: u32,
    pub hidden_layers: u32,
    pub activation: u32,
    pub address_mode: u32,
    pub num_levels: u32,
    pub name_count: u32,
}

impl Header {
    fn to_array(&self) -> [u32; HEADER_FIELDS] {
        [
            self.width,
            self.height,
            self.channels,
            self.num_mips,
            self.g0_ratio,
            self.c0,
            self.b0,
            self.c1,
            self.b1,
            self.hidden_width,
            self.hidden_layers,
            self.activation,
            self.address_mode,
            self.num_levels,
            self.name_count,
        ]
    }

    fn from_array(a: [u32; HEADER_FIELDS]) -> Self {
        Self {
            width: a[0],
            height: a[1],
            channels: a[2],
            num_mips: a[3],
            g0_ratio: a[4],
            c0: a[5],
            b0: a[6],
            c1: a[7],
            b1: a[8],
            hidden_width: a[9],
            hidden_layers: a[10],
            activation: a[11],
            address_mode: a[12],
            num_levels: a[13],
            name_count: a[14],
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidContainer(m));
        if self.width != self.height || !self.width.is_power_of_two() || self.width < 4 || self.width > MAX_WIDTH {
            return bad(format!("bad resolution {}x{}", self.width, self.height));
        }
        if self.num_mips as usize != mip_count(self.width as usize) {
            return bad(format!("{} mips for width {}", self.num_mips, self.width));
        }
        if self.num_levels as usize != num_feature_levels(self.num_mips as usize) {
            return bad(format!("{} feature levels for {} mips", self.num_levels, self.num_mips));
        }
        if self.channels == 0 || self.channels as usize > MAX_OUTPUT_CHANNELS {
            return bad(format!("{} channels", self.channels));
        }
        if self.c0 > 256 || self.c1 > 256 || self.hidden_width == 0 || self.hidden_width > 4096 {
            return bad("grid channels or hidden width out of range".into());
        }
        if self.hidden_layers as usize != HIDDEN_LAYERS {
            return bad(format!("{} hidden layers", self.hidden_layers));
        }
        if Activation::from_id(self.activation).is_none() || AddressMode::from_id(self.address_mode).is_none() {
            return bad("unknown activation or address mode".into());
        }
        if self.name_count > self.channels {
            return bad("more names than channels".into());
        }
        self.profile()
            .validate()
            .map_err(|e| Error::InvalidContainer(format!("{e}")))
    }

    pub fn profile(&self) -> Profile {
        let name = Profile::matching_builtin(self.g0_ratio, self.c0, self.b0, self.c1, self.b1)
            .map(|p| p.name)
            .unwrap_or_else(|| String::from("custom"));
        Profile {
            name,
            g0_ratio: self.g0_ratio,
            c0: self.c0,
            b0: self.b0,
            c1: self.c1,
            b1: self.b1,
        }
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut s = alloc::vec![self.profile().input_width()];
        s.extend(core::iter::repeat_n(self.hidden_width as usize, HIDDEN_LAYERS));
        s.push(self.channels as usize);
        s
    }
}

/// A trained texture set: channel names plus a model whose grids hold only
/// bin centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedTexture {
    pub names: Vec<ChannelSpan>,
    pub model: Model<f32>,
}

impl CompressedTexture {
    /// Fails unless every grid value is a bin center and the names cover the
    /// output channels.
    pub fn new(names: Vec<ChannelSpan>, model: Model<f32>) -> Result<Self> {
        validate_spans(&names, model.channels)?;
        if !model.pyramid.is_quantized() {
            return Err(Error::InvalidContainer("grids are not quantized".into()));
        }
        Ok(Self { names, model })
    }

    pub fn header(&self) -> Header {
        let m = &self.model;
        Header {
            width: m.width as u32,
            height: m.width as u32,
            channels: m.channels as u32,
            num_mips: m.num_mips as u32,
            g0_ratio: m.profile.g0_ratio,
            c0: m.profile.c0,
            b0: m.profile.b0,
            c1: m.profile.c1,
            b1: m.profile.b1,
            hidden_width: m.weights.hidden_width() as u32,
            hidden_layers: (m.weights.layers.len() - 1) as u32,
            activation: m.activation.id(),
            address_mode: m.address_mode.id(),
            num_levels: m.pyramid.levels.len() as u32,
            name_count: self.names.len() as u32,
        }
    }

    pub fn profile(&self) -> &Profile {
        &self.model.profile
    }

    pub fn width(&self) -> usize {
        self.model.width
    }

    pub fn channels(&self) -> usize {
        self.model.channels
    }

    pub fn num_mips(&self) -> usize {
        self.model.num_mips
    }

    pub fn storage_report(&self) -> StorageReport {
        storage_report(
            &self.model.profile,
            self.model.width,
            self.model.width,
            self.model.channels,
            &self.model.weights.layer_sizes(),
        )
    }

    pub fn serialize(&self) -> Vec<u8> {
        serialize(self)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        deserialize(bytes)
    }
}

/// Appends `bits`-wide codes LSB-first.
pub struct BitWriter<'a> {
    out: &'a mut Vec<u8>,
    acc: u64,
    filled: u32,
}

impl<'a> BitWriter<'a> {
    pub fn new(out: &'a mut Vec<u8>) -> Self {
        Self { out, acc: 0, filled: 0 }
    }

    #[inline]
    pub fn write(&mut self, code: u32, bits: u32) {
        debug_assert!(bits <= 16 && (code as u64) < (1u64 << bits));
        self.acc |= (code as u64) << self.filled;
        self.filled += bits;
        while self.filled >= 8 {
            self.out.push(self.acc as u8);
            self.acc >>= 8;
            self.filled -= 8;
        }
    }

    /// Pads the last partial byte with zeros.
    pub fn finish(self) {
        if self.filled > 0 {
            self.out.push(self.acc as u8);
        }
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u64,
    filled: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            pos: 0,
            acc: 0,
            filled: 0,
        }
    }

    #[inline]
    pub fn read(&mut self, bits: u32) -> Option<u32> {
        while self.filled < bits {
            let b = *self.bytes.get(self.pos)?;
            self.acc |= (b as u64) << self.filled;
            self.pos += 1;
            self.filled += 8;
        }
        let v = (self.acc & ((1u64 << bits) - 1)) as u32;
        self.acc >>= bits;
        self.filled -= bits;
        Some(v)
    }
}

fn packed_len(values: usize, bits: u32) -> usize {
    (values * bits as usize).div_ceil(8)
}

fn pack_grid(out: &mut Vec<u8>, grid: &Grid<f32>, q: QuantSpec) {
    let mut w = BitWriter::new(out);
    for &v in &grid.data {
        let (idx, _) = q.quantize(v);
        w.write(q.to_code(idx), q.bits() as u32);
    }
    w.finish();
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn serialize(ct: &CompressedTexture) -> Vec<u8> {
    let header = ct.header();
    let report = ct.storage_report();
    let mut out = Vec::with_capacity(report.total_bytes as usize + 64);
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, VERSION);
    for v in header.to_array() {
        put_u32(&mut out, v);
    }
    for span in &ct.names {
        put_u32(&mut out, span.start as u32);
        put_u32(&mut out, span.len as u32);
        put_u32(&mut out, span.name.len() as u32);
        out.extend_from_slice(span.name.as_bytes());
    }
    let pyr = &ct.model.pyramid;
    for level in &pyr.levels {
        for v in [level.first_mip, level.last_mip, level.g0.res, level.g1.res] {
            put_u32(&mut out, v as u32);
        }
    }
    for level in &pyr.levels {
        pack_grid(&mut out, &level.g0, pyr.quant0);
        pack_grid(&mut out, &level.g1, pyr.quant1);
    }
    for slice in ct.model.weights.param_slices() {
        for &v in slice {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn header(&mut self) -> Result<Header> {
        let mut a = [0u32; HEADER_FIELDS];
        for v in &mut a {
            *v = self.u32()?;
        }
        Ok(Header::from_array(a))
    }
}

/// Length a well-formed stream must have, derived from its header.
fn expected_len(bytes: &[u8]) -> Result<usize> {
    let mut cur = Cursor { bytes, pos: 8 };
    let header = cur.header()?;
    header.validate()?;
    for _ in 0..header.name_count {
        cur.take(8)?;
        let n = cur.u32()? as usize;
        cur.take(n)?;
    }
    let profile = header.profile();
    let mut len = cur.pos + header.num_levels as usize * LEVEL_FIELDS * 4;
    for j in 0..header.num_levels as usize {
        let (r0, r1) = grid_geometry(&profile, header.width as usize, j);
        len += packed_len(r0 * r0 * header.c0 as usize, header.b0);
        len += packed_len(r1 * r1 * header.c1 as usize, header.b1);
    }
    let params: usize = header.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    Ok(len + 4 * params + 4)
}

pub fn deserialize(bytes: &[u8]) -> Result<CompressedTexture> {
    if bytes.len() < 4 {
        return Err(Error::Truncated);
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let expected = expected_len(bytes)?;
    if bytes.len() < expected {
        return Err(Error::Truncated);
    }
    if bytes.len() > expected {
        return Err(Error::InvalidContainer(format!(
            "{} trailing bytes",
            bytes.len() - expected
        )));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
        return Err(Error::ChecksumMismatch);
    }

    let mut cur = Cursor { bytes: body, pos: 8 };
    let header = cur.header()?;
    let profile = header.profile();
    let mut names = Vec::with_capacity(header.name_count as usize);
    for _ in 0..header.name_count {
        let start = cur.u32()? as usize;
        let len = cur.u32()? as usize;
        let n = cur.u32()? as usize;
        let name = core::str::from_utf8(cur.take(n)?)
            .map_err(|_| Error::InvalidContainer("channel name is not UTF-8".into()))?;
        names.push(ChannelSpan {
            name: name.into(),
            start,
            len,
        });
    }
    validate_spans(&names, header.channels as usize).map_err(|e| Error::InvalidContainer(format!("{e}")))?;

    let width = header.width as usize;
    let num_mips = header.num_mips as usize;
    let mut pyramid = FeaturePyramid::<f32>::zeros(&profile, width, num_mips);
    for (j, level) in pyramid.levels.iter().enumerate() {
        let d = [cur.u32()?, cur.u32()?, cur.u32()?, cur.u32()?].map(|v| v as usize);
        let (first, last) = mips_for_level(j, num_mips);
        if d != [first, last, level.g0.res, level.g1.res] {
            return Err(Error::InvalidContainer(format!(
                "level {j} descriptor {d:?} does not match geometry"
            )));
        }
    }
    let (q0, q1) = (pyramid.quant0, pyramid.quant1);
    for level in &mut pyramid.levels {
        let FeatureLevel { g0, g1, .. } = level;
        for (grid, q) in [(g0, q0), (g1, q1)] {
            let bytes = cur.take(packed_len(grid.data.len(), q.bits() as u32))?;
            let mut reader = BitReader::new(bytes);
            for v in &mut grid.data {
                let code = reader.read(q.bits() as u32).ok_or(Error::Truncated)?;
                *v = q.dequantize(q.from_code(code));
            }
        }
    }
    let mut weights = DecoderWeights::<f32>::from_sizes(&header.layer_sizes());
    for slice in weights.param_slices_mut() {
        for v in slice.iter_mut() {
            *v = f32::from_le_bytes(cur.take(4)?.try_into().expect("4 bytes"));
        }
    }
    let model = Model {
        profile,
        width,
        num_mips,
        channels: header.channels as usize,
        activation: Activation::from_id(header.activation).expect("validated"),
        address_mode: AddressMode::from_id(header.address_mode).expect("validated"),
        pyramid,
        weights,
    };
    CompressedTexture::new(names, model)
}

/// Byte and bit-rate accounting for a profile at a given resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageReport {
    /// Packed grid bytes for each feature level (both grids).
    pub level_grid_bytes: Vec<u64>,
    pub level0_grid_bytes: u64,
    pub grid_bytes_total: u64,
    pub network_bytes: u64,
    /// Fixed header, level descriptors and checksum; excludes channel names.
    pub header_bytes: u64,
    pub total_bytes: u64,
    /// Total bits per level-0 texel per channel.
    pub bppc: f64,
    /// Same, counting only feature level 0 among the grids.
    pub bppc_level0: f64,
}

pub fn storage_report(
    profile: &Profile,
    width: usize,
    height: usize,
    channels: usize,
    layer_sizes: &[usize],
) -> StorageReport {
    let num_mips = mip_count(width.max(height));
    let levels = num_feature_levels(num_mips);
    let level_grid_bytes: Vec<u64> = (0..levels)
        .map(|j| {
            let (r0, r1) = grid_geometry(profile, width, j);
            (packed_len(r0 * r0 * profile.c0 as usize, profile.b0)
                + packed_len(r1 * r1 * profile.c1 as usize, profile.b1)) as u64
        })
        .collect();
    let grid_bytes_total = level_grid_bytes.iter().sum();
    let params: usize = layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let network_bytes = 4 * params as u64;
    let header_bytes = (4 + 4 + 4 * HEADER_FIELDS + 4 * LEVEL_FIELDS * levels + 4) as u64;
    let total_bytes = grid_bytes_total + network_bytes + header_bytes;
    let values = (width * height * channels) as f64;
    StorageReport {
        level0_grid_bytes: level_grid_bytes[0],
        level_grid_bytes,
        grid_bytes_total,
        network_bytes,
        header_bytes,
        total_bytes,
        bppc: total_bytes as f64 * 8.0 / values,
        bppc_level0: (level_grid_bytes_0(profile, width) + network_bytes + header_bytes) as f64 * 8.0 / values,
    }
}

fn level_grid_bytes_0(profile: &Profile, width: usize) -> u64 {
    let (r0, r1) = grid_geometry(profile, width, 0);
    (packed_len(r0 * r0 * profile.c0 as usize, profile.b0) + packed_len(r1 * r1 * profile.c1 as usize, profile.b1))
        as u64
}
