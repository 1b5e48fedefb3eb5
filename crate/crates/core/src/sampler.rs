//! Random-access decoding and software texture filtering.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::container::CompressedTexture;
use crate::input::{mip_resolution, InputBuilder};
use crate::mlp::MlpScratch;
use crate::model::Model;
use crate::pyramid::feature_level_for_mip;
use crate::quant::open01;
use crate::texture::{Image, MipChain};
use crate::{Error, Result};

/// A filtered lookup: `(u, v)` in `[0, 1)` and a continuous level of detail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub u: f64,
    pub v: f64,
    pub lod: f64,
}

impl SamplePoint {
    pub fn new(u: f64, v: f64, lod: f64) -> Self {
        Self { u, v, lod }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FilterKind {
    #[default]
    Nearest,
    Bilinear,
    Trilinear,
    /// Uniform `(-0.5, 0.5)` texel jitter, then nearest.
    StochasticBilinear,
    /// Normal jitter with standard deviation `sigma` texels, then nearest.
    StochasticGaussian {
        sigma: f64,
    },
    /// Uniform texel jitter plus uniform `(-0.5, 0.5)` LOD jitter, then nearest.
    StochasticTrilinear,
}

impl FilterKind {
    pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 0.5;

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Self::StochasticBilinear | Self::StochasticGaussian { .. } | Self::StochasticTrilinear
        )
    }

    /// Texel decodes one sample costs.
    pub fn decodes_per_sample(self) -> usize {
        match self {
            Self::Bilinear => 4,
            Self::Trilinear => 8,
            _ => 1,
        }
    }
}

/// Jitter offsets for a stochastic lookup, in texels and LOD units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jitter {
    pub dx: f64,
    pub dy: f64,
    pub dlod: f64,
}

impl Jitter {
    pub fn draw<R: RngCore + ?Sized>(kind: FilterKind, rng: &mut R) -> Self {
        let uniform = |rng: &mut R| open01(rng) - 0.5;
        match kind {
            FilterKind::StochasticBilinear => Self {
                dx: uniform(rng),
                dy: uniform(rng),
                dlod: 0.0,
            },
            FilterKind::StochasticGaussian { sigma } => {
                let dx: f64 = StandardNormal.sample(rng);
                let dy: f64 = StandardNormal.sample(rng);
                Self {
                    dx: dx * sigma,
                    dy: dy * sigma,
                    dlod: 0.0,
                }
            }
            FilterKind::StochasticTrilinear => {
                let dlod = uniform(rng);
                Self {
                    dx: uniform(rng),
                    dy: uniform(rng),
                    dlod,
                }
            }
            _ => Self::default(),
        }
    }
}

/// Decodes single texels, reusing buffers and counting work done.
#[derive(Debug, Clone)]
pub struct TexelDecoder<'a> {
    model: &'a Model<f32>,
    input: Vec<f32>,
    scratch: MlpScratch<f32>,
    /// Grid scalars fetched so far.
    pub grid_reads: u64,
    /// Network evaluations so far.
    pub mlp_evals: u64,
}

impl<'a> TexelDecoder<'a> {
    pub fn new(ct: &'a CompressedTexture) -> Self {
        Self::for_model(&ct.model)
    }

    pub fn for_model(model: &'a Model<f32>) -> Self {
        Self {
            model,
            input: vec![0.0; model.weights.input_width()],
            scratch: model.weights.scratch(),
            grid_reads: 0,
            mlp_evals: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.model.channels
    }

    pub fn decode_into(&mut self, x: i64, y: i64, mip: usize, out: &mut [f32]) -> Result<()> {
        let m = self.model;
        m.check_texel(x, y, mip)?;
        if out.len() != m.channels {
            return Err(Error::ShapeMismatch(alloc::format!(
                "output buffer holds {} values, texture has {} channels",
                out.len(),
                m.channels
            )));
        }
        let level = &m.pyramid.levels[feature_level_for_mip(mip, m.num_mips)?];
        let builder = InputBuilder::new(&m.pyramid, mip, m.num_mips, m.address_mode);
        let taps = builder.fill::<rand_chacha::ChaCha8Rng>(level, x, y, None, &mut self.input);
        self.grid_reads += (taps.g0.len() * level.g0.channels + taps.g1.cells.len() * level.g1.channels) as u64;
        out.copy_from_slice(m.weights.forward_into(&self.input, m.activation, &mut self.scratch));
        self.mlp_evals += 1;
        Ok(())
    }

    pub fn decode(&mut self, x: i64, y: i64, mip: usize) -> Result<Vec<f32>> {
        let mut out = vec![0.0; self.model.channels];
        self.decode_into(x, y, mip, &mut out)?;
        Ok(out)
    }

    /// Texel at `(x, y)` after applying the container's address mode.
    fn fetch(&mut self, x: i64, y: i64, mip: usize, out: &mut [f32]) -> Result<()> {
        let res = mip_resolution(mip, self.model.num_mips);
        let mode = self.model.address_mode;
        self.decode_into(mode.resolve(x, res) as i64, mode.resolve(y, res) as i64, mip, out)
    }

    fn clamp_mip(&self, lod: f64) -> usize {
        let last = (self.model.num_mips - 1) as f64;
        libm::floor(lod.clamp(0.0, last) + 0.5) as usize
    }

    fn nearest(&mut self, u: f64, v: f64, mip: usize, out: &mut [f32]) -> Result<()> {
        let r = mip_resolution(mip, self.model.num_mips) as f64;
        self.fetch(libm::floor(u * r) as i64, libm::floor(v * r) as i64, mip, out)
    }

    fn bilinear(&mut self, u: f64, v: f64, mip: usize, out: &mut [f32]) -> Result<()> {
        let r = mip_resolution(mip, self.model.num_mips) as f64;
        let tx = u * r - 0.5;
        let ty = v * r - 0.5;
        let (x0, y0) = (libm::floor(tx), libm::floor(ty));
        let (fx, fy) = (tx - x0, ty - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut acc = vec![0.0f64; out.len()];
        let mut texel = vec![0.0f32; out.len()];
        for (dx, dy, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            self.fetch(x0 + dx, y0 + dy, mip, &mut texel)?;
            for (a, &t) in acc.iter_mut().zip(&texel) {
                *a += w * t as f64;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = a as f32;
        }
        Ok(())
    }

    fn check_point(&self, p: &SamplePoint) -> Result<()> {
        if !(p.u.is_finite() && p.v.is_finite() && p.lod.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!("non-finite sample point {p:?}")));
        }
        Ok(())
    }

    /// Filtered lookup. Stochastic kinds need `rng`.
    pub fn sample<R: RngCore + ?Sized>(
        &mut self,
        p: SamplePoint,
        kind: FilterKind,
        rng: Option<&mut R>,
        out: &mut [f32],
    ) -> Result<()> {
        let jitter = if kind.is_stochastic() {
            Jitter::draw(kind, rng.ok_or(Error::MissingRng)?)
        } else {
            Jitter::default()
        };
        self.sample_jittered(p, kind, jitter, out)
    }

    /// Filtered lookup with caller-supplied jitter; deterministic kinds ignore it.
    pub fn sample_jittered(&mut self, p: SamplePoint, kind: FilterKind, jitter: Jitter, out: &mut [f32]) -> Result<()> {
        self.check_point(&p)?;
        if let FilterKind::StochasticGaussian { sigma } = kind {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "gaussian sigma {sigma} must be positive"
                )));
            }
        }
        match kind {
            FilterKind::Nearest => {
                let mip = self.clamp_mip(p.lod);
                self.nearest(p.u, p.v, mip, out)
            }
            FilterKind::Bilinear => {
                let mip = self.clamp_mip(p.lod);
                self.bilinear(p.u, p.v, mip, out)
            }
            FilterKind::Trilinear => {
                let last = (self.model.num_mips - 1) as f64;
                let lod = p.lod.clamp(0.0, last);
                let m0 = libm::floor(lod);
                let t = lod - m0;
                let m1 = libm::ceil(lod).min(last);
                let mut hi = vec![0.0f32; out.len()];
                self.bilinear(p.u, p.v, m0 as usize, out)?;
                self.bilinear(p.u, p.v, m1 as usize, &mut hi)?;
                for (o, h) in out.iter_mut().zip(hi) {
                    *o = ((1.0 - t) * *o as f64 + t * h as f64) as f32;
                }
                Ok(())
            }
            FilterKind::StochasticBilinear
            | FilterKind::StochasticGaussian { .. }
            | FilterKind::StochasticTrilinear => {
                let (x, y, mip) = self.jittered_texel(p, jitter);
                self.decode_into(x as i64, y as i64, mip, out)
            }
        }
    }

    /// The texel a stochastic lookup at `p` with `jitter` lands on, after
    /// addressing: `(x, y, mip)`.
    pub fn jittered_texel(&self, p: SamplePoint, jitter: Jitter) -> (usize, usize, usize) {
        let mip = self.clamp_mip(p.lod + jitter.dlod);
        let res = mip_resolution(mip, self.model.num_mips);
        let r = res as f64;
        let mode = self.model.address_mode;
        let x = mode.resolve(libm::floor(p.u * r + jitter.dx) as i64, res);
        let y = mode.resolve(libm::floor(p.v * r + jitter.dy) as i64, res);
        (x, y, mip)
    }
}

/// Decodes one texel of a compressed texture.
pub fn decode_texel(ct: &CompressedTexture, x: i64, y: i64, mip: usize) -> Result<Vec<f32>> {
    TexelDecoder::new(ct).decode(x, y, mip)
}

fn decode_rows(
    model: &Model<f32>,
    mip: usize,
    res: usize,
    rows: core::ops::Range<usize>,
    out: &mut [f32],
) -> Result<()> {
    let c = model.channels;
    let mut dec = TexelDecoder::for_model(model);
    for (y, row) in rows.zip(out.chunks_exact_mut(res * c)) {
        for (x, texel) in row.chunks_exact_mut(c).enumerate() {
            dec.decode_into(x as i64, y as i64, mip, texel)?;
        }
    }
    Ok(())
}

/// Every texel of `mip`, decoded independently.
pub fn decode_mip(ct: &CompressedTexture, mip: usize) -> Result<Image> {
    let model = &ct.model;
    model.check_texel(0, 0, mip)?;
    let res = mip_resolution(mip, model.num_mips);
    let c = model.channels;
    let mut data = vec![0.0f32; res * res * c];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(res * c)
            .enumerate()
            .try_for_each(|(y, row)| decode_rows(model, mip, res, y..y + 1, row))?;
    }
    #[cfg(not(feature = "parallel"))]
    decode_rows(model, mip, res, 0..res, &mut data)?;
    Image::new(res, res, c, data)
}

/// The full decoded mip chain.
pub fn decode_chain(ct: &CompressedTexture) -> Result<MipChain> {
    let levels = (0..ct.model.num_mips)
        .map(|m| decode_mip(ct, m))
        .collect::<Result<Vec<_>>>()?;
    MipChain::from_levels(ct.names.clone(), levels)
}

/// One filtered sample.
pub fn filter_sample<R: RngCore + ?Sized>(
    ct: &CompressedTexture,
    p: SamplePoint,
    kind: FilterKind,
    rng: Option<&mut R>,
) -> Result<Vec<f32>> {
    let mut dec = TexelDecoder::new(ct);
    let mut out = vec![0.0; ct.model.channels];
    dec.sample(p, kind, rng, &mut out)?;
    Ok(out)
}

/// One filtered sample with explicit jitter.
pub fn filter_sample_jittered(
    ct: &CompressedTexture,
    p: SamplePoint,
    kind: FilterKind,
    jitter: Jitter,
) -> Result<Vec<f32>> {
    let mut dec = TexelDecoder::new(ct);
    let mut out = vec![0.0; ct.model.channels];
    dec.sample_jittered(p, kind, jitter, &mut out)?;
    Ok(out)
}
