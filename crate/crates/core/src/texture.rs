//! Texture sets, images and mip chain construction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Error, Result};

/// A dense `width × height × channels` tensor of `f32`, stored row-major as
/// `(y, x, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: "empty image",
            });
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} image needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds an image by evaluating `f(x, y, channel)` for every value.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// All channels of one texel.
    #[inline]
    pub fn texel(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn texel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Copies channels `start..start + len` into a new image.
    pub fn channel_range(&self, start: usize, len: usize) -> Image {
        assert!(start + len <= self.channels && len > 0);
        let mut data = Vec::with_capacity(self.width * self.height * len);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[start..start + len]);
        }
        Image {
            width: self.width,
            height: self.height,
            channels: len,
            data,
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Names a contiguous run of channels that came from one source texture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpan {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// A validated material texture set: square, power-of-two, at least 4×4,
/// values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureSet {
    names: Vec<ChannelSpan>,
    image: Image,
}

impl TextureSet {
    pub fn new(names: Vec<ChannelSpan>, image: Image) -> Result<Self> {
        validate_resolution(image.width, image.height)?;
        validate_spans(&names, image.channels)?;
        if let Some(v) = image.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ShapeMismatch(format!(
                "texture values must lie in [0, 1], found {v}"
            )));
        }
        Ok(Self { names, image })
    }

    /// Concatenates textures of equal resolution along the channel axis, in order.
    pub fn from_textures(textures: Vec<(String, Image)>) -> Result<Self> {
        let (first_w, first_h) = match textures.first() {
            Some((_, img)) => (img.width, img.height),
            None => return Err(Error::NoTextures),
        };
        let mut names = Vec::with_capacity(textures.len());
        let mut channels = 0;
        for (name, img) in &textures {
            if img.width != first_w || img.height != first_h {
                return Err(Error::MismatchedResolutions(format!(
                    "'{}' is {}x{}, expected {}x{}",
                    name, img.width, img.height, first_w, first_h
                )));
            }
            names.push(ChannelSpan {
                name: name.clone(),
                start: channels,
                len: img.channels,
            });
            channels += img.channels;
        }
        validate_resolution(first_w, first_h)?;
        let mut data = Vec::with_capacity(first_w * first_h * channels);
        for i in 0..first_w * first_h {
            for (_, img) in &textures {
                data.extend_from_slice(&img.data[i * img.channels..(i + 1) * img.channels]);
            }
        }
        Self::new(names, Image::new(first_w, first_h, channels, data)?)
    }

    /// Keeps only the first `channels` channels; spans are truncated to match.
    pub fn channel_prefix(&self, channels: usize) -> Result<Self> {
        if channels == 0 || channels > self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "channel prefix {} out of range 1..={}",
                channels,
                self.channels()
            )));
        }
        let names = self
            .names
            .iter()
            .filter(|s| s.start < channels)
            .map(|s| ChannelSpan {
                name: s.name.clone(),
                start: s.start,
                len: s.len.min(channels - s.start),
            })
            .collect();
        Self::new(names, self.image.channel_range(0, channels))
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.image.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.image.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.image.channels
    }

    pub fn names(&self) -> &[ChannelSpan] {
        &self.names
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn into_parts(self) -> (Vec<ChannelSpan>, Image) {
        (self.names, self.image)
    }
}

fn validate_resolution(width: usize, height: usize) -> Result<()> {
    if width != height {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "texture must be square",
        });
    }
    if !width.is_power_of_two() {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "resolution must be a power of two",
        });
    }
    if width < 4 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "resolution must be at least 4x4",
        });
    }
    Ok(())
}

pub(crate) fn validate_spans(names: &[ChannelSpan], channels: usize) -> Result<()> {
    let mut next = 0;
    for span in names {
        if span.start != next || span.len == 0 {
            return Err(Error::ShapeMismatch(format!(
                "channel span '{}' must start at {} and be non-empty",
                span.name, next
            )));
        }
        next += span.len;
    }
    if next != channels {
        return Err(Error::ShapeMismatch(format!(
            "channel spans cover {next} channels, image has {channels}"
        )));
    }
    Ok(())
}

/// A full mip chain; level 0 is the source texture set, the last level is 1×1.
#[derive(Debug, Clone, PartialEq)]
pub struct MipChain {
    names: Vec<ChannelSpan>,
    levels: Vec<Image>,
}

impl MipChain {
    /// Wraps already computed levels, e.g. decoded output. Each level must halve
    /// the previous one.
    pub fn from_levels(names: Vec<ChannelSpan>, levels: Vec<Image>) -> Result<Self> {
        let first = levels.first().ok_or(Error::NoTextures)?;
        validate_spans(&names, first.channels)?;
        for pair in levels.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.width != (a.width / 2).max(1) || b.height != (a.height / 2).max(1) || b.channels != a.channels {
                return Err(Error::ShapeMismatch(format!(
                    "mip of {}x{}x{} cannot follow {}x{}x{}",
                    b.width, b.height, b.channels, a.width, a.height, a.channels
                )));
            }
        }
        Ok(Self { names, levels })
    }

    pub fn num_mips(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, mip: usize) -> &Image {
        &self.levels[mip]
    }

    pub fn levels(&self) -> &[Image] {
        &self.levels
    }

    pub fn names(&self) -> &[ChannelSpan] {
        &self.names
    }

    pub fn width(&self) -> usize {
        self.levels[0].width
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels
    }
}

/// Number of mips from `width` down to 1×1.
pub fn mip_count(width: usize) -> usize {
    width.max(1).ilog2() as usize + 1
}

/// Lanczos kernel with `a = 3`.
pub fn lanczos3(x: f64) -> f64 {
    const A: f64 = 3.0;
    if x == 0.0 {
        1.0
    } else if x.abs() < A {
        let px = PI * x;
        A * libm::sin(px) * libm::sin(px / A) / (px * px)
    } else {
        0.0
    }
}

/// Input taps of a 2× Lanczos-3 reduction, relative to `2 * i`.
const TAP_OFFSETS: core::ops::RangeInclusive<i64> = -5..=6;

fn reduction_weights() -> [f64; 12] {
    let mut w = [0.0; 12];
    for (slot, k) in w.iter_mut().zip(TAP_OFFSETS) {
        // output sample i sits at input coordinate 2i + 1; input texel j at j + 0.5
        *slot = lanczos3((k as f64 - 0.5) / 2.0);
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Half-sample symmetric addressing: `-1 → 0`, `-2 → 1`, `n → n - 1`.
///
/// Unlike clamp-to-edge this keeps the image mean through every reduction,
/// including the last few levels where the kernel spans the whole image.
pub fn reflect(i: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let j = i.rem_euclid(period);
    (if j < n as i64 { j } else { period - 1 - j }) as usize
}

/// Halves width and height with a separable Lanczos-3 filter, symmetric edge
/// addressing, and clamps the result to `[0, 1]`.
pub fn downsample(img: &Image) -> Image {
    let weights = reduction_weights();
    let (w, h, c) = (img.width, img.height, img.channels);
    let (ow, oh) = ((w / 2).max(1), (h / 2).max(1));

    let tap = |i: usize, k: i64, n: usize| -> usize { reflect(2 * i as i64 + k, n) };

    // horizontal pass, kept in f64
    let mut horiz = vec![0.0f64; ow * h * c];
    for y in 0..h {
        for ox in 0..ow {
            let out = &mut horiz[(y * ow + ox) * c..(y * ow + ox + 1) * c];
            for (wt, k) in weights.iter().zip(TAP_OFFSETS) {
                let src = img.texel(tap(ox, k, w), y);
                for (o, &s) in out.iter_mut().zip(src) {
                    *o += wt * s as f64;
                }
            }
        }
    }

    let mut data = vec![0.0f32; ow * oh * c];
    let mut acc = vec![0.0f64; c];
    for oy in 0..oh {
        for ox in 0..ow {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for (wt, k) in weights.iter().zip(TAP_OFFSETS) {
                let sy = tap(oy, k, h);
                let src = &horiz[(sy * ow + ox) * c..(sy * ow + ox + 1) * c];
                for (a, &s) in acc.iter_mut().zip(src) {
                    *a += wt * s;
                }
            }
            let out = &mut data[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
            for (o, &a) in out.iter_mut().zip(&acc) {
                *o = a.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Image {
        width: ow,
        height: oh,
        channels: c,
        data,
    }
}

/// Builds the complete chain down to 1×1.
pub fn build_mip_chain(ts: &TextureSet) -> MipChain {
    let count = mip_count(ts.width());
    let mut levels = Vec::with_capacity(count);
    levels.push(ts.image.clone());
    while levels.len() < count {
        let next = downsample(levels.last().expect("non-empty"));
        levels.push(next);
    }
    MipChain {
        names: ts.names.clone(),
        levels,
    }
}
