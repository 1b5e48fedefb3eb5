//! Latent feature pyramid geometry and storage.
//!
//! Feature level 0 serves mips 0..=3, each following level serves two mips, and
//! the last level absorbs a trailing odd mip. Level `j` grids are `4^j` times
//! smaller than level 0; the low-res grid is half the high-res one.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::profile::Profile;
use crate::quant::{open01, QuantSpec};
use crate::{Error, Real, Result};

/// Number of feature levels for a chain of `num_mips` mips.
pub fn num_feature_levels(num_mips: usize) -> usize {
    if num_mips <= 4 {
        1
    } else {
        1 + (num_mips - 4) / 2
    }
}

/// Feature level that decodes `mip`.
pub fn feature_level_for_mip(mip: usize, num_mips: usize) -> Result<usize> {
    if mip >= num_mips {
        return Err(Error::MipOutOfRange { mip, num_mips });
    }
    let last = num_feature_levels(num_mips) - 1;
    Ok(if mip < 4 { 0 } else { ((mip - 4) / 2 + 1).min(last) })
}

/// Inclusive mip range served by `level`.
pub fn mips_for_level(level: usize, num_mips: usize) -> (usize, usize) {
    let count = num_feature_levels(num_mips);
    assert!(level < count, "feature level {level} out of range");
    let first = if level == 0 { 0 } else { 2 + 2 * level };
    let last = if level + 1 == count {
        num_mips - 1
    } else if level == 0 {
        3
    } else {
        first + 1
    };
    (first, last)
}

/// `(r0, r1)`: resolutions of the high-res and low-res grids of `level`.
pub fn grid_geometry(profile: &Profile, width: usize, level: usize) -> (usize, usize) {
    let r0 = (width / profile.g0_ratio as usize / 4usize.pow(level as u32)).max(1);
    (r0, (r0 / 2).max(1))
}

/// A square grid of feature vectors stored `(y, x, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub res: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn zeros(res: usize, channels: usize) -> Self {
        Self {
            res,
            channels,
            data: vec![T::zero(); res * res * channels],
        }
    }

    #[inline]
    pub fn cell(&self, index: usize) -> &[T] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn cell_at(&self, x: usize, y: usize) -> &[T] {
        self.cell(y * self.res + x)
    }

    pub fn cast<U: Real>(&self) -> Grid<U> {
        Grid {
            res: self.res,
            channels: self.channels,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel<T> {
    pub g0: Grid<T>,
    pub g1: Grid<T>,
    pub first_mip: usize,
    pub last_mip: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T> {
    pub levels: Vec<FeatureLevel<T>>,
    pub quant0: QuantSpec,
    pub quant1: QuantSpec,
}

impl<T: Real> FeaturePyramid<T> {
    /// Zero-filled pyramid for a `width`-sized chain of `num_mips` mips.
    pub fn zeros(profile: &Profile, width: usize, num_mips: usize) -> Self {
        let levels = (0..num_feature_levels(num_mips))
            .map(|j| {
                let (r0, r1) = grid_geometry(profile, width, j);
                let (first_mip, last_mip) = mips_for_level(j, num_mips);
                FeatureLevel {
                    g0: Grid::zeros(r0, profile.c0 as usize),
                    g1: Grid::zeros(r1, profile.c1 as usize),
                    first_mip,
                    last_mip,
                }
            })
            .collect();
        Self {
            levels,
            quant0: profile.quant0(),
            quant1: profile.quant1(),
        }
    }

    /// Fills every grid uniformly over the central half of its quantization range.
    pub fn randomize<R: RngCore + ?Sized>(&mut self, rng: &mut R) {
        let (q0, q1) = (self.quant0, self.quant1);
        for level in &mut self.levels {
            for (grid, q) in [(&mut level.g0, q0), (&mut level.g1, q1)] {
                let mid = 0.5 * (q.lo() + q.hi());
                let half = 0.25 * (q.hi() - q.lo());
                for v in &mut grid.data {
                    *v = T::of(mid + (2.0 * open01(rng) - 1.0) * half);
                }
            }
        }
    }

    pub fn for_mip(&self, mip: usize, num_mips: usize) -> Result<&FeatureLevel<T>> {
        Ok(&self.levels[feature_level_for_mip(mip, num_mips)?])
    }

    /// Replaces every scalar with its nearest bin center.
    pub fn quantize_in_place(&mut self) {
        let (q0, q1) = (self.quant0, self.quant1);
        for level in &mut self.levels {
            level.g0.data.iter_mut().for_each(|v| *v = q0.quantize(*v).1);
            level.g1.data.iter_mut().for_each(|v| *v = q1.quantize(*v).1);
        }
    }

    pub fn clamp_in_place(&mut self) {
        let (q0, q1) = (self.quant0, self.quant1);
        for level in &mut self.levels {
            level.g0.data.iter_mut().for_each(|v| *v = q0.clamp(*v));
            level.g1.data.iter_mut().for_each(|v| *v = q1.clamp(*v));
        }
    }

    /// True when every scalar is exactly a representable bin center.
    pub fn is_quantized(&self) -> bool {
        let (q0, q1) = (self.quant0, self.quant1);
        self.levels.iter().all(|l| {
            l.g0.data.iter().all(|&v| q0.quantize(v).1 == v) && l.g1.data.iter().all(|&v| q1.quantize(v).1 == v)
        })
    }

    /// Number of trainable scalars across all grids.
    pub fn scalar_count(&self) -> usize {
        self.levels.iter().map(|l| l.g0.data.len() + l.g1.data.len()).sum()
    }

    /// Flat iteration order used by the optimizer: per level, `g0` then `g1`.
    pub fn grids(&self) -> impl Iterator<Item = (&Grid<T>, QuantSpec)> {
        let (q0, q1) = (self.quant0, self.quant1);
        self.levels.iter().flat_map(move |l| [(&l.g0, q0), (&l.g1, q1)])
    }

    pub fn grids_mut(&mut self) -> impl Iterator<Item = (&mut Grid<T>, QuantSpec)> {
        let (q0, q1) = (self.quant0, self.quant1);
        self.levels
            .iter_mut()
            .flat_map(move |l| [(&mut l.g0, q0), (&mut l.g1, q1)])
    }

    pub fn cast<U: Real>(&self) -> FeaturePyramid<U> {
        FeaturePyramid {
            levels: self
                .levels
                .iter()
                .map(|l| FeatureLevel {
                    g0: l.g0.cast(),
                    g1: l.g1.cast(),
                    first_mip: l.first_mip,
                    last_mip: l.last_mip,
                })
                .collect(),
            quant0: self.quant0,
            quant1: self.quant1,
        }
    }
}
