//! Decoder input assembly: `[g0 taps | g1 sample | positional encoding | lod]`.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::encoding::{axis_table, ENCODING_WIDTH, TILE};
use crate::grid::{taps, AddressMode, Taps};
use crate::profile::Profile;
use crate::pyramid::{FeatureLevel, FeaturePyramid};
use crate::quant::inject_noise_with_bin;
use crate::{Error, Real, Result};

/// Normalized level of detail fed to the decoder: `mip / (num_mips - 1)`.
#[inline]
pub fn lod_norm(mip: usize, num_mips: usize) -> f64 {
    if num_mips <= 1 {
        0.0
    } else {
        mip as f64 / (num_mips - 1) as f64
    }
}

/// Resolution of `mip` for a chain with `num_mips` levels.
#[inline]
pub fn mip_resolution(mip: usize, num_mips: usize) -> usize {
    1usize << (num_mips - 1 - mip)
}

/// Reusable input builder for one feature level and mip.
#[derive(Debug, Clone)]
pub struct InputBuilder<T> {
    pe: [[T; 6]; TILE as usize],
    lod: T,
    mip_res: usize,
    mode: AddressMode,
    bin0: T,
    bin1: T,
}

/// Grid cells touched by one texel, kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct TexelTaps {
    pub g0: [usize; 4],
    pub g1: Taps,
}

impl<T: Real> InputBuilder<T> {
    pub fn new(pyramid: &FeaturePyramid<T>, mip: usize, num_mips: usize, mode: AddressMode) -> Self {
        let table = axis_table();
        let mut pe = [[T::zero(); 6]; TILE as usize];
        for (dst, src) in pe.iter_mut().zip(table.iter()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = T::of(s);
            }
        }
        Self {
            pe,
            lod: T::of(lod_norm(mip, num_mips)),
            mip_res: mip_resolution(mip, num_mips),
            mode,
            bin0: T::of(pyramid.quant0.bin()),
            bin1: T::of(pyramid.quant1.bin()),
        }
    }

    /// Writes the decoder input for texel `(x, y)` into `out`. With `noise`,
    /// every grid scalar read gets fresh uniform quantization noise.
    #[inline]
    pub fn fill<R: RngCore + ?Sized>(
        &self,
        level: &FeatureLevel<T>,
        x: i64,
        y: i64,
        mut noise: Option<&mut R>,
        out: &mut [T],
    ) -> TexelTaps {
        let c0 = level.g0.channels;
        let c1 = level.g1.channels;
        let t0 = taps(level.g0.res, x, y, self.mip_res, self.mode);
        let t1 = taps(level.g1.res, x, y, self.mip_res, self.mode);

        let (g0_out, rest) = out.split_at_mut(4 * c0);
        for (dst, &cell) in g0_out.chunks_exact_mut(c0).zip(&t0.cells) {
            let src = level.g0.cell(cell);
            match noise.as_deref_mut() {
                Some(rng) => {
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = inject_noise_with_bin(s, self.bin0, rng);
                    }
                }
                None => dst.copy_from_slice(src),
            }
        }

        let (g1_out, rest) = rest.split_at_mut(c1);
        g1_out.iter_mut().for_each(|v| *v = T::zero());
        for (&cell, &w) in t1.cells.iter().zip(&t1.weights) {
            let w = T::of(w);
            let src = level.g1.cell(cell);
            match noise.as_deref_mut() {
                Some(rng) => {
                    for (d, &s) in g1_out.iter_mut().zip(src) {
                        *d += w * inject_noise_with_bin(s, self.bin1, rng);
                    }
                }
                None => {
                    for (d, &s) in g1_out.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }

        let (pe_out, lod_out) = rest.split_at_mut(ENCODING_WIDTH);
        pe_out[..6].copy_from_slice(&self.pe[x.rem_euclid(TILE) as usize]);
        pe_out[6..].copy_from_slice(&self.pe[y.rem_euclid(TILE) as usize]);
        lod_out[0] = self.lod;

        TexelTaps { g0: t0.cells, g1: t1 }
    }
}

/// Decoder input for texel `(x, y)` of `mip`, without noise.
pub fn assemble_input<T: Real>(
    profile: &Profile,
    pyramid: &FeaturePyramid<T>,
    mip: usize,
    num_mips: usize,
    x: i64,
    y: i64,
    mode: AddressMode,
) -> Result<Vec<T>> {
    let level = pyramid.for_mip(mip, num_mips)?;
    if level.g0.channels != profile.c0 as usize || level.g1.channels != profile.c1 as usize {
        return Err(Error::ShapeMismatch("pyramid does not match profile".into()));
    }
    let builder = InputBuilder::new(pyramid, mip, num_mips, mode);
    let mut out = vec![T::zero(); profile.input_width()];
    builder.fill::<rand_chacha::ChaCha8Rng>(level, x, y, None, &mut out);
    Ok(out)
}
