//! Mapping texels of a mip onto grid cells.
//!
//! Texel centers map to continuous grid coordinates with
//! `u = (x + 0.5) · r / mip_res - 0.5`; the four surrounding integer cells are
//! the taps, in the order `(i, j)`, `(i+1, j)`, `(i, j+1)`, `(i+1, j+1)`.

use crate::pyramid::Grid;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AddressMode {
    #[default]
    Clamp,
    Wrap,
}

impl AddressMode {
    pub fn id(self) -> u32 {
        match self {
            AddressMode::Clamp => 0,
            AddressMode::Wrap => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(AddressMode::Clamp),
            1 => Some(AddressMode::Wrap),
            _ => None,
        }
    }

    #[inline]
    pub fn resolve(self, i: i64, n: usize) -> usize {
        match self {
            AddressMode::Clamp => i.clamp(0, n as i64 - 1) as usize,
            AddressMode::Wrap => i.rem_euclid(n as i64) as usize,
        }
    }
}

/// Cell indices (row-major, `y * res + x`) and bilinear weights of one lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taps {
    pub cells: [usize; 4],
    pub weights: [f64; 4],
}

/// Taps of a `grid_res` grid for texel `(x, y)` of a `mip_res` mip.
pub fn taps(grid_res: usize, x: i64, y: i64, mip_res: usize, mode: AddressMode) -> Taps {
    let scale = grid_res as f64 / mip_res as f64;
    let u = (x as f64 + 0.5) * scale - 0.5;
    let v = (y as f64 + 0.5) * scale - 0.5;
    let (iu, iv) = (libm::floor(u), libm::floor(v));
    let (fu, fv) = (u - iu, v - iv);
    let (iu, iv) = (iu as i64, iv as i64);
    let x0 = mode.resolve(iu, grid_res);
    let x1 = mode.resolve(iu + 1, grid_res);
    let y0 = mode.resolve(iv, grid_res);
    let y1 = mode.resolve(iv + 1, grid_res);
    Taps {
        cells: [
            y0 * grid_res + x0,
            y0 * grid_res + x1,
            y1 * grid_res + x0,
            y1 * grid_res + x1,
        ],
        weights: [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv],
    }
}

/// The four neighboring feature vectors, concatenated (learned interpolation).
pub fn gather_g0<T: Real>(g0: &Grid<T>, x: i64, y: i64, mip_res: usize, mode: AddressMode) -> alloc::vec::Vec<T> {
    let t = taps(g0.res, x, y, mip_res, mode);
    t.cells.iter().flat_map(|&c| g0.cell(c).iter().copied()).collect()
}

/// Bilinearly interpolated feature vector.
pub fn bilinear_g1<T: Real>(g1: &Grid<T>, x: i64, y: i64, mip_res: usize, mode: AddressMode) -> alloc::vec::Vec<T> {
    let t = taps(g1.res, x, y, mip_res, mode);
    let mut out = alloc::vec![T::zero(); g1.channels];
    for (&c, &w) in t.cells.iter().zip(&t.weights) {
        let w = T::of(w);
        for (o, &v) in out.iter_mut().zip(g1.cell(c)) {
            *o += w * v;
        }
    }
    out
}
