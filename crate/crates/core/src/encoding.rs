//! Tiled triangle-wave positional encoding.
//!
//! Three octaves times two phases per axis. The pattern repeats every 8 texels,
//! the largest upsampling factor between the low-res grid and mip 0.

/// Encoding values per texel (6 horizontal + 6 vertical).
pub const ENCODING_WIDTH: usize = 12;

pub const TILE: i64 = 8;

const OCTAVES: u32 = 3;
const PHASES: [f64; 2] = [0.0, 0.25];

/// Period-1 triangle wave with `tri(0) = 1`, `tri(0.5) = -1`.
#[inline]
pub fn triangle(t: f64) -> f64 {
    let f = t - libm::floor(t);
    4.0 * (f - 0.5).abs() - 1.0
}

fn encode_axis(coord: i64, out: &mut [f64]) {
    let p = coord.rem_euclid(TILE) as f64 / TILE as f64;
    let mut i = 0;
    for octave in 0..OCTAVES {
        let scale = (1u32 << octave) as f64;
        for phase in PHASES {
            out[i] = triangle(scale * p - phase);
            i += 1;
        }
    }
}

/// Horizontal half followed by vertical half.
pub fn positional_encoding(x: i64, y: i64) -> [f64; ENCODING_WIDTH] {
    let mut out = [0.0; ENCODING_WIDTH];
    encode_axis(x, &mut out[..6]);
    encode_axis(y, &mut out[6..]);
    out
}

/// Precomputed per-axis table; index with `coord mod 8`.
pub(crate) fn axis_table() -> [[f64; 6]; TILE as usize] {
    let mut table = [[0.0; 6]; TILE as usize];
    for (i, row) in table.iter_mut().enumerate() {
        encode_axis(i as i64, row);
    }
    table
}
