//! Synthetic material texture sets with correlated channels.
//!
//! A tileable height field (noise on running-bond bricks with sunken mortar
//! joints) drives every channel: albedo follows height,
//! roughness falls with it, normals come from its gradient and occlusion from
//! its local depth. Channels are stacked in this order:
//!
//! | channels | texture   |
//! |----------|-----------|
//! | 0..3     | diffuse   |
//! | 3        | roughness |
//! | 4..7     | normal    |
//! | 7        | ao        |
//! | 8        | height    |

use ntc_core::{Image, Result, TextureSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_CHANNELS: usize = 9;

/// Periodic value noise on an `n × n` lattice with quintic interpolation.
struct ValueNoise {
    n: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            n,
            lattice: (0..n * n).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// `u, v` in lattice cells; wraps.
    fn at(&self, u: f64, v: f64) -> f64 {
        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (fade(u - x0), fade(v - y0));
        let n = self.n as i64;
        let idx = |x: i64, y: i64| self.lattice[(y.rem_euclid(n) * n + x.rem_euclid(n)) as usize];
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = idx(x0, y0) * (1.0 - fx) + idx(x0 + 1, y0) * fx;
        let bottom = idx(x0, y0 + 1) * (1.0 - fx) + idx(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Sum of noise octaves whose lattice counts run from `first` up to `last`
/// (both powers of two), amplitude halving each octave. Result in `[0, 1]`.
fn fbm(width: usize, first: usize, last: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut octaves = Vec::new();
    let mut n = first;
    while n <= last.min(width) {
        octaves.push(ValueNoise::new(n, rng));
        n *= 2;
    }
    let mut out = vec![0.0; width * width];
    let mut total = 0.0;
    let mut amp = 1.0;
    for o in &octaves {
        let scale = o.n as f64 / width as f64;
        for y in 0..width {
            for x in 0..width {
                out[y * width + x] += amp * o.at((x as f64 + 0.5) * scale, (y as f64 + 0.5) * scale);
            }
        }
        total += amp;
        amp *= 0.5;
    }
    out.iter_mut().for_each(|v| *v /= total);
    normalize(&mut out);
    out
}

fn normalize(v: &mut [f64]) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    v.iter_mut().for_each(|x| *x = (*x - lo) / span);
}

fn mix(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// The first `channels` channels of the synthetic material at `width²`.
///
/// Deterministic in `seed`. Textures cut by the prefix keep their name with a
/// shorter span.
pub fn correlated_texture_set(width: usize, channels: usize, seed: u64) -> Result<TextureSet> {
    assert!((1..=MAX_CHANNELS).contains(&channels), "fixture has 1..=9 channels");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = fbm(width, 2, 32, &mut rng);
    let ridge_src = fbm(width, 4, 8, &mut rng);
    let detail = fbm(width, 16, 64, &mut rng);

    let brick_w = (width / 4).max(2);
    let brick_h = (width / 8).max(1);
    let joint = |x: usize, y: usize| {
        let row = y / brick_h;
        let xs = (x + row % 2 * brick_w / 2) % brick_w;
        let ys = y % brick_h;
        // distance in texels to the nearest joint, saturated at 2
        let d = xs.min(brick_w - 1 - xs).min(ys).min(brick_h - 1 - ys);
        (d as f64 / 2.0).min(1.0)
    };
    let height: Vec<f64> = (0..width * width)
        .map(|i| {
            let relief = 0.6 * base[i] + 0.4 * (1.0 - (2.0 * ridge_src[i] - 1.0).abs());
            let j = joint(i % width, i / width);
            0.15 * relief + j * (0.1 + 0.75 * relief)
        })
        .collect();

    let w = width as i64;
    let at = |x: i64, y: i64| height[(y.rem_euclid(w) * w + x.rem_euclid(w)) as usize];
    let strength = width as f64 / 64.0;

    let mut data = Vec::with_capacity(width * width * MAX_CHANNELS);
    for y in 0..w {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let h = height[i];
            let d = detail[i];
            let shade = 0.8 + 0.2 * d;
            data.push(mix(0.08, 1.0, h) * shade);
            data.push(mix(0.05, 0.85, h) * shade);
            data.push(mix(0.03, 0.7, h * h) * shade);
            data.push((0.95 - 0.85 * h + 0.1 * (d - 0.5)).clamp(0.0, 1.0));
            let dx = (at(x + 1, y) - at(x - 1, y)) * 0.5 * strength;
            let dy = (at(x, y + 1) - at(x, y - 1)) * 0.5 * strength;
            let len = (dx * dx + dy * dy + 1.0).sqrt();
            data.push(0.5 - 0.5 * dx / len);
            data.push(0.5 - 0.5 * dy / len);
            data.push(0.5 + 0.5 / len);
            let local = (at(x + 2, y) + at(x - 2, y) + at(x, y + 2) + at(x, y - 2)) * 0.25;
            data.push((1.0 - 2.0 * (local - h).max(0.0) - 0.2 * (1.0 - h)).clamp(0.0, 1.0));
            data.push(h);
        }
    }

    let layout: [(&str, usize); 5] = [
        ("diffuse", 3),
        ("roughness", 1),
        ("normal", 3),
        ("ao", 1),
        ("height", 1),
    ];
    let mut textures = Vec::new();
    let mut start = 0;
    for (name, len) in layout {
        if start >= channels {
            break;
        }
        let len = len.min(channels - start);
        let img = Image::from_fn(width, width, len, |x, y, c| {
            data[(y * width + x) * MAX_CHANNELS + start + c] as f32
        });
        textures.push((name.to_string(), img));
        start += len;
    }
    TextureSet::from_textures(textures)
}

/// A `width²` set with every value equal to `value`.
pub fn constant_texture_set(width: usize, channels: usize, value: f32) -> Result<TextureSet> {
    TextureSet::from_textures(vec![(
        "constant".to_string(),
        Image::filled(width, width, channels, value),
    )])
}
