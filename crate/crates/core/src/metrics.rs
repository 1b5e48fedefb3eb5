//! Texture-set quality metrics over whole mip chains.
//!
//! PSNR sums squared error over every included mip and divides by the total
//! number of values, so larger mips carry more weight. 1−SSIM weights each
//! channel's SSIM by its mip's texel count the same way.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::texture::{Image, MipChain};
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Default smallest mip included in metrics.
pub const DEFAULT_MIN_MIP_RES: usize = 4;

const C1: f64 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
const C2: f64 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

/// PSNR in dB for a mean squared error over values in `[0, 1]`; `+inf` for zero.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * libm::log10(mse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// `None` when the chains are identical (zero MSE).
    pub psnr_db: Option<f64>,
    pub identical: bool,
    pub mse: f64,
    pub one_minus_ssim: f64,
    pub per_mip_psnr: Vec<MipPsnr>,
    pub per_texture_psnr: Vec<TexturePsnr>,
    pub bppc: Option<f64>,
    /// Perceptual metrics are not computed; slots kept for a stable format.
    pub lpips: Option<f64>,
    pub flip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipPsnr {
    pub mip: usize,
    pub width: usize,
    pub mse: f64,
    pub psnr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TexturePsnr {
    pub name: String,
    pub mse: f64,
    pub psnr_db: Option<f64>,
}

fn check_shapes(a: &MipChain, b: &MipChain) -> Result<()> {
    if a.num_mips() != b.num_mips() {
        return Err(Error::ShapeMismatch(format!(
            "chains have {} and {} mips",
            a.num_mips(),
            b.num_mips()
        )));
    }
    for (m, (x, y)) in a.levels().iter().zip(b.levels()).enumerate() {
        if x.width() != y.width() || x.height() != y.height() || x.channels() != y.channels() {
            return Err(Error::ShapeMismatch(format!("mip {m} shapes differ")));
        }
    }
    Ok(())
}

fn included(img: &Image, min_mip_res: usize) -> bool {
    img.width().min(img.height()) >= min_mip_res
}

fn squared_error(a: &Image, b: &Image, channels: core::ops::Range<usize>) -> f64 {
    let c = a.channels();
    a.data()
        .chunks_exact(c)
        .zip(b.data().chunks_exact(c))
        .map(|(p, q)| {
            channels
                .clone()
                .map(|k| {
                    let d = p[k] as f64 - q[k] as f64;
                    d * d
                })
                .sum::<f64>()
        })
        .sum()
}

/// Texture-set PSNR over all mips at least `min_mip_res` wide; `+inf` if identical.
pub fn psnr_texture_set(reference: &MipChain, test: &MipChain, min_mip_res: usize) -> Result<f64> {
    Ok(psnr_from_mse(mse_texture_set(reference, test, min_mip_res)?))
}

pub fn mse_texture_set(reference: &MipChain, test: &MipChain, min_mip_res: usize) -> Result<f64> {
    check_shapes(reference, test)?;
    let c = reference.channels();
    let (mut sq, mut count) = (0.0, 0usize);
    for (r, t) in reference.levels().iter().zip(test.levels()) {
        if included(r, min_mip_res) {
            sq += squared_error(r, t, 0..c);
            count += r.width() * r.height() * c;
        }
    }
    if count == 0 {
        return Err(Error::ShapeMismatch(format!("no mip is at least {min_mip_res} wide")));
    }
    Ok(sq / count as f64)
}

/// Per-mip MSE for every included mip.
pub fn per_mip_mse(reference: &MipChain, test: &MipChain, min_mip_res: usize) -> Result<Vec<MipPsnr>> {
    check_shapes(reference, test)?;
    let c = reference.channels();
    Ok(reference
        .levels()
        .iter()
        .zip(test.levels())
        .enumerate()
        .filter(|(_, (r, _))| included(r, min_mip_res))
        .map(|(mip, (r, t))| {
            let mse = squared_error(r, t, 0..c) / (r.width() * r.height() * c) as f64;
            MipPsnr {
                mip,
                width: r.width(),
                mse,
                psnr_db: finite(psnr_from_mse(mse)),
            }
        })
        .collect())
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Texture-set 1−SSIM over all mips at least `min_mip_res` wide.
pub fn ssim_texture_set(reference: &MipChain, test: &MipChain, min_mip_res: usize) -> Result<f64> {
    check_shapes(reference, test)?;
    let c = reference.channels();
    let (mut acc, mut count) = (0.0, 0usize);
    for (r, t) in reference.levels().iter().zip(test.levels()) {
        if !included(r, min_mip_res) {
            continue;
        }
        let texels = r.width() * r.height();
        for ch in 0..c {
            let a = plane(r, ch);
            let b = plane(t, ch);
            acc += texels as f64 * ssim_plane(&a, &b, r.width(), r.height());
        }
        count += texels * c;
    }
    if count == 0 {
        return Err(Error::ShapeMismatch(format!("no mip is at least {min_mip_res} wide")));
    }
    Ok(1.0 - acc / count as f64)
}

/// Full report: PSNR, 1−SSIM and their per-mip and per-texture breakdowns.
pub fn evaluate(reference: &MipChain, test: &MipChain, min_mip_res: usize) -> Result<MetricReport> {
    let mse = mse_texture_set(reference, test, min_mip_res)?;
    let one_minus_ssim = ssim_texture_set(reference, test, min_mip_res)?;
    let per_mip_psnr = per_mip_mse(reference, test, min_mip_res)?;
    let mut per_texture_psnr = Vec::new();
    for span in reference.names() {
        let (mut sq, mut count) = (0.0, 0usize);
        for (r, t) in reference.levels().iter().zip(test.levels()) {
            if included(r, min_mip_res) {
                sq += squared_error(r, t, span.start..span.start + span.len);
                count += r.width() * r.height() * span.len;
            }
        }
        let mse = sq / count as f64;
        per_texture_psnr.push(TexturePsnr {
            name: span.name.clone(),
            mse,
            psnr_db: finite(psnr_from_mse(mse)),
        });
    }
    Ok(MetricReport {
        psnr_db: finite(psnr_from_mse(mse)),
        identical: mse == 0.0,
        mse,
        one_minus_ssim,
        per_mip_psnr,
        per_texture_psnr,
        bppc: None,
        lpips: None,
        flip: None,
    })
}

/// One channel of an image as `f64`, row-major.
pub fn plane(img: &Image, channel: usize) -> Vec<f64> {
    img.data()
        .chunks_exact(img.channels())
        .map(|px| px[channel] as f64)
        .collect()
}

/// Normalized 1-D Gaussian of width [`SSIM_WINDOW`].
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" correlation with the Gaussian window.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Transpose of [`filter_valid`]: scatters window-space values back to pixels.
fn filter_valid_transpose(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                tmp[(y + i) * ow + x] += kv * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                out[y * w + x + i] += kv * v;
            }
        }
    }
    out
}

/// Local statistics per window position.
struct Moments {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    xx: Vec<f64>,
    yy: Vec<f64>,
    xy: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], w: usize, h: usize) -> Moments {
    if w >= SSIM_WINDOW && h >= SSIM_WINDOW {
        let k = gaussian_window();
        let sq = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
        Moments {
            mu_x: filter_valid(x, w, h, &k),
            mu_y: filter_valid(y, w, h, &k),
            xx: filter_valid(&sq(x, x), w, h, &k),
            yy: filter_valid(&sq(y, y), w, h, &k),
            xy: filter_valid(&sq(x, y), w, h, &k),
        }
    } else {
        // image smaller than the window: one uniform window over everything
        let n = x.len() as f64;
        let mean = |it: &mut dyn Iterator<Item = f64>| vec![it.sum::<f64>() / n];
        Moments {
            mu_x: mean(&mut x.iter().copied()),
            mu_y: mean(&mut y.iter().copied()),
            xx: mean(&mut x.iter().map(|v| v * v)),
            yy: mean(&mut y.iter().map(|v| v * v)),
            xy: mean(&mut x.iter().zip(y).map(|(a, b)| a * b)),
        }
    }
}

/// Mean SSIM between two single-channel `w × h` planes with values in `[0, 1]`.
pub fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
    let m = moments(x, y, w, h);
    let n = m.mu_x.len();
    (0..n).map(|p| ssim_terms(&m, p).0).sum::<f64>() / n as f64
}

/// `(ssim, ∂/∂μy, ∂/∂E[y²], ∂/∂E[xy])` at window position `p`.
#[inline]
fn ssim_terms(m: &Moments, p: usize) -> (f64, f64, f64, f64) {
    let (mx, my) = (m.mu_x[p], m.mu_y[p]);
    let sxx = m.xx[p] - mx * mx;
    let syy = m.yy[p] - my * my;
    let sxy = m.xy[p] - mx * my;
    let a1 = 2.0 * mx * my + C1;
    let a2 = 2.0 * sxy + C2;
    let b1 = mx * mx + my * my + C1;
    let b2 = sxx + syy + C2;
    let s = a1 * a2 / (b1 * b2);
    let d_mu = (2.0 * mx * a2 - 2.0 * mx * a1) / (b1 * b2) - s * (2.0 * my / b1 - 2.0 * my / b2);
    let d_yy = -s / b2;
    let d_xy = 2.0 * a1 / (b1 * b2);
    (s, d_mu, d_yy, d_xy)
}

/// Mean SSIM and its gradient with respect to every value of `y`.
pub fn ssim_plane_with_grad(x: &[f64], y: &[f64], w: usize, h: usize, grad: &mut [f64]) -> f64 {
    let m = moments(x, y, w, h);
    let n = m.mu_x.len();
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    let mut g_mu = vec![0.0; n];
    let mut g_yy = vec![0.0; n];
    let mut g_xy = vec![0.0; n];
    for p in 0..n {
        let (s, a, b, c) = ssim_terms(&m, p);
        total += s;
        g_mu[p] = a * inv;
        g_yy[p] = b * inv;
        g_xy[p] = c * inv;
    }
    if w >= SSIM_WINDOW && h >= SSIM_WINDOW {
        let k = gaussian_window();
        let t_mu = filter_valid_transpose(&g_mu, w, h, &k);
        let t_yy = filter_valid_transpose(&g_yy, w, h, &k);
        let t_xy = filter_valid_transpose(&g_xy, w, h, &k);
        for q in 0..w * h {
            grad[q] = t_mu[q] + 2.0 * y[q] * t_yy[q] + x[q] * t_xy[q];
        }
    } else {
        let u = 1.0 / (w * h) as f64;
        for q in 0..w * h {
            grad[q] = u * (g_mu[0] + 2.0 * y[q] * g_yy[0] + x[q] * g_xy[0]);
        }
    }
    total * inv
}
