//! Batch sampling and the analytic loss gradient.
//!
//! Every crop is processed independently into its own weight gradient and a
//! dense window over the grid cells it touches; crops are then reduced in
//! index order so results do not depend on how crops were scheduled.

use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schedule::sample_lod;
use super::{LossKind, TrainConfig};
use crate::grid::taps;
use crate::input::{mip_resolution, InputBuilder};
use crate::metrics::ssim_plane_with_grad;
use crate::mlp::DecoderWeights;
use crate::model::Model;
use crate::pyramid::feature_level_for_mip;
use crate::quant::open01;
use crate::texture::{Image, MipChain};
use crate::Real;

/// One optimization batch: a mip and square crops of it, each with its own
/// noise seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub lod: usize,
    pub crop: usize,
    pub corners: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    /// Add simulated quantization noise to every grid read.
    pub noise: bool,
}

impl Batch {
    pub fn sample<R: RngCore + ?Sized>(rng: &mut R, num_mips: usize, config: &TrainConfig, noise: bool) -> Self {
        let uniform = open01(rng) < config.uniform_lod_fraction;
        let lod = sample_lod(rng, num_mips, uniform);
        let res = mip_resolution(lod, num_mips);
        let crop = config.crop_size.min(res);
        let span = (res - crop + 1) as u64;
        let mut corners = Vec::with_capacity(config.batch_crops);
        let mut seeds = Vec::with_capacity(config.batch_crops);
        for _ in 0..config.batch_crops {
            let x = (rng.next_u64() % span) as usize;
            let y = (rng.next_u64() % span) as usize;
            corners.push((x, y));
            seeds.push(rng.next_u64());
        }
        Self {
            lod,
            crop,
            corners,
            seeds,
            noise,
        }
    }

    pub fn values(&self, channels: usize) -> usize {
        self.corners.len() * self.crop * self.crop * channels
    }
}

/// Gradients of the loss with respect to every trainable scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: DecoderWeights<T>,
    /// One dense buffer per grid, in [`FeaturePyramid::grids`](crate::FeaturePyramid::grids) order.
    pub grids: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Self {
            weights: model.weights.zero_like(),
            grids: model
                .pyramid
                .grids()
                .map(|(g, _)| vec![T::zero(); g.data.len()])
                .collect(),
        }
    }
}

/// Dense gradient accumulator over a rectangle of grid cells.
#[derive(Debug, Clone)]
struct Window<T> {
    res: usize,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Window<T> {
    /// Bounds of the cells a crop reads from a `res`-sized grid. Taps depend on
    /// `x` and `y` separately, so scanning one row and one column suffices.
    fn for_crop(
        res: usize,
        channels: usize,
        corner: (usize, usize),
        crop: usize,
        mip_res: usize,
        model: &Model<T>,
    ) -> Self {
        let mode = model.address_mode;
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (usize::MAX, 0, usize::MAX, 0);
        for i in 0..crop {
            let t = taps(res, (corner.0 + i) as i64, corner.1 as i64, mip_res, mode);
            for c in [t.cells[0], t.cells[1]] {
                xmin = xmin.min(c % res);
                xmax = xmax.max(c % res);
            }
            let t = taps(res, corner.0 as i64, (corner.1 + i) as i64, mip_res, mode);
            for c in [t.cells[0], t.cells[2]] {
                ymin = ymin.min(c / res);
                ymax = ymax.max(c / res);
            }
        }
        let (w, h) = (xmax - xmin + 1, ymax - ymin + 1);
        Self {
            res,
            x0: xmin,
            y0: ymin,
            w,
            h,
            channels,
            data: vec![T::zero(); w * h * channels],
        }
    }

    #[inline]
    fn cell_mut(&mut self, cell: usize) -> &mut [T] {
        let (gx, gy) = (cell % self.res, cell / self.res);
        let i = (gy - self.y0) * self.w + (gx - self.x0);
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }

    fn add_to(&self, dense: &mut [T]) {
        let c = self.channels;
        for row in 0..self.h {
            let src = &self.data[row * self.w * c..(row + 1) * self.w * c];
            let start = ((self.y0 + row) * self.res + self.x0) * c;
            for (d, &s) in dense[start..start + self.w * c].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

struct CropResult<T> {
    loss: f64,
    weights: DecoderWeights<T>,
    windows: Option<(Window<T>, Window<T>)>,
}

struct CropJob<'a, T> {
    model: &'a Model<T>,
    reference: &'a Image,
    level: usize,
    builder: InputBuilder<T>,
    mip_res: usize,
    crop: usize,
    noise: bool,
    loss: LossKind,
    /// `∂L/∂pred = l2_scale · (pred - ref)` for the L2 term.
    l2_scale: f64,
    /// `1 / N` for the squared-error contribution.
    inv_values: f64,
    /// `λ / (crops · c)` for the SSIM term.
    ssim_scale: f64,
    want_grids: bool,
}

/// Texels pushed through the decoder together.
const BLOCK: usize = 32;

impl<T: Real> CropJob<'_, T> {
    fn texel(&self, corner: (usize, usize), t: usize) -> (usize, usize) {
        (corner.0 + t % self.crop, corner.1 + t / self.crop)
    }

    fn run(&self, corner: (usize, usize), seed: u64) -> CropResult<T> {
        let model = self.model;
        let level = &model.pyramid.levels[self.level];
        let c = model.channels;
        let n = self.crop * self.crop;
        let d_in = model.weights.input_width();
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = model.weights.block_scratch(BLOCK.min(n));
        let mut inputs = vec![T::zero(); BLOCK.min(n) * d_in];

        // SSIM needs the whole crop before any texel gradient is known
        let mut ssim_grad: Vec<f64> = Vec::new();
        let mut ssim_loss = 0.0;
        if let LossKind::L2PlusSsim { .. } = self.loss {
            let mut r = rng.clone();
            let mut pred = vec![vec![0.0f64; n]; c];
            let mut refp = vec![vec![0.0f64; n]; c];
            for start in (0..n).step_by(BLOCK) {
                let rows = BLOCK.min(n - start);
                for (k, input) in inputs.chunks_exact_mut(d_in).take(rows).enumerate() {
                    let (x, y) = self.texel(corner, start + k);
                    builder_fill(&self.builder, level, x, y, self.noise, &mut r, input);
                }
                let out = model.weights.forward_block(&inputs, rows, model.activation, &mut block);
                for (k, o) in out.chunks_exact(c).enumerate() {
                    let t = start + k;
                    let (x, y) = self.texel(corner, t);
                    let rt = self.reference.texel(x, y);
                    for ch in 0..c {
                        pred[ch][t] = o[ch].to_f64_lossy();
                        refp[ch][t] = rt[ch] as f64;
                    }
                }
            }
            ssim_grad = vec![0.0; n * c];
            let mut g = vec![0.0; n];
            for ch in 0..c {
                let s = ssim_plane_with_grad(&refp[ch], &pred[ch], self.crop, self.crop, &mut g);
                ssim_loss += self.ssim_scale * (1.0 - s);
                for t in 0..n {
                    ssim_grad[t * c + ch] = -self.ssim_scale * g[t];
                }
            }
        }

        let mut windows = self.want_grids.then(|| {
            (
                Window::for_crop(level.g0.res, level.g0.channels, corner, self.crop, self.mip_res, model),
                Window::for_crop(level.g1.res, level.g1.channels, corner, self.crop, self.mip_res, model),
            )
        });
        let mut wgrad = model.weights.zero_like();
        let mut dinput = vec![T::zero(); BLOCK.min(n) * d_in];
        let mut dout = vec![T::zero(); BLOCK.min(n) * c];
        let mut taps = Vec::with_capacity(BLOCK);
        let mut rng = rng;
        let mut sq = 0.0f64;
        let c0 = level.g0.channels;
        let c1 = level.g1.channels;
        let l2_scale = T::of(self.l2_scale);

        for start in (0..n).step_by(BLOCK) {
            let rows = BLOCK.min(n - start);
            taps.clear();
            for (k, input) in inputs.chunks_exact_mut(d_in).take(rows).enumerate() {
                let (x, y) = self.texel(corner, start + k);
                taps.push(builder_fill(&self.builder, level, x, y, self.noise, &mut rng, input));
            }
            let out = model.weights.forward_block(&inputs, rows, model.activation, &mut block);
            for (k, (o, d)) in out.chunks_exact(c).zip(dout.chunks_exact_mut(c)).enumerate() {
                let t = start + k;
                let (x, y) = self.texel(corner, t);
                let rt = self.reference.texel(x, y);
                for ch in 0..c {
                    let diff = o[ch] - T::of(rt[ch] as f64);
                    let df = diff.to_f64_lossy();
                    sq += df * df;
                    d[ch] = l2_scale * diff;
                }
                if !ssim_grad.is_empty() {
                    for ch in 0..c {
                        d[ch] += T::of(ssim_grad[t * c + ch]);
                    }
                }
            }
            model.weights.backward_block(
                &inputs,
                rows,
                model.activation,
                &mut block,
                &dout[..rows * c],
                &mut wgrad,
                &mut dinput,
            );
            if let Some((w0, w1)) = windows.as_mut() {
                for (tp, din) in taps.iter().zip(dinput.chunks_exact(d_in)) {
                    for (k, &cell) in tp.g0.iter().enumerate() {
                        for (g, &d) in w0.cell_mut(cell).iter_mut().zip(&din[k * c0..(k + 1) * c0]) {
                            *g += d;
                        }
                    }
                    let d1 = &din[4 * c0..4 * c0 + c1];
                    for (&cell, &wt) in tp.g1.cells.iter().zip(&tp.g1.weights) {
                        let wt = T::of(wt);
                        for (g, &d) in w1.cell_mut(cell).iter_mut().zip(d1) {
                            *g += wt * d;
                        }
                    }
                }
            }
        }

        CropResult {
            loss: sq * self.inv_values + ssim_loss,
            weights: wgrad,
            windows,
        }
    }
}

#[inline]
fn builder_fill<T: Real>(
    builder: &InputBuilder<T>,
    level: &crate::pyramid::FeatureLevel<T>,
    x: usize,
    y: usize,
    noise: bool,
    rng: &mut ChaCha8Rng,
    input: &mut [T],
) -> crate::input::TexelTaps {
    builder.fill(level, x as i64, y as i64, noise.then_some(rng), input)
}

/// Loss of `batch` and its gradient, written into `grads`. Only the grids of
/// the batch's feature level are written; they are zeroed first. Grid
/// gradients are skipped entirely when `want_grids` is false.
pub fn loss_and_gradient_into<T: Real>(
    model: &Model<T>,
    chain: &MipChain,
    batch: &Batch,
    loss: LossKind,
    want_grids: bool,
    grads: &mut Gradients<T>,
) -> f64 {
    let level = feature_level_for_mip(batch.lod, model.num_mips).expect("lod within chain");
    let c = model.channels;
    let values = batch.values(c) as f64;
    let crops = batch.corners.len() as f64;
    let job = CropJob {
        model,
        reference: chain.level(batch.lod),
        level,
        builder: InputBuilder::new(&model.pyramid, batch.lod, model.num_mips, model.address_mode),
        mip_res: mip_resolution(batch.lod, model.num_mips),
        crop: batch.crop,
        noise: batch.noise,
        loss,
        l2_scale: 2.0 / values,
        inv_values: 1.0 / values,
        ssim_scale: match loss {
            LossKind::L2 => 0.0,
            LossKind::L2PlusSsim { lambda } => lambda / (crops * c as f64),
        },
        want_grids,
    };

    let jobs: Vec<((usize, usize), u64)> = batch.corners.iter().copied().zip(batch.seeds.iter().copied()).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<CropResult<T>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(|&(corner, seed)| job.run(corner, seed)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<CropResult<T>> = jobs.iter().map(|&(corner, seed)| job.run(corner, seed)).collect();

    grads.weights.fill_zero();
    if want_grids {
        for k in [2 * level, 2 * level + 1] {
            grads.grids[k].iter_mut().for_each(|v| *v = T::zero());
        }
    }
    let mut total = 0.0;
    for r in &results {
        total += r.loss;
        grads.weights.add_assign(&r.weights);
        if let Some((w0, w1)) = &r.windows {
            w0.add_to(&mut grads.grids[2 * level]);
            w1.add_to(&mut grads.grids[2 * level + 1]);
        }
    }
    total
}

/// Allocating form of [`loss_and_gradient_into`].
pub fn loss_and_gradient<T: Real>(
    model: &Model<T>,
    chain: &MipChain,
    batch: &Batch,
    loss: LossKind,
) -> (f64, Gradients<T>) {
    let mut grads = Gradients::zeros_like(model);
    let l = loss_and_gradient_into(model, chain, batch, loss, true, &mut grads);
    (l, grads)
}

/// Loss only, for finite-difference checks.
pub fn batch_loss<T: Real>(model: &Model<T>, chain: &MipChain, batch: &Batch, loss: LossKind) -> f64 {
    let mut grads = Gradients::zeros_like(model);
    loss_and_gradient_into(model, chain, batch, loss, false, &mut grads)
}
