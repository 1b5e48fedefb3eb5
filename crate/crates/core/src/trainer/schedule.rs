//! Level-of-detail sampling and the learning-rate schedule.

use rand::RngCore;

use crate::quant::open01;

/// Picks the mip for a batch. The exponential rule `⌊-log₄ X⌋` chooses a mip
/// proportionally to its area; `uniform` draws over the whole chain instead.
pub fn sample_lod<R: RngCore + ?Sized>(rng: &mut R, num_mips: usize, uniform: bool) -> usize {
    assert!(num_mips >= 1);
    if uniform {
        return ((open01(rng) * num_mips as f64) as usize).min(num_mips - 1);
    }
    lod_from_uniform(open01(rng), num_mips)
}

/// Exponential LOD for a given `X ∈ (0, 1]`, clamped to the last mip.
pub fn lod_from_uniform(x: f64, num_mips: usize) -> usize {
    let lod = libm::floor(-libm::log2(x) / 2.0);
    (lod.max(0.0) as usize).min(num_mips - 1)
}

/// Cosine annealing from `lr0` at step 0 to zero at `total_steps`.
pub fn lr_at_step(step: u64, total_steps: u64, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    lr0 * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
}
