use alloc::vec;
use alloc::vec::Vec;

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment buffers for one flat parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> Moments<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }

    /// One bias-corrected Adam update at 1-based step `t`.
    pub fn update(&mut self, params: &mut [T], grads: &[T], lr: f64, t: u64, p: &AdamParams) {
        debug_assert_eq!(params.len(), grads.len());
        let b1 = T::of(p.beta1);
        let b2 = T::of(p.beta2);
        let one = T::one();
        let c1 = 1.0 - libm::pow(p.beta1, t as f64);
        let c2 = 1.0 - libm::pow(p.beta2, t as f64);
        // lr·m̂/(√v̂+ε) with the corrections folded into two scalars
        let step = T::of(lr / c1);
        let inv_c2 = T::of(1.0 / c2);
        let eps = T::of(p.epsilon);
        for (((w, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *w -= step * *m / ((*v * inv_c2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut m = Moments::<f64>::new(2);
        let mut w = [1.0, -1.0];
        m.update(&mut w, &[0.5, -2.0], 0.1, 1, &AdamParams::default());
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut m = Moments::<f64>::new(1);
        let mut w = [3.0];
        for t in 1..=2000 {
            let g = [2.0 * (w[0] - 0.7)];
            m.update(&mut w, &g, 0.05, t, &AdamParams::default());
        }
        assert!((w[0] - 0.7).abs() < 1e-3);
    }
}
