//! The decoder network: four affine layers `D_in → 64 → 64 → 64 → c`, with an
//! activation after each of the first three and a linear output.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::linalg::{gemm_acc, transpose};
use crate::quant::open01;
use crate::{Error, Real, Result};

pub const HIDDEN_WIDTH: usize = 64;
/// Affine layers with 64-wide outputs before the output layer.
pub const HIDDEN_LAYERS: usize = 3;
pub const MAX_OUTPUT_CHANNELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    Gelu,
    #[default]
    HardGelu,
}

impl Activation {
    pub fn id(self) -> u32 {
        match self {
            Activation::Gelu => 0,
            Activation::HardGelu => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Activation::Gelu),
            1 => Some(Activation::HardGelu),
            _ => None,
        }
    }

    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::HardGelu => hardgelu(x),
            Activation::Gelu => T::of(gelu(x.to_f64_lossy())),
        }
    }

    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::HardGelu => hardgelu_derivative(x),
            Activation::Gelu => T::of(gelu_derivative(x.to_f64_lossy())),
        }
    }
}

/// `0` below `-3/2`, identity above `3/2`, `x/3 · (x + 3/2)` in between.
#[inline]
pub fn hardgelu<T: Real>(x: T) -> T {
    let three_halves = T::of(1.5);
    if x < -three_halves {
        T::zero()
    } else if x > three_halves {
        x
    } else {
        x / T::of(3.0) * (x + three_halves)
    }
}

#[inline]
pub fn hardgelu_derivative<T: Real>(x: T) -> T {
    let three_halves = T::of(1.5);
    if x < -three_halves {
        T::zero()
    } else if x > three_halves {
        T::one()
    } else {
        (T::of(2.0) * x + three_halves) / T::of(3.0)
    }
}

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
    cdf + x * pdf
}

/// One affine layer; `weight` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    #[inline]
    fn forward(&self, x: &[T], out: &mut [T]) {
        for ((o, row), &b) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.inputs))
            .zip(&self.bias)
        {
            *o = b + dot(row, x);
        }
    }
}

#[inline(always)]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline(always)]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T: Real> DecoderWeights<T> {
    /// Zero weights for `inputs → hidden × HIDDEN_LAYERS → outputs`.
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend(core::iter::repeat_n(hidden, HIDDEN_LAYERS));
        sizes.push(outputs);
        Self::from_sizes(&sizes)
    }

    pub fn from_sizes(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
        }
    }

    /// Fan-in scaled uniform weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn init<R: RngCore + ?Sized>(inputs: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(inputs, hidden, outputs);
        for layer in &mut w.layers {
            let bound = libm::sqrt(6.0 / layer.inputs as f64);
            for v in &mut layer.weight {
                *v = T::of((2.0 * open01(rng) - 1.0) * bound);
            }
        }
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].outputs
    }

    /// `[D_in, hidden..., c]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_width()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter slices in storage order: per layer, weights then biases.
    pub fn param_slices(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn zero_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Linear::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.param_slices_mut()
            .for_each(|s| s.iter_mut().for_each(|v| *v = T::zero()));
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.param_slices_mut().zip(other.param_slices()) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
    }

    pub fn cast<U: Real>(&self) -> DecoderWeights<U> {
        DecoderWeights {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weight: l.weight.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
                    bias: l.bias.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
                })
                .collect(),
        }
    }

    pub fn scratch(&self) -> MlpScratch<T> {
        MlpScratch {
            pre: self.layers.iter().map(|l| vec![T::zero(); l.outputs]).collect(),
            post: self.layers.iter().map(|l| vec![T::zero(); l.outputs]).collect(),
            delta: vec![T::zero(); self.layers.iter().map(|l| l.outputs.max(l.inputs)).max().unwrap_or(0)],
            delta_prev: vec![T::zero(); self.layers.iter().map(|l| l.outputs.max(l.inputs)).max().unwrap_or(0)],
        }
    }

    /// Forward pass writing the output into `scratch`; returns it.
    #[inline]
    pub fn forward_into<'s>(&self, input: &[T], act: Activation, scratch: &'s mut MlpScratch<T>) -> &'s [T] {
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, rest) = scratch.post.split_at_mut(l);
            let x: &[T] = if l == 0 { input } else { &before[l - 1] };
            layer.forward(x, &mut scratch.pre[l]);
            if l + 1 < n {
                for (a, &z) in rest[0].iter_mut().zip(&scratch.pre[l]) {
                    *a = act.apply(z);
                }
            }
        }
        &scratch.pre[n - 1]
    }

    /// Backpropagates `dout` through the activations cached by the last
    /// [`forward_into`](Self::forward_into). Accumulates parameter gradients
    /// into `grad` and writes the input gradient into `dinput`.
    #[inline]
    pub fn backward(
        &self,
        input: &[T],
        act: Activation,
        scratch: &mut MlpScratch<T>,
        dout: &[T],
        grad: &mut DecoderWeights<T>,
        dinput: &mut [T],
    ) {
        let n = self.layers.len();
        scratch.delta[..dout.len()].copy_from_slice(dout);
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let g = &mut grad.layers[l];
            let x: &[T] = if l == 0 { input } else { &scratch.post[l - 1] };
            let delta = &scratch.delta[..layer.outputs];
            for ((&d, gb), gw) in delta
                .iter()
                .zip(&mut g.bias)
                .zip(g.weight.chunks_exact_mut(layer.inputs))
            {
                *gb += d;
                axpy(d, x, gw);
            }
            let prev: &mut [T] = if l == 0 {
                dinput
            } else {
                &mut scratch.delta_prev[..layer.inputs]
            };
            prev.iter_mut().for_each(|v| *v = T::zero());
            for (&d, row) in delta.iter().zip(layer.weight.chunks_exact(layer.inputs)) {
                axpy(d, row, prev);
            }
            if l > 0 {
                for (p, &z) in prev.iter_mut().zip(&scratch.pre[l - 1]) {
                    *p *= act.derivative(z);
                }
                core::mem::swap(&mut scratch.delta, &mut scratch.delta_prev);
            }
        }
    }
}

impl<T: Real> DecoderWeights<T> {
    /// Buffers for blocks of up to `capacity` inputs. They capture a transposed
    /// copy of the current weights, so make a new one after every update.
    pub fn block_scratch(&self, capacity: usize) -> BlockScratch<T> {
        let widest = self.layers.iter().map(|l| l.outputs.max(l.inputs)).max().unwrap_or(0);
        BlockScratch {
            capacity,
            wt: self
                .layers
                .iter()
                .map(|l| {
                    let mut t = vec![T::zero(); l.weight.len()];
                    transpose(&l.weight, l.outputs, l.inputs, &mut t);
                    t
                })
                .collect(),
            pre: self
                .layers
                .iter()
                .map(|l| vec![T::zero(); capacity * l.outputs])
                .collect(),
            post: self
                .layers
                .iter()
                .map(|l| vec![T::zero(); capacity * l.outputs])
                .collect(),
            delta: vec![T::zero(); capacity * widest],
            delta_prev: vec![T::zero(); capacity * widest],
            delta_t: vec![T::zero(); capacity * widest],
        }
    }

    /// Forward pass over `rows` inputs stored row by row; returns `rows × c`
    /// outputs.
    pub fn forward_block<'s>(&self, inputs: &[T], rows: usize, act: Activation, s: &'s mut BlockScratch<T>) -> &'s [T] {
        assert!(rows <= s.capacity, "block of {rows} exceeds capacity {}", s.capacity);
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, rest) = s.post.split_at_mut(l);
            let x: &[T] = if l == 0 { inputs } else { &before[l - 1] };
            let z = &mut s.pre[l][..rows * layer.outputs];
            for row in z.chunks_exact_mut(layer.outputs) {
                row.copy_from_slice(&layer.bias);
            }
            gemm_acc(
                rows,
                layer.outputs,
                layer.inputs,
                x,
                layer.inputs,
                &s.wt[l],
                layer.outputs,
                z,
                layer.outputs,
            );
            if l + 1 < n {
                for (a, &v) in rest[0].iter_mut().zip(z.iter()) {
                    *a = act.apply(v);
                }
            }
        }
        &s.pre[n - 1][..rows * self.output_width()]
    }

    /// Backward pass for the block last run through
    /// [`forward_block`](Self::forward_block). Accumulates parameter gradients
    /// into `grad` and writes `rows × D_in` input gradients into `dinput`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_block(
        &self,
        inputs: &[T],
        rows: usize,
        act: Activation,
        s: &mut BlockScratch<T>,
        dout: &[T],
        grad: &mut DecoderWeights<T>,
        dinput: &mut [T],
    ) {
        let BlockScratch {
            pre,
            post,
            delta,
            delta_prev,
            delta_t,
            ..
        } = s;
        delta[..dout.len()].copy_from_slice(dout);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (o, i) = (layer.outputs, layer.inputs);
            let g = &mut grad.layers[l];
            let x: &[T] = if l == 0 { inputs } else { &post[l - 1] };
            let d = &delta[..rows * o];
            for row in d.chunks_exact(o) {
                for (gb, &v) in g.bias.iter_mut().zip(row) {
                    *gb += v;
                }
            }
            transpose(d, rows, o, delta_t);
            gemm_acc(o, i, rows, delta_t, rows, x, i, &mut g.weight, i);
            let prev: &mut [T] = if l == 0 {
                &mut dinput[..rows * i]
            } else {
                &mut delta_prev[..rows * i]
            };
            prev.iter_mut().for_each(|v| *v = T::zero());
            gemm_acc(rows, i, o, d, o, &layer.weight, i, prev, i);
            if l > 0 {
                for (p, &z) in prev.iter_mut().zip(&pre[l - 1]) {
                    *p *= act.derivative(z);
                }
                core::mem::swap(delta, delta_prev);
            }
        }
    }
}

/// Buffers for [`DecoderWeights::forward_block`] and
/// [`DecoderWeights::backward_block`].
#[derive(Debug, Clone)]
pub struct BlockScratch<T> {
    capacity: usize,
    wt: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
    delta_t: Vec<T>,
}

/// Per-thread buffers for forward and backward passes.
#[derive(Debug, Clone)]
pub struct MlpScratch<T> {
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

/// Evaluates the decoder on one input vector.
pub fn mlp_forward<T: Real>(w: &DecoderWeights<T>, input: &[T], act: Activation) -> Result<Vec<T>> {
    if input.len() != w.input_width() {
        return Err(Error::ShapeMismatch(format!(
            "decoder expects {} inputs, got {}",
            w.input_width(),
            input.len()
        )));
    }
    let mut scratch = w.scratch();
    Ok(w.forward_into(input, act, &mut scratch).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hardgelu_cases() {
        assert_eq!(hardgelu(-2.0f64), 0.0);
        assert_eq!(hardgelu(2.0f64), 2.0);
        assert_eq!(hardgelu(0.0f64), 0.0);
        assert_eq!(hardgelu(1.5f64), 1.5);
        assert_eq!(hardgelu(-1.5f64), 0.0);
        // continuity at the breakpoints
        let e = 1e-9f64;
        assert!((hardgelu(1.5 + e) - hardgelu(1.5 - e)).abs() < 1e-8);
        assert!((hardgelu(-1.5 + e) - hardgelu(-1.5 - e)).abs() < 1e-8);
    }

    #[test]
    fn hardgelu_close_to_gelu() {
        let mut worst: f64 = 0.0;
        let mut x = -4.0;
        while x <= 4.0 {
            worst = worst.max((hardgelu(x) - gelu(x)).abs());
            x += 1e-3;
        }
        // worst case sits near x = ±1.5
        assert!(worst < 0.2, "{worst}");
        assert!((worst - 0.10021).abs() < 1e-4, "{worst}");
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut w = DecoderWeights::<f32>::zeros(5, 8, 3);
        w.layers.last_mut().unwrap().bias = vec![0.1, 0.2, 0.3];
        let out = mlp_forward(&w, &[1.0, -2.0, 3.0, 0.5, 9.0], Activation::HardGelu).unwrap();
        assert_eq!(out, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn output_width_and_shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in 1..=16 {
            let w = DecoderWeights::<f32>::init(57, 64, c, &mut rng);
            assert_eq!(mlp_forward(&w, &[0.1; 57], Activation::HardGelu).unwrap().len(), c);
            assert_eq!(w.layer_sizes(), vec![57, 64, 64, 64, c]);
        }
        let w = DecoderWeights::<f32>::init(57, 64, 3, &mut rng);
        assert!(mlp_forward(&w, &[0.0; 56], Activation::Gelu).is_err());
    }

    #[test]
    fn finite_for_bounded_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = DecoderWeights::<f32>::init(20, 64, 4, &mut rng);
        let mut scratch = w.scratch();
        for i in 0..2000 {
            let input: Vec<f32> = (0..20).map(|k| (((i * 31 + k * 7) % 41) as f32 / 20.0) - 1.0).collect();
            for act in [Activation::Gelu, Activation::HardGelu] {
                let out = w.forward_into(&input, act, &mut scratch);
                assert!(out.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn block_passes_match_single_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = DecoderWeights::<f64>::init(23, 16, 3, &mut rng);
        let rows = 7;
        let inputs: Vec<f64> = (0..rows * 23).map(|k| ((k * 13 % 29) as f64 / 14.0) - 1.0).collect();
        let dout: Vec<f64> = (0..rows * 3).map(|k| ((k * 5 % 7) as f64 - 3.0) / 4.0).collect();
        for act in [Activation::Gelu, Activation::HardGelu] {
            let mut single = w.zero_like();
            let mut single_din = vec![0.0; rows * 23];
            let mut scratch = w.scratch();
            let mut single_out = Vec::new();
            for r in 0..rows {
                let x = &inputs[r * 23..(r + 1) * 23];
                single_out.extend_from_slice(w.forward_into(x, act, &mut scratch));
                w.backward(
                    x,
                    act,
                    &mut scratch,
                    &dout[r * 3..(r + 1) * 3],
                    &mut single,
                    &mut single_din[r * 23..(r + 1) * 23],
                );
            }
            let mut block = w.zero_like();
            let mut block_din = vec![0.0; rows * 23];
            let mut bs = w.block_scratch(8);
            let out = w.forward_block(&inputs, rows, act, &mut bs).to_vec();
            w.backward_block(&inputs, rows, act, &mut bs, &dout, &mut block, &mut block_din);
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
            assert!(close(&out, &single_out));
            assert!(close(&block_din, &single_din));
            for (a, b) in block.param_slices().zip(single.param_slices()) {
                assert!(close(a, b));
            }
        }
    }
}
