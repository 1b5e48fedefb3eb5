//! Scalar quantization of latent values.
//!
//! A grid with `B` bits has `N = 2^B` levels and bin width `Q = 1/N`. The
//! representable values are `i·Q` for `i ∈ [-(N/2 - 1), N/2]`, so zero is
//! always a bin center. During training values live in the asymmetric range
//! `[-(N-1)/2·Q, N/2·Q]`.

use rand::RngCore;

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantSpec {
    bits: u8,
}

impl QuantSpec {
    pub const fn new(bits: u8) -> Self {
        assert!(bits >= 1 && bits <= 16);
        Self { bits }
    }

    #[inline]
    pub fn bits(&self) -> u8 {
        self.bits
    }

    #[inline]
    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    #[inline]
    pub fn bin(&self) -> f64 {
        1.0 / self.levels() as f64
    }

    #[inline]
    pub fn min_index(&self) -> i32 {
        -((self.levels() / 2) as i32 - 1)
    }

    #[inline]
    pub fn max_index(&self) -> i32 {
        (self.levels() / 2) as i32
    }

    /// Lower clamp bound, `-(N-1)/2 · Q`.
    #[inline]
    pub fn lo(&self) -> f64 {
        -((self.levels() - 1) as f64) / 2.0 * self.bin()
    }

    /// Upper clamp bound, `N/2 · Q`.
    #[inline]
    pub fn hi(&self) -> f64 {
        (self.levels() / 2) as f64 * self.bin()
    }

    /// Nearest bin center and its signed index.
    #[inline]
    pub fn quantize<T: Real>(&self, v: T) -> (i32, T) {
        let scaled = v.to_f64_lossy() / self.bin();
        let idx = if scaled.is_nan() {
            0
        } else {
            libm::round(scaled).clamp(self.min_index() as f64, self.max_index() as f64) as i32
        };
        (idx, self.dequantize(idx))
    }

    /// `index · Q`; exact because `Q` is a power of two.
    #[inline]
    pub fn dequantize<T: Real>(&self, index: i32) -> T {
        T::of(index as f64 * self.bin())
    }

    /// Index shifted to `0..N` for bit packing.
    #[inline]
    pub fn to_code(&self, index: i32) -> u32 {
        (index - self.min_index()) as u32
    }

    #[inline]
    pub fn from_code(&self, code: u32) -> i32 {
        code as i32 + self.min_index()
    }

    #[inline]
    pub fn clamp<T: Real>(&self, v: T) -> T {
        clamp_to_range(v, T::of(self.lo()), T::of(self.hi()))
    }

    /// Adds `U(-Q/2, Q/2)` noise to simulate quantization error.
    #[inline]
    pub fn inject_noise<T: Real, R: RngCore + ?Sized>(&self, v: T, rng: &mut R) -> T {
        inject_noise_with_bin(v, T::of(self.bin()), rng)
    }
}

#[inline]
fn clamp_to_range<T: Real>(v: T, lo: T, hi: T) -> T {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

/// Uniform sample in the open interval `(0, 1)`, 24 bits of resolution.
#[inline]
pub(crate) fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u32() >> 8) as f64 + 0.5) * (1.0 / 16_777_216.0)
}

/// `v + u` with `u ~ U(-bin/2, bin/2)`. A zero bin leaves `v` unchanged.
#[inline]
pub fn inject_noise_with_bin<T: Real, R: RngCore + ?Sized>(v: T, bin: T, rng: &mut R) -> T {
    let u = T::of(open01(rng) - 0.5);
    v + u * bin
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_bit_examples() {
        let q = QuantSpec::new(2);
        assert_eq!(q.quantize(0.0f32), (0, 0.0));
        assert_eq!(q.quantize(0.3f32), (1, 0.25));
        assert_eq!(q.quantize(0.9f32), (2, 0.5));
        assert_eq!(q.quantize(-5.0f32), (-1, -0.25));
        assert_eq!(q.clamp(-1.0f32), -0.375);
        assert_eq!(q.clamp(0.2f32), 0.2);
        assert_eq!(q.clamp(2.0f32), 0.5);
        assert_eq!(q.lo(), -0.375);
        assert_eq!(q.hi(), 0.5);
    }

    #[test]
    fn zero_is_exact_for_all_depths() {
        for bits in 1..=8 {
            let q = QuantSpec::new(bits);
            assert_eq!(q.quantize(0.0f32).1, 0.0);
            assert_eq!(q.quantize(0.0f64).1, 0.0);
            assert_eq!(q.max_index() - q.min_index() + 1, q.levels() as i32);
            assert_eq!(q.lo(), -((q.levels() - 1) as f64) / 2.0 / q.levels() as f64);
            assert_eq!(q.hi(), 0.5);
        }
    }

    #[test]
    fn codes_round_trip() {
        let q = QuantSpec::new(3);
        for i in q.min_index()..=q.max_index() {
            let code = q.to_code(i);
            assert!(code < 8);
            assert_eq!(q.from_code(code), i);
        }
    }

    #[test]
    fn noise_support_and_mean() {
        let q = QuantSpec::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = 0.1f64;
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let s = q.inject_noise(v, &mut rng);
            assert!(s > v - 0.125 && s < v + 0.125);
            sum += s;
        }
        let mean = sum / n as f64;
        let band = 3.0 * (0.25 / 12f64.sqrt()) / (n as f64).sqrt();
        assert!((mean - v).abs() < band, "mean {mean}");
        assert_eq!(inject_noise_with_bin(0.3f64, 0.0, &mut rng), 0.3);
    }
}
