//! Small dense kernels for the batched decoder passes.

use crate::Real;

const MR: usize = 4;
const NR: usize = 8;

/// `c[m×n] += a[m×k] · b[k×n]`; all row-major with leading dimensions
/// `lda`, `ldb`, `ldc`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_acc<T: Real>(
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    lda: usize,
    b: &[T],
    ldb: usize,
    c: &mut [T],
    ldc: usize,
) {
    let full_n = n - n % NR;
    let mut i = 0;
    while i + MR <= m {
        let rows: [&[T]; MR] = core::array::from_fn(|r| &a[(i + r) * lda..(i + r) * lda + k]);
        let mut j = 0;
        while j < full_n {
            let mut acc = [[T::zero(); NR]; MR];
            for p in 0..k {
                let bp: &[T; NR] = b[p * ldb + j..p * ldb + j + NR].try_into().expect("NR columns");
                for r in 0..MR {
                    let av = rows[r][p];
                    for q in 0..NR {
                        acc[r][q] += av * bp[q];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                let out = &mut c[(i + r) * ldc + j..(i + r) * ldc + j + NR];
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            j += NR;
        }
        for j in full_n..n {
            for (r, row) in rows.iter().enumerate() {
                let mut s = T::zero();
                for (p, &av) in row.iter().enumerate() {
                    s += av * b[p * ldb + j];
                }
                c[(i + r) * ldc + j] += s;
            }
        }
        i += MR;
    }
    for i in i..m {
        let row = &a[i * lda..i * lda + k];
        let out = &mut c[i * ldc..i * ldc + n];
        for (p, &av) in row.iter().enumerate() {
            for (o, &bv) in out.iter_mut().zip(&b[p * ldb..p * ldb + n]) {
                *o += av * bv;
            }
        }
    }
}

/// Writes the transpose of the row-major `rows × cols` matrix `src` into `dst`.
pub(crate) fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn naive(m: usize, n: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product_for_ragged_shapes() {
        for (m, n, k) in [(1, 1, 1), (4, 8, 3), (5, 9, 7), (13, 17, 89), (32, 64, 64), (3, 4, 64)] {
            let a: Vec<f64> = (0..m * k).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
            let b: Vec<f64> = (0..k * n).map(|i| ((i * 53 % 13) as f64 - 6.0) / 5.0).collect();
            let mut c = vec![1.0; m * n];
            gemm_acc(m, n, k, &a, k, &b, n, &mut c, n);
            for (got, want) in c.iter().zip(naive(m, n, k, &a, &b)) {
                assert!((got - 1.0 - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_round_trip() {
        let src: Vec<u32> = (0..12).collect();
        let mut t = vec![0; 12];
        transpose(&src, 3, 4, &mut t);
        assert_eq!(t[..4], [0, 4, 8, 1]);
        let mut back = vec![0; 12];
        transpose(&t, 4, 3, &mut back);
        assert_eq!(back, src);
    }
}
