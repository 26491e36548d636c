//! Inner-loop matrix kernels.
//!
//! All three accumulate into `out` (callers zero-fill or reuse gradients).
//! Loop orders are chosen so the innermost loop walks contiguous rows; the
//! transposed variants avoid materializing transposed operands in backward
//! passes. The shared dimension is unrolled four-wide for instruction-level
//! parallelism; every output element still sums its terms in ascending index
//! order, so results do not depend on the unroll factor.

use super::scalar::Scalar;

/// `out[m,n] += a[m,k] * b[k,n]`
pub(crate) fn mm_nn<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let k4 = k - k % 4;
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        let mut p = 0;
        while p < k4 {
            let (a0, a1, a2, a3) = (a_row[p], a_row[p + 1], a_row[p + 2], a_row[p + 3]);
            let b0 = &b[p * n..(p + 1) * n];
            let b1 = &b[(p + 1) * n..(p + 2) * n];
            let b2 = &b[(p + 2) * n..(p + 3) * n];
            let b3 = &b[(p + 3) * n..(p + 4) * n];
            for j in 0..n {
                out_row[j] = out_row[j] + a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            p += 4;
        }
        for p in k4..k {
            let aip = a_row[p];
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m,k] += a[m,n] * b[k,n]^T` (dot products of contiguous rows)
pub(crate) fn mm_nt<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    let kk4 = k - k % 4;
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let mut p = 0;
        while p < kk4 {
            let b0 = &b[p * n..(p + 1) * n];
            let b1 = &b[(p + 1) * n..(p + 2) * n];
            let b2 = &b[(p + 2) * n..(p + 3) * n];
            let b3 = &b[(p + 3) * n..(p + 4) * n];
            let (mut s0, mut s1, mut s2, mut s3) = (S::zero(), S::zero(), S::zero(), S::zero());
            for (j, &av) in a_row.iter().enumerate() {
                s0 += av * b0[j];
                s1 += av * b1[j];
                s2 += av * b2[j];
                s3 += av * b3[j];
            }
            out[i * k + p] += s0;
            out[i * k + p + 1] += s1;
            out[i * k + p + 2] += s2;
            out[i * k + p + 3] += s3;
            p += 4;
        }
        for p in kk4..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut acc = S::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[i * k + p] += acc;
        }
    }
}

/// `out[k,n] += a[m,k]^T * b[m,n]` (rank-1 row updates)
pub(crate) fn mm_tn<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let m4 = m - m % 4;
    let mut i = 0;
    while i < m4 {
        let b0 = &b[i * n..(i + 1) * n];
        let b1 = &b[(i + 1) * n..(i + 2) * n];
        let b2 = &b[(i + 2) * n..(i + 3) * n];
        let b3 = &b[(i + 3) * n..(i + 4) * n];
        for p in 0..k {
            let (a0, a1, a2, a3) = (
                a[i * k + p],
                a[(i + 1) * k + p],
                a[(i + 2) * k + p],
                a[(i + 3) * k + p],
            );
            let out_row = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] = out_row[j] + a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
        i += 4;
    }
    for i in m4..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
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

    fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut t = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    fn check_all(m: usize, k: usize, n: usize) {
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64) * 0.37 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64) * -0.21 + 1.0).collect();
        let want = naive(&a, &b, m, k, n);

        let mut c = vec![0.0; m * n];
        mm_nn(&a, &b, &mut c, m, k, n);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-9 * y.abs().max(1.0), "mm_nn {m}x{k}x{n}");
        }

        // A * B == A * (B^T)^T
        let bt = transpose(&b, k, n);
        let mut c = vec![0.0; m * n];
        mm_nt(&a, &bt, &mut c, m, k, n);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-9 * y.abs().max(1.0), "mm_nt {m}x{k}x{n}");
        }

        // A * B == (A^T)^T * B
        let at = transpose(&a, m, k);
        let mut c = vec![0.0; m * n];
        mm_tn(&at, &b, &mut c, k, m, n);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-9 * y.abs().max(1.0), "mm_tn {m}x{k}x{n}");
        }
    }

    #[test]
    fn variants_agree_with_naive() {
        check_all(4, 5, 3);
    }

    #[test]
    fn unroll_remainders_are_covered() {
        // Shared dimensions of 1..9 hit every remainder of the four-wide
        // unroll in each kernel; the long-k case exercises the main body.
        for k in 1..=9 {
            check_all(3, k, 2);
            check_all(k, 3, 5);
        }
        check_all(2, 64, 7);
    }

    #[test]
    fn kernels_accumulate() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let mut c = [10.0];
        mm_nn(&a, &b, &mut c, 1, 2, 1);
        assert_eq!(c[0], 10.0 + 11.0);
    }
}
