//! Dense symmetric solves for the small normal-equation systems of IRLS.

use crate::scalar::Scalar;

/// Solution of `A x = b` for symmetric positive semi-definite `A`.
#[derive(Debug, Clone)]
pub struct SpdSolution<T> {
    pub x: Vec<T>,
    /// Columns found linearly dependent on earlier ones; their entries of `x` are zero.
    pub dropped: Vec<usize>,
}

/// Cholesky solve with Jacobi pre-scaling. A column whose scaled pivot falls below
/// `tol` is treated as collinear with the preceding columns and dropped.
pub fn solve_spd<T: Scalar>(a: &[T], b: &[T], n: usize) -> SpdSolution<T> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let tol = T::epsilon().sqrt() * T::of(1e-2);

    let scale: Vec<T> = (0..n)
        .map(|i| {
            let d = a[i * n + i];
            if d > T::zero() {
                d.sqrt().recip()
            } else {
                T::zero()
            }
        })
        .collect();

    let mut l = vec![T::zero(); n * n];
    let mut dropped = Vec::new();
    let mut active = vec![true; n];
    for j in 0..n {
        if scale[j] == T::zero() {
            active[j] = false;
            dropped.push(j);
            continue;
        }
        let mut d = a[j * n + j] * scale[j] * scale[j];
        for k in 0..j {
            d = d - l[j * n + k] * l[j * n + k];
        }
        if d <= tol {
            active[j] = false;
            dropped.push(j);
            continue;
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            if scale[i] == T::zero() {
                continue;
            }
            let mut s = a[i * n + j] * scale[i] * scale[j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }

    // forward: L y = D b
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        if !active[i] {
            continue;
        }
        let mut s = b[i] * scale[i];
        for k in 0..i {
            if active[k] {
                s = s - l[i * n + k] * y[k];
            }
        }
        y[i] = s / l[i * n + i];
    }
    // backward: Lᵀ u = y, x = D u
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        if !active[i] {
            continue;
        }
        let mut s = y[i];
        for k in (i + 1)..n {
            if active[k] {
                s = s - l[k * n + i] * x[k];
            }
        }
        x[i] = s / l[i * n + i];
    }
    for i in 0..n {
        x[i] = x[i] * scale[i];
    }
    SpdSolution { x, dropped }
}

/// Accumulates `XᵀWX` (full symmetric) and `XᵀWz` for row-major `x`.
pub fn weighted_normal_equations<T: Scalar>(
    x: &[T],
    n_cols: usize,
    weights: &[T],
    z: &[T],
) -> (Vec<T>, Vec<T>) {
    let n_rows = weights.len();
    debug_assert_eq!(x.len(), n_rows * n_cols);
    let mut xtwx = vec![T::zero(); n_cols * n_cols];
    let mut xtwz = vec![T::zero(); n_cols];
    for r in 0..n_rows {
        let w = weights[r];
        if w == T::zero() {
            continue;
        }
        let row = &x[r * n_cols..(r + 1) * n_cols];
        let wz = w * z[r];
        for j in 0..n_cols {
            let wxj = w * row[j];
            xtwz[j] = xtwz[j] + row[j] * wz;
            for k in j..n_cols {
                xtwx[j * n_cols + k] = xtwx[j * n_cols + k] + wxj * row[k];
            }
        }
    }
    for j in 0..n_cols {
        for k in 0..j {
            xtwx[j * n_cols + k] = xtwx[k * n_cols + j];
        }
    }
    (xtwx, xtwz)
}
