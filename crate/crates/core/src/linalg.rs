//! Truncated SVD and matrix norms.

use crate::error::{invalid, Error, Result};
use nalgebra::DMatrix;

/// Top-k singular triplets of a matrix.
///
/// `left` is m-by-k and `right` is n-by-k with orthonormal columns;
/// `singular_values` is nonincreasing and nonnegative. Signs are canonical: the
/// largest-magnitude entry of each left singular vector is nonnegative (first
/// index wins ties), so results are deterministic.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub left: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub right: DMatrix<f64>,
}

impl SvdResult {
    /// left · diag(singular_values) · rightᵀ
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let k = self.singular_values.len();
        let mut scaled = self.left.clone();
        for c in 0..k {
            scaled.column_mut(c).scale_mut(self.singular_values[c]);
        }
        &scaled * self.right.transpose()
    }
}

/// Computes the top-k singular triplets, 1 ≤ k ≤ min(m, n).
///
/// Implemented as a cyclic one-sided Jacobi iteration. Bidiagonalization
/// routines (including the one in the linear-algebra dependency) can return
/// decompositions that are off by percents on rank-deficient inputs, which is
/// exactly the regime the generated truth matrices live in; Jacobi stays at
/// machine precision there and is deterministic.
pub fn svd_top_k(matrix: &DMatrix<f64>, k: usize) -> Result<SvdResult> {
    let (m, n) = matrix.shape();
    let p = m.min(n);
    if k == 0 || k > p {
        return Err(invalid(format!(
            "k = {k} out of range for a {m}x{n} matrix (need 1 <= k <= {p})"
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    // Work on the tall orientation so columns are the short dimension.
    let transposed = m < n;
    let work = if transposed {
        matrix.transpose()
    } else {
        matrix.clone()
    };
    let (b, v) = jacobi_orthogonalize(work)?;

    let cols = b.ncols();
    let norms: Vec<f64> = (0..cols).map(|j| b.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &c| norms[c].partial_cmp(&norms[a]).unwrap());
    let cut = norms[order[0]] * f64::EPSILON * m.max(n) as f64;

    let mut tall = DMatrix::zeros(b.nrows(), k);
    let mut short = DMatrix::zeros(cols, k);
    let mut singular_values = Vec::with_capacity(k);
    for (c, &src) in order.iter().take(k).enumerate() {
        singular_values.push(norms[src]);
        short.column_mut(c).copy_from(&v.column(src));
        if norms[src] > cut {
            tall.column_mut(c).copy_from(&(b.column(src) / norms[src]));
        } else {
            complete_orthonormal_column(&mut tall, c);
        }
    }
    let (mut left, mut right) = if transposed { (short, tall) } else { (tall, short) };
    for c in 0..k {
        // canonical sign: largest-magnitude entry of the left vector nonnegative
        let mut max_idx = 0;
        let mut max_abs = 0.0;
        for (i, &value) in left.column(c).iter().enumerate() {
            if value.abs() > max_abs {
                max_abs = value.abs();
                max_idx = i;
            }
        }
        if left[(max_idx, c)] < 0.0 {
            left.column_mut(c).neg_mut();
            right.column_mut(c).neg_mut();
        }
    }
    // Invariant check: squared singular values add up to the squared Frobenius
    // norm.
    let sigma_sq: f64 = norms.iter().map(|s| s * s).sum();
    let frob_sq = matrix.norm_squared();
    if (sigma_sq - frob_sq).abs() > 1e-8 * frob_sq.max(1.0) {
        return Err(Error::Numerical(format!(
            "singular value energy {sigma_sq:.12e} does not match squared Frobenius norm {frob_sq:.12e}"
        )));
    }
    Ok(SvdResult {
        left,
        singular_values,
        right,
    })
}

/// Rotates column pairs of `b` until all columns are mutually orthogonal,
/// accumulating the rotations in an orthonormal `v` with `b_in = b_out * v^T`.
fn jacobi_orthogonalize(mut b: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (rows, cols) = b.shape();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let tol = 1e-15;
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in p + 1..cols {
                let app = b.column(p).norm_squared();
                let aqq = b.column(q).norm_squared();
                let apq = b.column(p).dot(&b.column(q));
                if apq == 0.0 || apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                let zeta = (aqq - app) / (2.0 * apq);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    b[(i, p)] = c * bp - s * bq;
                    b[(i, q)] = s * bp + c * bq;
                }
                for i in 0..cols {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
                rotated = true;
            }
        }
        if !rotated {
            return Ok((b, v));
        }
    }
    Err(Error::Numerical(
        "Jacobi sweeps did not reach orthogonality".into(),
    ))
}

/// Fills column `col` with a unit vector orthogonal to columns 0..col, for
/// singular values that are numerically zero. Picks the standard basis vector
/// with the largest residual after projection, then re-orthogonalizes once.
fn complete_orthonormal_column(basis: &mut DMatrix<f64>, col: usize) {
    let m = basis.nrows();
    let residual = |candidate: usize, basis: &DMatrix<f64>| {
        let mut v = nalgebra::DVector::<f64>::zeros(m);
        v[candidate] = 1.0;
        for c in 0..col {
            let d = basis.column(c).dot(&v);
            v -= basis.column(c) * d;
        }
        v
    };
    let mut best = 0;
    let mut best_norm = -1.0;
    for candidate in 0..m {
        let norm = residual(candidate, basis).norm();
        if norm > best_norm {
            best_norm = norm;
            best = candidate;
        }
    }
    let mut v = residual(best, basis);
    v /= v.norm();
    for c in 0..col {
        let d = basis.column(c).dot(&v);
        v -= basis.column(c) * d;
    }
    v /= v.norm();
    basis.column_mut(col).copy_from(&v);
}

/// Sum of all singular values.
pub fn nuclear_norm(matrix: &DMatrix<f64>) -> Result<f64> {
    let k = matrix.nrows().min(matrix.ncols());
    let svd = svd_top_k(matrix, k)?;
    Ok(svd.singular_values.iter().sum())
}
