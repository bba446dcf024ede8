//! Shared oracles for the acceptance suite: finite differences, a 1-D grid
//! minimizer, and chi-square machinery. Kept independent of the library code
//! they check.

use nalgebra::DMatrix;

/// Central finite-difference gradient of `f` at `at`, step `h`.
pub fn finite_difference_gradient(
    f: &mut dyn FnMut(&DMatrix<f64>) -> f64,
    at: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(at.nrows(), at.ncols());
    for i in 0..at.nrows() {
        for j in 0..at.ncols() {
            let mut plus = at.clone();
            plus[(i, j)] += h;
            let mut minus = at.clone();
            minus[(i, j)] -= h;
            grad[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    grad
}

/// Worst per-coordinate error of `a` against reference `b`, relative with a
/// unit floor so exactly-zero coordinates stay well-defined.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Minimizes the two-item full-assortment negative log-likelihood over the
/// centered parameterization theta = (x, -x) by scanning x in [-5, 5] at
/// resolution 1e-4. Choice probabilities: P(0) = 1 / (1 + e^{2x}).
pub fn two_item_grid_oracle(count0: u64, count1: u64) -> (f64, f64) {
    let t = (count0 + count1) as f64;
    let mut best_x = 0.0;
    let mut best = f64::INFINITY;
    for k in -50_000..=50_000i64 {
        let x = k as f64 * 1e-4;
        let nll = (count0 as f64 * (1.0 + (2.0 * x).exp()).ln()
            + count1 as f64 * (1.0 + (-2.0 * x).exp()).ln())
            / t;
        if nll < best {
            best = nll;
            best_x = x;
        }
    }
    (best_x, -best_x)
}

/// Pearson statistic sum (observed - expected)^2 / expected.
pub fn chi_square_stat(counts: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(counts.len(), expected.len());
    counts
        .iter()
        .zip(expected)
        .map(|(&c, &e)| {
            let d = c as f64 - e;
            d * d / e
        })
        .sum()
}

/// 99.9% chi-square critical values by degrees of freedom.
pub const CHI2_CRIT_999_DOF2: f64 = 13.815510557964274;
pub const CHI2_CRIT_999_DOF4: f64 = 18.46682695290317;
pub const CHI2_CRIT_999_DOF9: f64 = 27.877164871256568;
