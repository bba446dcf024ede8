//! Unregularized maximum-likelihood baseline.
//!
//! The sample objective separates across consumer types, so the full MLE is m
//! independent n-dimensional problems. Each row is minimized by a damped Newton
//! method: exact gradient and Hessian (per observation diag(p) − p·pᵀ over the
//! assortment coordinates), a small ridge on the Hessian solve, and step
//! halving to keep the objective nonincreasing. The zero-sum constraint is
//! dropped during iteration and restored at the end by subtracting the mean.
//!
//! With finite data a row can be separated (some item never chosen whenever it
//! is offered), in which case the unconstrained optimum is at infinity; the
//! iteration cap and the convergence flag surface this instead of masking it.
//! Items never offered to a type keep coefficient exactly 0 before centering.

use crate::dataset::{ChoiceDataset, ChoiceObservation};
use crate::error::{invalid, Error, Result};
use crate::param::{row_center, ParamMatrix};
use nalgebra::{DMatrix, DVector};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowFitOptions {
    /// Stop when the gradient 2-norm falls below this.
    pub grad_tol: f64,
    /// Ridge added to the Hessian before solving.
    pub ridge: f64,
    /// Newton iteration cap per row.
    pub max_iters: usize,
}

impl Default for RowFitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            ridge: 1e-8,
            max_iters: 100,
        }
    }
}

impl RowFitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return Err(invalid("grad_tol must be finite and positive"));
        }
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return Err(invalid("ridge must be finite and positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        Ok(())
    }
}

/// Newton outcome for one row.
#[derive(Debug, Clone)]
pub struct RowFitResult {
    /// Mean-centered coefficient vector of length n.
    pub theta: Vec<f64>,
    pub iterations: usize,
    /// Gradient 2-norm at termination.
    pub grad_norm: f64,
    pub converged: bool,
}

/// Per-row convergence summary for a full fit.
#[derive(Debug, Clone)]
pub struct RowReport {
    pub row: usize,
    pub observations: usize,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

impl fmt::Display for RowReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row={} observations={} iterations={} grad_norm={:.3e} converged={}",
            self.row, self.observations, self.iterations, self.grad_norm, self.converged
        )
    }
}

/// Full-matrix MLE: row-centered estimate plus per-row convergence reports.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub estimate: ParamMatrix,
    pub reports: Vec<RowReport>,
}

impl MleFit {
    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }

    pub fn total_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.iterations).sum()
    }

    /// One line per row, suitable for logs.
    pub fn report_text(&self) -> String {
        let mut out = String::new();
        for report in &self.reports {
            out.push_str(&report.to_string());
            out.push('\n');
        }
        out
    }
}

struct RowProblem<'a> {
    observations: &'a [&'a ChoiceObservation],
    n: usize,
}

impl RowProblem<'_> {
    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for obs in self.observations {
            let chosen = theta[obs.chosen_item()];
            let mut max_a = f64::NEG_INFINITY;
            for &j in obs.assortment() {
                max_a = max_a.max(chosen - theta[j]);
            }
            let sum_exp: f64 = obs
                .assortment()
                .iter()
                .map(|&j| (chosen - theta[j] - max_a).exp())
                .sum();
            acc += max_a + sum_exp.ln();
        }
        acc / self.observations.len() as f64
    }

    /// Gradient and Hessian of the mean objective at theta.
    fn derivatives(&self, theta: &DVector<f64>, probs: &mut Vec<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let inv_t = 1.0 / self.observations.len() as f64;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for obs in self.observations {
            let mut min_theta = f64::INFINITY;
            for &j in obs.assortment() {
                min_theta = min_theta.min(theta[j]);
            }
            probs.clear();
            let mut total = 0.0;
            for &j in obs.assortment() {
                let e = (-(theta[j] - min_theta)).exp();
                total += e;
                probs.push(e);
            }
            for p in probs.iter_mut() {
                *p /= total;
            }
            let items = obs.assortment();
            for (a, &j) in items.iter().enumerate() {
                let pj = probs[a];
                let indicator = if j == obs.chosen_item() { 1.0 } else { 0.0 };
                grad[j] += (indicator - pj) * inv_t;
                hess[(j, j)] += pj * inv_t;
                for (b, &l) in items.iter().enumerate() {
                    hess[(j, l)] -= pj * probs[b] * inv_t;
                }
            }
        }
        (grad, hess)
    }
}

/// Fits one consumer type's coefficient row by damped Newton iteration.
///
/// All observations must share one type index. Returns the mean-centered
/// coefficients; `converged` is false when the gradient tolerance was not
/// reached within `max_iters` (separation behaves this way when the cap binds).
pub fn fit_row_newton(
    observations: &[&ChoiceObservation],
    n: usize,
    options: &RowFitOptions,
) -> Result<RowFitResult> {
    options.validate()?;
    if observations.is_empty() {
        return Err(invalid("no observations for this row"));
    }
    let type_index = observations[0].type_index();
    for obs in observations {
        if obs.type_index() != type_index {
            return Err(invalid("observations span multiple consumer types"));
        }
        if let Some(&j) = obs.assortment().iter().find(|&&j| j >= n) {
            return Err(invalid(format!("item index {j} out of range for n = {n}")));
        }
    }
    let problem = RowProblem { observations, n };
    let mut theta = DVector::zeros(n);
    let mut f_current = problem.objective(&theta);
    let mut probs: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut grad_norm;
    let mut converged = false;
    loop {
        let (grad, mut hess) = problem.derivatives(&theta, &mut probs);
        grad_norm = grad.norm();
        if grad_norm <= options.grad_tol {
            converged = true;
            break;
        }
        if iterations >= options.max_iters {
            break;
        }
        iterations += 1;
        for i in 0..n {
            hess[(i, i)] += options.ridge;
        }
        let direction = solve_spd(&hess, &(-&grad))?;
        // one damped pass: halve until the objective does not increase
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial = &theta + &direction * alpha;
            let f_trial = problem.objective(&trial);
            if f_trial <= f_current {
                theta = trial;
                f_current = f_trial;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            // no descent available at this scale; report the current point
            break;
        }
    }
    let centered = row_center(&DMatrix::from_row_slice(1, n, theta.as_slice()));
    Ok(RowFitResult {
        theta: centered.values().row(0).iter().copied().collect(),
        iterations,
        grad_norm,
        converged,
    })
}

/// Cholesky solve with one step of iterative refinement.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Hessian factorization failed".into()))?;
    let mut x = chol.solve(b);
    let residual = b - a * &x;
    x += chol.solve(&residual);
    Ok(x)
}

/// Fits every row independently; rows of types with no observations stay zero.
pub fn fit_mle(data: &ChoiceDataset, options: &RowFitOptions) -> Result<MleFit> {
    options.validate()?;
    if data.is_empty() {
        return Err(invalid("dataset has no observations"));
    }
    let (m, n) = (data.m(), data.n());
    let mut by_type: Vec<Vec<&ChoiceObservation>> = vec![Vec::new(); m];
    for obs in data.observations() {
        by_type[obs.type_index()].push(obs);
    }
    let mut estimate = DMatrix::zeros(m, n);
    let mut reports = Vec::with_capacity(m);
    for (i, row_obs) in by_type.iter().enumerate() {
        if row_obs.is_empty() {
            reports.push(RowReport {
                row: i,
                observations: 0,
                iterations: 0,
                grad_norm: 0.0,
                converged: true,
            });
            continue;
        }
        let row = fit_row_newton(row_obs, n, options)?;
        for (j, &v) in row.theta.iter().enumerate() {
            estimate[(i, j)] = v;
        }
        reports.push(RowReport {
            row: i,
            observations: row_obs.len(),
            iterations: row.iterations,
            grad_norm: row.grad_norm,
            converged: row.converged,
        });
    }
    Ok(MleFit {
        estimate: row_center(&estimate),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ChoiceObservation;
    use crate::synthetic::{generate_truth, sample_dataset, seeded_rng, GeneratorConfig};
    use approx::assert_relative_eq;

    fn obs(i: usize, j: usize, s: &[usize]) -> ChoiceObservation {
        ChoiceObservation::new(i, j, s.to_vec()).unwrap()
    }

    fn pair_counts_dataset(c0: usize, c1: usize) -> ChoiceDataset {
        let mut observations = Vec::new();
        for _ in 0..c0 {
            observations.push(obs(0, 0, &[0, 1]));
        }
        for _ in 0..c1 {
            observations.push(obs(0, 1, &[0, 1]));
        }
        ChoiceDataset::new(1, 2, observations).unwrap()
    }

    #[test]
    fn closed_form_two_items() {
        // counts (3, 1): centered optimum is (-ln(3)/2, +ln(3)/2)
        let data = pair_counts_dataset(3, 1);
        let refs: Vec<&ChoiceObservation> = data.observations().iter().collect();
        let row = fit_row_newton(&refs, 2, &RowFitOptions::default()).unwrap();
        assert!(row.converged);
        let half_log3 = 3.0_f64.ln() / 2.0;
        assert_relative_eq!(row.theta[0], -half_log3, epsilon = 1e-6);
        assert_relative_eq!(row.theta[1], half_log3, epsilon = 1e-6);
    }

    #[test]
    fn closed_form_three_items() {
        // full assortments with counts (2, 1, 1): θ_j = -ln(count_j/T) - mean
        let mut observations = vec![obs(0, 0, &[0, 1, 2]), obs(0, 0, &[0, 1, 2])];
        observations.push(obs(0, 1, &[0, 1, 2]));
        observations.push(obs(0, 2, &[0, 1, 2]));
        let data = ChoiceDataset::new(1, 3, observations).unwrap();
        let fit = fit_mle(&data, &RowFitOptions::default()).unwrap();
        assert!(fit.all_converged());
        let est = fit.estimate.values();
        assert_relative_eq!(est[(0, 0)], -0.4620981203732967, epsilon = 1e-6);
        assert_relative_eq!(est[(0, 1)], 0.2310490601866486, epsilon = 1e-6);
        assert_relative_eq!(est[(0, 2)], 0.2310490601866486, epsilon = 1e-6);
    }

    #[test]
    fn singleton_assortments_stay_zero() {
        let data = ChoiceDataset::new(1, 3, vec![obs(0, 1, &[1]), obs(0, 2, &[2])]).unwrap();
        let refs: Vec<&ChoiceObservation> = data.observations().iter().collect();
        let row = fit_row_newton(&refs, 3, &RowFitOptions::default()).unwrap();
        assert!(row.converged);
        assert_eq!(row.iterations, 0);
        assert_eq!(row.theta, vec![0.0; 3]);
    }

    #[test]
    fn grid_search_oracle() {
        // m = 1, n = 2: reduce to the offset δ = θ1 − θ0 and scan a grid of the
        // count-based objective (independent of the Newton path)
        let (c0, c1) = (157, 43);
        let data = pair_counts_dataset(c0, c1);
        let t = (c0 + c1) as f64;
        let objective = |delta: f64| {
            // θ = (−δ/2, +δ/2)
            (c0 as f64 * (1.0 + (-delta).exp()).ln() + c1 as f64 * (1.0 + delta.exp()).ln()) / t
        };
        let mut best = (f64::INFINITY, 0.0);
        let mut delta = -5.0;
        while delta <= 5.0 {
            let f = objective(delta);
            if f < best.0 {
                best = (f, delta);
            }
            delta += 1e-4;
        }
        let refs: Vec<&ChoiceObservation> = data.observations().iter().collect();
        let row = fit_row_newton(&refs, 2, &RowFitOptions::default()).unwrap();
        let fitted_delta = row.theta[1] - row.theta[0];
        assert!(
            (fitted_delta - best.1).abs() <= 2e-4,
            "fitted {fitted_delta}, grid {}",
            best.1
        );
    }

    #[test]
    fn unseen_items_zero_before_centering() {
        // item 2 is never offered, so its coefficient is untouched by every
        // Newton step. The two seen items form a symmetric subproblem whose
        // iterates satisfy θ0 ≈ −θ1, so the row mean is ~0 and item 2 survives
        // centering near zero while the seen pair lands on ±ln(2)/2. "Near":
        // roundoff along the all-ones direction is amplified by 1/ridge in the
        // Hessian solve, so drift up to ~1e-9 is expected; genuine leakage of
        // likelihood gradient into item 2 would move it by orders more.
        let data = ChoiceDataset::new(
            1,
            3,
            vec![obs(0, 0, &[0, 1]), obs(0, 0, &[0, 1]), obs(0, 1, &[0, 1])],
        )
        .unwrap();
        let fit = fit_mle(&data, &RowFitOptions::default()).unwrap();
        assert!(fit.all_converged());
        let est = fit.estimate.values();
        let half_log2 = 2.0_f64.ln() / 2.0;
        assert_relative_eq!(est[(0, 1)] - est[(0, 0)], 2.0 * half_log2, epsilon = 1e-6);
        assert!(est[(0, 2)].abs() <= 1e-7, "unseen item drifted: {}", est[(0, 2)]);
    }

    #[test]
    fn empty_type_rows_are_zero() {
        let data = ChoiceDataset::new(3, 2, vec![obs(1, 0, &[0, 1])]).unwrap();
        let fit = fit_mle(&data, &RowFitOptions::default()).unwrap();
        let est = fit.estimate.values();
        for j in 0..2 {
            assert_eq!(est[(0, j)], 0.0);
            assert_eq!(est[(2, j)], 0.0);
        }
        assert_eq!(fit.reports[0].observations, 0);
        assert!(fit.reports[0].converged);
        assert_eq!(fit.reports.len(), 3);
    }

    #[test]
    fn matches_single_row_fit() {
        let cfg = GeneratorConfig { m: 1, n: 6, r: 1, t: 500, k: 3, seed: 12 };
        let mut rng = seeded_rng(cfg.seed);
        let truth = generate_truth(&cfg, &mut rng).unwrap();
        let data = sample_dataset(&truth, &cfg, &mut rng).unwrap();
        let fit = fit_mle(&data, &RowFitOptions::default()).unwrap();
        let refs: Vec<&ChoiceObservation> = data.observations().iter().collect();
        let row = fit_row_newton(&refs, 6, &RowFitOptions::default()).unwrap();
        for j in 0..6 {
            assert_eq!(fit.estimate.values()[(0, j)], row.theta[j]);
        }
    }

    #[test]
    fn interleaving_types_does_not_change_rows() {
        let cfg = GeneratorConfig { m: 3, n: 5, r: 2, t: 300, k: 3, seed: 44 };
        let mut rng = seeded_rng(cfg.seed);
        let truth = generate_truth(&cfg, &mut rng).unwrap();
        let data = sample_dataset(&truth, &cfg, &mut rng).unwrap();
        // regroup: all of type 0 first, then 1, then 2 (within-type order kept)
        let mut regrouped = Vec::new();
        for i in 0..3 {
            regrouped.extend(
                data.observations()
                    .iter()
                    .filter(|o| o.type_index() == i)
                    .cloned(),
            );
        }
        let regrouped = ChoiceDataset::new(3, 5, regrouped).unwrap();
        let a = fit_mle(&data, &RowFitOptions::default()).unwrap();
        let b = fit_mle(&regrouped, &RowFitOptions::default()).unwrap();
        assert_eq!(a.estimate.values(), b.estimate.values());
    }

    #[test]
    fn separation_is_flagged_when_cap_binds() {
        // item 1 never chosen although always offered: the optimum is at
        // infinity; with a tiny cap the run must flag non-convergence
        let data = pair_counts_dataset(50, 0);
        let refs: Vec<&ChoiceObservation> = data.observations().iter().collect();
        let small_cap = RowFitOptions {
            max_iters: 3,
            ..Default::default()
        };
        let row = fit_row_newton(&refs, 2, &small_cap).unwrap();
        assert!(!row.converged);
        assert_eq!(row.iterations, 3);
        // with the default cap the gradient eventually vanishes at a large but
        // finite point; the magnitude records the pathology either way
        let row = fit_row_newton(&refs, 2, &RowFitOptions::default()).unwrap();
        assert!(row.theta[1] - row.theta[0] > 5.0);
    }

    #[test]
    fn objective_nonincreasing() {
        let cfg = GeneratorConfig { m: 1, n: 8, r: 1, t: 400, k: 4, seed: 9 };
        let mut rng = seeded_rng(cfg.seed);
        let truth = generate_truth(&cfg, &mut rng).unwrap();
        let data = sample_dataset(&truth, &cfg, &mut rng).unwrap();
        let refs: Vec<&ChoiceObservation> = data.observations().iter().collect();
        let problem = RowProblem {
            observations: &refs,
            n: 8,
        };
        // trace the objective through the accepted iterates by re-running with
        // increasing caps
        let mut last = f64::INFINITY;
        for cap in 1..8 {
            let options = RowFitOptions {
                max_iters: cap,
                ..Default::default()
            };
            let row = fit_row_newton(&refs, 8, &options).unwrap();
            let f = problem.objective(&DVector::from_vec(row.theta.clone()));
            assert!(f <= last + 1e-12, "objective rose at cap {cap}");
            last = f;
        }
    }

    #[test]
    fn solve_residual_small() {
        let cfg = GeneratorConfig { m: 1, n: 6, r: 1, t: 2000, k: 4, seed: 50 };
        let mut rng = seeded_rng(cfg.seed);
        let truth = generate_truth(&cfg, &mut rng).unwrap();
        let data = sample_dataset(&truth, &cfg, &mut rng).unwrap();
        let refs: Vec<&ChoiceObservation> = data.observations().iter().collect();
        let problem = RowProblem {
            observations: &refs,
            n: 6,
        };
        let theta = DVector::zeros(6);
        let mut probs = Vec::new();
        let (grad, mut hess) = problem.derivatives(&theta, &mut probs);
        for i in 0..6 {
            hess[(i, i)] += 1e-8;
        }
        let x = solve_spd(&hess, &(-&grad)).unwrap();
        let residual = (&hess * &x + &grad).norm();
        assert!(residual <= 1e-10 * grad.norm(), "residual {residual}");
    }

    #[test]
    fn rejects_mixed_type_rows() {
        let o1 = obs(0, 0, &[0, 1]);
        let o2 = obs(1, 0, &[0, 1]);
        let refs = vec![&o1, &o2];
        assert!(fit_row_newton(&refs, 2, &RowFitOptions::default()).is_err());
        let empty: Vec<&ChoiceObservation> = vec![];
        assert!(fit_row_newton(&empty, 2, &RowFitOptions::default()).is_err());
    }
}
