//! Factored gradient descent for the regularized low-rank fit.
//!
//! Instead of minimizing L_T(Θ) + λ‖Θ‖_* over m-by-n matrices, the solver works
//! on the factored surrogate
//!
//!   f(U, V) = L_T(U·Vᵀ) + (λ/2)‖U‖_F² + (λ/2)‖V‖_F²,
//!
//! whose regularizer upper-bounds λ times the nuclear norm of the row-centered
//! product. Factors are m-by-r̃ and n-by-r̃, so per-step cost scales with the
//! observation count and r̃ rather than with m·n.
//!
//! Initialization takes the top-r̃ SVD of the negated gradient of L_T at zero,
//! scaled by γ^{-1/2} where γ is a finite-difference curvature probe (the
//! Frobenius distance between the gradients at zero and at a single-entry
//! probe matrix, with the λ term included). Each iteration takes a full
//! gradient step with a backtracking step size: η starts at 1 and shrinks by
//! `beta_dec` until the trial objective does not exceed the current one.
//! Iteration stops when the relative objective decrease falls to `tau`, which
//! also covers exact-equality steps (zero decrease terminates immediately).
//!
//! Everything is sequential and deterministic: identical data and configuration
//! produce bit-identical results.

use crate::dataset::ChoiceDataset;
use crate::error::{invalid, Error, Result};
use crate::likelihood::{
    factored_gradients, factored_objective, factored_value_and_gradients, nll_gradient, FactorPair,
};
use crate::linalg::svd_top_k;
use crate::param::{row_center, ParamMatrix};
use nalgebra::DMatrix;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Regularization weight λ ≥ 0.
    pub lambda: f64,
    /// Factor rank r̃ (commonly twice the suspected truth rank).
    pub r_tilde: usize,
    /// Step-size shrink factor in (0, 1).
    pub beta_dec: f64,
    /// Relative objective-decrease tolerance.
    pub tau: f64,
    /// Safety cap on outer iterations.
    pub max_outer_iters: usize,
    /// Safety cap on step-size trials per iteration.
    pub max_linesearch_iters: usize,
}

impl SolverConfig {
    pub fn new(lambda: f64, r_tilde: usize) -> Self {
        Self {
            lambda,
            r_tilde,
            beta_dec: 0.8,
            tau: 1e-10,
            max_outer_iters: 10_000,
            max_linesearch_iters: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be finite and nonnegative"));
        }
        if self.r_tilde == 0 {
            return Err(invalid("factor rank r_tilde must be positive"));
        }
        if !(self.beta_dec > 0.0 && self.beta_dec < 1.0) {
            return Err(invalid("beta_dec must lie strictly between 0 and 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau must be finite and positive"));
        }
        if self.max_outer_iters == 0 || self.max_linesearch_iters == 0 {
            return Err(invalid("iteration caps must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a solver run.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Row-centered estimate U·Vᵀ.
    pub estimate: ParamMatrix,
    /// Final factors.
    pub factors: FactorPair,
    /// Accepted objective values, one per outer iteration; nonincreasing.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    /// Full-data gradient passes, including the two dense probes at
    /// initialization.
    pub total_gradient_evals: usize,
    pub wall_time_seconds: f64,
    /// False when an iteration cap cut the run short.
    pub converged: bool,
}

/// Spectral initialization: U⁰ and V⁰ from the top-r̃ SVD of −∇L_T(0), columns
/// scaled by √σ_c, everything scaled by γ^{-1/2}.
///
/// γ is the Frobenius norm of ∇L_T(0) − (∇L_T(E₁₁) + λE₁₁) where E₁₁ has a
/// single 1 in its first entry; if that probe is degenerate (γ < 1e-15) the
/// scale falls back to 1 with a warning.
pub fn init_factors(data: &ChoiceDataset, lambda: f64, r_tilde: usize) -> Result<FactorPair> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda must be finite and nonnegative"));
    }
    let (m, n) = (data.m(), data.n());
    if r_tilde == 0 || r_tilde > m.min(n) {
        return Err(invalid(format!(
            "r_tilde = {r_tilde} out of range (need 1 <= r_tilde <= {})",
            m.min(n)
        )));
    }
    let zero = ParamMatrix::zeros(m, n)?;
    let g0 = nll_gradient(&zero, data)?;

    let mut probe = DMatrix::zeros(m, n);
    probe[(0, 0)] = 1.0;
    let g1 = nll_gradient(&ParamMatrix::from_matrix(probe)?, data)?;
    let mut diff = &g0 - &g1;
    diff[(0, 0)] -= lambda;
    let mut gamma = diff.norm();
    if gamma < 1e-15 {
        log::warn!("degenerate curvature probe (gamma = {gamma:e}); falling back to gamma = 1");
        gamma = 1.0;
    }

    let svd = svd_top_k(&(-g0), r_tilde)?;
    let scale = gamma.sqrt().recip();
    let mut u = svd.left;
    let mut v = svd.right;
    for c in 0..r_tilde {
        let s = svd.singular_values[c].sqrt() * scale;
        u.column_mut(c).scale_mut(s);
        v.column_mut(c).scale_mut(s);
    }
    FactorPair::new(u, v)
}

/// Runs factored gradient descent on the dataset and returns the row-centered
/// estimate with diagnostics.
pub fn fit(data: &ChoiceDataset, config: &SolverConfig) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(invalid("dataset has no observations"));
    }
    let start = Instant::now();
    let factors = init_factors(data, config.lambda, config.r_tilde)?;
    let mut gradient_evals = 2; // the two dense probes inside init_factors

    // Fused pass: the initial objective (finiteness check) and the gradients
    // the first iteration needs.
    let (f_init, mut gu, mut gv) = factored_value_and_gradients(&factors, data, config.lambda)?;
    gradient_evals += 1;
    if !f_init.is_finite() {
        return Err(Error::Numerical(format!(
            "objective is {f_init} at initialization (lambda = {:e}, |U| = {:e}, |V| = {:e})",
            config.lambda,
            factors.u().norm(),
            factors.v().norm()
        )));
    }

    let (mut u, mut v) = (factors.u().clone(), factors.v().clone());
    let mut f_current = f64::INFINITY;
    let mut trace = Vec::new();
    let mut outer_iters = 0;
    let mut converged = false;

    type Trial = (f64, DMatrix<f64>, DMatrix<f64>, Option<(DMatrix<f64>, DMatrix<f64>)>);
    while outer_iters < config.max_outer_iters {
        outer_iters += 1;
        // gu, gv hold the gradients at (u, v), carried over from the pass that
        // accepted this iterate

        let mut eta = 1.0;
        let mut accepted: Option<Trial> = None;
        let mut best: Option<Trial> = None;
        for ls in 0..config.max_linesearch_iters {
            let trial_u = &u - &gu * eta;
            let trial_v = &v - &gv * eta;
            let pair = FactorPair::new(trial_u.clone(), trial_v.clone())?;
            // the full step is almost always accepted, so evaluate it fused
            // with the gradients the next iteration will need; backtracking
            // probes are objective-only
            let (f_trial, grads) = if ls == 0 {
                let (f, tgu, tgv) = factored_value_and_gradients(&pair, data, config.lambda)?;
                gradient_evals += 1;
                (f, Some((tgu, tgv)))
            } else {
                (factored_objective(&pair, data, config.lambda)?, None)
            };
            if best.as_ref().is_none_or(|(fb, ..)| f_trial < *fb) {
                best = Some((f_trial, trial_u.clone(), trial_v.clone(), grads.clone()));
            }
            if f_trial <= f_current {
                accepted = Some((f_trial, trial_u, trial_v, grads));
                break;
            }
            eta *= config.beta_dec;
        }
        let accepted = accepted.or_else(|| {
            // cap exhausted: fall back to the best trial if it does not increase f
            best.filter(|(fb, ..)| *fb <= f_current)
        });
        let Some((f_new, new_u, new_v, grads)) = accepted else {
            // no non-increasing step exists within the cap
            converged = false;
            break;
        };
        u = new_u;
        v = new_v;
        trace.push(f_new);
        // robust form of (f - f')/f' <= tau; equality steps terminate here
        let stop = f_current - f_new <= config.tau * f_new;
        f_current = f_new;
        if stop {
            converged = true;
            break;
        }
        match grads {
            Some((tgu, tgv)) => {
                gu = tgu;
                gv = tgv;
            }
            None => {
                let (g1, g2) =
                    factored_gradients(&FactorPair::new(u.clone(), v.clone())?, data, config.lambda)?;
                gradient_evals += 1;
                gu = g1;
                gv = g2;
            }
        }
    }

    let factors = FactorPair::new(u, v)?;
    let estimate = row_center(&factors.product());
    Ok(FitResult {
        estimate,
        factors,
        objective_trace: trace,
        outer_iters,
        total_gradient_evals: gradient_evals,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        converged,
    })
}
