//! Estimation of low-rank preference matrices from assortment choice data.
//!
//! Consumers of m types choose among offered assortments of n items; choice
//! probabilities follow a multinomial logit per type, with the type-by-item
//! disutility matrix Θ assumed approximately low-rank. This crate provides:
//!
//! - the choice likelihood and its gradients ([`likelihood`]),
//! - a factored gradient-descent estimator for the nuclear-norm-regularized
//!   fit ([`fgd`]),
//! - an unregularized per-row Newton baseline ([`mle`]),
//! - a synthetic data protocol ([`synthetic`]),
//! - an experiment harness with CSV output, an error-bound diagnostic, and SVG
//!   plots ([`harness`], [`plot`]).
//!
//! All randomness is seeded and pinned to ChaCha12; every computation is
//! sequential and bitwise reproducible for a fixed seed.

pub mod dataset;
pub mod error;
pub mod fgd;
pub mod harness;
pub mod likelihood;
pub mod linalg;
pub mod mle;
pub mod param;
pub mod plot;
pub mod synthetic;

pub use dataset::{ChoiceDataset, ChoiceObservation};
pub use error::{Error, Result};
pub use fgd::{fit, FitResult, SolverConfig};
pub use harness::{
    lambda_practical, lambda_theorem, run_experiment, sweep, theorem_bound, BoundInputs,
    ExperimentConfig, ExperimentRecord, LambdaRule, Method, SweepConfig,
};
pub use likelihood::{
    choice_prob, factored_gradients, factored_objective, factored_value_and_gradients,
    neg_log_likelihood, nll_gradient, FactorPair,
};
pub use linalg::{nuclear_norm, svd_top_k, SvdResult};
pub use mle::{fit_mle, fit_row_newton, MleFit, RowFitOptions, RowFitResult};
pub use param::{rmse, row_center, ParamMatrix};
pub use synthetic::{generate_truth, sample_dataset, seeded_rng, GeneratorConfig};
