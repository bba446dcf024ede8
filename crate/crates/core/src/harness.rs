//! Experiment harness: generates synthetic instances, fits one or more
//! estimators, scores them against the known truth, and streams results to CSV.
//!
//! A single experiment fixes (m, n, r, T, K) and runs `replications` seeds;
//! each replication regenerates truth and data, fits every requested method,
//! and produces one record. A sweep is a list of experiments read from a TOML
//! config and written to one CSV, flushed record by record so partial output
//! survives interruption.
//!
//! Each record also carries an a-priori error bound computed from the truth
//! (scale, rank tail, and the instance dimensions). The estimate landing above
//! that bound would mean the estimator or the bound arithmetic is broken, so
//! the harness treats it as a hard error rather than a data point.

use crate::dataset::ChoiceDataset;
use crate::error::{invalid, Error, Result};
use crate::fgd::{self, SolverConfig};
use crate::mle::{fit_mle, RowFitOptions};
use crate::param::{rmse, row_center, ParamMatrix};
use crate::synthetic::{generate_truth, sample_dataset, seeded_rng, GeneratorConfig};
use crate::linalg::svd_top_k;
use nalgebra::DMatrix;
use serde::Deserialize;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

/// How the regularization weight is chosen for a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// The analysis-backed schedule 32·√(K·d·ln d / (m·n·T)) with d = (m+n)/2.
    Theorem,
    /// The theorem schedule divided by 256; the analysis constant is far too
    /// conservative at practical sizes.
    Practical,
    /// A fixed value.
    Explicit(f64),
}

impl LambdaRule {
    pub fn lambda_for(&self, g: &GeneratorConfig) -> Result<f64> {
        match self {
            LambdaRule::Theorem => lambda_theorem(g.m, g.n, g.t, g.k),
            LambdaRule::Practical => lambda_practical(g.m, g.n, g.t, g.k),
            LambdaRule::Explicit(v) => Ok(*v),
        }
    }
}

fn check_lambda_dims(m: usize, n: usize, t: usize, k: usize) -> Result<f64> {
    if m == 0 || n == 0 || t == 0 || k == 0 {
        return Err(invalid("lambda schedule inputs must be positive"));
    }
    let d = (m + n) as f64 / 2.0;
    if d <= 1.0 {
        return Err(invalid(format!("d = {d} must exceed 1 (ln d must be positive)")));
    }
    Ok(d)
}

/// Theorem-scale regularization weight: 32·√(K·d·ln d / (m·n·T)), d = (m+n)/2.
pub fn lambda_theorem(m: usize, n: usize, t: usize, k: usize) -> Result<f64> {
    let d = check_lambda_dims(m, n, t, k)?;
    Ok(32.0 * (k as f64 * d * d.ln() / (m as f64 * n as f64 * t as f64)).sqrt())
}

/// `lambda_theorem` scaled down by 256 (a power of two, so the ratio is exact).
pub fn lambda_practical(m: usize, n: usize, t: usize, k: usize) -> Result<f64> {
    Ok(lambda_theorem(m, n, t, k)? / 256.0)
}

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Fgd,
    Mle,
    Zero,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fgd => "fgd",
            Method::Mle => "mle",
            Method::Zero => "zero",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgd" => Ok(Method::Fgd),
            "mle" => Ok(Method::Mle),
            "zero" => Ok(Method::Zero),
            other => Err(invalid(format!(
                "unknown method `{other}` (expected fgd, mle, or zero)"
            ))),
        }
    }
}

/// One experiment: an instance shape plus solver settings and replication plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    /// Factor rank for the low-rank solver; defaults to 2r.
    pub r_tilde: Option<usize>,
    pub beta_dec: f64,
    pub tau: f64,
    pub max_outer_iters: usize,
    pub lambda_rule: LambdaRule,
    pub methods: Vec<Method>,
    pub replications: usize,
    /// Replication seeds are base_seed, base_seed + 1, ...
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn new(generator: GeneratorConfig) -> Self {
        Self {
            generator,
            r_tilde: None,
            beta_dec: 0.8,
            tau: 1e-10,
            max_outer_iters: 10_000,
            lambda_rule: LambdaRule::Practical,
            methods: vec![Method::Fgd, Method::Mle, Method::Zero],
            replications: 3,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        let r_tilde = self.effective_r_tilde();
        let cap = self.generator.m.min(self.generator.n);
        if r_tilde == 0 || r_tilde > cap {
            return Err(invalid(format!(
                "r_tilde = {r_tilde} out of range (need 1 <= r_tilde <= {cap})"
            )));
        }
        if !(self.beta_dec > 0.0 && self.beta_dec < 1.0) {
            return Err(invalid("beta_dec must lie strictly between 0 and 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau must be finite and positive"));
        }
        if self.max_outer_iters == 0 {
            return Err(invalid("max_outer_iters must be positive"));
        }
        if self.replications == 0 {
            return Err(invalid("replications must be positive"));
        }
        // an empty methods list is allowed: the experiment emits no records
        if let LambdaRule::Explicit(v) = self.lambda_rule {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("lambda must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn effective_r_tilde(&self) -> usize {
        self.r_tilde
            .unwrap_or_else(|| (2 * self.generator.r).min(self.generator.m.min(self.generator.n)))
    }
}

/// Inputs to the a-priori error bound, measured from a truth matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// √(mn)·‖Θ*‖_∞, the incoherence-style scale of the truth.
    pub alpha: f64,
    pub k: usize,
    /// Harmonic dimension (m+n)/2.
    pub d: f64,
    pub t: usize,
    /// Rank at which the spectrum is split for the tail term.
    pub r: usize,
    /// Sum of singular values beyond the first r.
    pub sigma_tail: f64,
    pub m: usize,
    pub n: usize,
}

impl BoundInputs {
    /// Measures alpha and the spectral tail from the truth matrix.
    pub fn from_truth(truth: &ParamMatrix, r: usize, t: usize, k: usize) -> Result<Self> {
        let (m, n) = (truth.nrows(), truth.ncols());
        if r == 0 || r > m.min(n) {
            return Err(invalid(format!(
                "r = {r} out of range (need 1 <= r <= {})",
                m.min(n)
            )));
        }
        if t == 0 || k == 0 {
            return Err(invalid("t and k must be positive"));
        }
        let max_abs = truth.values().iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        let alpha = ((m * n) as f64).sqrt() * max_abs;
        let svd = svd_top_k(truth.values(), m.min(n))?;
        let sigma_tail: f64 = svd.singular_values.iter().skip(r).sum();
        Ok(Self {
            alpha,
            k,
            d: (m + n) as f64 / 2.0,
            t,
            r,
            sigma_tail,
            m,
            n,
        })
    }
}

/// High-probability upper bound on ‖Θ̂ − Θ*‖_F for the regularized low-rank
/// estimator at the theorem-scale lambda:
///
///   2048·α·e^{6α/√(mn)}·max{ √(K³d·ln d/T)·√r, (K³d·ln d/T)^{1/4}·σ_tail^{1/4} }.
///
/// Wildly conservative at desk scales; its use is as a sanity ceiling, not a
/// sharp prediction. Logs a warning when T exceeds d²·ln d, outside the regime
/// the bound is calibrated for.
pub fn theorem_bound(inputs: &BoundInputs) -> Result<f64> {
    let BoundInputs { alpha, k, d, t, r, sigma_tail, m, n } = *inputs;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha must be finite and nonnegative"));
    }
    if !(sigma_tail >= 0.0 && sigma_tail.is_finite()) {
        return Err(invalid("sigma_tail must be finite and nonnegative"));
    }
    if d <= 1.0 || t == 0 || k == 0 || r == 0 {
        return Err(invalid("bound inputs must have d > 1 and positive t, k, r"));
    }
    let t_f = t as f64;
    if t_f > d * d * d.ln() {
        log::warn!(
            "T = {t} exceeds d^2 ln d = {:.3e}; the error bound is used outside its regime",
            d * d * d.ln()
        );
    }
    let k3 = (k as f64).powi(3);
    let rate = k3 * d * d.ln() / t_f;
    let estimation = rate.sqrt() * (r as f64).sqrt();
    let approximation = rate.powf(0.25) * sigma_tail.powf(0.25);
    let mn = (m * n) as f64;
    Ok(2048.0 * alpha * (6.0 * alpha / mn.sqrt()).exp() * estimation.max(approximation))
}

/// One CSV row: an instance, a method, and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub t: usize,
    pub k: usize,
    pub method: Method,
    pub lambda: f64,
    pub seed: u64,
    pub rmse: f64,
    pub frob_error: f64,
    pub theorem_bound: f64,
    pub outer_iters: usize,
    pub wall_time_seconds: f64,
    pub converged: bool,
}

pub const CSV_HEADER: &str =
    "m,n,r,T,K,method,lambda,seed,rmse,frob_error,theorem_bound,outer_iters,wall_time_seconds,converged";

fn format_csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl ExperimentRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.m,
            self.n,
            self.r,
            self.t,
            self.k,
            self.method,
            format_csv_float(self.lambda),
            self.seed,
            format_csv_float(self.rmse),
            format_csv_float(self.frob_error),
            format_csv_float(self.theorem_bound),
            self.outer_iters,
            format_csv_float(self.wall_time_seconds),
            self.converged
        )
    }

    pub fn parse_csv_row(line: &str, lineno: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(crate::error::parse_err(
                lineno,
                format!("expected 14 fields, found {}", fields.len()),
            ));
        }
        let err = |field: &str, value: &str| {
            crate::error::parse_err(lineno, format!("invalid {field} `{value}`"))
        };
        let parse_usize =
            |field: &str, v: &str| v.parse::<usize>().map_err(|_| err(field, v));
        let parse_f64 = |field: &str, v: &str| v.parse::<f64>().map_err(|_| err(field, v));
        Ok(Self {
            m: parse_usize("m", fields[0])?,
            n: parse_usize("n", fields[1])?,
            r: parse_usize("r", fields[2])?,
            t: parse_usize("T", fields[3])?,
            k: parse_usize("K", fields[4])?,
            method: fields[5].parse()?,
            lambda: parse_f64("lambda", fields[6])?,
            seed: fields[7].parse::<u64>().map_err(|_| err("seed", fields[7]))?,
            rmse: parse_f64("rmse", fields[8])?,
            frob_error: parse_f64("frob_error", fields[9])?,
            theorem_bound: parse_f64("theorem_bound", fields[10])?,
            outer_iters: parse_usize("outer_iters", fields[11])?,
            wall_time_seconds: parse_f64("wall_time_seconds", fields[12])?,
            converged: match fields[13] {
                "true" => true,
                "false" => false,
                v => return Err(err("converged", v)),
            },
        })
    }

    /// Parses a full CSV document produced by the harness (header included).
    pub fn parse_csv(text: &str) -> Result<Vec<Self>> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| crate::error::parse_err(1, "missing header line"))?;
        if header != CSV_HEADER {
            return Err(crate::error::parse_err(
                1,
                format!("unexpected header `{header}`"),
            ));
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            records.push(Self::parse_csv_row(line, idx + 1)?);
        }
        Ok(records)
    }
}

/// Runs one experiment, returning one record per (replication, method).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let mut records = Vec::new();
    run_experiment_with(config, |record| {
        records.push(record);
        Ok(())
    })?;
    Ok(records)
}

/// Like `run_experiment`, but hands each record to `sink` as soon as it exists.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut sink: impl FnMut(ExperimentRecord) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    let g = &config.generator;
    let lambda = config.lambda_rule.lambda_for(g)?;
    for rep in 0..config.replications {
        let seed = config.base_seed + rep as u64;
        let mut rng = seeded_rng(seed);
        let gen = GeneratorConfig { seed, ..*g };
        let truth = generate_truth(&gen, &mut rng)?;
        let data = sample_dataset(&truth, &gen, &mut rng)?;
        let bound = theorem_bound(&BoundInputs::from_truth(&truth, g.r, g.t, g.k)?)?;
        for &method in &config.methods {
            let record = run_method(config, method, lambda, seed, &truth, &data, bound)?;
            sink(record)?;
        }
    }
    Ok(())
}

fn run_method(
    config: &ExperimentConfig,
    method: Method,
    lambda: f64,
    seed: u64,
    truth: &ParamMatrix,
    data: &ChoiceDataset,
    bound: f64,
) -> Result<ExperimentRecord> {
    let g = &config.generator;
    let start = Instant::now();
    let fitted: Result<(ParamMatrix, usize, bool)> = match method {
        Method::Fgd => {
            let solver = SolverConfig {
                lambda,
                r_tilde: config.effective_r_tilde(),
                beta_dec: config.beta_dec,
                tau: config.tau,
                max_outer_iters: config.max_outer_iters,
                max_linesearch_iters: 100,
            };
            fgd::fit(data, &solver).map(|f| (f.estimate, f.outer_iters, f.converged))
        }
        Method::Mle => fit_mle(data, &RowFitOptions::default()).map(|f| {
            let iterations = f.total_iterations();
            let converged = f.all_converged();
            (f.estimate, iterations, converged)
        }),
        Method::Zero => Ok((row_center(&DMatrix::zeros(g.m, g.n)), 0, true)),
    };
    let mut record = ExperimentRecord {
        m: g.m,
        n: g.n,
        r: g.r,
        t: g.t,
        k: g.k,
        method,
        lambda,
        seed,
        rmse: f64::NAN,
        frob_error: f64::NAN,
        theorem_bound: bound,
        outer_iters: 0,
        wall_time_seconds: 0.0,
        converged: false,
    };
    match fitted {
        Ok((estimate, outer_iters, converged)) => {
            record.wall_time_seconds = start.elapsed().as_secs_f64();
            record.rmse = rmse(estimate.values(), truth.values())?;
            record.frob_error = (estimate.values() - truth.values()).norm();
            record.outer_iters = outer_iters;
            record.converged = converged;
            if record.frob_error > bound {
                return Err(Error::Numerical(format!(
                    "estimation error {:.6e} exceeds the a-priori bound {bound:.6e} \
                     (method {method}, seed {seed}); this should be impossible",
                    record.frob_error
                )));
            }
        }
        Err(e) => {
            // a failed fit becomes a non-converged record instead of killing
            // the whole sweep
            record.wall_time_seconds = start.elapsed().as_secs_f64();
            log::warn!("{method} fit failed (seed {seed}): {e}");
        }
    }
    Ok(record)
}

/// Sweep configuration, usually read from TOML.
///
/// Top-level keys set defaults; each `[[grid]]` block defines one instance
/// shape and may override any of them.
///
/// ```toml
/// replications = 3
/// base_seed = 7
/// methods = ["fgd", "zero"]
/// lambda_rule = "practical"
///
/// [[grid]]
/// m = 40
/// n = 40
/// r = 2
/// T = 20000
/// K = 5
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub replications: Option<usize>,
    pub base_seed: Option<u64>,
    pub methods: Option<Vec<String>>,
    /// "theorem" or "practical"; mutually exclusive with `lambda`.
    pub lambda_rule: Option<String>,
    pub lambda: Option<f64>,
    pub beta_dec: Option<f64>,
    pub tau: Option<f64>,
    pub r_tilde: Option<usize>,
    pub max_outer_iters: Option<usize>,
    #[serde(default)]
    pub grid: Vec<SweepCell>,
}

/// One instance shape in a sweep, with optional per-cell overrides.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub replications: Option<usize>,
    pub base_seed: Option<u64>,
    pub methods: Option<Vec<String>>,
    pub lambda_rule: Option<String>,
    pub lambda: Option<f64>,
    pub beta_dec: Option<f64>,
    pub tau: Option<f64>,
    pub r_tilde: Option<usize>,
    pub max_outer_iters: Option<usize>,
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|s| s.parse()).collect()
}

fn parse_lambda_rule(rule: Option<&str>, explicit: Option<f64>) -> Result<LambdaRule> {
    match (rule, explicit) {
        (Some(_), Some(_)) => Err(invalid(
            "lambda_rule and lambda are mutually exclusive; set one",
        )),
        (Some("theorem"), None) => Ok(LambdaRule::Theorem),
        (Some("practical"), None) => Ok(LambdaRule::Practical),
        (Some(other), None) => Err(invalid(format!(
            "unknown lambda_rule `{other}` (expected theorem or practical)"
        ))),
        (None, Some(v)) => Ok(LambdaRule::Explicit(v)),
        (None, None) => Ok(LambdaRule::Practical),
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: SweepConfig =
            toml::from_str(text).map_err(|e| invalid(format!("sweep config: {e}")))?;
        if config.grid.is_empty() {
            return Err(invalid("sweep config has no [[grid]] entries"));
        }
        Ok(config)
    }

    /// Expands the grid into per-cell experiment configs, validating each.
    pub fn experiments(&self) -> Result<Vec<ExperimentConfig>> {
        let mut out = Vec::with_capacity(self.grid.len());
        for (idx, cell) in self.grid.iter().enumerate() {
            let label = |e: Error| invalid(format!("grid entry {}: {e}", idx + 1));
            let generator = GeneratorConfig {
                m: cell.m,
                n: cell.n,
                r: cell.r,
                t: cell.t,
                k: cell.k,
                seed: 0,
            };
            let methods = match cell.methods.as_ref().or(self.methods.as_ref()) {
                Some(names) => parse_methods(names).map_err(label)?,
                None => vec![Method::Fgd, Method::Mle, Method::Zero],
            };
            let lambda_rule = parse_lambda_rule(
                cell.lambda_rule.as_deref().or(self.lambda_rule.as_deref()),
                cell.lambda.or(self.lambda),
            )
            .map_err(label)?;
            let config = ExperimentConfig {
                generator,
                r_tilde: cell.r_tilde.or(self.r_tilde),
                beta_dec: cell.beta_dec.or(self.beta_dec).unwrap_or(0.8),
                tau: cell.tau.or(self.tau).unwrap_or(1e-10),
                max_outer_iters: cell
                    .max_outer_iters
                    .or(self.max_outer_iters)
                    .unwrap_or(10_000),
                lambda_rule,
                methods,
                replications: cell.replications.or(self.replications).unwrap_or(3),
                base_seed: cell.base_seed.or(self.base_seed).unwrap_or(0),
            };
            config.validate().map_err(label)?;
            out.push(config);
        }
        Ok(out)
    }
}

/// Runs every experiment in the sweep, streaming records to `out` as CSV.
///
/// The header is written and flushed before any computation, and each record is
/// flushed as soon as it is scored, so an interrupted sweep leaves a readable
/// prefix of the full results.
pub fn sweep(config: &SweepConfig, out_path: impl AsRef<Path>) -> Result<()> {
    sweep_with(config, out_path, |_| Ok(()))
}

/// Like `sweep`, with a callback invoked after each record is written.
pub fn sweep_with(
    config: &SweepConfig,
    out_path: impl AsRef<Path>,
    mut on_record: impl FnMut(&ExperimentRecord) -> Result<()>,
) -> Result<()> {
    let experiments = config.experiments()?;
    let file = File::create(out_path)?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "{CSV_HEADER}")?;
    writer.flush()?;
    for experiment in &experiments {
        run_experiment_with(experiment, |record| {
            writeln!(writer, "{}", record.to_csv_row())?;
            writer.flush()?;
            on_record(&record)
        })?;
    }
    Ok(())
}
