//! Synthetic ground-truth matrices and choice datasets.
//!
//! The generator is deterministic per seed and pinned to the ChaCha12 stream
//! cipher RNG (`rand_chacha::ChaCha12Rng`), whose output is documented and
//! stable across platforms and library versions; `StdRng` carries no such
//! guarantee. Draw order is part of the format and must not change:
//!
//! 1. `generate_truth`: m·n standard normal draws, row-major;
//! 2. per observation in `sample_dataset`: one uniform type index, K
//!    `gen_range` draws for the partial Fisher-Yates swaps, then one uniform in
//!    [0, 1) for the inverse-CDF choice.
//!
//! Ground truth: a standard normal matrix is truncated to its top r singular
//! triplets, rescaled to unit sample standard deviation (mean-subtracted,
//! denominator mn−1), then row-centered. The zero matrix therefore has RMSE
//! close to 1 against any generated truth, which calibrates error plots.

use crate::dataset::{ChoiceDataset, ChoiceObservation};
use crate::error::{invalid, Error, Result};
use crate::linalg::svd_top_k;
use crate::param::{row_center, ParamMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Dimensions and seed for synthetic generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Consumer types.
    pub m: usize,
    /// Items.
    pub n: usize,
    /// Target rank of the truth, 1 ≤ r ≤ min(m, n).
    pub r: usize,
    /// Observation count.
    pub t: usize,
    /// Assortment size, 2 ≤ k ≤ n.
    pub k: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(invalid("m and n must be positive"));
        }
        if self.m * self.n < 2 {
            return Err(invalid("need at least two matrix entries"));
        }
        if self.r == 0 || self.r > self.m.min(self.n) {
            return Err(invalid(format!(
                "rank r = {} out of range (need 1 <= r <= {})",
                self.r,
                self.m.min(self.n)
            )));
        }
        if self.k < 2 || self.k > self.n {
            return Err(invalid(format!(
                "assortment size K = {} out of range (need 2 <= K <= {})",
                self.k, self.n
            )));
        }
        if self.t == 0 {
            return Err(invalid("observation count T must be positive"));
        }
        Ok(())
    }
}

/// The pinned generator for all synthetic draws.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Sample standard deviation over all entries (mean subtracted, denominator
/// mn−1).
pub(crate) fn sample_std(matrix: &DMatrix<f64>) -> f64 {
    let count = matrix.len();
    let mean: f64 = matrix.iter().sum::<f64>() / count as f64;
    let ss: f64 = matrix.iter().map(|&v| (v - mean) * (v - mean)).sum();
    (ss / (count - 1) as f64).sqrt()
}

/// Standard normal matrix truncated to rank r and rescaled to unit sample
/// standard deviation (the truth before row-centering).
pub(crate) fn unit_std_low_rank(config: &GeneratorConfig, rng: &mut ChaCha12Rng) -> Result<DMatrix<f64>> {
    let (m, n) = (config.m, config.n);
    let mut theta = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            theta[(i, j)] = rng.sample(StandardNormal);
        }
    }
    if config.r < m.min(n) {
        theta = svd_top_k(&theta, config.r)?.reconstruct();
    }
    let std = sample_std(&theta);
    if std.is_nan() || std <= 1e-12 {
        return Err(Error::Numerical(format!(
            "degenerate sample standard deviation {std}"
        )));
    }
    Ok(theta / std)
}

/// Draws a rank-r row-centered truth matrix with unit pre-centering scale.
pub fn generate_truth(config: &GeneratorConfig, rng: &mut ChaCha12Rng) -> Result<ParamMatrix> {
    config.validate()?;
    Ok(row_center(&unit_std_low_rank(config, rng)?))
}

/// Uniform K-subset sampler with an O(n) pool reused across calls.
///
/// Each call runs K partial Fisher-Yates swaps on the pool; because any
/// starting permutation yields a uniform K-prefix, the pool is not reset
/// between calls.
#[derive(Debug, Clone)]
pub struct AssortmentSampler {
    pool: Vec<usize>,
}

impl AssortmentSampler {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("item count must be positive"));
        }
        Ok(Self {
            pool: (0..n).collect(),
        })
    }

    /// A uniform size-k subset of {0, .., n−1} in ascending order.
    pub fn sample(&mut self, k: usize, rng: &mut ChaCha12Rng) -> Result<Vec<usize>> {
        let n = self.pool.len();
        if k == 0 || k > n {
            return Err(invalid(format!(
                "subset size k = {k} out of range (need 1 <= k <= {n})"
            )));
        }
        for idx in 0..k {
            let j = rng.gen_range(idx..n);
            self.pool.swap(idx, j);
        }
        let mut subset = self.pool[..k].to_vec();
        subset.sort_unstable();
        Ok(subset)
    }
}

/// One-shot uniform K-subset of {0, .., n−1}, ascending.
pub fn sample_assortment(n: usize, k: usize, rng: &mut ChaCha12Rng) -> Result<Vec<usize>> {
    AssortmentSampler::new(n)?.sample(k, rng)
}

/// Choice probabilities over `assortment` for disutility row `i` of `truth`,
/// written into `probs` (stable shifted softmax of the negated entries).
fn assortment_probs(truth: &DMatrix<f64>, i: usize, assortment: &[usize], probs: &mut Vec<f64>) {
    let mut min_theta = f64::INFINITY;
    for &j in assortment {
        min_theta = min_theta.min(truth[(i, j)]);
    }
    probs.clear();
    let mut total = 0.0;
    for &j in assortment {
        let e = (-(truth[(i, j)] - min_theta)).exp();
        total += e;
        probs.push(e);
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
}

/// Samples T observations from the truth: uniform type, uniform K-assortment,
/// inverse-CDF choice walked over the assortment in ascending item order.
pub fn sample_dataset(
    truth: &ParamMatrix,
    config: &GeneratorConfig,
    rng: &mut ChaCha12Rng,
) -> Result<ChoiceDataset> {
    config.validate()?;
    if truth.nrows() != config.m || truth.ncols() != config.n {
        return Err(invalid(format!(
            "truth is {}x{} but config expects {}x{}",
            truth.nrows(),
            truth.ncols(),
            config.m,
            config.n
        )));
    }
    let values = truth.values();
    let mut sampler = AssortmentSampler::new(config.n)?;
    let mut probs: Vec<f64> = Vec::with_capacity(config.k);
    let mut observations = Vec::with_capacity(config.t);
    for _ in 0..config.t {
        let i = rng.gen_range(0..config.m);
        let assortment = sampler.sample(config.k, rng)?;
        assortment_probs(values, i, &assortment, &mut probs);
        let u: f64 = rng.gen();
        let mut chosen = *assortment.last().expect("nonempty assortment");
        let mut cum = 0.0;
        for (&j, &p) in assortment.iter().zip(&probs) {
            cum += p;
            if u < cum {
                chosen = j;
                break;
            }
        }
        observations.push(ChoiceObservation::new(i, chosen, assortment)?);
    }
    ChoiceDataset::new(config.m, config.n, observations)
}
