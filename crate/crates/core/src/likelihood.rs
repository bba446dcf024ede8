//! Choice probabilities, the sample negative log-likelihood, and its gradients,
//! both in the dense parameterization Θ and the factored parameterization
//! Θ = U·Vᵀ.
//!
//! Within an assortment S, type i chooses item j with probability
//! e^{-Θ_ij} / Σ_{l∈S} e^{-Θ_il}. The sample objective is
//!
//!   L_T(Θ) = (1/T) Σ_t log Σ_{j∈S_t} e^{Θ_{i_t j_t} - Θ_{i_t j}},
//!
//! which is nonnegative, convex in Θ, and invariant to adding a constant to any
//! row. All inner sums use the max-shift log-sum-exp trick so extreme entries
//! neither overflow nor underflow. Accumulation across observations is a single
//! sequential pass in dataset order, so results are bitwise reproducible.

use crate::dataset::ChoiceDataset;
use crate::error::{invalid, Result};
use crate::param::ParamMatrix;
use nalgebra::DMatrix;

/// A pair of factor matrices U (m-by-r̃) and V (n-by-r̃) representing Θ = U·Vᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.nrows() == 0 || v.nrows() == 0 {
            return Err(invalid("factor matrices must have positive row counts"));
        }
        if u.ncols() == 0 || u.ncols() != v.ncols() {
            return Err(invalid(format!(
                "factor rank mismatch: U has {} columns, V has {}",
                u.ncols(),
                v.ncols()
            )));
        }
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Inner dimension r̃.
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// The product U·Vᵀ.
    pub fn product(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }
}

/// Probability that `item` is chosen from `assortment` under disutility row
/// `theta_row`. Stable for large spreads: the minimum disutility in the
/// assortment is subtracted before exponentiating.
pub fn choice_prob(theta_row: &[f64], assortment: &[usize], item: usize) -> Result<f64> {
    if assortment.is_empty() {
        return Err(invalid("assortment must be nonempty"));
    }
    if !assortment.contains(&item) {
        return Err(invalid(format!("item {item} is not in the assortment")));
    }
    let n = theta_row.len();
    let mut min_theta = f64::INFINITY;
    for &j in assortment {
        if j >= n {
            return Err(invalid(format!(
                "item index {j} out of range for a row of length {n}"
            )));
        }
        if !theta_row[j].is_finite() {
            return Err(invalid("disutility entries must be finite"));
        }
        min_theta = min_theta.min(theta_row[j]);
    }
    let denom: f64 = assortment
        .iter()
        .map(|&j| (-(theta_row[j] - min_theta)).exp())
        .sum();
    Ok((-(theta_row[item] - min_theta)).exp() / denom)
}

fn check_dims(theta: &ParamMatrix, data: &ChoiceDataset) -> Result<()> {
    if theta.nrows() != data.m() || theta.ncols() != data.n() {
        return Err(invalid(format!(
            "parameter matrix is {}x{} but dataset expects {}x{}",
            theta.nrows(),
            theta.ncols(),
            data.m(),
            data.n()
        )));
    }
    if data.is_empty() {
        return Err(invalid("dataset has no observations"));
    }
    Ok(())
}

/// Mean negative log-likelihood L_T(Θ) of the dataset under Θ. Always ≥ 0.
pub fn neg_log_likelihood(theta: &ParamMatrix, data: &ChoiceDataset) -> Result<f64> {
    check_dims(theta, data)?;
    let values = theta.values();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("disutility entries must be finite"));
    }
    let mut acc = 0.0;
    let mut a: Vec<f64> = Vec::new();
    for obs in data.observations() {
        let i = obs.type_index();
        let theta_chosen = values[(i, obs.chosen_item())];
        a.clear();
        let mut max_a = f64::NEG_INFINITY;
        for &j in obs.assortment() {
            let aj = theta_chosen - values[(i, j)];
            max_a = max_a.max(aj);
            a.push(aj);
        }
        let sum_exp: f64 = a.iter().map(|&aj| (aj - max_a).exp()).sum();
        acc += max_a + sum_exp.ln();
    }
    Ok(acc / data.len() as f64)
}

/// Gradient of L_T with respect to Θ. Each observation touches only row i_t and
/// the columns in its assortment; every row of the result sums to zero up to
/// roundoff.
pub fn nll_gradient(theta: &ParamMatrix, data: &ChoiceDataset) -> Result<DMatrix<f64>> {
    check_dims(theta, data)?;
    let values = theta.values();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("disutility entries must be finite"));
    }
    let inv_t = 1.0 / data.len() as f64;
    let mut grad = DMatrix::zeros(theta.nrows(), theta.ncols());
    let mut w: Vec<f64> = Vec::new();
    for obs in data.observations() {
        let i = obs.type_index();
        let mut min_theta = f64::INFINITY;
        for &j in obs.assortment() {
            min_theta = min_theta.min(values[(i, j)]);
        }
        w.clear();
        let mut kappa = 0.0;
        for &j in obs.assortment() {
            let e = (-(values[(i, j)] - min_theta)).exp();
            kappa += e;
            w.push(e);
        }
        for (&j, &wj) in obs.assortment().iter().zip(&w) {
            let indicator = if j == obs.chosen_item() { 1.0 } else { 0.0 };
            grad[(i, j)] += (indicator - wj / kappa) * inv_t;
        }
    }
    Ok(grad)
}

fn check_factored(factors: &FactorPair, data: &ChoiceDataset, lambda: f64) -> Result<()> {
    if factors.u.nrows() != data.m() || factors.v.nrows() != data.n() {
        return Err(invalid(format!(
            "factors are {}x{} and {}x{} but dataset expects m = {}, n = {}",
            factors.u.nrows(),
            factors.u.ncols(),
            factors.v.nrows(),
            factors.v.ncols(),
            data.m(),
            data.n()
        )));
    }
    if data.is_empty() {
        return Err(invalid("dataset has no observations"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda must be finite and nonnegative"));
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_major(mat: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = mat.shape();
    let mut out = vec![0.0; rows * cols];
    for c in 0..cols {
        let col = mat.column(c);
        for r in 0..rows {
            out[r * cols + c] = col[r];
        }
    }
    out
}

/// L_T(U·Vᵀ) + (λ/2)‖U‖_F² + (λ/2)‖V‖_F², without materializing U·Vᵀ.
///
/// Non-finite factor entries propagate to a non-finite value rather than an
/// error, so step-size searches can probe freely.
pub fn factored_objective(factors: &FactorPair, data: &ChoiceDataset, lambda: f64) -> Result<f64> {
    check_factored(factors, data, lambda)?;
    let r = factors.rank();
    let u_rows = row_major(&factors.u);
    let v_rows = row_major(&factors.v);
    let mut acc = 0.0;
    let mut a: Vec<f64> = Vec::new();
    for obs in data.observations() {
        let ui = &u_rows[obs.type_index() * r..][..r];
        let z_chosen = dot(ui, &v_rows[obs.chosen_item() * r..][..r]);
        a.clear();
        let mut max_a = f64::NEG_INFINITY;
        for &j in obs.assortment() {
            let aj = z_chosen - dot(ui, &v_rows[j * r..][..r]);
            max_a = max_a.max(aj);
            a.push(aj);
        }
        let sum_exp: f64 = a.iter().map(|&aj| (aj - max_a).exp()).sum();
        acc += max_a + sum_exp.ln();
    }
    let reg = 0.5 * lambda * (factors.u.norm_squared() + factors.v.norm_squared());
    Ok(acc / data.len() as f64 + reg)
}

/// `factored_objective` and `factored_gradients` in a single pass over the
/// data, sharing the per-observation exponentials. Returns (f, ∇U, ∇V).
///
/// The returned values are bitwise identical to what the two separate calls
/// produce (the accumulation order is the same); solvers rely on this to fuse
/// a step-size trial with the gradient needed at the accepted iterate. Small
/// ranks dispatch to monomorphized loops, which changes nothing numerically.
pub fn factored_value_and_gradients(
    factors: &FactorPair,
    data: &ChoiceDataset,
    lambda: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    check_factored(factors, data, lambda)?;
    match factors.rank() {
        1 => fused_pass::<1>(factors, data, lambda),
        2 => fused_pass::<2>(factors, data, lambda),
        3 => fused_pass::<3>(factors, data, lambda),
        4 => fused_pass::<4>(factors, data, lambda),
        5 => fused_pass::<5>(factors, data, lambda),
        6 => fused_pass::<6>(factors, data, lambda),
        8 => fused_pass::<8>(factors, data, lambda),
        10 => fused_pass::<10>(factors, data, lambda),
        12 => fused_pass::<12>(factors, data, lambda),
        16 => fused_pass::<16>(factors, data, lambda),
        _ => fused_pass_dyn(factors, data, lambda),
    }
}

#[inline]
fn dot_const<const R: usize>(a: &[f64; R], b: &[f64; R]) -> f64 {
    let mut acc = 0.0;
    for c in 0..R {
        acc += a[c] * b[c];
    }
    acc
}

#[inline]
fn row_ref<const R: usize>(rows: &[f64], idx: usize) -> &[f64; R] {
    rows[idx * R..][..R].try_into().unwrap()
}

fn fused_pass<const R: usize>(
    factors: &FactorPair,
    data: &ChoiceDataset,
    lambda: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = (factors.u.nrows(), factors.v.nrows());
    let u_rows = row_major(&factors.u);
    let v_rows = row_major(&factors.v);
    let mut acc = 0.0;
    let mut gu_acc = vec![0.0; m * R];
    let mut gv_acc = vec![0.0; n * R];
    let mut p: Vec<f64> = Vec::new();
    for obs in data.observations() {
        let i = obs.type_index();
        let ui: &[f64; R] = row_ref(&u_rows, i);
        let z_chosen = dot_const(ui, row_ref(&v_rows, obs.chosen_item()));
        p.clear();
        let mut max_a = f64::NEG_INFINITY;
        for &j in obs.assortment() {
            let aj = z_chosen - dot_const(ui, row_ref(&v_rows, j));
            max_a = max_a.max(aj);
            p.push(aj);
        }
        let mut kappa = 0.0;
        for aj in p.iter_mut() {
            *aj = (*aj - max_a).exp();
            kappa += *aj;
        }
        acc += max_a + kappa.ln();
        let mut s = [0.0; R];
        for (&j, &pj) in obs.assortment().iter().zip(&p) {
            let w = pj / kappa;
            let vj: &[f64; R] = row_ref(&v_rows, j);
            for c in 0..R {
                s[c] += w * vj[c];
            }
            let coeff = if j == obs.chosen_item() { 1.0 } else { 0.0 } - w;
            let gvj: &mut [f64; R] = (&mut gv_acc[j * R..][..R]).try_into().unwrap();
            for c in 0..R {
                gvj[c] += coeff * ui[c];
            }
        }
        let v_chosen: &[f64; R] = row_ref(&v_rows, obs.chosen_item());
        let gui: &mut [f64; R] = (&mut gu_acc[i * R..][..R]).try_into().unwrap();
        for c in 0..R {
            gui[c] += v_chosen[c] - s[c];
        }
    }
    Ok(assemble_fused(factors, data, lambda, acc, &gu_acc, &gv_acc))
}

fn fused_pass_dyn(
    factors: &FactorPair,
    data: &ChoiceDataset,
    lambda: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let r = factors.rank();
    let (m, n) = (factors.u.nrows(), factors.v.nrows());
    let u_rows = row_major(&factors.u);
    let v_rows = row_major(&factors.v);
    let mut acc = 0.0;
    let mut gu_acc = vec![0.0; m * r];
    let mut gv_acc = vec![0.0; n * r];
    let mut p: Vec<f64> = Vec::new();
    let mut s = vec![0.0; r];
    for obs in data.observations() {
        let i = obs.type_index();
        let ui = &u_rows[i * r..][..r];
        let z_chosen = dot(ui, &v_rows[obs.chosen_item() * r..][..r]);
        p.clear();
        let mut max_a = f64::NEG_INFINITY;
        for &j in obs.assortment() {
            let aj = z_chosen - dot(ui, &v_rows[j * r..][..r]);
            max_a = max_a.max(aj);
            p.push(aj);
        }
        let mut kappa = 0.0;
        for aj in p.iter_mut() {
            *aj = (*aj - max_a).exp();
            kappa += *aj;
        }
        acc += max_a + kappa.ln();
        s.fill(0.0);
        for (&j, &pj) in obs.assortment().iter().zip(&p) {
            let w = pj / kappa;
            let vj = &v_rows[j * r..][..r];
            for c in 0..r {
                s[c] += w * vj[c];
            }
            let coeff = if j == obs.chosen_item() { 1.0 } else { 0.0 } - w;
            let gvj = &mut gv_acc[j * r..][..r];
            for c in 0..r {
                gvj[c] += coeff * ui[c];
            }
        }
        let v_chosen = &v_rows[obs.chosen_item() * r..][..r];
        let gui = &mut gu_acc[i * r..][..r];
        for c in 0..r {
            gui[c] += v_chosen[c] - s[c];
        }
    }
    Ok(assemble_fused(factors, data, lambda, acc, &gu_acc, &gv_acc))
}

/// Final assembly shared by the fused kernels: mean the likelihood part, add
/// the ridge term, and fold λ·(U, V) into the gradients.
fn assemble_fused(
    factors: &FactorPair,
    data: &ChoiceDataset,
    lambda: f64,
    acc: f64,
    gu_acc: &[f64],
    gv_acc: &[f64],
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let r = factors.rank();
    let (m, n) = (factors.u.nrows(), factors.v.nrows());
    let reg = 0.5 * lambda * (factors.u.norm_squared() + factors.v.norm_squared());
    let value = acc / data.len() as f64 + reg;
    let inv_t = 1.0 / data.len() as f64;
    let mut gu = DMatrix::zeros(m, r);
    let mut gv = DMatrix::zeros(n, r);
    for i in 0..m {
        for c in 0..r {
            gu[(i, c)] = gu_acc[i * r + c] * inv_t + lambda * factors.u[(i, c)];
        }
    }
    for j in 0..n {
        for c in 0..r {
            gv[(j, c)] = gv_acc[j * r + c] * inv_t + lambda * factors.v[(j, c)];
        }
    }
    (value, gu, gv)
}

/// Gradients of `factored_objective` with respect to U and V:
/// (∇L_T(UVᵀ)·V + λU, ∇L_T(UVᵀ)ᵀ·U + λV), accumulated per observation without
/// forming the m-by-n gradient.
pub fn factored_gradients(
    factors: &FactorPair,
    data: &ChoiceDataset,
    lambda: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_factored(factors, data, lambda)?;
    let r = factors.rank();
    let (m, n) = (factors.u.nrows(), factors.v.nrows());
    let u_rows = row_major(&factors.u);
    let v_rows = row_major(&factors.v);
    let mut gu_acc = vec![0.0; m * r];
    let mut gv_acc = vec![0.0; n * r];
    let mut p: Vec<f64> = Vec::new();
    let mut s = vec![0.0; r];
    for obs in data.observations() {
        let i = obs.type_index();
        let ui = &u_rows[i * r..][..r];
        let z_chosen = dot(ui, &v_rows[obs.chosen_item() * r..][..r]);
        p.clear();
        let mut max_a = f64::NEG_INFINITY;
        for &j in obs.assortment() {
            let aj = z_chosen - dot(ui, &v_rows[j * r..][..r]);
            max_a = max_a.max(aj);
            p.push(aj);
        }
        let mut kappa = 0.0;
        for aj in p.iter_mut() {
            *aj = (*aj - max_a).exp();
            kappa += *aj;
        }
        s.fill(0.0);
        for (&j, &pj) in obs.assortment().iter().zip(&p) {
            let w = pj / kappa;
            let vj = &v_rows[j * r..][..r];
            for c in 0..r {
                s[c] += w * vj[c];
            }
            let coeff = if j == obs.chosen_item() { 1.0 } else { 0.0 } - w;
            let gvj = &mut gv_acc[j * r..][..r];
            for c in 0..r {
                gvj[c] += coeff * ui[c];
            }
        }
        let v_chosen = &v_rows[obs.chosen_item() * r..][..r];
        let gui = &mut gu_acc[i * r..][..r];
        for c in 0..r {
            gui[c] += v_chosen[c] - s[c];
        }
    }
    let inv_t = 1.0 / data.len() as f64;
    let mut gu = DMatrix::zeros(m, r);
    let mut gv = DMatrix::zeros(n, r);
    for i in 0..m {
        for c in 0..r {
            gu[(i, c)] = gu_acc[i * r + c] * inv_t + lambda * factors.u[(i, c)];
        }
    }
    for j in 0..n {
        for c in 0..r {
            gv[(j, c)] = gv_acc[j * r + c] * inv_t + lambda * factors.v[(j, c)];
        }
    }
    Ok((gu, gv))
}
