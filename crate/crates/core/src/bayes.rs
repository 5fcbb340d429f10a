//! Bayes and maximum-likelihood criteria: posterior risk operators, average
//! risk, the stationarity/nonnegativity certificate, a fixed-point optimizer for
//! minimum-error discrimination, the binary Helstrom oracle and the coherent
//! maximum-likelihood certificate.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{displaced_thermal_block, DensityOperator};
use crate::error::{invalid, Error, Result};
use crate::fock::{
    coherent_state, hermitian_spectrum, normal_ordered_gaussian, spectrum_of_hermitian_matrix,
    FockDim, TruncatedOperator,
};
use crate::measurement::{identity_resolution_report, DiscretePOVM};

/// Allowed distance of the prior total from one.
pub const PRIOR_SUM_TOL: f64 = 1e-12;

/// Eigenvalues below this fraction of the largest are treated as zero when
/// inverting.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-12;

/// Coherent states used by the ML certificate must keep their norm deficit
/// below this.
pub const ML_NORM_DEFICIT: f64 = 1e-8;

/// Finite set of hypotheses with priors and a decision cost matrix.
///
/// `cost[j][k]` is the penalty for deciding `k` when `j` is true.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleDocument", into = "EnsembleDocument")]
pub struct HypothesisEnsemble {
    states: Vec<DensityOperator>,
    priors: Vec<f64>,
    cost: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleDocument {
    states: Vec<DensityOperator>,
    priors: Vec<f64>,
    cost: Vec<Vec<f64>>,
}

impl TryFrom<EnsembleDocument> for HypothesisEnsemble {
    type Error = Error;

    fn try_from(d: EnsembleDocument) -> Result<Self> {
        HypothesisEnsemble::new(d.states, d.priors, d.cost)
    }
}

impl From<HypothesisEnsemble> for EnsembleDocument {
    fn from(e: HypothesisEnsemble) -> Self {
        EnsembleDocument {
            states: e.states,
            priors: e.priors,
            cost: e.cost,
        }
    }
}

impl HypothesisEnsemble {
    pub fn new(states: Vec<DensityOperator>, priors: Vec<f64>, cost: Vec<Vec<f64>>) -> Result<Self> {
        if states.is_empty() {
            return invalid("an ensemble needs at least one hypothesis");
        }
        if priors.len() != states.len() || cost.len() != states.len() {
            return invalid("states, priors and cost rows must have equal length");
        }
        let dim = states[0].dim();
        if let Some(s) = states.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim.size(),
                found: s.dim().size(),
            });
        }
        if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid("priors must be nonnegative");
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOL {
            return invalid(format!("priors sum to {total}, not 1"));
        }
        let outcomes = cost[0].len();
        if outcomes == 0 || cost.iter().any(|row| row.len() != outcomes) {
            return invalid("cost matrix must be rectangular with at least one column");
        }
        if cost.iter().flatten().any(|c| !c.is_finite()) {
            return invalid("cost entries must be finite");
        }
        Ok(Self {
            states,
            priors,
            cost,
        })
    }

    /// Minimum-error cost `c(j, k) = -delta_jk`.
    pub fn min_error(states: Vec<DensityOperator>, priors: Vec<f64>) -> Result<Self> {
        let n = states.len();
        let cost = (0..n)
            .map(|j| (0..n).map(|k| if j == k { -1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(states, priors, cost)
    }

    pub fn dim(&self) -> FockDim {
        self.states[0].dim()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn outcomes(&self) -> usize {
        self.cost[0].len()
    }

    pub fn states(&self) -> &[DensityOperator] {
        &self.states
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn cost(&self) -> &[Vec<f64>] {
        &self.cost
    }

    /// Splits a square cost as `c(j, k) = a_j - b_j delta_jk` with `b_j > 0`.
    /// Returns `(a, b)` or `None` when the cost has another shape.
    pub fn min_error_reduction(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.len();
        if self.outcomes() != n {
            return None;
        }
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for (j, row) in self.cost.iter().enumerate() {
            let off = if n > 1 { row[(j + 1) % n] } else { 0.0 };
            if row.iter().enumerate().any(|(k, &c)| k != j && c != off) {
                return None;
            }
            let gain = off - row[j];
            if gain <= 0.0 {
                return None;
            }
            a.push(off);
            b.push(gain);
        }
        Some((a, b))
    }
}

/// `R_k = sum_j c(j, k) p_j rho_j`.
pub fn posterior_risk_operators(ensemble: &HypothesisEnsemble) -> Vec<TruncatedOperator> {
    let dim = ensemble.dim();
    (0..ensemble.outcomes())
        .map(|k| {
            let mut acc = DMatrix::zeros(dim.size(), dim.size());
            for (j, rho) in ensemble.states.iter().enumerate() {
                let c = ensemble.cost[j][k] * ensemble.priors[j];
                if c != 0.0 {
                    acc += rho.operator().matrix() * C64::new(c, 0.0);
                }
            }
            TruncatedOperator::from_matrix_unchecked(dim, acc).hermitian_part()
        })
        .collect()
}

fn check_compatible(povm: &DiscretePOVM, ensemble: &HypothesisEnsemble) -> Result<()> {
    if povm.dim() != ensemble.dim() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.dim().size(),
            found: povm.dim().size(),
        });
    }
    if povm.len() != ensemble.outcomes() {
        return invalid(format!(
            "POVM has {} outcomes but the cost matrix has {} columns",
            povm.len(),
            ensemble.outcomes()
        ));
    }
    Ok(())
}

/// `sum_k Tr(R_k w_k E_k)`; equals minus the success probability for the
/// minimum-error cost.
pub fn average_risk(povm: &DiscretePOVM, ensemble: &HypothesisEnsemble) -> Result<f64> {
    check_compatible(povm, ensemble)?;
    let risks = posterior_risk_operators(ensemble);
    Ok(risks
        .iter()
        .zip(povm.elements().iter().zip(povm.weights()))
        .map(|(r, (e, &w))| w * e.trace_with(r))
        .sum())
}

/// Pass/fail of the two optimality conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    /// `(R_k - Lambda) Pi_k = 0` and `Lambda` Hermitian.
    pub stationarity: bool,
    /// `R_k - Lambda >= 0` for every `k`.
    pub nonnegativity: bool,
}

impl Verdicts {
    pub fn both(&self) -> bool {
        self.stationarity && self.nonnegativity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub lambda_op: TruncatedOperator,
    pub lambda_hermiticity: f64,
    pub stationarity_residuals: Vec<f64>,
    pub min_eig_b: Vec<f64>,
    pub tol: f64,
    pub verdict: Verdicts,
}

impl OptimalityReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_min_eig(&self) -> f64 {
        self.min_eig_b.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates both optimality conditions for `povm`. A failing certificate is
/// returned as a report, not as an error.
pub fn optimality_check(
    povm: &DiscretePOVM,
    ensemble: &HypothesisEnsemble,
    tol: f64,
) -> Result<OptimalityReport> {
    check_compatible(povm, ensemble)?;
    let dim = ensemble.dim();
    let risks = posterior_risk_operators(ensemble);
    let effective: Vec<TruncatedOperator> =
        (0..povm.len()).map(|k| povm.effective_operator(k)).collect();
    let mut lambda = DMatrix::zeros(dim.size(), dim.size());
    for (r, e) in risks.iter().zip(&effective) {
        lambda += r.matrix() * e.matrix();
    }
    let lambda = TruncatedOperator::from_matrix_unchecked(dim, lambda);
    let lambda_hermiticity = lambda.hermiticity_defect();
    let lambda_op = lambda.hermitian_part();
    let per_outcome: Vec<(f64, f64)> = risks
        .par_iter()
        .zip(effective.par_iter())
        .map(|(r, e)| {
            let b = r - &lambda_op;
            let residual = (&b * e).max_abs();
            let min_eig = hermitian_spectrum(&b).map(|s| s.min());
            min_eig.map(|m| (residual, m))
        })
        .collect::<Result<_>>()?;
    let (stationarity_residuals, min_eig_b): (Vec<f64>, Vec<f64>) =
        per_outcome.into_iter().unzip();
    let verdict = Verdicts {
        stationarity: lambda_hermiticity <= tol && stationarity_residuals.iter().all(|&r| r <= tol),
        nonnegativity: min_eig_b.iter().all(|&m| m >= -tol),
    };
    Ok(OptimalityReport {
        lambda_op,
        lambda_hermiticity,
        stationarity_residuals,
        min_eig_b,
        tol,
        verdict,
    })
}

/// Result of [`optimize_min_error`].
#[derive(Clone, Debug)]
pub struct OptimizerOutput {
    pub povm: DiscretePOVM,
    pub report: OptimalityReport,
    /// Average risk after each iteration.
    pub risk_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Dimension of the support of the weighted states.
    pub support_rank: usize,
}

/// Fixed-point iteration `Pi_k <- T^-1/2 G_k Pi_k G_k T^-1/2`,
/// `T = sum_k G_k Pi_k G_k`, `G_k = q_k rho_k`, started from `Pi_k = I/K`.
///
/// Costs of the form `c(j, k) = a_j - b_j delta_jk` are handled with
/// `q_j = p_j b_j`. The iteration runs on the support of `sum_k q_k rho_k`;
/// the orthogonal complement is assigned to outcome 0.
pub fn optimize_min_error(
    ensemble: &HypothesisEnsemble,
    max_iters: usize,
    tol: f64,
) -> Result<OptimizerOutput> {
    let k_count = ensemble.len();
    if k_count < 2 {
        return invalid("the optimizer needs at least two hypotheses");
    }
    let (offsets, gains) = ensemble.min_error_reduction().ok_or_else(|| {
        Error::InvalidArgument("cost is not reducible to minimum-error form".into())
    })?;
    let dim = ensemble.dim();
    let n = dim.size();
    let base: f64 = ensemble
        .priors
        .iter()
        .zip(&offsets)
        .map(|(p, a)| p * a)
        .sum();

    let weighted: Vec<DMatrix<C64>> = ensemble
        .states
        .iter()
        .zip(ensemble.priors.iter().zip(&gains))
        .map(|(rho, (p, b))| rho.operator().matrix() * C64::new(p * b, 0.0))
        .collect();
    let mut mixture = DMatrix::zeros(n, n);
    for g in &weighted {
        mixture += g;
    }
    let mix_spec = spectrum_of_hermitian_matrix(mixture)?;
    let top = mix_spec.max_abs();
    if !(top > 0.0) {
        return Err(Error::Numerical("weighted states have no support".into()));
    }
    let support: Vec<usize> = (0..n)
        .filter(|&i| mix_spec.values[i] > PSEUDO_INVERSE_CUTOFF * top)
        .collect();
    let r = support.len();
    let v = DMatrix::from_fn(n, r, |i, j| mix_spec.vectors[(i, support[j])]);
    let vh = v.adjoint();
    let g: Vec<DMatrix<C64>> = weighted.iter().map(|w| &vh * w * &v).collect();

    let gain_of = |pis: &[DMatrix<C64>]| -> f64 {
        g.iter()
            .zip(pis)
            .map(|(gk, pk)| (gk * pk).trace().re)
            .sum()
    };
    let mut pis: Vec<DMatrix<C64>> =
        vec![DMatrix::identity(r, r) * C64::new(1.0 / k_count as f64, 0.0); k_count];
    let mut risk_trace = Vec::new();
    let mut previous = base - gain_of(&pis);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let sandwiches: Vec<DMatrix<C64>> = g
            .iter()
            .zip(&pis)
            .map(|(gk, pk)| gk * pk * gk)
            .collect();
        let mut t = DMatrix::zeros(r, r);
        for s in &sandwiches {
            t += s;
        }
        let t = (&t + t.adjoint()) * C64::new(0.5, 0.0);
        let t_spec = spectrum_of_hermitian_matrix(t)?;
        let t_top = t_spec.max_abs();
        if !(t_top > 0.0) || t_spec.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "T is singular at iteration {iterations} (largest eigenvalue {t_top:e}, support rank {r})"
            )));
        }
        let cut = PSEUDO_INVERSE_CUTOFF * t_top;
        let t_inv_sqrt = t_spec.map(|x| if x > cut { 1.0 / x.sqrt() } else { 0.0 });
        let t_range = t_spec.map(|x| if x > cut { 1.0 } else { 0.0 });
        pis = sandwiches
            .iter()
            .map(|s| {
                let p = &t_inv_sqrt * s * &t_inv_sqrt;
                (&p + p.adjoint()) * C64::new(0.5, 0.0)
            })
            .collect();
        pis[0] += DMatrix::identity(r, r) - t_range;
        let risk = base - gain_of(&pis);
        risk_trace.push(risk);
        let step = (previous - risk).abs();
        previous = risk;
        if step < tol {
            converged = true;
            break;
        }
    }

    let complement = DMatrix::identity(n, n) - &v * &vh;
    let ops = pis
        .iter()
        .enumerate()
        .map(|(k, pk)| {
            let mut full = &v * pk * &vh;
            if k == 0 {
                full += &complement;
            }
            TruncatedOperator::from_matrix(dim, full)
        })
        .collect::<Result<Vec<_>>>()?;
    let povm = DiscretePOVM::from_operators(dim, ops)?;
    let report = optimality_check(&povm, ensemble, tol)?;
    Ok(OptimizerOutput {
        povm,
        report,
        risk_trace,
        iterations,
        converged,
        support_rank: r,
    })
}

/// Binary minimum-error solution from the spectrum of
/// `Delta = p1 rho1 - p0 rho0`.
#[derive(Clone, Debug)]
pub struct HelstromResult {
    /// `(1 - sum |lambda_i|) / 2`.
    pub p_err: f64,
    /// `p0 Tr(rho0 Pi1) + p1 Tr(rho1 Pi0)` for the returned projectors.
    pub p_err_direct: f64,
    pub consistency_defect: f64,
    /// `{Pi0, Pi1}` with the kernel of `Delta` in `Pi0`.
    pub povm: DiscretePOVM,
}

pub fn helstrom_binary(
    p0: f64,
    rho0: &DensityOperator,
    p1: f64,
    rho1: &DensityOperator,
) -> Result<HelstromResult> {
    helstrom_with_kernel(p0, rho0, p1, rho1, false)
}

/// Same as [`helstrom_binary`] with an explicit choice for the kernel of
/// `Delta`: outcome 1 when `kernel_to_one`, else outcome 0.
pub fn helstrom_with_kernel(
    p0: f64,
    rho0: &DensityOperator,
    p1: f64,
    rho1: &DensityOperator,
    kernel_to_one: bool,
) -> Result<HelstromResult> {
    if !(p0 >= 0.0 && p1 >= 0.0) || (p0 + p1 - 1.0).abs() > PRIOR_SUM_TOL {
        return invalid(format!("priors {p0} + {p1} must be nonnegative and sum to 1"));
    }
    if rho0.dim() != rho1.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho0.dim().size(),
            found: rho1.dim().size(),
        });
    }
    let dim = rho0.dim();
    let delta = &rho1.operator().scale(p1) - &rho0.operator().scale(p0);
    let spec = hermitian_spectrum(&delta)?;
    let zero = 1e-14 * spec.max_abs().max(1e-300);
    let pi1 = spec.map(|x| {
        if x > zero || (kernel_to_one && x.abs() <= zero) {
            1.0
        } else {
            0.0
        }
    });
    let pi1 = TruncatedOperator::from_matrix(dim, pi1)?.hermitian_part();
    let pi0 = (&TruncatedOperator::identity(dim) - &pi1).hermitian_part();
    let trace_norm: f64 = spec.values.iter().map(|x| x.abs()).sum();
    let p_err = 0.5 * (1.0 - trace_norm);
    let p_err_direct =
        p0 * rho0.operator().trace_product(&pi1).re + p1 * rho1.operator().trace_product(&pi0).re;
    let povm = DiscretePOVM::from_operators(dim, vec![pi0, pi1])?;
    Ok(HelstromResult {
        p_err,
        p_err_direct,
        consistency_defect: (p_err - p_err_direct).abs(),
        povm,
    })
}

/// Certificate data at one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MlPoint {
    pub beta: C64,
    /// `|| rho(beta)|beta> - L^-1 |beta> ||`.
    pub eigen_residual: f64,
    /// Smallest eigenvalue of `L^-1 I - L^-1 :exp(-(b - beta)^dagger (b - beta)/L):`.
    pub min_eig_b: f64,
    pub norm_deficit: f64,
}

/// Maximum-likelihood optimality of the coherent measurement on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MlCertificate {
    pub l: f64,
    pub dim: FockDim,
    /// `Lambda = -L^-1 I`.
    pub lambda: f64,
    pub tol: f64,
    pub points: Vec<MlPoint>,
    pub worst_eigen_residual: f64,
    pub worst_min_eig_b: f64,
    pub pass: bool,
}

pub fn coherent_ml_certificate(
    l: f64,
    beta_grid: &[C64],
    dim: FockDim,
    tol: f64,
) -> Result<MlCertificate> {
    if !(l >= 1.0 && l.is_finite()) {
        return invalid(format!("L = {l} must be at least 1"));
    }
    if beta_grid.is_empty() {
        return invalid("beta grid is empty");
    }
    let points = beta_grid
        .par_iter()
        .map(|&beta| {
            let v = coherent_state(beta, dim);
            let norm_deficit = v.norm_deficit();
            if norm_deficit > ML_NORM_DEFICIT {
                return Err(Error::Truncation(format!(
                    "|{beta}> loses {norm_deficit:e} of its norm at n_max {}",
                    dim.n_max()
                )));
            }
            let rho = displaced_thermal_block(beta, l, dim);
            let eigen_residual = rho.apply(&v).axpy(C64::new(-1.0 / l, 0.0), &v).norm();
            let b = &TruncatedOperator::identity(dim).scale(1.0 / l)
                - &normal_ordered_gaussian(1.0 / l, 1.0 / l, beta, dim)?;
            let min_eig_b = hermitian_spectrum(&b)?.min();
            Ok(MlPoint {
                beta,
                eigen_residual,
                min_eig_b,
                norm_deficit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_eigen_residual = points.iter().map(|p| p.eigen_residual).fold(0.0, f64::max);
    let worst_min_eig_b = points.iter().map(|p| p.min_eig_b).fold(f64::INFINITY, f64::min);
    Ok(MlCertificate {
        l,
        dim,
        lambda: -1.0 / l,
        tol,
        pass: worst_eigen_residual <= tol && worst_min_eig_b >= -tol,
        worst_eigen_residual,
        worst_min_eig_b,
        points,
    })
}

/// Largest per-level deficit of a POVM produced by the optimizer.
pub fn resolution_deficit(povm: &DiscretePOVM) -> f64 {
    identity_resolution_report(povm).max_abs_deficit()
}
