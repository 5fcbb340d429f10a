//! Mutual information between the parameter and the outcome of a discrete
//! measurement, with quadrature and truncation diagnostics.


use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{ChannelParams, DensityOperator, GaussianPrior};
use crate::error::{invalid, Error, Result};
use crate::fock::{normal_ordered_gaussian, FockDim};
use crate::measurement::{DiscretePOVM, GridSpec, PovmElement, CLIP_TOL};

/// Allowed distance of the prior weights' total from one.
pub const PRIOR_WEIGHT_TOL: f64 = 1e-6;

/// Parameter points evaluated per matrix product.
const THETA_CHUNK: usize = 64;

/// Weighted parameter points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriorGrid {
    points: Vec<C64>,
    weights: Vec<f64>,
    grid: Option<GridSpec>,
    /// Prior mass outside the grid (quadrature estimate).
    tail_mass: f64,
}

impl PriorGrid {
    pub fn new(points: Vec<C64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return invalid("prior grid needs matching, non-empty points and weights");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("prior weights must be nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PRIOR_WEIGHT_TOL {
            return invalid(format!("prior weights sum to {total}, not 1"));
        }
        Ok(Self {
            points,
            weights,
            grid: None,
            tail_mass: 0.0,
        })
    }

    /// Point mass at `theta`.
    pub fn point(theta: C64) -> Self {
        Self {
            points: vec![theta],
            weights: vec![1.0],
            grid: None,
            tail_mass: 0.0,
        }
    }

    /// Square lattice of half-width `n_sigma * sqrt(S/2)` weighted by the
    /// Gaussian prior and renormalized. A point mass at 0 when `S = 0`.
    pub fn gaussian(params: &ChannelParams, n_sigma: f64, step: f64) -> Result<Self> {
        params.require_single_mode()?;
        let s = params.s()[0];
        if s == 0.0 {
            return Ok(Self::point(C64::new(0.0, 0.0)));
        }
        if !(n_sigma > 0.0 && step > 0.0) {
            return invalid("n_sigma and step must be positive");
        }
        let spec = GridSpec {
            extent: n_sigma * (s / 2.0).sqrt(),
            step,
        };
        let prior = GaussianPrior::new(params.clone());
        let points = spec.points();
        let raw = points
            .iter()
            .map(|&t| prior.density(&[t]).map(|d| d * spec.cell_measure()))
            .collect::<Result<Vec<f64>>>()?;
        let mass: f64 = raw.iter().sum();
        Ok(Self {
            weights: raw.iter().map(|w| w / mass).collect(),
            points,
            grid: Some(spec),
            tail_mass: (1.0 - mass).max(0.0),
        })
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid(&self) -> Option<GridSpec> {
        self.grid
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `L^-1 :exp(-(b - theta)^dagger (b - theta)/L):` from the exact normal-order
/// factorization; the same operator as
/// [`displaced_thermal_state`](crate::channel::displaced_thermal_state)
/// without the padded matrix exponential.
///
/// The result is the exact retained block, so strongly displaced states come
/// back with trace below one; the prior-weighted loss shows up in
/// [`InfoEstimate::identity_deficit`].
pub fn channel_output_state(theta: C64, l: f64, dim: FockDim) -> Result<DensityOperator> {
    if !(l >= 1.0 && l.is_finite()) {
        return invalid(format!("L = {l} must be at least 1"));
    }
    let op = normal_ordered_gaussian(1.0 / l, 1.0 / l, theta, dim)?;
    Ok(DensityOperator::new_unchecked(op))
}

/// Mutual information in nats with its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfoEstimate {
    pub value: f64,
    /// `value / ln 2`, for display.
    pub bits: f64,
    pub theta_grid: Option<GridSpec>,
    pub beta_grid: Option<GridSpec>,
    pub truncation: FockDim,
    pub outcomes: usize,
    pub hypotheses: usize,
    /// Prior mass outside the parameter grid.
    pub prior_tail: f64,
    /// Prior-averaged `1 - sum_k p(k|theta)`.
    pub identity_deficit: f64,
    /// Largest `1 - Tr rho(theta)` over the grid.
    pub trace_deficit: f64,
    /// `prior_tail + identity_deficit`.
    pub error_budget: f64,
    pub clipped: usize,
}

/// Real features with `Tr(E rho) = <f(E), g(rho)>`:
/// `f(E) = [E_mm; 2 Re E_mn; 2 Im E_mn]`, `g(rho) = [rho_mm; Re rho_mn; Im rho_mn]`
/// over `m < n`.
fn feature_len(n: usize) -> usize {
    n * n
}

fn state_features(m: &DMatrix<C64>, out: &mut [f64]) {
    let n = m.nrows();
    let mut idx = 0;
    for i in 0..n {
        out[idx] = m[(i, i)].re;
        idx += 1;
    }
    let pairs = n * (n - 1) / 2;
    let mut p = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            out[n + p] = m[(i, j)].re;
            out[n + pairs + p] = m[(i, j)].im;
            p += 1;
        }
    }
}

fn element_features(e: &PovmElement, weight: f64, out: &mut [f64]) {
    match e {
        PovmElement::RankOne(v) => {
            let a = v.amplitudes();
            let n = a.len();
            for i in 0..n {
                out[i] = weight * a[i].norm_sqr();
            }
            let pairs = n * (n - 1) / 2;
            let mut p = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let z = a[i] * a[j].conj() * (2.0 * weight);
                    out[n + p] = z.re;
                    out[n + pairs + p] = z.im;
                    p += 1;
                }
            }
        }
        PovmElement::Operator(op) => {
            state_features(op.matrix(), out);
            let n = op.dim().size();
            for (k, x) in out.iter_mut().enumerate() {
                *x *= if k < n { weight } else { 2.0 * weight };
            }
        }
    }
}

/// Parameter grid with its state features, reusable across measurements.
pub struct PreparedStates {
    dim: FockDim,
    prior: PriorGrid,
    /// `THETA_CHUNK x features` blocks, one row per parameter point.
    chunks: Vec<DMatrix<f64>>,
    trace_deficit: f64,
}

impl PreparedStates {
    pub fn new(
        prior: PriorGrid,
        states: impl Fn(C64) -> Result<DensityOperator> + Sync,
        dim: FockDim,
    ) -> Result<Self> {
        let f = feature_len(dim.size());
        let blocks = prior
            .points
            .par_chunks(THETA_CHUNK)
            .map(|chunk| {
                let mut rows = vec![0.0; chunk.len() * f];
                let mut worst = 0.0f64;
                for (r, &theta) in chunk.iter().enumerate() {
                    let rho = states(theta)?;
                    if rho.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim.size(),
                            found: rho.dim().size(),
                        });
                    }
                    worst = worst.max(rho.trace_deficit());
                    state_features(rho.operator().matrix(), &mut rows[r * f..(r + 1) * f]);
                }
                Ok((DMatrix::from_row_slice(chunk.len(), f, &rows), worst))
            })
            .collect::<Result<Vec<_>>>()?;
        let trace_deficit = blocks.iter().map(|b| b.1).fold(0.0, f64::max);
        Ok(Self {
            dim,
            prior,
            chunks: blocks.into_iter().map(|b| b.0).collect(),
            trace_deficit,
        })
    }

    pub fn prior(&self) -> &PriorGrid {
        &self.prior
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }
}

/// Per-chunk partial sums.
struct ChunkSums {
    /// `sum_theta w sum_k p ln p`.
    conditional: f64,
    /// `sum_theta w p(k|theta)` for each `k`.
    marginal: Vec<f64>,
    /// `sum_theta w (1 - sum_k p(k|theta))`.
    missing: f64,
    clipped: usize,
}

fn x_ln_x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// `I = sum_theta w sum_k p(k|theta) ln[p(k|theta) / p(k)]` for a prepared
/// parameter grid.
pub fn mutual_information_prepared(
    povm: &DiscretePOVM,
    prepared: &PreparedStates,
) -> Result<InfoEstimate> {
    if povm.dim() != prepared.dim {
        return Err(Error::DimensionMismatch {
            expected: prepared.dim.size(),
            found: povm.dim().size(),
        });
    }
    let f = feature_len(prepared.dim.size());
    let k_count = povm.len();
    let columns: Vec<Vec<f64>> = povm
        .elements()
        .par_iter()
        .zip(povm.weights().par_iter())
        .map(|(e, &w)| {
            let mut col = vec![0.0; f];
            element_features(e, w, &mut col);
            col
        })
        .collect();
    let element_matrix = DMatrix::from_vec(f, k_count, columns.concat());
    drop(columns);

    let weights = &prepared.prior.weights;
    let sums = prepared
        .chunks
        .par_iter()
        .enumerate()
        .map(|(c, block)| {
            let probs = block * &element_matrix;
            let rows = block.nrows();
            let w = &weights[c * THETA_CHUNK..c * THETA_CHUNK + rows];
            let mut per_theta = vec![0.0; rows];
            let mut totals = vec![0.0; rows];
            let mut marginal = vec![0.0; k_count];
            let mut clipped = 0;
            for k in 0..k_count {
                let col = probs.column(k);
                let mut acc = 0.0;
                for t in 0..rows {
                    let mut p = col[t];
                    if p < -CLIP_TOL {
                        return Err(Error::Numerical(format!(
                            "outcome {k} has probability {p:e} at theta {}",
                            prepared.prior.points[c * THETA_CHUNK + t]
                        )));
                    }
                    if p < 0.0 {
                        clipped += 1;
                        p = 0.0;
                    }
                    per_theta[t] += x_ln_x(p);
                    totals[t] += p;
                    acc += w[t] * p;
                }
                marginal[k] = acc;
            }
            Ok(ChunkSums {
                conditional: per_theta.iter().zip(w).map(|(h, wt)| wt * h).sum(),
                marginal,
                missing: totals.iter().zip(w).map(|(s, wt)| wt * (1.0 - s)).sum(),
                clipped,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut conditional = 0.0;
    let mut marginal = vec![0.0; k_count];
    let mut missing = 0.0;
    let mut clipped = 0;
    for s in &sums {
        conditional += s.conditional;
        for (m, x) in marginal.iter_mut().zip(&s.marginal) {
            *m += x;
        }
        missing += s.missing;
        clipped += s.clipped;
    }
    let value = conditional - marginal.iter().map(|&p| x_ln_x(p)).sum::<f64>();
    let prior_tail = prepared.prior.tail_mass;
    Ok(InfoEstimate {
        value,
        bits: value / std::f64::consts::LN_2,
        theta_grid: prepared.prior.grid,
        beta_grid: povm.grid(),
        truncation: prepared.dim,
        outcomes: k_count,
        hypotheses: prepared.prior.len(),
        prior_tail,
        identity_deficit: missing,
        trace_deficit: prepared.trace_deficit,
        error_budget: prior_tail + missing.abs(),
        clipped,
    })
}

pub fn mutual_information(
    povm: &DiscretePOVM,
    prior: &PriorGrid,
    states: impl Fn(C64) -> Result<DensityOperator> + Sync,
    dim: FockDim,
) -> Result<InfoEstimate> {
    let prepared = PreparedStates::new(prior.clone(), states, dim)?;
    mutual_information_prepared(povm, &prepared)
}

/// Mutual information of an explicit table `p(k|theta)` (rows) under the
/// prior weights.
pub fn mutual_information_of_table(weights: &[f64], table: &[Vec<f64>]) -> f64 {
    let k_count = table.first().map_or(0, |r| r.len());
    let mut marginal = vec![0.0; k_count];
    let mut conditional = 0.0;
    for (w, row) in weights.iter().zip(table) {
        for (m, &p) in marginal.iter_mut().zip(row) {
            *m += w * p;
            conditional += w * x_ln_x(p);
        }
    }
    conditional - marginal.iter().map(|&p| x_ln_x(p)).sum::<f64>()
}

/// `sum_nu ln((S_nu + L_nu)/L_nu)`: the information of the ideal coherent
/// measurement in the Gaussian channel.
pub fn gaussian_heterodyne_info(params: &ChannelParams) -> f64 {
    (0..params.modes())
        .map(|nu| (params.total(nu) / params.l()[nu]).ln())
        .sum()
}

/// Heterodyne grid extent covering `n_sigma` standard deviations of the
/// received field.
pub fn output_extent(params: &ChannelParams, n_sigma: f64) -> f64 {
    n_sigma * (params.total(0) / 2.0).sqrt()
}
