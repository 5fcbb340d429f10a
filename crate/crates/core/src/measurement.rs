//! Discrete measurement strategies and the square-lattice discretization of
//! the coherent-state (heterodyne) measurement.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{DensityOperator, GROSS_TRACE_DEFICIT};
use crate::error::{invalid, Error, Result};
use crate::fock::{
    coherent_state, hermitian_spectrum, matrix_to_nested, nested_to_matrix, psd_check, FockDim,
    PsdCheck, StateVector, TruncatedOperator,
};

/// Negative eigenvalue tolerated in a POVM element.
pub const ELEMENT_PSD_TOL: f64 = 1e-9;

/// Remainder elements must be PSD within this tolerance.
pub const REMAINDER_PSD_TOL: f64 = 1e-8;

/// Per-level deficit that still counts as resolved when computing `n_eff`.
pub const N_EFF_DEFICIT: f64 = 1e-3;

/// Outcome probabilities between this and zero are clipped to zero.
pub const CLIP_TOL: f64 = 1e-10;

/// Largest level-0 deficit accepted from a heterodyne grid.
pub const MAX_VACUUM_DEFICIT: f64 = 0.05;

/// One measurement operator, stored compactly when it is rank one.
#[derive(Clone, Debug, PartialEq)]
pub enum PovmElement {
    /// `|v><v|`.
    RankOne(StateVector),
    Operator(TruncatedOperator),
}

impl PovmElement {
    pub fn dim(&self) -> FockDim {
        match self {
            PovmElement::RankOne(v) => v.dim(),
            PovmElement::Operator(op) => op.dim(),
        }
    }

    pub fn to_operator(&self) -> TruncatedOperator {
        match self {
            PovmElement::RankOne(v) => TruncatedOperator::projector(v),
            PovmElement::Operator(op) => op.clone(),
        }
    }

    /// `Tr(E rho)`, real part.
    pub fn trace_with(&self, rho: &TruncatedOperator) -> f64 {
        match self {
            PovmElement::RankOne(v) => rho.expectation(v).re,
            PovmElement::Operator(op) => op.trace_product(rho).re,
        }
    }

    /// Adds `weight * E` into `acc`.
    pub(crate) fn accumulate(&self, weight: f64, acc: &mut DMatrix<C64>) {
        match self {
            PovmElement::RankOne(v) => {
                let a = v.amplitudes();
                acc.gerc(C64::new(weight, 0.0), a, a, C64::new(1.0, 0.0));
            }
            PovmElement::Operator(op) => {
                *acc += op.matrix() * C64::new(weight, 0.0);
            }
        }
    }

    /// Rank-one elements are PSD by construction; their spectrum is
    /// `{|v|^2, 0, ..., 0}`.
    pub fn psd_check(&self, tol: f64) -> Result<PsdCheck> {
        match self {
            PovmElement::RankOne(_) => Ok(PsdCheck {
                is_psd: true,
                min_eigenvalue: 0.0,
            }),
            PovmElement::Operator(op) => psd_check(op, tol),
        }
    }
}

/// What an outcome stands for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLabel {
    /// Grid point in the complex plane.
    Point(C64),
    /// Decision for hypothesis `k`.
    Index(usize),
    /// Completion element `I - sum`.
    Remainder,
}

/// Square lattice `{(j step, k step)}` with `|Re|, |Im| <= extent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extent: f64,
    pub step: f64,
}

impl GridSpec {
    /// Lattice index range `-half..=half` along each axis.
    pub fn half_count(&self) -> i64 {
        (self.extent / self.step + 1e-9).floor() as i64
    }

    pub fn points(&self) -> Vec<C64> {
        let h = self.half_count();
        let mut pts = Vec::with_capacity(((2 * h + 1) * (2 * h + 1)) as usize);
        for j in -h..=h {
            for k in -h..=h {
                pts.push(C64::new(j as f64 * self.step, k as f64 * self.step));
            }
        }
        pts
    }

    /// `step^2 / pi`, the `dmu` mass of one cell.
    pub fn cell_measure(&self) -> f64 {
        self.step * self.step / PI
    }
}

/// Point set and cell mass of a heterodyne discretization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeterodyneGrid {
    pub extent: f64,
    pub step: f64,
    pub points: Vec<C64>,
    pub cell_measure: f64,
}

impl HeterodyneGrid {
    pub fn new(extent: f64, step: f64) -> Result<Self> {
        if !(extent > 0.0 && extent.is_finite()) || !(step > 0.0 && step.is_finite()) {
            return invalid("grid extent and step must be positive");
        }
        let spec = GridSpec { extent, step };
        Ok(Self {
            extent,
            step,
            points: spec.points(),
            cell_measure: spec.cell_measure(),
        })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            extent: self.extent,
            step: self.step,
        }
    }
}

/// Finite operator-valued measure: outcome `k` has operator
/// `weights[k] * elements[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePOVM {
    dim: FockDim,
    elements: Vec<PovmElement>,
    labels: Vec<OutcomeLabel>,
    weights: Vec<f64>,
    grid: Option<GridSpec>,
}

impl DiscretePOVM {
    /// Validates shapes, weights, and PSD-ness of every dense element.
    pub fn new(
        dim: FockDim,
        elements: Vec<PovmElement>,
        labels: Vec<OutcomeLabel>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return invalid("a POVM needs at least one element");
        }
        if labels.len() != elements.len() || weights.len() != elements.len() {
            return invalid("elements, labels and weights must have equal length");
        }
        for (k, e) in elements.iter().enumerate() {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.size(),
                    found: e.dim().size(),
                });
            }
            if !(weights[k] > 0.0 && weights[k].is_finite()) {
                return invalid(format!("weight {k} = {} must be positive", weights[k]));
            }
            if let PovmElement::Operator(op) = e {
                let c = psd_check(op, ELEMENT_PSD_TOL)?;
                if !c.is_psd {
                    return invalid(format!(
                        "element {k} has negative eigenvalue {:e}",
                        c.min_eigenvalue
                    ));
                }
            }
        }
        Ok(Self {
            dim,
            elements,
            labels,
            weights,
            grid: None,
        })
    }

    /// Decision POVM `{Pi_k}` with unit weights and index labels.
    pub fn from_operators(dim: FockDim, ops: Vec<TruncatedOperator>) -> Result<Self> {
        let n = ops.len();
        let elements = ops
            .into_iter()
            .map(|op| op.hermitize().map(PovmElement::Operator))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            dim,
            elements,
            (0..n).map(OutcomeLabel::Index).collect(),
            vec![1.0; n],
        )
    }

    pub(crate) fn with_grid(mut self, grid: GridSpec) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[PovmElement] {
        &self.elements
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid(&self) -> Option<GridSpec> {
        self.grid
    }

    /// `weights[k] * elements[k]` as a dense operator.
    pub fn effective_operator(&self, k: usize) -> TruncatedOperator {
        self.elements[k].to_operator().scale(self.weights[k])
    }

    /// `sum_k weights[k] * elements[k]`.
    pub fn element_sum(&self) -> TruncatedOperator {
        let n = self.dim.size();
        let mut acc = DMatrix::zeros(n, n);
        for (e, &w) in self.elements.iter().zip(&self.weights) {
            e.accumulate(w, &mut acc);
        }
        TruncatedOperator::from_matrix_unchecked(self.dim, acc)
    }

    /// PSD report for every element at `tol`.
    pub fn element_psd_checks(&self, tol: f64) -> Result<Vec<PsdCheck>> {
        self.elements
            .par_iter()
            .map(|e| e.psd_check(tol))
            .collect()
    }

    /// Appends `I - sum` as an extra outcome when it is PSD within
    /// [`REMAINDER_PSD_TOL`].
    pub fn complete_with_remainder(mut self) -> Result<Self> {
        let rem = &TruncatedOperator::identity(self.dim) - &self.element_sum();
        let rem = rem.hermitian_part();
        let spec = hermitian_spectrum(&rem)?;
        if spec.min() < -REMAINDER_PSD_TOL {
            return Err(Error::Numerical(format!(
                "remainder I - sum has eigenvalue {:e}; the family over-covers the identity",
                spec.min()
            )));
        }
        self.elements.push(PovmElement::Operator(rem));
        self.labels.push(OutcomeLabel::Remainder);
        self.weights.push(1.0);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PovmDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: PovmDocument = serde_json::from_str(s)?;
        doc.try_into()
    }
}

/// Serialized form `{dim, labels, weights, elements}`; `dim` is `n_max` and
/// each element is a square array of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmDocument {
    pub dim: usize,
    pub labels: Vec<OutcomeLabel>,
    pub weights: Vec<f64>,
    pub elements: Vec<Vec<Vec<[f64; 2]>>>,
}

impl From<&DiscretePOVM> for PovmDocument {
    fn from(p: &DiscretePOVM) -> Self {
        PovmDocument {
            dim: p.dim.n_max(),
            labels: p.labels.clone(),
            weights: p.weights.clone(),
            elements: p
                .elements
                .iter()
                .map(|e| matrix_to_nested(e.to_operator().matrix()))
                .collect(),
        }
    }
}

impl TryFrom<PovmDocument> for DiscretePOVM {
    type Error = Error;

    fn try_from(doc: PovmDocument) -> Result<Self> {
        let dim = FockDim::new(doc.dim)?;
        let elements = doc
            .elements
            .iter()
            .map(|rows| {
                let m = nested_to_matrix(rows)?;
                TruncatedOperator::from_matrix(dim, m).map(PovmElement::Operator)
            })
            .collect::<Result<Vec<_>>>()?;
        DiscretePOVM::new(dim, elements, doc.labels, doc.weights)
    }
}

/// Midpoint-rule discretization of `|beta><beta| dmu(beta)` on a square
/// lattice: rank-one elements with weights `step^2 / pi`.
///
/// The family is not completed to the identity; see
/// [`identity_resolution_report`] for the per-level deficit.
pub fn heterodyne_grid_povm(extent: f64, step: f64, dim: FockDim) -> Result<DiscretePOVM> {
    if step > 0.5 {
        return invalid(format!("grid step {step} exceeds 0.5"));
    }
    if extent < 2.0 {
        return invalid(format!("grid extent {extent} is below 2"));
    }
    let grid = HeterodyneGrid::new(extent, step)?;
    let elements: Vec<PovmElement> = grid
        .points
        .par_iter()
        .map(|&b| PovmElement::RankOne(coherent_state(b, dim)))
        .collect();
    let labels = grid.points.iter().map(|&b| OutcomeLabel::Point(b)).collect();
    let weights = vec![grid.cell_measure; grid.points.len()];
    let povm = DiscretePOVM::new(dim, elements, labels, weights)?.with_grid(grid.spec());
    let report = identity_resolution_report(&povm);
    if report.deficits[0] > MAX_VACUUM_DEFICIT {
        return Err(Error::Truncation(format!(
            "grid (extent {extent}, step {step}) leaves vacuum deficit {:e}",
            report.deficits[0]
        )));
    }
    Ok(povm)
}

/// Per-level completeness of a POVM.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    /// `1 - <n| sum |n>` for every retained level.
    pub deficits: Vec<f64>,
    /// `max_{m != n} |<m| sum |n>|`.
    pub max_off_diagonal: f64,
    /// Largest `n` such that every level `0..=n` has deficit at most
    /// [`N_EFF_DEFICIT`] (in absolute value).
    pub n_eff: Option<usize>,
}

impl IdentityReport {
    pub fn max_abs_deficit(&self) -> f64 {
        self.deficits.iter().map(|d| d.abs()).fold(0.0, f64::max)
    }
}

pub fn identity_resolution_report(povm: &DiscretePOVM) -> IdentityReport {
    let sum = povm.element_sum();
    let n = povm.dim.size();
    let deficits: Vec<f64> = (0..n).map(|k| 1.0 - sum.get(k, k).re).collect();
    let mut max_off_diagonal = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_off_diagonal = max_off_diagonal.max(sum.get(i, j).norm());
            }
        }
    }
    let n_eff = deficits
        .iter()
        .position(|d| d.abs() > N_EFF_DEFICIT)
        .map_or(Some(n - 1), |first_bad| first_bad.checked_sub(1));
    IdentityReport {
        deficits,
        max_off_diagonal,
        n_eff,
    }
}

/// Outcome statistics `p_k = w_k Tr(E_k rho)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeDistribution {
    pub probabilities: Vec<f64>,
    pub total: f64,
    /// `1 - total`: the completeness deficit seen by this state.
    pub identity_deficit: f64,
    /// Number of entries in `[-CLIP_TOL, 0)` set to zero.
    pub clipped: usize,
    pub clipped_mass: f64,
}

pub fn outcome_distribution(
    povm: &DiscretePOVM,
    rho: &DensityOperator,
) -> Result<OutcomeDistribution> {
    if rho.dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: povm.dim().size(),
            found: rho.dim().size(),
        });
    }
    if rho.trace_deficit().abs() > GROSS_TRACE_DEFICIT {
        return invalid(format!("state trace {} is not 1", rho.trace()));
    }
    let raw: Vec<f64> = povm
        .elements
        .par_iter()
        .zip(povm.weights.par_iter())
        .map(|(e, &w)| w * e.trace_with(rho.operator()))
        .collect();
    let mut clipped = 0;
    let mut clipped_mass = 0.0;
    let mut probabilities = Vec::with_capacity(raw.len());
    for (k, p) in raw.into_iter().enumerate() {
        if p < -CLIP_TOL {
            return Err(Error::Numerical(format!(
                "outcome {k} has probability {p:e}"
            )));
        }
        if p < 0.0 {
            clipped += 1;
            clipped_mass += p;
            probabilities.push(0.0);
        } else {
            probabilities.push(p);
        }
    }
    let total: f64 = probabilities.iter().sum();
    Ok(OutcomeDistribution {
        probabilities,
        total,
        identity_deficit: 1.0 - total,
        clipped,
        clipped_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::displaced_thermal_state;
    use crate::channel::heterodyne_likelihood;

    fn dim(n: usize) -> FockDim {
        FockDim::new(n).unwrap()
    }

    fn vacuum_split(d: FockDim) -> DiscretePOVM {
        let p0 = TruncatedOperator::projector(&StateVector::basis(d, 0).unwrap());
        let p1 = &TruncatedOperator::identity(d) - &p0;
        DiscretePOVM::from_operators(d, vec![p0, p1]).unwrap()
    }

    #[test]
    fn grid_points_and_measure() {
        let g = HeterodyneGrid::new(2.0, 0.5).unwrap();
        assert_eq!(g.points.len(), 81);
        assert!(g.points.iter().all(|p| p.re.abs() <= 2.0 && p.im.abs() <= 2.0));
        assert_eq!(g.cell_measure, 0.25 / PI);
        assert!(HeterodyneGrid::new(0.0, 0.5).is_err());
    }

    #[test]
    fn heterodyne_vacuum_level_resolved() {
        let povm = heterodyne_grid_povm(6.0, 0.1, dim(30)).unwrap();
        let r = identity_resolution_report(&povm);
        assert!(r.deficits[0].abs() <= 1e-4);
        assert!(povm.element_sum().get(0, 1).norm() <= 1e-10);
        assert!(r.n_eff.unwrap() >= 10);
    }

    #[test]
    fn halving_step_at_fixed_extent_shrinks_coverage() {
        let d = dim(30);
        let coarse = identity_resolution_report(&heterodyne_grid_povm(6.0, 0.2, d).unwrap());
        let fine = identity_resolution_report(&heterodyne_grid_povm(6.0, 0.1, d).unwrap());
        // outer cell edge moves from 6.1 to 6.05
        assert!(fine.deficits[20] > coarse.deficits[20]);
    }

    #[test]
    fn halving_step_with_nested_coverage_does_not_increase_deficits() {
        let d = dim(30);
        let coarse = identity_resolution_report(&heterodyne_grid_povm(6.0, 0.2, d).unwrap());
        let fine = identity_resolution_report(&heterodyne_grid_povm(6.1, 0.1, d).unwrap());
        for n in 0..=coarse.n_eff.unwrap() {
            assert!(fine.deficits[n] <= coarse.deficits[n] + 1e-13, "level {n}");
        }
    }

    #[test]
    fn heterodyne_small_extent_loses_high_levels() {
        let povm = heterodyne_grid_povm(2.0, 0.1, dim(12)).unwrap();
        let r = identity_resolution_report(&povm);
        // tail mass of |<n|beta>|^2 outside the square grows with n
        assert!(r.deficits[0] < 0.02);
        assert!(r.deficits[4] > 0.1);
        for n in 1..8 {
            assert!(r.deficits[n] > r.deficits[n - 1]);
        }
    }

    #[test]
    fn heterodyne_rejects_bad_grids() {
        assert!(heterodyne_grid_povm(6.0, 0.6, dim(5)).is_err());
        assert!(heterodyne_grid_povm(1.5, 0.1, dim(5)).is_err());
    }

    #[test]
    fn projective_pair_resolves_identity() {
        let povm = vacuum_split(dim(4));
        let r = identity_resolution_report(&povm);
        assert!(r.deficits.iter().all(|d| d.abs() < 1e-15));
        assert_eq!(r.n_eff, Some(4));
    }

    #[test]
    fn outcome_distribution_projective() {
        let d = dim(4);
        let rho = DensityOperator::pure(&StateVector::basis(d, 0).unwrap()).unwrap();
        let dist = outcome_distribution(&vacuum_split(d), &rho).unwrap();
        assert_eq!(dist.probabilities, vec![1.0, 0.0]);
        assert_eq!(dist.clipped, 0);
    }

    #[test]
    fn outcome_distribution_matches_husimi() {
        let d = dim(30);
        let povm = heterodyne_grid_povm(6.0, 0.2, d).unwrap();
        let rho = displaced_thermal_state(C64::new(0.0, 0.0), 1.0, d).unwrap();
        let dist = outcome_distribution(&povm, &rho).unwrap();
        let w = 0.04 / PI;
        for (p, label) in dist.probabilities.iter().zip(povm.labels()) {
            let OutcomeLabel::Point(b) = label else { panic!() };
            let expect = w * heterodyne_likelihood(*b, C64::new(0.0, 0.0), 1.0);
            assert!((p - expect).abs() <= 1e-6);
        }
    }

    #[test]
    fn outcome_first_moment() {
        let d = dim(30);
        let povm = heterodyne_grid_povm(6.0, 0.2, d).unwrap();
        let rho = displaced_thermal_state(C64::new(1.0, 0.0), 2.0, d).unwrap();
        let dist = outcome_distribution(&povm, &rho).unwrap();
        let mean: C64 = dist
            .probabilities
            .iter()
            .zip(povm.labels())
            .map(|(p, l)| match l {
                OutcomeLabel::Point(b) => b * p,
                _ => unreachable!(),
            })
            .sum();
        assert!((mean - C64::new(1.0, 0.0)).norm() <= 2e-2, "{mean}");
        assert!((dist.total + dist.identity_deficit - 1.0).abs() < 1e-15);
    }

    #[test]
    fn outcome_dimension_mismatch() {
        let rho = DensityOperator::pure(&StateVector::basis(dim(3), 0).unwrap()).unwrap();
        assert!(matches!(
            outcome_distribution(&vacuum_split(dim(4)), &rho),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_psd_element() {
        let d = dim(1);
        let bad = TruncatedOperator::from_diagonal(d, &[1.5, -0.5]).unwrap();
        let ok = TruncatedOperator::from_diagonal(d, &[0.0, 1.0]).unwrap();
        assert!(DiscretePOVM::from_operators(d, vec![bad, ok]).is_err());
    }

    #[test]
    fn remainder_completion() {
        let d = dim(8);
        let povm = heterodyne_grid_povm(3.0, 0.25, d).unwrap();
        let done = povm.clone().complete_with_remainder().unwrap();
        assert_eq!(done.len(), povm.len() + 1);
        assert_eq!(*done.labels().last().unwrap(), OutcomeLabel::Remainder);
        let r = identity_resolution_report(&done);
        assert!(r.max_abs_deficit() < 1e-12);
        // a family that over-covers the identity cannot be completed
        let id = TruncatedOperator::identity(d);
        let over = DiscretePOVM::from_operators(d, vec![id.clone(), id]).unwrap();
        assert!(over.complete_with_remainder().is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let d = dim(3);
        let povm = heterodyne_grid_povm(2.0, 0.5, d).unwrap();
        let s = povm.to_json().unwrap();
        let back = DiscretePOVM::from_json(&s).unwrap();
        assert_eq!(back.to_json().unwrap(), s);
        assert_eq!(back.weights(), povm.weights());
        assert_eq!(back.labels(), povm.labels());
        for k in 0..povm.len() {
            assert_eq!(back.elements()[k].to_operator(), povm.elements()[k].to_operator());
        }
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let s = r#"{"dim":1,"labels":[],"weights":[],"elements":[],"extra":1}"#;
        assert!(DiscretePOVM::from_json(s).is_err());
    }
}
