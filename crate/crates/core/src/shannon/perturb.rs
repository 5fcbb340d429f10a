//! End-to-end check of local maximality: random rank-one perturbations of the
//! discretized coherent measurement, completed to a POVM, never carry more
//! information than the unperturbed family.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::channel::ChannelParams;
use crate::error::{invalid, Error, Result};
use crate::fock::{spectrum_of_hermitian_matrix, FockDim, StateVector, TruncatedOperator};
use crate::measurement::{
    heterodyne_grid_povm, identity_resolution_report, DiscretePOVM, OutcomeLabel, PovmElement,
    REMAINDER_PSD_TOL,
};
use crate::shannon::info::{
    channel_output_state, mutual_information_prepared, output_extent, InfoEstimate,
    PreparedStates, PriorGrid,
};

/// Largest perturbation scale accepted.
pub const MAX_SCALE: f64 = 0.1;

/// Largest identity deficit accepted after completion.
pub const COMPLETION_DEFICIT: f64 = 1e-6;

/// Grids and truncation of a perturbation study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerturbationGrids {
    pub dim: FockDim,
    /// Prior grid half-width in prior standard deviations.
    pub theta_sigmas: f64,
    pub theta_step: f64,
    /// Heterodyne grid half-width in standard deviations of the received field.
    pub beta_sigmas: f64,
    pub beta_step: f64,
}

impl PerturbationGrids {
    pub fn new(dim: FockDim) -> Self {
        Self {
            dim,
            theta_sigmas: 6.0,
            theta_step: 0.2,
            beta_sigmas: 6.0,
            beta_step: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationSample {
    pub seed: u64,
    pub info: f64,
    /// `max(1, lambda_max(sum w phi phi^dagger))`.
    pub rescale: f64,
    pub remainder_min_eig: f64,
    pub completion_deficit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationStudy {
    pub scale: f64,
    pub grids: PerturbationGrids,
    /// Same pipeline at scale 0.
    pub coherent: InfoEstimate,
    pub samples: Vec<PerturbationSample>,
    /// `max_seed (I_perturbed - I_coherent)`.
    pub worst_gain: f64,
}

impl PerturbationStudy {
    pub fn i_coherent(&self) -> f64 {
        self.coherent.value
    }

    pub fn i_perturbed(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.info).collect()
    }
}

/// Replaces each `|beta_k>` of a rank-one family by
/// `|beta_k> + scale * eta_k` with seeded random unit vectors `eta_k`, divides
/// every weight by `max(1, lambda_max(G))` and appends `I - G/lambda`.
pub fn perturbed_povm(
    base: &DiscretePOVM,
    scale: f64,
    seed: u64,
) -> Result<(DiscretePOVM, PerturbationSample)> {
    if !(0.0..=MAX_SCALE).contains(&scale) {
        return invalid(format!("perturbation scale {scale} outside [0, {MAX_SCALE}]"));
    }
    let dim = base.dim();
    let n = dim.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(base.len());
    for e in base.elements() {
        let PovmElement::RankOne(v) = e else {
            return invalid("perturbations need a rank-one family");
        };
        let eta: Vec<C64> = (0..n)
            .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let eta = StateVector::from_amplitudes(dim, eta)?;
        let eta = eta.scale(C64::new(scale / eta.norm(), 0.0));
        vectors.push(v.axpy(C64::new(1.0, 0.0), &eta));
    }
    let mut g = DMatrix::<C64>::zeros(n, n);
    for (v, &w) in vectors.iter().zip(base.weights()) {
        let a = v.amplitudes();
        g.gerc(C64::new(w, 0.0), a, a, C64::new(1.0, 0.0));
    }
    let g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let top = *spectrum_of_hermitian_matrix(g.clone())?.values.last().unwrap_or(&0.0);
    let rescale = top.max(1.0);
    let remainder = DMatrix::identity(n, n) - g * C64::new(1.0 / rescale, 0.0);
    let remainder = TruncatedOperator::from_matrix(dim, remainder)?.hermitian_part();
    let remainder_min_eig = spectrum_of_hermitian_matrix(remainder.matrix().clone())?.values[0];
    if remainder_min_eig < -REMAINDER_PSD_TOL {
        return Err(Error::Numerical(format!(
            "completion remainder has eigenvalue {remainder_min_eig:e}"
        )));
    }
    let mut elements: Vec<PovmElement> = vectors.into_iter().map(PovmElement::RankOne).collect();
    let mut labels = base.labels().to_vec();
    let mut weights: Vec<f64> = base.weights().iter().map(|w| w / rescale).collect();
    elements.push(PovmElement::Operator(remainder));
    labels.push(OutcomeLabel::Remainder);
    weights.push(1.0);
    let povm = DiscretePOVM::new(dim, elements, labels, weights)?;
    let completion_deficit = identity_resolution_report(&povm).max_abs_deficit();
    if completion_deficit > COMPLETION_DEFICIT {
        return Err(Error::Numerical(format!(
            "completed family misses the identity by {completion_deficit:e}"
        )));
    }
    Ok((
        povm,
        PerturbationSample {
            seed,
            info: f64::NAN,
            rescale,
            remainder_min_eig,
            completion_deficit,
        },
    ))
}

/// Information of the completed coherent family against seeded perturbations
/// of it, on shared grids.
pub fn info_of_heterodyne_vs_perturbed(
    params: &ChannelParams,
    scale: f64,
    seeds: &[u64],
    grids: PerturbationGrids,
) -> Result<PerturbationStudy> {
    let l = params.l().first().copied().unwrap_or(1.0);
    let prior = PriorGrid::gaussian(params, grids.theta_sigmas, grids.theta_step)?;
    let prepared = PreparedStates::new(prior, |t| channel_output_state(t, l, grids.dim), grids.dim)?;
    let extent = output_extent(params, grids.beta_sigmas).max(2.0);
    let base = heterodyne_grid_povm(extent, grids.beta_step, grids.dim)?;
    let (coherent_povm, _) = perturbed_povm(&base, 0.0, 0)?;
    let coherent = mutual_information_prepared(&coherent_povm, &prepared)?;
    drop(coherent_povm);
    let mut samples = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (povm, mut sample) = perturbed_povm(&base, scale, seed)?;
        sample.info = mutual_information_prepared(&povm, &prepared)?.value;
        samples.push(sample);
    }
    let worst_gain = samples
        .iter()
        .map(|s| s.info - coherent.value)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PerturbationStudy {
        scale,
        grids,
        coherent,
        samples,
        worst_gain,
    })
}
