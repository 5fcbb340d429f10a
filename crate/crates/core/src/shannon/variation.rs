//! Second-variation operators of the information criterion around the
//! coherent measurement in the Gaussian channel.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::fock::{
    coherent_state, creation_exponential, displacement, hermitian_spectrum, ladder_operators,
    normal_ordered_gaussian, padded_dim, FockDim, StateVector, TruncatedOperator,
};

/// Coherent states at grid points must keep their norm deficit below this.
pub const VARIATION_NORM_DEFICIT: f64 = 1e-8;

/// Single-mode channel coefficients used by the operator constructions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModeCoefficients {
    pub s: f64,
    pub l: f64,
    /// `H = 1/L - 1/(S+L)`.
    pub h: f64,
    /// `S + L`.
    pub total: f64,
}

impl ModeCoefficients {
    pub fn from_params(params: &ChannelParams) -> Result<Self> {
        params.require_single_mode()?;
        Ok(Self {
            s: params.s()[0],
            l: params.l()[0],
            h: params.h()[0],
            total: params.total(0),
        })
    }

    /// Marginal density `p(beta) = exp(-|beta|^2/(S+L)) / (S+L)`.
    pub fn marginal(&self, beta: C64) -> f64 {
        (-beta.norm_sqr() / self.total).exp() / self.total
    }

    /// Diagonal of the displaced-frame bracket:
    /// `F_n = n H (1 - 1/(S+L))^(n-1) - H^n + delta_n0`.
    pub fn bracket_diagonal(&self, n: usize) -> f64 {
        let q = 1.0 - 1.0 / self.total;
        let first = if n == 0 {
            0.0
        } else {
            n as f64 * self.h * q.powi(n as i32 - 1)
        };
        let delta = if n == 0 { 1.0 } else { 0.0 };
        first - self.h.powi(n as i32) + delta
    }
}

/// `B(beta) = H (b - beta)^dagger rho_bar (b - beta)` with
/// `rho_bar = (S+L)^-1 :exp(-b^dagger b/(S+L)):`.
pub fn b_operator(beta: C64, m: &ModeCoefficients, dim: FockDim) -> Result<TruncatedOperator> {
    if m.h == 0.0 {
        return Ok(TruncatedOperator::zeros(dim));
    }
    let rate = 1.0 / m.total;
    let rho_bar = normal_ordered_gaussian(rate, rate, C64::new(0.0, 0.0), dim)?;
    let (a, _) = ladder_operators(dim);
    let x = a.matrix() - DMatrix::identity(dim.size(), dim.size()) * beta;
    let b = x.adjoint() * rho_bar.matrix() * &x * C64::new(m.h, 0.0);
    Ok(TruncatedOperator::from_matrix_unchecked(dim, b).hermitian_part())
}

/// `D(beta) = p(beta) [T(1 - H) - T(1)]` with
/// `T(r) = :exp(-r |b - beta|^2 + 2 Re(conj(x0)(b - beta))):`,
/// `x0 = -beta/(S+L)`.
///
/// This is `p(beta)` times the posterior covariance of
/// `psi_beta(theta) = exp((b^dagger - conj(beta))(theta - beta)/L)|beta>`.
pub fn d_operator(beta: C64, m: &ModeCoefficients, dim: FockDim) -> Result<TruncatedOperator> {
    if m.h == 0.0 {
        return Ok(TruncatedOperator::zeros(dim));
    }
    let x0 = -beta / m.total;
    let term = |r: f64| normal_ordered_gaussian((x0.norm_sqr() / r).exp(), r, beta + x0 / r, dim);
    let d = &term(1.0 - m.h)? - &term(1.0)?;
    Ok(d.scale(m.marginal(beta)).hermitian_part())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `<m| :exp(k + u b^dagger + v b - r b^dagger b): |n>` summed term by term
/// from the Taylor coefficients of the normal-ordered symbol.
fn normal_symbol_element(k: C64, u: C64, v: C64, r: f64, m: usize, n: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..=m {
        if m - j > n {
            continue;
        }
        let kk = n - (m - j);
        let mut coeff = C64::new(0.0, 0.0);
        for l in 0..=j.min(kk) {
            coeff += u.powu((j - l) as u32) * v.powu((kk - l) as u32) * (-r).powi(l as i32)
                / (factorial(j - l) * factorial(kk - l) * factorial(l));
        }
        let ladder =
            (factorial(m) / factorial(m - j)).sqrt() * (factorial(n) / factorial(n - kk)).sqrt();
        acc += coeff * ladder;
    }
    acc * k.exp()
}

/// `D(beta)` from the Taylor expansion of its normal-ordered symbol, entry by
/// entry. Slow; meant for small `dim` as a check on [`d_operator`].
pub fn d_operator_by_symbol_expansion(
    beta: C64,
    m: &ModeCoefficients,
    dim: FockDim,
) -> TruncatedOperator {
    let x0 = -beta / m.total;
    let p = m.marginal(beta);
    let term = |r: f64, i: usize, j: usize| {
        let u = beta * r + x0;
        let k = C64::new(-r * beta.norm_sqr() - 2.0 * (x0.conj() * beta).re, 0.0);
        normal_symbol_element(k, u, u.conj(), r, i, j)
    };
    let mat = DMatrix::from_fn(dim.size(), dim.size(), |i, j| {
        (term(1.0 - m.h, i, j) - term(1.0, i, j)) * p
    });
    TruncatedOperator::from_matrix_unchecked(dim, mat)
}

/// Largest entrywise gap between [`d_operator`] and
/// [`d_operator_by_symbol_expansion`] over `betas`.
pub fn d_construction_defect(m: &ModeCoefficients, betas: &[C64], dim: FockDim) -> Result<f64> {
    let mut worst = 0.0f64;
    for &beta in betas {
        let fast = d_operator(beta, m, dim)?;
        worst = worst.max(fast.max_abs_diff(&d_operator_by_symbol_expansion(beta, m, dim)));
    }
    Ok(worst)
}

/// One sampled value of the second variation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadraticSample {
    pub id: usize,
    pub value: f64,
    /// `||delta phi||^2` after projection.
    pub norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationReport {
    pub beta: C64,
    pub coefficients: ModeCoefficients,
    pub dim: FockDim,
    pub b_op: TruncatedOperator,
    pub d_op: TruncatedOperator,
    pub min_eig_b: f64,
    pub min_eig_d: f64,
    pub min_eig_b_minus_d: f64,
    /// Ascending spectrum of `B - D`.
    pub eigenvalues_b_minus_d: Vec<f64>,
    /// `|| B(beta) |beta> ||`.
    pub stationarity_residual: f64,
    pub quadratic_form_samples: Vec<QuadraticSample>,
}

impl VariationReport {
    pub fn b_minus_d(&self) -> TruncatedOperator {
        &self.b_op - &self.d_op
    }

    /// All three minimum eigenvalues are at least `-tol`.
    pub fn locally_optimal(&self, tol: f64) -> bool {
        self.min_eig_b >= -tol && self.min_eig_d >= -tol && self.min_eig_b_minus_d >= -tol
    }
}

fn check_truncation(beta: C64, dim: FockDim) -> Result<StateVector> {
    let v = coherent_state(beta, dim);
    if v.norm_deficit() > VARIATION_NORM_DEFICIT {
        return Err(Error::Truncation(format!(
            "|{beta}> loses {:e} of its norm at n_max {}",
            v.norm_deficit(),
            dim.n_max()
        )));
    }
    Ok(v)
}

pub fn variation_operators(
    beta: C64,
    params: &ChannelParams,
    dim: FockDim,
) -> Result<VariationReport> {
    let coefficients = ModeCoefficients::from_params(params)?;
    let v = check_truncation(beta, dim)?;
    let b_op = b_operator(beta, &coefficients, dim)?;
    let d_op = d_operator(beta, &coefficients, dim)?;
    let spec_bd = hermitian_spectrum(&(&b_op - &d_op))?;
    Ok(VariationReport {
        beta,
        coefficients,
        dim,
        min_eig_b: hermitian_spectrum(&b_op)?.min(),
        min_eig_d: hermitian_spectrum(&d_op)?.min(),
        min_eig_b_minus_d: spec_bd.min(),
        eigenvalues_b_minus_d: spec_bd.values,
        stationarity_residual: b_op.apply(&v).norm(),
        b_op,
        d_op,
        quadratic_form_samples: Vec::new(),
    })
}

/// `delta phi^dagger (B - D) delta phi` for each perturbation, after removing
/// the real component along `|beta>`. The samples are also stored in the
/// report.
pub fn second_variation_form(
    report: &mut VariationReport,
    perturbations: &[StateVector],
) -> Result<Vec<f64>> {
    let phi = coherent_state(report.beta, report.dim);
    let phi_norm_sq = phi.norm() * phi.norm();
    let bd = report.b_minus_d();
    let samples = perturbations
        .iter()
        .enumerate()
        .map(|(id, dp)| {
            if dp.dim() != report.dim {
                return Err(Error::DimensionMismatch {
                    expected: report.dim.size(),
                    found: dp.dim().size(),
                });
            }
            let coeff = phi.inner(dp).re / phi_norm_sq;
            let projected = dp.axpy(C64::new(-coeff, 0.0), &phi);
            Ok(QuadraticSample {
                id,
                value: bd.expectation(&projected).re,
                norm_sq: projected.norm().powi(2),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let values = samples.iter().map(|s| s.value).collect();
    report.quadratic_form_samples.extend(samples);
    Ok(values)
}

/// Largest deviation of the low block of `D(beta)^dagger K(beta) D(beta)` from
/// `diag(F_n)`, where `K(beta) = p(beta)^-1 Y (B - D) Y^dagger` and
/// `Y = exp(-x0 (b^dagger - conj(beta)))`.
///
/// `B - D` is congruent to a displaced diagonal operator; its spectrum moves
/// with `beta` but the displaced-frame diagonal does not.
pub fn reduced_bracket_defect(beta: C64, m: &ModeCoefficients, dim: FockDim) -> Result<f64> {
    let big = padded_dim(dim);
    let bd = &b_operator(beta, m, big)? - &d_operator(beta, m, big)?;
    let x0 = -beta / m.total;
    let y = creation_exponential(-x0, big) * (x0 * beta.conj()).exp();
    let k = &y * bd.matrix() * y.adjoint() * C64::new(1.0 / m.marginal(beta), 0.0);
    let disp = displacement(beta, big);
    let w = disp.matrix().adjoint() * k * disp.matrix();
    let mut worst = 0.0f64;
    for i in 0..dim.size() {
        for j in 0..dim.size() {
            let expect = if i == j { m.bracket_diagonal(i) } else { 0.0 };
            worst = worst.max((w[(i, j)] - expect).norm());
        }
    }
    Ok(worst)
}

/// Grid verdict for the operator inequality `B - D >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalOptimalityCertificate {
    pub coefficients: ModeCoefficients,
    pub dim: FockDim,
    pub tol: f64,
    pub points: Vec<PointSummary>,
    pub worst_min_eig_b: f64,
    pub worst_min_eig_d: f64,
    pub worst_min_eig_b_minus_d: f64,
    pub worst_stationarity: f64,
    /// Largest eigenvalue difference between `B - D` at any grid point and at
    /// the first grid point.
    pub spectral_spread: f64,
    /// `spectral_spread <= tol`.
    pub spectra_beta_independent: bool,
    /// Worst [`reduced_bracket_defect`] over the grid.
    pub reduced_bracket_defect: f64,
    /// `worst_min_eig_b_minus_d >= -tol`.
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSummary {
    pub beta: C64,
    pub min_eig_b: f64,
    pub min_eig_d: f64,
    pub min_eig_b_minus_d: f64,
    pub stationarity_residual: f64,
    pub reduced_bracket_defect: f64,
    pub eigenvalues_b_minus_d: Vec<f64>,
}

pub fn local_optimality_certificate(
    params: &ChannelParams,
    beta_grid: &[C64],
    dim: FockDim,
    tol: f64,
) -> Result<LocalOptimalityCertificate> {
    let coefficients = ModeCoefficients::from_params(params)?;
    if beta_grid.is_empty() {
        return Err(Error::InvalidArgument("beta grid is empty".into()));
    }
    let points = beta_grid
        .par_iter()
        .map(|&beta| {
            let r = variation_operators(beta, params, dim)?;
            Ok(PointSummary {
                beta,
                min_eig_b: r.min_eig_b,
                min_eig_d: r.min_eig_d,
                min_eig_b_minus_d: r.min_eig_b_minus_d,
                stationarity_residual: r.stationarity_residual,
                reduced_bracket_defect: if coefficients.h == 0.0 {
                    0.0
                } else {
                    reduced_bracket_defect(beta, &coefficients, dim)?
                },
                eigenvalues_b_minus_d: r.eigenvalues_b_minus_d,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fold_min = |f: fn(&PointSummary) -> f64| points.iter().map(f).fold(f64::INFINITY, f64::min);
    let worst_min_eig_b_minus_d = fold_min(|p| p.min_eig_b_minus_d);
    let reference = &points[0].eigenvalues_b_minus_d;
    let spectral_spread = points
        .iter()
        .flat_map(|p| {
            p.eigenvalues_b_minus_d
                .iter()
                .zip(reference)
                .map(|(a, b)| (a - b).abs())
        })
        .fold(0.0, f64::max);
    Ok(LocalOptimalityCertificate {
        coefficients,
        dim,
        tol,
        worst_min_eig_b: fold_min(|p| p.min_eig_b),
        worst_min_eig_d: fold_min(|p| p.min_eig_d),
        worst_min_eig_b_minus_d,
        worst_stationarity: points.iter().map(|p| p.stationarity_residual).fold(0.0, f64::max),
        spectral_spread,
        spectra_beta_independent: spectral_spread <= tol,
        reduced_bracket_defect: points.iter().map(|p| p.reduced_bracket_defect).fold(0.0, f64::max),
        pass: worst_min_eig_b_minus_d >= -tol,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::derive_channel_matrices;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn dim(n: usize) -> FockDim {
        FockDim::new(n).unwrap()
    }

    fn coeffs(s: f64, l: f64) -> ModeCoefficients {
        ModeCoefficients::from_params(&ChannelParams::single(s, l).unwrap()).unwrap()
    }

    /// `p(beta) Cov(psi_beta(theta))` under the Gaussian posterior, by tensor
    /// trapezoid quadrature.
    fn posterior_covariance_d(beta: C64, s: f64, l: f64, d: FockDim) -> DMatrix<C64> {
        let params = ChannelParams::single(s, l).unwrap();
        let m = ModeCoefficients::from_params(&params).unwrap();
        let a = params.a()[0];
        let inv_m = params.m()[0].unwrap();
        let sigma = (1.0 / (2.0 * inv_m)).sqrt();
        let step = 0.08 * sigma;
        let half = 125i64;
        let coh = coherent_state(beta, d);
        let n = d.size();
        let mut m1 = nalgebra::DVector::<C64>::zeros(n);
        let mut m2 = DMatrix::<C64>::zeros(n, n);
        let mut total = 0.0;
        for i in -half..=half {
            for j in -half..=half {
                let (x, y) = (i as f64 * step, j as f64 * step);
                let w = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                let theta = beta * a + C64::new(x, y);
                let shift = (theta - beta) / l;
                let psi = creation_exponential(shift, d) * coh.amplitudes()
                    * (-shift * beta.conj()).exp();
                m1 += &psi * C64::new(w, 0.0);
                m2 += &psi * psi.adjoint() * C64::new(w, 0.0);
                total += w;
            }
        }
        m1 /= C64::new(total, 0.0);
        m2 /= C64::new(total, 0.0);
        (m2 - &m1 * m1.adjoint()) * C64::new(m.marginal(beta), 0.0)
    }

    #[test]
    fn d_matches_brute_force_symbol_expansion() {
        let d = dim(12);
        for (s, l) in [(1.0, 1.0), (0.5, 1.2), (3.0, 2.0)] {
            let m = coeffs(s, l);
            for beta in [C64::new(0.0, 0.0), C64::new(0.7, 0.0), C64::new(1.0, 1.0), C64::new(-0.4, 1.5)] {
                let diff = d_construction_defect(&m, &[beta], d).unwrap();
                assert!(diff <= 1e-9, "S={s} L={l} beta={beta}: {diff:e}");
            }
        }
    }

    #[test]
    fn d_is_scaled_posterior_covariance() {
        let d = dim(12);
        for (s, l, beta) in [(1.0, 1.0, C64::new(0.5, 0.0)), (3.0, 2.0, C64::new(0.3, -0.8))] {
            let fast = d_operator(beta, &coeffs(s, l), d).unwrap();
            let quad = posterior_covariance_d(beta, s, l, d);
            let diff = (fast.matrix() - quad).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff <= 1e-9, "{diff:e}");
        }
    }

    #[test]
    fn literal_composite_rate_form_is_indefinite() {
        // p(b) folded into the bracket: rates 1/(S+L) + (1 - H) and 1/(S+L) + 1
        let d = dim(40);
        let m = coeffs(1.0, 1.0);
        let r1 = 1.0 / m.total;
        let term = |r2: f64| {
            crate::fock::normal_ordered_gaussian_any_rate(r1, r1 + r2, C64::new(0.0, 0.0), d)
        };
        let literal = &term(1.0 - m.h) - &term(1.0);
        assert!(hermitian_spectrum(&literal).unwrap().min() < -0.1);
    }

    #[test]
    fn no_signal_gives_zero_operators() {
        let p = ChannelParams::single(0.0, 1.5).unwrap();
        let r = variation_operators(C64::new(0.4, 0.2), &p, dim(20)).unwrap();
        assert_eq!(r.b_op.max_abs(), 0.0);
        assert_eq!(r.d_op.max_abs(), 0.0);
        let c = local_optimality_certificate(&p, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], dim(20), 1e-8)
            .unwrap();
        assert!(c.pass);
    }

    #[test]
    fn stationarity_at_vacuum() {
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        let r = variation_operators(C64::new(0.0, 0.0), &p, dim(40)).unwrap();
        assert!(r.stationarity_residual <= 1e-9);
        assert!(r.min_eig_b >= -1e-9);
    }

    #[test]
    fn psd_triple_off_center() {
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        let r = variation_operators(C64::new(0.7, 0.0), &p, dim(40)).unwrap();
        assert!(r.min_eig_d >= -1e-9);
        assert!(r.min_eig_b_minus_d >= -1e-8);
        assert!(r.stationarity_residual <= 1e-8);
    }

    #[test]
    fn bracket_diagonal_values() {
        let m = coeffs(1.0, 1.0);
        assert_eq!(m.bracket_diagonal(0), 0.0);
        assert!(m.bracket_diagonal(1).abs() < 1e-16);
        assert!((m.bracket_diagonal(2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn displaced_frame_is_diagonal() {
        for (s, l) in [(1.0, 1.0), (0.5, 1.2), (3.0, 2.0)] {
            let m = coeffs(s, l);
            for beta in [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 1.0)] {
                let defect = reduced_bracket_defect(beta, &m, dim(30)).unwrap();
                assert!(defect <= 1e-8, "S={s} L={l} beta={beta}: {defect:e}");
            }
        }
    }

    #[test]
    fn spectra_move_with_beta() {
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        let a = variation_operators(C64::new(0.0, 0.0), &p, dim(40)).unwrap();
        let b = variation_operators(C64::new(1.0, 0.0), &p, dim(40)).unwrap();
        let top = |r: &VariationReport| *r.eigenvalues_b_minus_d.last().unwrap();
        assert!((top(&a) - top(&b)).abs() > 1e-2);
    }

    #[test]
    fn second_variation_samples() {
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        let d = dim(40);
        let beta = C64::new(0.5, 0.0);
        let mut r = variation_operators(beta, &p, d).unwrap();
        let zero = StateVector::from_amplitudes(d, vec![C64::new(0.0, 0.0); d.size()]).unwrap();
        let coh = coherent_state(beta, d);
        let vals = second_variation_form(&mut r, &[zero, coh]).unwrap();
        assert_eq!(vals[0], 0.0);
        assert!(vals[1].abs() <= 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let perts: Vec<StateVector> = (0..100)
            .map(|_| {
                let amps: Vec<C64> = (0..d.size())
                    .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                    .collect();
                let v = StateVector::from_amplitudes(d, amps).unwrap();
                v.scale(C64::new(1.0 / v.norm(), 0.0))
            })
            .collect();
        let vals = second_variation_form(&mut r, &perts).unwrap();
        assert!(vals.iter().all(|&v| v >= -1e-8));
        assert_eq!(r.quadratic_form_samples.len(), 102);
    }

    #[test]
    fn multimode_is_rejected() {
        let p = derive_channel_matrices(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!(variation_operators(C64::new(0.0, 0.0), &p, dim(10)).is_err());
    }

    #[test]
    fn truncation_is_rejected() {
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        assert!(matches!(
            variation_operators(C64::new(3.0, 0.0), &p, dim(10)),
            Err(Error::Truncation(_))
        ));
    }
}
