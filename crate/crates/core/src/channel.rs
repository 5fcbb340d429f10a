//! Gaussian boson channel: a coherent signal `theta` with a complex Gaussian
//! prior of covariance `S`, observed through thermal noise whose anti-normal
//! covariance is `L = 1 + nbar`.
//!
//! Modes are independent (diagonal `S`, `L`); multimode densities are products
//! of single-mode ones. Densities are taken with respect to
//! `dmu(z) = prod_nu dRe z_nu dIm z_nu / pi`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{
    coherent_tail_mass, displaced_diagonal, hermitian_spectrum, FockDim, StateVector,
    TruncatedOperator, HERMITIAN_TOL,
};

/// Slack used when re-checking the per-mode matrix inequalities.
const MATRIX_CHAIN_SLACK: f64 = 1e-14;

/// Trace deficit beyond which a truncated thermal state is refused outright.
/// Smaller deficits are reported through [`DensityOperator::trace_deficit`].
pub const GROSS_TRACE_DEFICIT: f64 = 1e-3;

/// Per-mode channel covariances together with the derived posterior and
/// curvature coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelParams {
    s: Vec<f64>,
    l: Vec<f64>,
    h: Vec<f64>,
    a: Vec<f64>,
    /// Posterior inverse covariance; `None` where the prior is degenerate.
    m: Vec<Option<f64>>,
    degenerate_prior: bool,
}

impl ChannelParams {
    pub fn single(s: f64, l: f64) -> Result<Self> {
        derive_channel_matrices(&[s], &[l])
    }

    pub fn modes(&self) -> usize {
        self.s.len()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    /// `H = 1/L - 1/(S+L)` per mode.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Posterior mean gain `A = S/(S+L)` per mode.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Posterior inverse covariance `M = 1/S + 1/L` per mode.
    pub fn m(&self) -> &[Option<f64>] {
        &self.m
    }

    pub fn degenerate_prior(&self) -> bool {
        self.degenerate_prior
    }

    /// Mean thermal photon number `L - 1` of mode `nu`.
    pub fn thermal_photons(&self, nu: usize) -> f64 {
        self.l[nu] - 1.0
    }

    /// `S + L` of mode `nu`: the covariance of the received field.
    pub fn total(&self, nu: usize) -> f64 {
        self.s[nu] + self.l[nu]
    }

    pub(crate) fn require_single_mode(&self) -> Result<()> {
        if self.modes() != 1 {
            return invalid(format!(
                "operator constructions act on one mode, got {} modes",
                self.modes()
            ));
        }
        Ok(())
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.modes() {
            return invalid(format!(
                "{what} has {len} components, channel has {} modes",
                self.modes()
            ));
        }
        Ok(())
    }
}

/// Builds [`ChannelParams`] from per-mode `S >= 0` and `L >= 1`.
pub fn derive_channel_matrices(s: &[f64], l: &[f64]) -> Result<ChannelParams> {
    if s.is_empty() || s.len() != l.len() {
        return invalid("S and L must be non-empty and have the same number of modes");
    }
    let mut h = Vec::with_capacity(s.len());
    let mut a = Vec::with_capacity(s.len());
    let mut m = Vec::with_capacity(s.len());
    let mut degenerate_prior = false;
    for (nu, (&s_nu, &l_nu)) in s.iter().zip(l).enumerate() {
        if !s_nu.is_finite() || s_nu < 0.0 {
            return invalid(format!("S[{nu}] = {s_nu} must be finite and >= 0"));
        }
        if !l_nu.is_finite() || l_nu < 1.0 {
            return invalid(format!(
                "L[{nu}] = {l_nu} is below the vacuum level 1 (sub-vacuum noise)"
            ));
        }
        let total = s_nu + l_nu;
        let h_nu = 1.0 / l_nu - 1.0 / total;
        if !(-MATRIX_CHAIN_SLACK..1.0).contains(&h_nu) {
            return Err(Error::Numerical(format!("H[{nu}] = {h_nu} outside [0, 1)")));
        }
        if 1.0 / total > 1.0 - h_nu + MATRIX_CHAIN_SLACK {
            return Err(Error::Numerical(format!(
                "(S+L)^-1 <= 1 - H violated in mode {nu}"
            )));
        }
        h.push(h_nu.max(0.0));
        if s_nu == 0.0 {
            degenerate_prior = true;
            a.push(0.0);
            m.push(None);
        } else {
            a.push(s_nu / total);
            m.push(Some(1.0 / s_nu + 1.0 / l_nu));
        }
    }
    Ok(ChannelParams {
        s: s.to_vec(),
        l: l.to_vec(),
        h,
        a,
        m,
        degenerate_prior,
    })
}

/// Circular complex Gaussian prior `|S|^-1 exp(-theta^dagger S^-1 theta)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianPrior {
    pub params: ChannelParams,
}

impl GaussianPrior {
    pub fn new(params: ChannelParams) -> Self {
        Self { params }
    }

    pub fn density(&self, theta: &[C64]) -> Result<f64> {
        self.params.check_len("theta", theta.len())?;
        if self.params.degenerate_prior {
            return Err(Error::DegeneratePrior(
                "S = 0 in some mode: the prior is a point mass at 0".into(),
            ));
        }
        Ok(theta
            .iter()
            .zip(&self.params.s)
            .map(|(t, &s)| (-t.norm_sqr() / s).exp() / s)
            .product())
    }
}

/// Hermitian, PSD operator of trace close to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TruncatedOperator", into = "TruncatedOperator")]
pub struct DensityOperator {
    op: TruncatedOperator,
}

impl DensityOperator {
    /// Accepted distance of the trace from one.
    pub const TRACE_TOL: f64 = 1e-6;
    /// Accepted negative eigenvalue, relative to the largest eigenvalue.
    pub const PSD_REL_TOL: f64 = 1e-9;

    pub fn new(op: TruncatedOperator) -> Result<Self> {
        let op = op.hermitize()?;
        let tr = op.trace().re;
        if (tr - 1.0).abs() > Self::TRACE_TOL {
            return invalid(format!("density operator trace {tr} is not 1"));
        }
        let spec = hermitian_spectrum(&op)?;
        if spec.min() < -Self::PSD_REL_TOL * spec.max_abs().max(1e-300) {
            return invalid(format!(
                "density operator has negative eigenvalue {:e}",
                spec.min()
            ));
        }
        Ok(Self { op })
    }

    /// `|v><v|`; `v` must have unit norm within [`Self::TRACE_TOL`].
    pub fn pure(v: &StateVector) -> Result<Self> {
        let n2 = v.norm() * v.norm();
        if (n2 - 1.0).abs() > Self::TRACE_TOL {
            return invalid(format!("state norm^2 {n2} is not 1"));
        }
        Ok(Self {
            op: TruncatedOperator::projector(v),
        })
    }

    pub(crate) fn new_unchecked(op: TruncatedOperator) -> Self {
        Self { op }
    }

    pub fn operator(&self) -> &TruncatedOperator {
        &self.op
    }

    pub fn dim(&self) -> FockDim {
        self.op.dim()
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    /// `1 - Tr rho`: weight lost to the truncation.
    pub fn trace_deficit(&self) -> f64 {
        1.0 - self.trace()
    }
}

impl TryFrom<TruncatedOperator> for DensityOperator {
    type Error = Error;

    fn try_from(op: TruncatedOperator) -> Result<Self> {
        DensityOperator::new(op)
    }
}

impl From<DensityOperator> for TruncatedOperator {
    fn from(d: DensityOperator) -> TruncatedOperator {
        d.op
    }
}

/// Thermal state of anti-normal covariance `l` displaced to `theta`:
/// `D(theta) diag((1/L)(1 - 1/L)^n) D(theta)^dagger`, the truncated matrix of
/// `L^-1 :exp(-(b - theta)^dagger (b - theta)/L):`.
///
/// Hot or strongly displaced states lose weight above `n_max`; the loss is
/// reported by [`DensityOperator::trace_deficit`] and only refused above
/// [`GROSS_TRACE_DEFICIT`].
pub fn displaced_thermal_state(theta: C64, l: f64, dim: FockDim) -> Result<DensityOperator> {
    if !l.is_finite() || l < 1.0 {
        return invalid(format!("L = {l} is below the vacuum level 1"));
    }
    let tail = coherent_tail_mass(theta, dim);
    if tail > 1e-6 {
        return Err(Error::Truncation(format!(
            "coherent amplitude {theta} loses {tail:e} of its norm above n_max = {}",
            dim.n_max()
        )));
    }
    let op = displaced_thermal_block(theta, l, dim);
    let tr = op.trace().re;
    if !(1.0 - GROSS_TRACE_DEFICIT..=1.0 + HERMITIAN_TOL).contains(&tr) {
        return Err(Error::Truncation(format!(
            "displaced thermal state has trace {tr}; increase n_max"
        )));
    }
    Ok(DensityOperator::new_unchecked(op))
}

/// Truncated block of the displaced thermal state with no trace gate. `l`
/// must be at least 1.
pub(crate) fn displaced_thermal_block(theta: C64, l: f64, dim: FockDim) -> TruncatedOperator {
    let ratio = 1.0 - 1.0 / l;
    displaced_diagonal(theta, dim, |n| ratio.powi(n as i32) / l)
}

/// Husimi density `L^-1 exp(-|beta - theta|^2 / L)` of heterodyne outcome
/// `beta` given signal `theta`.
pub fn heterodyne_likelihood(beta: C64, theta: C64, l: f64) -> f64 {
    (-(beta - theta).norm_sqr() / l).exp() / l
}

/// Density of the received field, `prod |S+L|^-1 exp(-|beta|^2 / (S+L))`.
pub fn marginal_output_density(beta: &[C64], params: &ChannelParams) -> Result<f64> {
    params.check_len("beta", beta.len())?;
    Ok(beta
        .iter()
        .enumerate()
        .map(|(nu, b)| {
            let t = params.total(nu);
            (-b.norm_sqr() / t).exp() / t
        })
        .product())
}

/// Posterior `|M| exp(-(theta - A beta)^dagger M (theta - A beta))`.
pub fn posterior_density(theta: &[C64], beta: &[C64], params: &ChannelParams) -> Result<f64> {
    params.check_len("theta", theta.len())?;
    params.check_len("beta", beta.len())?;
    if params.degenerate_prior {
        return Err(Error::DegeneratePrior(
            "S = 0 in some mode: the posterior collapses to the point mass theta = 0".into(),
        ));
    }
    Ok(theta
        .iter()
        .zip(beta)
        .enumerate()
        .map(|(nu, (t, b))| {
            let m = params.m[nu].expect("non-degenerate prior");
            m * (-m * (t - b * params.a[nu]).norm_sqr()).exp()
        })
        .product())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, ladder_operators, normal_ordered_gaussian};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn matrices_for_unit_channel() {
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(p.h()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.a()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.m()[0].unwrap(), 2.0, epsilon = 1e-15);
        assert!(!p.degenerate_prior());
    }

    #[test]
    fn matrices_zero_signal() {
        let p = ChannelParams::single(0.0, 2.0).unwrap();
        assert_eq!(p.h()[0], 0.0);
        assert_eq!(p.a()[0], 0.0);
        assert!(p.m()[0].is_none());
        assert!(p.degenerate_prior());
        assert_eq!(p.thermal_photons(0), 1.0);
    }

    #[test]
    fn matrices_three_two() {
        let p = ChannelParams::single(3.0, 2.0).unwrap();
        assert_abs_diff_eq!(p.h()[0], 0.3, epsilon = 1e-15);
        assert!(1.0 / 5.0 <= 1.0 - p.h()[0]);
    }

    #[test]
    fn matrix_chain_identities() {
        for &(s, l) in &[(1.0, 1.0), (0.5, 1.2), (3.0, 2.0), (10.0, 1.0), (0.01, 7.0)] {
            let p = ChannelParams::single(s, l).unwrap();
            assert_abs_diff_eq!(p.h()[0] + 1.0 / (s + l), 1.0 / l, epsilon = 1e-15);
            assert_abs_diff_eq!(p.a()[0], s / (s + l), epsilon = 1e-15);
            assert_abs_diff_eq!(p.m()[0].unwrap(), 1.0 / s + 1.0 / l, epsilon = 1e-12);
        }
    }

    #[test]
    fn sub_vacuum_noise_rejected() {
        assert!(ChannelParams::single(1.0, 0.9).is_err());
        assert!(derive_channel_matrices(&[-1.0], &[1.0]).is_err());
        assert!(derive_channel_matrices(&[1.0, 2.0], &[1.0]).is_err());
        assert!(displaced_thermal_state(c(0.0, 0.0), 0.5, FockDim::new(5).unwrap()).is_err());
    }

    #[test]
    fn vacuum_state_is_exact() {
        let d = FockDim::new(10).unwrap();
        let rho = displaced_thermal_state(c(0.0, 0.0), 1.0, d).unwrap();
        let mut diag = vec![0.0; 11];
        diag[0] = 1.0;
        assert_eq!(
            rho.operator().max_abs_diff(&TruncatedOperator::from_diagonal(d, &diag).unwrap()),
            0.0
        );
    }

    #[test]
    fn thermal_state_geometric_diagonal() {
        let d = FockDim::new(40).unwrap();
        let rho = displaced_thermal_state(c(0.0, 0.0), 2.0, d).unwrap();
        for n in 0..=40 {
            assert_abs_diff_eq!(rho.operator().get(n, n).re, 0.5f64.powi(n as i32 + 1), epsilon = 1e-14);
        }
        assert!((rho.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_and_second_moments() {
        let d = FockDim::new(50).unwrap();
        let theta = c(1.2, 0.0);
        let rho = displaced_thermal_state(theta, 1.5, d).unwrap();
        let (a, _) = ladder_operators(d);
        let mean = rho.operator().trace_product(&a);
        assert!((mean - theta).norm() <= 1e-6);
        // <(b - theta)(b - theta)^dagger> = L
        let id = TruncatedOperator::identity(d);
        let shifted = &a - &id.scale_complex(theta);
        let anti = &shifted * &shifted.adjoint();
        let second = rho.operator().trace_product(&anti);
        // the top level of the truncated product is unreliable; rho has no weight there
        assert!((second.re - 1.5).abs() <= 1e-5, "{second}");
    }

    #[test]
    fn two_route_equality_with_normal_ordered_gaussian() {
        let d = FockDim::new(30).unwrap();
        for &(l, theta) in &[(1.0, c(0.4, 0.2)), (1.5, c(-0.8, 0.3)), (3.0, c(1.1, -0.6))] {
            let rho = displaced_thermal_state(theta, l, d).unwrap();
            let nog = normal_ordered_gaussian(1.0 / l, 1.0 / l, theta, d).unwrap();
            assert!(rho.operator().max_abs_diff(&nog) <= 1e-10);
        }
    }

    #[test]
    fn likelihood_examples() {
        assert_abs_diff_eq!(heterodyne_likelihood(c(0.3, 0.1), c(0.3, 0.1), 1.0), 1.0);
        assert_abs_diff_eq!(heterodyne_likelihood(c(1.0, 0.0), c(0.0, 0.0), 1.0), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(heterodyne_likelihood(c(0.5, 0.0), c(0.5, 0.0), 2.0), 0.5);
    }

    #[test]
    fn likelihood_is_husimi_density() {
        let d = FockDim::new(40).unwrap();
        let theta = c(0.0, 0.0);
        let beta = c(1.0, 0.0);
        let rho = displaced_thermal_state(theta, 1.0, d).unwrap();
        let q = rho.operator().expectation(&coherent_state(beta, d)).re;
        assert!((q - heterodyne_likelihood(beta, theta, 1.0)).abs() <= 1e-8);
        let rho = displaced_thermal_state(c(0.3, -0.4), 1.7, d).unwrap();
        let q = rho.operator().expectation(&coherent_state(c(-0.5, 0.2), d)).re;
        assert!((q - heterodyne_likelihood(c(-0.5, 0.2), c(0.3, -0.4), 1.7)).abs() <= 1e-8);
    }

    #[test]
    fn marginal_examples() {
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(marginal_output_density(&[c(0.0, 0.0)], &p).unwrap(), 0.5);
        let r = 2f64.sqrt();
        assert_abs_diff_eq!(
            marginal_output_density(&[c(r, 0.0)], &p).unwrap(),
            0.5 * (-1.0f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn marginal_is_convolution_of_likelihood_and_prior() {
        // midpoint quadrature of likelihood x prior over a 6 sigma grid
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        let prior = GaussianPrior::new(p.clone());
        let beta = c(0.3, 0.0);
        let step = 0.1;
        let half = (6.0 / step) as i32;
        let mut acc = 0.0;
        for i in -half..=half {
            for j in -half..=half {
                let theta = c(i as f64 * step, j as f64 * step);
                acc += heterodyne_likelihood(beta, theta, 1.0)
                    * prior.density(&[theta]).unwrap()
                    * step
                    * step
                    / std::f64::consts::PI;
            }
        }
        let closed = marginal_output_density(&[beta], &p).unwrap();
        assert!((acc - closed).abs() <= 1e-4, "{acc} vs {closed}");
    }

    #[test]
    fn posterior_examples() {
        let p = ChannelParams::single(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(p.a()[0] * 2.0, 1.0);
        assert_abs_diff_eq!(p.m()[0].unwrap(), 2.0);
        // peak at the mean A beta
        let at_mean = posterior_density(&[c(1.0, 0.0)], &[c(2.0, 0.0)], &p).unwrap();
        assert_abs_diff_eq!(at_mean, 2.0);
        let q = ChannelParams::single(3.0, 2.0).unwrap();
        let at_zero = posterior_density(&[c(0.0, 0.0)], &[c(0.0, 0.0)], &q).unwrap();
        assert_abs_diff_eq!(at_zero, q.m()[0].unwrap());
    }

    #[test]
    fn posterior_bayes_identity() {
        let p = ChannelParams::single(1.0, 1.5).unwrap();
        let prior = GaussianPrior::new(p.clone());
        let theta = c(0.3, 0.1);
        let beta = c(-0.2, 0.0);
        let lhs = posterior_density(&[theta], &[beta], &p).unwrap()
            * marginal_output_density(&[beta], &p).unwrap();
        let rhs = heterodyne_likelihood(beta, theta, 1.5) * prior.density(&[theta]).unwrap();
        assert!(((lhs - rhs) / rhs).abs() <= 1e-10);
    }

    #[test]
    fn posterior_rejects_degenerate_prior() {
        let p = ChannelParams::single(0.0, 1.0).unwrap();
        assert!(matches!(
            posterior_density(&[c(0.0, 0.0)], &[c(0.0, 0.0)], &p),
            Err(Error::DegeneratePrior(_))
        ));
    }

    #[test]
    fn prior_normalizes_on_grid() {
        let p = GaussianPrior::new(ChannelParams::single(2.0, 1.0).unwrap());
        let step = 0.1;
        let half = (10.0 / step) as i32;
        let mut acc = 0.0;
        for i in -half..=half {
            for j in -half..=half {
                let t = c(i as f64 * step, j as f64 * step);
                acc += p.density(&[t]).unwrap() * step * step / std::f64::consts::PI;
            }
        }
        assert!((acc - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn multimode_densities_factorize() {
        let p = derive_channel_matrices(&[1.0, 3.0], &[1.0, 2.0]).unwrap();
        let b = [c(0.2, 0.1), c(-0.4, 0.3)];
        let single0 = ChannelParams::single(1.0, 1.0).unwrap();
        let single1 = ChannelParams::single(3.0, 2.0).unwrap();
        let prod = marginal_output_density(&b[..1], &single0).unwrap()
            * marginal_output_density(&b[1..], &single1).unwrap();
        assert_abs_diff_eq!(marginal_output_density(&b, &p).unwrap(), prod, epsilon = 1e-15);
        assert!(marginal_output_density(&b[..1], &p).is_err());
    }

    #[test]
    fn eigen_action_at_estimate_point() {
        let d = FockDim::new(40).unwrap();
        for &l in &[1.0, 1.5, 2.0, 3.0] {
            for &beta in &[c(0.0, 0.0), c(1.2, -0.7), c(-2.0, 0.0)] {
                let rho = displaced_thermal_state(beta, l, d).unwrap();
                let v = coherent_state(beta, d);
                let r = rho.operator().apply(&v).axpy(C64::new(-1.0 / l, 0.0), &v);
                assert!(r.norm() <= 1e-7, "L={l} beta={beta}: {:e}", r.norm());
            }
        }
    }
}
