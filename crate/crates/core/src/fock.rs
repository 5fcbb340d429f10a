//! Single-mode bosonic operator algebra on a truncated Fock space.
//!
//! Every operator lives on the levels `0..=n_max`. Constructions that have an
//! exact finite representation (ladder operators, normal-ordered Gaussians)
//! are built exactly; constructions that do not (the displacement operator)
//! are built in a padded space and cropped, and report how much weight leaks
//! to the top level.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Relative asymmetry accepted (and averaged away) before a spectral call.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Norm deficit above which a truncated coherent state is flagged.
pub const COHERENT_WARN_DEFICIT: f64 = 1e-8;

/// Default relative PSD tolerance, scaled by the largest |eigenvalue|.
pub const DEFAULT_PSD_REL_TOL: f64 = 1e-9;

/// Highest retained occupation number of a truncated mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockDim {
    n_max: usize,
}

impl FockDim {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return invalid("n_max must be at least 1");
        }
        Ok(Self { n_max })
    }

    pub fn n_max(self) -> usize {
        self.n_max
    }

    /// Number of retained levels, `n_max + 1`.
    pub fn size(self) -> usize {
        self.n_max + 1
    }
}

impl TryFrom<usize> for FockDim {
    type Error = Error;

    fn try_from(n_max: usize) -> Result<Self> {
        FockDim::new(n_max)
    }
}

impl From<FockDim> for usize {
    fn from(d: FockDim) -> usize {
        d.n_max
    }
}

/// Dense complex matrix on the retained Fock levels.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedOperator {
    dim: FockDim,
    mat: DMatrix<C64>,
}

impl TruncatedOperator {
    pub fn from_matrix(dim: FockDim, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != dim.size() || mat.ncols() != dim.size() {
            return Err(Error::DimensionMismatch {
                expected: dim.size(),
                found: mat.nrows().max(mat.ncols()),
            });
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("operator has non-finite entries");
        }
        Ok(Self { dim, mat })
    }

    pub(crate) fn from_matrix_unchecked(dim: FockDim, mat: DMatrix<C64>) -> Self {
        debug_assert_eq!(mat.nrows(), dim.size());
        Self { dim, mat }
    }

    pub fn zeros(dim: FockDim) -> Self {
        Self::from_matrix_unchecked(dim, DMatrix::zeros(dim.size(), dim.size()))
    }

    pub fn identity(dim: FockDim) -> Self {
        Self::from_matrix_unchecked(dim, DMatrix::identity(dim.size(), dim.size()))
    }

    pub fn from_diagonal(dim: FockDim, diag: &[f64]) -> Result<Self> {
        if diag.len() != dim.size() {
            return Err(Error::DimensionMismatch {
                expected: dim.size(),
                found: diag.len(),
            });
        }
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self::from_matrix(dim, DMatrix::from_diagonal(&d))
    }

    /// `|v><v|`.
    pub fn projector(v: &StateVector) -> Self {
        Self::from_matrix_unchecked(v.dim, &v.amps * v.amps.adjoint())
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_matrix_unchecked(self.dim, self.mat.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_matrix_unchecked(self.dim, &self.mat * C64::new(s, 0.0))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self::from_matrix_unchecked(self.dim, &self.mat * s)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |A - A^dagger|` over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim.size();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(A + A^dagger) / 2`, without any tolerance check.
    pub fn hermitian_part(&self) -> Self {
        let m = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        Self::from_matrix_unchecked(self.dim, m)
    }

    /// Symmetrizes when the asymmetry is within `HERMITIAN_TOL` relative to
    /// `max(1, max_abs)`, rejects otherwise.
    pub fn hermitize(&self) -> Result<Self> {
        let tol = HERMITIAN_TOL * self.max_abs().max(1.0);
        let defect = self.hermiticity_defect();
        if defect > tol {
            return Err(Error::NotHermitian { defect, tol });
        }
        Ok(self.hermitian_part())
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        StateVector {
            dim: self.dim,
            amps: &self.mat * &v.amps,
        }
    }

    /// `<v| A |v>`.
    pub fn expectation(&self, v: &StateVector) -> C64 {
        v.amps.dotc(&(&self.mat * &v.amps))
    }

    /// `Tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &TruncatedOperator) -> C64 {
        let n = self.dim.size();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.mat[(i, k)] * other.mat[(k, i)];
            }
        }
        acc
    }

    pub fn commutator(&self, other: &TruncatedOperator) -> TruncatedOperator {
        self * other - other * self
    }

    /// Largest entry magnitude of the last row and column.
    pub fn top_level_leakage(&self) -> f64 {
        let top = self.dim.n_max();
        (0..self.dim.size())
            .map(|k| self.mat[(top, k)].norm().max(self.mat[(k, top)].norm()))
            .fold(0.0, f64::max)
    }

    /// Largest entry deviation from `other`.
    pub fn max_abs_diff(&self, other: &TruncatedOperator) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    fn check_same_dim(&self, other: &TruncatedOperator) {
        assert_eq!(
            self.dim, other.dim,
            "operators on different truncations cannot be combined"
        );
    }
}

impl Add for &TruncatedOperator {
    type Output = TruncatedOperator;

    fn add(self, rhs: &TruncatedOperator) -> TruncatedOperator {
        self.check_same_dim(rhs);
        TruncatedOperator::from_matrix_unchecked(self.dim, &self.mat + &rhs.mat)
    }
}

impl Add for TruncatedOperator {
    type Output = TruncatedOperator;

    fn add(self, rhs: TruncatedOperator) -> TruncatedOperator {
        &self + &rhs
    }
}

impl Sub for &TruncatedOperator {
    type Output = TruncatedOperator;

    fn sub(self, rhs: &TruncatedOperator) -> TruncatedOperator {
        self.check_same_dim(rhs);
        TruncatedOperator::from_matrix_unchecked(self.dim, &self.mat - &rhs.mat)
    }
}

impl Sub for TruncatedOperator {
    type Output = TruncatedOperator;

    fn sub(self, rhs: TruncatedOperator) -> TruncatedOperator {
        &self - &rhs
    }
}

impl Mul for &TruncatedOperator {
    type Output = TruncatedOperator;

    fn mul(self, rhs: &TruncatedOperator) -> TruncatedOperator {
        self.check_same_dim(rhs);
        TruncatedOperator::from_matrix_unchecked(self.dim, &self.mat * &rhs.mat)
    }
}

impl Mul for TruncatedOperator {
    type Output = TruncatedOperator;

    fn mul(self, rhs: TruncatedOperator) -> TruncatedOperator {
        &self * &rhs
    }
}

impl Neg for TruncatedOperator {
    type Output = TruncatedOperator;

    fn neg(self) -> TruncatedOperator {
        TruncatedOperator::from_matrix_unchecked(self.dim, -self.mat)
    }
}

/// Wire form of a complex matrix: rows of `[re, im]` pairs.
pub(crate) fn matrix_to_nested(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub(crate) fn nested_to_matrix(rows: &[Vec<[f64; 2]>]) -> Result<DMatrix<C64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return invalid("matrix rows must form a square array");
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

impl Serialize for TruncatedOperator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_nested(&self.mat).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TruncatedOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let mat = nested_to_matrix(&rows).map_err(D::Error::custom)?;
        let dim = FockDim::new(mat.nrows().saturating_sub(1)).map_err(D::Error::custom)?;
        TruncatedOperator::from_matrix(dim, mat).map_err(D::Error::custom)
    }
}

/// Amplitude vector on the retained Fock levels.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dim: FockDim,
    amps: DVector<C64>,
}

impl StateVector {
    pub fn from_amplitudes(dim: FockDim, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != dim.size() {
            return Err(Error::DimensionMismatch {
                expected: dim.size(),
                found: amps.len(),
            });
        }
        Ok(Self {
            dim,
            amps: DVector::from_vec(amps),
        })
    }

    pub(crate) fn from_dvector(dim: FockDim, amps: DVector<C64>) -> Self {
        debug_assert_eq!(amps.len(), dim.size());
        Self { dim, amps }
    }

    /// Fock basis vector `|n>`.
    pub fn basis(dim: FockDim, n: usize) -> Result<Self> {
        if n > dim.n_max() {
            return invalid(format!("level {n} exceeds n_max {}", dim.n_max()));
        }
        let mut amps = DVector::zeros(dim.size());
        amps[n] = C64::new(1.0, 0.0);
        Ok(Self { dim, amps })
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `1 - |v|^2`; for a truncated coherent state this is the weight lost
    /// above `n_max`.
    pub fn norm_deficit(&self) -> f64 {
        1.0 - self.amps.norm_squared()
    }

    /// Probability weight on the top retained level.
    pub fn top_level_weight(&self) -> f64 {
        self.amps[self.dim.n_max()].norm_sqr()
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_dvector(self.dim, &self.amps * s)
    }

    pub fn axpy(&self, s: C64, other: &StateVector) -> Self {
        Self::from_dvector(self.dim, &self.amps + &other.amps * s)
    }
}

/// Annihilation and creation operators, in that order.
///
/// The commutator `[a, a^dagger]` is the identity on levels `0..n_max`; the
/// `(n_max, n_max)` entry equals `-n_max` because of the truncation.
pub fn ladder_operators(dim: FockDim) -> (TruncatedOperator, TruncatedOperator) {
    let n = dim.size();
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    let create = a.adjoint();
    (
        TruncatedOperator::from_matrix_unchecked(dim, a),
        TruncatedOperator::from_matrix_unchecked(dim, create),
    )
}

/// Truncated coherent state `exp(-|beta|^2/2) sum beta^n / sqrt(n!) |n>`.
///
/// Amplitudes come from the recurrence `c_{n+1} = c_n beta / sqrt(n+1)`.
/// Check [`StateVector::norm_deficit`] or [`coherent_truncation_warning`]
/// for the weight lost above `n_max`.
pub fn coherent_state(beta: C64, dim: FockDim) -> StateVector {
    let n = dim.size();
    let mut amps = DVector::zeros(n);
    let mut c = C64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    amps[0] = c;
    for k in 1..n {
        c = c * beta / (k as f64).sqrt();
        amps[k] = c;
    }
    StateVector { dim, amps }
}

/// Weight of the coherent distribution above `n_max`, summed directly from
/// the Poisson tail so that it stays accurate far below `1e-16`.
pub fn coherent_tail_mass(beta: C64, dim: FockDim) -> f64 {
    let x = beta.norm_sqr();
    if x == 0.0 {
        return 0.0;
    }
    // log of the first omitted term e^{-x} x^{n}/n!
    let n0 = dim.size();
    let mut log_term = -x + (n0 as f64) * x.ln() - ln_factorial(n0);
    let mut total = 0.0;
    let mut k = n0;
    loop {
        let t = log_term.exp();
        total += t;
        k += 1;
        log_term += x.ln() - (k as f64).ln();
        if t < 1e-300 || (t < total * 1e-17 && (k as f64) > x) {
            break;
        }
    }
    total
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// True when the truncated coherent state at `beta` loses more than
/// [`COHERENT_WARN_DEFICIT`] of its norm.
pub fn coherent_truncation_warning(beta: C64, dim: FockDim) -> bool {
    coherent_tail_mass(beta, dim) > COHERENT_WARN_DEFICIT
}

/// `exp(beta a^dagger - conj(beta) a)` computed by scaling and squaring on
/// the truncated generator.
pub fn displacement(beta: C64, dim: FockDim) -> TruncatedOperator {
    let (a, ad) = ladder_operators(dim);
    let gen = &ad.mat * beta - &a.mat * beta.conj();
    TruncatedOperator::from_matrix_unchecked(dim, gen.exp())
}

/// Padding used when a displaced operator has to be cropped to `dim`.
pub(crate) fn padded_dim(dim: FockDim) -> FockDim {
    FockDim {
        n_max: 2 * dim.n_max() + 1,
    }
}

/// `D(center) diag(weights) D(center)^dagger`, formed in a padded space and
/// cropped to `dim`. `weights(n)` is evaluated for every padded level.
pub(crate) fn displaced_diagonal(
    center: C64,
    dim: FockDim,
    weights: impl Fn(usize) -> f64,
) -> TruncatedOperator {
    let big = padded_dim(dim);
    let d = displacement(center, big);
    let n = dim.size();
    let nb = big.size();
    let w: Vec<f64> = (0..nb).map(&weights).collect();
    let rows = d.mat.rows(0, n);
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..nb {
                if w[k] != 0.0 {
                    acc += rows[(i, k)] * w[k] * rows[(j, k)].conj();
                }
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc.conj();
        }
    }
    TruncatedOperator::from_matrix_unchecked(dim, out)
}

/// `exp(x a^dagger)` restricted to the retained levels. Lower triangular and
/// exact: `a^dagger` never maps a retained level below itself.
pub(crate) fn creation_exponential(x: C64, dim: FockDim) -> DMatrix<C64> {
    let n = dim.size();
    let mut m = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut e = C64::new(1.0, 0.0);
        m[(col, col)] = e;
        for row in (col + 1)..n {
            // <row| e^{x a+} |col> = x^{row-col} sqrt(row!/col!) / (row-col)!
            e = e * x * (row as f64).sqrt() / ((row - col) as f64);
            m[(row, col)] = e;
        }
    }
    m
}

/// Exact truncated matrix of `scale * :exp(-rate (b - center)^dagger (b - center)):`
/// for any real rate, without the PSD range check.
///
/// Uses the factorization
/// `e^{-rate |center|^2} e^{rate center b^dagger} :e^{-rate b^dagger b}: e^{rate conj(center) b}`
/// with `:e^{-rate b^dagger b}: = diag((1 - rate)^n)`. Every factor is
/// triangular, so the retained block is exact.
pub(crate) fn normal_ordered_gaussian_any_rate(
    scale: f64,
    rate: f64,
    center: C64,
    dim: FockDim,
) -> TruncatedOperator {
    let n = dim.size();
    let e = creation_exponential(center * rate, dim);
    let prefactor = scale * (-rate * center.norm_sqr()).exp();
    let q = 1.0 - rate;
    let diag: Vec<f64> = (0..n).map(|k| q.powi(k as i32)).collect();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let kmax = i.min(j);
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..=kmax {
                acc += e[(i, k)] * diag[k] * e[(j, k)].conj();
            }
            out[(i, j)] = acc * prefactor;
            out[(j, i)] = (acc * prefactor).conj();
        }
    }
    TruncatedOperator::from_matrix_unchecked(dim, out)
}

/// Truncated matrix of `scale * :exp(-rate (b - center)^dagger (b - center)):`.
///
/// Equals `scale * D(center) diag((1 - rate)^n) D(center)^dagger`; Hermitian
/// and PSD for `rate` in `[0, 1]`. Coherent states are eigen-like:
/// `:p(b^dagger, b): |beta> = p(b^dagger, beta) |beta>`.
pub fn normal_ordered_gaussian(
    scale: f64,
    rate: f64,
    center: C64,
    dim: FockDim,
) -> Result<TruncatedOperator> {
    if !(0.0..=1.0).contains(&rate) {
        return invalid(format!("rate {rate} outside [0, 1]"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return invalid(format!("scale {scale} must be positive"));
    }
    Ok(normal_ordered_gaussian_any_rate(scale, rate, center, dim))
}

/// Ascending eigenvalues with matching orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Spectrum {
    /// `V diag(f(lambda)) V^dagger`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let s = f(v);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Eigendecomposition of a Hermitian operator (symmetrized first).
pub fn hermitian_spectrum(op: &TruncatedOperator) -> Result<Spectrum> {
    let h = op.hermitize()?;
    spectrum_of_hermitian_matrix(h.mat)
}

pub(crate) fn spectrum_of_hermitian_matrix(m: DMatrix<C64>) -> Result<Spectrum> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Spectrum { values, vectors })
}

/// Outcome of a positive-semidefiniteness test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// `is_psd` iff the smallest eigenvalue is at least `-tol`.
pub fn psd_check(op: &TruncatedOperator, tol: f64) -> Result<PsdCheck> {
    let spec = hermitian_spectrum(op)?;
    let min_eigenvalue = spec.min();
    Ok(PsdCheck {
        is_psd: min_eigenvalue >= -tol,
        min_eigenvalue,
    })
}

/// [`psd_check`] with tolerance `1e-9 * max|eigenvalue|`.
pub fn psd_check_default(op: &TruncatedOperator) -> Result<PsdCheck> {
    let spec = hermitian_spectrum(op)?;
    let tol = DEFAULT_PSD_REL_TOL * spec.max_abs();
    let min_eigenvalue = spec.min();
    Ok(PsdCheck {
        is_psd: min_eigenvalue >= -tol,
        min_eigenvalue,
    })
}
