//! Occupation-number form of the local optimality inequality:
//! `prod h^n * sum n >= prod h^n - delta_{n,0}` for every occupation tuple.

use num_bigint::{BigInt, Sign};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};

/// Relative slack of the floating-point margin check.
pub const FLOAT_SLACK: f64 = 1e-15;

/// A dyadic rational `mantissa * 2^exponent`, exact for every finite `f64`.
#[derive(Clone, Debug, PartialEq)]
struct Dyadic {
    mantissa: BigInt,
    exponent: i64,
}

impl Dyadic {
    fn one() -> Self {
        Self {
            mantissa: BigInt::from(1),
            exponent: 0,
        }
    }

    fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            return Self {
                mantissa: BigInt::from(0),
                exponent: 0,
            };
        }
        let bits = x.to_bits();
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if raw_exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        let sign = if x < 0.0 { Sign::Minus } else { Sign::Plus };
        Self {
            mantissa: BigInt::from_biguint(sign, mant.into()),
            exponent: exp,
        }
    }

    fn mul(&self, other: &Dyadic) -> Dyadic {
        Dyadic {
            mantissa: &self.mantissa * &other.mantissa,
            exponent: self.exponent + other.exponent,
        }
    }

    fn scale_int(&self, k: i64) -> Dyadic {
        Dyadic {
            mantissa: &self.mantissa * k,
            exponent: self.exponent,
        }
    }

    fn sign(&self) -> Sign {
        self.mantissa.sign()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupationReport {
    pub h: Vec<f64>,
    pub n_max: usize,
    pub tuples_checked: usize,
    /// Every exact margin is nonnegative.
    pub holds: bool,
    /// Every floating margin is at least `-FLOAT_SLACK * scale`.
    pub holds_float: bool,
    /// Smallest floating-point margin.
    pub worst_margin: f64,
    /// Tuples whose exact margin is zero.
    pub equality_cases: Vec<Vec<usize>>,
    /// Tuples whose floating margin is zero although the exact one is positive.
    pub underflowed: usize,
}

impl OccupationReport {
    /// Equality happens exactly at total occupation 0 and 1.
    pub fn equality_at_zero_and_one_only(&self) -> bool {
        let expected = 1 + self.h.len();
        self.equality_cases.len() == expected
            && self
                .equality_cases
                .iter()
                .all(|t| t.iter().sum::<usize>() <= 1)
    }
}

/// Per-tuple verdict.
struct TupleResult {
    tuple: Vec<usize>,
    exact: Sign,
    float_margin: f64,
    float_ok: bool,
}

fn evaluate(tuple: Vec<usize>, powers: &[Vec<Dyadic>], h: &[f64]) -> TupleResult {
    let total: usize = tuple.iter().sum();
    let product = tuple
        .iter()
        .zip(powers)
        .fold(Dyadic::one(), |acc, (&n, p)| acc.mul(&p[n]));
    // LHS - RHS = prod h^n (sum n - 1) + delta; both sides vanish at the origin
    let exact = if total == 0 {
        Sign::NoSign
    } else {
        product.scale_int(total as i64 - 1).sign()
    };
    let float_product: f64 = tuple.iter().zip(h).map(|(&n, &x)| x.powi(n as i32)).product();
    let float_margin = if total == 0 {
        0.0
    } else {
        float_product * (total as f64 - 1.0)
    };
    let scale = float_product * (total as f64).max(1.0);
    TupleResult {
        tuple,
        exact,
        float_margin,
        float_ok: float_margin >= -FLOAT_SLACK * scale,
    }
}

/// Appends every tuple of length `modes` with entries summing to at most
/// `budget`, in lexicographic order.
fn tuples(modes: usize, budget: usize) -> Vec<Vec<usize>> {
    if modes == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..=budget {
        for mut rest in tuples(modes - 1, budget - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive check over all occupation tuples with `sum n <= n_max`.
pub fn occupation_inequality_check(h: &[f64], n_max: usize) -> Result<OccupationReport> {
    if h.is_empty() {
        return invalid("need at least one mode");
    }
    if let Some(x) = h.iter().find(|x| !(0.0..1.0).contains(*x)) {
        return invalid(format!("h = {x} outside [0, 1)"));
    }
    let powers: Vec<Vec<Dyadic>> = h
        .iter()
        .map(|&x| {
            let base = Dyadic::from_f64(x);
            let mut p = vec![Dyadic::one()];
            for k in 0..n_max {
                p.push(p[k].mul(&base));
            }
            p
        })
        .collect();
    let results: Vec<TupleResult> = tuples(h.len(), n_max)
        .into_par_iter()
        .map(|t| evaluate(t, &powers, h))
        .collect();
    let mut equality_cases = Vec::new();
    let mut holds = true;
    let mut holds_float = true;
    let mut worst_margin = f64::INFINITY;
    let mut underflowed = 0;
    for r in &results {
        holds &= r.exact != Sign::Minus;
        holds_float &= r.float_ok;
        worst_margin = worst_margin.min(r.float_margin);
        if r.exact == Sign::NoSign {
            equality_cases.push(r.tuple.clone());
        } else if r.float_margin == 0.0 {
            underflowed += 1;
        }
    }
    Ok(OccupationReport {
        h: h.to_vec(),
        n_max,
        tuples_checked: results.len(),
        holds,
        holds_float,
        worst_margin,
        equality_cases,
        underflowed,
    })
}

/// `LHS` and `RHS` of the diagonal inequality at one tuple, in floating point.
pub fn occupation_sides(h: &[f64], tuple: &[usize]) -> (f64, f64) {
    let product: f64 = tuple.iter().zip(h).map(|(&n, &x)| x.powi(n as i32)).product();
    let total: usize = tuple.iter().sum();
    let delta = if total == 0 { 1.0 } else { 0.0 };
    (product * total as f64, product - delta)
}
