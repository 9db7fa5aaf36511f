//! Monomials and posynomials over a fixed set of positive variables.
//!
//! Exponents are dense vectors over the registry. Terms whose exponent
//! vectors agree after rounding to 12 decimals are merged on construction.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

const MERGE_SCALE: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    coefficient: f64,
    exponents: Vec<f64>,
}

impl Monomial {
    pub fn new(coefficient: f64, exponents: Vec<f64>) -> Result<Self> {
        if !(coefficient > 0.0) || !coefficient.is_finite() {
            return Err(Error::InvalidArgument(format!("monomial coefficient must be positive and finite, got {coefficient}")));
        }
        if exponents.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("monomial exponents must be finite".into()));
        }
        Ok(Self { coefficient, exponents })
    }

    pub fn constant(value: f64, nvars: usize) -> Result<Self> {
        Self::new(value, vec![0.0; nvars])
    }

    /// `coefficient * x_var`.
    pub fn variable(coefficient: f64, var: usize, nvars: usize) -> Result<Self> {
        let mut exponents = vec![0.0; nvars];
        exponents[var] = 1.0;
        Self::new(coefficient, exponents)
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn nvars(&self) -> usize {
        self.exponents.len()
    }

    /// `log c + a . log x`, the value in log space at `log_x`.
    pub fn log_eval(&self, log_x: &[f64]) -> f64 {
        self.coefficient.ln() + self.exponents.iter().zip(log_x).map(|(a, y)| a * y).sum::<f64>()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.nvars())?;
        let log_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        Ok(self.log_eval(&log_x).exp())
    }

    pub fn mul(&self, other: &Monomial) -> Result<Monomial> {
        same_registry(self.nvars(), other.nvars())?;
        let exponents = self.exponents.iter().zip(&other.exponents).map(|(a, b)| a + b).collect();
        Monomial::new(self.coefficient * other.coefficient, exponents)
    }

    pub fn powf(&self, p: f64) -> Result<Monomial> {
        Monomial::new(self.coefficient.powf(p), self.exponents.iter().map(|a| a * p).collect())
    }

    pub fn recip(&self) -> Monomial {
        Monomial { coefficient: 1.0 / self.coefficient, exponents: self.exponents.iter().map(|a| -a).collect() }
    }

    fn merge_key(&self) -> Vec<i64> {
        self.exponents.iter().map(|a| (a * MERGE_SCALE).round() as i64).collect()
    }
}

fn same_registry(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::RegistryMismatch { left, right });
    }
    Ok(())
}

fn check_point(x: &[f64], nvars: usize) -> Result<()> {
    if x.len() != nvars {
        return Err(Error::RegistryMismatch { left: nvars, right: x.len() });
    }
    if x.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("posynomial arguments must be positive and finite".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    nvars: usize,
    terms: Vec<Monomial>,
}

impl Posynomial {
    /// Builds a posynomial, merging terms with equal exponent vectors.
    pub fn new(terms: Vec<Monomial>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::InvalidArgument("posynomial needs at least one term".into()))?;
        let nvars = first.nvars();
        let mut merged: Vec<Monomial> = Vec::with_capacity(terms.len());
        let mut index: HashMap<Vec<i64>, usize> = HashMap::with_capacity(terms.len());
        for t in terms {
            same_registry(nvars, t.nvars())?;
            match index.get(&t.merge_key()) {
                Some(&i) => merged[i].coefficient += t.coefficient,
                None => {
                    index.insert(t.merge_key(), merged.len());
                    merged.push(t);
                }
            }
        }
        Ok(Self { nvars, terms: merged })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.nvars)?;
        let log_x: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        Ok(self.terms.iter().map(|t| t.log_eval(&log_x).exp()).sum())
    }

    /// Distributed product; evaluation is multiplicative.
    pub fn multiply(&self, other: &Posynomial) -> Result<Posynomial> {
        same_registry(self.nvars, other.nvars)?;
        let mut terms = Vec::with_capacity(self.len() * other.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.mul(b)?);
            }
        }
        Posynomial::new(terms)
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Result<Posynomial> {
        same_registry(self.nvars, m.nvars())?;
        Posynomial::new(self.terms.iter().map(|t| t.mul(m)).collect::<Result<_>>()?)
    }

    /// Best local monomial under-approximation at `x0`:
    /// `prod_l (u_l / beta_l)^beta_l` with `beta_l = u_l(x0) / g(x0)`.
    pub fn condense(&self, x0: &[f64]) -> Result<Monomial> {
        check_point(x0, self.nvars)?;
        let log_x: Vec<f64> = x0.iter().map(|v| v.ln()).collect();
        let logs: Vec<f64> = self.terms.iter().map(|t| t.log_eval(&log_x)).collect();
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = shift + logs.iter().map(|l| (l - shift).exp()).sum::<f64>().ln();
        // log g~ = sum_l beta_l (log c_l - log beta_l) + (sum_l beta_l a_l) . y
        let mut log_coeff = 0.0;
        let mut exponents = vec![0.0; self.nvars];
        for (t, &l) in self.terms.iter().zip(&logs) {
            let log_beta = l - log_total;
            let beta = log_beta.exp();
            if beta == 0.0 {
                continue;
            }
            log_coeff += beta * (t.coefficient.ln() - log_beta);
            for (e, a) in exponents.iter_mut().zip(&t.exponents) {
                *e += beta * a;
            }
        }
        Monomial::new(log_coeff.exp(), exponents)
            .map_err(|_| Error::InvalidArgument("condensed monomial coefficient overflowed".into()))
    }

    /// Weights `beta_l = u_l(x0) / g(x0)` used by [`Posynomial::condense`].
    pub fn condensation_weights(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let total = self.eval(x0)?;
        self.terms.iter().map(|t| t.eval(x0).map(|u| u / total)).collect()
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Posynomial { nvars: m.nvars(), terms: vec![m] }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.coefficient)?;
        for (i, &a) in self.exponents.iter().enumerate() {
            if a != 0.0 {
                write!(f, " * x{}^{}", i + 1, a)?;
            }
        }
        Ok(())
    }
}

/// One term per line, `c * x1^a1 * ...`.
impl fmt::Display for Posynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.terms {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }
}

/// One log-sum-exp function `log sum_m exp(a_m . y + b_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumExp {
    pub exponents: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl LogSumExp {
    pub fn from_posynomial(p: &Posynomial) -> Self {
        Self {
            exponents: p.terms.iter().map(|t| t.exponents.clone()).collect(),
            offsets: p.terms.iter().map(|t| t.coefficient.ln()).collect(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.exponents.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Max-shifted evaluation.
    pub fn value(&self, y: &[f64]) -> f64 {
        let z: Vec<f64> = self.exponents.iter().zip(&self.offsets).map(|(a, b)| dot(a, y) + b).collect();
        log_sum_exp(&z)
    }
}

/// Affine `a . y + b = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineEquality {
    pub exponents: Vec<f64>,
    pub offset: f64,
}

/// Log-variable image of a geometric program:
/// minimize `objective(y)` subject to `inequalities[i](y) <= 0` and `equalities[t](y) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexFormProblem {
    pub nvars: usize,
    pub objective: LogSumExp,
    pub inequalities: Vec<LogSumExp>,
    pub equalities: Vec<AffineEquality>,
}

pub fn to_convex_form(objective: &Posynomial, constraints: &[Posynomial], equalities: &[Monomial]) -> Result<ConvexFormProblem> {
    let nvars = objective.nvars();
    for c in constraints {
        same_registry(nvars, c.nvars())?;
    }
    for e in equalities {
        same_registry(nvars, e.nvars())?;
    }
    Ok(ConvexFormProblem {
        nvars,
        objective: LogSumExp::from_posynomial(objective),
        inequalities: constraints.iter().map(LogSumExp::from_posynomial).collect(),
        equalities: equalities
            .iter()
            .map(|m| AffineEquality { exponents: m.exponents.clone(), offset: m.coefficient.ln() })
            .collect(),
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log sum exp(z)` shifted by `max z`.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
