//! Truncated Taylor jets at a base point and the formal-solution recursion.
//!
//! A [`Jet`] is a polynomial in the offsets `x - x0` (real slots) and
//! `ζ - ζ0` (complex slots), kept up to a total-degree budget `D`. Each jet
//! also tracks up to which degree its coefficients are trustworthy.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::weights::WeightSequence;

const PRUNE: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("jet arity or base point mismatch: {0}")]
    ArityMismatch(String),
    #[error("degree budget exhausted at k = {k} (valid degree {valid})")]
    BudgetExhausted { k: usize, valid: i64 },
    #[error("variable index {0} out of range")]
    BadVariable(usize),
    #[error("growth fit failed: no constant up to 2^16 bounds the {0} sequence")]
    FitFailed(&'static str),
    #[error("invalid jet data: {0}")]
    Invalid(String),
}

/// Highest total degree to which a jet agrees with the object it stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Exact,
    UpTo(i64),
}

impl Validity {
    fn as_bound(self) -> Option<i64> {
        match self {
            Validity::Exact => None,
            Validity::UpTo(v) => Some(v),
        }
    }

    fn from_bound(b: Option<i64>) -> Self {
        b.map_or(Validity::Exact, Validity::UpTo)
    }

    pub fn min(self, other: Validity) -> Validity {
        match (self.as_bound(), other.as_bound()) {
            (None, b) | (b, None) => Validity::from_bound(b),
            (Some(a), Some(b)) => Validity::UpTo(a.min(b)),
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Validity::Exact)
    }
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Validity::Exact => write!(f, "exact"),
            Validity::UpTo(v) => write!(f, "{v}"),
        }
    }
}

/// Base point and degree budget shared by a family of jets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetSpace {
    pub x: Vec<f64>,
    pub zeta: Vec<Complex64>,
    #[serde(rename = "D")]
    pub degree: usize,
}

impl JetSpace {
    pub fn new(x: Vec<f64>, zeta: Vec<Complex64>, degree: usize) -> Self {
        Self { x, zeta, degree }
    }

    /// Origin of `R^n_x × C^n_zeta`.
    pub fn origin(n_x: usize, n_zeta: usize, degree: usize) -> Self {
        Self::new(vec![0.0; n_x], vec![Complex64::new(0.0, 0.0); n_zeta], degree)
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_zeta(&self) -> usize {
        self.zeta.len()
    }

    pub fn n_vars(&self) -> usize {
        self.x.len() + self.zeta.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    space: JetSpace,
    coeffs: BTreeMap<Vec<u32>, Complex64>,
    validity: Validity,
    lossy: bool,
}

fn total(idx: &[u32]) -> usize {
    idx.iter().map(|&e| e as usize).sum()
}

impl Jet {
    pub fn zero(space: &JetSpace) -> Self {
        Self { space: space.clone(), coeffs: BTreeMap::new(), validity: Validity::Exact, lossy: false }
    }

    pub fn constant(space: &JetSpace, c: Complex64) -> Self {
        let mut j = Self::zero(space);
        j.insert(vec![0; space.n_vars()], c);
        j
    }

    pub fn real(space: &JetSpace, c: f64) -> Self {
        Self::constant(space, Complex64::new(c, 0.0))
    }

    /// The coordinate function of slot `var` (x slots first, then ζ slots).
    pub fn var(space: &JetSpace, var: usize) -> Result<Self, JetError> {
        let n = space.n_vars();
        if var >= n {
            return Err(JetError::BadVariable(var));
        }
        let base = if var < space.n_x() { Complex64::new(space.x[var], 0.0) } else { space.zeta[var - space.n_x()] };
        let mut j = Self::constant(space, base);
        if space.degree >= 1 {
            let mut idx = vec![0; n];
            idx[var] = 1;
            j.insert(idx, Complex64::new(1.0, 0.0));
        }
        Ok(j)
    }

    pub fn from_terms(
        space: &JetSpace,
        terms: impl IntoIterator<Item = (Vec<u32>, Complex64)>,
        validity: Validity,
    ) -> Result<Self, JetError> {
        let mut j = Self::zero(space);
        j.validity = validity;
        for (idx, c) in terms {
            if idx.len() != space.n_vars() {
                return Err(JetError::Invalid(format!("multi-index {idx:?} has wrong length")));
            }
            if total(&idx) > space.degree {
                return Err(JetError::Invalid(format!("multi-index {idx:?} exceeds degree budget {}", space.degree)));
            }
            let e = j.coeffs.entry(idx).or_insert(Complex64::new(0.0, 0.0));
            *e += c;
        }
        j.coeffs.retain(|_, c| c.norm() > PRUNE);
        Ok(j)
    }

    /// Taylor data in a single slot: `Σ c_k (y - y0)^k` with `c.len() - 1 <= D`.
    /// The jet is marked valid up to the budget `D`.
    pub fn univariate(space: &JetSpace, var: usize, c: &[f64]) -> Result<Self, JetError> {
        if var >= space.n_vars() {
            return Err(JetError::BadVariable(var));
        }
        let terms = c.iter().enumerate().take(space.degree + 1).map(|(k, &v)| {
            let mut idx = vec![0; space.n_vars()];
            idx[var] = k as u32;
            (idx, Complex64::new(v, 0.0))
        });
        Self::from_terms(space, terms, Validity::UpTo(space.degree as i64))
    }

    fn insert(&mut self, idx: Vec<u32>, c: Complex64) {
        if c.norm() > PRUNE {
            self.coeffs.insert(idx, c);
        }
    }

    pub fn space(&self) -> &JetSpace {
        &self.space
    }

    pub fn degree_budget(&self) -> usize {
        self.space.degree
    }

    pub fn validity(&self) -> Validity {
        self.validity
    }

    pub fn with_validity(mut self, v: Validity) -> Self {
        self.validity = v;
        self
    }

    pub fn is_lossy(&self) -> bool {
        self.lossy
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff(&self, idx: &[u32]) -> Complex64 {
        self.coeffs.get(idx).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Complex64)> {
        self.coeffs.iter()
    }

    /// Lowest total degree carrying a stored coefficient.
    pub fn lowest_degree(&self) -> Option<usize> {
        self.coeffs.keys().map(|k| total(k)).min()
    }

    fn effective_order(&self) -> Option<i64> {
        let low = self.lowest_degree().map(|d| d as i64);
        match (low, self.validity.as_bound()) {
            (None, None) => None,
            (Some(l), None) => Some(l),
            (None, Some(v)) => Some(v + 1),
            (Some(l), Some(v)) => Some(l.min(v + 1)),
        }
    }

    fn check(&self, other: &Jet) -> Result<(), JetError> {
        if self.space != other.space {
            return Err(JetError::ArityMismatch(format!(
                "({} x, {} ζ, D = {}) vs ({} x, {} ζ, D = {})",
                self.space.n_x(),
                self.space.n_zeta(),
                self.space.degree,
                other.space.n_x(),
                other.space.n_zeta(),
                other.space.degree
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        let mut out = self.clone();
        for (idx, c) in &other.coeffs {
            let e = out.coeffs.entry(idx.clone()).or_insert(Complex64::new(0.0, 0.0));
            *e += c;
        }
        out.coeffs.retain(|_, c| c.norm() > PRUNE);
        out.validity = self.validity.min(other.validity);
        out.lossy = self.lossy || other.lossy;
        Ok(out)
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> Jet {
        let mut out = self.clone();
        out.coeffs = self.coeffs.iter().map(|(k, c)| (k.clone(), c * s)).filter(|(_, c)| c.norm() > PRUNE).collect();
        out
    }

    pub fn mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        let d = self.space.degree;
        let mut coeffs: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        let mut dropped = false;
        for (ia, ca) in &self.coeffs {
            let da = total(ia);
            for (ib, cb) in &other.coeffs {
                if da + total(ib) > d {
                    dropped = true;
                    continue;
                }
                let idx: Vec<u32> = ia.iter().zip(ib).map(|(a, b)| a + b).collect();
                *coeffs.entry(idx).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
            }
        }
        coeffs.retain(|_, c| c.norm() > PRUNE);
        let bound = |v: Validity, ord: Option<i64>| match (v.as_bound(), ord) {
            (None, _) => None,
            (Some(_), None) => None,
            (Some(v), Some(o)) => Some(v + o),
        };
        let mut validity =
            Validity::from_bound(bound(self.validity, other.effective_order())).min(Validity::from_bound(bound(
                other.validity,
                self.effective_order(),
            )));
        if dropped {
            validity = validity.min(Validity::UpTo(d as i64));
        }
        if let Validity::UpTo(v) = validity {
            validity = Validity::UpTo(v.min(d as i64));
        }
        Ok(Jet { space: self.space.clone(), coeffs, validity, lossy: self.lossy || other.lossy || dropped })
    }

    /// Formal partial derivative in slot `var`; for ζ slots this is the
    /// holomorphic derivative.
    pub fn diff(&self, var: usize) -> Result<Jet, JetError> {
        if var >= self.space.n_vars() {
            return Err(JetError::BadVariable(var));
        }
        let mut out = Jet::zero(&self.space);
        for (idx, c) in &self.coeffs {
            let e = idx[var];
            if e == 0 {
                continue;
            }
            let mut j = idx.clone();
            j[var] -= 1;
            out.insert(j, c * e as f64);
        }
        out.validity = match self.validity {
            Validity::Exact => Validity::Exact,
            Validity::UpTo(v) => Validity::UpTo(v - 1),
        };
        out.lossy = self.lossy;
        Ok(out)
    }

    /// Evaluates the polynomial at `(x, ζ)` (absolute coordinates).
    pub fn eval(&self, x: &[f64], zeta: &[Complex64]) -> Complex64 {
        let nx = self.space.n_x();
        let offs: Vec<Complex64> = (0..self.space.n_vars())
            .map(|i| {
                if i < nx {
                    Complex64::new(x[i] - self.space.x[i], 0.0)
                } else {
                    zeta[i - nx] - self.space.zeta[i - nx]
                }
            })
            .collect();
        self.coeffs
            .iter()
            .map(|(idx, c)| idx.iter().zip(&offs).fold(*c, |acc, (&e, o)| if e == 0 { acc } else { acc * o.powu(e) }))
            .sum()
    }

    /// Largest coefficient modulus of `self - other`.
    pub fn max_coeff_diff(&self, other: &Jet) -> Result<f64, JetError> {
        Ok(self.sub(other)?.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max))
    }

    /// Inserts a new real slot at position `n_x` with base value `x0`.
    pub fn insert_x_slot(&self, x0: f64) -> Jet {
        let nx = self.space.n_x();
        let mut space = self.space.clone();
        space.x.push(x0);
        let coeffs = self
            .coeffs
            .iter()
            .map(|(idx, c)| {
                let mut j = idx.clone();
                j.insert(nx, 0);
                (j, *c)
            })
            .collect();
        Jet { space, coeffs, validity: self.validity, lossy: self.lossy }
    }
}

#[derive(Serialize, Deserialize)]
struct BasePointRepr {
    x: Vec<f64>,
    zeta: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct JetRepr {
    base_point: BasePointRepr,
    n_x: usize,
    n_zeta: usize,
    #[serde(rename = "D")]
    degree: usize,
    coeffs: Vec<(Vec<u32>, f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid_degree: Option<i64>,
}

impl Serialize for Jet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        JetRepr {
            base_point: BasePointRepr {
                x: self.space.x.clone(),
                zeta: self.space.zeta.iter().map(|z| [z.re, z.im]).collect(),
            },
            n_x: self.space.n_x(),
            n_zeta: self.space.n_zeta(),
            degree: self.space.degree,
            coeffs: self.coeffs.iter().map(|(k, c)| (k.clone(), c.re, c.im)).collect(),
            valid_degree: self.validity.as_bound(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Jet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = JetRepr::deserialize(d)?;
        if r.base_point.x.len() != r.n_x || r.base_point.zeta.len() != r.n_zeta {
            return Err(serde::de::Error::custom("base_point does not match n_x / n_zeta"));
        }
        let space =
            JetSpace::new(r.base_point.x, r.base_point.zeta.iter().map(|z| Complex64::new(z[0], z[1])).collect(), r.degree);
        Jet::from_terms(
            &space,
            r.coeffs.into_iter().map(|(k, re, im)| (k, Complex64::new(re, im))),
            Validity::from_bound(r.valid_degree),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// `L = ∂_t + Σ a_i ∂_{x_i} + Σ b_j ∂_{ζ_j}`. When `time_dependent` is set,
/// the last real slot of every coefficient jet stands for `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldJet {
    pub a: Vec<Jet>,
    pub b: Vec<Jet>,
    #[serde(default)]
    pub time_dependent: bool,
}

impl VectorFieldJet {
    pub fn new(a: Vec<Jet>, b: Vec<Jet>) -> Result<Self, JetError> {
        let f = Self { a, b, time_dependent: false };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), JetError> {
        let first = self.a.first().or(self.b.first()).ok_or_else(|| JetError::Invalid("empty vector field".into()))?;
        let sp = first.space();
        let n_spatial = if self.time_dependent { sp.n_x().saturating_sub(1) } else { sp.n_x() };
        if self.a.len() != n_spatial || self.b.len() != sp.n_zeta() {
            return Err(JetError::ArityMismatch(format!(
                "{} a-coefficients and {} b-coefficients for {} x and {} ζ slots",
                self.a.len(),
                self.b.len(),
                n_spatial,
                sp.n_zeta()
            )));
        }
        for j in self.a.iter().chain(&self.b) {
            first.check(j)?;
        }
        Ok(())
    }

    pub fn space(&self) -> &JetSpace {
        self.a.first().or(self.b.first()).expect("validated field").space()
    }

    /// `Σ a_i ∂_{x_i} u + Σ b_j ∂_{ζ_j} u`.
    pub fn apply_spatial(&self, u: &Jet) -> Result<Jet, JetError> {
        let nx = u.space().n_x();
        let mut acc = Jet::zero(u.space());
        for (i, a) in self.a.iter().enumerate() {
            acc = acc.add(&a.mul(&u.diff(i)?)?)?;
        }
        for (j, b) in self.b.iter().enumerate() {
            acc = acc.add(&b.mul(&u.diff(nx + j)?)?)?;
        }
        Ok(acc)
    }

    /// Treats `t` as an extra spatial slot with unit coefficient, so that the
    /// new field `∂_s + L` is time independent.
    pub fn time_augment(&self) -> Result<VectorFieldJet, JetError> {
        self.validate()?;
        let (mut a, b) = if self.time_dependent {
            (self.a.clone(), self.b.clone())
        } else {
            (
                self.a.iter().map(|j| j.insert_x_slot(0.0)).collect::<Vec<_>>(),
                self.b.iter().map(|j| j.insert_x_slot(0.0)).collect::<Vec<_>>(),
            )
        };
        let space = a.first().or(b.first()).expect("validated field").space().clone();
        a.push(Jet::real(&space, 1.0));
        VectorFieldJet::new(a, b)
    }
}

/// Polynomial in `t` with jet coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePoly {
    pub coeffs: Vec<Jet>,
}

impl TimePoly {
    pub fn eval(&self, x: &[f64], zeta: &[Complex64], t: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * t + c.eval(x, zeta))
    }
}

/// `u♯ = Σ u_k t^k`. Terms beyond the stored ones are zero once the series
/// is exhausted.
#[derive(Debug, Clone)]
pub struct FormalSeries {
    field: Option<VectorFieldJet>,
    terms: Vec<Jet>,
    n_max: usize,
    exhausted: bool,
}

impl FormalSeries {
    /// Wraps explicit terms, e.g. synthetic growth fixtures.
    pub fn from_terms(terms: Vec<Jet>) -> Self {
        let n_max = terms.len().saturating_sub(1);
        Self { field: None, terms, n_max, exhausted: false }
    }

    pub fn field(&self) -> Option<&VectorFieldJet> {
        self.field.as_ref()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// Number of stored terms; all `u_k` with `k >= len` are zero when exhausted.
    pub fn stored(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Jet] {
        &self.terms
    }

    pub fn term(&self, k: usize) -> Option<Jet> {
        match self.terms.get(k) {
            Some(j) => Some(j.clone()),
            None if k <= self.n_max || self.exhausted => {
                let last = self.terms.last()?;
                Some(Jet::zero(last.space()).with_validity(last.validity()))
            }
            None => None,
        }
    }

    pub fn valid_degree(&self, k: usize) -> Option<Validity> {
        self.term(k).map(|j| j.validity())
    }

    /// `Tⁿ u♯ = Σ_{k ≤ n} u_k t^k`.
    pub fn truncate(&self, n: usize) -> Result<TimePoly, JetError> {
        (0..=n)
            .map(|k| self.term(k).ok_or(JetError::BudgetExhausted { k, valid: -1 }))
            .collect::<Result<Vec<_>, _>>()
            .map(|coeffs| TimePoly { coeffs })
    }

    pub fn eval_truncated(&self, n: usize, x: &[f64], zeta: &[Complex64], t: Complex64) -> Complex64 {
        let top = n.min(self.terms.len().saturating_sub(1));
        self.terms[..=top].iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * t + c.eval(x, zeta))
    }

    /// `max |coeff|` of `L(Tⁿu♯) + (n+1) u_{n+1} tⁿ`.
    pub fn residual_check(&self, n: usize) -> Result<f64, JetError> {
        let field = self.field.as_ref().ok_or_else(|| JetError::Invalid("series carries no vector field".into()))?;
        let lp = apply_field(field, &self.truncate(n)?)?;
        let next = self.term(n + 1).ok_or(JetError::BudgetExhausted { k: n + 1, valid: -1 })?;
        let mut dev: f64 = 0.0;
        for (k, c) in lp.coeffs.iter().enumerate() {
            let target = if k == n { next.scale(Complex64::new(-((n + 1) as f64), 0.0)) } else { Jet::zero(c.space()) };
            dev = dev.max(c.max_coeff_diff(&target)?);
        }
        Ok(dev)
    }
}

fn budget_check(j: &Jet, k: usize) -> Result<(), JetError> {
    match j.validity() {
        Validity::UpTo(v) if v < 0 => Err(JetError::BudgetExhausted { k, valid: v }),
        _ => Ok(()),
    }
}

/// `u_0 = f`, `u_k = -(1/k) (Σ a_i ∂_{x_i} u_{k-1} + Σ b_j ∂_{ζ_j} u_{k-1})`,
/// stopping early once a term vanishes with no further loss of validity.
pub fn formal_solution(field: &VectorFieldJet, f: &Jet, n_max: usize) -> Result<FormalSeries, JetError> {
    field.validate()?;
    if field.time_dependent {
        return Err(JetError::Invalid("time-dependent field: apply time_augment first".into()));
    }
    f.check(&Jet::zero(field.space()))?;
    let mut terms = vec![f.clone()];
    let mut exhausted = false;
    for k in 1..=n_max {
        let prev = terms.last().expect("u_0 present");
        let next = field.apply_spatial(prev)?.scale(Complex64::new(-1.0 / k as f64, 0.0));
        budget_check(&next, k)?;
        let stationary = next.is_zero() && next.validity() == prev.validity();
        terms.push(next);
        if stationary || (terms[k].is_zero() && terms[k].validity().is_exact()) {
            exhausted = true;
            break;
        }
    }
    Ok(FormalSeries { field: Some(field.clone()), terms, n_max, exhausted })
}

/// `∂_t p + Σ a_i ∂_{x_i} p + Σ b_j ∂_{ζ_j} p` for a time-independent field.
pub fn apply_field(field: &VectorFieldJet, p: &TimePoly) -> Result<TimePoly, JetError> {
    let n = p.coeffs.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut c = field.apply_spatial(&p.coeffs[k])?;
        if k + 1 < n {
            c = c.add(&p.coeffs[k + 1].scale(Complex64::new((k + 1) as f64, 0.0)))?;
        }
        budget_check(&c, k)?;
        out.push(c);
    }
    Ok(TimePoly { coeffs: out })
}

/// Sampling box for sup-norms: intervals for the real slots, fixed ζ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBox {
    pub x: Vec<(f64, f64)>,
    #[serde(default)]
    pub zeta: Vec<Complex64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    33
}

impl EvalBox {
    pub fn points(&self) -> Vec<Vec<f64>> {
        let n = self.samples.max(2);
        let mut pts = vec![Vec::new()];
        for &(lo, hi) in &self.x {
            pts = pts
                .into_iter()
                .flat_map(|p| {
                    (0..n).map(move |i| {
                        let mut q = p.clone();
                        q.push(lo + (hi - lo) * i as f64 / (n - 1) as f64);
                        q
                    })
                })
                .collect();
        }
        pts
    }

    pub fn sup(&self, j: &Jet) -> f64 {
        self.points().iter().map(|p| j.eval(p, &self.zeta).norm()).fold(0.0, f64::max)
    }

    pub fn describe(&self) -> String {
        let axes: Vec<String> = self.x.iter().map(|(a, b)| format!("[{a}, {b}]")).collect();
        format!("{} ({} samples per axis)", axes.join(" x "), self.samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    #[serde(rename = "C_fit")]
    pub c_fit: f64,
    #[serde(rename = "B_fit")]
    pub b_fit: f64,
    #[serde(rename = "K_box")]
    pub k_box: String,
}

/// Smallest grid value `2^{j/4}` (j ≥ 0) that is at least `exp(ln_c)`.
fn grid_up(ln_c: f64, what: &'static str) -> Result<f64, JetError> {
    let step = std::f64::consts::LN_2 / 4.0;
    let j = if ln_c <= 0.0 { 0 } else { (ln_c / step - 1e-9).ceil() as i32 };
    if j > 64 {
        return Err(JetError::FitFailed(what));
    }
    Ok(2f64.powf(j as f64 / 4.0))
}

/// Fits `sup|u_k| <= C^{1+k} m_k` and `sup|(n+1) u_{n+1}| <= B^{n+1} m_n`
/// over the stored terms.
pub fn growth_fit(s: &FormalSeries, seq: &WeightSequence, bx: &EvalBox) -> Result<GrowthEstimate, JetError> {
    let kmax = seq.k_max();
    let sups: Vec<f64> = s.terms().iter().take(kmax + 1).map(|u| bx.sup(u)).collect();
    let mut ln_c = f64::NEG_INFINITY;
    let mut ln_b = f64::NEG_INFINITY;
    for (k, &sup) in sups.iter().enumerate() {
        if sup > 0.0 {
            ln_c = ln_c.max((sup.ln() - seq.ln_m(k)) / (1 + k) as f64);
            if k >= 1 {
                let n = k - 1;
                ln_b = ln_b.max(((k as f64 * sup).ln() - seq.ln_m(n)) / k as f64);
            }
        }
    }
    Ok(GrowthEstimate { c_fit: grid_up(ln_c, "u_k")?, b_fit: grid_up(ln_b, "residual")?, k_box: bx.describe() })
}
