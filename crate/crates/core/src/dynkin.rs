//! Dyn'kin disk-kernel approximate solutions.
//!
//! For `t != 0` the approximate solution is
//! `u(x, t) = ∫ ψ(w) Σ_{k ≤ N((1+ε) C |z|)} u_k(x) z^k dA_w` with
//! `z = t + |t| w`, which is the kernel integral after the change of
//! variables. `Lu` is obtained by differentiating the kernel in `t` under the
//! integral and applying the spatial part of `L` to the series termwise.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::{formal_solution, growth_fit, EvalBox, FormalSeries, Jet, JetError, JetSpace, Validity, VectorFieldJet};
use crate::weights::{Assoc, WeightError, WeightSequence};

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_NODES: usize = 64;
const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynkinError {
    #[error("invalid kernel parameter: {0}")]
    BadParameter(String),
    #[error("quadrature too coarse: normalization residual {0:e}")]
    QuadratureTooCoarse(f64),
    #[error("|t| = {t} outside the evaluation range (0, {max}]")]
    OutOfRange { t: f64, max: f64 },
    #[error("series holds {stored} terms but index {needed} is required")]
    SeriesTooShort { needed: usize, stored: usize },
    #[error("flatness fit failed: h(Q|t|) underflows for every Q")]
    FitFailed,
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelNode {
    pub w: Complex64,
    /// Area weight `ρ w_ρ Δθ` of the polar rule.
    pub weight: f64,
    pub psi: f64,
    /// `dψ̂/dq` with `ψ(w) = ψ̂(|w|²)`.
    pub dpsi_dq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynkinKernel {
    pub epsilon: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub norm_const: f64,
    pub nodes: Vec<KernelNode>,
    pub norm_residual: f64,
}

/// `∫_0^1 exp(-1/(1-s)) ds` by a fine Gauss-Legendre rule.
fn bump_mass() -> f64 {
    GaussLegendre::new(NonZeroUsize::new(400).expect("nonzero"))
        .integrate(0.0, 1.0, |s| if s < 1.0 { (-1.0 / (1.0 - s)).exp() } else { 0.0 })
}

impl DynkinKernel {
    pub fn new(epsilon: f64, n_r: usize, n_theta: usize) -> Result<Self, DynkinError> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(DynkinError::BadParameter(format!("epsilon = {epsilon} not in (0, 1]")));
        }
        if n_r < 8 || n_theta < 8 {
            return Err(DynkinError::BadParameter(format!("resolution {n_r} x {n_theta} below 8 x 8")));
        }
        let e2 = epsilon * epsilon;
        let norm_const = 1.0 / (std::f64::consts::PI * e2 * bump_mass());
        let profile = |q: f64| {
            let s = q / e2;
            if s >= 1.0 {
                (0.0, 0.0)
            } else {
                let p = norm_const * (-1.0 / (1.0 - s)).exp();
                (p, -p / (e2 * (1.0 - s) * (1.0 - s)))
            }
        };
        let gl = GaussLegendre::new(NonZeroUsize::new(n_r).expect("n_r >= 8"));
        let dtheta = std::f64::consts::TAU / n_theta as f64;
        let mut nodes = Vec::with_capacity(n_r * n_theta);
        for &(xi, wi) in gl.as_node_weight_pairs() {
            let rho = 0.5 * epsilon * (xi + 1.0);
            let w_rho = 0.5 * epsilon * wi;
            let (psi, dpsi_dq) = profile(rho * rho);
            for j in 0..n_theta {
                let w = Complex64::from_polar(rho, j as f64 * dtheta);
                nodes.push(KernelNode { w, weight: rho * w_rho * dtheta, psi, dpsi_dq });
            }
        }
        let total: f64 = nodes.iter().map(|n| n.weight * n.psi).sum();
        let norm_residual = (total - 1.0).abs();
        if norm_residual > NORM_TOL {
            return Err(DynkinError::QuadratureTooCoarse(norm_residual));
        }
        Ok(Self { epsilon, n_r, n_theta, norm_const, nodes, norm_residual })
    }

    pub fn default_kernel() -> Result<Self, DynkinError> {
        Self::new(DEFAULT_EPSILON, DEFAULT_NODES, DEFAULT_NODES)
    }

    /// `ψ(w)`, radial and supported in `|w| < ε`.
    pub fn psi(&self, w: Complex64) -> f64 {
        let s = w.norm_sqr() / (self.epsilon * self.epsilon);
        if s >= 1.0 {
            0.0
        } else {
            self.norm_const * (-1.0 / (1.0 - s)).exp()
        }
    }

    /// Quadrature of `(i/2t²) ∫ ψ((z-t)/|t|) P(z) dz∧dz̄` for `P = Σ c_k z^k`.
    pub fn apply_poly(&self, coeffs: &[Complex64], t: f64) -> Complex64 {
        self.nodes
            .iter()
            .map(|n| {
                let z = Complex64::new(t, 0.0) + n.w * t.abs();
                let p = coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
                p * (n.weight * n.psi)
            })
            .sum()
    }
}

/// Per-`t` quadrature data shared by every evaluation point.
struct NodeSet {
    z: Vec<Complex64>,
    n: Vec<usize>,
    /// `ψ` masses.
    m0: Vec<f64>,
    /// Masses of `∂_t` of the scaled kernel.
    m1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ApproxSolution {
    series: FormalSeries,
    seq: WeightSequence,
    c_star: f64,
    kernel: DynkinKernel,
    delta: f64,
    /// Set when the series solves a time-augmented field, evaluated on `s = t`.
    diagonal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessSample {
    pub t: f64,
    pub sup_abs_lu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessFit {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub delta: f64,
    pub sup_ratio: f64,
    pub passed: bool,
}

impl ApproxSolution {
    pub fn new(series: FormalSeries, seq: WeightSequence, c_star: f64, kernel: DynkinKernel) -> Result<Self, DynkinError> {
        if series.field().is_none() {
            return Err(DynkinError::BadParameter("series carries no vector field".into()));
        }
        if !(c_star > 0.0) {
            return Err(DynkinError::BadParameter(format!("C = {c_star} must be positive")));
        }
        let delta = 1.0 / ((1.0 + kernel.epsilon).powi(2) * c_star);
        Ok(Self { series, seq, c_star, kernel, delta, diagonal: false })
    }

    /// Builds the series and fits `C` on `bx`. Time-dependent fields are
    /// augmented first and evaluated on the diagonal.
    pub fn build(
        field: &VectorFieldJet,
        datum: &Jet,
        seq: WeightSequence,
        kernel: DynkinKernel,
        bx: &EvalBox,
        n_max: usize,
    ) -> Result<Self, DynkinError> {
        let (field, datum, diagonal) = if field.time_dependent {
            (field.time_augment()?, datum.clone(), true)
        } else {
            (field.clone(), datum.clone(), false)
        };
        let series = formal_solution(&field, &datum, n_max)?;
        let mut fit_box = bx.clone();
        if diagonal && fit_box.x.len() + 1 == field.space().n_x() {
            fit_box.x.push((0.0, 0.0));
        }
        let c = growth_fit(&series, &seq, &fit_box)?.c_fit;
        let mut sol = Self::new(series, seq, c, kernel)?;
        sol.diagonal = diagonal;
        Ok(sol)
    }

    pub fn series(&self) -> &FormalSeries {
        &self.series
    }

    pub fn seq(&self) -> &WeightSequence {
        &self.seq
    }

    pub fn c_star(&self) -> f64 {
        self.c_star
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.kernel.epsilon
    }

    pub fn t_eval_max(&self) -> f64 {
        self.delta
    }

    /// Smallest `|t|` whose disk stays within the certified range of `N`.
    pub fn t_eval_min(&self) -> f64 {
        let e = self.kernel.epsilon;
        self.seq.min_certified_r() / ((1.0 + e) * (1.0 - e) * self.c_star)
    }

    pub fn field(&self) -> &VectorFieldJet {
        self.series.field().expect("checked at construction")
    }

    fn nodes_at(&self, t: f64) -> Result<NodeSet, DynkinError> {
        if t.abs() > self.delta {
            return Err(DynkinError::OutOfRange { t, max: self.delta });
        }
        let e = self.kernel.epsilon;
        let sgn = t.signum();
        let len = self.kernel.nodes.len();
        let mut ns = NodeSet { z: Vec::with_capacity(len), n: Vec::with_capacity(len), m0: Vec::with_capacity(len), m1: Vec::with_capacity(len) };
        for node in &self.kernel.nodes {
            if node.psi == 0.0 {
                continue;
            }
            let z = Complex64::new(t, 0.0) + node.w * t.abs();
            let n = self.seq.big_n((1.0 + e) * self.c_star * z.norm())?;
            let q = node.w.norm_sqr();
            ns.z.push(z);
            ns.n.push(n);
            ns.m0.push(node.weight * node.psi);
            ns.m1.push(-(2.0 / t) * node.weight * (node.psi + node.dpsi_dq * (sgn * node.w.re + q)));
        }
        let top = ns.n.iter().copied().max().unwrap_or(0) + 1;
        if top >= self.series.stored() && !self.series.is_exhausted() {
            return Err(DynkinError::SeriesTooShort { needed: top, stored: self.series.stored() });
        }
        Ok(ns)
    }

    fn term_values(&self, x: &[f64], t: f64, zeta: &[Complex64]) -> Vec<Complex64> {
        let pt: Vec<f64> = if self.diagonal { x.iter().copied().chain([t]).collect() } else { x.to_vec() };
        self.series.terms().iter().map(|u| u.eval(&pt, zeta)).collect()
    }

    /// Returns `(u, Lu)` at one point from prepared nodes.
    fn combine(ns: &NodeSet, vals: &[Complex64], with_lu: bool) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let at = |k: usize| vals.get(k).copied().unwrap_or(zero);
        let (mut u, mut lu) = (zero, zero);
        for i in 0..ns.z.len() {
            let z = ns.z[i];
            let top = ns.n[i];
            let mut s = at(0);
            let mut r = -at(1);
            let mut p = Complex64::new(1.0, 0.0);
            let last = top.min(vals.len());
            for k in 1..=last {
                p *= z;
                s += at(k) * p;
                if with_lu {
                    r -= at(k + 1) * ((k + 1) as f64) * p;
                }
            }
            u += s * ns.m0[i];
            if with_lu {
                // the k = 0 term integrates to zero against the t-derivative kernel
                lu += (s - at(0)) * ns.m1[i] + r * ns.m0[i];
            }
        }
        (u, lu)
    }

    pub fn evaluate(&self, x: &[f64], t: f64, zeta: &[Complex64]) -> Result<Complex64, DynkinError> {
        let vals = self.term_values(x, t, zeta);
        if t == 0.0 {
            return Ok(vals.first().copied().unwrap_or_default());
        }
        let ns = self.nodes_at(t)?;
        Ok(Self::combine(&ns, &vals, false).0)
    }

    /// `Lu` at `t != 0`, by differentiating under the integral.
    pub fn apply_l(&self, x: &[f64], t: f64, zeta: &[Complex64]) -> Result<Complex64, DynkinError> {
        if t == 0.0 {
            return Err(DynkinError::OutOfRange { t, max: self.delta });
        }
        let ns = self.nodes_at(t)?;
        Ok(Self::combine(&ns, &self.term_values(x, t, zeta), true).1)
    }

    /// `(u, Lu)` for many spatial points at a single `t`.
    pub fn evaluate_many(&self, xs: &[Vec<f64>], t: f64, zeta: &[Complex64]) -> Result<Vec<(Complex64, Complex64)>, DynkinError> {
        let ns = self.nodes_at(t)?;
        Ok(xs.iter().map(|x| Self::combine(&ns, &self.term_values(x, t, zeta), true)).collect())
    }

    /// `sup_x |Lu(x, t)|` over the box for each `t`, evaluated in parallel.
    pub fn flatness_samples(&self, bx: &EvalBox, ts: &[f64]) -> Result<Vec<FlatnessSample>, DynkinError> {
        let pts = bx.points();
        ts.par_iter()
            .map(|&t| {
                let vals = self.evaluate_many(&pts, t, &bx.zeta)?;
                let sup = vals.iter().map(|(_, lu)| lu.norm()).fold(0.0, f64::max);
                Ok(FlatnessSample { t, sup_abs_lu: sup })
            })
            .collect()
    }
}

/// Second-order central-difference `Lu` for `L = ∂_t + Σ a_i ∂_{x_i} + Σ b_j ∂_{ζ_j}`
/// with the coefficients of `field` (time independent).
pub fn apply_l_numeric<F>(u: F, field: &VectorFieldJet, x: &[f64], t: f64, zeta: &[Complex64], step: f64) -> Result<Complex64, DynkinError>
where
    F: Fn(&[f64], f64, &[Complex64]) -> Result<Complex64, DynkinError>,
{
    if !(step > 0.0) {
        return Err(DynkinError::BadParameter(format!("step = {step} must be positive")));
    }
    let h2 = 2.0 * step;
    let mut acc = (u(x, t + step, zeta)? - u(x, t - step, zeta)?) / h2;
    let mut xp = x.to_vec();
    for (i, a) in field.a.iter().enumerate() {
        let c = a.eval(x, zeta);
        xp[i] = x[i] + step;
        let fp = u(&xp, t, zeta)?;
        xp[i] = x[i] - step;
        let fm = u(&xp, t, zeta)?;
        xp[i] = x[i];
        acc += c * (fp - fm) / h2;
    }
    let mut zp = zeta.to_vec();
    for (j, b) in field.b.iter().enumerate() {
        let c = b.eval(x, zeta);
        zp[j] = zeta[j] + step;
        let fp = u(x, t, &zp)?;
        zp[j] = zeta[j] - step;
        let fm = u(x, t, &zp)?;
        zp[j] = zeta[j];
        acc += c * (fp - fm) / h2;
    }
    Ok(acc)
}

/// Fits `|Lu| <= A h(Q|t|)` with `Q = 2^{j/2}`, `j = -4..=16`. For each `Q`,
/// `A` is the smallest admissible constant; the `Q` leaving the least total
/// log-slack over the samples is kept.
pub fn flatness_fit(samples: &[FlatnessSample], seq: &WeightSequence, delta: f64) -> Result<FlatnessFit, DynkinError> {
    let active: Vec<&FlatnessSample> = samples.iter().filter(|s| s.sup_abs_lu > 0.0).collect();
    if active.is_empty() {
        return Ok(FlatnessFit { a: 0.0, q: 1.0, delta, sup_ratio: 0.0, passed: true });
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for j in -4..=16 {
        let q = 2f64.powf(j as f64 / 2.0);
        let ln_h: Result<Vec<f64>, _> = active.iter().map(|s| seq.ln_assoc(Assoc::H, q * s.t.abs())).collect();
        let Ok(ln_h) = ln_h else { continue };
        if ln_h.iter().any(|v| !v.is_finite() || *v < f64::MIN_POSITIVE.ln()) {
            continue;
        }
        let gaps: Vec<f64> = active.iter().zip(&ln_h).map(|(s, h)| s.sup_abs_lu.ln() - h).collect();
        let ln_a = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let slack: f64 = gaps.iter().map(|g| ln_a - g).sum();
        if best.is_none_or(|(_, _, b)| slack < b - 1e-9) {
            best = Some((q, ln_a, slack));
        }
    }
    let (q, ln_a, _) = best.ok_or(DynkinError::FitFailed)?;
    let a = ln_a.exp();
    let sup_ratio = active
        .iter()
        .map(|s| (s.sup_abs_lu.ln() - ln_a - seq.ln_assoc(Assoc::H, q * s.t.abs()).unwrap_or(f64::INFINITY)).exp())
        .fold(0.0, f64::max);
    Ok(FlatnessFit { a, q, delta, sup_ratio, passed: a.is_finite() && sup_ratio <= 1.0 + 1e-12 })
}

/// Almost-analytic extension `U(x + it) = u(x, t)` of a one-variable datum,
/// realized as the approximate solution of `∂_t - i ∂_x`.
#[derive(Debug, Clone)]
pub struct AlmostAnalytic {
    sol: ApproxSolution,
}

impl AlmostAnalytic {
    pub fn new(f: &Jet, seq: WeightSequence, kernel: DynkinKernel, bx: &EvalBox, n_max: usize) -> Result<Self, DynkinError> {
        let sp = f.space();
        if sp.n_x() != 1 || sp.n_zeta() != 0 {
            return Err(DynkinError::BadParameter("datum must depend on one real variable".into()));
        }
        let field = VectorFieldJet::new(vec![Jet::constant(sp, Complex64::new(0.0, -1.0))], vec![])?;
        Ok(Self { sol: ApproxSolution::build(&field, f, seq, kernel, bx, n_max)? })
    }

    pub fn solution(&self) -> &ApproxSolution {
        &self.sol
    }

    pub fn value(&self, z: Complex64) -> Result<Complex64, DynkinError> {
        self.sol.evaluate(&[z.re], z.im, &[])
    }

    /// `∂U/∂z̄ = (i/2) Lu`.
    pub fn dbar(&self, z: Complex64) -> Result<Complex64, DynkinError> {
        Ok(Complex64::new(0.0, 0.5) * self.sol.apply_l(&[z.re], z.im, &[])?)
    }

    /// Fits `sup_x |∂̄U(x + iy)| <= A h(Q|y|)` over the given `|y|` values.
    pub fn dbar_fit(&self, bx: &EvalBox, ys: &[f64]) -> Result<FlatnessFit, DynkinError> {
        let samples: Vec<FlatnessSample> = self
            .sol
            .flatness_samples(bx, ys)?
            .into_iter()
            .map(|s| FlatnessSample { t: s.t, sup_abs_lu: 0.5 * s.sup_abs_lu })
            .collect();
        flatness_fit(&samples, self.sol.seq(), self.sol.delta())
    }
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Taylor coefficients of `1/(1+x²)` at 0 up to `degree`.
pub fn lorentzian_taylor(degree: usize) -> Vec<f64> {
    (0..=degree).map(|k| if k % 2 == 0 { if (k / 2) % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 }).collect()
}

/// Taylor polynomial of `1/(1+x²)` of the given degree, taken as an exact datum.
pub fn lorentzian_jet(degree: usize) -> Jet {
    Jet::univariate(&JetSpace::origin(1, 0, degree), 0, &lorentzian_taylor(degree))
        .expect("slot 0 exists")
        .with_validity(Validity::Exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn kernel() -> DynkinKernel {
        DynkinKernel::default_kernel().unwrap()
    }

    fn poly1(space: &JetSpace, cs: &[f64]) -> Jet {
        Jet::from_terms(space, cs.iter().enumerate().map(|(k, &v)| (vec![k as u32], c(v))), Validity::Exact).unwrap()
    }

    fn unit_box() -> EvalBox {
        EvalBox { x: vec![(-0.5, 0.5)], zeta: vec![], samples: 11 }
    }

    #[test]
    fn bump_mass_matches_exponential_integral() {
        // ∫_0^1 e^{-1/(1-s)} ds = E_2(1) = e^{-1} - E_1(1)
        assert!((bump_mass() - 0.148_495_506_775_922_05).abs() < 1e-14);
    }

    #[test]
    fn kernel_normalization_and_shape() {
        let k = kernel();
        assert!(k.norm_residual < 1e-10);
        assert_eq!(k.psi(Complex64::new(0.5, 0.0)), 0.0);
        assert_eq!(k.psi(Complex64::from_polar(0.7, 1.0)), 0.0);
        assert!(k.nodes.iter().all(|n| n.psi >= 0.0 && n.w.norm() < 0.5));
        let w = Complex64::new(0.21, -0.17);
        let p = k.psi(w);
        for v in [-w, w.conj(), Complex64::new(-w.im, w.re)] {
            assert_eq!(k.psi(v), p);
        }
        for th in [0.1, 1.7, 3.0, -2.2] {
            assert!((k.psi(Complex64::from_polar(0.3, th)) / k.psi(Complex64::new(0.3, 0.0)) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_parameter_checks() {
        assert!(matches!(DynkinKernel::new(0.0, 64, 64), Err(DynkinError::BadParameter(_))));
        assert!(matches!(DynkinKernel::new(1.5, 64, 64), Err(DynkinError::BadParameter(_))));
        assert!(matches!(DynkinKernel::new(0.5, 4, 64), Err(DynkinError::BadParameter(_))));
        assert!(matches!(DynkinKernel::new(0.5, 8, 8), Err(DynkinError::QuadratureTooCoarse(_))));
    }

    #[test]
    fn polynomial_reproduction_examples() {
        let k = kernel();
        let z3 = [c(0.0), c(0.0), c(0.0), c(1.0)];
        assert!((k.apply_poly(&z3, 0.1) - c(1e-3)).norm() < 1e-12);
        assert!((k.apply_poly(&[c(1.0)], 0.37) - c(1.0)).norm() < 1e-10);
        assert!((k.apply_poly(&[c(0.0), c(1.0)], -0.05) - c(-0.05)).norm() < 1e-12);
    }

    fn transport_solution(f: &[f64], degree: usize) -> ApproxSolution {
        let s = JetSpace::origin(1, 0, degree);
        let field = VectorFieldJet::new(vec![Jet::real(&s, 1.0)], vec![]).unwrap();
        let seq = WeightSequence::gevrey(2.0, 4096).unwrap();
        ApproxSolution::build(&field, &poly1(&s, f), seq, kernel(), &unit_box(), 64).unwrap()
    }

    #[test]
    fn transport_square_is_reproduced() {
        let sol = transport_solution(&[0.0, 0.0, 1.0], 4);
        let d = sol.delta();
        // N >= 2 on the whole disk once (1+ε)²C|t| < 1/2
        for &t in &[d / 3.0, -d / 2.5, 1e-3] {
            for &x in &[-0.4, 0.0, 0.3] {
                let v = sol.evaluate(&[x], t, &[]).unwrap();
                assert!((v - c((x - t) * (x - t))).norm() < 1e-12, "x = {x}, t = {t}");
                assert!(sol.apply_l(&[x], t, &[]).unwrap().norm() < 1e-10);
            }
        }
        assert_eq!(sol.evaluate(&[0.3], 0.0, &[]).unwrap(), c(0.09));
        assert!(matches!(sol.evaluate(&[0.0], 2.0 * d, &[]), Err(DynkinError::OutOfRange { .. })));
    }

    #[test]
    fn zeta_datum_without_field_is_constant_in_t() {
        let s = JetSpace::origin(1, 1, 3);
        let field = VectorFieldJet::new(vec![Jet::zero(&s)], vec![Jet::zero(&s)]).unwrap();
        let seq = WeightSequence::gevrey(2.0, 256).unwrap();
        let bx = EvalBox { x: vec![(-0.5, 0.5)], zeta: vec![Complex64::new(0.2, 0.1)], samples: 5 };
        let sol = ApproxSolution::build(&field, &Jet::var(&s, 1).unwrap(), seq, kernel(), &bx, 8).unwrap();
        let z = Complex64::new(0.3, -0.7);
        for &t in &[0.0, 0.1, -0.05] {
            assert!((sol.evaluate(&[0.1], t, &[z]).unwrap() - z).norm() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_l_on_polynomials() {
        let s = JetSpace::origin(1, 0, 4);
        let field = VectorFieldJet::new(vec![Jet::real(&s, 1.0)], vec![]).unwrap();
        let exact = |x: &[f64], t: f64, _: &[Complex64]| Ok(c((x[0] - t).powi(2)));
        assert!(apply_l_numeric(exact, &field, &[0.2], 0.1, &[], 1e-3).unwrap().norm() < 1e-10);
        let t1 = |x: &[f64], t: f64, _: &[Complex64]| Ok(c(x[0] * x[0] - 2.0 * x[0] * t));
        let v = apply_l_numeric(t1, &field, &[0.4], 0.25, &[], 1e-3).unwrap();
        assert!((v - c(-0.5)).norm() < 1e-9);
    }

    #[test]
    fn finite_difference_converges_at_second_order() {
        let s = JetSpace::origin(1, 0, 4);
        let field = VectorFieldJet::new(vec![Jet::real(&s, 1.0)], vec![]).unwrap();
        // L sin(x) e^t = (sin x + cos x) e^t
        let u = |x: &[f64], t: f64, _: &[Complex64]| Ok(c(x[0].sin() * t.exp()));
        let want = (0.3f64.sin() + 0.3f64.cos()) * 0.2f64.exp();
        let e1 = (apply_l_numeric(u, &field, &[0.3], 0.2, &[], 1e-2).unwrap() - c(want)).norm();
        let e2 = (apply_l_numeric(u, &field, &[0.3], 0.2, &[], 5e-3).unwrap() - c(want)).norm();
        assert!((e1 / e2 - 4.0).abs() < 0.1, "ratio {}", e1 / e2);
    }

    #[test]
    fn semi_analytic_l_matches_finite_differences() {
        let s = JetSpace::origin(1, 0, 24);
        let field = VectorFieldJet::new(vec![Jet::var(&s, 0).unwrap()], vec![]).unwrap();
        let seq = WeightSequence::gevrey(2.0, 4096).unwrap();
        let build = |n| {
            let k = DynkinKernel::new(0.5, n, n).unwrap();
            ApproxSolution::build(&field, &lorentzian_jet(24), seq.clone(), k, &unit_box(), 100_000).unwrap()
        };
        let (coarse, fine) = (build(64), build(256));
        let d = fine.delta();
        for &t in &[0.9 * d, 0.5 * d, -0.7 * d] {
            let a = coarse.apply_l(&[0.2], t, &[]).unwrap();
            let b = fine.apply_l(&[0.2], t, &[]).unwrap();
            assert!((a - b).norm() < 1e-3 * b.norm(), "t = {t}: {a} vs {b}");
        }
        // the step function N makes the quadrature u only piecewise smooth in t,
        // so the difference quotient is compared on the finest rule
        let t = 0.5 * d;
        let sa = fine.apply_l(&[0.2], t, &[]).unwrap();
        let fd = apply_l_numeric(|x, t, z| fine.evaluate(x, t, z), fine.field(), &[0.2], t, &[], 1e-3).unwrap();
        assert!((sa - fd).norm() < 1e-2 * sa.norm(), "{sa} vs {fd}");
    }

    #[test]
    fn continuity_at_zero() {
        let s = JetSpace::origin(1, 0, 24);
        let field = VectorFieldJet::new(vec![Jet::var(&s, 0).unwrap()], vec![]).unwrap();
        let seq = WeightSequence::gevrey(2.0, 4096).unwrap();
        let sol = ApproxSolution::build(&field, &lorentzian_jet(24), seq, kernel(), &unit_box(), 100_000).unwrap();
        let u0 = sol.evaluate(&[0.3], 0.0, &[]).unwrap();
        let errs: Vec<f64> = (3..10)
            .map(|j| 2f64.powi(-j))
            .filter(|t| *t <= sol.delta())
            .map(|t| (sol.evaluate(&[0.3], t, &[]).unwrap() - u0).norm())
            .collect();
        assert!(errs.len() >= 4);
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn time_dependent_field_on_diagonal() {
        // L = ∂_t + t ∂_x, f = x, exact solution x - t²/2
        let s = JetSpace::origin(2, 0, 6);
        let field = VectorFieldJet { a: vec![Jet::var(&s, 1).unwrap()], b: vec![], time_dependent: true };
        let seq = WeightSequence::gevrey(2.0, 1024).unwrap();
        let sol = ApproxSolution::build(&field, &Jet::var(&s, 0).unwrap(), seq, kernel(), &unit_box(), 64).unwrap();
        let t = 0.5 * sol.delta();
        let v = sol.evaluate(&[0.25], t, &[]).unwrap();
        assert!((v - c(0.25 - t * t / 2.0)).norm() < 1e-12);
    }

    #[test]
    fn flatness_fit_examples() {
        let seq = WeightSequence::gevrey(2.0, 4096).unwrap();
        let ts = log_grid(1e-3, 0.2, 24);
        let zero: Vec<FlatnessSample> = ts.iter().map(|&t| FlatnessSample { t, sup_abs_lu: 0.0 }).collect();
        let fit = flatness_fit(&zero, &seq, 0.2).unwrap();
        assert_eq!((fit.a, fit.passed), (0.0, true));
        let synth: Vec<FlatnessSample> =
            ts.iter().map(|&t| FlatnessSample { t, sup_abs_lu: seq.h(2.0 * t).unwrap() }).collect();
        let fit = flatness_fit(&synth, &seq, 0.2).unwrap();
        assert!((fit.q - 2.0).abs() < 1e-12 && (fit.a - 1.0).abs() < 1e-9, "{fit:?}");
        assert!(fit.passed);
        let lin: Vec<FlatnessSample> = ts.iter().map(|&t| FlatnessSample { t, sup_abs_lu: t }).collect();
        let fit = flatness_fit(&lin, &seq, 0.2).unwrap();
        assert!(fit.a.is_finite() && fit.q >= 1.0 && fit.passed);
    }

    #[test]
    fn flatness_fit_underflow_fails() {
        let seq = WeightSequence::gevrey(1.5, 64).unwrap();
        let s = [FlatnessSample { t: 1e-6, sup_abs_lu: 1.0 }];
        assert_eq!(flatness_fit(&s, &seq, 0.1), Err(DynkinError::FitFailed));
    }

    #[test]
    fn almost_analytic_square_is_entire() {
        let s = JetSpace::origin(1, 0, 4);
        let seq = WeightSequence::gevrey(2.0, 1024).unwrap();
        let aa = AlmostAnalytic::new(&poly1(&s, &[0.0, 0.0, 1.0]), seq, kernel(), &unit_box(), 16).unwrap();
        let d = aa.solution().delta();
        for z in [Complex64::new(0.3, 0.5 * d), Complex64::new(-0.2, -0.3 * d)] {
            assert!((aa.value(z).unwrap() - z * z).norm() < 1e-12);
            assert!(aa.dbar(z).unwrap().norm() < 1e-10);
        }
        for x in [-0.5, 0.0, 0.25] {
            assert_eq!(aa.value(c(x)).unwrap(), c(x * x));
        }
    }

    #[test]
    fn almost_analytic_lorentzian_dbar_fit() {
        let seq = WeightSequence::gevrey(2.0, 8192).unwrap();
        let aa = AlmostAnalytic::new(&lorentzian_jet(20), seq, kernel(), &unit_box(), 100_000).unwrap();
        let d = aa.solution().delta();
        let lo = aa.solution().t_eval_min().max(1e-3);
        let fit = aa.dbar_fit(&unit_box(), &log_grid(lo, d, 12)).unwrap();
        assert!(fit.passed, "{fit:?}");
        for x in [-0.5f64, 0.1] {
            let want = 1.0 / (1.0 + x * x);
            let trunc: f64 = lorentzian_taylor(20).iter().enumerate().map(|(k, c)| c * x.powi(k as i32)).sum();
            assert!((aa.value(c(x)).unwrap().re - trunc).abs() < 1e-15);
            assert!((trunc - want).abs() < 1e-5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reproduces_polynomials(cs in proptest::collection::vec(-1.0f64..1.0, 1..=9), sgn in prop::bool::ANY, small in prop::bool::ANY) {
            let k = kernel();
            let t = if small { 0.01 } else { 0.1 } * if sgn { 1.0 } else { -1.0 };
            let coeffs: Vec<Complex64> = cs.iter().map(|&v| c(v)).collect();
            let want = coeffs.iter().rev().fold(c(0.0), |acc, c| acc * t + c);
            prop_assert!((k.apply_poly(&coeffs, t) - want).norm() <= 1e-8 * (1.0 + want.norm()));
        }

        #[test]
        fn holomorphic_in_zeta(re in -0.5f64..0.5, im in -0.5f64..0.5, t in 0.01f64..0.1) {
            let s = JetSpace::origin(1, 1, 6);
            let z = Jet::var(&s, 1).unwrap();
            let field = VectorFieldJet::new(vec![z.clone()], vec![Jet::zero(&s)]).unwrap();
            let f = Jet::var(&s, 0).unwrap().mul(&z).unwrap();
            let seq = WeightSequence::gevrey(2.0, 1024).unwrap();
            let bx = EvalBox { x: vec![(-0.5, 0.5)], zeta: vec![Complex64::new(0.5, 0.5)], samples: 5 };
            let sol = ApproxSolution::build(&field, &f, seq, kernel(), &bx, 32).unwrap();
            let t = t.min(sol.delta());
            let h = 1e-4;
            let zc = Complex64::new(re, im);
            let u = |d: Complex64| sol.evaluate(&[0.2], t, &[zc + d]).unwrap();
            let dx = (u(c(h)) - u(c(-h))) / (2.0 * h);
            let dy = (u(Complex64::new(0.0, h)) - u(Complex64::new(0.0, -h))) / (2.0 * h);
            // Cauchy-Riemann: ∂_y u = i ∂_x u
            prop_assert!((dy - Complex64::new(0.0, 1.0) * dx).norm() < 1e-7);
        }
    }
}
