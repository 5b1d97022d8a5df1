//! Nonlinear right-hand sides `u_t = f(x, t, u, u_x)`, their linearization along
//! manufactured solutions, characteristic sets, the Hamiltonian lift with its
//! chain identity, θ-reduction, renormalization and the WF ⊂ Char harness.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbi::{self, DecayConfig, FbiError, GridFunction};
use crate::jets::{Jet, JetError, JetSpace, VectorFieldJet};
use crate::weights::WeightSequence;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("solution samples are not certified: residual {residual:e} > {tolerance:e}")]
    Uncertified { residual: f64, tolerance: f64 },
    #[error("sample leaves the trust box of the model jet (distance {0:e})")]
    TrustBoxExceeded(f64),
    #[error("covector is characteristic (R = {0:e})")]
    Characteristic(f64),
    #[error("Z_x is singular or ill-conditioned (condition number {0:e})")]
    SingularJacobian(f64),
    #[error("Z(x, 0) differs from x by {0:e}")]
    InitialCondition(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Fbi(#[from] FbiError),
}

/// `f(x, t, ζ₀, ζ)` as a jet. Slots: `x₁..x_N`, then `t` when `has_t`, then `ζ₀, ζ₁..ζ_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsModel {
    pub f: Jet,
    pub n: usize,
    pub has_t: bool,
    /// Largest admissible distance of `ζ` from the jet base point; `None` for exact polynomials.
    #[serde(default)]
    pub trust_radius: Option<f64>,
}

impl RhsModel {
    pub fn new(f: Jet, n: usize, has_t: bool) -> Result<Self, PdeError> {
        let m = Self { f, n, has_t, trust_radius: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), PdeError> {
        let sp = self.f.space();
        if self.n == 0 || sp.n_x() != self.n + self.has_t as usize || sp.n_zeta() != self.n + 1 {
            return Err(PdeError::Invalid(format!("jet has {} x and {} ζ slots for N = {}", sp.n_x(), sp.n_zeta(), self.n)));
        }
        Ok(())
    }

    pub fn space(&self) -> &JetSpace {
        self.f.space()
    }

    fn zeta_slot(&self, j: usize) -> usize {
        self.space().n_x() + j
    }

    fn slots(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut v = x.to_vec();
        if self.has_t {
            v.push(t);
        }
        v
    }

    fn trust(&self, zeta: &[Complex64]) -> Result<(), PdeError> {
        if let Some(r) = self.trust_radius {
            let d = zeta.iter().zip(&self.space().zeta).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            if d > r {
                return Err(PdeError::TrustBoxExceeded(d));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], t: f64, zeta: &[Complex64]) -> Result<Complex64, PdeError> {
        self.trust(zeta)?;
        Ok(self.f.eval(&self.slots(x, t), zeta))
    }

    /// `∇_ζ f = (∂f/∂ζ₁, …, ∂f/∂ζ_N)` at a point.
    pub fn grad_zeta(&self, x: &[f64], t: f64, zeta: &[Complex64]) -> Result<Vec<Complex64>, PdeError> {
        self.trust(zeta)?;
        let slots = self.slots(x, t);
        (1..=self.n).map(|j| Ok(self.f.diff(self.zeta_slot(j))?.eval(&slots, zeta))).collect()
    }
}

/// Samples of a one-dimensional solution on an `(x, t)` grid with derivative grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSamples {
    pub u: GridFunction,
    pub u_x: Vec<Complex64>,
    pub u_t: Vec<Complex64>,
    pub pde_residual: f64,
    pub tolerance: f64,
}

pub const CERTIFICATION_TOL: f64 = 1e-6;

/// Derivative along one axis of a row-major 2D grid: fourth-order central
/// differences in the interior, second-order one-sided stencils at the two edge layers.
fn fd_axis(values: &[Complex64], n: [usize; 2], axis: usize, h: f64, order: usize) -> Vec<Complex64> {
    let at = |i: usize, j: usize| values[i * n[1] + j];
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    let len = n[axis];
    for i in 0..n[0] {
        for j in 0..n[1] {
            let k = if axis == 0 { i } else { j };
            let get = |m: usize| if axis == 0 { at(m, j) } else { at(i, m) };
            out[i * n[1] + j] = if order == 4 && k >= 2 && k + 2 < len {
                (get(k - 2) - get(k - 1) * 8.0 + get(k + 1) * 8.0 - get(k + 2)) / (12.0 * h)
            } else if k >= 1 && k + 1 < len {
                (get(k + 1) - get(k - 1)) / (2.0 * h)
            } else if k == 0 {
                (get(0) * -3.0 + get(1) * 4.0 - get(2)) / (2.0 * h)
            } else {
                (get(k) * 3.0 - get(k - 1) * 4.0 + get(k - 2)) / (2.0 * h)
            };
        }
    }
    out
}

fn interior(n: [usize; 2], layer: usize) -> impl Iterator<Item = (usize, usize)> {
    (layer..n[0] - layer).flat_map(move |i| (layer..n[1] - layer).map(move |j| (i, j)))
}

impl SolutionSamples {
    /// Differentiates `u` (axes `(x, t)`) and measures `max |u_t − f(x, t, u, u_x)|`
    /// away from the two edge layers.
    pub fn new(model: &RhsModel, u: GridFunction, tolerance: f64) -> Result<Self, PdeError> {
        if u.dim != 2 || model.n != 1 {
            return Err(PdeError::Invalid("solution samples need one space and one time axis".into()));
        }
        let n = [u.n[0], u.n[1]];
        if n.iter().any(|&k| k < 5) {
            return Err(PdeError::Invalid("need at least 5 samples per axis".into()));
        }
        let u_x = fd_axis(&u.values, n, 0, u.step(0), 4);
        let u_t = fd_axis(&u.values, n, 1, u.step(1), 4);
        let mut residual = 0.0f64;
        for (i, j) in interior(n, 2) {
            let k = i * n[1] + j;
            let f = model.eval(&[u.coord(0, i)], u.coord(1, j), &[u.values[k], u_x[k]])?;
            residual = residual.max((u_t[k] - f).norm());
        }
        Ok(Self { u, u_x, u_t, pde_residual: residual, tolerance })
    }

    pub fn certified(&self) -> bool {
        self.pde_residual <= self.tolerance
    }

    pub fn require_certified(&self) -> Result<(), PdeError> {
        if self.certified() {
            Ok(())
        } else {
            Err(PdeError::Uncertified { residual: self.pde_residual, tolerance: self.tolerance })
        }
    }

    fn dims(&self) -> [usize; 2] {
        [self.u.n[0], self.u.n[1]]
    }

    /// Index of the grid point nearest to `(x, t)`.
    pub fn nearest(&self, x: f64, t: f64) -> (usize, usize) {
        let idx = |axis: usize, v: f64| {
            let (lo, _) = self.u.bounds[axis];
            (((v - lo) / self.u.step(axis)).round().max(0.0) as usize).min(self.u.n[axis] - 1)
        };
        (idx(0, x), idx(1, t))
    }

    /// The `t = t0` row as a one-dimensional grid function.
    pub fn trace(&self, t0: f64) -> Result<GridFunction, PdeError> {
        let (_, j) = self.nearest(0.0, t0);
        let n = self.dims();
        let vals = (0..n[0]).map(|i| self.u.values[i * n[1] + j]).collect();
        Ok(GridFunction::new(vec![self.u.bounds[0]], vec![n[0]], vals)?)
    }
}

/// `a(x, t) = ∂f/∂ζ₁(x, t, u, u_x)` on the sample grid (row-major like `sol.u`).
pub fn linearize(model: &RhsModel, sol: &SolutionSamples) -> Result<GridFunction, PdeError> {
    sol.require_certified()?;
    let n = sol.dims();
    let mut vals = Vec::with_capacity(sol.u.values.len());
    for i in 0..n[0] {
        for j in 0..n[1] {
            let k = i * n[1] + j;
            let a = model.grad_zeta(&[sol.u.coord(0, i)], sol.u.coord(1, j), &[sol.u.values[k], sol.u_x[k]])?;
            vals.push(a[0]);
        }
    }
    Ok(GridFunction::new(sol.u.bounds.clone(), sol.u.n.clone(), vals)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharConvention {
    /// Zero set of the symbol of `∂_t − Σ a_j ∂_{x_j}`: `τ = Re a·ξ`, `Im a·ξ = 0`.
    Symbol,
    /// `τ = −Re a·ξ`, `Im a·ξ = 0`.
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharMembership {
    pub xi: Vec<f64>,
    pub tau: f64,
    pub is_char: bool,
    /// Euclidean distance of the normalized covector to the characteristic variety.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharReport {
    pub base_point: Vec<f64>,
    pub a0: Vec<Complex64>,
    pub convention: CharConvention,
    pub results: Vec<CharMembership>,
}

const CHAR_TOL: f64 = 1e-12;

pub fn char_set(a0: &[Complex64], xi: &[f64], tau: f64, convention: CharConvention) -> Result<CharMembership, PdeError> {
    if xi.len() != a0.len() {
        return Err(PdeError::Invalid("a0 and ξ have different lengths".into()));
    }
    let dim = xi.len() + 1;
    let norm = (xi.iter().map(|v| v * v).sum::<f64>() + tau * tau).sqrt();
    if norm == 0.0 {
        return Err(PdeError::Invalid("zero covector".into()));
    }
    let v = DVector::from_iterator(dim, xi.iter().chain(std::iter::once(&tau)).map(|c| c / norm));
    let tau_coeff = match convention {
        CharConvention::Symbol => -1.0,
        CharConvention::Reversed => 1.0,
    };
    let mut rows = DMatrix::<f64>::zeros(2, dim);
    for (j, a) in a0.iter().enumerate() {
        rows[(0, j)] = a.im;
        rows[(1, j)] = a.re;
    }
    rows[(1, dim - 1)] = tau_coeff;
    let svd = rows.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let smax = svd.singular_values.max();
    let mut proj = 0.0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > CHAR_TOL * smax.max(1.0) {
            proj += v_t.row(k).dot(&v.transpose()).powi(2);
        }
    }
    let distance = proj.sqrt();
    Ok(CharMembership { xi: xi.to_vec(), tau, is_char: distance <= 1e-10, distance })
}

pub fn char_report(base_point: &[f64], a0: &[Complex64], covectors: &[(Vec<f64>, f64)], convention: CharConvention) -> Result<CharReport, PdeError> {
    let results = covectors.iter().map(|(xi, tau)| char_set(a0, xi, *tau, convention)).collect::<Result<_, _>>()?;
    Ok(CharReport { base_point: base_point.to_vec(), a0: a0.to_vec(), convention, results })
}

/// `H = 𝓛 + h₀∂_{ζ₀} + Σ h_j∂_{ζ_j}` with `𝓛 = ∂_t − Σ ∂f/∂ζ_j ∂_{x_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianField {
    pub base: VectorFieldJet,
    pub h0: Jet,
    pub h: Vec<Jet>,
    #[serde(rename = "H")]
    pub field: VectorFieldJet,
}

pub fn hamiltonian_lift(model: &RhsModel) -> Result<HamiltonianField, PdeError> {
    model.validate()?;
    let sp = model.space();
    if sp.degree < 1 {
        return Err(JetError::BudgetExhausted { k: 1, valid: 0 }.into());
    }
    let f = &model.f;
    let f_z0 = f.diff(model.zeta_slot(0))?;
    let mut h0 = f.clone();
    let mut a = Vec::with_capacity(model.n);
    let mut h = Vec::with_capacity(model.n);
    for j in 1..=model.n {
        let zj = Jet::var(sp, model.zeta_slot(j))?;
        let f_zj = f.diff(model.zeta_slot(j))?;
        h0 = h0.sub(&zj.mul(&f_zj)?)?;
        a.push(f_zj.scale(Complex64::new(-1.0, 0.0)));
        h.push(f.diff(j - 1)?.add(&zj.mul(&f_z0)?)?);
    }
    let zero_b = vec![Jet::zero(sp); model.n + 1];
    let base = VectorFieldJet { a: a.clone(), b: zero_b, time_dependent: model.has_t };
    base.validate()?;
    let mut b = vec![h0.clone()];
    b.extend(h.iter().cloned());
    let field = VectorFieldJet { a, b, time_dependent: model.has_t };
    field.validate()?;
    Ok(HamiltonianField { base, h0, h, field })
}

impl HamiltonianField {
    /// `HΦ` as a jet.
    pub fn apply(&self, phi: &Jet) -> Result<Jet, PdeError> {
        let mut out = self.field.apply_spatial(phi)?;
        if self.field.time_dependent {
            out = out.add(&phi.diff(self.field.a.len())?)?;
        }
        Ok(out)
    }
}

/// `sup |𝓛^w φ^w − (Hφ)^w|` over the grid, second-order central differences
/// for `u_x` and for the outer derivatives, ignoring two edge layers.
pub fn chain_identity_check(model: &RhsModel, sol: &SolutionSamples, phi: &Jet) -> Result<f64, PdeError> {
    sol.require_certified()?;
    let lift = hamiltonian_lift(model)?;
    let h_phi = lift.apply(phi)?;
    let n = sol.dims();
    let (hx, ht) = (sol.u.step(0), sol.u.step(1));
    let ux = fd_axis(&sol.u.values, n, 0, hx, 2);
    let mut comp = Vec::with_capacity(sol.u.values.len());
    for i in 0..n[0] {
        for j in 0..n[1] {
            let k = i * n[1] + j;
            let (x, t) = (sol.u.coord(0, i), sol.u.coord(1, j));
            model.trust(&[sol.u.values[k], ux[k]])?;
            comp.push(phi.eval(&model.slots(&[x], t), &[sol.u.values[k], ux[k]]));
        }
    }
    let dx = fd_axis(&comp, n, 0, hx, 2);
    let dt = fd_axis(&comp, n, 1, ht, 2);
    let mut worst = 0.0f64;
    for (i, j) in interior(n, 2) {
        let k = i * n[1] + j;
        let (x, t) = (sol.u.coord(0, i), sol.u.coord(1, j));
        let w = [sol.u.values[k], ux[k]];
        let a = model.grad_zeta(&[x], t, &w)?[0];
        let lhs = dt[k] - a * dx[k];
        let rhs = h_phi.eval(&model.slots(&[x], t), &w);
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConvergence {
    pub residual_coarse: f64,
    pub residual_fine: f64,
    pub ratio: f64,
    pub passed: bool,
}

/// Chain residual at two resolutions; passes when the fine residual is at
/// rounding level or the halving ratio shows second-order convergence.
pub fn chain_convergence(fx: &Fixture, phi: &Jet, n_coarse: usize, tolerance: f64) -> Result<ChainConvergence, PdeError> {
    let coarse = fx.solution([n_coarse, n_coarse])?;
    let fine = fx.solution([2 * n_coarse - 1, 2 * n_coarse - 1])?;
    let rc = chain_identity_check(&fx.model, &coarse, phi)?;
    let rf = chain_identity_check(&fx.model, &fine, phi)?;
    let ratio = if rf > 0.0 { rc / rf } else { f64::INFINITY };
    let passed = rf <= tolerance && (rf <= 1e-11 || ratio >= 3.0);
    Ok(ChainConvergence { residual_coarse: rc, residual_fine: rf, ratio, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaChoice {
    pub theta: f64,
    pub g_value: f64,
    #[serde(rename = "R")]
    pub amplitude: f64,
}

/// `g(θ) = cosθ·(Im a0·ξ) + sinθ·(Re a0·ξ + τ)`.
pub fn theta_g(a0: &[Complex64], xi: &[f64], tau: f64, theta: f64) -> f64 {
    let (p, q) = theta_pq(a0, xi, tau);
    theta.cos() * p + theta.sin() * q
}

fn theta_pq(a0: &[Complex64], xi: &[f64], tau: f64) -> (f64, f64) {
    let p: f64 = a0.iter().zip(xi).map(|(a, x)| a.im * x).sum();
    let q: f64 = a0.iter().zip(xi).map(|(a, x)| a.re * x).sum::<f64>() + tau;
    (p, q)
}

pub fn theta_reduce(a0: &[Complex64], xi: &[f64], tau: f64) -> Result<ThetaChoice, PdeError> {
    let (p, q) = theta_pq(a0, xi, tau);
    let r = p.hypot(q);
    let scale = (xi.iter().map(|v| v * v).sum::<f64>() + tau * tau).sqrt().max(1.0);
    if r <= 1e-12 * scale {
        return Err(PdeError::Characteristic(r));
    }
    let theta = (q.atan2(p) + PI).rem_euclid(2.0 * PI);
    Ok(ThetaChoice { theta, g_value: -r, amplitude: r })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedSample {
    pub x: Vec<f64>,
    pub t: f64,
    pub b: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedField {
    pub samples: Vec<RenormalizedSample>,
    /// Largest `max(σ_max, 1)/σ_min` of `Z_x`, measured against the identity Jacobian at `t = 0`.
    pub condition_number: f64,
    /// `max |Z_t + Z_x b|` with derivatives recomputed at half the step.
    pub residual: f64,
    /// `max |b(x, 0) − a(x, 0)|` when `a` is supplied.
    pub initial_gap: Option<f64>,
}

type Jacobian = (DMatrix<Complex64>, DVector<Complex64>);

fn jacobian<Z>(z: &Z, x: &[f64], t: f64, h: f64) -> Result<Jacobian, PdeError>
where
    Z: Fn(&[f64], f64) -> Result<Vec<Complex64>, PdeError>,
{
    let n = x.len();
    let mut zx = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let (p, m) = (z(&xp, t)?, z(&xm, t)?);
        for i in 0..n {
            zx[(i, j)] = (p[i] - m[i]) / (2.0 * h);
        }
    }
    let (p, m) = (z(x, t + h)?, z(x, t - h)?);
    let zt = DVector::from_iterator(n, (0..n).map(|i| (p[i] - m[i]) / (2.0 * h)));
    Ok((zx, zt))
}

pub const MAX_CONDITION: f64 = 1e6;

/// `b = −Z_x^{-1} Z_t` at every `(x, t)` sample, with central differences of step `h`.
pub fn renormalize<Z, A>(z: Z, a: Option<A>, xs: &[Vec<f64>], ts: &[f64], h: f64) -> Result<RenormalizedField, PdeError>
where
    Z: Fn(&[f64], f64) -> Result<Vec<Complex64>, PdeError>,
    A: Fn(&[f64], f64) -> Vec<Complex64>,
{
    if xs.is_empty() || ts.is_empty() || !(h > 0.0) {
        return Err(PdeError::Invalid("renormalize needs samples and a positive step".into()));
    }
    let mut init = 0.0f64;
    for x in xs {
        let z0 = z(x, 0.0)?;
        init = init.max(z0.iter().zip(x).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    if init > 1e-9 {
        return Err(PdeError::InitialCondition(init));
    }
    let mut samples = Vec::new();
    let mut cond_max = 0.0f64;
    let mut residual = 0.0f64;
    let mut gap: Option<f64> = None;
    for x in xs {
        for &t in ts {
            let (zx, zt) = jacobian(&z, x, t, h)?;
            let sv = zx.clone().svd(false, false).singular_values;
            let cond = sv.max().max(1.0) / sv.min();
            if !(cond.is_finite() && cond <= MAX_CONDITION) {
                return Err(PdeError::SingularJacobian(cond));
            }
            cond_max = cond_max.max(cond);
            let b = -zx.lu().solve(&zt).ok_or(PdeError::SingularJacobian(f64::INFINITY))?;
            let (zx2, zt2) = jacobian(&z, x, t, 0.5 * h)?;
            residual = residual.max((zt2 + zx2 * &b).norm());
            if t == 0.0 {
                if let Some(a) = &a {
                    let av = a(x, 0.0);
                    let g = b.iter().zip(&av).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
                    gap = Some(gap.unwrap_or(0.0).max(g));
                }
            }
            samples.push(RenormalizedSample { x: x.clone(), t, b: b.iter().copied().collect() });
        }
    }
    Ok(RenormalizedField { samples, condition_number: cond_max, residual, initial_gap: gap })
}

/// Manufactured solution of `u_t = f(x, t, u, u_x)` in one space dimension.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub model: RhsModel,
    pub exact: fn(f64, f64) -> Complex64,
    pub x_box: (f64, f64),
    pub t_box: (f64, f64),
    pub n: [usize; 2],
}

pub const FIXTURES: &[&str] = &["conormal", "holomorphic", "smooth", "transport", "transport-wide", "quadratic", "burgers", "trace"];

fn model_from(build: impl FnOnce(&JetSpace) -> Result<Jet, JetError>) -> Result<RhsModel, PdeError> {
    let sp = JetSpace::origin(1, 2, 4);
    RhsModel::new(build(&sp)?, 1, false)
}

pub fn fixture(name: &str) -> Result<Fixture, PdeError> {
    let neg = Complex64::new(-1.0, 0.0);
    let wide = ((-2.0, 2.0), (-2.0, 2.0), [513, 513]);
    let (model, exact, (x_box, t_box, n)): (RhsModel, fn(f64, f64) -> Complex64, _) = match name {
        "conormal" => (model_from(|s| Ok(Jet::var(s, 2)?.scale(neg)))?, |x, t| Complex64::new((x - t).abs().powi(3), 0.0), wide),
        "holomorphic" => (model_from(|s| Ok(Jet::var(s, 2)?.scale(Complex64::i())))?, |x, t| Complex64::new(x, t).exp(), wide),
        "smooth" => (model_from(|s| Ok(Jet::var(s, 2)?.scale(neg)))?, |x, t| Complex64::new((x - t).powi(2), 0.0), wide),
        "transport" => (model_from(|s| Jet::var(s, 2))?, |x, t| Complex64::new((x + t).sin(), 0.0), ((-0.5, 0.5), (-0.25, 0.25), [81, 81])),
        "transport-wide" => (model_from(|s| Jet::var(s, 2))?, |x, t| Complex64::new((x + t).sin(), 0.0), ((-1.0, 1.0), (-1.0, 1.0), [257, 257])),
        "quadratic" => (model_from(|s| Jet::var(s, 2)?.mul(&Jet::var(s, 2)?))?, |x, t| Complex64::new(x * x / (4.0 * (1.0 - t)), 0.0), ((-0.5, 0.5), (-0.5, 0.5), [129, 129])),
        "burgers" => (model_from(|s| Jet::var(s, 1)?.mul(&Jet::var(s, 2)?))?, |x, t| Complex64::new(x / (1.0 - t), 0.0), ((-0.5, 0.5), (-0.5, 0.5), [129, 129])),
        "trace" => (model_from(|s| Ok(Jet::var(s, 2)?.scale(Complex64::i())))?, |x, t| Complex64::new(x, t + 0.05).inv(), ((-1.0, 1.0), (0.0, 0.05), [4001, 101])),
        _ => return Err(PdeError::Invalid(format!("unknown fixture `{name}`"))),
    };
    Ok(Fixture { name: FIXTURES.iter().copied().find(|f| *f == name).expect("listed"), model, exact, x_box, t_box, n })
}

impl Fixture {
    pub fn grid(&self, n: [usize; 2]) -> Result<GridFunction, PdeError> {
        let exact = self.exact;
        Ok(GridFunction::sample(vec![self.x_box, self.t_box], n.to_vec(), |p| exact(p[0], p[1]))?)
    }

    pub fn solution(&self, n: [usize; 2]) -> Result<SolutionSamples, PdeError> {
        SolutionSamples::new(&self.model, self.grid(n)?, CERTIFICATION_TOL)
    }

    pub fn default_solution(&self) -> Result<SolutionSamples, PdeError> {
        self.solution(self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularDirection {
    pub index: usize,
    pub omega: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceOption {
    /// `+1` for `Im b(0)·ξ ≥ 0`, `−1` for `Im b(0)·ξ ≤ 0`.
    pub sign: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTest {
    pub b0: Vec<Complex64>,
    /// Half-lines (`−1`, `+1`) where the trace fails decay classification.
    pub failing_sides: Vec<f64>,
    pub rate_minus: f64,
    pub rate_plus: f64,
    /// The markedly slower half-line, if any: a failing side, or the side whose
    /// tail rate is at most half of the other.
    pub slow_side: Option<f64>,
    pub options: Vec<HalfSpaceOption>,
}

const SLOW_SIDE_FACTOR: f64 = 2.0;

/// Classifies the trace `v₀` along `±1` and checks its slow half-line against
/// both orientations of the half-space `{± Im b(0)·ξ ≥ 0}`.
pub fn trace_half_space_test(trace: &GridFunction, b0: &[Complex64], seq: &WeightSequence, cfg: &DecayConfig) -> Result<TraceTest, PdeError> {
    let scan = fbi::wavefront_scan(trace, &[0.0], 2, cfg, seq)?;
    let failing_sides: Vec<f64> = scan.failed().iter().map(|&i| scan.reports[i].omega[0]).collect();
    let rate = |s: f64| scan.reports.iter().find(|r| r.omega[0] == s).map(|r| r.rate_tail).unwrap_or(f64::NAN);
    let (rate_minus, rate_plus) = (rate(-1.0), rate(1.0));
    let slow_side = match failing_sides.as_slice() {
        [s] => Some(*s),
        [] if rate_minus >= SLOW_SIDE_FACTOR * rate_plus => Some(1.0),
        [] if rate_plus >= SLOW_SIDE_FACTOR * rate_minus => Some(-1.0),
        _ => None,
    };
    let imb = b0[0].im;
    let options = [1.0, -1.0]
        .into_iter()
        .map(|sign| HalfSpaceOption { sign, consistent: slow_side.is_none_or(|s| sign * imb * s >= 0.0) })
        .collect();
    Ok(TraceTest { b0: b0.to_vec(), failing_sides, rate_minus, rate_plus, slow_side, options })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfExperimentConfig {
    pub n_directions: usize,
    pub decay: DecayConfig,
    pub convention: CharConvention,
    pub base_point: (f64, f64),
}

impl Default for WfExperimentConfig {
    fn default() -> Self {
        Self { n_directions: 64, decay: DecayConfig::default(), convention: CharConvention::Symbol, base_point: (0.0, 0.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfReport {
    pub base_point: (f64, f64),
    pub a0: Vec<Complex64>,
    pub convention: CharConvention,
    pub angular_step: f64,
    pub singular: Vec<SingularDirection>,
    pub max_distance: f64,
    pub scan: fbi::WavefrontScan,
    pub trace: TraceTest,
    pub pass: bool,
}

/// Scans `u` at the base point on the `(x, t)` grid and compares every singular
/// direction `(ξ, τ)` with `Char(L^u)`.
/// Smallest distance from the base point to the sample boundary accepted by the WF experiment.
pub const MIN_CUTOFF_RADIUS: f64 = 1.0;

pub fn wf_inclusion_experiment(model: &RhsModel, sol: &SolutionSamples, seq: &WeightSequence, cfg: &WfExperimentConfig) -> Result<WfReport, PdeError> {
    sol.require_certified()?;
    let (x0, t0) = cfg.base_point;
    let (i, j) = sol.nearest(x0, t0);
    let k = i * sol.dims()[1] + j;
    let a0 = model.grad_zeta(&[sol.u.coord(0, i)], sol.u.coord(1, j), &[sol.u.values[k], sol.u_x[k]])?;
    let scale = sol
        .u
        .bounds
        .iter()
        .zip([x0, t0])
        .map(|(&(lo, hi), c)| (c - lo).min(hi - c))
        .fold(f64::INFINITY, f64::min);
    if scale < MIN_CUTOFF_RADIUS {
        return Err(PdeError::Invalid(format!("cutoff radius {scale} around the base point is below {MIN_CUTOFF_RADIUS}; the scan would only see the cutoff")));
    }
    let u = sol.u.clone().with_cutoff(&[x0, t0], scale);
    let scan = fbi::wavefront_scan(&u, &[x0, t0], cfg.n_directions, &cfg.decay, seq)?;
    let singular = scan
        .singular
        .iter()
        .map(|&idx| {
            let omega = scan.reports[idx].omega.clone();
            let m = char_set(&a0, &omega[..1], omega[1], cfg.convention)?;
            Ok(SingularDirection { index: idx, omega, distance: m.distance })
        })
        .collect::<Result<Vec<_>, PdeError>>()?;
    let max_distance = singular.iter().map(|s| s.distance).fold(0.0, f64::max);
    let pass = max_distance <= scan.angular_step;
    let trace_fn = sol.trace(t0)?.with_cutoff(&[x0], (x0 - sol.u.bounds[0].0).min(sol.u.bounds[0].1 - x0));
    let trace = trace_half_space_test(&trace_fn, &a0, seq, &cfg.decay)?;
    Ok(WfReport { base_point: (x0, t0), a0, convention: cfg.convention, angular_step: scan.angular_step, singular, max_distance, scan, trace, pass })
}

/// The half-plane oracle `U = 1/(x + i(t + 0.05))` solving `u_t = i u_x`:
/// reports which orientation of the trace half-space its trace supports.
pub fn trace_sign_oracle(seq: &WeightSequence, cfg: &DecayConfig) -> Result<TraceTest, PdeError> {
    let fx = fixture("trace")?;
    let sol = fx.default_solution()?;
    sol.require_certified()?;
    let (i, j) = sol.nearest(0.0, 0.0);
    let k = i * sol.dims()[1] + j;
    let b0 = fx.model.grad_zeta(&[0.0], 0.0, &[sol.u.values[k], sol.u_x[k]])?;
    let trace = sol.trace(0.0)?.with_cutoff(&[0.0], 1.0);
    trace_half_space_test(&trace, &b0, seq, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq() -> WeightSequence {
        WeightSequence::gevrey(2.0, 4096).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn fixtures_are_certified() {
        for name in FIXTURES {
            let fx = fixture(name).unwrap();
            let sol = fx.default_solution().unwrap();
            assert!(sol.certified(), "{name}: {}", sol.pde_residual);
        }
    }

    #[test]
    fn wrong_model_is_not_certified() {
        let fx = fixture("smooth").unwrap();
        let other = fixture("transport").unwrap().model;
        let sol = SolutionSamples::new(&other, fx.grid([65, 65]).unwrap(), CERTIFICATION_TOL).unwrap();
        assert!(!sol.certified());
        assert!(matches!(linearize(&other, &sol), Err(PdeError::Uncertified { .. })));
    }

    #[test]
    fn linearization_examples() {
        let fx = fixture("conormal").unwrap();
        let a = linearize(&fx.model, &fx.solution([65, 65]).unwrap()).unwrap();
        assert!(a.values.iter().all(|v| *v == c(-1.0)));
        let fx = fixture("burgers").unwrap();
        let sol = fx.default_solution().unwrap();
        let a = linearize(&fx.model, &sol).unwrap();
        assert!(a.values.iter().zip(&sol.u.values).all(|(p, q)| p == q));
        let fx = fixture("holomorphic").unwrap();
        let a = linearize(&fx.model, &fx.solution([65, 65]).unwrap()).unwrap();
        assert!(a.values.iter().all(|v| *v == Complex64::i()));
    }

    #[test]
    fn trust_box_is_enforced() {
        let mut fx = fixture("burgers").unwrap();
        fx.model.trust_radius = Some(0.5);
        let sol = fx.default_solution();
        assert!(matches!(sol, Err(PdeError::TrustBoxExceeded(_))));
    }

    #[test]
    fn char_examples() {
        let i = [Complex64::i()];
        for conv in [CharConvention::Symbol, CharConvention::Reversed] {
            for (xi, tau) in [(1.0, 0.0), (0.0, 1.0), (1.0, -1.0), (-0.3, 2.0)] {
                assert!(!char_set(&i, &[xi], tau, conv).unwrap().is_char);
            }
        }
        let m = [c(-1.0)];
        let s = char_set(&m, &[1.0], -1.0, CharConvention::Symbol).unwrap();
        assert!(s.is_char && s.distance < 1e-15);
        let p = char_set(&m, &[1.0], -1.0, CharConvention::Reversed).unwrap();
        assert!(!p.is_char);
        assert!((p.distance - 1.0).abs() < 1e-12);
        let off = char_set(&m, &[(0.1f64).cos()], -(0.1f64).sin() - 0.0, CharConvention::Symbol).unwrap();
        assert!(off.distance > 0.0);
    }

    #[test]
    fn char_distance_is_sine_of_angle() {
        let m = [c(-1.0)];
        for k in 1..8 {
            let al = k as f64 * 0.1;
            let th = -PI / 4.0 + al;
            let d = char_set(&m, &[th.cos()], th.sin(), CharConvention::Symbol).unwrap().distance;
            assert!((d - al.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_examples() {
        let sp = JetSpace::origin(1, 2, 4);
        let z1 = Jet::var(&sp, 2).unwrap();
        let l = hamiltonian_lift(&RhsModel::new(z1.clone(), 1, false).unwrap()).unwrap();
        assert!(l.h0.is_zero() && l.h[0].is_zero());
        assert_eq!(l.field.a[0], Jet::real(&sp, -1.0));
        let l = hamiltonian_lift(&RhsModel::new(Jet::var(&sp, 1).unwrap().mul(&z1).unwrap(), 1, false).unwrap()).unwrap();
        assert!(l.h0.is_zero());
        assert_eq!(l.h[0].max_coeff_diff(&z1.mul(&z1).unwrap()).unwrap(), 0.0);
        let l = hamiltonian_lift(&RhsModel::new(Jet::var(&sp, 0).unwrap().mul(&z1).unwrap(), 1, false).unwrap()).unwrap();
        assert!(l.h0.is_zero());
        assert_eq!(l.h[0].max_coeff_diff(&z1).unwrap(), 0.0);
    }

    #[test]
    fn lift_with_time_slot() {
        let sp = JetSpace::origin(2, 2, 4);
        let f = Jet::var(&sp, 1).unwrap().mul(&Jet::var(&sp, 3).unwrap()).unwrap();
        let l = hamiltonian_lift(&RhsModel::new(f, 1, true).unwrap()).unwrap();
        assert!(l.field.time_dependent);
        let t = Jet::var(&sp, 1).unwrap();
        assert_eq!(l.apply(&t).unwrap(), Jet::real(&sp, 1.0));
    }

    #[test]
    fn chain_identity_on_transport() {
        let fx = fixture("transport").unwrap();
        let sp = fx.model.space().clone();
        for slot in [1usize, 2, 0] {
            let phi = Jet::var(&sp, slot).unwrap();
            let r = chain_convergence(&fx, &phi, 81, 1e-4).unwrap();
            assert!(r.passed, "slot {slot}: {r:?}");
        }
    }

    #[test]
    fn chain_identity_on_burgers() {
        let fx = fixture("burgers").unwrap();
        let sp = fx.model.space().clone();
        let phi = Jet::var(&sp, 1).unwrap().mul(&Jet::var(&sp, 2).unwrap()).unwrap();
        let r = chain_convergence(&fx, &phi, 129, 1e-3).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn theta_examples() {
        let r = theta_reduce(&[c(1.0)], &[1.0], 0.0).unwrap();
        assert!((r.theta - 3.0 * PI / 2.0).abs() < 1e-15 && r.g_value == -1.0);
        let r = theta_reduce(&[Complex64::i()], &[1.0], 0.0).unwrap();
        assert!((r.theta - PI).abs() < 1e-15);
        assert!(matches!(theta_reduce(&[c(1.0)], &[1.0], -1.0), Err(PdeError::Characteristic(_))));
    }

    #[test]
    fn renormalize_exact_fixtures() {
        let xs: Vec<Vec<f64>> = (0..=10).map(|i| vec![-0.25 + 0.05 * i as f64]).collect();
        let ts = [-0.1, 0.0, 0.1];
        let h = 1e-3;
        let r = renormalize(|x: &[f64], t| Ok(vec![c(x[0] - t)]), Some(|_: &[f64], _| vec![c(1.0)]), &xs, &ts, h).unwrap();
        assert!(r.samples.iter().all(|s| (s.b[0] - 1.0).norm() < 1e-9));
        assert!(r.residual <= 10.0 * h * h);
        let r = renormalize(|x: &[f64], t: f64| Ok(vec![c(x[0] * (-t).exp())]), Some(|x: &[f64], _| vec![c(x[0])]), &xs, &ts, h).unwrap();
        assert!(r.samples.iter().all(|s| (s.b[0] - s.x[0]).norm() < 1e-6));
        assert!(r.residual <= 10.0 * h * h);
        assert!(r.initial_gap.unwrap() <= h * h);
    }

    #[test]
    fn renormalize_rejects_singular_jacobian() {
        let xs = vec![vec![0.2]];
        let pinched = |x: &[f64], t: f64| Ok(vec![c(x[0] * (1.0 - 10.0 * t))]);
        let r = renormalize(pinched, None::<fn(&[f64], f64) -> Vec<Complex64>>, &xs, &[0.0, 0.1], 1e-3);
        assert!(matches!(r, Err(PdeError::SingularJacobian(_))));
        let shifted = |x: &[f64], t: f64| Ok(vec![c(x[0] + 1e-3 - t)]);
        let r = renormalize(shifted, None::<fn(&[f64], f64) -> Vec<Complex64>>, &xs, &[0.0], 1e-3);
        assert!(matches!(r, Err(PdeError::InitialCondition(_))));
    }

    #[test]
    fn conormal_singular_set_lies_in_char() {
        let fx = fixture("conormal").unwrap();
        let r = wf_inclusion_experiment(&fx.model, &fx.default_solution().unwrap(), &seq(), &WfExperimentConfig::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.singular.len(), 2);
        let reversed = WfExperimentConfig { convention: CharConvention::Reversed, ..WfExperimentConfig::default() };
        let p = wf_inclusion_experiment(&fx.model, &fx.default_solution().unwrap(), &seq(), &reversed).unwrap();
        assert!(!p.pass);
    }

    #[test]
    fn regular_fixtures_have_empty_singular_sets() {
        for name in ["holomorphic", "smooth", "transport-wide"] {
            let fx = fixture(name).unwrap();
            let r = wf_inclusion_experiment(&fx.model, &fx.default_solution().unwrap(), &seq(), &WfExperimentConfig::default()).unwrap();
            assert!(r.singular.is_empty() && r.pass, "{name}: {:?}", r.singular);
        }
    }

    #[test]
    fn narrow_boxes_are_rejected_by_the_wf_experiment() {
        for name in ["transport", "quadratic", "burgers", "trace"] {
            let fx = fixture(name).unwrap();
            let r = wf_inclusion_experiment(&fx.model, &fx.default_solution().unwrap(), &seq(), &WfExperimentConfig::default());
            assert!(matches!(r, Err(PdeError::Invalid(_))), "{name}");
        }
    }

    #[test]
    fn trace_oracle_supports_the_nonnegative_half_space() {
        let t = trace_sign_oracle(&seq(), &DecayConfig::default()).unwrap();
        assert_eq!(t.b0, vec![Complex64::i()]);
        assert_eq!(t.slow_side, Some(1.0));
        assert!(t.options.iter().find(|o| o.sign == 1.0).unwrap().consistent);
        assert!(!t.options.iter().find(|o| o.sign == -1.0).unwrap().consistent);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn theta_is_global_minimum(ar in -3.0f64..3.0, ai in -3.0f64..3.0, xi in -3.0f64..3.0, tau in -3.0f64..3.0) {
            let a0 = [Complex64::new(ar, ai)];
            if let Ok(ch) = theta_reduce(&a0, &[xi], tau) {
                prop_assert!((theta_g(&a0, &[xi], tau, ch.theta) - ch.g_value).abs() <= 1e-12 * (1.0 + ch.amplitude));
                for k in 0..1024 {
                    let th = 2.0 * PI * k as f64 / 1024.0;
                    prop_assert!(ch.g_value <= theta_g(&a0, &[xi], tau, th) + 1e-12);
                }
            }
        }

        #[test]
        fn lift_is_linear(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, p in 0usize..3, q in 0usize..3) {
            let sp = JetSpace::origin(1, 2, 4);
            let f = Jet::var(&sp, p).unwrap().mul(&Jet::var(&sp, 2).unwrap()).unwrap();
            let g = Jet::var(&sp, q).unwrap().mul(&Jet::var(&sp, 1).unwrap()).unwrap();
            let combo = f.scale(c(c1)).add(&g.scale(c(c2))).unwrap();
            let lf = hamiltonian_lift(&RhsModel::new(f, 1, false).unwrap()).unwrap();
            let lg = hamiltonian_lift(&RhsModel::new(g, 1, false).unwrap()).unwrap();
            let lc = hamiltonian_lift(&RhsModel::new(combo, 1, false).unwrap()).unwrap();
            let h0 = lf.h0.scale(c(c1)).add(&lg.h0.scale(c(c2))).unwrap();
            prop_assert!(lc.h0.max_coeff_diff(&h0).unwrap() <= 1e-14);
            let h1 = lf.h[0].scale(c(c1)).add(&lg.h[0].scale(c(c2))).unwrap();
            prop_assert!(lc.h[0].max_coeff_diff(&h1).unwrap() <= 1e-14);
        }

        #[test]
        fn symbol_variety_contains_its_parametrization(ar in -3.0f64..3.0, xi in 0.1f64..3.0) {
            let a0 = [c(ar)];
            let m = char_set(&a0, &[xi], ar * xi, CharConvention::Symbol).unwrap();
            prop_assert!(m.is_char);
            let m = char_set(&a0, &[xi], -ar * xi, CharConvention::Reversed).unwrap();
            prop_assert!(m.is_char);
        }
    }
}
