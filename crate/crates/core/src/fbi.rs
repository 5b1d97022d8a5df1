//! Quadrature FBI transform, decay classification against Denjoy-Carleman
//! envelopes, wave-front scanning and phase-bound checks.

use std::f64::consts::PI;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynkin::log_grid;
use crate::weights::{WeightError, WeightSequence};

#[derive(Debug, Error)]
pub enum FbiError {
    #[error("undersampled: |xi| = {xi}, dy = {dy} exceeds the guard {limit}")]
    Undersampled { xi: f64, dy: f64, limit: f64 },
    #[error("function is not compactly supported in the box (boundary value {0:e}) and no cutoff was applied")]
    NotCompact(f64),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("Z(x, 0) differs from x by {0:e}")]
    InitialCondition(f64),
    #[error("no sampled direction admits C0 >= 2^-10")]
    NoCone,
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const BOUNDARY_TOL: f64 = 1e-12;
const LN_FLOOR: f64 = -690.0;

/// Samples of a complex function on a uniform tensor grid (row-major, first axis slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    pub n: Vec<usize>,
    pub values: Vec<Complex64>,
    pub cutoff_applied: bool,
}

impl GridFunction {
    pub fn new(bounds: Vec<(f64, f64)>, n: Vec<usize>, values: Vec<Complex64>) -> Result<Self, FbiError> {
        let dim = bounds.len();
        if !(1..=2).contains(&dim) || n.len() != dim {
            return Err(FbiError::BadGrid(format!("dimension {dim} with {} axis counts", n.len())));
        }
        if bounds.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(FbiError::BadGrid("degenerate box".into()));
        }
        if n.iter().any(|&k| k < 2) {
            return Err(FbiError::BadGrid("each axis needs at least 2 samples".into()));
        }
        let total: usize = n.iter().product();
        if values.len() != total {
            return Err(FbiError::BadGrid(format!("{} values for {total} grid points", values.len())));
        }
        Ok(Self { dim, bounds, n, values, cutoff_applied: false })
    }

    pub fn sample(bounds: Vec<(f64, f64)>, n: Vec<usize>, f: impl Fn(&[f64]) -> Complex64) -> Result<Self, FbiError> {
        let total: usize = n.iter().product();
        let mut probe = Self::new(bounds, n, vec![Complex64::new(0.0, 0.0); total])?;
        let mut y = vec![0.0; probe.dim];
        for idx in 0..total {
            probe.point_into(idx, &mut y);
            probe.values[idx] = f(&y);
        }
        Ok(probe)
    }

    pub fn step(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / (self.n[axis] - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.bounds[axis].0 + i as f64 * self.step(axis)
    }

    fn point_into(&self, idx: usize, y: &mut [f64]) {
        let mut rest = idx;
        for axis in (0..self.dim).rev() {
            y[axis] = self.coord(axis, rest % self.n[axis]);
            rest /= self.n[axis];
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.point_into(idx, &mut y);
        y
    }

    /// Largest modulus on the boundary of the box.
    pub fn boundary_max(&self) -> f64 {
        let mut best = 0.0f64;
        let mut rest;
        for (idx, v) in self.values.iter().enumerate() {
            rest = idx;
            let mut on_edge = false;
            for axis in (0..self.dim).rev() {
                let i = rest % self.n[axis];
                rest /= self.n[axis];
                on_edge |= i == 0 || i + 1 == self.n[axis];
            }
            if on_edge {
                best = best.max(v.norm());
            }
        }
        best
    }

    pub fn check_compact(&self) -> Result<(), FbiError> {
        if self.cutoff_applied {
            return Ok(());
        }
        let b = self.boundary_max();
        if b > BOUNDARY_TOL {
            Err(FbiError::NotCompact(b))
        } else {
            Ok(())
        }
    }

    /// Multiplies by the cutoff χ(|y − center| / scale).
    pub fn apply_cutoff(&mut self, center: &[f64], scale: f64) {
        let mut y = vec![0.0; self.dim];
        for idx in 0..self.values.len() {
            self.point_into(idx, &mut y);
            let r = y.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            self.values[idx] *= cutoff(r / scale);
        }
        self.cutoff_applied = true;
    }

    pub fn with_cutoff(mut self, center: &[f64], scale: f64) -> Self {
        self.apply_cutoff(center, scale);
        self
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self, FbiError> {
        if self.bounds != other.bounds || self.n != other.n {
            return Err(FbiError::BadGrid("grids differ".into()));
        }
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        out.cutoff_applied = self.cutoff_applied && other.cutoff_applied;
        Ok(out)
    }

    /// Binary layout: u32 dim, u64 count per axis, f64 (lo, hi) per axis, then
    /// little-endian f32 (re, im) pairs in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), FbiError> {
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        for &k in &self.n {
            w.write_u64::<LittleEndian>(k as u64)?;
        }
        for &(lo, hi) in &self.bounds {
            w.write_f64::<LittleEndian>(lo)?;
            w.write_f64::<LittleEndian>(hi)?;
        }
        for v in &self.values {
            w.write_f32::<LittleEndian>(v.re as f32)?;
            w.write_f32::<LittleEndian>(v.im as f32)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, FbiError> {
        let dim = r.read_u32::<LittleEndian>()? as usize;
        if !(1..=2).contains(&dim) {
            return Err(FbiError::BadGrid(format!("dimension {dim}")));
        }
        let mut n = Vec::with_capacity(dim);
        for _ in 0..dim {
            n.push(usize::try_from(r.read_u64::<LittleEndian>()?).map_err(|_| FbiError::BadGrid("axis count".into()))?);
        }
        let mut bounds = Vec::with_capacity(dim);
        for _ in 0..dim {
            let lo = r.read_f64::<LittleEndian>()?;
            let hi = r.read_f64::<LittleEndian>()?;
            bounds.push((lo, hi));
        }
        let total = n.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k)).ok_or_else(|| FbiError::BadGrid("grid too large".into()))?;
        if total > 1 << 28 {
            return Err(FbiError::BadGrid(format!("{total} samples")));
        }
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            let re = r.read_f32::<LittleEndian>()? as f64;
            let im = r.read_f32::<LittleEndian>()? as f64;
            values.push(Complex64::new(re, im));
        }
        Self::new(bounds, n, values)
    }
}

/// Smooth cutoff: 1 on [0, 0.4], 0 on [0.9, ∞).
pub fn cutoff(r: f64) -> f64 {
    const R0: f64 = 0.4;
    const R1: f64 = 0.9;
    if r <= R0 {
        return 1.0;
    }
    if r >= R1 {
        return 0.0;
    }
    let s = (R1 - r) / (R1 - R0);
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    f(s) / (f(s) + f(1.0 - s))
}

/// Largest admissible grid step for frequency magnitude `xi` on a box of half-width `half_width`.
pub fn sampling_limit(xi: f64, half_width: f64) -> f64 {
    PI / (4.0 * (xi + xi.sqrt() * half_width))
}

fn trapezoid_factors(u: &GridFunction, axis: usize, x: f64, xi_j: f64, xi_norm: f64) -> Vec<Complex64> {
    let n = u.n[axis];
    let h = u.step(axis);
    (0..n)
        .map(|i| {
            let d = x - u.coord(axis, i);
            let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
            Complex64::new(-xi_norm * d * d, d * xi_j).exp() * w
        })
        .collect()
}

/// `F[u](x, ξ) = ∫ u(y) e^{i(x−y)·ξ − |ξ|(x−y)²} dy` by tensor trapezoid quadrature.
pub fn fbi_transform(u: &GridFunction, x: &[f64], xi: &[f64]) -> Result<Complex64, FbiError> {
    if x.len() != u.dim || xi.len() != u.dim {
        return Err(FbiError::BadGrid(format!("point/frequency arity differs from dimension {}", u.dim)));
    }
    u.check_compact()?;
    let xi_norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if xi_norm > 0.0 {
        for axis in 0..u.dim {
            let (lo, hi) = u.bounds[axis];
            let limit = sampling_limit(xi_norm, 0.5 * (hi - lo));
            let dy = u.step(axis);
            if dy > limit {
                return Err(FbiError::Undersampled { xi: xi_norm, dy, limit });
            }
        }
    }
    let f0 = trapezoid_factors(u, 0, x[0], xi[0], xi_norm);
    if u.dim == 1 {
        return Ok(u.values.iter().zip(&f0).map(|(v, w)| v * w).sum());
    }
    let f1 = trapezoid_factors(u, 1, x[1], xi[1], xi_norm);
    let n1 = u.n[1];
    Ok(f0
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let row = &u.values[i * n1..(i + 1) * n1];
            a * row.iter().zip(&f1).map(|(v, b)| v * b).sum::<Complex64>()
        })
        .sum())
}

/// Closed form of the transform of `e^{−y²}` at `x = 0`.
pub fn gaussian_fbi(xi: f64) -> f64 {
    let a = 1.0 + xi.abs();
    (PI / a).sqrt() * (-xi * xi / (4.0 * a)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_lambda: usize,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self { lambda_min: 4.0, lambda_max: 64.0, n_lambda: 13 }
    }
}

impl DecayConfig {
    pub fn lambdas(&self) -> Vec<f64> {
        log_grid(self.lambda_min, self.lambda_max, self.n_lambda)
    }
}

/// Outcome of comparing `|F|(λ)` with `E(A, λ) = inf_k A^{k+1} M_k λ^{−k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub x: Vec<f64>,
    pub omega: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(rename = "A_fit")]
    pub a_fit: Option<f64>,
    pub envelope: Vec<f64>,
    pub rate_tail: f64,
    pub rate_env: f64,
    /// Every tail value lies below the rounding floor of the quadrature.
    pub floor_limited: bool,
    pub passed: bool,
}

pub const A_FIT_MAX: f64 = 65536.0;
const A_GRID_LO: i32 = -20;

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn tail_start(len: usize) -> usize {
    len - (len / 3).max(3).min(len)
}

fn safe_ln(v: f64) -> f64 {
    if v > 0.0 {
        v.ln().max(LN_FLOOR)
    } else {
        LN_FLOOR
    }
}

/// Decay rate `−d ln v / d ln λ` fitted on the top third of the grid.
pub fn tail_rate(lambdas: &[f64], values: &[f64]) -> f64 {
    let s = tail_start(lambdas.len());
    let xs: Vec<f64> = lambdas[s..].iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = values[s..].iter().map(|&v| safe_ln(v)).collect();
    -ls_slope(&xs, &ys)
}

fn tail_lambda_bar(lambdas: &[f64]) -> f64 {
    let s = tail_start(lambdas.len());
    let xs: Vec<f64> = lambdas[s..].iter().map(|l| l.ln()).collect();
    ls_slope(&xs, &lambdas[s..])
}

/// True when `|F|(λ) < E(A, λ)` strictly for every sampled `λ ≥ λ_min`.
pub fn envelope_dominates(seq: &WeightSequence, a: f64, lambdas: &[f64], values: &[f64], lambda_min: f64) -> Result<bool, FbiError> {
    for (&l, &v) in lambdas.iter().zip(values) {
        if l < lambda_min {
            continue;
        }
        let (ln_e, _) = seq.ln_fbi_envelope(a, l)?;
        if !(safe_ln(v) < ln_e) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fits the smallest `A = 2^{j/2} ≤ 2^16` with `|F| < E(A, ·)` and compares tail decay rates.
pub fn decay_classify(seq: &WeightSequence, x: &[f64], omega: &[f64], lambdas: &[f64], values: &[f64], lambda_min: f64) -> Result<DecayReport, FbiError> {
    if lambdas.len() != values.len() {
        return Err(FbiError::BadGrid("lambda and value counts differ".into()));
    }
    let kept: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i] >= lambda_min).collect();
    if kept.len() < 12 {
        return Err(FbiError::BadGrid(format!("{} lambda samples at or above lambda_min, need 12", kept.len())));
    }
    let ls: Vec<f64> = kept.iter().map(|&i| lambdas[i]).collect();
    let vs: Vec<f64> = kept.iter().map(|&i| values[i]).collect();
    let mut a_fit = None;
    let mut j = A_GRID_LO;
    loop {
        let a = 2f64.powf(j as f64 / 2.0);
        if a > A_FIT_MAX {
            break;
        }
        if envelope_dominates(seq, a, &ls, &vs, lambda_min)? {
            a_fit = Some(a);
            break;
        }
        j += 1;
    }
    let rate_tail = tail_rate(&ls, &vs);
    let (envelope, rate_env) = match a_fit {
        Some(a) => {
            let env = ls.iter().map(|&l| seq.fbi_envelope(a, l)).collect::<Result<Vec<_>, _>>()?;
            let r = tail_rate(&ls, &env);
            (env, r)
        }
        None => (Vec::new(), f64::INFINITY),
    };
    let passed = a_fit.is_some() && rate_tail >= rate_env;
    Ok(DecayReport { x: x.to_vec(), omega: omega.to_vec(), lambdas: ls, values: vs, a_fit, envelope, rate_tail, rate_env, floor_limited: false, passed })
}

/// Samples `|F[u](x, λω)|` on the λ grid.
pub fn decay_samples(u: &GridFunction, x: &[f64], omega: &[f64], lambdas: &[f64]) -> Result<Vec<f64>, FbiError> {
    lambdas
        .iter()
        .map(|&l| {
            let xi: Vec<f64> = omega.iter().map(|w| w * l).collect();
            fbi_transform(u, x, &xi).map(|f| f.norm())
        })
        .collect()
}

pub fn classify_direction(u: &GridFunction, seq: &WeightSequence, x: &[f64], omega: &[f64], cfg: &DecayConfig) -> Result<DecayReport, FbiError> {
    let lambdas = cfg.lambdas();
    let values = decay_samples(u, x, omega, &lambdas)?;
    let mut report = decay_classify(seq, x, omega, &lambdas, &values, cfg.lambda_min)?;
    let floor = rounding_floor(u);
    if report.values[tail_start(report.values.len())..].iter().all(|&v| v <= floor) {
        report.floor_limited = true;
        report.passed = true;
    }
    Ok(report)
}

/// `64 ε Σ|u| dV`: magnitudes below this are indistinguishable from quadrature rounding.
pub fn rounding_floor(u: &GridFunction) -> f64 {
    let dv: f64 = (0..u.dim).map(|a| u.step(a)).product();
    64.0 * f64::EPSILON * u.values.iter().map(|v| v.norm()).sum::<f64>() * dv
}

/// Unit directions: `±1` in one dimension, a uniform circle starting at angle 0 in two.
pub fn scan_directions(dim: usize, n_directions: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    (0..n_directions)
        .map(|i| {
            let th = 2.0 * PI * i as f64 / n_directions as f64;
            vec![th.cos(), th.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefrontScan {
    pub reports: Vec<DecayReport>,
    /// Failed directions whose slow decay is not explained by leakage from a slower direction.
    pub singular: Vec<usize>,
    /// `(i, j)`: failed direction `i` explained by leakage from direction `j`.
    pub leakage: Vec<(usize, usize)>,
    pub angular_step: f64,
}

impl WavefrontScan {
    pub fn failed(&self) -> Vec<usize> {
        (0..self.reports.len()).filter(|&i| !self.reports[i].passed).collect()
    }
}

const LEAKAGE_GAMMA: f64 = 0.25;

fn leakage_pairs(reports: &[DecayReport]) -> Vec<(usize, usize)> {
    let failed: Vec<usize> = (0..reports.len()).filter(|&i| !reports[i].passed).collect();
    let mut out = Vec::new();
    for &i in &failed {
        let ri = &reports[i];
        let lambda_bar = tail_lambda_bar(&ri.lambdas);
        let explainer = failed.iter().copied().filter(|&j| j != i).find(|&j| {
            let rj = &reports[j];
            let cos: f64 = ri.omega.iter().zip(&rj.omega).map(|(a, b)| a * b).sum();
            let sin2 = (1.0 - cos * cos).max(0.0);
            rj.rate_tail < ri.rate_tail - 1e-9 && ri.rate_tail >= rj.rate_tail + LEAKAGE_GAMMA * lambda_bar * sin2 / 4.0
        });
        if let Some(j) = explainer {
            out.push((i, j));
        }
    }
    out
}

/// Classifies every scan direction at `x`; the singular set keeps failed
/// directions that are not leakage from a more slowly decaying failed direction.
pub fn wavefront_scan(u: &GridFunction, x: &[f64], n_directions: usize, cfg: &DecayConfig, seq: &WeightSequence) -> Result<WavefrontScan, FbiError> {
    u.check_compact()?;
    let dirs = scan_directions(u.dim, n_directions);
    let reports = dirs.par_iter().map(|w| classify_direction(u, seq, x, w, cfg)).collect::<Result<Vec<_>, _>>()?;
    let leakage = leakage_pairs(&reports);
    let singular = (0..reports.len()).filter(|&i| !reports[i].passed && !leakage.iter().any(|&(k, _)| k == i)).collect();
    let angular_step = if u.dim == 1 { PI } else { 2.0 * PI / n_directions as f64 };
    Ok(WavefrontScan { reports, singular, leakage, angular_step })
}

/// Angle of a two-dimensional direction in `[0, 2π)`.
pub fn direction_angle(omega: &[f64]) -> f64 {
    let a = omega[1].atan2(omega[0]);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Angular distance on the circle.
pub fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundConfig {
    pub center: Vec<f64>,
    pub half_angle: f64,
    pub x_box: Vec<(f64, f64)>,
    pub y_box: Vec<(f64, f64)>,
    pub t_max: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub n_t: usize,
    pub n_dir: usize,
}

impl PhaseBoundConfig {
    pub fn new(center: Vec<f64>, half_angle: f64) -> Self {
        let dim = center.len();
        Self {
            center,
            half_angle,
            x_box: vec![(-0.1, 0.1); dim],
            y_box: vec![(-0.1, 0.1); dim],
            t_max: 0.2,
            n_x: 9,
            n_y: 9,
            n_t: 20,
            n_dir: 9,
        }
    }

    fn directions(&self) -> Vec<Vec<f64>> {
        if self.center.len() == 1 {
            return vec![self.center.clone()];
        }
        let th0 = self.center[1].atan2(self.center[0]);
        let m = self.n_dir.max(1);
        (0..m)
            .map(|i| {
                let s = if m == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (m - 1) as f64 };
                let th = th0 + s * self.half_angle;
                vec![th.cos(), th.sin()]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundReport {
    pub center: Vec<f64>,
    pub half_angle: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    pub delta: f64,
    pub max_violation: f64,
}

fn box_points(b: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    let axis = |&(lo, hi): &(f64, f64)| -> Vec<f64> { (0..n).map(|i| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect() };
    let mut pts = vec![Vec::new()];
    for ax in b {
        let c = axis(ax);
        pts = pts.iter().flat_map(|p| c.iter().map(move |&v| { let mut q = p.clone(); q.push(v); q })).collect();
    }
    pts
}

/// `Re Q` for unit `ξ`, with `Q = iξ·(y − Z) − |ξ|⟨y − Z⟩²` and the bilinear square.
pub fn phase_re(z: &[Complex64], y: &[f64], xi: &[f64]) -> f64 {
    let xi_norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut lin = Complex64::new(0.0, 0.0);
    let mut sq = Complex64::new(0.0, 0.0);
    for ((zj, yj), xj) in z.iter().zip(y).zip(xi) {
        let d = Complex64::new(*yj, 0.0) - zj;
        lin += d * xj;
        sq += d * d;
    }
    (Complex64::i() * lin - sq * xi_norm).re
}

/// Fits the largest `C0 ∈ {2^{−j} : 0 ≤ j ≤ 10}` with `Re Q + C0 t |ξ| / 2 ≤ 0` on the sampled cone, boxes and `t ∈ (0, t_max]`.
pub fn phase_bound_check<Z>(z: Z, cfg: &PhaseBoundConfig) -> Result<PhaseBoundReport, FbiError>
where
    Z: Fn(&[f64], f64) -> Vec<Complex64> + Sync,
{
    let dim = cfg.center.len();
    if cfg.x_box.len() != dim || cfg.y_box.len() != dim || !(cfg.t_max > 0.0) || cfg.n_t == 0 {
        return Err(FbiError::BadGrid("phase-bound configuration".into()));
    }
    let xs = box_points(&cfg.x_box, cfg.n_x);
    let ys = box_points(&cfg.y_box, cfg.n_y);
    let init = xs
        .iter()
        .map(|x| z(x, 0.0).iter().zip(x).map(|(zj, xj)| (zj - xj).norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if init > 1e-9 {
        return Err(FbiError::InitialCondition(init));
    }
    let dirs = cfg.directions();
    let ts: Vec<f64> = (1..=cfg.n_t).map(|i| cfg.t_max * i as f64 / cfg.n_t as f64).collect();
    // sup of Re Q / t over (y, direction), per (x, t) sample
    let ratios: Vec<f64> = xs
        .par_iter()
        .flat_map_iter(|x| {
            let zs: Vec<(f64, Vec<Complex64>)> = ts.iter().map(|&t| (t, z(x, t))).collect();
            let mut out = Vec::with_capacity(zs.len());
            for (t, zv) in zs {
                let mut worst = f64::NEG_INFINITY;
                for y in &ys {
                    for d in &dirs {
                        worst = worst.max(phase_re(&zv, y, d));
                    }
                }
                out.push(worst / t);
            }
            out
        })
        .collect();
    let sup_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for j in 0..=10 {
        let c0 = 2f64.powi(-j);
        let violation = sup_ratio + c0 / 2.0;
        if violation <= 0.0 {
            let max_violation = max_violation_at(&ratios, &ts, c0);
            return Ok(PhaseBoundReport { center: cfg.center.clone(), half_angle: cfg.half_angle, c0, delta: cfg.t_max, max_violation });
        }
    }
    Err(FbiError::NoCone)
}

fn max_violation_at(ratios: &[f64], ts: &[f64], c0: f64) -> f64 {
    ratios.iter().enumerate().map(|(k, r)| (r + c0 / 2.0) * ts[k % ts.len()]).fold(f64::NEG_INFINITY, f64::max)
}

/// Tries the cones around `+1` and `−1` in one dimension; returns the admissible centers.
pub fn admissible_half_lines<Z>(z: Z, template: &PhaseBoundConfig) -> Result<Vec<PhaseBoundReport>, FbiError>
where
    Z: Fn(&[f64], f64) -> Vec<Complex64> + Sync,
{
    let mut out = Vec::new();
    for s in [-1.0, 1.0] {
        let mut cfg = template.clone();
        cfg.center = vec![s];
        match phase_bound_check(&z, &cfg) {
            Ok(r) => out.push(r),
            Err(FbiError::NoCone) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Decay comparison of `u` at `x` along `−1` and `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfLineDecay {
    pub rate_minus: f64,
    pub rate_plus: f64,
    /// `−1.0` or `1.0`: the half-line with the faster tail decay.
    pub decay_side: f64,
}

pub fn empirical_decay_side(u: &GridFunction, x: f64, lambdas: &[f64]) -> Result<HalfLineDecay, FbiError> {
    let minus = decay_samples(u, &[x], &[-1.0], lambdas)?;
    let plus = decay_samples(u, &[x], &[1.0], lambdas)?;
    let rate_minus = tail_rate(lambdas, &minus);
    let rate_plus = tail_rate(lambdas, &plus);
    Ok(HalfLineDecay { rate_minus, rate_plus, decay_side: if rate_minus > rate_plus { -1.0 } else { 1.0 } })
}

/// Named sampled fixtures.
pub fn fixture(name: &str) -> Result<GridFunction, FbiError> {
    let c = |re: f64| Complex64::new(re, 0.0);
    match name {
        "gaussian" => GridFunction::sample(vec![(-8.0, 8.0)], vec![4096], |y| c((-y[0] * y[0]).exp())),
        "sign" => Ok(GridFunction::sample(vec![(-1.0, 1.0)], vec![513], |y| c(if y[0] > 0.0 { 1.0 } else if y[0] < 0.0 { -1.0 } else { 0.0 }))?.with_cutoff(&[0.0], 1.0)),
        "gaussian-cut" => Ok(GridFunction::sample(vec![(-1.0, 1.0)], vec![513], |y| c((-y[0] * y[0]).exp()))?.with_cutoff(&[0.0], 1.0)),
        "trace-upper" => Ok(GridFunction::sample(vec![(-1.0, 1.0)], vec![513], |y| Complex64::new(y[0], 0.05).inv())?.with_cutoff(&[0.0], 1.0)),
        "trace-lower" => Ok(GridFunction::sample(vec![(-1.0, 1.0)], vec![513], |y| Complex64::new(y[0], -0.05).inv())?.with_cutoff(&[0.0], 1.0)),
        "conormal" => Ok(GridFunction::sample(vec![(-2.0, 2.0); 2], vec![513; 2], |y| c((y[0] - y[1]).abs().powi(3)))?.with_cutoff(&[0.0, 0.0], 2.0)),
        "gaussian-2d" => Ok(GridFunction::sample(vec![(-2.0, 2.0); 2], vec![513; 2], |y| c((-(y[0] * y[0] + y[1] * y[1])).exp()))?.with_cutoff(&[0.0, 0.0], 2.0)),
        _ => Err(FbiError::BadGrid(format!("unknown fixture `{name}`"))),
    }
}

pub const FIXTURES: &[&str] = &["gaussian", "sign", "gaussian-cut", "trace-upper", "trace-lower", "conormal", "gaussian-2d"];
