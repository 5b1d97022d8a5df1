//! Regular Denjoy-Carleman weight sequences and their associated functions.
//!
//! A sequence is stored through `ln m_k`, where `m_k = M_k / k!`, so that
//! indices in the thousands (needed when `r` is small) stay finite. All
//! infima are taken over the materialized range `0..=K_max`; when the
//! minimizer sits on the table boundary with terms still decreasing the
//! value is not certified and [`WeightError::GuardExceeded`] is returned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default proxy threshold for condition d): `m_K^{1/K} >= 4`.
pub const D_THRESHOLD: f64 = 4.0;

/// Log-domain tolerance used for ties between consecutive terms.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("invalid weight sequence: {0}")]
    Invalid(String),
    #[error("infimum at r = {r:e} not certified: minimizer reaches K_max = {k_max}")]
    GuardExceeded { r: f64, k_max: usize },
    #[error("no absorption constants found for n = {0}")]
    FitFailed(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SequenceKind {
    /// `M_k = k!^s`.
    Gevrey { s: f64 },
    /// Explicit `M_0, M_1, ...`.
    Table { values: Vec<f64> },
}

/// Serialized form: `{"kind": "gevrey", "s": 2, "K_max": 64}` or
/// `{"kind": "table", "values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    #[serde(flatten)]
    pub kind: SequenceKind,
    #[serde(rename = "K_max", default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

impl SequenceSpec {
    pub fn gevrey(s: f64, k_max: usize) -> Self {
        Self { kind: SequenceKind::Gevrey { s }, k_max: Some(k_max) }
    }

    pub fn build(&self) -> Result<WeightSequence, WeightError> {
        let k_max = match (&self.kind, self.k_max) {
            (_, Some(k)) => k,
            (SequenceKind::Table { values }, None) => values.len().saturating_sub(1),
            (SequenceKind::Gevrey { .. }, None) => 64,
        };
        WeightSequence::new(self.kind.clone(), k_max)
    }
}

/// Which associated function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assoc {
    /// `h(r) = inf_k m_k r^k`
    H,
    /// `h_1(r) = inf_k m_k r^{k-1}`
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularityFailure {
    pub condition: Condition,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub passed: bool,
    pub failures: Vec<RegularityFailure>,
}

impl RegularityReport {
    pub fn fails(&self, c: Condition) -> bool {
        self.failures.iter().any(|f| f.condition == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionFit {
    pub n: u32,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "Q")]
    pub q: f64,
}

/// A materialized weight sequence. Immutable after construction.
#[derive(Debug, Clone)]
pub struct WeightSequence {
    kind: SequenceKind,
    k_max: usize,
    ln_m: Vec<f64>,
    /// `ln m_{k+1} - ln m_k` for `k < K_max`.
    step: Vec<f64>,
    ln_fact: Vec<f64>,
    c_bound: f64,
    log_convex: bool,
}

impl WeightSequence {
    pub fn new(kind: SequenceKind, k_max: usize) -> Result<Self, WeightError> {
        if k_max < 8 {
            return Err(WeightError::Invalid(format!("K_max = {k_max} < 8")));
        }
        let mut ln_fact = Vec::with_capacity(k_max + 1);
        let mut acc = 0.0;
        for k in 0..=k_max {
            if k > 1 {
                acc += (k as f64).ln();
            }
            ln_fact.push(acc);
        }
        let (ln_m, step) = match &kind {
            SequenceKind::Gevrey { s } => {
                if !(*s > 1.0) || !s.is_finite() {
                    return Err(WeightError::Invalid(format!("Gevrey exponent s = {s} must exceed 1")));
                }
                let step: Vec<f64> = (0..k_max).map(|k| (s - 1.0) * ((k + 1) as f64).ln()).collect();
                let mut ln_m = Vec::with_capacity(k_max + 1);
                let mut acc = 0.0;
                ln_m.push(0.0);
                for d in &step {
                    acc += d;
                    ln_m.push(acc);
                }
                (ln_m, step)
            }
            SequenceKind::Table { values } => {
                if values.len() < k_max + 1 {
                    return Err(WeightError::Invalid(format!(
                        "table has {} entries, K_max = {k_max} needs {}",
                        values.len(),
                        k_max + 1
                    )));
                }
                if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                    return Err(WeightError::Invalid(format!("non-positive table entry {v}")));
                }
                let ln_m: Vec<f64> = (0..=k_max).map(|k| values[k].ln() - ln_fact[k]).collect();
                let step = ln_m.windows(2).map(|w| w[1] - w[0]).collect();
                (ln_m, step)
            }
        };
        let log_convex = step.windows(2).all(|w: &[f64]| w[1] >= w[0] - TIE_TOL);
        let c_bound = (1..k_max)
            .map(|k| (step[k] / k as f64).exp())
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1.0);
        Ok(Self { kind, k_max, ln_m, step, ln_fact, c_bound, log_convex })
    }

    pub fn gevrey(s: f64, k_max: usize) -> Result<Self, WeightError> {
        Self::new(SequenceKind::Gevrey { s }, k_max)
    }

    pub fn kind(&self) -> &SequenceKind {
        &self.kind
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn spec(&self) -> SequenceSpec {
        SequenceSpec { kind: self.kind.clone(), k_max: Some(self.k_max) }
    }

    /// Empirical `sup_k (m_{k+1}/m_k)^{1/k}` over the materialized range.
    pub fn c_bound(&self) -> f64 {
        self.c_bound
    }

    pub fn is_log_convex(&self) -> bool {
        self.log_convex
    }

    pub fn ln_m(&self, k: usize) -> f64 {
        self.ln_m[k]
    }

    pub fn m(&self, k: usize) -> f64 {
        self.ln_m[k].exp()
    }

    /// `ln M_k = ln m_k + ln k!`.
    pub fn ln_big_m(&self, k: usize) -> f64 {
        self.ln_m[k] + self.ln_fact[k]
    }

    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.ln_fact[k]
    }

    pub fn check_regularity(&self) -> RegularityReport {
        self.check_regularity_with(D_THRESHOLD)
    }

    pub fn check_regularity_with(&self, d_threshold: f64) -> RegularityReport {
        let mut failures = Vec::new();
        let k = self.k_max;
        for i in 0..=1 {
            if self.ln_m[i].abs() > 1e-12 {
                failures.push(RegularityFailure { condition: Condition::A, index: i });
                break;
            }
        }
        // b): strong log-convexity, plus the monotonicity it implies together with a)
        let convex_break = (1..k).find(|&i| 2.0 * self.ln_m[i] > self.ln_m[i - 1] + self.ln_m[i + 1] + 1e-12);
        let monotone_break = (0..k).find(|&i| self.step[i] < -1e-12).map(|i| i + 1);
        if let Some(i) = [convex_break, monotone_break].into_iter().flatten().min() {
            failures.push(RegularityFailure { condition: Condition::B, index: i });
        }
        // c): the ratio bound must not still be growing at the end of the table
        let ratios: Vec<f64> = (1..k).map(|i| self.step[i] / i as f64).collect();
        let split = (3 * ratios.len()) / 4;
        let head = ratios[..split].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (tail_idx, tail) = ratios[split..]
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if !self.c_bound.is_finite() || tail > head + 1e-9 {
            failures.push(RegularityFailure { condition: Condition::C, index: split + tail_idx + 1 });
        }
        // d): finite proxy for m_k^{1/k} -> infinity
        let root = |i: usize| self.ln_m[i] / i as f64;
        let top = (3 * k) / 4;
        let growing = (top.max(1)..k).all(|i| root(i + 1) >= root(i) - 1e-15);
        if root(k) < d_threshold.ln() || !growing {
            failures.push(RegularityFailure { condition: Condition::D, index: k });
        }
        RegularityReport { passed: failures.is_empty(), failures }
    }

    /// Minimizer of `ln m_k + k * slope` (or of `ln M_k + k * slope` when
    /// `big` is set). Ties resolve to the least index.
    fn argmin(&self, slope: f64, big: bool, r_report: f64) -> Result<usize, WeightError> {
        let inc = |k: usize| {
            let d = self.step[k] + slope;
            if big {
                d + ((k + 1) as f64).ln()
            } else {
                d
            }
        };
        let guard = WeightError::GuardExceeded { r: r_report, k_max: self.k_max };
        if self.log_convex {
            // increments are nondecreasing: the first non-negative one marks the minimum
            let k = partition_point(self.k_max, |k| inc(k) < -TIE_TOL);
            return if k == self.k_max { Err(guard) } else { Ok(k) };
        }
        let mut best = 0;
        let mut best_val = 0.0;
        let mut val = 0.0;
        for k in 1..=self.k_max {
            val += inc(k - 1);
            if val < best_val - TIE_TOL {
                best = k;
                best_val = val;
            }
        }
        if best == self.k_max && inc(self.k_max - 1) < -TIE_TOL {
            return Err(guard);
        }
        Ok(best)
    }

    /// `ln h(r)` or `ln h_1(r)`.
    pub fn ln_assoc(&self, variant: Assoc, r: f64) -> Result<f64, WeightError> {
        if !(r > 0.0) {
            return Err(WeightError::Invalid(format!("r = {r} must be positive")));
        }
        let lr = r.ln();
        let k = self.argmin(lr, false, r)?;
        let shift = match variant {
            Assoc::H => 0.0,
            Assoc::H1 => -1.0,
        };
        Ok(self.ln_m[k] + (k as f64 + shift) * lr)
    }

    pub fn assoc(&self, variant: Assoc, r: f64) -> Result<f64, WeightError> {
        let k = self.big_n(r)?;
        let p = match variant {
            Assoc::H => k as i32,
            Assoc::H1 => k as i32 - 1,
        };
        let direct = self.m(k) * r.powi(p);
        if k < 256 && direct.is_normal() {
            Ok(direct)
        } else {
            self.ln_assoc(variant, r).map(f64::exp)
        }
    }

    pub fn h(&self, r: f64) -> Result<f64, WeightError> {
        self.assoc(Assoc::H, r)
    }

    pub fn h1(&self, r: f64) -> Result<f64, WeightError> {
        self.assoc(Assoc::H1, r)
    }

    /// `N(r)`: least index attaining `h_1(r)`.
    pub fn big_n(&self, r: f64) -> Result<usize, WeightError> {
        if !(r > 0.0) {
            return Err(WeightError::Invalid(format!("r = {r} must be positive")));
        }
        self.argmin(r.ln(), false, r)
    }

    /// Smallest `r` for which `N(r)` is certified on this table.
    pub fn min_certified_r(&self) -> f64 {
        if self.log_convex {
            (-self.step[self.k_max - 1]).exp() * (1.0 + 1e-12)
        } else {
            // conservative: every term up to K_max must already be increasing
            let worst = self.step.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (-worst).exp()
        }
    }

    /// `ln E(A, λ)` with `E(A, λ) = inf_k A^{k+1} M_k λ^{-k}` and the
    /// minimizing index, which is also the local log-log decay rate of `E`.
    pub fn ln_fbi_envelope(&self, a: f64, lambda: f64) -> Result<(f64, usize), WeightError> {
        if !(a > 0.0) || !(lambda > 0.0) {
            return Err(WeightError::Invalid(format!("A = {a}, lambda = {lambda} must be positive")));
        }
        let slope = (a / lambda).ln();
        let k = self.argmin(slope, true, lambda / a)?;
        Ok((a.ln() + self.ln_big_m(k) + k as f64 * slope, k))
    }

    pub fn fbi_envelope(&self, a: f64, lambda: f64) -> Result<f64, WeightError> {
        self.ln_fbi_envelope(a, lambda).map(|(v, _)| v.exp())
    }

    /// Fits `r^{-n} h(r) <= C h(Q r)` over the sampled `r`, with `Q = 2^j`.
    /// Among the admissible `Q` the one with the smallest `C` is kept.
    pub fn absorption_fit(&self, n: u32, rs: &[f64], q_exponents: std::ops::RangeInclusive<i32>) -> Result<AbsorptionFit, WeightError> {
        let mut best: Option<AbsorptionFit> = None;
        for j in q_exponents {
            let q = 2f64.powi(j);
            let mut ln_c = f64::NEG_INFINITY;
            let mut ok = true;
            for &r in rs {
                match (self.ln_assoc(Assoc::H, r), self.ln_assoc(Assoc::H, q * r)) {
                    (Ok(lhs), Ok(rhs)) => ln_c = ln_c.max(lhs - n as f64 * r.ln() - rhs),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok || !ln_c.is_finite() {
                continue;
            }
            let c = ln_c.exp();
            if best.is_none_or(|b| c < b.c) {
                best = Some(AbsorptionFit { n, c, q });
            }
        }
        best.ok_or(WeightError::FitFailed(n))
    }
}

/// First index in `0..len` where `pred` turns false (`pred` must be monotone).
fn partition_point(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    /// Brute-force `min_k m_k r^k` straight from the definition.
    fn brute_h(m: impl Fn(usize) -> f64, r: f64, kmax: usize) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for k in 0..=kmax {
            let v = m(k) * r.powi(k as i32);
            if v < best.0 {
                best = (v, k);
            }
        }
        best
    }

    fn g2() -> WeightSequence {
        WeightSequence::gevrey(2.0, 64).unwrap()
    }

    #[test]
    fn gevrey_two_has_factorial_m() {
        let s = g2();
        assert_eq!(s.m(0), 1.0);
        assert_eq!(s.m(1), 1.0);
        assert!((s.m(2) - 2.0).abs() < 1e-14);
        for k in 0..20 {
            assert!((s.m(k) / factorial(k) - 1.0).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn regularity_of_gevrey_matches_brute_force() {
        let s = g2();
        let m: Vec<f64> = (0..=64).map(factorial).collect();
        // independent check of a)-d) on the raw table
        assert!(m[0] == 1.0 && m[1] == 1.0);
        for k in 1..64 {
            assert!(m[k] * m[k] <= m[k - 1] * m[k + 1] * (1.0 + 1e-12));
        }
        let c = (1..64).map(|k| (m[k + 1] / m[k]).powf(1.0 / k as f64)).fold(0.0, f64::max);
        assert!((s.c_bound() - c).abs() < 1e-9);
        assert!(m[64].powf(1.0 / 64.0) >= 4.0);
        assert!(s.check_regularity().passed);
    }

    #[test]
    fn flat_table_fails_divergence() {
        let values: Vec<f64> = (0..=16).map(factorial).collect();
        let s = WeightSequence::new(SequenceKind::Table { values }, 16).unwrap();
        let rep = s.check_regularity();
        assert!(!rep.passed);
        assert!(rep.fails(Condition::D));
        assert!(!rep.fails(Condition::A));
    }

    #[test]
    fn decreasing_table_fails_b() {
        let mut values: Vec<f64> = (0..=10).map(|k| factorial(k) * factorial(k)).collect();
        values[2] = 0.5;
        let s = WeightSequence::new(SequenceKind::Table { values }, 10).unwrap();
        let rep = s.check_regularity();
        assert!(rep.fails(Condition::B));
        assert!(!rep.passed);
    }

    #[test]
    fn construction_preconditions() {
        assert!(WeightSequence::gevrey(1.0, 64).is_err());
        assert!(WeightSequence::gevrey(2.0, 7).is_err());
        let short = SequenceKind::Table { values: vec![1.0; 5] };
        assert!(WeightSequence::new(short, 8).is_err());
        let neg = SequenceKind::Table { values: vec![1.0, 1.0, -2.0, 6.0, 24.0, 120.0, 720.0, 5040.0, 40320.0] };
        assert!(WeightSequence::new(neg, 8).is_err());
    }

    #[test]
    fn assoc_examples() {
        let s = g2();
        // k = 0 term of m_k r^{k-1} is 1/r, which wins for r > 1
        assert_eq!(s.h1(2.0).unwrap(), 0.5);
        assert_eq!(s.h1(1.0).unwrap(), 1.0);
        assert!((s.h(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.h(3.0).unwrap(), 1.0);
        let (b, _) = brute_h(factorial, 0.5, 64);
        assert_eq!(b, 0.5);
    }

    #[test]
    fn big_n_examples() {
        let s = g2();
        assert_eq!(s.big_n(1.5).unwrap(), 0);
        assert_eq!(s.big_n(0.4).unwrap(), 2);
        for n in 1..=10usize {
            let r = s.m(n) / s.m(n + 1);
            assert_eq!(s.big_n(r).unwrap(), n, "n = {n}");
        }
    }

    #[test]
    fn small_r_is_refused() {
        let s = g2();
        assert!(matches!(s.big_n(1e-3), Err(WeightError::GuardExceeded { .. })));
        assert!(matches!(s.h(1e-3), Err(WeightError::GuardExceeded { .. })));
        let r = s.min_certified_r();
        assert!(s.big_n(r).is_ok());
        assert!(s.big_n(r * 0.99).is_err());
    }

    #[test]
    fn non_convex_table_uses_full_scan() {
        // log-convexity broken at k = 3; the global minimum is still found
        let mut values: Vec<f64> = (0..=9).map(|k| factorial(k) * factorial(k)).collect();
        values[3] = 108.0;
        let s = WeightSequence::new(SequenceKind::Table { values: values.clone() }, 9).unwrap();
        assert!(!s.is_log_convex());
        for &r in &[0.15, 0.3, 0.7, 2.0] {
            let (b, k) = brute_h(|k| values[k] / factorial(k), r, 9);
            assert!((s.h(r).unwrap() - b).abs() <= 1e-12 * b);
            assert_eq!(s.big_n(r).unwrap(), k);
        }
    }

    #[test]
    fn envelope_examples() {
        let s = g2();
        assert!((s.fbi_envelope(1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((s.fbi_envelope(1.0, 4.0).unwrap() - 0.25).abs() < 1e-15);
        // brute force of (k!)^2 / 4^k
        let b = (0..30).map(|k| factorial(k).powi(2) / 4f64.powi(k as i32)).fold(f64::INFINITY, f64::min);
        assert_eq!(b, 0.25);
    }

    #[test]
    fn envelope_beats_powers() {
        let s = WeightSequence::gevrey(2.0, 512).unwrap();
        for p in 0..=4 {
            let v: Vec<f64> = [1e2, 1e3, 1e4, 1e5]
                .iter()
                .map(|&l: &f64| l.powi(p) * s.fbi_envelope(1.0, l).unwrap())
                .collect();
            assert!(v.windows(2).all(|w| w[1] < w[0]), "p = {p}: {v:?}");
            assert!(v[3] < 1e-100);
        }
    }

    #[test]
    fn absorption_fit_gevrey() {
        let s = WeightSequence::gevrey(2.0, 2048).unwrap();
        let rs: Vec<f64> = (0..=60).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 60.0)).collect();
        for n in 1..=3 {
            let fit = s.absorption_fit(n, &rs, 0..=6).unwrap();
            assert!(fit.c <= 1024.0, "{fit:?}");
            for &r in &rs {
                let lhs = s.h(r).unwrap() / r.powi(n as i32);
                assert!(lhs <= fit.c * s.h(fit.q * r).unwrap() * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SequenceSpec::gevrey(1.5, 100);
        let txt = serde_json::to_string(&spec).unwrap();
        assert_eq!(txt, r#"{"kind":"gevrey","s":1.5,"K_max":100}"#);
        let back: SequenceSpec = serde_json::from_str(&txt).unwrap();
        assert_eq!(back, spec);
        let t: SequenceSpec = serde_json::from_str(r#"{"kind":"table","values":[1,1,2,6,24,120,720,5040,40320]}"#).unwrap();
        assert_eq!(t.build().unwrap().k_max(), 8);
    }

    proptest! {
        #[test]
        fn assoc_matches_brute_force(r in 0.1f64..4.0, s in 1.5f64..3.0) {
            let seq = WeightSequence::gevrey(s, 200).unwrap();
            let ln_fact = |k: usize| (2..=k).map(|i| (i as f64).ln()).sum::<f64>();
            let (ln_b, k) = (0..=200)
                .map(|k| ((s - 1.0) * ln_fact(k) + k as f64 * r.ln(), k))
                .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
            let b = ln_b.exp();
            let h = seq.h(r).unwrap();
            prop_assert!((h - b).abs() <= 1e-10 * b);
            let n = seq.big_n(r).unwrap();
            // equal up to ties within rounding
            prop_assert!(n == k || (seq.ln_m(n) + n as f64 * r.ln() - b.ln()).abs() < 1e-9);
        }

        #[test]
        fn n_zero_beyond_one(r in 1.0f64..50.0) {
            let seq = g2();
            prop_assert_eq!(seq.h1(r).unwrap(), 1.0 / r);
            prop_assert_eq!(seq.h(r).unwrap(), 1.0);
            prop_assert_eq!(seq.big_n(r).unwrap(), 0);
        }

        #[test]
        fn big_n_nonincreasing_and_h_monotone(a in 0.02f64..1.0, b in 0.02f64..1.0) {
            let seq = g2();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(seq.big_n(hi).unwrap() <= seq.big_n(lo).unwrap());
            prop_assert!(seq.h(lo).unwrap() <= seq.h(hi).unwrap() * (1.0 + 1e-12));
            prop_assert!(seq.h(hi).unwrap() <= 1.0);
        }

        #[test]
        fn m_k_r_k_bounded_below_n(r in 0.02f64..1.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let seq = g2();
            let big = seq.big_n(r).unwrap();
            let n = (u * (big + 1) as f64) as usize;
            let n = n.min(big);
            let k = n + ((v * (big - n + 1) as f64) as usize).min(big - n);
            let lhs = seq.ln_m(k) + k as f64 * r.ln();
            let rhs = seq.ln_m(n) + n as f64 * r.ln();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn envelope_monotone_in_lambda(a in 0.3f64..4.0, l1 in 1.0f64..100.0, l2 in 1.0f64..100.0) {
            let seq = WeightSequence::gevrey(2.0, 400).unwrap();
            let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
            prop_assert!(seq.fbi_envelope(a, hi).unwrap() <= seq.fbi_envelope(a, lo).unwrap() * (1.0 + 1e-12));
        }
    }
}
