//! The shipped acceptance suite: ten desk-scale checks with runtime budgets.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynkin::{flatness_fit, log_grid, lorentzian_jet, ApproxSolution, DynkinKernel};
use crate::fbi::{self, DecayConfig, FbiError, PhaseBoundConfig};
use crate::jets::{formal_solution, EvalBox, Jet, JetSpace, Validity, VectorFieldJet};
use crate::pde::{self, CharConvention, PdeError, WfExperimentConfig};
use crate::weights::WeightSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    #[serde(skip)]
    pub elapsed_s: f64,
    pub budget_s: f64,
    pub checks: Vec<SubCheck>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        let mut s = format!(
            "[{}] criterion {:>2} {:<28} {:>8.3} s (budget {} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_s,
            self.budget_s
        );
        if !failed.is_empty() {
            s.push_str(&format!("  failing: {}", failed.join(", ")));
        }
        s
    }
}

/// Criteria whose failure is expected and explained in the README.
pub const EXPECTED_FAILURES: &[u32] = &[1];

/// The sub-check of criterion 1 that cannot hold for `h₁(r) = inf_k m_k r^{k−1}`.
pub const EXPECTED_FAILING_CHECK: &str = "h1 = 1 on [1, 10]";

pub const CRITERIA: &[(u32, &str, f64)] = &[
    (1, "weights suite", 1.0),
    (2, "kernel reproduction", 1.0),
    (3, "formal-solution oracles", 1.0),
    (4, "flatness", 30.0),
    (5, "FBI Gaussian", 5.0),
    (6, "classification", 10.0),
    (7, "WF in Char", 60.0),
    (8, "phase bound", 10.0),
    (9, "renormalization", 10.0),
    (10, "chain identity", 5.0),
];

fn check(name: &str, passed: bool, detail: impl Into<String>) -> SubCheck {
    SubCheck { name: name.to_string(), passed, detail: detail.into() }
}

fn error_check(name: &str, e: impl std::fmt::Display) -> SubCheck {
    check(name, false, format!("error: {e}"))
}

pub fn run(id: u32, seed: u64) -> Option<CriterionResult> {
    let &(id, name, budget) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let checks = match id {
        1 => weights_suite(seed),
        2 => kernel_reproduction(),
        3 => formal_oracles(),
        4 => flatness(),
        5 => fbi_gaussian(),
        6 => classification(),
        7 => wf_in_char(),
        8 => phase_bound(),
        9 => renormalization(),
        _ => chain_identity(),
    };
    let elapsed_s = start.elapsed().as_secs_f64();
    let mut checks = checks;
    let within = elapsed_s < budget;
    checks.push(check("runtime", within, format!("{} {budget} s", if within { "under" } else { "over" })));
    let passed = checks.iter().all(|c| c.passed);
    Some(CriterionResult { id, name: name.to_string(), passed, elapsed_s, budget_s: budget, checks })
}

pub fn run_all(seed: u64) -> Vec<CriterionResult> {
    CRITERIA.iter().filter_map(|c| run(c.0, seed)).collect()
}

fn weights_suite(seed: u64) -> Vec<SubCheck> {
    let s = match WeightSequence::gevrey(2.0, 64) {
        Ok(s) => s,
        Err(e) => return vec![error_check("sequence", e)],
    };
    let rs = log_grid(1.0, 10.0, 20);
    let mut out = Vec::new();
    let h1: Vec<f64> = rs.iter().map(|&r| s.h1(r).unwrap_or(f64::NAN)).collect();
    let bad = rs.iter().zip(&h1).filter(|(_, &v)| v != 1.0).count();
    out.push(check(EXPECTED_FAILING_CHECK, bad == 0, format!("{bad}/20 differ; h1(10) = {}", h1[19])));
    let bad_n = rs.iter().filter(|&&r| s.big_n(r).ok() != Some(0)).count();
    out.push(check("N = 0 on [1, 10]", bad_n == 0, format!("{bad_n}/20 differ")));
    let n04 = s.big_n(0.4);
    out.push(check("N(0.4) = 2", matches!(n04, Ok(2)), format!("{n04:?}")));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_lo = s.min_certified_r().max(1e-3);
    let mut violations = 0;
    for _ in 0..1000 {
        let r = (r_lo.ln() * (1.0 - rng.random::<f64>())).exp();
        let big_n = s.big_n(r).unwrap_or(0);
        let n = rng.random_range(0..=big_n);
        let k = rng.random_range(n..=big_n);
        if s.m(k) * r.powi(k as i32) > s.m(n) * r.powi(n as i32) {
            violations += 1;
        }
    }
    out.push(check("m_k r^k <= m_n r^n for n <= k <= N(r)", violations == 0, format!("{violations}/1000 violations")));

    let grid = log_grid(s.min_certified_r(), 1.0, 40);
    for n in 0..=3 {
        match s.absorption_fit(n, &grid, 0..=6) {
            Ok(fit) => out.push(check(&format!("absorption n = {n}"), fit.c <= 1024.0, format!("C = {:.4e}, Q = {}", fit.c, fit.q))),
            Err(e) => out.push(error_check(&format!("absorption n = {n}"), e)),
        }
    }
    out
}

fn kernel_reproduction() -> Vec<SubCheck> {
    let kernel = match DynkinKernel::default_kernel() {
        Ok(k) => k,
        Err(e) => return vec![error_check("kernel", e)],
    };
    let mut worst = 0.0f64;
    for k in 0..=8usize {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); k + 1];
        coeffs[k] = Complex64::new(1.0, 0.0);
        for t in [0.1f64, -0.1, 0.01, -0.01] {
            let want = t.powi(k as i32);
            let got = kernel.apply_poly(&coeffs, t);
            worst = worst.max((got - want).norm() / want.abs());
        }
    }
    vec![check("z^k -> t^k, k <= 8", worst <= 1e-8, format!("max rel. error {worst:.3e}"))]
}

fn formal_oracles() -> Vec<SubCheck> {
    let run = || -> Result<Vec<SubCheck>, crate::jets::JetError> {
        let sp = JetSpace::origin(1, 0, 16);
        let x = Jet::var(&sp, 0)?;
        let mut out = Vec::new();

        let unit = VectorFieldJet::new(vec![Jet::real(&sp, 1.0)], vec![])?;
        let datum = x.mul(&x)?.with_validity(Validity::Exact);
        let series = formal_solution(&unit, &datum, 12)?;
        let mut want = vec![datum.clone(), x.scale(Complex64::new(-2.0, 0.0)), Jet::real(&sp, 1.0)];
        want.resize(13, Jet::zero(&sp));
        let mut worst = 0.0f64;
        for (k, w) in want.iter().enumerate() {
            let got = series.term(k).unwrap_or_else(|| Jet::zero(&sp));
            worst = worst.max(got.max_coeff_diff(w)?);
        }
        out.push(check("(x - t)^2 coefficients, k <= 12", worst <= 1e-12, format!("max diff {worst:.3e}")));
        let res = (0..=6).map(|n| series.residual_check(n)).collect::<Result<Vec<_>, _>>()?;
        let r = res.iter().cloned().fold(0.0, f64::max);
        out.push(check("(x - t)^2 residual, n <= 6", r <= 1e-12, format!("{r:.3e}")));

        let scaling = VectorFieldJet::new(vec![x.clone()], vec![])?;
        let series = formal_solution(&scaling, &x.clone().with_validity(Validity::Exact), 12)?;
        let mut worst = 0.0f64;
        let mut fact = 1.0;
        for k in 0..=12 {
            if k > 0 {
                fact *= k as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let w = x.scale(Complex64::new(sign / fact, 0.0));
            let got = series.term(k).unwrap_or_else(|| Jet::zero(&sp));
            worst = worst.max(got.max_coeff_diff(&w)?);
        }
        out.push(check("x e^{-t} coefficients, k <= 12", worst <= 1e-12, format!("max diff {worst:.3e}")));
        let res = (0..=6).map(|n| series.residual_check(n)).collect::<Result<Vec<_>, _>>()?;
        let r = res.iter().cloned().fold(0.0, f64::max);
        out.push(check("x e^{-t} residual, n <= 6", r <= 1e-12, format!("{r:.3e}")));
        Ok(out)
    };
    run().unwrap_or_else(|e| vec![error_check("formal solution", e)])
}

fn flatness() -> Vec<SubCheck> {
    let mut out = Vec::new();
    for (s, k_max) in [(1.5, 1usize << 21), (2.0, 1 << 13)] {
        let name = format!("Gevrey({s})");
        let res = (|| -> Result<SubCheck, crate::dynkin::DynkinError> {
            let sp = JetSpace::origin(1, 0, 24);
            let field = VectorFieldJet::new(vec![Jet::var(&sp, 0)?], vec![])?;
            let seq = WeightSequence::gevrey(s, k_max)?;
            let bx = EvalBox { x: vec![(-0.5, 0.5)], zeta: vec![], samples: 21 };
            let sol = ApproxSolution::build(&field, &lorentzian_jet(24), seq.clone(), DynkinKernel::default_kernel()?, &bx, 100_000)?;
            let d = sol.delta();
            let ts: Vec<f64> = log_grid(1e-3, d, 24).into_iter().flat_map(|t| [t, -t]).collect();
            let samples = sol.flatness_samples(&bx, &ts)?;
            let fit = flatness_fit(&samples, &seq, d)?;
            let ok = fit.passed && fit.sup_ratio <= 1.0 && fit.q <= 256.0;
            Ok(check(&name, ok, format!("A = {:.4e}, Q = {:.4}, delta = {:.4}, sup_ratio = {:.4}", fit.a, fit.q, fit.delta, fit.sup_ratio)))
        })();
        out.push(res.unwrap_or_else(|e| error_check(&name, e)));
    }
    out
}

fn fbi_gaussian() -> Vec<SubCheck> {
    let run = || -> Result<SubCheck, FbiError> {
        let u = fbi::fixture("gaussian")?;
        let mut worst = 0.0f64;
        for xi in log_grid(1.0, 40.0, 20) {
            let f = fbi::fbi_transform(&u, &[0.0], &[xi])?;
            let want = fbi::gaussian_fbi(xi);
            worst = worst.max((f - want).norm() / want);
        }
        Ok(check("closed form, |xi| in [1, 40]", worst <= 1e-6, format!("max rel. error {worst:.3e}")))
    };
    vec![run().unwrap_or_else(|e| error_check("closed form", e))]
}

fn seq_fbi() -> Result<WeightSequence, crate::weights::WeightError> {
    WeightSequence::gevrey(2.0, 4096)
}

fn classification() -> Vec<SubCheck> {
    let run = || -> Result<Vec<SubCheck>, FbiError> {
        let seq = seq_fbi()?;
        let cfg = DecayConfig::default();
        let sign = fbi::wavefront_scan(&fbi::fixture("sign")?, &[0.0], 2, &cfg, &seq)?;
        let gauss = fbi::wavefront_scan(&fbi::fixture("gaussian-cut")?, &[0.0], 2, &cfg, &seq)?;
        let lambdas = cfg.lambdas();
        let values = lambdas.iter().map(|&l| seq.fbi_envelope(2.0, l)).collect::<Result<Vec<_>, _>>()?;
        let inj = fbi::decay_classify(&seq, &[0.0], &[1.0], &lambdas, &values, cfg.lambda_min)?;
        let a_ok = inj.a_fit.is_some_and(|a| (a.log2() - 1.0).abs() <= 0.5 + 1e-12);
        Ok(vec![
            check("sign fails both directions", sign.reports.iter().all(|r| !r.passed), format!("rates {:?}", sign.reports.iter().map(|r| r.rate_tail).collect::<Vec<_>>())),
            check("Gaussian passes both directions", gauss.reports.iter().all(|r| r.passed), format!("A_fit {:?}", gauss.reports.iter().map(|r| r.a_fit).collect::<Vec<_>>())),
            check("E(2, lambda) recovers A", a_ok, format!("A_fit = {:?}", inj.a_fit)),
        ])
    };
    run().unwrap_or_else(|e| vec![error_check("classification", e)])
}

fn wf_in_char() -> Vec<SubCheck> {
    let run = || -> Result<Vec<SubCheck>, PdeError> {
        let seq = seq_fbi().map_err(|e| PdeError::Fbi(e.into()))?;
        let cfg = WfExperimentConfig { n_directions: 64, decay: DecayConfig::default(), convention: CharConvention::Symbol, base_point: (0.0, 0.0) };
        let fx = pde::fixture("conormal")?;
        let r = pde::wf_inclusion_experiment(&fx.model, &fx.default_solution()?, &seq, &cfg)?;
        let targets = [3.0 * PI / 4.0, 7.0 * PI / 4.0];
        let hits: Vec<Option<usize>> = r
            .singular
            .iter()
            .map(|s| targets.iter().position(|&t| fbi::angle_between(fbi::direction_angle(&s.omega), t) <= r.angular_step + 1e-12))
            .collect();
        let exact = r.singular.len() == 2 && hits.contains(&Some(0)) && hits.contains(&Some(1));
        let angles: Vec<String> = r.singular.iter().map(|s| format!("{:.4}", fbi::direction_angle(&s.omega))).collect();
        let fh = pde::fixture("holomorphic")?;
        let h = pde::wf_inclusion_experiment(&fh.model, &fh.default_solution()?, &seq, &cfg)?;
        Ok(vec![
            check("conormal singular set = two normal directions", exact, format!("angles {angles:?}")),
            check("conormal singular set in Char", r.pass, format!("max distance {:.4e}, step {:.4e}", r.max_distance, r.angular_step)),
            check("holomorphic singular set empty", h.singular.is_empty(), format!("{} singular", h.singular.len())),
        ])
    };
    run().unwrap_or_else(|e| vec![error_check("experiment", e)])
}

fn z_shift(sign: f64) -> impl Fn(&[f64], f64) -> Vec<Complex64> + Sync {
    move |x: &[f64], t: f64| x.iter().enumerate().map(|(j, &v)| Complex64::new(v, if j == 0 { sign * t } else { 0.0 })).collect()
}

fn phase_bound() -> Vec<SubCheck> {
    let run = || -> Result<Vec<SubCheck>, PdeError> {
        let mut out = Vec::new();
        let minus = PhaseBoundConfig::new(vec![-1.0, 0.0], PI / 8.0);
        let plus = PhaseBoundConfig::new(vec![1.0, 0.0], PI / 8.0);
        let r = fbi::phase_bound_check(z_shift(1.0), &minus);
        out.push(match &r {
            Ok(rep) => check("Z = x + it, cone around -1", rep.c0 >= 0.5 && rep.max_violation <= 0.0, format!("C0 = {}, max violation {:.3e}", rep.c0, rep.max_violation)),
            Err(e) => error_check("Z = x + it, cone around -1", e),
        });
        let mirrored = fbi::phase_bound_check(z_shift(-1.0), &plus);
        let refused = matches!(fbi::phase_bound_check(z_shift(-1.0), &minus), Err(FbiError::NoCone));
        out.push(match &mirrored {
            Ok(rep) => check("Z = x - it, mirrored cone", rep.c0 >= 0.5 && refused, format!("C0 = {}, cone around -1 refused: {refused}", rep.c0)),
            Err(e) => error_check("Z = x - it, mirrored cone", e),
        });
        let tmpl = PhaseBoundConfig::new(vec![-1.0], 0.0);
        let lines = fbi::admissible_half_lines(z_shift(1.0), &tmpl)?;
        let recovered: Vec<f64> = lines.iter().map(|l| l.center[0]).collect();
        let seq = seq_fbi().map_err(|e| PdeError::Fbi(e.into()))?;
        let cfg = DecayConfig::default();
        let side = fbi::empirical_decay_side(&fbi::fixture("trace-upper")?, 0.0, &cfg.lambdas())?;
        out.push(check(
            "half-line matches trace decay side",
            recovered == vec![side.decay_side],
            format!("phase bound {recovered:?}, decay side {} (rates -: {:.3}, +: {:.3})", side.decay_side, side.rate_minus, side.rate_plus),
        ));
        let oracle = pde::trace_sign_oracle(&seq, &cfg)?;
        let nonneg = oracle.options.iter().find(|o| o.sign == 1.0).is_some_and(|o| o.consistent);
        let nonpos = oracle.options.iter().find(|o| o.sign == -1.0).is_some_and(|o| o.consistent);
        out.push(check(
            "trace half-space sign pinned",
            nonneg != nonpos,
            format!("b0 = {}, slow side {:?}, Im b0 xi >= 0: {nonneg}, Im b0 xi <= 0: {nonpos}", oracle.b0[0], oracle.slow_side),
        ));
        Ok(out)
    };
    run().unwrap_or_else(|e| vec![error_check("phase bound", e)])
}

fn renormalization() -> Vec<SubCheck> {
    let run = || -> Result<SubCheck, PdeError> {
        let build = || -> Result<ApproxSolution, crate::dynkin::DynkinError> {
            let sp = JetSpace::origin(1, 0, 4);
            let x = Jet::var(&sp, 0)?;
            let field = VectorFieldJet::new(vec![x.clone()], vec![])?;
            let seq = WeightSequence::gevrey(2.0, 1 << 16)?;
            let bx = EvalBox { x: vec![(-0.25, 0.25)], zeta: vec![], samples: 11 };
            ApproxSolution::build(&field, &x.with_validity(Validity::Exact), seq, DynkinKernel::default_kernel()?, &bx, 400)
        };
        let sol = build().map_err(|e| PdeError::Invalid(e.to_string()))?;
        let xs: Vec<Vec<f64>> = (0..=10).map(|i| vec![-0.25 + 0.05 * i as f64]).collect();
        let z = |x: &[f64], t: f64| sol.evaluate(x, t, &[]).map(|v| vec![v]).map_err(|e| PdeError::Invalid(e.to_string()));
        let r = pde::renormalize(z, Some(|x: &[f64], _t: f64| vec![Complex64::new(x[0], 0.0)]), &xs, &[0.0], 1e-3)?;
        let gap = r.initial_gap.unwrap_or(f64::INFINITY);
        Ok(check("max |b(x,0) - a(x,0)| <= 1e-4", gap <= 1e-4, format!("gap {gap:.3e}, condition {:.3}", r.condition_number)))
    };
    vec![run().unwrap_or_else(|e| error_check("renormalize", e))]
}

fn chain_identity() -> Vec<SubCheck> {
    let run = || -> Result<Vec<SubCheck>, PdeError> {
        let fx = pde::fixture("transport")?;
        let sp = fx.model.space().clone();
        let mut out = Vec::new();
        for (name, slot) in [("phi = zeta0", 1usize), ("phi = zeta1", 2), ("phi = x1", 0)] {
            let phi = Jet::var(&sp, slot)?;
            let c = pde::chain_convergence(&fx, &phi, 81, 1e-4)?;
            out.push(check(name, c.passed, format!("residuals {:.3e} -> {:.3e}, ratio {:.3}", c.residual_coarse, c.residual_fine, c.ratio)));
        }
        Ok(out)
    };
    run().unwrap_or_else(|e| vec![error_check("chain identity", e)])
}
