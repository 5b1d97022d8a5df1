//! Command-line orchestration: configs, dispatch and CSV/JSON reports.
//!
//! Exit codes: 0 when every check passes, 1 on a failed check or I/O error,
//! 2 on usage or configuration errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::acceptance;
use crate::dynkin::{flatness_fit, log_grid, lorentzian_jet, ApproxSolution, DynkinKernel};
use crate::fbi::{self, DecayConfig, GridFunction};
use crate::jets::{formal_solution, growth_fit, EvalBox, Jet, JetSpace, VectorFieldJet};
use crate::pde::{self, CharConvention, RhsModel, WfExperimentConfig};
use crate::weights::{Assoc, SequenceSpec};

#[derive(Debug, Parser)]
#[command(name = "dcm", version, about = "Denjoy-Carleman weights, Dyn'kin approximate solutions and FBI wave-front experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV and JSON reports.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for fixture noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Associated functions, N(r), regularity and absorption fits.
    Weights,
    /// Formal solutions of L u = 0 with growth estimates.
    Jets,
    /// Dyn'kin approximate solution and flatness fit.
    Extend,
    /// FBI decay classification and wave-front scan.
    Fbi {
        /// Binary GridFunction input.
        #[arg(long, conflicts_with = "fixture")]
        input: Option<PathBuf>,
        /// Built-in fixture name.
        #[arg(long)]
        fixture: Option<String>,
    },
    /// WF ⊂ Char experiment on a manufactured solution.
    WfExperiment {
        #[arg(long)]
        fixture: Option<String>,
    },
    /// Runs the acceptance criteria.
    Acceptance {
        #[arg(long, conflicts_with = "criterion")]
        all: bool,
        #[arg(long)]
        criterion: Vec<u32>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Failed(m) => write!(f, "error: {m}"),
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Runs one command; `Ok(passed)` after the reports are written.
pub fn run(cli: &Cli) -> Result<bool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(failed)?;
    pool.install(|| match &cli.command {
        Command::Weights => weights(cli),
        Command::Jets => jets(cli),
        Command::Extend => extend(cli),
        Command::Fbi { input, fixture } => fbi_cmd(cli, input.as_deref(), fixture.as_deref()),
        Command::WfExperiment { fixture } => wf(cli, fixture.as_deref()),
        Command::Acceptance { all, criterion } => acceptance_cmd(cli, *all, criterion),
    })
}

fn load_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C, CliError> {
    let Some(p) = path else { return Ok(C::default()) };
    let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `<out>/<stem>.csv` and `<out>/<stem>.json`; refuses empty results.
pub fn emit_report<C: Serialize, R: Serialize>(out: &Path, stem: &str, header: &[&str], rows: &[Vec<String>], config: &C, results: &R) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Failed(format!("refusing to write an empty {stem} report")));
    }
    fs::create_dir_all(out).map_err(|e| failed(format!("{}: {e}", out.display())))?;
    let mut csv = header.join(",");
    csv.push('\n');
    for r in rows {
        csv.push_str(&r.join(","));
        csv.push('\n');
    }
    let csv_path = out.join(format!("{stem}.csv"));
    fs::write(&csv_path, csv).map_err(|e| failed(format!("{}: {e}", csv_path.display())))?;
    let doc = serde_json::json!({
        "command": stem,
        "config": config,
        "results": results,
        "versions": { env!("CARGO_PKG_NAME"): env!("CARGO_PKG_VERSION") },
    });
    let json_path = out.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&doc).map_err(failed)?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| failed(format!("{}: {e}", json_path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub seq: SequenceSpec,
    /// Lower end of the `r` grid; the smallest certified `r` when absent.
    pub r_lo: Option<f64>,
    pub r_hi: f64,
    pub n_r: usize,
    pub absorption_n_max: u32,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self { seq: SequenceSpec::gevrey(2.0, 64), r_lo: None, r_hi: 10.0, n_r: 40, absorption_n_max: 3 }
    }
}

#[derive(Serialize)]
struct WeightsResults {
    regularity: crate::weights::RegularityReport,
    absorption: Vec<crate::weights::AbsorptionFit>,
    min_certified_r: f64,
}

fn weights(cli: &Cli) -> Result<bool, CliError> {
    let cfg: WeightsConfig = load_config(cli.config.as_deref())?;
    let seq = cfg.seq.build().map_err(|e| CliError::Config(e.to_string()))?;
    let r_lo = cfg.r_lo.unwrap_or_else(|| seq.min_certified_r());
    if !(r_lo > 0.0 && cfg.r_hi > r_lo && cfg.n_r >= 2) {
        return Err(CliError::Config(format!("bad r grid [{r_lo}, {}] with {} points", cfg.r_hi, cfg.n_r)));
    }
    let mut rows = Vec::new();
    for r in log_grid(r_lo, cfg.r_hi, cfg.n_r) {
        let h = seq.assoc(Assoc::H, r).map_err(failed)?;
        let h1 = seq.assoc(Assoc::H1, r).map_err(failed)?;
        let n = seq.big_n(r).map_err(failed)?;
        rows.push(vec![num(r), num(h), num(h1), n.to_string()]);
    }
    let grid = log_grid(seq.min_certified_r(), 1.0, 40);
    let absorption = (0..=cfg.absorption_n_max).map(|n| seq.absorption_fit(n, &grid, 0..=6)).collect::<Result<Vec<_>, _>>().map_err(failed)?;
    let regularity = seq.check_regularity();
    let passed = regularity.passed;
    let results = WeightsResults { regularity, absorption, min_certified_r: seq.min_certified_r() };
    emit_report(&cli.out, "weights", &["r", "h", "h1", "N"], &rows, &cfg, &results)?;
    Ok(passed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JetsConfig {
    /// Vector field `∂_t + Σ a_i ∂_{x_i} + Σ b_j ∂_{ζ_j}`; `a = x` on one real slot when absent.
    pub field: Option<VectorFieldJet>,
    /// Initial datum; the Taylor polynomial of `1/(1+x²)` when absent.
    pub datum: Option<Jet>,
    pub degree: usize,
    pub n_max: usize,
    pub seq: SequenceSpec,
    #[serde(rename = "box")]
    pub eval_box: EvalBox,
}

impl Default for JetsConfig {
    fn default() -> Self {
        Self {
            field: None,
            datum: None,
            degree: 24,
            n_max: 24,
            seq: SequenceSpec::gevrey(2.0, 8192),
            eval_box: EvalBox { x: vec![(-0.5, 0.5)], zeta: vec![], samples: 21 },
        }
    }
}

impl JetsConfig {
    fn field_and_datum(&self) -> Result<(VectorFieldJet, Jet), CliError> {
        let datum = self.datum.clone().unwrap_or_else(|| lorentzian_jet(self.degree));
        let field = match &self.field {
            Some(f) => f.clone(),
            None => {
                let sp = JetSpace::origin(1, 0, self.degree);
                VectorFieldJet::new(vec![Jet::var(&sp, 0).map_err(failed)?], vec![]).map_err(failed)?
            }
        };
        field.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok((field, datum))
    }
}

#[derive(Serialize)]
struct JetsResults {
    stored: usize,
    exhausted: bool,
    /// Residual of each truncation relative to the size of the next term.
    relative_residuals: Vec<f64>,
    growth: crate::jets::GrowthEstimate,
    terms: Vec<Jet>,
}

fn jets(cli: &Cli) -> Result<bool, CliError> {
    let cfg: JetsConfig = load_config(cli.config.as_deref())?;
    let (field, datum) = cfg.field_and_datum()?;
    let seq = cfg.seq.build().map_err(|e| CliError::Config(e.to_string()))?;
    let series = formal_solution(&field, &datum, cfg.n_max).map_err(failed)?;
    let growth = growth_fit(&series, &seq, &cfg.eval_box).map_err(failed)?;
    let mut residuals = Vec::new();
    for n in 0..series.stored().saturating_sub(1).min(7) {
        let next = &series.terms()[n + 1];
        let size = (n + 1) as f64 * next.max_coeff_diff(&Jet::zero(next.space())).map_err(failed)?;
        residuals.push(series.residual_check(n).map_err(failed)? / size.max(1.0));
    }
    let mut rows = Vec::new();
    for (k, term) in series.terms().iter().enumerate() {
        let valid = series.valid_degree(k).map(|v| v.to_string()).unwrap_or_default();
        rows.push(vec![k.to_string(), valid, num(cfg.eval_box.sup(term))]);
    }
    let passed = residuals.iter().all(|&r| r <= 1e-12);
    let results = JetsResults { stored: series.stored(), exhausted: series.is_exhausted(), relative_residuals: residuals, growth, terms: series.terms().to_vec() };
    emit_report(&cli.out, "jets", &["k", "valid_degree", "sup_abs"], &rows, &cfg, &results)?;
    Ok(passed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtendConfig {
    pub jets: JetsConfig,
    pub epsilon: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub t_lo: f64,
    pub n_t: usize,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        Self { jets: JetsConfig { n_max: 100_000, ..JetsConfig::default() }, epsilon: 0.5, n_r: 64, n_theta: 64, t_lo: 1e-3, n_t: 24 }
    }
}

fn extend(cli: &Cli) -> Result<bool, CliError> {
    let cfg: ExtendConfig = load_config(cli.config.as_deref())?;
    let (field, datum) = cfg.jets.field_and_datum()?;
    let seq = cfg.jets.seq.build().map_err(|e| CliError::Config(e.to_string()))?;
    let kernel = DynkinKernel::new(cfg.epsilon, cfg.n_r, cfg.n_theta).map_err(|e| CliError::Config(e.to_string()))?;
    let sol = ApproxSolution::build(&field, &datum, seq.clone(), kernel, &cfg.jets.eval_box, cfg.jets.n_max).map_err(failed)?;
    let d = sol.delta();
    if !(cfg.t_lo > 0.0 && cfg.t_lo < d && cfg.n_t >= 2) {
        return Err(CliError::Config(format!("t grid [{}, {d}] with {} points", cfg.t_lo, cfg.n_t)));
    }
    let ts: Vec<f64> = log_grid(cfg.t_lo, d, cfg.n_t).into_iter().flat_map(|t| [-t, t]).collect();
    let samples = sol.flatness_samples(&cfg.jets.eval_box, &ts).map_err(failed)?;
    let fit = flatness_fit(&samples, &seq, d).map_err(failed)?;
    let mut rows = Vec::new();
    for s in &samples {
        let bound = seq.h(fit.q * s.t.abs()).map(|h| fit.a * h).unwrap_or(f64::NAN);
        rows.push(vec![num(s.t), num(s.sup_abs_lu), num(bound)]);
    }
    emit_report(&cli.out, "extend", &["t", "sup_abs_Lu", "A_h_Qt"], &rows, &cfg, &fit)?;
    Ok(fit.passed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbiConfig {
    pub input: Option<PathBuf>,
    pub fixture: Option<String>,
    /// Base point; the box center when absent.
    pub x: Option<Vec<f64>>,
    pub n_directions: usize,
    pub decay: DecayConfig,
    pub seq: SequenceSpec,
    /// Radius scale of the cutoff applied to file inputs.
    pub cutoff_scale: Option<f64>,
    /// Amplitude of seeded uniform noise added to the samples.
    pub noise: f64,
}

impl Default for FbiConfig {
    fn default() -> Self {
        Self { input: None, fixture: None, x: None, n_directions: 64, decay: DecayConfig::default(), seq: SequenceSpec::gevrey(2.0, 4096), cutoff_scale: None, noise: 0.0 }
    }
}

#[derive(Serialize)]
struct FbiResults {
    singular: Vec<usize>,
    leakage: Vec<(usize, usize)>,
    angular_step: f64,
    directions: Vec<DirectionSummary>,
}

#[derive(Serialize)]
struct DirectionSummary {
    direction_index: usize,
    omega: Vec<f64>,
    #[serde(rename = "A_fit")]
    a_fit: Option<f64>,
    rate_tail: f64,
    rate_env: f64,
    passed: bool,
}

fn fbi_cmd(cli: &Cli, input: Option<&Path>, fixture: Option<&str>) -> Result<bool, CliError> {
    let mut cfg: FbiConfig = load_config(cli.config.as_deref())?;
    if let Some(p) = input {
        cfg.input = Some(p.to_path_buf());
        cfg.fixture = None;
    }
    if let Some(f) = fixture {
        cfg.fixture = Some(f.to_string());
        cfg.input = None;
    }
    let mut u = match (&cfg.input, &cfg.fixture) {
        (Some(p), _) => {
            let file = fs::File::open(p).map_err(|e| CliError::Config(format!("cannot open {}: {e}", p.display())))?;
            let mut g = GridFunction::read_binary(std::io::BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            if let Some(s) = cfg.cutoff_scale {
                let c: Vec<f64> = g.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
                g.apply_cutoff(cfg.x.as_deref().unwrap_or(&c), s);
            }
            g
        }
        (None, Some(name)) => fbi::fixture(name).map_err(|e| CliError::Config(e.to_string()))?,
        (None, None) => return Err(CliError::Config("fbi needs --input or --fixture".into())),
    };
    if cfg.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
        for v in &mut u.values {
            *v += Complex64::new(cfg.noise * (2.0 * rng.random::<f64>() - 1.0), 0.0);
        }
    }
    let x = cfg.x.clone().unwrap_or_else(|| u.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
    if x.len() != u.dim {
        return Err(CliError::Config(format!("base point has {} coordinates for a {}-dimensional input", x.len(), u.dim)));
    }
    let seq = cfg.seq.build().map_err(|e| CliError::Config(e.to_string()))?;
    let scan = fbi::wavefront_scan(&u, &x, cfg.n_directions, &cfg.decay, &seq).map_err(failed)?;
    let mut header = vec!["direction_index".to_string()];
    header.extend((0..u.dim).map(|i| format!("omega{i}")));
    header.extend(["lambda", "abs_F", "envelope", "passed"].map(String::from));
    let mut rows = Vec::new();
    for (i, r) in scan.reports.iter().enumerate() {
        for (k, (&l, &v)) in r.lambdas.iter().zip(&r.values).enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(r.omega.iter().map(|&w| num(w)));
            row.push(num(l));
            row.push(num(v));
            row.push(r.envelope.get(k).map(|&e| num(e)).unwrap_or_default());
            row.push(r.passed.to_string());
            rows.push(row);
        }
    }
    let directions = scan
        .reports
        .iter()
        .enumerate()
        .map(|(i, r)| DirectionSummary { direction_index: i, omega: r.omega.clone(), a_fit: r.a_fit, rate_tail: r.rate_tail, rate_env: r.rate_env, passed: r.passed })
        .collect();
    let results = FbiResults { singular: scan.singular.clone(), leakage: scan.leakage.clone(), angular_step: scan.angular_step, directions };
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    emit_report(&cli.out, "fbi", &header, &rows, &cfg, &results)?;
    Ok(true)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WfConfig {
    /// Solution fixture id.
    #[serde(alias = "solution")]
    pub fixture: String,
    /// JSON jet file replacing the fixture's right-hand side.
    pub model: Option<PathBuf>,
    pub seq: SequenceSpec,
    pub scan: ScanConfig,
    pub convention: CharConvention,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub n_directions: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_lambda: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let d = DecayConfig::default();
        Self { n_directions: 64, lambda_min: d.lambda_min, lambda_max: d.lambda_max, n_lambda: d.n_lambda }
    }
}

impl Default for WfConfig {
    fn default() -> Self {
        Self { fixture: "conormal".into(), model: None, seq: SequenceSpec::gevrey(2.0, 4096), scan: ScanConfig::default(), convention: CharConvention::Symbol }
    }
}

fn wf(cli: &Cli, fixture: Option<&str>) -> Result<bool, CliError> {
    let mut cfg: WfConfig = load_config(cli.config.as_deref())?;
    if let Some(f) = fixture {
        cfg.fixture = f.to_string();
    }
    let mut fx = pde::fixture(&cfg.fixture).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(p) = &cfg.model {
        let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        let f: Jet = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        fx.model = RhsModel::new(f, 1, false).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    }
    let seq = cfg.seq.build().map_err(|e| CliError::Config(e.to_string()))?;
    let sol = fx.default_solution().map_err(failed)?;
    let exp_cfg = WfExperimentConfig {
        n_directions: cfg.scan.n_directions,
        decay: DecayConfig { lambda_min: cfg.scan.lambda_min, lambda_max: cfg.scan.lambda_max, n_lambda: cfg.scan.n_lambda },
        convention: cfg.convention,
        base_point: (0.0, 0.0),
    };
    let report = pde::wf_inclusion_experiment(&fx.model, &sol, &seq, &exp_cfg).map_err(failed)?;
    let mut rows = Vec::new();
    for (i, r) in report.scan.reports.iter().enumerate() {
        let singular = report.singular.iter().find(|s| s.index == i);
        let distance = match singular {
            Some(s) => num(s.distance),
            None => pde::char_set(&report.a0, &r.omega[..1], r.omega[1], cfg.convention).map(|m| num(m.distance)).map_err(failed)?,
        };
        rows.push(vec![i.to_string(), num(r.omega[0]), num(r.omega[1]), r.passed.to_string(), singular.is_some().to_string(), distance, num(r.rate_tail), num(r.rate_env)]);
    }
    let mut summary = serde_json::to_value(&report).map_err(failed)?;
    if let Some(obj) = summary.as_object_mut() {
        obj.remove("scan");
    }
    emit_report(&cli.out, "wf-experiment", &["direction_index", "xi", "tau", "passed", "singular", "char_distance", "rate_tail", "rate_env"], &rows, &cfg, &summary)?;
    Ok(report.pass)
}

#[derive(Serialize)]
struct AcceptanceConfig {
    criteria: Vec<u32>,
    seed: u64,
}

fn acceptance_cmd(cli: &Cli, all: bool, criteria: &[u32]) -> Result<bool, CliError> {
    let ids: Vec<u32> = if all || criteria.is_empty() { acceptance::CRITERIA.iter().map(|c| c.0).collect() } else { criteria.to_vec() };
    let mut results = Vec::new();
    for &id in &ids {
        let r = acceptance::run(id, cli.seed).ok_or_else(|| CliError::Config(format!("unknown criterion {id}")))?;
        println!("{}", r.line());
        results.push(r);
    }
    let rows: Vec<Vec<String>> = results.iter().map(|r| vec![r.id.to_string(), r.name.clone(), r.passed.to_string()]).collect();
    let mut text = String::new();
    for r in &results {
        for c in r.checks.iter().filter(|c| !c.passed) {
            let _ = writeln!(text, "criterion {} check `{}` failed: {}", r.id, c.name, c.detail);
        }
    }
    eprint!("{text}");
    emit_report(&cli.out, "acceptance", &["criterion", "name", "passed"], &rows, &AcceptanceConfig { criteria: ids, seed: cli.seed }, &results)?;
    Ok(results.iter().all(|r| r.passed))
}
