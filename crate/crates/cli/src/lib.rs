//! Command-line surface for the simulator: `run`, `verify`, `compare`, `probe`.
//!
//! Exit codes: 0 success, 1 numerical failure (no convergence, failed
//! verification, solver breakdown), 2 input or validation error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clustergne::dynamics::{self, fmt_g, Integrator, RunReport, SimOptions, StopReason, TeMode};
use clustergne::game::{ClusterGame, KktResidual};
use clustergne::oracle::{self, OracleError, OracleSolution};
use clustergne::scenario::{self, AssumptionReport, Scenario, ScenarioError, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// KKT tolerance used for the pass flag of a run.
pub const KKT_TOL: f64 = 1e-4;
/// Constraint violation tolerated at a final point.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "clustergne", version, about = "Distributed GNE seeking for constrained multi-cluster games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the distributed dynamics and write trajectory and report files.
    Run(RunArgs),
    /// Check whether a point is an equilibrium.
    Verify(VerifyArgs),
    /// Run the simulator and the centralized oracle and compare their answers.
    Compare(CompareArgs),
    /// Report on connectivity, Slater, monotonicity and gradient checks.
    Probe(ProbeArgs),
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Scenario file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: electricity_market or nine_player.
    #[arg(long)]
    pub builtin: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TeModeArg {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

/// Simulation flags; unset flags fall back to the scenario, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct SimFlags {
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, value_enum)]
    pub te_mode: Option<TeModeArg>,
    /// Activation time for fixed mode (default: the computed bound).
    #[arg(long)]
    pub te: Option<f64>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Estimator gain margin.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long, value_enum)]
    pub integrator: Option<IntegratorArg>,
    /// Seed of the load-time monotonicity probe.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SimFlags {
    pub fn apply(&self, base: &SimOptions) -> SimOptions {
        let mut o = base.clone();
        if let Some(v) = self.step {
            o.step = v;
        }
        if let Some(v) = self.horizon {
            o.horizon = v;
        }
        if let Some(v) = self.te_mode {
            o.te_mode = match v {
                TeModeArg::Fixed => TeMode::Fixed,
                TeModeArg::Adaptive => TeMode::Adaptive,
            };
        }
        if self.te.is_some() {
            o.te = self.te;
        }
        if let Some(v) = self.stop_tol {
            o.stop_tol = v;
        }
        if let Some(v) = self.stride {
            o.stride = v;
        }
        if let Some(v) = self.margin {
            o.margin = v;
        }
        if let Some(v) = self.integrator {
            o.integrator = match v {
                IntegratorArg::Euler => Integrator::Euler,
                IntegratorArg::Rk4 => Integrator::Rk4,
            };
        }
        o
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub sim: SimFlags,
    /// Output directory for trajectory.csv, residuals.csv, report.txt, report.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: Source,
    /// File with the q decision values, separated by whitespace or commas.
    #[arg(long, conflicts_with = "reference", required_unless_present = "reference")]
    pub point: Option<PathBuf>,
    /// Verify the scenario's reference point instead of a file.
    #[arg(long)]
    pub reference: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write verify.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub sim: SimFlags,
    /// Pass threshold relative to the decision scale max(1, |x|_inf).
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub oracle_tol: f64,
    #[arg(long, default_value_t = 5_000_000)]
    pub max_iter: usize,
    /// Also write compare.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value_t = scenario::PROBE_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn read_source(src: &Source) -> Result<ScenarioFile, CliError> {
    match (&src.scenario, &src.builtin) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            Ok(ScenarioFile::parse(&text)?)
        }
        (None, Some(name)) => Ok(scenario::builtin(name)?),
        (None, None) => Err(CliError::Input("either --scenario or --builtin is required".into())),
    }
}

/// Reads and fully validates a scenario.
pub fn load_source(src: &Source, seed: u64) -> Result<Scenario, CliError> {
    Ok(scenario::validate_seeded(read_source(src)?, seed)?)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub step: f64,
    pub horizon: f64,
    pub te_mode: TeMode,
    pub te: Option<f64>,
    pub consensus_tol: f64,
    pub stop_tol: f64,
    pub stride: usize,
    pub margin: f64,
    pub integrator: Integrator,
    pub gamma: f64,
    pub epsilon: f64,
    pub te_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KktDoc {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub dual_sign: f64,
    pub max: f64,
}

impl From<KktResidual> for KktDoc {
    fn from(k: KktResidual) -> Self {
        Self {
            stationarity: k.stationarity,
            feasibility: k.feasibility,
            complementarity: k.complementarity,
            dual_sign: k.dual_sign,
            max: k.max(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateDoc {
    pub nu: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub kkt: KktDoc,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyDoc {
    pub tol: f64,
    pub passed: bool,
    /// Set when the point is too infeasible to fit multipliers.
    pub error: Option<String>,
    pub kkt: Option<KktDoc>,
    pub flow_residual: Option<f64>,
    pub certificate: Option<CertificateDoc>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceDoc {
    pub note: String,
    pub x: Vec<f64>,
    pub max_deviation: f64,
    pub verify: VerifyDoc,
}

#[derive(Debug, Clone, Serialize)]
pub struct Flags {
    pub converged: bool,
    pub kkt_pass: bool,
    pub feasible: bool,
}

/// The machine-readable run report.
#[derive(Debug, Clone, Serialize)]
pub struct RunDoc {
    pub scenario: String,
    pub description: String,
    pub config: ConfigEcho,
    pub warnings: Vec<String>,
    pub activation_time: Option<f64>,
    pub steps: usize,
    pub final_time: f64,
    pub stop: StopReason,
    pub final_residual: f64,
    pub final_x: Vec<f64>,
    pub max_constraint_violation: f64,
    pub set_violation: f64,
    pub certificate: Option<CertificateDoc>,
    pub certificate_error: Option<String>,
    pub kkt_tol: f64,
    pub feasibility_tol: f64,
    pub flags: Flags,
    pub reference: Option<ReferenceDoc>,
    /// `(t, stationarity residual)` at sampled steps.
    pub history: Vec<(f64, f64)>,
}

fn verify_doc(game: &ClusterGame, x: &[f64], tol: f64) -> Result<VerifyDoc, CliError> {
    match oracle::verify_equilibrium(game, x, tol) {
        Ok(v) => Ok(VerifyDoc {
            tol,
            passed: v.passed(),
            error: None,
            kkt: Some(v.kkt.into()),
            flow_residual: Some(v.flow_residual),
            certificate: Some(CertificateDoc {
                nu: v.certificate.nu.clone(),
                phi: v.certificate.phi.clone(),
                sigma: v.certificate.sigma.clone(),
                kkt: v.kkt.into(),
            }),
        }),
        Err(e @ OracleError::Infeasible { .. }) => {
            Ok(VerifyDoc { tol, passed: false, error: Some(e.to_string()), kkt: None, flow_residual: None, certificate: None })
        }
        Err(e) => Err(numerical(e)),
    }
}

/// Integrates a loaded scenario and assembles the report.
pub fn simulate(sc: &Scenario, options: &SimOptions) -> Result<(RunReport, RunDoc), CliError> {
    let cfg = sc.config_with(options).map_err(|e| CliError::Input(e.to_string()))?;
    let report = dynamics::integrate(&sc.game, &sc.initial, &cfg, None).map_err(numerical)?;
    let game = &sc.game;
    let x = &report.final_state.x;
    let cv = game.constraint_values(x).map_err(numerical)?;
    let max_constraint_violation = cv.max_violation();
    let set_violation = game.set_violation(x);
    let certificate = report.certificate.as_ref().map(|c| CertificateDoc {
        nu: c.nu.clone(),
        phi: c.phi.clone(),
        sigma: c.sigma.clone(),
        kkt: c.residual.into(),
    });
    let flags = Flags {
        converged: report.stop == StopReason::Converged,
        kkt_pass: certificate.as_ref().is_some_and(|c| c.kkt.max < KKT_TOL),
        feasible: max_constraint_violation <= FEASIBILITY_TOL && set_violation <= FEASIBILITY_TOL,
    };
    let reference = match &sc.file.reference {
        Some(r) => Some(ReferenceDoc {
            note: r.note.clone(),
            x: r.x.clone(),
            max_deviation: max_abs_diff(&r.x, x),
            verify: verify_doc(game, &r.x, KKT_TOL)?,
        }),
        None => None,
    };
    let doc = RunDoc {
        scenario: sc.name.clone(),
        description: sc.description.clone(),
        config: ConfigEcho {
            step: options.step,
            horizon: options.horizon,
            te_mode: options.te_mode,
            te: match cfg.activation {
                dynamics::Activation::Fixed(t) => Some(t),
                dynamics::Activation::Adaptive { .. } => None,
            },
            consensus_tol: options.consensus_tol,
            stop_tol: options.stop_tol,
            stride: options.stride,
            margin: options.margin,
            integrator: options.integrator,
            gamma: cfg.estimator.gamma.iter().copied().fold(0.0, f64::max),
            epsilon: cfg.estimator.epsilon,
            te_bound: cfg.estimator.te_bound,
        },
        warnings: sc.warnings.clone(),
        activation_time: report.activation_time,
        steps: report.steps,
        final_time: report.final_state.t,
        stop: report.stop,
        final_residual: report.final_residual,
        final_x: x.clone(),
        max_constraint_violation,
        set_violation,
        certificate,
        certificate_error: report.certificate_error.clone(),
        kkt_tol: KKT_TOL,
        feasibility_tol: FEASIBILITY_TOL,
        flags,
        reference,
        history: report.residual_history.clone(),
    };
    Ok((report, doc))
}

fn player_lines(game: &ClusterGame, x: &[f64], out: &mut String) {
    for node in 0..game.nodes() {
        let (j, i) = game.layout.player_of(node);
        let vals: Vec<String> = x[game.layout.block(node)].iter().map(|&v| fmt_g(v)).collect();
        let _ = writeln!(out, "  x[{}][{}] = [{}]", j + 1, i + 1, vals.join(", "));
    }
}

fn kkt_line(k: &KktDoc) -> String {
    format!(
        "stationarity {} feasibility {} complementarity {} dual sign {}",
        fmt_g(k.stationarity),
        fmt_g(k.feasibility),
        fmt_g(k.complementarity),
        fmt_g(k.dual_sign)
    )
}

fn verify_text(v: &VerifyDoc, out: &mut String) {
    let verdict = if v.passed { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "  verification at tol {}: {verdict}", fmt_g(v.tol));
    if let Some(e) = &v.error {
        let _ = writeln!(out, "  {e}");
    }
    if let Some(k) = &v.kkt {
        let _ = writeln!(out, "  KKT residual {} ({})", fmt_g(k.max), kkt_line(k));
    }
    if let Some(f) = v.flow_residual {
        let _ = writeln!(out, "  flow residual {}", fmt_g(f));
    }
}

/// Human-readable rendering of a run report.
pub fn run_text(game: &ClusterGame, d: &RunDoc) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", d.scenario);
    let c = &d.config;
    let _ = writeln!(
        s,
        "config: step {} horizon {} te-mode {:?} stop-tol {} stride {} margin {} integrator {:?}",
        fmt_g(c.step),
        fmt_g(c.horizon),
        c.te_mode,
        fmt_g(c.stop_tol),
        c.stride,
        fmt_g(c.margin),
        c.integrator
    );
    let _ = writeln!(s, "estimator: gamma {} epsilon {} T_e bound {}", fmt_g(c.gamma), fmt_g(c.epsilon), fmt_g(c.te_bound));
    for w in &d.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    match d.activation_time {
        Some(t) => {
            let _ = writeln!(s, "duals activated at t = {}", fmt_g(t));
        }
        None => {
            let _ = writeln!(s, "duals never activated");
        }
    }
    let _ = writeln!(
        s,
        "steps {} final t {} stop {:?} stationarity residual {}",
        d.steps,
        fmt_g(d.final_time),
        d.stop,
        fmt_g(d.final_residual)
    );
    let _ = writeln!(s, "final decisions:");
    player_lines(game, &d.final_x, &mut s);
    let _ = writeln!(
        s,
        "constraint violation {} set violation {}",
        fmt_g(d.max_constraint_violation),
        fmt_g(d.set_violation)
    );
    match (&d.certificate, &d.certificate_error) {
        (Some(cert), _) => {
            let _ = writeln!(s, "KKT residual {} ({})", fmt_g(cert.kkt.max), kkt_line(&cert.kkt));
            let _ = writeln!(s, "multipliers: nu {:?} phi {:?} sigma {:?}", cert.nu, cert.phi, cert.sigma);
        }
        (None, Some(e)) => {
            let _ = writeln!(s, "no certificate: {e}");
        }
        _ => {}
    }
    let f = &d.flags;
    let yes = |b: bool| if b { "yes" } else { "no" };
    let _ = writeln!(
        s,
        "converged: {}  KKT < {}: {}  feasible within {}: {}",
        yes(f.converged),
        fmt_g(d.kkt_tol),
        yes(f.kkt_pass),
        fmt_g(d.feasibility_tol),
        yes(f.feasible)
    );
    if let Some(r) = &d.reference {
        let note = if r.note.is_empty() { "reference point" } else { r.note.as_str() };
        let _ = writeln!(s, "reference ({note}): max deviation from final decisions {}", fmt_g(r.max_deviation));
        verify_text(&r.verify, &mut s);
        if !r.verify.passed && f.converged && f.kkt_pass {
            let _ = writeln!(s, "  the reference point is not an equilibrium of this scenario; the computed point is");
        }
    }
    s
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_run_outputs(dir: &Path, game: &ClusterGame, report: &RunReport, doc: &RunDoc) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut traj = Vec::new();
    dynamics::write_trajectory_csv(game, report, &mut traj).map_err(|e| io_error(dir, e))?;
    write_file(&dir.join("trajectory.csv"), &traj)?;
    let mut res = Vec::new();
    dynamics::write_residual_csv(report, &mut res).map_err(|e| io_error(dir, e))?;
    write_file(&dir.join("residuals.csv"), &res)?;
    write_file(&dir.join("report.txt"), run_text(game, doc).as_bytes())?;
    write_file(&dir.join("report.json"), json(doc).as_bytes())?;
    Ok(())
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let sc = load_source(&args.source, args.sim.seed)?;
    let options = args.sim.apply(&sc.options);
    for w in &sc.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let start = Instant::now();
    let (report, doc) = simulate(&sc, &options)?;
    let _ = writeln!(err, "finished in {:.2} s", start.elapsed().as_secs_f64());
    write_run_outputs(&args.out, &sc.game, &report, &doc)?;
    let _ = write!(out, "{}", run_text(&sc.game, &doc));
    Ok(if doc.flags.converged { EXIT_OK } else { EXIT_NUMERICAL })
}

/// Parses numbers separated by whitespace or commas; `#` starts a comment.
pub fn parse_point(text: &str) -> Result<Vec<f64>, CliError> {
    let mut v = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let x: f64 = tok.parse().map_err(|_| CliError::Input(format!("line {}: '{tok}' is not a number", n + 1)))?;
            if !x.is_finite() {
                return Err(CliError::Input(format!("line {}: '{tok}' is not finite", n + 1)));
            }
            v.push(x);
        }
    }
    Ok(v)
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Input(format!("tolerance must be positive, got {}", args.tol)));
    }
    let sc = load_source(&args.source, args.seed)?;
    let x = match (&args.point, args.reference) {
        (Some(path), _) => parse_point(&std::fs::read_to_string(path).map_err(|e| io_error(path, e))?)?,
        (None, true) => match &sc.file.reference {
            Some(r) => r.x.clone(),
            None => return Err(CliError::Input("scenario has no reference point".into())),
        },
        (None, false) => return Err(CliError::Input("either --point or --reference is required".into())),
    };
    if x.len() != sc.game.q() {
        return Err(CliError::Input(format!("point has {} values, scenario needs {}", x.len(), sc.game.q())));
    }
    let doc = verify_doc(&sc.game, &x, args.tol)?;
    let mut s = format!("scenario: {}\npoint:\n", sc.name);
    player_lines(&sc.game, &x, &mut s);
    verify_text(&doc, &mut s);
    let _ = write!(out, "{s}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        write_file(&dir.join("verify.json"), json(&doc).as_bytes())?;
    }
    Ok(if doc.passed { EXIT_OK } else { EXIT_NUMERICAL })
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareDoc {
    pub scenario: String,
    pub warnings: Vec<String>,
    pub simulator_converged: bool,
    pub simulator_residual: f64,
    pub simulator_x: Vec<f64>,
    pub oracle_converged: bool,
    pub oracle_residual: f64,
    pub oracle_iterations: usize,
    pub oracle_x: Vec<f64>,
    pub max_difference: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Runs both solvers from the scenario's initial decisions.
pub fn compare(sc: &Scenario, options: &SimOptions, threshold: f64, oracle_tol: f64, max_iter: usize) -> Result<CompareDoc, CliError> {
    let (report, _) = simulate(sc, options)?;
    let sol: OracleSolution =
        oracle::extragradient_solve_from(&sc.game, &sc.initial.x, 1e-2, max_iter, oracle_tol).map_err(numerical)?;
    let scale = sol.state.x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let max_difference = max_abs_diff(&report.final_state.x, &sol.state.x);
    let threshold = threshold * scale;
    let simulator_converged = report.converged();
    Ok(CompareDoc {
        scenario: sc.name.clone(),
        warnings: sc.warnings.clone(),
        simulator_converged,
        simulator_residual: report.final_residual,
        simulator_x: report.final_state.x.clone(),
        oracle_converged: sol.converged,
        oracle_residual: sol.residual,
        oracle_iterations: sol.iterations,
        oracle_x: sol.state.x.clone(),
        max_difference,
        threshold,
        passed: simulator_converged && sol.converged && max_difference < threshold,
    })
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let sc = load_source(&args.source, args.sim.seed)?;
    for w in &sc.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let options = args.sim.apply(&sc.options);
    let start = Instant::now();
    let doc = compare(&sc, &options, args.threshold, args.oracle_tol, args.max_iter)?;
    let _ = writeln!(err, "finished in {:.2} s", start.elapsed().as_secs_f64());
    let mut s = format!("scenario: {}\n", doc.scenario);
    for w in &doc.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(
        s,
        "simulator: converged {} residual {}",
        doc.simulator_converged,
        fmt_g(doc.simulator_residual)
    );
    player_lines(&sc.game, &doc.simulator_x, &mut s);
    let _ = writeln!(
        s,
        "oracle: converged {} residual {} iterations {}",
        doc.oracle_converged,
        fmt_g(doc.oracle_residual),
        doc.oracle_iterations
    );
    player_lines(&sc.game, &doc.oracle_x, &mut s);
    let _ = writeln!(
        s,
        "max componentwise difference {} (threshold {}): {}",
        fmt_g(doc.max_difference),
        fmt_g(doc.threshold),
        if doc.passed { "PASS" } else { "FAIL" }
    );
    let _ = write!(out, "{s}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        write_file(&dir.join("compare.json"), json(&doc).as_bytes())?;
    }
    Ok(if doc.passed { EXIT_OK } else { EXIT_NUMERICAL })
}

/// Text rendering of an assumption report.
pub fn probe_text(name: &str, r: &AssumptionReport) -> String {
    let mut s = format!("scenario: {name}\n");
    let ok = |b: bool| if b { "ok" } else { "FAIL" };
    let _ = writeln!(s, "global graph connected: {}", ok(r.global_connected));
    for (j, c) in r.clusters_connected.iter().enumerate() {
        let _ = writeln!(s, "cluster {} graph connected: {}", j + 1, ok(*c));
    }
    let _ = writeln!(s, "initial point set violation: {}", fmt_g(r.x0_violation));
    let _ = writeln!(s, "Slater margin: {} ({})", fmt_g(r.slater_margin), ok(r.slater_margin > scenario::SLATER_TOL));
    match r.monotonicity {
        Some(m) => {
            let _ = writeln!(s, "monotonicity probe minimum: {}", fmt_g(m));
        }
        None => {
            let _ = writeln!(s, "monotonicity probe: skipped (unbounded set)");
        }
    }
    let _ = writeln!(s, "gradient self-check max relative error: {}", fmt_g(r.gradient_error));
    for w in r.warnings() {
        let _ = writeln!(s, "warning: {w}");
    }
    match r.failure() {
        Some(e) => {
            let _ = writeln!(s, "result: {e}");
        }
        None => {
            let _ = writeln!(s, "result: all checks passed");
        }
    }
    s
}

pub fn cmd_probe(args: &ProbeArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = read_source(&args.source)?;
    let assembled = scenario::assemble(&file)?;
    let report = scenario::check_assumptions(&assembled, args.samples, args.seed)?;
    let _ = write!(out, "{}", probe_text(&file.meta.name, &report));
    Ok(if report.failure().is_some() { EXIT_NUMERICAL } else { EXIT_OK })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_INPUT;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out, err),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Compare(a) => cmd_compare(a, out, err),
        Command::Probe(a) => cmd_probe(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}
