//! Scenario files: a TOML document describing a game, its graphs, initial point
//! and simulation settings, plus the two built-in scenarios.
//!
//! ```toml
//! [meta]
//! name = "demo"
//!
//! [dimensions]
//! clusters = 2
//! players = [1, 1]
//! p = 1
//! d = 0
//! h = 1
//!
//! [players.1.1]
//! cost = "(x[1][1][1] - 2)^2"
//! h = ["2.5 - x[1][1][1]"]
//! set = "box 0..4"
//! x0 = [3.0]
//!
//! [players.2.1]
//! cost = "(x[2][1][1] - 2)^2 + x[1][1][1] * x[2][1][1]"
//! h = ["2.5 - x[2][1][1]"]
//! set = "box 0..4"
//! x0 = [3.0]
//!
//! [graphs]
//! global = [[1, 2]]
//! ```
//!
//! Player tables are keyed by 1-based cluster then player. Edges are 1-based
//! `[a, b]` or `[a, b, weight]`; cluster graphs use positions within the
//! cluster and default to the subgraph of the global graph induced by the
//! cluster.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AugmentedState, DynError, Integrator, SimConfig, SimOptions, TeMode};
use crate::expr::{check_grad, parse_expr, Expr, ExprError, VarRef};
use crate::game::{ClusterGame, GameError, Layout, PlayerSpec};
use crate::graph::Graph;
use crate::sets::ConvexSet;

/// Minimum Slater slack accepted at load time.
pub const SLATER_TOL: f64 = 1e-9;
/// Largest relative autodiff vs central-difference gap accepted at load time.
pub const GRADIENT_TOL: f64 = 1e-5;
/// Central-difference step of the gradient self-check.
pub const GRADIENT_STEP: f64 = 1e-6;
/// Initial decisions must lie in their sets within this distance.
pub const X0_TOL: f64 = 1e-9;
/// Probe values below this are reported as a monotonicity warning.
pub const MONOTONE_TOL: f64 = -1e-6;
pub const PROBE_SAMPLES: usize = 200;
const SLATER_SAMPLES: usize = 500;

pub const BUILTINS: [&str; 2] = ["electricity_market", "nine_player"];

const ELECTRICITY_MARKET: &str = include_str!("../data/electricity_market.toml");
const NINE_PLAYER: &str = include_str!("../data/nine_player.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{location}: {source}")]
    Expr { location: String, source: ExprError },
    #[error("{location}: {msg}")]
    Field { location: String, msg: String },
    #[error("{0}")]
    Game(#[from] GameError),
    #[error("{assumption} fails: {detail}")]
    Assumption { assumption: &'static str, detail: String },
    #[error("simulation settings: {0}")]
    Config(#[from] DynError),
    #[error("unknown built-in scenario '{0}' (known: electricity_market, nine_player)")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    pub clusters: usize,
    pub players: Vec<usize>,
    pub p: usize,
    #[serde(default)]
    pub d: usize,
    #[serde(default)]
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerEntry {
    pub cost: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub d: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h: Vec<String>,
    pub set: String,
    pub x0: Vec<f64>,
    /// A strictly feasible point for this player's block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slater: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeEntry {
    Plain([usize; 2]),
    Weighted(usize, usize, f64),
}

impl EdgeEntry {
    fn parts(self) -> (usize, usize, f64) {
        match self {
            EdgeEntry::Plain([a, b]) => (a, b, 1.0),
            EdgeEntry::Weighted(a, b, w) => (a, b, w),
        }
    }

    fn from_parts(a: usize, b: usize, w: f64) -> Self {
        if w == 1.0 {
            EdgeEntry::Plain([a, b])
        } else {
            EdgeEntry::Weighted(a, b, w)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphsEntry {
    pub global: Vec<EdgeEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cluster: BTreeMap<String, Vec<EdgeEntry>>,
}

/// Optional overrides of [`SimOptions`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub te_mode: Option<TeMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub te: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
}

/// A published or otherwise known point to compare results against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    /// Decisions in player order.
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

/// The on-disk document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub meta: Meta,
    pub dimensions: Dimensions,
    pub players: BTreeMap<String, BTreeMap<String, PlayerEntry>>,
    pub graphs: GraphsEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn player(&self, j: usize, i: usize) -> Option<&PlayerEntry> {
        self.players.get(&(j + 1).to_string())?.get(&(i + 1).to_string())
    }

    /// [`SimOptions`] with the file's overrides applied over the defaults.
    pub fn sim_options(&self) -> SimOptions {
        let mut o = SimOptions::default();
        if let Some(s) = &self.sim {
            o.step = s.step.unwrap_or(o.step);
            o.horizon = s.horizon.unwrap_or(o.horizon);
            o.te_mode = s.te_mode.unwrap_or(o.te_mode);
            o.te = s.te.or(o.te);
            o.consensus_tol = s.consensus_tol.unwrap_or(o.consensus_tol);
            o.stop_tol = s.stop_tol.unwrap_or(o.stop_tol);
            o.stride = s.stride.unwrap_or(o.stride);
            o.integrator = s.integrator.unwrap_or(o.integrator);
        }
        if let Some(m) = self.estimator.as_ref().and_then(|e| e.margin) {
            o.margin = m;
        }
        o
    }
}

/// Game and starting point assembled from a file, before assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub game: ClusterGame,
    pub x0: Vec<f64>,
    pub slater: Option<Vec<f64>>,
    pub initial: AugmentedState,
}

fn field(location: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Field { location: location.into(), msg: msg.into() }
}

fn parse_at(location: String, text: &str) -> Result<Expr, ScenarioError> {
    parse_expr(text).map_err(|source| ScenarioError::Expr { location, source })
}

fn edges(list: &[EdgeEntry], n: usize, location: &str) -> Result<Graph, ScenarioError> {
    let mut out = Vec::with_capacity(list.len());
    for (k, e) in list.iter().enumerate() {
        let (a, b, w) = e.parts();
        if a == 0 || b == 0 || a > n || b > n {
            return Err(field(format!("{location}[{}]", k + 1), format!("endpoint out of 1..{n}")));
        }
        out.push((a - 1, b - 1, w));
    }
    Graph::new(n, &out).map_err(|e| field(location, e.to_string()))
}

fn optional_block(v: &Option<Vec<f64>>, len: usize, location: String) -> Result<Vec<f64>, ScenarioError> {
    match v {
        None => Ok(vec![0.0; len]),
        Some(v) if v.len() == len => Ok(v.clone()),
        Some(v) => Err(field(location, format!("expected {len} entries, got {}", v.len()))),
    }
}

/// Parses expressions, sets and graphs and builds the game and the initial state.
pub fn assemble(file: &ScenarioFile) -> Result<Assembled, ScenarioError> {
    let dims = &file.dimensions;
    if dims.players.len() != dims.clusters {
        return Err(field("dimensions.players", format!("expected {} cluster sizes, got {}", dims.clusters, dims.players.len())));
    }
    let layout = Layout::new(dims.players.clone(), dims.p)?;
    for (jk, cluster) in &file.players {
        let j: usize = jk.parse().map_err(|_| field(format!("players.{jk}"), "cluster key must be a number"))?;
        if j == 0 || j > dims.clusters {
            return Err(field(format!("players.{jk}"), format!("cluster out of 1..{}", dims.clusters)));
        }
        for ik in cluster.keys() {
            let i: usize = ik.parse().map_err(|_| field(format!("players.{jk}.{ik}"), "player key must be a number"))?;
            if i == 0 || i > dims.players[j - 1] {
                return Err(field(format!("players.{jk}.{ik}"), format!("player out of 1..{}", dims.players[j - 1])));
            }
        }
    }

    let mut specs = Vec::with_capacity(layout.nodes());
    let mut x0 = Vec::with_capacity(layout.q());
    let mut slater = Some(Vec::with_capacity(layout.q()));
    let mut entries = Vec::with_capacity(layout.nodes());
    for node in 0..layout.nodes() {
        let (j, i) = layout.player_of(node);
        let loc = format!("players.{}.{}", j + 1, i + 1);
        let e = file.player(j, i).ok_or_else(|| field(&loc, "missing player"))?;
        let list = |name: &str, v: &[String]| -> Result<Vec<Expr>, ScenarioError> {
            v.iter().enumerate().map(|(k, t)| parse_at(format!("{loc}.{name}[{}]", k + 1), t)).collect()
        };
        let set: ConvexSet = e.set.parse().map_err(|err: crate::sets::SetError| field(format!("{loc}.set"), err.to_string()))?;
        specs.push(PlayerSpec {
            cost: parse_at(format!("{loc}.cost"), &e.cost)?,
            g: list("g", &e.g)?,
            d: list("d", &e.d)?,
            h: list("h", &e.h)?,
            set,
        });
        if e.x0.len() != dims.p {
            return Err(field(format!("{loc}.x0"), format!("expected {} entries, got {}", dims.p, e.x0.len())));
        }
        x0.extend(&e.x0);
        match (&mut slater, &e.slater) {
            (Some(s), Some(v)) if v.len() == dims.p => s.extend(v),
            (Some(_), Some(v)) => {
                return Err(field(format!("{loc}.slater"), format!("expected {} entries, got {}", dims.p, v.len())))
            }
            _ => slater = None,
        }
        entries.push((loc, e));
    }

    let global = edges(&file.graphs.global, layout.nodes(), "graphs.global")?;
    for k in file.graphs.cluster.keys() {
        match k.parse::<usize>() {
            Ok(j) if j >= 1 && j <= dims.clusters => {}
            _ => return Err(field(format!("graphs.cluster.{k}"), format!("cluster out of 1..{}", dims.clusters))),
        }
    }
    let mut cluster_graphs = Vec::with_capacity(dims.clusters);
    for j in 0..dims.clusters {
        let g = match file.graphs.cluster.get(&(j + 1).to_string()) {
            Some(list) => edges(list, layout.cluster_size(j), &format!("graphs.cluster.{}", j + 1))?,
            None => global.induced(&layout.cluster_nodes(j).collect::<Vec<_>>()),
        };
        cluster_graphs.push(g);
    }

    if let Some(r) = &file.reference {
        if r.x.len() != layout.q() {
            return Err(field("reference.x", format!("expected {} entries, got {}", layout.q(), r.x.len())));
        }
    }
    let game = ClusterGame::new(layout, specs, dims.d, dims.h, global, cluster_graphs)?;
    let mut initial = AugmentedState::initial(&game, x0.clone())?;
    let goff = game.g_offsets();
    let (dd, hd) = (game.d_dim, game.h_dim);
    for (node, (loc, e)) in entries.iter().enumerate() {
        let gl = game.players[node].g_count();
        initial.lambda[goff[node]..goff[node] + gl].copy_from_slice(&optional_block(&e.lambda0, gl, format!("{loc}.lambda0"))?);
        initial.mu[node * dd..(node + 1) * dd].copy_from_slice(&optional_block(&e.mu0, dd, format!("{loc}.mu0"))?);
        initial.psi[node * dd..(node + 1) * dd].copy_from_slice(&optional_block(&e.psi0, dd, format!("{loc}.psi0"))?);
        initial.eta[node * hd..(node + 1) * hd].copy_from_slice(&optional_block(&e.eta0, hd, format!("{loc}.eta0"))?);
        initial.beta[node * hd..(node + 1) * hd].copy_from_slice(&optional_block(&e.beta0, hd, format!("{loc}.beta0"))?);
    }
    Ok(Assembled { game, x0, slater, initial })
}

/// Outcome of every load-time check, computed without stopping at the first failure.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub global_connected: bool,
    pub clusters_connected: Vec<bool>,
    /// Largest distance of the initial decisions from their sets.
    pub x0_violation: f64,
    /// Best Slater slack found and the point that attains it.
    pub slater_margin: f64,
    pub slater_point: Vec<f64>,
    /// Largest relative autodiff vs central-difference gap at the initial point.
    pub gradient_error: f64,
    /// Minimum monotonicity quotient over sampled pairs; `None` if sets are unbounded.
    pub monotonicity: Option<f64>,
    pub initial_duals_nonnegative: bool,
}

impl AssumptionReport {
    /// The first failed hard requirement, if any.
    pub fn failure(&self) -> Option<ScenarioError> {
        let fail = |assumption, detail: String| Some(ScenarioError::Assumption { assumption, detail });
        if !self.global_connected {
            return fail("connectivity", "the global graph is disconnected".into());
        }
        if let Some(j) = self.clusters_connected.iter().position(|c| !c) {
            return fail("connectivity", format!("the graph of cluster {} is disconnected", j + 1));
        }
        if self.x0_violation > X0_TOL {
            return fail("initial point", format!("x0 lies {:.3e} outside the local sets", self.x0_violation));
        }
        if !self.initial_duals_nonnegative {
            return fail("initial point", "initial multipliers must be nonnegative".into());
        }
        if !(self.slater_margin > SLATER_TOL) {
            return fail("Slater condition", format!("best slack found is {:.3e}", self.slater_margin));
        }
        if !(self.gradient_error < GRADIENT_TOL) {
            return fail("gradient self-check", format!("relative error {:.3e}", self.gradient_error));
        }
        None
    }

    pub fn warnings(&self) -> Vec<String> {
        match self.monotonicity {
            Some(m) if m < MONOTONE_TOL => vec![format!(
                "monotonicity probe is negative ({m:.4e}); convergence is not guaranteed"
            )],
            None => vec!["monotonicity probe skipped: unbounded local set".into()],
            _ => vec![],
        }
    }
}

/// Largest relative gap between autodiff and central differences over every
/// cost (own block) and constraint at `x`.
pub fn gradient_self_check(game: &ClusterGame, x: &[f64]) -> Result<f64, ScenarioError> {
    let layout = &game.layout;
    let lookup = |v: VarRef| layout.slot(v).map(|s| x[s]);
    let mut worst = 0.0f64;
    for node in 0..game.nodes() {
        let (j, i) = layout.player_of(node);
        let own: Vec<VarRef> = (0..game.p()).map(|k| VarRef { cluster: j, player: i, coord: k }).collect();
        let spec = &game.players[node].spec;
        let loc = format!("players.{}.{}", j + 1, i + 1);
        let all = std::iter::once(("cost".to_string(), &spec.cost))
            .chain(spec.g.iter().enumerate().map(|(k, e)| (format!("g[{}]", k + 1), e)))
            .chain(spec.d.iter().enumerate().map(|(k, e)| (format!("d[{}]", k + 1), e)))
            .chain(spec.h.iter().enumerate().map(|(k, e)| (format!("h[{}]", k + 1), e)));
        for (name, e) in all {
            let err = check_grad(e, &own, &lookup, GRADIENT_STEP)
                .map_err(|source| ScenarioError::Expr { location: format!("{loc}.{name}"), source })?;
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Runs every check on an assembled scenario.
pub fn check_assumptions(a: &Assembled, samples: usize, seed: u64) -> Result<AssumptionReport, ScenarioError> {
    let game = &a.game;
    let (global_connected, clusters_connected) = game.graphs_connected();
    let x0_violation = game.set_violation(&a.x0);

    let mut best = (f64::NEG_INFINITY, a.x0.clone());
    let mut consider = |x: Vec<f64>| -> Result<(), ScenarioError> {
        let m = game.slater_margin(&x)?;
        if m > best.0 {
            best = (m, x);
        }
        Ok(())
    };
    match &a.slater {
        Some(s) => consider(s.clone())?,
        None => {
            consider(a.x0.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..SLATER_SAMPLES {
                match game.sample_decisions(&mut rng) {
                    Ok(x) => consider(x)?,
                    Err(_) => break,
                }
            }
        }
    }

    let gradient_error = gradient_self_check(game, &a.x0)?;
    let monotonicity = match game.monotonicity_probe(samples, seed) {
        Ok(m) => Some(m),
        Err(GameError::Unbounded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(AssumptionReport {
        global_connected,
        clusters_connected,
        x0_violation,
        slater_margin: best.0,
        slater_point: best.1,
        gradient_error,
        monotonicity,
        initial_duals_nonnegative: a.initial.min_dual() >= 0.0,
    })
}

/// A validated scenario ready to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub file: ScenarioFile,
    pub game: ClusterGame,
    pub options: SimOptions,
    pub initial: AugmentedState,
    pub assumptions: AssumptionReport,
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn config(&self) -> Result<SimConfig, ScenarioError> {
        self.config_with(&self.options)
    }

    pub fn config_with(&self, options: &SimOptions) -> Result<SimConfig, ScenarioError> {
        Ok(SimConfig::new(&self.game, options)?)
    }

    /// Writes the scenario back as a file built from the game itself.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let file = from_game(
            &self.game,
            &self.file.meta,
            &self.initial,
            Some(&self.assumptions.slater_point),
            self.file.sim.clone(),
            self.file.estimator.clone(),
            self.file.reference.clone(),
        );
        let text = file.to_toml()?;
        std::fs::write(path.as_ref(), text).map_err(|e| ScenarioError::Io { path: path.as_ref().display().to_string(), msg: e.to_string() })
    }
}

/// Parses and fully validates a document.
pub fn from_text(text: &str) -> Result<Scenario, ScenarioError> {
    validate(ScenarioFile::parse(text)?)
}

pub fn validate(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    validate_seeded(file, 0)
}

/// As [`validate`] with the seed of the sampled probes.
pub fn validate_seeded(file: ScenarioFile, seed: u64) -> Result<Scenario, ScenarioError> {
    let a = assemble(&file)?;
    let report = check_assumptions(&a, PROBE_SAMPLES, seed)?;
    if let Some(e) = report.failure() {
        return Err(e);
    }
    let options = file.sim_options();
    SimConfig::new(&a.game, &options)?;
    Ok(Scenario {
        name: file.meta.name.clone(),
        description: file.meta.description.trim().to_string(),
        warnings: report.warnings(),
        assumptions: report,
        options,
        game: a.game,
        initial: a.initial,
        file,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    from_text(&text)
}

/// Text of a built-in scenario.
pub fn builtin_text(name: &str) -> Result<&'static str, ScenarioError> {
    match name {
        "electricity_market" => Ok(ELECTRICITY_MARKET),
        "nine_player" => Ok(NINE_PLAYER),
        other => Err(ScenarioError::UnknownBuiltin(other.to_string())),
    }
}

pub fn builtin(name: &str) -> Result<ScenarioFile, ScenarioError> {
    ScenarioFile::parse(builtin_text(name)?)
}

pub fn load_builtin(name: &str) -> Result<Scenario, ScenarioError> {
    validate(builtin(name)?)
}

/// A document describing `game`, with expressions and sets printed from their trees.
pub fn from_game(
    game: &ClusterGame,
    meta: &Meta,
    initial: &AugmentedState,
    slater: Option<&[f64]>,
    sim: Option<SimOverrides>,
    estimator: Option<EstimatorOverrides>,
    reference: Option<Reference>,
) -> ScenarioFile {
    let layout = &game.layout;
    let goff = game.g_offsets();
    let (dd, hd) = (game.d_dim, game.h_dim);
    let nonzero = |v: &[f64]| v.iter().any(|&x| x != 0.0).then(|| v.to_vec());
    let mut players: BTreeMap<String, BTreeMap<String, PlayerEntry>> = BTreeMap::new();
    for node in 0..game.nodes() {
        let (j, i) = layout.player_of(node);
        let spec = &game.players[node].spec;
        let block = layout.block(node);
        let strs = |v: &[Expr]| v.iter().map(|e| e.to_string()).collect();
        let gl = game.players[node].g_count();
        let entry = PlayerEntry {
            cost: spec.cost.to_string(),
            g: strs(&spec.g),
            d: strs(&spec.d),
            h: strs(&spec.h),
            set: spec.set.to_string(),
            x0: initial.x[block.clone()].to_vec(),
            slater: slater.map(|s| s[block].to_vec()),
            lambda0: nonzero(&initial.lambda[goff[node]..goff[node] + gl]),
            mu0: nonzero(&initial.mu[node * dd..(node + 1) * dd]),
            psi0: nonzero(&initial.psi[node * dd..(node + 1) * dd]),
            eta0: nonzero(&initial.eta[node * hd..(node + 1) * hd]),
            beta0: nonzero(&initial.beta[node * hd..(node + 1) * hd]),
        };
        players.entry((j + 1).to_string()).or_default().insert((i + 1).to_string(), entry);
    }
    let list = |g: &Graph| g.edges().iter().map(|&(a, b, w)| EdgeEntry::from_parts(a + 1, b + 1, w)).collect::<Vec<_>>();
    let cluster = game.cluster_graphs.iter().enumerate().map(|(j, g)| ((j + 1).to_string(), list(g))).collect();
    ScenarioFile {
        meta: meta.clone(),
        dimensions: Dimensions {
            clusters: layout.clusters(),
            players: layout.sizes().to_vec(),
            p: layout.p(),
            d: game.d_dim,
            h: game.h_dim,
        },
        players,
        graphs: GraphsEntry { global: list(&game.global), cluster },
        sim,
        estimator,
        reference,
    }
}
