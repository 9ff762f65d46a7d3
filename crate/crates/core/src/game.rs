//! Multi-cluster game instances: indexing, pseudogradients, constraints and KKT checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{Expr, ExprError, Tape, VarRef};
use crate::graph::{Graph, GraphError};
use crate::linalg::{nnls, symmetric_eigenvalues};
use crate::sets::{ConvexSet, SetError};

/// Activity tolerance used when fitting multipliers.
pub const ACTIVE_TOL: f64 = 1e-5;
/// How far outside the feasible set a point may be and still get multipliers.
pub const FIT_FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("player ({cluster}, {player}) out of range")]
    Index { cluster: usize, player: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension { what: String, expected: usize, got: usize },
    #[error("player ({cluster}, {player}) {what}: {source}")]
    Expr { cluster: usize, player: usize, what: String, source: ExprError },
    #[error("player ({cluster}, {player}) {what} refers to {var}, which it does not own")]
    NotSeparable { cluster: usize, player: usize, what: String, var: VarRef },
    #[error("player ({cluster}, {player}) {what} refers to {var}, which does not exist")]
    UnknownVariable { cluster: usize, player: usize, what: String, var: VarRef },
    #[error("player ({cluster}, {player}) set: {source}")]
    Set { cluster: usize, player: usize, source: SetError },
    #[error("player ({cluster}, {player}) has an unbounded local set")]
    Unbounded { cluster: usize, player: usize },
    #[error("point is infeasible (violation {0:e})")]
    Infeasible(f64),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Invalid(String),
}

/// Dimensions of a game and the maps between (cluster, player) pairs and flat indices.
///
/// Everything here is 0-based; [`player_index`] gives the 1-based form.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    p: usize,
}

impl Layout {
    pub fn new(sizes: Vec<usize>, p: usize) -> Result<Self, GameError> {
        if sizes.is_empty() || sizes.contains(&0) || p == 0 {
            return Err(GameError::Invalid("need at least one cluster, nonempty clusters and p >= 1".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        for &n in &sizes {
            offsets.push(acc);
            acc += n;
        }
        offsets.push(acc);
        Ok(Self { sizes, offsets, p })
    }

    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn cluster_size(&self, j: usize) -> usize {
        self.sizes[j]
    }

    /// Total number of players.
    pub fn nodes(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Total decision dimension.
    pub fn q(&self) -> usize {
        self.nodes() * self.p
    }

    pub fn node(&self, j: usize, i: usize) -> usize {
        debug_assert!(i < self.sizes[j]);
        self.offsets[j] + i
    }

    pub fn try_node(&self, j: usize, i: usize) -> Result<usize, GameError> {
        if j < self.sizes.len() && i < self.sizes[j] {
            Ok(self.offsets[j] + i)
        } else {
            Err(GameError::Index { cluster: j + 1, player: i + 1 })
        }
    }

    /// Inverse of [`Layout::node`].
    pub fn player_of(&self, node: usize) -> (usize, usize) {
        let j = self.offsets[1..].iter().position(|&o| node < o).expect("node in range");
        (j, node - self.offsets[j])
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.player_of(node).0
    }

    pub fn cluster_nodes(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn block(&self, node: usize) -> std::ops::Range<usize> {
        node * self.p..(node + 1) * self.p
    }

    pub fn slot(&self, v: VarRef) -> Option<usize> {
        if v.cluster < self.sizes.len() && v.player < self.sizes[v.cluster] && v.coord < self.p {
            Some(self.node(v.cluster, v.player) * self.p + v.coord)
        } else {
            None
        }
    }
}

/// 1-based global index `j_i` of player `i` in cluster `j`.
pub fn player_index(j: usize, i: usize, sizes: &[usize]) -> Result<usize, GameError> {
    if j == 0 || j > sizes.len() || i == 0 || i > sizes[j - 1] {
        return Err(GameError::Index { cluster: j, player: i });
    }
    Ok(sizes[..j - 1].iter().sum::<usize>() + i)
}

/// Expressions and set describing one player, as supplied by the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSpec {
    pub cost: Expr,
    pub g: Vec<Expr>,
    pub d: Vec<Expr>,
    pub h: Vec<Expr>,
    pub set: ConvexSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Player {
    pub spec: PlayerSpec,
    cost: Tape,
    g: Vec<Tape>,
    d: Vec<Tape>,
    h: Vec<Tape>,
}

impl Player {
    pub fn g_count(&self) -> usize {
        self.g.len()
    }

    pub fn set(&self) -> &ConvexSet {
        &self.spec.set
    }
}

/// Local constraint values, per-cluster sums of `d`, and the global sum of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValues {
    pub g: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub h: Vec<f64>,
}

impl ConstraintValues {
    pub fn max_violation(&self) -> f64 {
        self.g
            .iter()
            .flatten()
            .chain(self.d.iter().flatten())
            .chain(&self.h)
            .fold(0.0f64, |m, &v| m.max(v))
    }

    /// Smallest slack across all constraints (positive means strictly feasible).
    pub fn min_slack(&self) -> f64 {
        self.g
            .iter()
            .flatten()
            .chain(self.d.iter().flatten())
            .chain(&self.h)
            .fold(f64::INFINITY, |m, &v| m.min(-v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub dual_sign: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity).max(self.dual_sign)
    }
}

/// Multipliers for the reduced KKT system: one `nu` block per player, one `phi`
/// block per cluster, one `sigma` block for the global constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    pub nu: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub residual: KktResidual,
}

impl KktCertificate {
    pub fn zeros(game: &ClusterGame) -> Self {
        Self {
            nu: game.players.iter().map(|p| vec![0.0; p.g_count()]).collect(),
            phi: vec![vec![0.0; game.d_dim]; game.layout.clusters()],
            sigma: vec![0.0; game.h_dim],
            residual: KktResidual::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGame {
    pub layout: Layout,
    pub players: Vec<Player>,
    pub d_dim: usize,
    pub h_dim: usize,
    pub global: Graph,
    pub cluster_graphs: Vec<Graph>,
}

impl ClusterGame {
    /// Builds a game, checking dimensions, variable ranges and that `g`, `d`, `h`
    /// depend only on their owner. Connectivity and Slater are checked separately.
    pub fn new(
        layout: Layout,
        specs: Vec<PlayerSpec>,
        d_dim: usize,
        h_dim: usize,
        global: Graph,
        cluster_graphs: Vec<Graph>,
    ) -> Result<Self, GameError> {
        let nodes = layout.nodes();
        let p = layout.p();
        if specs.len() != nodes {
            return Err(GameError::Dimension { what: "players".into(), expected: nodes, got: specs.len() });
        }
        if global.node_count() != nodes {
            return Err(GameError::Dimension {
                what: "global graph nodes".into(),
                expected: nodes,
                got: global.node_count(),
            });
        }
        if cluster_graphs.len() != layout.clusters() {
            return Err(GameError::Dimension {
                what: "cluster graphs".into(),
                expected: layout.clusters(),
                got: cluster_graphs.len(),
            });
        }
        for (j, cg) in cluster_graphs.iter().enumerate() {
            if cg.node_count() != layout.cluster_size(j) {
                return Err(GameError::Dimension {
                    what: format!("cluster {} graph nodes", j + 1),
                    expected: layout.cluster_size(j),
                    got: cg.node_count(),
                });
            }
            let base = layout.cluster_nodes(j).start;
            for &(a, b, _) in cg.edges() {
                if !global.has_edge(base + a, base + b) {
                    return Err(GameError::Invalid(format!(
                        "cluster {} graph edge ({}, {}) is not an edge of the global graph",
                        j + 1,
                        a + 1,
                        b + 1
                    )));
                }
            }
        }

        let mut players = Vec::with_capacity(nodes);
        for (node, spec) in specs.into_iter().enumerate() {
            let (j, i) = layout.player_of(node);
            let (cl, pl) = (j + 1, i + 1);
            let expr_err = |what: &str, source: ExprError| GameError::Expr {
                cluster: cl,
                player: pl,
                what: what.into(),
                source,
            };
            if spec.set.dim() != p {
                return Err(GameError::Dimension {
                    what: format!("player ({cl}, {pl}) set dimension"),
                    expected: p,
                    got: spec.set.dim(),
                });
            }
            spec.set.validate().map_err(|source| GameError::Set { cluster: cl, player: pl, source })?;
            for v in spec.cost.variables() {
                if layout.slot(v).is_none() {
                    return Err(GameError::UnknownVariable { cluster: cl, player: pl, what: "cost".into(), var: v });
                }
            }
            let cost = spec.cost.compile(&|v| layout.slot(v)).map_err(|e| expr_err("cost", e))?;

            let own = |v: VarRef| (v.cluster == j && v.player == i && v.coord < p).then_some(v.coord);
            let local = |list: &[Expr], what: &str, expected: Option<usize>| -> Result<Vec<Tape>, GameError> {
                if let Some(n) = expected {
                    if list.len() != n {
                        return Err(GameError::Dimension {
                            what: format!("player ({cl}, {pl}) {what} components"),
                            expected: n,
                            got: list.len(),
                        });
                    }
                }
                list.iter()
                    .enumerate()
                    .map(|(k, e)| {
                        let label = format!("{what}[{}]", k + 1);
                        for v in e.variables() {
                            if layout.slot(v).is_none() {
                                return Err(GameError::UnknownVariable { cluster: cl, player: pl, what: label, var: v });
                            }
                            if own(v).is_none() {
                                return Err(GameError::NotSeparable { cluster: cl, player: pl, what: label, var: v });
                            }
                        }
                        e.compile(&own).map_err(|err| expr_err(&label, err))
                    })
                    .collect()
            };
            let g = local(&spec.g, "g", None)?;
            let d = local(&spec.d, "d", Some(d_dim))?;
            let h = local(&spec.h, "h", Some(h_dim))?;
            players.push(Player { spec, cost, g, d, h });
        }
        Ok(Self { layout, players, d_dim, h_dim, global, cluster_graphs })
    }

    pub fn q(&self) -> usize {
        self.layout.q()
    }

    pub fn nodes(&self) -> usize {
        self.layout.nodes()
    }

    pub fn p(&self) -> usize {
        self.layout.p()
    }

    /// Total number of local constraint components.
    pub fn g_total(&self) -> usize {
        self.players.iter().map(|p| p.g_count()).sum()
    }

    /// Offset of each player's `g` block in the stacked local multiplier vector.
    pub fn g_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.players
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.g_count();
                o
            })
            .collect()
    }

    fn expr_error(&self, node: usize, what: &str, source: ExprError) -> GameError {
        let (j, i) = self.layout.player_of(node);
        GameError::Expr { cluster: j + 1, player: i + 1, what: what.into(), source }
    }

    fn check_len(&self, what: &str, v: &[f64], n: usize) -> Result<(), GameError> {
        if v.len() != n {
            return Err(GameError::Dimension { what: what.into(), expected: n, got: v.len() });
        }
        Ok(())
    }

    /// Cost of player `node` at the full profile `x`.
    pub fn cost(&self, node: usize, x: &[f64]) -> Result<f64, GameError> {
        self.players[node].cost.eval(x).map_err(|e| self.expr_error(node, "cost", e))
    }

    /// Gradient of player `node`'s cost with respect to its own block, evaluated at `profile`.
    pub fn own_gradient_into(&self, node: usize, profile: &[f64], out: &mut [f64]) -> Result<(), GameError> {
        let start = self.layout.block(node).start;
        self.players[node]
            .cost
            .grad_range(profile, start, out)
            .map_err(|e| self.expr_error(node, "cost", e))
    }

    /// Stacked own-cost gradients.
    pub fn pseudogradient(&self, x: &[f64]) -> Result<Vec<f64>, GameError> {
        self.check_len("decision vector", x, self.q())?;
        let mut out = vec![0.0; self.q()];
        for node in 0..self.nodes() {
            let block = self.layout.block(node);
            self.own_gradient_into(node, x, &mut out[block])?;
        }
        Ok(out)
    }

    /// Own-cost gradient of player `node` using its true decision for its own
    /// block and `estimates` (a full profile) for everyone else.
    pub fn local_pseudogradient(&self, node: usize, x_own: &[f64], estimates: &[f64]) -> Result<Vec<f64>, GameError> {
        self.check_len("own decision", x_own, self.p())?;
        self.check_len("estimate profile", estimates, self.q())?;
        let mut profile = estimates.to_vec();
        let block = self.layout.block(node);
        profile[block].copy_from_slice(x_own);
        let mut out = vec![0.0; self.p()];
        self.own_gradient_into(node, &profile, &mut out)?;
        Ok(out)
    }

    fn eval_list(&self, node: usize, tapes: &[Tape], what: &str, x_own: &[f64]) -> Result<Vec<f64>, GameError> {
        tapes
            .iter()
            .map(|t| t.eval(x_own).map_err(|e| self.expr_error(node, what, e)))
            .collect()
    }

    pub fn g_values(&self, node: usize, x_own: &[f64]) -> Result<Vec<f64>, GameError> {
        self.eval_list(node, &self.players[node].g, "g", x_own)
    }

    pub fn d_values(&self, node: usize, x_own: &[f64]) -> Result<Vec<f64>, GameError> {
        self.eval_list(node, &self.players[node].d, "d", x_own)
    }

    pub fn h_values(&self, node: usize, x_own: &[f64]) -> Result<Vec<f64>, GameError> {
        self.eval_list(node, &self.players[node].h, "h", x_own)
    }

    /// Adds `J_g^T lambda + J_d^T mu + J_h^T eta` for player `node` into `out`.
    pub fn add_constraint_gradients(
        &self,
        node: usize,
        x_own: &[f64],
        lambda: &[f64],
        mu: &[f64],
        eta: &[f64],
        out: &mut [f64],
    ) -> Result<(), GameError> {
        let pl = &self.players[node];
        let p = self.p();
        let mut grad = vec![0.0; p];
        for (tapes, weights, what) in [(&pl.g, lambda, "g"), (&pl.d, mu, "d"), (&pl.h, eta, "h")] {
            for (t, &w) in tapes.iter().zip(weights) {
                if w == 0.0 {
                    continue;
                }
                t.grad_range(x_own, 0, &mut grad).map_err(|e| self.expr_error(node, what, e))?;
                for k in 0..p {
                    out[k] += w * grad[k];
                }
            }
        }
        Ok(())
    }

    /// Jacobian rows (one per component) of player `node`'s `g`, `d` or `h`.
    pub fn local_jacobian(&self, node: usize, which: char, x_own: &[f64]) -> Result<Vec<Vec<f64>>, GameError> {
        let pl = &self.players[node];
        let tapes = match which {
            'g' => &pl.g,
            'd' => &pl.d,
            'h' => &pl.h,
            _ => panic!("constraint family must be g, d or h"),
        };
        tapes
            .iter()
            .map(|t| {
                let mut row = vec![0.0; self.p()];
                t.grad_range(x_own, 0, &mut row).map_err(|e| self.expr_error(node, &which.to_string(), e))?;
                Ok(row)
            })
            .collect()
    }

    pub fn constraint_values(&self, x: &[f64]) -> Result<ConstraintValues, GameError> {
        self.check_len("decision vector", x, self.q())?;
        let mut g = Vec::with_capacity(self.nodes());
        let mut d = vec![vec![0.0; self.d_dim]; self.layout.clusters()];
        let mut h = vec![0.0; self.h_dim];
        for node in 0..self.nodes() {
            let xo = &x[self.layout.block(node)];
            g.push(self.g_values(node, xo)?);
            let j = self.layout.cluster_of(node);
            for (acc, v) in d[j].iter_mut().zip(self.d_values(node, xo)?) {
                *acc += v;
            }
            for (acc, v) in h.iter_mut().zip(self.h_values(node, xo)?) {
                *acc += v;
            }
        }
        Ok(ConstraintValues { g, d, h })
    }

    /// Largest violation of the local sets at `x`.
    pub fn set_violation(&self, x: &[f64]) -> f64 {
        (0..self.nodes())
            .map(|n| self.players[n].set().violation(&x[self.layout.block(n)]))
            .fold(0.0, f64::max)
    }

    pub fn project_decisions(&self, x: &mut [f64]) -> Result<(), GameError> {
        for node in 0..self.nodes() {
            let block = self.layout.block(node);
            self.players[node].set().project_in_place(&mut x[block]).map_err(|source| {
                let (j, i) = self.layout.player_of(node);
                GameError::Set { cluster: j + 1, player: i + 1, source }
            })?;
        }
        Ok(())
    }

    /// Residual record of the reduced KKT system at `x` with the given multipliers.
    pub fn kkt_residual(&self, x: &[f64], cert: &KktCertificate) -> Result<KktResidual, GameError> {
        self.check_len("decision vector", x, self.q())?;
        if cert.nu.len() != self.nodes() {
            return Err(GameError::Dimension { what: "nu blocks".into(), expected: self.nodes(), got: cert.nu.len() });
        }
        for (node, nu) in cert.nu.iter().enumerate() {
            self.check_len("nu block", nu, self.players[node].g_count())?;
        }
        if cert.phi.len() != self.layout.clusters() {
            return Err(GameError::Dimension {
                what: "phi blocks".into(),
                expected: self.layout.clusters(),
                got: cert.phi.len(),
            });
        }
        for phi in &cert.phi {
            self.check_len("phi block", phi, self.d_dim)?;
        }
        self.check_len("sigma", &cert.sigma, self.h_dim)?;

        let f = self.pseudogradient(x)?;
        let mut stationarity = 0.0f64;
        for node in 0..self.nodes() {
            let block = self.layout.block(node);
            let xo = &x[block.clone()];
            let j = self.layout.cluster_of(node);
            let mut dir = f[block].to_vec();
            self.add_constraint_gradients(node, xo, &cert.nu[node], &cert.phi[j], &cert.sigma, &mut dir)?;
            let mut target: Vec<f64> = xo.iter().zip(&dir).map(|(a, b)| a - b).collect();
            self.players[node].set().project_in_place(&mut target).map_err(|source| {
                let (j, i) = self.layout.player_of(node);
                GameError::Set { cluster: j + 1, player: i + 1, source }
            })?;
            for (a, b) in xo.iter().zip(&target) {
                stationarity = stationarity.max((a - b).abs());
            }
        }

        let cv = self.constraint_values(x)?;
        let feasibility = cv.max_violation().max(self.set_violation(x));
        let mut complementarity = 0.0f64;
        let mut dual_sign = 0.0f64;
        let pairs = cv
            .g
            .iter()
            .flatten()
            .zip(cert.nu.iter().flatten())
            .chain(cv.d.iter().flatten().zip(cert.phi.iter().flatten()))
            .chain(cv.h.iter().zip(&cert.sigma));
        for (v, m) in pairs {
            complementarity = complementarity.max((v * m).abs());
            dual_sign = dual_sign.max(-m);
        }
        Ok(KktResidual { stationarity, feasibility, complementarity, dual_sign })
    }

    /// Recovers multipliers by nonnegative least squares on the stationarity
    /// equation, using only constraints active within [`ACTIVE_TOL`].
    pub fn fit_multipliers(&self, x: &[f64]) -> Result<KktCertificate, GameError> {
        self.fit_multipliers_with(x, ACTIVE_TOL, FIT_FEASIBILITY_TOL).map(|(c, _)| c)
    }

    /// As [`ClusterGame::fit_multipliers`] with explicit tolerances; also returns the
    /// least-squares residual `||F + J^T m + N c||_inf`.
    pub fn fit_multipliers_with(
        &self,
        x: &[f64],
        active_tol: f64,
        feasibility_tol: f64,
    ) -> Result<(KktCertificate, f64), GameError> {
        self.fit_multipliers_banded(x, active_tol, active_tol, feasibility_tol)
    }

    /// Multiplier fit with separate activity bands for the coupled constraints
    /// and for the faces of the local sets.
    pub(crate) fn fit_multipliers_banded(
        &self,
        x: &[f64],
        active_tol: f64,
        face_tol: f64,
        feasibility_tol: f64,
    ) -> Result<(KktCertificate, f64), GameError> {
        self.check_len("decision vector", x, self.q())?;
        let cv = self.constraint_values(x)?;
        let violation = cv.max_violation().max(self.set_violation(x));
        if violation > feasibility_tol {
            return Err(GameError::Infeasible(violation));
        }
        let q = self.q();
        let f = self.pseudogradient(x)?;

        enum Col {
            Nu(usize, usize),
            Phi(usize, usize),
            Sigma(usize),
            Cone,
        }
        let mut cols: Vec<(Col, Vec<f64>)> = Vec::new();
        let mut jac = Vec::with_capacity(self.nodes());
        for node in 0..self.nodes() {
            let xo = &x[self.layout.block(node)];
            jac.push((
                self.local_jacobian(node, 'g', xo)?,
                self.local_jacobian(node, 'd', xo)?,
                self.local_jacobian(node, 'h', xo)?,
            ));
        }
        for node in 0..self.nodes() {
            let block = self.layout.block(node);
            for (k, &v) in cv.g[node].iter().enumerate() {
                if v >= -active_tol {
                    let mut col = vec![0.0; q];
                    col[block.clone()].copy_from_slice(&jac[node].0[k]);
                    cols.push((Col::Nu(node, k), col));
                }
            }
        }
        for j in 0..self.layout.clusters() {
            for k in 0..self.d_dim {
                if cv.d[j][k] >= -active_tol {
                    let mut col = vec![0.0; q];
                    for node in self.layout.cluster_nodes(j) {
                        col[self.layout.block(node)].copy_from_slice(&jac[node].1[k]);
                    }
                    cols.push((Col::Phi(j, k), col));
                }
            }
        }
        for k in 0..self.h_dim {
            if cv.h[k] >= -active_tol {
                let mut col = vec![0.0; q];
                for node in 0..self.nodes() {
                    col[self.layout.block(node)].copy_from_slice(&jac[node].2[k]);
                }
                cols.push((Col::Sigma(k), col));
            }
        }
        for node in 0..self.nodes() {
            let block = self.layout.block(node);
            for gen in self.players[node].set().normal_generators(&x[block.clone()], face_tol) {
                let mut col = vec![0.0; q];
                col[block.clone()].copy_from_slice(&gen);
                cols.push((Col::Cone, col));
            }
        }

        let mut cert = KktCertificate::zeros(self);
        let rhs = DVector::from_iterator(q, f.iter().map(|v| -v));
        let fit_residual;
        if cols.is_empty() {
            fit_residual = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        } else {
            let a = DMatrix::from_fn(q, cols.len(), |r, c| cols[c].1[r]);
            let m = nnls(&a, &rhs);
            fit_residual = (&a * &m - &rhs).amax();
            for ((kind, _), &val) in cols.iter().zip(m.iter()) {
                match *kind {
                    Col::Nu(node, k) => cert.nu[node][k] = val,
                    Col::Phi(j, k) => cert.phi[j][k] = val,
                    Col::Sigma(k) => cert.sigma[k] = val,
                    Col::Cone => {}
                }
            }
        }
        cert.residual = self.kkt_residual(x, &cert)?;
        Ok((cert, fit_residual))
    }

    /// Draws a point of `K` by projecting a uniform sample of each player's bounding box.
    pub fn sample_decisions(&self, rng: &mut impl Rng) -> Result<Vec<f64>, GameError> {
        let mut x = vec![0.0; self.q()];
        for node in 0..self.nodes() {
            let set = self.players[node].set();
            let (lo, hi) = set.bounding_box();
            let block = self.layout.block(node);
            for (k, slot) in block.clone().enumerate() {
                if !lo[k].is_finite() || !hi[k].is_finite() {
                    let (j, i) = self.layout.player_of(node);
                    return Err(GameError::Unbounded { cluster: j + 1, player: i + 1 });
                }
                x[slot] = if hi[k] > lo[k] { rng.gen_range(lo[k]..=hi[k]) } else { lo[k] };
            }
        }
        self.project_decisions(&mut x)?;
        Ok(x)
    }

    /// Minimum of `(x - y).(F(x) - F(y)) / |x - y|^2` over sampled pairs in `K`,
    /// and of the smallest eigenvalue of the symmetrized Jacobian of `F` at the
    /// sampled points.
    ///
    /// Half of the pairs are independent draws, the other half are nearby
    /// points. The eigenvalue term catches indefinite directions that random
    /// pairs rarely align with.
    pub fn monotonicity_probe(&self, samples: usize, seed: u64) -> Result<f64, GameError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::INFINITY;
        for s in 0..samples {
            let x = self.sample_decisions(&mut rng)?;
            let y = if s % 2 == 0 {
                self.sample_decisions(&mut rng)?
            } else {
                let mut y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-1e-3..1e-3)).collect();
                self.project_decisions(&mut y)?;
                y
            };
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let n2: f64 = diff.iter().map(|v| v * v).sum();
            if n2 < 1e-14 {
                continue;
            }
            let fx = self.pseudogradient(&x)?;
            let fy = self.pseudogradient(&y)?;
            let ip: f64 = diff.iter().zip(fx.iter().zip(&fy)).map(|(d, (a, b))| d * (a - b)).sum();
            worst = worst.min(ip / n2);
            worst = worst.min(self.jacobian_min_eigenvalue(&x)?);
        }
        Ok(worst)
    }

    /// Smallest eigenvalue of the symmetric part of the central-difference Jacobian of `F` at `x`.
    pub fn jacobian_min_eigenvalue(&self, x: &[f64]) -> Result<f64, GameError> {
        let q = self.q();
        let mut jac = DMatrix::zeros(q, q);
        let mut z = x.to_vec();
        for c in 0..q {
            let h = 1e-5 * x[c].abs().max(1.0);
            z[c] = x[c] + h;
            let up = self.pseudogradient(&z)?;
            z[c] = x[c] - h;
            let down = self.pseudogradient(&z)?;
            z[c] = x[c];
            for r in 0..q {
                jac[(r, c)] = (up[r] - down[r]) / (2.0 * h);
            }
        }
        let sym = (&jac + jac.transpose()) * 0.5;
        Ok(symmetric_eigenvalues(&sym)[0])
    }

    /// Slater slack at `x`: the smallest of the interior margins of the local
    /// sets and the slacks of all constraints.
    pub fn slater_margin(&self, x: &[f64]) -> Result<f64, GameError> {
        let cv = self.constraint_values(x)?;
        let set_margin = (0..self.nodes())
            .map(|n| self.players[n].set().interior_margin(&x[self.layout.block(n)]))
            .fold(f64::INFINITY, f64::min);
        Ok(cv.min_slack().min(set_margin))
    }

    /// Whether the global graph and every cluster graph are connected.
    pub fn graphs_connected(&self) -> (bool, Vec<bool>) {
        (self.global.is_connected(), self.cluster_graphs.iter().map(|g| g.is_connected()).collect())
    }
}
