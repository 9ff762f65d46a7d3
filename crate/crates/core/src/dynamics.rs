//! The projected primal-dual flow with consensus multipliers and the decision
//! estimator, its integrators, and the diagnostics used to judge convergence.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{consensus_error, estimator_gains, estimator_rhs, EstimatorConfig, EstimatorError};
use crate::game::{ClusterGame, GameError, KktCertificate};

/// Number of consecutive post-activation steps the stop tolerance must hold.
pub const SUSTAIN_STEPS: usize = 100;

/// The stationarity residual is evaluated only when the flow norm is within
/// this factor of the stop tolerance.
const RESIDUAL_GATE: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("{0}")]
    Game(#[from] GameError),
    #[error("at t = {t}: {source}")]
    Domain { t: f64, source: GameError },
    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("state: {0}")]
    State(String),
}

/// Stacked state: decisions, the three dual layers with their consensus
/// auxiliaries, the estimate block, and time.
///
/// `lambda` is the concatenation of each player's local multipliers; `mu`,
/// `psi` hold `d_dim` entries per player and `eta`, `beta` hold `h_dim` entries
/// per player, in player order.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub psi: Vec<f64>,
    pub eta: Vec<f64>,
    pub beta: Vec<f64>,
    pub xhat: Vec<f64>,
    pub t: f64,
}

impl AugmentedState {
    /// Zero duals and auxiliaries, zero estimates, `t = 0`.
    pub fn initial(game: &ClusterGame, x0: Vec<f64>) -> Result<Self, DynError> {
        if x0.len() != game.q() {
            return Err(DynError::State(format!("initial decision has length {}, expected {}", x0.len(), game.q())));
        }
        let n = game.nodes();
        Ok(Self {
            lambda: vec![0.0; game.g_total()],
            mu: vec![0.0; n * game.d_dim],
            psi: vec![0.0; n * game.d_dim],
            eta: vec![0.0; n * game.h_dim],
            beta: vec![0.0; n * game.h_dim],
            xhat: vec![0.0; n * game.q()],
            x: x0,
            t: 0.0,
        })
    }

    pub fn check_shape(&self, game: &ClusterGame) -> Result<(), DynError> {
        let n = game.nodes();
        let want = [
            ("x", self.x.len(), game.q()),
            ("lambda", self.lambda.len(), game.g_total()),
            ("mu", self.mu.len(), n * game.d_dim),
            ("psi", self.psi.len(), n * game.d_dim),
            ("eta", self.eta.len(), n * game.h_dim),
            ("beta", self.beta.len(), n * game.h_dim),
            ("xhat", self.xhat.len(), n * game.q()),
        ];
        for (name, got, expected) in want {
            if got != expected {
                return Err(DynError::State(format!("{name} has length {got}, expected {expected}")));
            }
        }
        Ok(())
    }

    /// `col(x, lambda, mu, psi, eta, beta)`.
    pub fn theta(&self) -> Vec<f64> {
        [&self.x, &self.lambda, &self.mu, &self.psi, &self.eta, &self.beta]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn set_theta(&mut self, theta: &[f64]) {
        let mut at = 0;
        for part in [&mut self.x, &mut self.lambda, &mut self.mu, &mut self.psi, &mut self.eta, &mut self.beta] {
            let n = part.len();
            part.copy_from_slice(&theta[at..at + n]);
            at += n;
        }
    }

    /// Smallest entry of the sign-constrained duals (`+inf` when there are none).
    pub fn min_dual(&self) -> f64 {
        self.lambda.iter().chain(&self.mu).chain(&self.eta).fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    /// Duals start moving at this time.
    Fixed(f64),
    /// Duals start moving once the consensus error drops below the tolerance.
    Adaptive { tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    pub activation: Activation,
    pub stop_tol: f64,
    pub integrator: Integrator,
    pub stride: usize,
    pub estimator: EstimatorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeMode {
    Fixed,
    Adaptive,
}

/// User-facing knobs from which a [`SimConfig`] is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub step: f64,
    pub horizon: f64,
    pub te_mode: TeMode,
    /// Activation time in fixed mode; the computed bound when absent.
    pub te: Option<f64>,
    pub consensus_tol: f64,
    pub stop_tol: f64,
    pub stride: usize,
    pub margin: f64,
    pub integrator: Integrator,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            horizon: 200.0,
            te_mode: TeMode::Adaptive,
            te: None,
            consensus_tol: 1e-6,
            stop_tol: 1e-6,
            stride: 100,
            margin: 0.02,
            integrator: Integrator::Euler,
        }
    }
}

impl SimConfig {
    pub fn new(game: &ClusterGame, opts: &SimOptions) -> Result<Self, DynError> {
        if !(opts.step > 0.0 && opts.step <= 1.0) {
            return Err(DynError::Config(format!("step must lie in (0, 1], got {}", opts.step)));
        }
        if !(opts.horizon > 0.0) {
            return Err(DynError::Config(format!("horizon must be positive, got {}", opts.horizon)));
        }
        if opts.stride == 0 {
            return Err(DynError::Config("stride must be at least 1".into()));
        }
        if !(opts.stop_tol > 0.0) || !(opts.consensus_tol > 0.0) {
            return Err(DynError::Config("tolerances must be positive".into()));
        }
        let estimator = estimator_gains(game, opts.margin, opts.step)?;
        let activation = match opts.te_mode {
            TeMode::Adaptive => Activation::Adaptive { tolerance: opts.consensus_tol },
            TeMode::Fixed => {
                let te = opts.te.unwrap_or(estimator.te_bound);
                if !(te > 0.0) {
                    return Err(DynError::Config(format!("activation time must be positive, got {te}")));
                }
                if te >= opts.horizon {
                    return Err(DynError::Config(format!("horizon {} does not exceed activation time {te}", opts.horizon)));
                }
                Activation::Fixed(te)
            }
        };
        Ok(Self {
            step: opts.step,
            horizon: opts.horizon,
            activation,
            stop_tol: opts.stop_tol,
            integrator: opts.integrator,
            stride: opts.stride,
            estimator,
        })
    }
}

/// One evaluation of the flow: the projection targets of the sign-constrained
/// blocks and the plain derivatives of the free blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub active: bool,
    pub x_target: Vec<f64>,
    pub lambda_target: Vec<f64>,
    pub mu_target: Vec<f64>,
    pub psi_dot: Vec<f64>,
    pub eta_target: Vec<f64>,
    pub beta_dot: Vec<f64>,
    pub xhat_dot: Vec<f64>,
}

impl Flow {
    /// The time derivative as a state-shaped value (`t` holds 1).
    pub fn derivative(&self, s: &AugmentedState) -> AugmentedState {
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u - v).collect::<Vec<_>>();
        AugmentedState {
            x: diff(&self.x_target, &s.x),
            lambda: diff(&self.lambda_target, &s.lambda),
            mu: diff(&self.mu_target, &s.mu),
            psi: self.psi_dot.clone(),
            eta: diff(&self.eta_target, &s.eta),
            beta: self.beta_dot.clone(),
            xhat: self.xhat_dot.clone(),
            t: 1.0,
        }
    }

    /// Sup-norm of the derivative over every block except the estimates.
    pub fn theta_norm(&self, s: &AugmentedState) -> f64 {
        let m = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        let z = |a: &[f64]| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        m(&self.x_target, &s.x)
            .max(m(&self.lambda_target, &s.lambda))
            .max(m(&self.mu_target, &s.mu))
            .max(z(&self.psi_dot))
            .max(m(&self.eta_target, &s.eta))
            .max(z(&self.beta_dot))
    }

    /// Sup-norm of the full derivative including the estimates.
    pub fn norm(&self, s: &AugmentedState) -> f64 {
        let z = self.xhat_dot.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.theta_norm(s).max(z)
    }
}

fn pos(v: f64) -> f64 {
    v.max(0.0)
}

/// `(L v)` for a graph over `n` nodes with `dim` entries per node.
fn laplacian_blocks(g: &crate::graph::Graph, v: &[f64], dim: usize, out: &mut [f64]) {
    for i in 0..g.node_count() {
        for k in 0..dim {
            let vi = v[i * dim + k];
            out[i * dim + k] = g.neighbors(i).iter().map(|&(w, a)| a * (vi - v[w * dim + k])).sum();
        }
    }
}

/// `(blockdiag(L^j) v)` over all players, `dim` entries each.
fn cluster_laplacian(game: &ClusterGame, v: &[f64], dim: usize, out: &mut [f64]) {
    for (j, g) in game.cluster_graphs.iter().enumerate() {
        let r = game.layout.cluster_nodes(j);
        laplacian_blocks(g, &v[r.start * dim..r.end * dim], dim, &mut out[r.start * dim..r.end * dim]);
    }
}

fn wrap(t: f64) -> impl Fn(GameError) -> DynError {
    move |source| DynError::Domain { t, source }
}

/// Evaluates the flow at `s`. With `active = false` the dual blocks are frozen.
pub fn flow(game: &ClusterGame, s: &AugmentedState, cfg: &SimConfig, active: bool) -> Result<Flow, DynError> {
    flow_with(game, s, &cfg.estimator, active)
}

/// As [`flow`] with the estimator gains given directly.
pub fn flow_with(game: &ClusterGame, s: &AugmentedState, est: &EstimatorConfig, active: bool) -> Result<Flow, DynError> {
    let layout = &game.layout;
    let (n, p, q) = (game.nodes(), game.p(), game.q());
    let (dd, hd) = (game.d_dim, game.h_dim);
    let goff = game.g_offsets();
    let err = wrap(s.t);

    let mut x_target = vec![0.0; q];
    let mut profile = vec![0.0; q];
    let mut dir = vec![0.0; p];
    for node in 0..n {
        let block = layout.block(node);
        let xo = &s.x[block.clone()];
        profile.copy_from_slice(&s.xhat[node * q..(node + 1) * q]);
        profile[block.clone()].copy_from_slice(xo);
        game.own_gradient_into(node, &profile, &mut dir).map_err(&err)?;
        let gl = game.players[node].g_count();
        game.add_constraint_gradients(
            node,
            xo,
            &s.lambda[goff[node]..goff[node] + gl],
            &s.mu[node * dd..(node + 1) * dd],
            &s.eta[node * hd..(node + 1) * hd],
            &mut dir,
        )
        .map_err(&err)?;
        let target = &mut x_target[block];
        for k in 0..p {
            target[k] = xo[k] - dir[k];
        }
        game.players[node].set().project_in_place(target).map_err(|source| {
            let (j, i) = layout.player_of(node);
            err(GameError::Set { cluster: j + 1, player: i + 1, source })
        })?;
    }

    let (lambda_target, mu_target, psi_dot, eta_target, beta_dot);
    if active {
        let mut lt = s.lambda.clone();
        let mut mt = vec![0.0; n * dd];
        let mut et = vec![0.0; n * hd];
        let mut lpsi = vec![0.0; n * dd];
        let mut lmu = vec![0.0; n * dd];
        let mut lbeta = vec![0.0; n * hd];
        let mut leta = vec![0.0; n * hd];
        cluster_laplacian(game, &s.psi, dd, &mut lpsi);
        cluster_laplacian(game, &s.mu, dd, &mut lmu);
        laplacian_blocks(&game.global, &s.beta, hd, &mut lbeta);
        laplacian_blocks(&game.global, &s.eta, hd, &mut leta);
        for node in 0..n {
            let xo = &s.x[layout.block(node)];
            for (k, gv) in game.g_values(node, xo).map_err(&err)?.into_iter().enumerate() {
                let idx = goff[node] + k;
                lt[idx] = pos(s.lambda[idx] + gv);
            }
            for (k, dv) in game.d_values(node, xo).map_err(&err)?.into_iter().enumerate() {
                let idx = node * dd + k;
                mt[idx] = pos(s.mu[idx] + lpsi[idx] + dv);
            }
            for (k, hv) in game.h_values(node, xo).map_err(&err)?.into_iter().enumerate() {
                let idx = node * hd + k;
                et[idx] = pos(s.eta[idx] + lbeta[idx] + hv);
            }
        }
        lambda_target = lt;
        mu_target = mt;
        eta_target = et;
        psi_dot = lmu.into_iter().map(|v| -v).collect::<Vec<_>>();
        beta_dot = leta.into_iter().map(|v| -v).collect::<Vec<_>>();
    } else {
        lambda_target = s.lambda.clone();
        mu_target = s.mu.clone();
        eta_target = s.eta.clone();
        psi_dot = vec![0.0; n * dd];
        beta_dot = vec![0.0; n * hd];
    }

    let mut xhat_dot = vec![0.0; n * q];
    estimator_rhs(&s.xhat, &s.x, &game.global, &est.gamma, est.epsilon, p, &mut xhat_dot);

    Ok(Flow { active, x_target, lambda_target, mu_target, psi_dot, eta_target, beta_dot, xhat_dot })
}

/// State derivative at `s`.
pub fn flow_rhs(game: &ClusterGame, s: &AugmentedState, cfg: &SimConfig, active: bool) -> Result<AugmentedState, DynError> {
    Ok(flow(game, s, cfg, active)?.derivative(s))
}

/// One Euler step written as convex combinations, so decisions stay in their
/// sets and sign-constrained duals stay nonnegative exactly. Frozen duals are
/// left untouched.
///
/// The consensus auxiliaries are advanced with the already-updated multipliers
/// (`psi+ = psi - h L mu+`, likewise `beta`). The multiplier/auxiliary pair is
/// a rotation that explicit Euler would amplify by `1 + (h w)^2` per step; the
/// semi-implicit order keeps it contractive and leaves `1^T psi` unchanged.
pub fn step_euler(game: &ClusterGame, s: &AugmentedState, f: &Flow, h: f64) -> Result<AugmentedState, DynError> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(DynError::Config(format!("Euler step must lie in (0, 1], got {h}")));
    }
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (1.0 - h) * u + h * v).collect::<Vec<_>>();
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u + h * v).collect::<Vec<_>>();
    let mut next = AugmentedState {
        x: mix(&s.x, &f.x_target),
        lambda: s.lambda.clone(),
        mu: s.mu.clone(),
        psi: s.psi.clone(),
        eta: s.eta.clone(),
        beta: s.beta.clone(),
        xhat: add(&s.xhat, &f.xhat_dot),
        t: s.t + h,
    };
    if f.active {
        next.lambda = mix(&s.lambda, &f.lambda_target);
        next.mu = mix(&s.mu, &f.mu_target);
        next.eta = mix(&s.eta, &f.eta_target);
        let (dd, hd) = (game.d_dim, game.h_dim);
        let mut lmu = vec![0.0; next.mu.len()];
        let mut leta = vec![0.0; next.eta.len()];
        cluster_laplacian(game, &next.mu, dd, &mut lmu);
        laplacian_blocks(&game.global, &next.eta, hd, &mut leta);
        for (p, l) in next.psi.iter_mut().zip(&lmu) {
            *p -= h * l;
        }
        for (b, l) in next.beta.iter_mut().zip(&leta) {
            *b -= h * l;
        }
    }
    Ok(next)
}

fn axpy(s: &AugmentedState, k: &AugmentedState, a: f64) -> AugmentedState {
    let f = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x + a * y).collect::<Vec<_>>();
    AugmentedState {
        x: f(&s.x, &k.x),
        lambda: f(&s.lambda, &k.lambda),
        mu: f(&s.mu, &k.mu),
        psi: f(&s.psi, &k.psi),
        eta: f(&s.eta, &k.eta),
        beta: f(&s.beta, &k.beta),
        xhat: f(&s.xhat, &k.xhat),
        t: s.t + a,
    }
}

/// Classical RK4 step followed by projection of decisions onto their sets and
/// of the sign-constrained duals onto the nonnegative orthant. Intermediate
/// stages may leave the sets, so set-valued expressions must be defined there.
pub fn step_rk4(game: &ClusterGame, s: &AugmentedState, cfg: &SimConfig, active: bool, h: f64) -> Result<AugmentedState, DynError> {
    let k1 = flow_rhs(game, s, cfg, active)?;
    let k2 = flow_rhs(game, &axpy(s, &k1, h / 2.0), cfg, active)?;
    let k3 = flow_rhs(game, &axpy(s, &k2, h / 2.0), cfg, active)?;
    let k4 = flow_rhs(game, &axpy(s, &k3, h), cfg, active)?;
    let comb = |a: &[f64], b1: &[f64], b2: &[f64], b3: &[f64], b4: &[f64]| {
        (0..a.len())
            .map(|i| a[i] + h / 6.0 * (b1[i] + 2.0 * b2[i] + 2.0 * b3[i] + b4[i]))
            .collect::<Vec<_>>()
    };
    let mut next = AugmentedState {
        x: comb(&s.x, &k1.x, &k2.x, &k3.x, &k4.x),
        lambda: comb(&s.lambda, &k1.lambda, &k2.lambda, &k3.lambda, &k4.lambda),
        mu: comb(&s.mu, &k1.mu, &k2.mu, &k3.mu, &k4.mu),
        psi: comb(&s.psi, &k1.psi, &k2.psi, &k3.psi, &k4.psi),
        eta: comb(&s.eta, &k1.eta, &k2.eta, &k3.eta, &k4.eta),
        beta: comb(&s.beta, &k1.beta, &k2.beta, &k3.beta, &k4.beta),
        xhat: comb(&s.xhat, &k1.xhat, &k2.xhat, &k3.xhat, &k4.xhat),
        t: s.t + h,
    };
    game.project_decisions(&mut next.x)?;
    if active {
        for v in next.lambda.iter_mut().chain(next.mu.iter_mut()).chain(next.eta.iter_mut()) {
            *v = pos(*v);
        }
    } else {
        next.lambda.clone_from(&s.lambda);
        next.mu.clone_from(&s.mu);
        next.psi.clone_from(&s.psi);
        next.eta.clone_from(&s.eta);
        next.beta.clone_from(&s.beta);
    }
    Ok(next)
}

/// The extended operator evaluated with true decisions, stacked like [`AugmentedState::theta`].
pub fn extended_operator(game: &ClusterGame, s: &AugmentedState) -> Result<Vec<f64>, DynError> {
    let layout = &game.layout;
    let (n, p) = (game.nodes(), game.p());
    let (dd, hd) = (game.d_dim, game.h_dim);
    let goff = game.g_offsets();

    let mut upsilon = game.pseudogradient(&s.x)?;
    let mut neg_g = vec![0.0; s.lambda.len()];
    let mut mu_part = vec![0.0; n * dd];
    let mut psi_part = vec![0.0; n * dd];
    let mut eta_part = vec![0.0; n * hd];
    let mut beta_part = vec![0.0; n * hd];
    cluster_laplacian(game, &s.psi, dd, &mut mu_part);
    cluster_laplacian(game, &s.mu, dd, &mut psi_part);
    laplacian_blocks(&game.global, &s.beta, hd, &mut eta_part);
    laplacian_blocks(&game.global, &s.eta, hd, &mut beta_part);
    for node in 0..n {
        let block = layout.block(node);
        let xo = &s.x[block.clone()];
        let gl = game.players[node].g_count();
        game.add_constraint_gradients(
            node,
            xo,
            &s.lambda[goff[node]..goff[node] + gl],
            &s.mu[node * dd..(node + 1) * dd],
            &s.eta[node * hd..(node + 1) * hd],
            &mut upsilon[block],
        )?;
        for (k, v) in game.g_values(node, xo)?.into_iter().enumerate() {
            neg_g[goff[node] + k] = -v;
        }
        for (k, v) in game.d_values(node, xo)?.into_iter().enumerate() {
            mu_part[node * dd + k] = -mu_part[node * dd + k] - v;
        }
        for (k, v) in game.h_values(node, xo)?.into_iter().enumerate() {
            eta_part[node * hd + k] = -eta_part[node * hd + k] - v;
        }
    }
    let _ = p;
    Ok([upsilon, neg_g, mu_part, psi_part, eta_part, beta_part].concat())
}

/// Projection onto `K x R+ x R+ x R x R+ x R` for a stacked vector.
pub fn project_lambda(game: &ClusterGame, shape: &AugmentedState, theta: &mut [f64]) -> Result<(), DynError> {
    let q = game.q();
    game.project_decisions(&mut theta[..q])?;
    let (nl, nm, np, ne) = (shape.lambda.len(), shape.mu.len(), shape.psi.len(), shape.eta.len());
    let ranges = [q..q + nl, q + nl..q + nl + nm, q + nl + nm + np..q + nl + nm + np + ne];
    for r in ranges {
        for v in &mut theta[r] {
            *v = pos(*v);
        }
    }
    Ok(())
}

/// `P(theta - F(theta))` together with `theta` and `F(theta)`.
fn hbar(game: &ClusterGame, s: &AugmentedState) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), DynError> {
    let theta = s.theta();
    let f = extended_operator(game, s)?;
    let mut h: Vec<f64> = theta.iter().zip(&f).map(|(a, b)| a - b).collect();
    project_lambda(game, s, &mut h)?;
    Ok((theta, f, h))
}

/// `||P(theta - F(theta)) - theta||_inf`.
pub fn stationarity_residual(game: &ClusterGame, s: &AugmentedState) -> Result<f64, DynError> {
    let (theta, _, h) = hbar(game, s)?;
    Ok(theta.iter().zip(&h).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// `V = (theta - h)^T F - |theta - h|^2 / 2 + |theta - theta*|^2 / 2`.
pub fn lyapunov_value(game: &ClusterGame, s: &AugmentedState, reference: &AugmentedState) -> Result<f64, DynError> {
    let (theta, f, h) = hbar(game, s)?;
    let star = reference.theta();
    let mut v = 0.0;
    for i in 0..theta.len() {
        let r = theta[i] - h[i];
        let e = theta[i] - star[i];
        v += r * f[i] - 0.5 * r * r + 0.5 * e * e;
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: AugmentedState,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub samples: Vec<Sample>,
    /// `(t, stationarity residual)` at every sampled step.
    pub residual_history: Vec<(f64, f64)>,
    pub activation_time: Option<f64>,
    pub steps: usize,
    pub stop: StopReason,
    pub final_state: AugmentedState,
    pub final_residual: f64,
    /// Multipliers fitted at the final decisions, when they are feasible enough.
    pub certificate: Option<KktCertificate>,
    pub certificate_error: Option<String>,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// What the observer sees after every accepted step.
pub struct StepEvent<'a> {
    pub step: usize,
    pub previous: &'a AugmentedState,
    pub state: &'a AugmentedState,
    pub active: bool,
}

/// Fixed-step integration from `init` until the horizon or until the
/// stationarity residual stays below the stop tolerance for [`SUSTAIN_STEPS`]
/// consecutive post-activation steps.
pub fn integrate(
    game: &ClusterGame,
    init: &AugmentedState,
    cfg: &SimConfig,
    mut observer: Option<&mut dyn FnMut(&StepEvent<'_>)>,
) -> Result<RunReport, DynError> {
    init.check_shape(game)?;
    if init.min_dual() < 0.0 {
        return Err(DynError::State("initial duals must be nonnegative".into()));
    }
    let h = cfg.step;
    let max_steps = (cfg.horizon / h).round() as usize;
    let t0 = init.t;
    let mut state = init.clone();
    let mut active = false;
    let mut activation_time = None;
    let mut streak = 0usize;
    let mut samples = Vec::new();
    let mut residual_history = Vec::new();
    let mut stop = StopReason::Horizon;
    let mut step = 0usize;

    loop {
        if !active {
            active = match cfg.activation {
                Activation::Fixed(te) => state.t >= te,
                Activation::Adaptive { tolerance } => consensus_error(&state.xhat, &state.x) < tolerance,
            };
            if active {
                activation_time = Some(state.t);
            }
        }
        let f = flow(game, &state, cfg, active)?;
        let sampled = step % cfg.stride == 0;
        let mut residual = None;
        if active {
            // the flow norm equals the residual once estimates are exact, so
            // the full residual is only computed when it can be small
            if f.theta_norm(&state) <= RESIDUAL_GATE * cfg.stop_tol {
                let r = stationarity_residual(game, &state)?;
                residual = Some(r);
                streak = if r < cfg.stop_tol { streak + 1 } else { 0 };
            } else {
                streak = 0;
            }
        }
        let done = streak >= SUSTAIN_STEPS;
        if sampled || done || step == max_steps {
            let r = match residual {
                Some(r) => r,
                None => stationarity_residual(game, &state)?,
            };
            samples.push(Sample { t: state.t, state: state.clone(), residual: r });
            residual_history.push((state.t, r));
        }
        if done {
            stop = StopReason::Converged;
            break;
        }
        if step == max_steps {
            break;
        }
        let mut next = match cfg.integrator {
            Integrator::Euler => step_euler(game, &state, &f, h)?,
            Integrator::Rk4 => step_rk4(game, &state, cfg, active, h)?,
        };
        step += 1;
        next.t = t0 + step as f64 * h;
        if let Some(obs) = observer.as_deref_mut() {
            obs(&StepEvent { step, previous: &state, state: &next, active });
        }
        state = next;
    }

    let final_residual = stationarity_residual(game, &state)?;
    let (certificate, certificate_error) = match game.fit_multipliers(&state.x) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(RunReport {
        samples,
        residual_history,
        activation_time,
        steps: step,
        stop,
        final_state: state,
        final_residual,
        certificate,
        certificate_error,
    })
}

/// `%.12g`-style formatting.
pub fn fmt_g(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.11e}", v);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-5..12).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mant), sign, exp.abs())
    } else {
        trim(&format!("{:.*}", (11 - exp) as usize, v))
    }
}

fn label_blocks(game: &ClusterGame, name: &str, per: usize, out: &mut Vec<String>) {
    for node in 0..game.nodes() {
        let (j, i) = game.layout.player_of(node);
        for k in 0..per {
            out.push(format!("{name}[{}][{}][{}]", j + 1, i + 1, k + 1));
        }
    }
}

/// Column names for [`write_trajectory_csv`].
pub fn trajectory_header(game: &ClusterGame) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    label_blocks(game, "x", game.p(), &mut cols);
    for node in 0..game.nodes() {
        let (j, i) = game.layout.player_of(node);
        for k in 0..game.players[node].g_count() {
            cols.push(format!("lambda[{}][{}][{}]", j + 1, i + 1, k + 1));
        }
    }
    label_blocks(game, "mu", game.d_dim, &mut cols);
    label_blocks(game, "psi", game.d_dim, &mut cols);
    label_blocks(game, "eta", game.h_dim, &mut cols);
    label_blocks(game, "beta", game.h_dim, &mut cols);
    cols.push("residual".into());
    cols
}

pub fn write_trajectory_csv(game: &ClusterGame, report: &RunReport, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", trajectory_header(game).join(","))?;
    for s in &report.samples {
        let mut row = vec![fmt_g(s.t)];
        row.extend(s.state.theta().iter().map(|&v| fmt_g(v)));
        row.push(fmt_g(s.residual));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_residual_csv(report: &RunReport, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "t,residual")?;
    for &(t, r) in &report.residual_history {
        writeln!(w, "{},{}", fmt_g(t), fmt_g(r))?;
    }
    Ok(())
}
