//! Centralized, consensus-free solvers on the reduced KKT system, used as
//! ground truth for the distributed flow.

use nalgebra::DVector;
use thiserror::Error;

use crate::dynamics::{flow_with, AugmentedState, DynError};
use crate::estimator::{estimator_gains, EstimatorConfig};
use crate::game::{ClusterGame, GameError, KktCertificate, KktResidual, ACTIVE_TOL};
use crate::graph::Graph;
use crate::linalg::min_norm_solve;

/// Largest decision dimension accepted by [`grid_solve_tiny`].
pub const GRID_MAX_DIM: usize = 3;
/// Largest number of grid points [`grid_solve_tiny`] will enumerate.
pub const GRID_MAX_POINTS: usize = 20_000_000;

const FACE_TOL: f64 = 1e-12;

const STEP_FLOOR: f64 = 1e-8;
const STEP_CEIL: f64 = 10.0;
const ACCEPT_RATIO: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{0}")]
    Game(#[from] GameError),
    #[error("{0}")]
    Dyn(#[from] DynError),
    #[error("grid search needs q <= {GRID_MAX_DIM}, got {0}")]
    TooLarge(usize),
    #[error("grid search needs box sets; player ({cluster}, {player}) is not a box")]
    NotBox { cluster: usize, player: usize },
    #[error("grid resolution must be positive, got {0}")]
    Resolution(f64),
    #[error("grid would have {0} points")]
    GridSize(usize),
    #[error("no grid point satisfies the constraints")]
    NoFeasiblePoint,
    #[error("point is infeasible by {violation:.3e}, tolerance {tol:.1e}")]
    Infeasible { violation: f64, tol: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Decisions with the multipliers of the reduced KKT system.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub x: Vec<f64>,
    pub nu: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl ReducedState {
    pub fn certificate(&self, game: &ClusterGame) -> Result<KktCertificate, GameError> {
        let mut cert = KktCertificate { nu: self.nu.clone(), phi: self.phi.clone(), sigma: self.sigma.clone(), residual: KktResidual::default() };
        cert.residual = game.kkt_residual(&self.x, &cert)?;
        Ok(cert)
    }

    fn unflatten(game: &ClusterGame, z: &[f64]) -> Self {
        let q = game.q();
        let mut at = q;
        let nu = game
            .players
            .iter()
            .map(|p| {
                let v = z[at..at + p.g_count()].to_vec();
                at += p.g_count();
                v
            })
            .collect();
        let phi = (0..game.layout.clusters())
            .map(|_| {
                let v = z[at..at + game.d_dim].to_vec();
                at += game.d_dim;
                v
            })
            .collect();
        Self { x: z[..q].to_vec(), nu, phi, sigma: z[at..at + game.h_dim].to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub state: ReducedState,
    /// `||z - P(z - Phi(z))||_inf` at the returned iterate.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The reduced saddle operator `(F + J^T m, -g, -sum d per cluster, -sum h)`.
fn reduced_operator(game: &ClusterGame, z: &[f64], out: &mut [f64]) -> Result<(), GameError> {
    let st = ReducedState::unflatten(game, z);
    let q = game.q();
    let f = game.pseudogradient(&st.x)?;
    out[..q].copy_from_slice(&f);
    for node in 0..game.nodes() {
        let block = game.layout.block(node);
        let j = game.layout.cluster_of(node);
        game.add_constraint_gradients(node, &st.x[block.clone()], &st.nu[node], &st.phi[j], &st.sigma, &mut out[block])?;
    }
    let cv = game.constraint_values(&st.x)?;
    let duals = cv.g.iter().flatten().chain(cv.d.iter().flatten()).chain(&cv.h);
    for (o, v) in out[q..].iter_mut().zip(duals) {
        *o = -v;
    }
    Ok(())
}

fn project_reduced(game: &ClusterGame, z: &mut [f64]) -> Result<(), GameError> {
    let q = game.q();
    game.project_decisions(&mut z[..q])?;
    for v in &mut z[q..] {
        *v = v.max(0.0);
    }
    Ok(())
}

fn natural_residual(game: &ClusterGame, z: &[f64], phi: &[f64]) -> Result<f64, GameError> {
    let mut w: Vec<f64> = z.iter().zip(phi).map(|(a, b)| a - b).collect();
    project_reduced(game, &mut w)?;
    Ok(z.iter().zip(&w).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

fn norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Two-projection extragradient with an adaptive step, started from `x0`
/// (projected onto `K`) and zero multipliers.
pub fn extragradient_solve_from(
    game: &ClusterGame,
    x0: &[f64],
    step0: f64,
    max_iter: usize,
    tol: f64,
) -> Result<OracleSolution, OracleError> {
    if !(step0 > 0.0) || !(tol > 0.0) {
        return Err(OracleError::Parameter(format!("step {step0} and tolerance {tol} must be positive")));
    }
    if x0.len() != game.q() {
        return Err(GameError::Dimension { what: "initial decision".into(), expected: game.q(), got: x0.len() }.into());
    }
    let q = game.q();
    let m = game.g_total() + game.layout.clusters() * game.d_dim + game.h_dim;
    let mut z = x0.to_vec();
    z.resize(q + m, 0.0);
    project_reduced(game, &mut z)?;

    let n = z.len();
    let mut phi = vec![0.0; n];
    let mut phi_bar = vec![0.0; n];
    let mut z_bar = vec![0.0; n];
    let mut t = step0;
    reduced_operator(game, &z, &mut phi)?;
    let mut residual = natural_residual(game, &z, &phi)?;
    let mut best = (residual, z.clone());
    let mut iterations = 0;

    while residual >= tol && iterations < max_iter {
        iterations += 1;
        loop {
            for k in 0..n {
                z_bar[k] = z[k] - t * phi[k];
            }
            project_reduced(game, &mut z_bar)?;
            reduced_operator(game, &z_bar, &mut phi_bar)?;
            let moved = norm2(&z_bar, &z);
            if t * norm2(&phi_bar, &phi) <= ACCEPT_RATIO * moved || t <= STEP_FLOOR || moved == 0.0 {
                break;
            }
            t = (t * 0.5).max(STEP_FLOOR);
        }
        for k in 0..n {
            z[k] -= t * phi_bar[k];
        }
        project_reduced(game, &mut z)?;
        t = (t * 1.1).min(STEP_CEIL);
        reduced_operator(game, &z, &mut phi)?;
        residual = natural_residual(game, &z, &phi)?;
        if residual < best.0 {
            best = (residual, z.clone());
        }
    }
    let converged = best.0 < tol;
    Ok(OracleSolution { state: ReducedState::unflatten(game, &best.1), residual: best.0, iterations, converged })
}

/// [`extragradient_solve_from`] starting at the projection of the origin onto `K`.
pub fn extragradient_solve(game: &ClusterGame, step0: f64, max_iter: usize, tol: f64) -> Result<OracleSolution, OracleError> {
    extragradient_solve_from(game, &vec![0.0; game.q()], step0, max_iter, tol)
}

/// Best feasible point of a regular grid over the boxes, scored by the
/// least-squares stationarity residual with multipliers refitted at each point.
///
/// Constraints count as active within a band proportional to the resolution,
/// so a grid point next to a binding constraint can still certify it; the
/// score adds the complementarity gap so a slack constraint inside the band
/// cannot absorb the gradient for free. Box faces lie on the grid and count
/// only when hit.
pub fn grid_solve_tiny(game: &ClusterGame, resolution: f64) -> Result<Vec<f64>, OracleError> {
    let q = game.q();
    if q > GRID_MAX_DIM {
        return Err(OracleError::TooLarge(q));
    }
    if !(resolution > 0.0) {
        return Err(OracleError::Resolution(resolution));
    }
    let mut axes = Vec::with_capacity(q);
    for node in 0..game.nodes() {
        let set = game.players[node].set();
        if !set.is_box() {
            let (j, i) = game.layout.player_of(node);
            return Err(OracleError::NotBox { cluster: j + 1, player: i + 1 });
        }
        let (lo, hi) = set.bounding_box();
        for k in 0..game.p() {
            let cells = ((hi[k] - lo[k]) / resolution).round() as usize;
            let mut axis: Vec<f64> = (0..=cells).map(|c| lo[k] + c as f64 * resolution).collect();
            if let Some(last) = axis.last_mut() {
                *last = last.min(hi[k]);
            }
            if *axis.last().unwrap() < hi[k] {
                axis.push(hi[k]);
            }
            axes.push(axis);
        }
    }
    let total = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.len())).unwrap_or(usize::MAX);
    if total > GRID_MAX_POINTS {
        return Err(OracleError::GridSize(total));
    }

    // activity band: a first-order bound on how far a constraint value moves
    // within one cell
    let mut slope = 1.0f64;
    let mid: Vec<f64> = axes.iter().map(|a| a[a.len() / 2]).collect();
    for node in 0..game.nodes() {
        let xo = &mid[game.layout.block(node)];
        for which in ['g', 'd', 'h'] {
            for row in game.local_jacobian(node, which, xo)? {
                slope = slope.max(row.iter().map(|v| v.abs()).sum());
            }
        }
    }
    let band = 2.0 * resolution * slope;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; q];
    let mut x = vec![0.0; q];
    for _ in 0..total {
        for k in 0..q {
            x[k] = axes[k][idx[k]];
        }
        let cv = game.constraint_values(&x)?;
        if cv.max_violation() <= 0.0 {
            let (cert, fit) = game.fit_multipliers_banded(&x, band.max(ACTIVE_TOL), FACE_TOL, 0.0)?;
            let score = fit + cert.residual.complementarity;
            if best.as_ref().map_or(true, |(s, _)| score < *s) {
                best = Some((score, x.clone()));
            }
        }
        for k in (0..q).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    best.map(|(_, x)| x).ok_or(OracleError::NoFeasiblePoint)
}

/// Minimum-norm `psi` with `L psi = -v + mean(v)` per column; `v` holds `dim`
/// entries per node.
fn consensus_auxiliary(g: &Graph, v: &[f64], dim: usize) -> Vec<f64> {
    let n = g.node_count();
    let lap = g.laplacian();
    let mut out = vec![0.0; n * dim];
    for k in 0..dim {
        let mean = (0..n).map(|i| v[i * dim + k]).sum::<f64>() / n as f64;
        let rhs = DVector::from_iterator(n, (0..n).map(|i| mean - v[i * dim + k]));
        let sol = min_norm_solve(&lap, &rhs);
        for i in 0..n {
            out[i * dim + k] = sol[i];
        }
    }
    out
}

/// The consensus-augmented state that corresponds to a reduced KKT point:
/// exact estimates, multipliers copied to every player, and consensus
/// auxiliaries solving the stationarity of the multiplier layers.
pub fn equilibrium_state(game: &ClusterGame, x: &[f64], cert: &KktCertificate) -> Result<AugmentedState, OracleError> {
    let mut s = AugmentedState::initial(game, x.to_vec())?;
    let (n, q, dd, hd) = (game.nodes(), game.q(), game.d_dim, game.h_dim);
    s.lambda = cert.nu.iter().flatten().copied().collect();
    let mut dvals = vec![0.0; n * dd];
    let mut hvals = vec![0.0; n * hd];
    for node in 0..n {
        let xo = &x[game.layout.block(node)];
        let j = game.layout.cluster_of(node);
        s.mu[node * dd..(node + 1) * dd].copy_from_slice(&cert.phi[j]);
        s.eta[node * hd..(node + 1) * hd].copy_from_slice(&cert.sigma);
        dvals[node * dd..(node + 1) * dd].copy_from_slice(&game.d_values(node, xo)?);
        hvals[node * hd..(node + 1) * hd].copy_from_slice(&game.h_values(node, xo)?);
    }
    for (j, g) in game.cluster_graphs.iter().enumerate() {
        let r = game.layout.cluster_nodes(j);
        let psi = consensus_auxiliary(g, &dvals[r.start * dd..r.end * dd], dd);
        s.psi[r.start * dd..r.end * dd].copy_from_slice(&psi);
    }
    s.beta = consensus_auxiliary(&game.global, &hvals, hd);
    for node in 0..n {
        s.xhat[node * q..(node + 1) * q].copy_from_slice(x);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub certificate: KktCertificate,
    pub kkt: KktResidual,
    /// Sup-norm of the active flow at [`Verification::state`].
    pub flow_residual: f64,
    pub state: AugmentedState,
    pub tol: f64,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.kkt.max() < self.tol && self.flow_residual < self.tol
    }
}

/// Estimator gains are irrelevant at exact estimates; these stand in when the
/// sets are unbounded.
fn inert_estimator(game: &ClusterGame) -> EstimatorConfig {
    estimator_gains(game, 0.02, 1e-3).unwrap_or_else(|_| {
        let n = game.nodes();
        EstimatorConfig {
            gamma: vec![1.0; n],
            tau: vec![0.0; n],
            epsilon: 1.0,
            sup_bounds: vec![f64::INFINITY; n],
            lambda_min: vec![0.0; n],
            lambda_max: vec![0.0; n],
            te_nodes: vec![f64::INFINITY; n],
            te_bound: f64::INFINITY,
        }
    })
}

/// Sup-norm of the active flow at an augmented state.
pub fn flow_residual(game: &ClusterGame, s: &AugmentedState) -> Result<f64, OracleError> {
    let f = flow_with(game, s, &inert_estimator(game), true)?;
    Ok(f.norm(s))
}

/// Fits multipliers at `x`, evaluates the reduced KKT residual, and evaluates
/// the distributed flow at the matching augmented state.
pub fn verify_equilibrium(game: &ClusterGame, x: &[f64], tol: f64) -> Result<Verification, OracleError> {
    if !(tol > 0.0) {
        return Err(OracleError::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let (certificate, _) = game.fit_multipliers_with(x, ACTIVE_TOL.max(tol), tol).map_err(|e| match e {
        GameError::Infeasible(violation) => OracleError::Infeasible { violation, tol },
        other => other.into(),
    })?;
    verify_with(game, x, certificate, tol)
}

/// As [`verify_equilibrium`] with given multipliers.
pub fn verify_with(game: &ClusterGame, x: &[f64], certificate: KktCertificate, tol: f64) -> Result<Verification, OracleError> {
    let kkt = game.kkt_residual(x, &certificate)?;
    let state = equilibrium_state(game, x, &certificate)?;
    let flow_residual = flow_residual(game, &state)?;
    Ok(Verification { certificate: KktCertificate { residual: kkt, ..certificate }, kkt, flow_residual, state, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::game::{Layout, PlayerSpec};
    use crate::sets::ConvexSet;

    fn laplacian_times(g: &Graph, v: &[f64]) -> Vec<f64> {
        (g.laplacian() * DVector::from_column_slice(v)).iter().copied().collect()
    }

    fn game(sizes: Vec<usize>, specs: Vec<(&str, ConvexSet)>, h: Vec<&str>, edges: &[(usize, usize)]) -> ClusterGame {
        let n: usize = sizes.iter().sum();
        let layout = Layout::new(sizes.clone(), 1).unwrap();
        let h_dim = usize::from(!h.is_empty());
        let players = specs
            .into_iter()
            .enumerate()
            .map(|(k, (c, set))| PlayerSpec {
                cost: parse_expr(c).unwrap(),
                g: vec![],
                d: vec![],
                h: h.get(k).map(|e| vec![parse_expr(e).unwrap()]).unwrap_or_default(),
                set,
            })
            .collect();
        let global = Graph::unweighted(n, edges).unwrap();
        let mut start = 0;
        let clusters = sizes
            .iter()
            .map(|&m| {
                let nodes: Vec<usize> = (start..start + m).collect();
                start += m;
                global.induced(&nodes)
            })
            .collect();
        ClusterGame::new(layout, players, 0, h_dim, global, clusters).unwrap()
    }

    fn bx(lo: f64, hi: f64) -> ConvexSet {
        ConvexSet::boxed(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn single_player_interior() {
        let g = game(vec![1], vec![("(x[1][1][1] - 1)^2", bx(0.0, 2.0))], vec![], &[]);
        let sol = extragradient_solve(&g, 0.1, 10_000, 1e-10).unwrap();
        assert!(sol.converged);
        assert!((sol.state.x[0] - 1.0).abs() < 1e-9);
        let grid = grid_solve_tiny(&g, 1e-3).unwrap();
        assert!((grid[0] - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn single_player_boundary() {
        let g = game(vec![1], vec![("x[1][1][1]^2", bx(1.0, 2.0))], vec![], &[]);
        let grid = grid_solve_tiny(&g, 1e-2).unwrap();
        assert!((grid[0] - 1.0).abs() < 1e-12);
        let sol = extragradient_solve(&g, 0.1, 10_000, 1e-10).unwrap();
        assert!((sol.state.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_player_zero() {
        let g = game(
            vec![1, 1],
            vec![("(x[1][1][1] - x[2][1][1])^2", bx(-1.0, 1.0)), ("(x[2][1][1] + x[1][1][1])^2", bx(-1.0, 1.0))],
            vec![],
            &[(0, 1)],
        );
        let sol = extragradient_solve_from(&g, &[0.7, -0.3], 0.1, 100_000, 1e-10).unwrap();
        assert!(sol.converged);
        assert!(sol.state.x.iter().all(|v| v.abs() < 1e-8));
        let grid = grid_solve_tiny(&g, 1e-2).unwrap();
        assert!(grid.iter().all(|v| v.abs() <= 1e-2));
    }

    #[test]
    fn shared_constraint_binds() {
        // minimize (x - 2)^2 each, subject to x1 + x2 >= 5 written as sum (2.5 - x) <= 0
        let g = game(
            vec![1, 1],
            vec![("(x[1][1][1] - 2)^2", bx(0.0, 4.0)), ("(x[2][1][1] - 2)^2", bx(0.0, 4.0))],
            vec!["2.5 - x[1][1][1]", "2.5 - x[2][1][1]"],
            &[(0, 1)],
        );
        let sol = extragradient_solve(&g, 0.1, 100_000, 1e-10).unwrap();
        assert!(sol.converged);
        assert!((sol.state.x[0] - 2.5).abs() < 1e-8 && (sol.state.x[1] - 2.5).abs() < 1e-8);
        assert!((sol.state.sigma[0] - 1.0).abs() < 1e-7);
        let v = verify_equilibrium(&g, &sol.state.x, 1e-6).unwrap();
        assert!(v.passed(), "{v:?}");
        let grid = grid_solve_tiny(&g, 1e-2).unwrap();
        assert!((grid[0] - 2.5).abs() <= 2e-2 && (grid[1] - 2.5).abs() <= 2e-2, "{grid:?}");
    }

    #[test]
    fn non_equilibrium_rejected() {
        let g = game(vec![1], vec![("(x[1][1][1] - 1)^2", bx(0.0, 2.0))], vec![], &[]);
        let v = verify_equilibrium(&g, &[1.5], 1e-4).unwrap();
        assert!(!v.passed());
        assert!(matches!(verify_equilibrium(&g, &[3.0], 1e-4), Err(OracleError::Infeasible { .. })));
    }

    #[test]
    fn grid_rejects_large_or_round() {
        let g = game(vec![1], vec![("x[1][1][1]^2", ConvexSet::ball(vec![0.0], 1.0).unwrap())], vec![], &[]);
        assert!(matches!(grid_solve_tiny(&g, 0.1), Err(OracleError::NotBox { .. })));
        let specs = (0..4).map(|_| ("x[1][1][1]^2", bx(0.0, 1.0))).collect();
        let g = game(vec![4], specs, vec![], &[(0, 1), (1, 2), (2, 3)]);
        assert!(matches!(grid_solve_tiny(&g, 0.1), Err(OracleError::TooLarge(4))));
    }

    #[test]
    fn auxiliary_solves_consensus_equation() {
        let g = Graph::unweighted(3, &[(0, 1), (1, 2)]).unwrap();
        let v = [1.0, -2.0, 4.0];
        let psi = consensus_auxiliary(&g, &v, 1);
        let lpsi = laplacian_times(&g, &psi);
        for i in 0..3 {
            assert!((lpsi[i] + v[i] - 1.0).abs() < 1e-12);
        }
    }
}
