//! Sign-based finite-time estimator through which every player reconstructs
//! everyone's decisions over the global graph.
//!
//! Estimates are stored row-major: row `w` is node `w`'s estimate of the full
//! decision profile, so `xhat[w * q + s]` estimates `x[s]`.

use thiserror::Error;

use crate::game::ClusterGame;
use crate::graph::{Graph, GraphError, GroundedLaplacian};

/// Floor for the boundary-layer width.
pub const MIN_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("player ({cluster}, {player}) has an unbounded local set; the gain rule needs a finite bound")]
    Unbounded { cluster: usize, player: usize },
    #[error("gain margin must be positive, got {0}")]
    Margin(f64),
    #[error("step must be positive, got {0}")]
    Step(f64),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Gain per estimated node.
    pub gamma: Vec<f64>,
    /// Convergence-rate slack per estimated node, `gamma - 2 * max sup-norm bound`.
    pub tau: Vec<f64>,
    /// Boundary-layer width of the saturated sign.
    pub epsilon: f64,
    /// Sup-norm bound of each node's local set.
    pub sup_bounds: Vec<f64>,
    /// Extreme eigenvalues of `L0 + B` grounded at each node.
    pub lambda_min: Vec<f64>,
    pub lambda_max: Vec<f64>,
    /// Finite-time bound per estimated node and its maximum.
    pub te_nodes: Vec<f64>,
    pub te_bound: f64,
}

/// Gains from the estimator rule: `gamma = 2 S (1 + margin)` with `S` the largest
/// sup-norm bound over all local sets, and the finite-time bound
/// `sqrt(2) N lambda_max |x|^2 / (tau lambda_min)` with `|x|^2 <= p S_r^2`.
///
/// The boundary layer is `max(gamma h lambda_max, MIN_EPSILON)`, which keeps the
/// explicit Euler map inside the layer a contraction for step `h`.
pub fn estimator_gains(game: &ClusterGame, margin: f64, step: f64) -> Result<EstimatorConfig, EstimatorError> {
    if !(margin > 0.0) {
        return Err(EstimatorError::Margin(margin));
    }
    if !(step > 0.0) {
        return Err(EstimatorError::Step(step));
    }
    let nodes = game.nodes();
    let mut sup_bounds = Vec::with_capacity(nodes);
    for node in 0..nodes {
        match game.players[node].set().sup_norm_bound() {
            Some(b) => sup_bounds.push(b),
            None => {
                let (j, i) = game.layout.player_of(node);
                return Err(EstimatorError::Unbounded { cluster: j + 1, player: i + 1 });
            }
        }
    }
    let s_max = sup_bounds.iter().fold(0.0f64, |m, &v| m.max(v));
    let gamma_all = 2.0 * s_max * (1.0 + margin);
    let tau_all = gamma_all - 2.0 * s_max;
    let p = game.p() as f64;

    let mut lambda_min = Vec::with_capacity(nodes);
    let mut lambda_max = Vec::with_capacity(nodes);
    let mut te_nodes = Vec::with_capacity(nodes);
    for r in 0..nodes {
        let mut b = vec![0.0; nodes];
        b[r] = 1.0;
        let gl = GroundedLaplacian::new(&game.global, &b)?;
        let norm2 = p * sup_bounds[r] * sup_bounds[r];
        te_nodes.push(
            std::f64::consts::SQRT_2 * nodes as f64 * gl.lambda_max * norm2 / (tau_all * gl.lambda_min),
        );
        lambda_min.push(gl.lambda_min);
        lambda_max.push(gl.lambda_max);
    }
    let lmax = lambda_max.iter().fold(0.0f64, |m, &v| m.max(v));
    Ok(EstimatorConfig {
        gamma: vec![gamma_all; nodes],
        tau: vec![tau_all; nodes],
        epsilon: (gamma_all * step * lmax).max(MIN_EPSILON),
        sup_bounds,
        lambda_min,
        lambda_max,
        te_bound: te_nodes.iter().fold(0.0f64, |m, &v| m.max(v)),
        te_nodes,
    })
}

/// Saturated sign: `v / eps` clipped to `[-1, 1]`.
pub fn sat_sign(v: f64, eps: f64) -> f64 {
    (v / eps).clamp(-1.0, 1.0)
}

/// Time derivative of the estimate block.
///
/// `gamma` holds one gain per estimated node; node `r` is grounded to the truth
/// only at itself.
pub fn estimator_rhs(xhat: &[f64], x: &[f64], g0: &Graph, gamma: &[f64], epsilon: f64, p: usize, out: &mut [f64]) {
    let nodes = g0.node_count();
    let q = x.len();
    assert_eq!(q, nodes * p, "decision length must be nodes * p");
    assert_eq!(xhat.len(), nodes * q, "estimate block must be nodes * q");
    assert_eq!(out.len(), xhat.len());
    for i in 0..nodes {
        let row = &xhat[i * q..(i + 1) * q];
        for s in 0..q {
            let r = s / p;
            let mine = row[s];
            let mut arg = 0.0;
            for &(w, a) in g0.neighbors(i) {
                arg += a * (mine - xhat[w * q + s]);
            }
            if r == i {
                arg += mine - x[s];
            }
            out[i * q + s] = -gamma[r] * sat_sign(arg, epsilon);
        }
    }
}

/// Largest estimation error over all nodes and targets.
pub fn consensus_error(xhat: &[f64], x: &[f64]) -> f64 {
    let q = x.len();
    xhat.chunks(q)
        .flat_map(|row| row.iter().zip(x).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}
