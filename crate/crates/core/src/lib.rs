//! Distributed generalized Nash equilibrium seeking for constrained multi-cluster games.
//!
//! Players are grouped into clusters that cooperate internally and compete with
//! each other. Each player owns a decision in a convex set, subject to local
//! inequality constraints, constraints coupling its cluster, and constraints
//! coupling everyone. [`dynamics`] integrates a projected primal-dual flow with
//! consensus-based dual variables and a finite-time decision estimator;
//! [`oracle`] supplies a centralized solver to check it against.

pub mod dynamics;
pub mod estimator;
pub mod expr;
pub mod game;
pub mod graph;
pub mod linalg;
pub mod oracle;
pub mod scenario;
pub mod sets;
