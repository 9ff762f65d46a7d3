mod support;

use clustergne::dynamics::*;
use clustergne::estimator::EstimatorConfig;
use clustergne::game::ClusterGame;
use clustergne::oracle::{equilibrium_state, flow_residual};
use clustergne::scenario::{assemble, from_text, load_builtin, Scenario, ScenarioFile};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unchecked(text: &str) -> ClusterGame {
    assemble(&ScenarioFile::parse(text).unwrap()).unwrap().game
}

fn plain_estimator(nodes: usize) -> EstimatorConfig {
    EstimatorConfig {
        gamma: vec![1.0; nodes],
        tau: vec![1.0; nodes],
        epsilon: 1e-6,
        sup_bounds: vec![],
        lambda_min: vec![],
        lambda_max: vec![],
        te_nodes: vec![],
        te_bound: 1.0,
    }
}

/// State with exact estimates.
fn informed(game: &ClusterGame, x: Vec<f64>) -> AugmentedState {
    let mut s = AugmentedState::initial(game, x).unwrap();
    s.xhat = (0..game.nodes()).flat_map(|_| s.x.clone()).collect();
    s
}

fn inf_norm(v: &AugmentedState) -> f64 {
    v.theta().iter().chain(&v.xhat).fold(0.0f64, |m, a| m.max(a.abs()))
}

fn ex1_equilibrium_state(s: &Scenario) -> AugmentedState {
    let (p, _) = support::ex1_equilibrium();
    let cert = s.game.fit_multipliers(&p).unwrap();
    equilibrium_state(&s.game, &p, &cert).unwrap()
}

const TWO_WHOLE: &str = r#"
[meta]
name = "two"
[dimensions]
clusters = 2
players = [1, 1]
p = 1
d = 0
h = 0
[players.1.1]
cost = "x[1][1][1]^2"
set = "whole 1"
x0 = [1.0]
[players.2.1]
cost = "(x[2][1][1] - x[1][1][1])^2"
set = "whole 1"
x0 = [1.0]
[graphs]
global = [[1, 2]]
"#;

fn one_with_g(g: &str) -> ClusterGame {
    unchecked(&format!(
        "[meta]\nname = \"one\"\n[dimensions]\nclusters = 1\nplayers = [1]\np = 1\nd = 0\nh = 0\n\
         [players.1.1]\ncost = \"x[1][1][1]^2\"\ng = [\"{g}\"]\nset = \"whole 1\"\nx0 = [1.0]\n[graphs]\nglobal = []\n"
    ))
}

#[test]
fn unconstrained_decision_derivative_by_hand() {
    let game = unchecked(TWO_WHOLE);
    let s = informed(&game, vec![1.0, 1.0]);
    let d = flow_with(&game, &s, &plain_estimator(2), true).unwrap().derivative(&s);
    assert_eq!(d.x, vec![-2.0, 0.0]);
    assert!(d.xhat.iter().all(|&v| v == 0.0));
}

#[test]
fn local_multiplier_line() {
    let game = one_with_g("x[1][1][1] - 0.5");
    let mut s = informed(&game, vec![1.0]);
    s.lambda = vec![1.0];
    let f = flow_with(&game, &s, &plain_estimator(1), true).unwrap();
    assert_eq!(f.derivative(&s).lambda, vec![0.5]);
    assert!((step_euler(&game, &s, &f, 0.1).unwrap().lambda[0] - 1.05).abs() < 1e-15);

    let frozen = flow_with(&game, &s, &plain_estimator(1), false).unwrap();
    assert_eq!(frozen.derivative(&s).lambda, vec![0.0]);
    assert_eq!(step_euler(&game, &s, &frozen, 0.1).unwrap().lambda, vec![1.0]);

    let game = one_with_g("x[1][1][1] - 2");
    let mut s = informed(&game, vec![1.0]);
    s.lambda = vec![0.0];
    let f = flow_with(&game, &s, &plain_estimator(1), true).unwrap();
    assert_eq!(step_euler(&game, &s, &f, 0.1).unwrap().lambda, vec![0.0]);
}

#[test]
fn unit_step_lands_on_projection() {
    let s = load_builtin("nine_player").unwrap();
    let cfg = s.config().unwrap();
    let f = flow(&s.game, &s.initial, &cfg, false).unwrap();
    let next = step_euler(&s.game, &s.initial, &f, 1.0).unwrap();
    assert_eq!(next.x, f.x_target);
    assert!(step_euler(&s.game, &s.initial, &f, 1.5).is_err());
    assert!(step_euler(&s.game, &s.initial, &f, 0.0).is_err());
}

#[test]
fn electricity_equilibrium_is_a_rest_point() {
    let s = load_builtin("electricity_market").unwrap();
    let eq = ex1_equilibrium_state(&s);
    let cfg = s.config().unwrap();
    assert!(inf_norm(&flow_rhs(&s.game, &eq, &cfg, true).unwrap()) < 1e-6);
    assert!(flow_residual(&s.game, &eq).unwrap() < 1e-6);
    assert!(stationarity_residual(&s.game, &eq).unwrap() < 1e-6);
    assert!(lyapunov_value(&s.game, &eq, &eq).unwrap().abs() < 1e-9);
}

#[test]
fn electricity_initial_state_is_far_from_rest() {
    let s = load_builtin("electricity_market").unwrap();
    assert!(stationarity_residual(&s.game, &s.initial).unwrap() > 1.0);
}

#[test]
fn tiny_equilibrium_with_zero_duals_has_zero_residual() {
    let game = unchecked(TWO_WHOLE);
    let s = informed(&game, vec![0.0, 0.0]);
    assert_eq!(stationarity_residual(&game, &s).unwrap(), 0.0);
}

#[test]
fn lyapunov_dominates_distance() {
    let s = load_builtin("electricity_market").unwrap();
    let eq = ex1_equilibrium_state(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let st = random_state(&s.game, &mut rng);
        let v = lyapunov_value(&s.game, &st, &eq).unwrap();
        let d2: f64 = st.theta().iter().zip(eq.theta()).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(v >= 0.5 * d2 - 1e-8 * d2.max(1.0), "{v} < {}", 0.5 * d2);
    }
}

fn random_state(game: &ClusterGame, rng: &mut ChaCha8Rng) -> AugmentedState {
    let x = game.sample_decisions(rng).unwrap();
    let mut s = informed(game, x);
    for v in s.lambda.iter_mut().chain(s.mu.iter_mut()).chain(s.eta.iter_mut()) {
        *v = rng.gen_range(0.0..5.0);
    }
    for v in s.psi.iter_mut().chain(s.beta.iter_mut()) {
        *v = rng.gen_range(-5.0..5.0);
    }
    s
}

fn operator_gap(game: &ClusterGame, a: &AugmentedState, b: &AugmentedState) -> f64 {
    let fa = extended_operator(game, a).unwrap();
    let fb = extended_operator(game, b).unwrap();
    let (ta, tb) = (a.theta(), b.theta());
    (0..ta.len()).map(|i| (ta[i] - tb[i]) * (fa[i] - fb[i])).sum()
}

#[test]
fn extended_operator_monotone_for_electricity() {
    let s = load_builtin("electricity_market").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let (a, b) = (random_state(&s.game, &mut rng), random_state(&s.game, &mut rng));
        assert!(operator_gap(&s.game, &a, &b) >= -1e-8);
    }
}

#[test]
fn extended_operator_not_monotone_for_nine_player() {
    let s = load_builtin("nine_player").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = f64::INFINITY;
    for _ in 0..2000 {
        let a = random_state(&s.game, &mut rng);
        let mut b = a.clone();
        // move only x_{3a}^1 and x_{2a}^2 in opposite directions
        let (u, w) = (s.game.layout.block(2).start, s.game.layout.block(4).start);
        let dx = rng.gen_range(-0.05..0.05);
        b.x[u] += dx;
        b.x[w] -= dx;
        if s.game.set_violation(&b.x) > 0.0 {
            continue;
        }
        b.xhat = (0..s.game.nodes()).flat_map(|_| b.x.clone()).collect();
        worst = worst.min(operator_gap(&s.game, &a, &b));
    }
    assert!(worst < 0.0, "{worst}");
}

#[test]
fn runs_are_deterministic() {
    let s = load_builtin("nine_player").unwrap();
    let mut o = s.options.clone();
    o.horizon = 5.0;
    let cfg = s.config_with(&o).unwrap();
    let a = integrate(&s.game, &s.initial, &cfg, None).unwrap();
    let b = integrate(&s.game, &s.initial, &cfg, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fixed_activation_time_is_honored() {
    let s = load_builtin("electricity_market").unwrap();
    let mut o = s.options.clone();
    o.horizon = 3.0;
    o.te_mode = TeMode::Fixed;
    o.te = Some(1.0);
    let cfg = s.config_with(&o).unwrap();
    let mut first_active = None;
    let mut obs = |e: &StepEvent<'_>| {
        if e.active && first_active.is_none() {
            first_active = Some(e.previous.t);
        }
    };
    let r = integrate(&s.game, &s.initial, &cfg, Some(&mut obs)).unwrap();
    let t = r.activation_time.unwrap();
    assert!((1.0..1.0 + cfg.step + 1e-12).contains(&t), "{t}");
    assert_eq!(first_active, Some(t));

    o.te = Some(5.0);
    assert!(s.config_with(&o).is_err());
}

/// Runs a short simulation and checks the per-step invariants.
fn check_run_invariants(s: &Scenario, opts: &SimOptions) -> Result<(), TestCaseError> {
    let cfg = s.config_with(opts).unwrap();
    let game = &s.game;
    let init = s.initial.clone();
    let mut failure: Option<String> = None;
    let (dd, hd) = (game.d_dim, game.h_dim);
    let sums = |v: &[f64], dim: usize, nodes: std::ops::Range<usize>| -> Vec<f64> {
        (0..dim).map(|k| nodes.clone().map(|n| v[n * dim + k]).sum()).collect()
    };
    let mut obs = |e: &StepEvent<'_>| {
        if failure.is_some() {
            return;
        }
        let (prev, next) = (e.previous, e.state);
        if game.set_violation(&next.x) > 1e-8 {
            failure = Some(format!("step {}: decision left its set", e.step));
        } else if next.min_dual() < 0.0 {
            failure = Some(format!("step {}: negative dual", e.step));
        } else if !e.active {
            let same = next.lambda == init.lambda
                && next.mu == init.mu
                && next.psi == init.psi
                && next.eta == init.eta
                && next.beta == init.beta;
            if !same {
                failure = Some(format!("step {}: dual moved before activation", e.step));
            }
        } else {
            for j in 0..game.layout.clusters() {
                let r = game.layout.cluster_nodes(j);
                let (a, b) = (sums(&prev.psi, dd, r.clone()), sums(&next.psi, dd, r));
                if a.iter().zip(&b).any(|(u, v)| (u - v).abs() > 1e-10) {
                    failure = Some(format!("step {}: cluster {j} psi sum drifted", e.step));
                }
            }
            let all = 0..game.nodes();
            let (a, b) = (sums(&prev.beta, hd, all.clone()), sums(&next.beta, hd, all));
            if a.iter().zip(&b).any(|(u, v)| (u - v).abs() > 1e-10) {
                failure = Some(format!("step {}: beta sum drifted", e.step));
            }
        }
    };
    integrate(game, &init, &cfg, Some(&mut obs)).unwrap();
    match failure {
        Some(f) => Err(TestCaseError::fail(f)),
        None => Ok(()),
    }
}

#[test]
fn builtin_runs_keep_invariants() {
    for name in clustergne::scenario::BUILTINS {
        let s = load_builtin(name).unwrap();
        let mut o = s.options.clone();
        o.horizon = 20.0;
        check_run_invariants(&s, &o).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_runs_keep_invariants(seed in any::<u64>(), fixed in any::<bool>()) {
        let (text, _) = support::random_quadratic_game(seed, 8);
        let s = from_text(&text).unwrap();
        let mut o = s.options.clone();
        o.horizon = 30.0;
        if fixed {
            o.te_mode = TeMode::Fixed;
            o.te = Some(3.0);
        }
        check_run_invariants(&s, &o)?;
    }

    #[test]
    fn random_extended_operators_are_monotone(seed in any::<u64>()) {
        let (text, _) = support::random_quadratic_game(seed, 8);
        let s = from_text(&text).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let (a, b) = (random_state(&s.game, &mut rng), random_state(&s.game, &mut rng));
            prop_assert!(operator_gap(&s.game, &a, &b) >= -1e-8);
        }
    }
}
