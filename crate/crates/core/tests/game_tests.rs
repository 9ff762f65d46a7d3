mod support;

use clustergne::scenario::{load_builtin, BUILTINS};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

#[test]
fn electricity_pseudogradient_at_initial_point() {
    let s = load_builtin("electricity_market").unwrap();
    assert_eq!(s.initial.x, EX1_X0.to_vec());
    assert!(pseudogradient_error(&s.game, &EX1_X0) < 1e-6);
}

#[test]
fn builtin_derivatives_at_random_points() {
    for name in BUILTINS {
        let s = load_builtin(name).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = s.game.sample_decisions(&mut rng).unwrap();
            assert!(pseudogradient_error(&s.game, &x) < 1e-5, "{name} cost at {x:?}");
            assert!(constraint_error(&s.game, &x) < 1e-5, "{name} constraints at {x:?}");
        }
    }
}

#[test]
fn true_estimates_reproduce_pseudogradient_blocks() {
    for name in BUILTINS {
        let s = load_builtin(name).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = s.game.sample_decisions(&mut rng).unwrap();
        let f = s.game.pseudogradient(&x).unwrap();
        for node in 0..s.game.nodes() {
            let block = s.game.layout.block(node);
            let local = s.game.local_pseudogradient(node, &x[block.clone()], &x).unwrap();
            assert_eq!(local, f[block].to_vec());
        }
    }
}

#[test]
fn nine_player_local_gradient_with_zero_estimates() {
    let s = load_builtin("nine_player").unwrap();
    let node = s.game.layout.node(1, 1);
    let block = s.game.layout.block(node);
    let own = s.initial.x[block.clone()].to_vec();
    let local = s.game.local_pseudogradient(node, &own, &vec![0.0; s.game.q()]).unwrap();
    let mut frozen = vec![0.0; s.game.q()];
    frozen[block.clone()].copy_from_slice(&own);
    let cost = |y: &[f64]| s.game.cost(node, y).unwrap();
    for (k, s_idx) in block.enumerate() {
        assert!(rel_err(local[k], central_diff(&cost, &frozen, s_idx)) < 1e-6);
    }
}

#[test]
fn electricity_kkt_at_reference_solution() {
    let s = load_builtin("electricity_market").unwrap();
    let (p, sigma) = ex1_equilibrium();
    let cert = s.game.fit_multipliers(&p).unwrap();
    assert!(cert.residual.max() < 1e-6, "{:?}", cert.residual);
    assert!((cert.sigma[0] - sigma).abs() < 1e-6 * sigma);
    assert!(cert.phi.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn electricity_published_point_is_not_stationary() {
    let s = load_builtin("electricity_market").unwrap();
    let total: f64 = EX1_P_STAR.iter().sum();
    assert!((total - 235.0017).abs() < 1e-9);

    // the demand row is slack by 0.0017, so the default fit leaves it out
    let cert = s.game.fit_multipliers(&EX1_P_STAR).unwrap();
    assert_eq!(cert.sigma[0], 0.0);
    assert!(cert.residual.stationarity > 1.0);

    // with a band wide enough to include it the price is positive, but the
    // published outputs are still far from stationary
    let (wide, _) = s.game.fit_multipliers_with(&EX1_P_STAR, 1e-2, 1e-6).unwrap();
    assert!(wide.sigma[0] > 0.0);
    assert!(wide.residual.stationarity > 1e-3);

    let zero = clustergne::game::KktCertificate::zeros(&s.game);
    assert!(s.game.kkt_residual(&EX1_P_STAR, &zero).unwrap().stationarity > 0.1);

    let (p, _) = ex1_equilibrium();
    let gap = max_abs_diff(&p, &EX1_P_STAR);
    assert!(gap > 0.1 && gap < 0.2, "{gap}");
}

#[test]
fn nine_player_published_point_violates_global_constraint() {
    let s = load_builtin("nine_player").unwrap();
    let cv = s.game.constraint_values(&EX2_X_STAR).unwrap();
    // sum over players of the first global row
    assert!((cv.h[0] - 0.2997).abs() < 1e-9, "{:?}", cv.h);
    // the local sets hold up to the four printed decimals
    assert!(s.game.set_violation(&EX2_X_STAR) < 1e-4);
}

#[test]
fn electricity_monotonicity_matches_jacobian() {
    let s = load_builtin("electricity_market").unwrap();
    // d F_i / d P_k = (2 gamma_i + 1) [i = k] + 1
    let diag = DVector::from_iterator(12, EX1_QUAD.iter().map(|g| 2.0 * g + 1.0));
    let jac = DMatrix::from_diagonal(&diag) + DMatrix::from_element(12, 12, 1.0);
    let lmin = SymmetricEigen::new(jac).eigenvalues.min();
    let probe = s.game.monotonicity_probe(200, 3).unwrap();
    assert!(probe >= 2.0);
    assert!((probe - lmin).abs() < 1e-3 * lmin, "{probe} vs {lmin}");
}

#[test]
fn nine_player_is_not_monotone() {
    let s = load_builtin("nine_player").unwrap();
    // coordinates x_{3a}^1 and x_{2a}^2 meet in the symmetric block
    // [[c, 1], [1, 2 + e]] with c <= 0.0025 and e <= 0.1, whose determinant
    // is negative
    let (c, e): (f64, f64) = (0.0025, 0.1);
    assert!(c * (2.0 + e) - 1.0 < 0.0);
    assert!(s.game.monotonicity_probe(200, 3).unwrap() < 0.0);
}
