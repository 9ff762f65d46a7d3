mod support;

use clustergne::expr::{grad, parse_expr, Expr, VarRef};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{central_diff, random_expr};

const VARS: usize = 3;

/// Expressions whose value at the point exceeds this are skipped: central
/// differences lose all accuracy there.
const MAX_VALUE: f64 = 1e6;

fn instance(seed: u64) -> (Expr, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = random_expr(&mut rng, 4, VARS);
    let x = (0..VARS).map(|_| rng.gen_range(-2.0..2.0)).collect();
    (e, x)
}

fn tree_eval(e: &Expr, x: &[f64]) -> f64 {
    e.eval(&|v: VarRef| Some(x[v.coord])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn forward_mode_matches_central_differences(seed in any::<u64>()) {
        let (e, x) = instance(seed);
        prop_assume!(tree_eval(&e, &x).abs() < MAX_VALUE);
        let wrt: Vec<VarRef> = (0..VARS).map(|k| VarRef::new(0, 0, k)).collect();
        let analytic = grad(&e, &wrt, &|v: VarRef| Some(x[v.coord])).unwrap();
        let f = |p: &[f64]| tree_eval(&e, p);
        for k in 0..VARS {
            let fd = central_diff(&f, &x, k);
            let rel = (analytic[k] - fd).abs() / fd.abs().max(1.0);
            prop_assert!(rel < 1e-5, "{e} at {x:?}: d{k} {} vs {fd}", analytic[k]);
        }
    }

    #[test]
    fn tape_agrees_with_tree(seed in any::<u64>()) {
        let (e, x) = instance(seed);
        let tape = e.compile(&|v: VarRef| Some(v.coord)).unwrap();
        let v = tape.eval(&x).unwrap();
        let t = tree_eval(&e, &x);
        prop_assert!((v - t).abs() <= 1e-12 * t.abs().max(1.0));
        let wrt: Vec<VarRef> = (0..VARS).map(|k| VarRef::new(0, 0, k)).collect();
        let tree_grad = grad(&e, &wrt, &|r: VarRef| Some(x[r.coord])).unwrap();
        let mut tape_grad = vec![0.0; VARS];
        tape.grad_range(&x, 0, &mut tape_grad).unwrap();
        for k in 0..VARS {
            prop_assert!((tape_grad[k] - tree_grad[k]).abs() <= 1e-12 * tree_grad[k].abs().max(1.0));
        }
    }

    #[test]
    fn printed_form_parses_back(seed in any::<u64>()) {
        let (e, _) = instance(seed);
        let back = parse_expr(&e.to_string()).unwrap();
        prop_assert_eq!(back, e);
    }
}

#[test]
fn bilinear_term_partial() {
    let e = parse_expr("x[1][3][1] * x[2][2][1]").unwrap();
    let point = |v: VarRef| Some(if v.cluster == 1 { 0.5 } else { 2.0 });
    let g = grad(&e, &[VarRef::new(0, 2, 0)], &point).unwrap();
    assert_eq!(g, vec![0.5]);
}
