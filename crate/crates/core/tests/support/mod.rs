//! Fixtures shared by the integration suites: published values, reference
//! solvers that do not use the library, and seeded instance generators.
#![allow(dead_code)]

use clustergne::expr::{Expr, VarRef};
use clustergne::game::ClusterGame;
use clustergne::sets::ConvexSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;

pub const EX1_P_STAR: [f64; 12] = [
    17.1084, 16.2811, 15.7198, 15.3854, 20.6529, 20.1174, 19.4846, 18.7017, 20.0000, 25.0000, 24.0853, 22.4651,
];

pub const EX2_X_STAR: [f64; 18] = [
    1.8074, 1.4228, 1.7878, 2.0000, 5.0000, 0.0, 0.6090, 3.1880, 0.5000, 2.2500, 0.4537, 2.5463, 2.5084, 2.7416,
    4.5979, 0.7973, 0.6861, 0.8866,
];

/// Plant data: quadratic and linear cost coefficients, bounds, company caps.
pub const EX1_QUAD: [f64; 12] = [53.0, 55.0, 57.0, 59.0, 43.5, 45.0, 46.5, 48.5, 33.5, 35.0, 37.5, 40.0];
pub const EX1_LIN: [f64; 12] = [3.0, 5.0, 2.0, 1.0, 3.5, 6.0, 4.5, 2.5, 1.5, 1.0, 10.0, 3.5];
pub const EX1_LO: [f64; 12] = [5.0, 5.0, 5.0, 5.0, 10.0, 10.0, 10.0, 10.0, 15.0, 15.0, 15.0, 15.0];
pub const EX1_HI: [f64; 12] = [30.0, 35.0, 40.0, 45.0, 25.0, 30.0, 35.0, 40.0, 20.0, 25.0, 30.0, 35.0];
pub const EX1_CAPS: [f64; 3] = [80.0, 100.0, 110.0];
pub const EX1_DEMAND: f64 = 235.0;
pub const EX1_INTERCEPT: f64 = 80.0;
pub const EX1_X0: [f64; 12] = [10.0, 10.0, 10.0, 10.0, 15.0, 15.0, 15.0, 15.0, 20.0, 20.0, 20.0, 20.0];

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Plant outputs at demand price `sigma`, given total output `total`.
fn ex1_response(sigma: f64, total: f64) -> Vec<f64> {
    (0..12)
        .map(|i| ((EX1_INTERCEPT - total + sigma - EX1_LIN[i]) / (2.0 * EX1_QUAD[i] + 1.0)).clamp(EX1_LO[i], EX1_HI[i]))
        .collect()
}

/// Nash outputs for a fixed demand price: the total solves `S = sum P_i(S)`,
/// whose right side is nonincreasing in `S`.
fn ex1_nash(sigma: f64) -> Vec<f64> {
    let (mut lo, mut hi) = (0.0, 1000.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ex1_response(sigma, mid).iter().sum::<f64>() > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ex1_response(sigma, 0.5 * (lo + hi))
}

/// Variational equilibrium of the electricity market under a common demand
/// price, by bisection on that price. Returns the outputs and the price.
/// Panics if a company cap would bind, which the closed form ignores.
pub fn ex1_equilibrium() -> (Vec<f64>, f64) {
    let total = |s: f64| ex1_nash(s).iter().sum::<f64>();
    let (p, sigma) = if total(0.0) >= EX1_DEMAND {
        (ex1_nash(0.0), 0.0)
    } else {
        let (mut lo, mut hi) = (0.0, 1e5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < EX1_DEMAND {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        (ex1_nash(s), s)
    };
    for (j, cap) in EX1_CAPS.iter().enumerate() {
        let used: f64 = p[4 * j..4 * j + 4].iter().sum();
        assert!(used < *cap, "company {} at capacity", j + 1);
    }
    (p, sigma)
}

/// Central difference with one Richardson step.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], k: usize) -> f64 {
    let d = |h: f64| {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[k] += h;
        b[k] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    };
    let h = 1e-3 * x[k].abs().max(1.0);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

pub fn var(k: usize) -> Expr {
    Expr::Var(VarRef::new(0, 0, k))
}

/// Random smooth expression over `vars` coordinates of player (1, 1). Guards
/// keep every operation inside its domain for all real inputs.
pub fn random_expr(rng: &mut impl Rng, depth: usize, vars: usize) -> Expr {
    use Expr::*;
    let b = Box::new;
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.7) {
            var(rng.gen_range(0..vars))
        } else {
            Const((rng.gen_range(-2.0f64..2.0) * 100.0).round() / 100.0)
        };
    }
    let choice = rng.gen_range(0..11);
    let exponent = (rng.gen_range(-1.5f64..1.5) * 10.0).round() / 10.0;
    let mut sub = || random_expr(rng, depth - 1, vars);
    let one_plus_sq = |e: Expr| Add(b(Const(1.0)), b(Pow(b(e), 2.0)));
    match choice {
        0 => Add(b(sub()), b(sub())),
        1 => Sub(b(sub()), b(sub())),
        2 => Mul(b(sub()), b(sub())),
        3 => {
            let (n, d) = (sub(), sub());
            Div(b(n), b(one_plus_sq(d)))
        }
        4 => Pow(b(sub()), 2.0),
        10 => Pow(b(sub()), 3.0),
        5 => {
            let u = sub();
            Exp(b(Div(b(u.clone()), b(one_plus_sq(u)))))
        }
        6 => Ln(b(one_plus_sq(sub()))),
        7 => Sqrt(b(one_plus_sq(sub()))),
        8 => Neg(b(sub())),
        _ => Pow(b(one_plus_sq(sub())), exponent),
    }
}

/// Layout of a random game.
#[derive(Debug, Clone)]
pub struct RandomShape {
    pub sizes: Vec<usize>,
    pub p: usize,
}

/// A seeded strongly monotone quadratic game with box sets and affine
/// constraints, written as a scenario document.
///
/// Each cost is `a/2 |x|^2 + c.x + sum_m x.B x_m`; `a` dominates the
/// symmetrized couplings row by row, so the pseudogradient Jacobian has a
/// positive definite symmetric part. Constraints are built around an interior
/// point with slack at least 0.1, and box bounds sit on multiples of 0.5.
pub fn random_quadratic_game(seed: u64, max_q: usize) -> (String, RandomShape) {
    assert!(max_q >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = if max_q >= 4 && rng.gen_bool(0.3) { 2 } else { 1 };
    let nodes = rng.gen_range(2..=max_q / p);
    let clusters = rng.gen_range(2..=nodes.min(3));
    let mut sizes = vec![1; clusters];
    for _ in clusters..nodes {
        let j = rng.gen_range(0..clusters);
        sizes[j] += 1;
    }
    let q = nodes * p;

    let mut coupling = vec![vec![0.0; q]; q];
    for r in 0..q {
        for c in 0..q {
            if r / p != c / p && rng.gen_bool(0.5) {
                coupling[r][c] = (rng.gen_range(-1.0f64..1.0) * 100.0).round() / 100.0;
            }
        }
    }
    let mut curvature = vec![0.0; nodes];
    for (k, a) in curvature.iter_mut().enumerate() {
        let mut worst = 0.0f64;
        for r in k * p..(k + 1) * p {
            let row: f64 = (0..q).map(|c| 0.5 * (coupling[r][c] + coupling[c][r]).abs()).sum();
            worst = worst.max(row);
        }
        *a = ((0.2 + worst + rng.gen_range(0.0..1.0)) * 100.0).round() / 100.0;
    }

    let mut lo = vec![0.0; q];
    let mut hi = vec![0.0; q];
    let mut interior = vec![0.0; q];
    let mut x0 = vec![0.0; q];
    for s in 0..q {
        lo[s] = -0.5 * rng.gen_range(1..=4) as f64;
        hi[s] = 0.5 * rng.gen_range(1..=4) as f64;
        interior[s] = lo[s] + 0.25 + rng.gen_range(0.0..1.0) * (hi[s] - lo[s] - 0.5);
        x0[s] = rng.gen_range(lo[s]..=hi[s]);
    }
    let d_dim = rng.gen_range(0..=1usize);
    let h_dim = rng.gen_range(0..=2usize);
    let name = |s: usize| {
        let node = s / p;
        let (mut j, mut i) = (0, node);
        while i >= sizes[j] {
            i -= sizes[j];
            j += 1;
        }
        format!("x[{}][{}][{}]", j + 1, i + 1, s % p + 1)
    };
    // affine row a.x_k - (a.z_k + slack)
    let affine = |rng: &mut ChaCha8Rng, k: usize, slack: f64| {
        let mut text = String::new();
        let mut offset = slack;
        for c in 0..p {
            let w = (rng.gen_range(-1.0f64..1.0) * 100.0).round() / 100.0;
            offset += w * interior[k * p + c];
            write!(text, "{w} * {} + ", name(k * p + c)).unwrap();
        }
        write!(text, "{}", -offset).unwrap();
        text
    };

    let mut doc = String::new();
    writeln!(doc, "[meta]\nname = \"random-{seed}\"\n").unwrap();
    writeln!(doc, "[dimensions]\nclusters = {clusters}\nplayers = {sizes:?}\np = {p}\nd = {d_dim}\nh = {h_dim}\n").unwrap();
    let global_slack: Vec<f64> = (0..h_dim).map(|_| rng.gen_range(0.1..0.6)).collect();
    let mut node = 0;
    for (j, &n) in sizes.iter().enumerate() {
        let cluster_slack: Vec<f64> = (0..d_dim).map(|_| rng.gen_range(0.1..0.6)).collect();
        for i in 0..n {
            let k = node;
            let mut cost = String::new();
            for c in 0..p {
                let s = k * p + c;
                let lin = (rng.gen_range(-3.0f64..3.0) * 100.0).round() / 100.0;
                write!(cost, "{} * {}^2 + {lin} * {} + ", curvature[k] / 2.0, name(s), name(s)).unwrap();
                for t in 0..q {
                    if coupling[s][t] != 0.0 {
                        write!(cost, "{} * {} * {} + ", coupling[s][t], name(s), name(t)).unwrap();
                    }
                }
            }
            cost.push('0');
            writeln!(doc, "[players.{}.{}]", j + 1, i + 1).unwrap();
            writeln!(doc, "cost = \"{cost}\"").unwrap();
            if rng.gen_bool(0.5) {
                let slack = rng.gen_range(0.1..0.6);
                writeln!(doc, "g = [\"{}\"]", affine(&mut rng, k, slack)).unwrap();
            }
            let rows: Vec<String> =
                cluster_slack.iter().map(|s| format!("\"{}\"", affine(&mut rng, k, s / n as f64))).collect();
            writeln!(doc, "d = [{}]", rows.join(", ")).unwrap();
            let rows: Vec<String> =
                global_slack.iter().map(|s| format!("\"{}\"", affine(&mut rng, k, s / nodes as f64))).collect();
            writeln!(doc, "h = [{}]", rows.join(", ")).unwrap();
            let bounds: Vec<String> = (k * p..(k + 1) * p).map(|s| format!("{}..{}", lo[s], hi[s])).collect();
            writeln!(doc, "set = \"box {}\"", bounds.join(" ")).unwrap();
            writeln!(doc, "x0 = {:?}", &x0[k * p..(k + 1) * p]).unwrap();
            writeln!(doc, "slater = {:?}\n", &interior[k * p..(k + 1) * p]).unwrap();
            node += 1;
        }
    }
    let mut edges: Vec<(usize, usize)> = (1..nodes).map(|k| (k, k + 1)).collect();
    for a in 1..=nodes {
        for b in a + 2..=nodes {
            if rng.gen_bool(0.3) {
                edges.push((a, b));
            }
        }
    }
    let list: Vec<String> = edges.iter().map(|(a, b)| format!("[{a}, {b}]")).collect();
    writeln!(doc, "[graphs]\nglobal = [{}]\n", list.join(", ")).unwrap();
    writeln!(doc, "[sim]\nstep = 0.005\nhorizon = 20000.0").unwrap();
    (doc, RandomShape { sizes, p })
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Worst relative error of the pseudogradient against central differences of
/// each owner's cost.
pub fn pseudogradient_error(game: &ClusterGame, x: &[f64]) -> f64 {
    let f = game.pseudogradient(x).unwrap();
    let mut worst = 0.0f64;
    for node in 0..game.nodes() {
        let cost = |y: &[f64]| game.cost(node, y).unwrap();
        for s in game.layout.block(node) {
            worst = worst.max(rel_err(f[s], central_diff(&cost, x, s)));
        }
    }
    worst
}

/// Worst relative error of every local constraint Jacobian row.
pub fn constraint_error(game: &ClusterGame, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for node in 0..game.nodes() {
        let xo = &x[game.layout.block(node)];
        for which in ['g', 'd', 'h'] {
            let jac = game.local_jacobian(node, which, xo).unwrap();
            for (row, grad) in jac.iter().enumerate() {
                let value = |y: &[f64]| {
                    let v = match which {
                        'g' => game.g_values(node, y),
                        'd' => game.d_values(node, y),
                        _ => game.h_values(node, y),
                    };
                    v.unwrap()[row]
                };
                for k in 0..xo.len() {
                    worst = worst.max(rel_err(grad[k], central_diff(&value, xo, k)));
                }
            }
        }
    }
    worst
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A random set of dimension `n` containing `anchor` strictly.
pub fn member(rng: &mut ChaCha8Rng, anchor: &[f64], kind: usize) -> ConvexSet {
    let n = anchor.len();
    match kind {
        0 => {
            let lower = anchor.iter().map(|a| a - rng.gen_range(0.1..3.0)).collect();
            let upper = anchor.iter().map(|a| a + rng.gen_range(0.1..3.0)).collect();
            ConvexSet::boxed(lower, upper).unwrap()
        }
        1 => {
            let center: Vec<f64> = anchor.iter().map(|a| a + rng.gen_range(-0.5..0.5)).collect();
            let r = dist(&center, anchor) + rng.gen_range(0.1..3.0);
            ConvexSet::ball(center, r).unwrap()
        }
        _ => {
            let mut normal: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if normal.iter().all(|v| v.abs() < 1e-3) {
                normal[0] = 1.0;
            }
            let offset = dot(&normal, anchor) + rng.gen_range(0.05..2.0);
            ConvexSet::halfspace(normal, offset).unwrap()
        }
    }
}

pub fn random_set(seed: u64) -> (ConvexSet, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let anchor: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let set = match rng.gen_range(0..5) {
        k @ 0..=2 => member(&mut rng, &anchor, k),
        _ => {
            let m = rng.gen_range(2..=3);
            let members = (0..m)
                .map(|k| {
                    let kind = if k == 0 { rng.gen_range(0..2) } else { rng.gen_range(0..3) };
                    member(&mut rng, &anchor, kind)
                })
                .collect();
            ConvexSet::intersection(members).unwrap()
        }
    };
    (set, n)
}

pub fn point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect()
}
