//! Closed convex sets with exact Euclidean projections.
//!
//! Text syntax (one set per string):
//!
//! ```text
//! box 5..30 0..inf
//! ball 2 2 2                # center coordinates, then radius
//! halfspace 1 1 6           # normal coordinates, then offset: a.x <= b
//! whole 2
//! intersect [box 0..1 0..1, halfspace 1 1 1]
//! ```

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{min_norm_solve, nnls};

use thiserror::Error;

pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;
/// Largest final change accepted when the sweep cap is reached.
pub const DYKSTRA_ACCEPT: f64 = 1e-8;
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Halfspace { normal: Vec<f64>, offset: f64 },
    Intersection(Vec<ConvexSet>),
    Whole(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: set has {expected}, point has {got}")]
    Dimension { expected: usize, got: usize },
    #[error("Dykstra projection did not converge (last change {residual:e})")]
    NotConverged { residual: f64 },
    #[error("invalid set: {0}")]
    Invalid(String),
    #[error("cannot parse set `{text}`: {msg}")]
    Parse { text: String, msg: String },
}

impl ConvexSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SetError> {
        let s = ConvexSet::Box { lower, upper };
        s.validate()?;
        Ok(s)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, SetError> {
        let s = ConvexSet::Ball { center, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self, SetError> {
        let s = ConvexSet::Halfspace { normal, offset };
        s.validate()?;
        Ok(s)
    }

    pub fn intersection(members: Vec<ConvexSet>) -> Result<Self, SetError> {
        let s = ConvexSet::Intersection(members);
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::Halfspace { normal, .. } => normal.len(),
            ConvexSet::Intersection(m) => m.first().map_or(0, |s| s.dim()),
            ConvexSet::Whole(n) => *n,
        }
    }

    pub fn validate(&self) -> Result<(), SetError> {
        let bad = |m: String| Err(SetError::Invalid(m));
        match self {
            ConvexSet::Box { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return bad("box bounds must be nonempty and of equal length".into());
                }
                for (k, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                        return bad(format!("box coordinate {}: need lower <= upper, got {l}..{u}", k + 1));
                    }
                }
            }
            ConvexSet::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return bad("ball center must be finite and nonempty".into());
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return bad(format!("ball radius must be positive, got {radius}"));
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                let n2: f64 = normal.iter().map(|a| a * a).sum();
                if normal.is_empty() || !(n2 > 0.0) || !n2.is_finite() || !offset.is_finite() {
                    return bad("halfspace normal must be finite and nonzero".into());
                }
            }
            ConvexSet::Intersection(members) => {
                if members.is_empty() {
                    return bad("intersection needs at least one member".into());
                }
                let d = members[0].dim();
                for m in members {
                    m.validate()?;
                    if m.dim() != d {
                        return bad("intersection members differ in dimension".into());
                    }
                }
            }
            ConvexSet::Whole(n) => {
                if *n == 0 {
                    return bad("whole space needs a positive dimension".into());
                }
            }
        }
        Ok(())
    }

    fn check_dim(&self, y: &[f64]) -> Result<(), SetError> {
        if y.len() != self.dim() {
            return Err(SetError::Dimension { expected: self.dim(), got: y.len() });
        }
        Ok(())
    }

    /// Euclidean projection; intersections use Dykstra's algorithm.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>, SetError> {
        self.check_dim(y)?;
        let mut out = y.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn project_in_place(&self, y: &mut [f64]) -> Result<(), SetError> {
        match self {
            ConvexSet::Box { lower, upper } => {
                for ((v, l), u) in y.iter_mut().zip(lower).zip(upper) {
                    *v = v.max(*l).min(*u);
                }
            }
            ConvexSet::Ball { center, radius } => {
                let dist = y.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                if dist > *radius {
                    let s = radius / dist;
                    for (v, c) in y.iter_mut().zip(center) {
                        *v = c + s * (*v - c);
                    }
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                let ax: f64 = normal.iter().zip(y.iter()).map(|(a, v)| a * v).sum();
                if ax > *offset {
                    let n2: f64 = normal.iter().map(|a| a * a).sum();
                    let s = (ax - offset) / n2;
                    for (v, a) in y.iter_mut().zip(normal) {
                        *v -= s * a;
                    }
                }
            }
            ConvexSet::Intersection(members) => {
                if members.len() == 1 {
                    return members[0].project_in_place(y);
                }
                if self.contains(y, 0.0)? {
                    return Ok(());
                }
                dykstra(members, y)?;
            }
            ConvexSet::Whole(_) => {}
        }
        Ok(())
    }

    /// Membership with additive slack `tol` on every defining inequality.
    pub fn contains(&self, y: &[f64], tol: f64) -> Result<bool, SetError> {
        self.check_dim(y)?;
        Ok(self.violation(y) <= tol)
    }

    /// Largest violation of any defining inequality (0 inside).
    pub fn violation(&self, y: &[f64]) -> f64 {
        match self {
            ConvexSet::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
            ConvexSet::Ball { center, radius } => {
                let dist = y.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                (dist - radius).max(0.0)
            }
            ConvexSet::Halfspace { normal, offset } => {
                let ax: f64 = normal.iter().zip(y).map(|(a, v)| a * v).sum();
                (ax - offset).max(0.0)
            }
            ConvexSet::Intersection(m) => m.iter().map(|s| s.violation(y)).fold(0.0, f64::max),
            ConvexSet::Whole(_) => 0.0,
        }
    }

    /// Smallest slack of any defining inequality (positive strictly inside).
    pub fn interior_margin(&self, y: &[f64]) -> f64 {
        match self {
            ConvexSet::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| (v - l).min(u - v))
                .fold(f64::INFINITY, f64::min),
            ConvexSet::Ball { center, radius } => {
                let dist = y.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                radius - dist
            }
            ConvexSet::Halfspace { normal, offset } => {
                offset - normal.iter().zip(y).map(|(a, v)| a * v).sum::<f64>()
            }
            ConvexSet::Intersection(m) => {
                m.iter().map(|s| s.interior_margin(y)).fold(f64::INFINITY, f64::min)
            }
            ConvexSet::Whole(_) => f64::INFINITY,
        }
    }

    /// Upper bound on `sup ||x||_inf` over the set, or `None` when unbounded.
    pub fn sup_norm_bound(&self) -> Option<f64> {
        match self {
            ConvexSet::Box { lower, upper } => {
                if lower.iter().chain(upper).all(|v| v.is_finite()) {
                    Some(lower.iter().chain(upper).fold(0.0f64, |m, v| m.max(v.abs())))
                } else {
                    None
                }
            }
            ConvexSet::Ball { center, radius } => {
                Some(center.iter().fold(0.0f64, |m, v| m.max(v.abs())) + radius)
            }
            ConvexSet::Intersection(m) => m.iter().filter_map(|s| s.sup_norm_bound()).reduce(f64::min),
            ConvexSet::Halfspace { .. } | ConvexSet::Whole(_) => None,
        }
    }

    /// Axis-aligned box containing the set (entries may be infinite).
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        match self {
            ConvexSet::Box { lower, upper } => (lower.clone(), upper.clone()),
            ConvexSet::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            ConvexSet::Intersection(m) => {
                let mut lo = vec![f64::NEG_INFINITY; n];
                let mut hi = vec![f64::INFINITY; n];
                for s in m {
                    let (l, h) = s.bounding_box();
                    for k in 0..n {
                        lo[k] = lo[k].max(l[k]);
                        hi[k] = hi[k].min(h[k]);
                    }
                }
                (lo, hi)
            }
            ConvexSet::Halfspace { .. } | ConvexSet::Whole(_) => {
                (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
            }
        }
    }

    /// Outward normals of the defining inequalities active at `x` within `tol`.
    /// Their nonnegative combinations span the normal cone at `x`.
    pub fn normal_generators(&self, x: &[f64], tol: f64) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut out = Vec::new();
        match self {
            ConvexSet::Box { lower, upper } => {
                for k in 0..n {
                    if x[k] >= upper[k] - tol {
                        let mut e = vec![0.0; n];
                        e[k] = 1.0;
                        out.push(e);
                    }
                    if x[k] <= lower[k] + tol {
                        let mut e = vec![0.0; n];
                        e[k] = -1.0;
                        out.push(e);
                    }
                }
            }
            ConvexSet::Ball { center, radius } => {
                let diff: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if dist >= radius - tol && dist > 0.0 {
                    out.push(diff.iter().map(|d| d / dist).collect());
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                let ax: f64 = normal.iter().zip(x).map(|(a, v)| a * v).sum();
                if ax >= offset - tol {
                    let norm = normal.iter().map(|a| a * a).sum::<f64>().sqrt();
                    out.push(normal.iter().map(|a| a / norm).collect());
                }
            }
            ConvexSet::Intersection(m) => {
                for s in m {
                    out.extend(s.normal_generators(x, tol));
                }
            }
            ConvexSet::Whole(_) => {}
        }
        out
    }

    pub fn is_box(&self) -> bool {
        matches!(self, ConvexSet::Box { .. })
    }
}

fn dykstra(members: &[ConvexSet], y: &mut [f64]) -> Result<(), SetError> {
    let n = y.len();
    let target = y.to_vec();
    let mut increments = vec![vec![0.0; n]; members.len()];
    let mut z = vec![0.0; n];
    let mut change = f64::INFINITY;
    for sweep in 1..=DYKSTRA_MAX_SWEEPS {
        change = 0.0;
        for (set, inc) in members.iter().zip(increments.iter_mut()) {
            for k in 0..n {
                z[k] = y[k] + inc[k];
            }
            set.project_in_place(&mut z)?;
            for k in 0..n {
                inc[k] = y[k] + inc[k] - z[k];
                change = f64::max(change, (z[k] - y[k]).abs());
                y[k] = z[k];
            }
        }
        if change < DYKSTRA_TOL {
            return Ok(());
        }
        if POLISH_AT.contains(&sweep) {
            if let Some(p) = polish(members, &target, y, change) {
                y.copy_from_slice(&p);
                return Ok(());
            }
        }
    }
    if let Some(p) = polish(members, &target, y, change) {
        y.copy_from_slice(&p);
        return Ok(());
    }
    // near-tangent members converge sublinearly; a feasible iterate that has
    // all but stopped moving is kept
    let violation = members.iter().map(|s| s.violation(y)).fold(0.0, f64::max);
    if change < DYKSTRA_ACCEPT && violation <= FEASIBILITY_TOL {
        return Ok(());
    }
    Err(SetError::NotConverged { residual: change })
}

/// Sweeps after which a slow Dykstra run tries [`polish`].
const POLISH_AT: [usize; 3] = [50, 500, 5000];

/// One defining inequality `c(z) <= 0` of an intersection.
enum Piece<'a> {
    /// `a.z - b`
    Linear(Vec<f64>, f64),
    /// `(|z - c|^2 - r^2) / 2`
    Ball(&'a [f64], f64),
}

impl Piece<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        match self {
            Piece::Linear(a, b) => a.iter().zip(z).map(|(u, v)| u * v).sum::<f64>() - b,
            Piece::Ball(c, r) => 0.5 * (z.iter().zip(*c).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() - r * r),
        }
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Piece::Linear(a, _) => a.clone(),
            Piece::Ball(c, _) => z.iter().zip(*c).map(|(u, v)| u - v).collect(),
        }
    }
}

fn pieces<'a>(set: &'a ConvexSet, out: &mut Vec<Piece<'a>>) {
    match set {
        ConvexSet::Box { lower, upper } => {
            let n = lower.len();
            for k in 0..n {
                let mut e = vec![0.0; n];
                if lower[k].is_finite() {
                    e[k] = -1.0;
                    out.push(Piece::Linear(e.clone(), -lower[k]));
                }
                if upper[k].is_finite() {
                    e[k] = 1.0;
                    out.push(Piece::Linear(e, upper[k]));
                }
            }
        }
        ConvexSet::Ball { center, radius } => out.push(Piece::Ball(center, *radius)),
        ConvexSet::Halfspace { normal, offset } => out.push(Piece::Linear(normal.clone(), *offset)),
        ConvexSet::Intersection(m) => m.iter().for_each(|s| pieces(s, out)),
        ConvexSet::Whole(_) => {}
    }
}

/// Largest number of near-active inequalities whose subsets [`polish`] tries.
const POLISH_MAX_CANDIDATES: usize = 12;

/// Exact projection of `target` near a slowly converging iterate `z0`.
///
/// Each subset of the inequalities nearly active at `z0`, up to the dimension
/// in size, is tried as the active set: Newton's method on its KKT equations,
/// then a check of the KKT conditions of the whole intersection. KKT points of
/// a projection are unique, so the first subset that passes gives the answer.
fn polish(members: &[ConvexSet], target: &[f64], z0: &[f64], change: f64) -> Option<Vec<f64>> {
    let n = target.len();
    let mut all = Vec::new();
    members.iter().for_each(|s| pieces(s, &mut all));
    let scale = target.iter().chain(z0).fold(1.0f64, |m, v| m.max(v.abs()));
    let band = (1e-6 + 10.0 * change) * scale * scale;
    let near: Vec<usize> = (0..all.len()).filter(|&k| all[k].value(z0) >= -band).collect();
    if near.is_empty() || near.len() > POLISH_MAX_CANDIDATES {
        return None;
    }
    for size in 1..=n.min(near.len()) {
        let mut pick: Vec<usize> = (0..size).collect();
        loop {
            let active: Vec<usize> = pick.iter().map(|&c| near[c]).collect();
            if let Some(z) = newton_kkt(&all, &active, members, target, z0, scale) {
                return Some(z);
            }
            // next combination in lexicographic order
            let mut i = size;
            while i > 0 && pick[i - 1] == near.len() - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            pick[i - 1] += 1;
            for k in i..size {
                pick[k] = pick[k - 1] + 1;
            }
        }
    }
    None
}

fn newton_kkt(
    all: &[Piece<'_>],
    active: &[usize],
    members: &[ConvexSet],
    target: &[f64],
    z0: &[f64],
    scale: f64,
) -> Option<Vec<f64>> {
    let n = target.len();
    let m = active.len();
    let grads: Vec<Vec<f64>> = active.iter().map(|&k| all[k].gradient(z0)).collect();
    let g = DMatrix::from_fn(n, m, |r, c| grads[c][r]);
    let resid = DVector::from_iterator(n, target.iter().zip(z0).map(|(t, v)| t - v));
    let mut lambda = nnls(&g, &resid);
    let mut z = z0.to_vec();
    for _ in 0..30 {
        let mut jac = DMatrix::zeros(n + m, n + m);
        let mut rhs = DVector::zeros(n + m);
        let mut curvature = 1.0;
        for (c, &k) in active.iter().enumerate() {
            if matches!(all[k], Piece::Ball(..)) {
                curvature += lambda[c];
            }
        }
        for r in 0..n {
            jac[(r, r)] = curvature;
            rhs[r] = target[r] - z[r];
        }
        for (c, &k) in active.iter().enumerate() {
            let grad = all[k].gradient(&z);
            for r in 0..n {
                jac[(r, n + c)] = grad[r];
                jac[(n + c, r)] = grad[r];
                rhs[r] -= lambda[c] * grad[r];
            }
            rhs[n + c] = -all[k].value(&z);
        }
        let step = min_norm_solve(&jac, &rhs);
        for r in 0..n {
            z[r] += step[r];
        }
        for c in 0..m {
            lambda[c] += step[n + c];
        }
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        if step.amax() <= 1e-15 * scale {
            break;
        }
    }
    if lambda.iter().any(|&v| v < -1e-12 * scale) {
        return None;
    }
    let mut stationarity = 0.0f64;
    for r in 0..n {
        let mut v = z[r] - target[r];
        for (c, &k) in active.iter().enumerate() {
            v += lambda[c].max(0.0) * all[k].gradient(&z)[r];
        }
        stationarity = stationarity.max(v.abs());
    }
    let violation = members.iter().map(|s| s.violation(&z)).fold(0.0, f64::max);
    (stationarity <= 1e-12 * scale && violation <= 1e-12 * scale).then_some(z)
}

fn write_nums(f: &mut fmt::Formatter<'_>, v: &[f64]) -> fmt::Result {
    for x in v {
        write!(f, " {x}")?;
    }
    Ok(())
}

impl fmt::Display for ConvexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvexSet::Box { lower, upper } => {
                write!(f, "box")?;
                for (l, u) in lower.iter().zip(upper) {
                    write!(f, " {l}..{u}")?;
                }
                Ok(())
            }
            ConvexSet::Ball { center, radius } => {
                write!(f, "ball")?;
                write_nums(f, center)?;
                write!(f, " {radius}")
            }
            ConvexSet::Halfspace { normal, offset } => {
                write!(f, "halfspace")?;
                write_nums(f, normal)?;
                write!(f, " {offset}")
            }
            ConvexSet::Intersection(m) => {
                write!(f, "intersect [")?;
                for (k, s) in m.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, "]")
            }
            ConvexSet::Whole(n) => write!(f, "whole {n}"),
        }
    }
}

fn parse_num(tok: &str) -> Option<f64> {
    match tok {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

// splits on top-level commas only
fn split_members(body: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in body.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(body[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(body[start..].trim());
    parts
}

impl std::str::FromStr for ConvexSet {
    type Err = SetError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |msg: &str| SetError::Parse { text: text.to_string(), msg: msg.to_string() };
        let t = text.trim();
        let (kind, rest) = t.split_once(char::is_whitespace).unwrap_or((t, ""));
        let rest = rest.trim();
        let set = match kind {
            "box" => {
                let mut lower = Vec::new();
                let mut upper = Vec::new();
                for tok in rest.split_whitespace() {
                    let (l, u) = tok.split_once("..").ok_or_else(|| err("box bounds look like lo..hi"))?;
                    lower.push(parse_num(l).ok_or_else(|| err("bad lower bound"))?);
                    upper.push(parse_num(u).ok_or_else(|| err("bad upper bound"))?);
                }
                ConvexSet::Box { lower, upper }
            }
            "ball" | "halfspace" => {
                let nums: Vec<f64> = rest
                    .split_whitespace()
                    .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
                    .collect::<Option<_>>()
                    .ok_or_else(|| err("expected finite numbers"))?;
                if nums.len() < 2 {
                    return Err(err("expected coordinates followed by a scalar"));
                }
                let (v, last) = nums.split_at(nums.len() - 1);
                if kind == "ball" {
                    ConvexSet::Ball { center: v.to_vec(), radius: last[0] }
                } else {
                    ConvexSet::Halfspace { normal: v.to_vec(), offset: last[0] }
                }
            }
            "whole" => ConvexSet::Whole(rest.parse().map_err(|_| err("expected a dimension"))?),
            "intersect" => {
                let body = rest
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| err("intersect members go in [...]"))?;
                let members = split_members(body)
                    .into_iter()
                    .map(str::parse)
                    .collect::<Result<Vec<ConvexSet>, _>>()?;
                ConvexSet::Intersection(members)
            }
            _ => return Err(err("unknown set kind")),
        };
        set.validate().map_err(|e| err(&e.to_string()))?;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_examples() {
        let b = ConvexSet::boxed(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(b.project(&[3.0, -1.0]).unwrap(), vec![2.0, 0.0]);
        let ball = ConvexSet::ball(vec![2.0, 2.0], 2.0).unwrap();
        assert!(close(&ball.project(&[6.0, 2.0]).unwrap(), &[4.0, 2.0], 1e-15));
        let tri = ConvexSet::intersection(vec![
            ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            ConvexSet::halfspace(vec![1.0, 1.0], 1.0).unwrap(),
        ])
        .unwrap();
        assert!(close(&tri.project(&[2.0, 2.0]).unwrap(), &[0.5, 0.5], 1e-9));
    }

    #[test]
    fn membership() {
        let b = ConvexSet::boxed(vec![5.0], vec![30.0]).unwrap();
        assert!(b.contains(&[10.0], 0.0).unwrap());
        let ball = ConvexSet::ball(vec![3.0, 5.0], 3.0).unwrap();
        assert!(!ball.contains(&[7.0, 5.0], 1e-9).unwrap());
        assert!(matches!(b.contains(&[1.0, 2.0], 0.0), Err(SetError::Dimension { .. })));
    }

    #[test]
    fn sup_norm_bounds() {
        let b = ConvexSet::boxed(vec![5.0], vec![45.0]).unwrap();
        assert_eq!(b.sup_norm_bound(), Some(45.0));
        let ball = ConvexSet::ball(vec![3.0, 5.0], 3.0).unwrap();
        assert_eq!(ball.sup_norm_bound(), Some(8.0));
        let i = ConvexSet::intersection(vec![
            ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            ConvexSet::ball(vec![0.0, 0.0], 10.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(i.sup_norm_bound(), Some(1.0));
        assert_eq!(ConvexSet::halfspace(vec![1.0], 0.0).unwrap().sup_norm_bound(), None);
        let half_open = ConvexSet::boxed(vec![0.0], vec![f64::INFINITY]).unwrap();
        assert_eq!(half_open.sup_norm_bound(), None);
    }

    #[test]
    fn rejects_invalid_sets() {
        assert!(ConvexSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexSet::ball(vec![0.0], 0.0).is_err());
        assert!(ConvexSet::halfspace(vec![0.0, 0.0], 1.0).is_err());
        assert!(ConvexSet::intersection(vec![]).is_err());
    }

    #[test]
    fn text_round_trip() {
        for s in [
            "box 5..30",
            "box 0..inf -inf..2",
            "ball 2 2 2",
            "halfspace -1 -1 -3",
            "whole 3",
            "intersect [box 0.5..5 1..5.5, halfspace 1 1 6]",
            "intersect [ball 0 0 1, intersect [box 0..1 0..1, halfspace 1 1 1]]",
        ] {
            let set: ConvexSet = s.parse().unwrap();
            let again: ConvexSet = set.to_string().parse().unwrap();
            assert_eq!(set, again, "{s}");
        }
        assert!("cube 1".parse::<ConvexSet>().is_err());
        assert!("box 1..0".parse::<ConvexSet>().is_err());
        assert!("ball 1".parse::<ConvexSet>().is_err());
    }

    #[test]
    fn normal_generators_at_corner() {
        let b = ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = b.normal_generators(&[1.0, 0.0], 1e-9);
        assert_eq!(g, vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(b.normal_generators(&[0.5, 0.5], 1e-9).is_empty());
    }
}
