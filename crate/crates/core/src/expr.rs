//! Scalar expression trees over player decision coordinates, with
//! forward-mode differentiation.
//!
//! Text grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' exponent)?
//! exponent:= number | '-' number | '(' '-'? number ')'
//! primary := number | x[j][i][k] | exp(sum) | ln(sum) | sqrt(sum) | '(' sum ')'
//! ```
//!
//! Variable indices are 1-based in text and 0-based in [`VarRef`].

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarRef {
    pub cluster: usize,
    pub player: usize,
    pub coord: usize,
}

impl VarRef {
    pub fn new(cluster: usize, player: usize, coord: usize) -> Self {
        Self { cluster, player, coord }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x[{}][{}][{}]", self.cluster + 1, self.player + 1, self.coord + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(VarRef),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Sqrt(Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown name `{name}` at byte {pos}")]
    UnknownName { pos: usize, name: String },
    #[error("malformed variable index at byte {pos}: {msg}")]
    MalformedIndex { pos: usize, msg: String },
    #[error("variable {0} has no value")]
    Unassigned(VarRef),
    #[error("ln of nonpositive argument {0}")]
    LnDomain(f64),
    #[error("sqrt of negative argument {0}")]
    SqrtDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("power {exponent} of invalid base {base}")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite value or derivative")]
    NonFinite,
}

/// Number type the evaluator runs over: plain `f64` or a dual number.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn powf(self, a: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn powf(self, a: f64) -> Self {
        if a == 2.0 {
            self * self
        } else {
            f64::powf(self, a)
        }
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// First-order dual number `v + d ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual::new(q, (self.d - q * o.d) / o.v)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

// a zero tangent must stay zero even where the local derivative blows up
fn chain(d: f64, local: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d * local
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn powf(self, a: f64) -> Self {
        if a == 2.0 {
            return self * self;
        }
        Dual::new(self.v.powf(a), chain(self.d, a * self.v.powf(a - 1.0)))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual::new(e, chain(self.d, e))
    }
    fn ln(self) -> Self {
        Dual::new(self.v.ln(), chain(self.d, 1.0 / self.v))
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual::new(s, chain(self.d, 0.5 / s))
    }
    fn is_finite(self) -> bool {
        self.v.is_finite() && self.d.is_finite()
    }
}

fn check_pow(base: f64, a: f64) -> Result<(), ExprError> {
    let bad = (base < 0.0 && a.fract() != 0.0) || (base == 0.0 && a < 0.0);
    if bad {
        Err(ExprError::PowDomain { base, exponent: a })
    } else {
        Ok(())
    }
}

fn finite<S: Scalar>(s: S) -> Result<S, ExprError> {
    if s.is_finite() {
        Ok(s)
    } else {
        Err(ExprError::NonFinite)
    }
}

impl Expr {
    pub fn var(cluster: usize, player: usize, coord: usize) -> Expr {
        Expr::Var(VarRef::new(cluster, player, coord))
    }

    /// Evaluates over any [`Scalar`], looking variables up through `lookup`.
    pub fn eval_generic<S: Scalar>(
        &self,
        lookup: &impl Fn(VarRef) -> Option<S>,
    ) -> Result<S, ExprError> {
        let out = match self {
            Expr::Const(c) => S::constant(*c),
            Expr::Var(v) => lookup(*v).ok_or(ExprError::Unassigned(*v))?,
            Expr::Neg(a) => -a.eval_generic(lookup)?,
            Expr::Add(a, b) => a.eval_generic(lookup)? + b.eval_generic(lookup)?,
            Expr::Sub(a, b) => a.eval_generic(lookup)? - b.eval_generic(lookup)?,
            Expr::Mul(a, b) => a.eval_generic(lookup)? * b.eval_generic(lookup)?,
            Expr::Div(a, b) => {
                let num = a.eval_generic(lookup)?;
                let den = b.eval_generic(lookup)?;
                if den.value() == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, k) => {
                let base = a.eval_generic(lookup)?;
                check_pow(base.value(), *k)?;
                base.powf(*k)
            }
            Expr::Exp(a) => a.eval_generic(lookup)?.exp(),
            Expr::Ln(a) => {
                let arg = a.eval_generic(lookup)?;
                if !(arg.value() > 0.0) {
                    return Err(ExprError::LnDomain(arg.value()));
                }
                arg.ln()
            }
            Expr::Sqrt(a) => {
                let arg = a.eval_generic(lookup)?;
                if !(arg.value() >= 0.0) {
                    return Err(ExprError::SqrtDomain(arg.value()));
                }
                arg.sqrt()
            }
        };
        finite(out)
    }

    pub fn eval(&self, point: &impl Fn(VarRef) -> Option<f64>) -> Result<f64, ExprError> {
        self.eval_generic(point)
    }

    /// Distinct variables referenced, sorted.
    pub fn variables(&self) -> Vec<VarRef> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<VarRef>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Ln(a) | Expr::Sqrt(a) => {
                a.collect_vars(out)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Ln(a) | Expr::Sqrt(a) => {
                1 + a.depth()
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// Rewrites every variable through `f`.
    pub fn map_vars(&self, f: &impl Fn(VarRef) -> VarRef) -> Expr {
        let bx = |e: &Expr| Box::new(e.map_vars(f));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => Expr::Var(f(*v)),
            Expr::Neg(a) => Expr::Neg(bx(a)),
            Expr::Add(a, b) => Expr::Add(bx(a), bx(b)),
            Expr::Sub(a, b) => Expr::Sub(bx(a), bx(b)),
            Expr::Mul(a, b) => Expr::Mul(bx(a), bx(b)),
            Expr::Div(a, b) => Expr::Div(bx(a), bx(b)),
            Expr::Pow(a, k) => Expr::Pow(bx(a), *k),
            Expr::Exp(a) => Expr::Exp(bx(a)),
            Expr::Ln(a) => Expr::Ln(bx(a)),
            Expr::Sqrt(a) => Expr::Sqrt(bx(a)),
        }
    }

    /// Flattens the tree into a postfix tape whose variables are slots of a dense vector.
    pub fn compile(&self, slot: &impl Fn(VarRef) -> Option<usize>) -> Result<Tape, ExprError> {
        let mut ops = Vec::new();
        self.emit(slot, &mut ops)?;
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Var(_) => depth += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div => depth -= 1,
                _ => {}
            }
            max_depth = max_depth.max(depth);
        }
        Ok(Tape { ops, stack_size: max_depth })
    }

    fn emit(&self, slot: &impl Fn(VarRef) -> Option<usize>, ops: &mut Vec<Op>) -> Result<(), ExprError> {
        match self {
            Expr::Const(c) => ops.push(Op::Const(*c)),
            Expr::Var(v) => ops.push(Op::Var(slot(*v).ok_or(ExprError::Unassigned(*v))?)),
            Expr::Neg(a) => {
                a.emit(slot, ops)?;
                ops.push(Op::Neg);
            }
            Expr::Pow(a, k) => {
                a.emit(slot, ops)?;
                ops.push(Op::Pow(*k));
            }
            Expr::Exp(a) => {
                a.emit(slot, ops)?;
                ops.push(Op::Exp);
            }
            Expr::Ln(a) => {
                a.emit(slot, ops)?;
                ops.push(Op::Ln);
            }
            Expr::Sqrt(a) => {
                a.emit(slot, ops)?;
                ops.push(Op::Sqrt);
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.emit(slot, ops)?;
                b.emit(slot, ops)?;
                ops.push(match self {
                    Expr::Add(..) => Op::Add,
                    Expr::Sub(..) => Op::Sub,
                    Expr::Mul(..) => Op::Mul,
                    _ => Op::Div,
                });
            }
        }
        Ok(())
    }
}

/// Gradient of `e` with respect to the coordinates in `wrt`, one dual sweep per coordinate.
pub fn grad(
    e: &Expr,
    wrt: &[VarRef],
    point: &impl Fn(VarRef) -> Option<f64>,
) -> Result<Vec<f64>, ExprError> {
    wrt.iter()
        .map(|&target| {
            let lookup = |v: VarRef| point(v).map(|x| Dual::new(x, if v == target { 1.0 } else { 0.0 }));
            e.eval_generic(&lookup).map(|d| d.d)
        })
        .collect()
}

/// Worst relative error between [`grad`] and central differences with step `h_fd`,
/// relative to `max(1, |analytic|)`.
pub fn check_grad(
    e: &Expr,
    wrt: &[VarRef],
    point: &impl Fn(VarRef) -> Option<f64>,
    h_fd: f64,
) -> Result<f64, ExprError> {
    let analytic = grad(e, wrt, point)?;
    let mut worst = 0.0f64;
    for (k, &target) in wrt.iter().enumerate() {
        let shifted = |delta: f64| {
            move |v: VarRef| point(v).map(|x| if v == target { x + delta } else { x })
        };
        let up = e.eval(&shifted(h_fd))?;
        let down = e.eval(&shifted(-h_fd))?;
        let fd = (up - down) / (2.0 * h_fd);
        let err = (fd - analytic[k]).abs() / analytic[k].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow(f64),
    Exp,
    Ln,
    Sqrt,
}

/// Postfix form of an [`Expr`] with variables resolved to dense slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    stack_size: usize,
}

/// Tapes whose evaluation stack fits here run without allocating.
const INLINE_STACK: usize = 32;

impl Tape {
    fn run<S: Scalar>(&self, load: impl Fn(usize) -> S) -> Result<S, ExprError> {
        if self.stack_size <= INLINE_STACK {
            let mut buf = [S::constant(0.0); INLINE_STACK];
            self.run_on(&mut buf, load)
        } else {
            let mut buf = vec![S::constant(0.0); self.stack_size];
            self.run_on(&mut buf, load)
        }
    }

    fn run_on<S: Scalar>(&self, stack: &mut [S], load: impl Fn(usize) -> S) -> Result<S, ExprError> {
        let mut top = 0;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    stack[top] = S::constant(c);
                    top += 1;
                }
                Op::Var(i) => {
                    stack[top] = load(i);
                    top += 1;
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div => {
                    let b = stack[top - 1];
                    let a = stack[top - 2];
                    top -= 1;
                    stack[top - 1] = match op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        _ => {
                            if b.value() == 0.0 {
                                return Err(ExprError::DivisionByZero);
                            }
                            a / b
                        }
                    };
                }
                unary => {
                    let a = stack[top - 1];
                    stack[top - 1] = match unary {
                        Op::Neg => -a,
                        Op::Pow(k) => {
                            check_pow(a.value(), k)?;
                            a.powf(k)
                        }
                        Op::Exp => a.exp(),
                        Op::Ln => {
                            if !(a.value() > 0.0) {
                                return Err(ExprError::LnDomain(a.value()));
                            }
                            a.ln()
                        }
                        Op::Sqrt => {
                            if !(a.value() >= 0.0) {
                                return Err(ExprError::SqrtDomain(a.value()));
                            }
                            a.sqrt()
                        }
                        _ => unreachable!(),
                    };
                }
            }
        }
        finite(stack[0])
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.run(|i| x[i])
    }

    /// Writes the partial derivatives with respect to `slots` into `out`.
    pub fn grad_into(&self, x: &[f64], slots: &[usize], out: &mut [f64]) -> Result<(), ExprError> {
        for (o, &s) in out.iter_mut().zip(slots) {
            *o = self.run(|i| Dual::new(x[i], if i == s { 1.0 } else { 0.0 }))?.d;
        }
        Ok(())
    }

    /// Gradient over the contiguous slot range `start..start + len`.
    pub fn grad_range(&self, x: &[f64], start: usize, out: &mut [f64]) -> Result<(), ExprError> {
        for (k, o) in out.iter_mut().enumerate() {
            let s = start + k;
            *o = self.run(|i| Dual::new(x[i], if i == s { 1.0 } else { 0.0 }))?.d;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// printing

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        write!(f, "(-{})", -v)
    } else {
        write!(f, "{}", v)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_num(f, *c),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => write!(f, "(-({a}))"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => {
                write!(f, "({a}^")?;
                write_num(f, *k)?;
                write!(f, ")")
            }
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Ln(a) => write!(f, "ln({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

// ---------------------------------------------------------------------------
// parsing

pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> ExprError {
        ExprError::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            // a minus glued to a bare literal is a negative constant
            let literal_next = self.peek().is_some_and(|c| c.is_ascii_digit() || c == b'.');
            let inner = self.unary()?;
            if literal_next {
                if let Expr::Const(c) = inner {
                    return Ok(Expr::Const(-c));
                }
            }
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let k = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<f64, ExprError> {
        if self.eat(b'(') {
            let neg = self.eat(b'-');
            let v = self.number()?;
            self.expect(b')')?;
            return Ok(if neg { -v } else { v });
        }
        let neg = self.eat(b'-');
        let v = self.number()?;
        Ok(if neg { -v } else { v })
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > b
        };
        let mut p = self.pos;
        let int_part = digits(&mut p);
        let mut frac_part = false;
        if p < s.len() && s[p] == b'.' {
            p += 1;
            frac_part = digits(&mut p);
        }
        if !int_part && !frac_part {
            return Err(self.err("expected a number"));
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                digits(&mut q);
                p = q;
            }
        }
        self.pos = p;
        let text = std::str::from_utf8(&s[start..p]).expect("ascii digits");
        text.parse::<f64>()
            .map_err(|_| ExprError::Syntax { pos: start, msg: format!("bad number `{text}`") })
    }

    fn ident(&mut self) -> (usize, String) {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        (start, String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn index(&mut self) -> Result<Option<usize>, ExprError> {
        if !self.eat(b'[') {
            return Ok(None);
        }
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let v: usize = text.parse().map_err(|_| ExprError::MalformedIndex {
            pos: start,
            msg: "expected a positive integer".into(),
        })?;
        if v == 0 {
            return Err(ExprError::MalformedIndex { pos: start, msg: "indices start at 1".into() });
        }
        if !self.eat(b']') {
            return Err(ExprError::MalformedIndex { pos: self.pos, msg: "expected `]`".into() });
        }
        Ok(Some(v))
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Const(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let (start, name) = self.ident();
                match name.as_str() {
                    "x" => {
                        let mut idx = Vec::new();
                        while let Some(v) = self.index()? {
                            idx.push(v);
                        }
                        if idx.len() != 3 {
                            return Err(ExprError::MalformedIndex {
                                pos: start,
                                msg: format!("variable needs 3 indices, found {}", idx.len()),
                            });
                        }
                        Ok(Expr::var(idx[0] - 1, idx[1] - 1, idx[2] - 1))
                    }
                    "exp" | "ln" | "sqrt" => {
                        self.expect(b'(')?;
                        let arg = Box::new(self.sum()?);
                        self.expect(b')')?;
                        Ok(match name.as_str() {
                            "exp" => Expr::Exp(arg),
                            "ln" => Expr::Ln(arg),
                            _ => Expr::Sqrt(arg),
                        })
                    }
                    _ => Err(ExprError::UnknownName { pos: start, name }),
                }
            }
            Some(c) => Err(self.err(format!("unexpected `{}`", c as char))),
        }
    }
}
