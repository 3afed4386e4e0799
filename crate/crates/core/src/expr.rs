//! Expression trees for behavioral sources and parameterized card values.
//!
//! Expressions appear inside `{...}` on device cards. They are evaluated,
//! never compiled; the solver re-evaluates them at every Newton iteration.
//! Differentiation is symbolic so that behavioral-source Jacobian entries
//! stay consistent with the residual even at limiter corners.

use std::collections::HashMap;
use std::fmt;

use crate::error::ExprError;

/// Built-in single-argument functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Cos,
    Acos,
    Sin,
    Abs,
    Exp,
}

impl Func {
    pub fn name(&self) -> &'static str {
        match self {
            Func::Sqrt => "SQRT",
            Func::Cos => "COS",
            Func::Acos => "ACOS",
            Func::Sin => "SIN",
            Func::Abs => "ABS",
            Func::Exp => "EXP",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name.to_ascii_uppercase().as_str() {
            "SQRT" => Some(Func::Sqrt),
            "COS" => Some(Func::Cos),
            "ACOS" => Some(Func::Acos),
            "SIN" => Some(Func::Sin),
            "ABS" => Some(Func::Abs),
            "EXP" => Some(Func::Exp),
            _ => None,
        }
    }
}

/// A reference that an expression can bind to at evaluation time.
///
/// Names compare case-insensitively; the key is stored uppercased.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ref {
    /// Parameter reference, e.g. `P`.
    Param(String),
    /// Node voltage reference, e.g. `V(bus1R)`.
    Voltage(String),
    /// Branch current reference, e.g. `I(Vamm)`.
    Current(String),
}

impl Ref {
    pub fn param(name: &str) -> Ref {
        Ref::Param(name.to_ascii_uppercase())
    }
    pub fn voltage(node: &str) -> Ref {
        Ref::Voltage(node.to_ascii_uppercase())
    }
    pub fn current(device: &str) -> Ref {
        Ref::Current(device.to_ascii_uppercase())
    }
}

impl fmt::Display for Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ref::Param(p) => write!(f, "{p}"),
            Ref::Voltage(n) => write!(f, "V({n})"),
            Ref::Current(d) => write!(f, "I({d})"),
        }
    }
}

/// Bindings for [`Expr::eval`]: reference -> numeric value.
pub type Bindings = HashMap<Ref, f64>;

/// An expression tree.
///
/// The `InBand` and `SignOf` variants only appear in derivative trees
/// produced by [`Expr::differentiate`]; the parser never emits them.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Param(String),
    Voltage(String),
    Current(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    /// `limit(x, lo, hi)` = min(max(x, lo), hi).
    Limit(Box<Expr>, Box<Expr>, Box<Expr>),
    /// 1.0 when lo < x < hi, else 0.0 (derivative of `Limit` w.r.t. x).
    InBand(Box<Expr>, Box<Expr>, Box<Expr>),
    /// -1, 0, or +1 (derivative helper for `Abs`).
    SignOf(Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }
    pub fn param(name: &str) -> Expr {
        Expr::Param(name.to_ascii_uppercase())
    }
    pub fn voltage(node: &str) -> Expr {
        Expr::Voltage(node.to_string())
    }
    pub fn current(device: &str) -> Expr {
        Expr::Current(device.to_string())
    }
    pub fn call(f: Func, arg: Expr) -> Expr {
        Expr::Call(f, Box::new(arg))
    }
    pub fn limit(x: Expr, lo: Expr, hi: Expr) -> Expr {
        Expr::Limit(Box::new(x), Box::new(lo), Box::new(hi))
    }

    /// Evaluate against a set of bindings.
    ///
    /// Every `V(.)`, `I(.)` and parameter reference must be bound. Division
    /// by exact zero and out-of-domain ACOS arguments are reported as
    /// domain errors rather than producing non-finite values.
    pub fn eval(&self, bindings: &Bindings) -> Result<f64, ExprError> {
        self.eval_with(&mut |r| bindings.get(r).copied())
    }

    /// Evaluate with a caller-supplied lookup function.
    pub fn eval_with(
        &self,
        lookup: &mut dyn FnMut(&Ref) -> Option<f64>,
    ) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Pi => Ok(std::f64::consts::PI),
            Expr::Param(p) => lookup(&Ref::param(p))
                .ok_or_else(|| ExprError::Unbound(p.clone())),
            Expr::Voltage(n) => lookup(&Ref::voltage(n))
                .ok_or_else(|| ExprError::Unbound(format!("V({n})"))),
            Expr::Current(d) => lookup(&Ref::current(d))
                .ok_or_else(|| ExprError::Unbound(format!("I({d})"))),
            Expr::Neg(a) => Ok(-a.eval_with(lookup)?),
            Expr::Add(a, b) => Ok(a.eval_with(lookup)? + b.eval_with(lookup)?),
            Expr::Sub(a, b) => Ok(a.eval_with(lookup)? - b.eval_with(lookup)?),
            Expr::Mul(a, b) => Ok(a.eval_with(lookup)? * b.eval_with(lookup)?),
            Expr::Div(a, b) => {
                let num = a.eval_with(lookup)?;
                let den = b.eval_with(lookup)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero(format!("{self}")));
                }
                Ok(num / den)
            }
            Expr::Call(f, a) => {
                let v = a.eval_with(lookup)?;
                Ok(match f {
                    Func::Sqrt => v.max(0.0).sqrt(),
                    Func::Cos => v.cos(),
                    Func::Acos => {
                        if !(-1.0..=1.0).contains(&v) {
                            return Err(ExprError::AcosDomain(v));
                        }
                        v.acos()
                    }
                    Func::Sin => v.sin(),
                    Func::Abs => v.abs(),
                    Func::Exp => v.exp(),
                })
            }
            Expr::Limit(x, lo, hi) => {
                let (x, lo, hi) = (
                    x.eval_with(lookup)?,
                    lo.eval_with(lookup)?,
                    hi.eval_with(lookup)?,
                );
                if lo > hi {
                    return Err(ExprError::LimitBounds { lo, hi });
                }
                Ok(x.max(lo).min(hi))
            }
            Expr::InBand(x, lo, hi) => {
                let (x, lo, hi) = (
                    x.eval_with(lookup)?,
                    lo.eval_with(lookup)?,
                    hi.eval_with(lookup)?,
                );
                Ok(if x > lo && x < hi { 1.0 } else { 0.0 })
            }
            Expr::SignOf(a) => {
                let v = a.eval_with(lookup)?;
                Ok(if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                })
            }
        }
    }

    /// Symbolic partial derivative with respect to `wrt`.
    ///
    /// Limiter convention: d(limit)/dx is 1 strictly inside the band and 0
    /// outside (subgradient at the corners); the band edges are treated as
    /// constants. ABS differentiates to sign(x).
    pub fn differentiate(&self, wrt: &Ref) -> Expr {
        use Expr::*;
        match self {
            Num(_) | Pi => Num(0.0),
            Param(p) => match wrt {
                Ref::Param(w) if w.eq_ignore_ascii_case(p) => Num(1.0),
                _ => Num(0.0),
            },
            Voltage(n) => match wrt {
                Ref::Voltage(w) if w.eq_ignore_ascii_case(n) => Num(1.0),
                _ => Num(0.0),
            },
            Current(d) => match wrt {
                Ref::Current(w) if w.eq_ignore_ascii_case(d) => Num(1.0),
                _ => Num(0.0),
            },
            Neg(a) => simplify_neg(a.differentiate(wrt)),
            Add(a, b) => simplify_add(a.differentiate(wrt), b.differentiate(wrt)),
            Sub(a, b) => simplify_sub(a.differentiate(wrt), b.differentiate(wrt)),
            Mul(a, b) => simplify_add(
                simplify_mul(a.differentiate(wrt), (**b).clone()),
                simplify_mul((**a).clone(), b.differentiate(wrt)),
            ),
            Div(a, b) => {
                // (a/b)' = a'/b - a*b'/b^2
                let da = a.differentiate(wrt);
                let db = b.differentiate(wrt);
                let t1 = simplify_div(da, (**b).clone());
                let t2 = simplify_div(
                    simplify_mul((**a).clone(), db),
                    simplify_mul((**b).clone(), (**b).clone()),
                );
                simplify_sub(t1, t2)
            }
            Call(f, a) => {
                let da = a.differentiate(wrt);
                let outer = match f {
                    // d sqrt(u) = 1/(2 sqrt(u))
                    Func::Sqrt => simplify_div(
                        Num(1.0),
                        simplify_mul(Num(2.0), Call(Func::Sqrt, a.clone())),
                    ),
                    Func::Cos => simplify_neg(Call(Func::Sin, a.clone())),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    // d acos(u) = -1/sqrt(1 - u^2)
                    Func::Acos => simplify_neg(simplify_div(
                        Num(1.0),
                        Call(
                            Func::Sqrt,
                            Box::new(simplify_sub(
                                Num(1.0),
                                simplify_mul((**a).clone(), (**a).clone()),
                            )),
                        ),
                    )),
                    Func::Abs => SignOf(a.clone()),
                    Func::Exp => Call(Func::Exp, a.clone()),
                };
                simplify_mul(outer, da)
            }
            Limit(x, lo, hi) => simplify_mul(
                InBand(x.clone(), lo.clone(), hi.clone()),
                x.differentiate(wrt),
            ),
            // Piecewise-constant helpers: zero derivative almost everywhere.
            InBand(..) | SignOf(_) => Num(0.0),
        }
    }

    /// Collect every reference appearing in the tree.
    pub fn collect_refs(&self, out: &mut Vec<Ref>) {
        match self {
            Expr::Num(_) | Expr::Pi => {}
            Expr::Param(p) => push_unique(out, Ref::param(p)),
            Expr::Voltage(n) => push_unique(out, Ref::voltage(n)),
            Expr::Current(d) => push_unique(out, Ref::current(d)),
            Expr::Neg(a) | Expr::Call(_, a) | Expr::SignOf(a) => a.collect_refs(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            Expr::Limit(x, lo, hi) | Expr::InBand(x, lo, hi) => {
                x.collect_refs(out);
                lo.collect_refs(out);
                hi.collect_refs(out);
            }
        }
    }

    /// Replace parameter references by numeric values; leaves V/I refs alone.
    /// Unknown parameters are left in place (the caller decides whether that
    /// is an error).
    pub fn substitute_params(&self, env: &HashMap<String, f64>) -> Expr {
        match self {
            Expr::Param(p) => match env.get(&p.to_ascii_uppercase()) {
                Some(v) => Expr::Num(*v),
                None => self.clone(),
            },
            Expr::Num(_) | Expr::Pi | Expr::Voltage(_) | Expr::Current(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute_params(env))),
            Expr::Add(a, b) => Expr::Add(
                Box::new(a.substitute_params(env)),
                Box::new(b.substitute_params(env)),
            ),
            Expr::Sub(a, b) => Expr::Sub(
                Box::new(a.substitute_params(env)),
                Box::new(b.substitute_params(env)),
            ),
            Expr::Mul(a, b) => Expr::Mul(
                Box::new(a.substitute_params(env)),
                Box::new(b.substitute_params(env)),
            ),
            Expr::Div(a, b) => Expr::Div(
                Box::new(a.substitute_params(env)),
                Box::new(b.substitute_params(env)),
            ),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute_params(env))),
            Expr::Limit(x, lo, hi) => Expr::Limit(
                Box::new(x.substitute_params(env)),
                Box::new(lo.substitute_params(env)),
                Box::new(hi.substitute_params(env)),
            ),
            Expr::InBand(x, lo, hi) => Expr::InBand(
                Box::new(x.substitute_params(env)),
                Box::new(lo.substitute_params(env)),
                Box::new(hi.substitute_params(env)),
            ),
            Expr::SignOf(a) => Expr::SignOf(Box::new(a.substitute_params(env))),
        }
    }

    /// True when the tree contains no V/I/parameter references.
    pub fn is_constant(&self) -> bool {
        let mut refs = Vec::new();
        self.collect_refs(&mut refs);
        refs.is_empty()
    }

    /// Evaluate a reference-free expression.
    pub fn eval_constant(&self) -> Result<f64, ExprError> {
        self.eval_with(&mut |_| None)
    }
}

fn push_unique(out: &mut Vec<Ref>, r: Ref) {
    if !out.contains(&r) {
        out.push(r);
    }
}

// Light constant folding keeps derivative trees small; it must never change
// the value of an expression, only its shape.

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 0.0)
}
fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 1.0)
}

pub(crate) fn simplify_neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn simplify_add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        return Expr::Num(x + y);
    }
    Expr::Add(Box::new(a), Box::new(b))
}

pub(crate) fn simplify_sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return simplify_neg(b);
    }
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        return Expr::Num(x - y);
    }
    Expr::Sub(Box::new(a), Box::new(b))
}

pub(crate) fn simplify_mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return Expr::Num(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        return Expr::Num(x * y);
    }
    Expr::Mul(Box::new(a), Box::new(b))
}

pub(crate) fn simplify_div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return Expr::Num(0.0);
    }
    if is_one(&b) {
        return a;
    }
    Expr::Div(Box::new(a), Box::new(b))
}

impl fmt::Display for Expr {
    /// Prints with explicit parentheses around every compound term so that
    /// parse(print(e)) reproduces the tree structurally.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => write!(f, "PI"),
            Expr::Param(p) => write!(f, "{p}"),
            Expr::Voltage(n) => write!(f, "V({n})"),
            Expr::Current(d) => write!(f, "I({d})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a}+{b})"),
            Expr::Sub(a, b) => write!(f, "({a}-{b})"),
            Expr::Mul(a, b) => write!(f, "({a}*{b})"),
            Expr::Div(a, b) => write!(f, "({a}/{b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Limit(x, lo, hi) => write!(f, "limit({x},{lo},{hi})"),
            Expr::InBand(x, lo, hi) => write!(f, "INBAND({x},{lo},{hi})"),
            Expr::SignOf(a) => write!(f, "SGN({a})"),
        }
    }
}

// Operator overloads make the device emitters readable.
impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}
impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}
impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}
impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}
impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}
