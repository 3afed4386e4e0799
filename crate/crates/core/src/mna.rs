//! Modified nodal analysis: per-device stamping into the residual and
//! Jacobian of the DAE f(x, dx/dt, t) = 0.
//!
//! The system splits into a resistive part f_static(x, t) and a reactive
//! charge/flux part q(x), with full residual f_static + d q/dt. For the
//! device set here q is linear in x, so dq/dt = C * dx/dt with a constant
//! C matrix. Matrices are dense; the systems are at most a few dozen
//! variables.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{DeviceEvalError, ExprError, StampError};
use crate::expr::{Expr, Func};
use crate::netlist::{DeviceKind, FlatCircuit};

/// Variable ordering of the MNA system: one entry per non-ground node, then
/// one auxiliary current per voltage-defining source, then one per inductor.
#[derive(Debug, Clone)]
pub struct SystemLayout {
    pub n_nodes: usize,
    pub n_aux: usize,
    pub var_names: Vec<String>,
    name_lookup: HashMap<String, usize>,
    aux_of_device: HashMap<String, usize>,
}

impl SystemLayout {
    pub fn total(&self) -> usize {
        self.n_nodes + self.n_aux
    }

    /// Variable index by name ("V(node)" / "I(device)"), case-insensitive.
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.name_lookup.get(&name.to_ascii_uppercase()).copied()
    }

    /// Auxiliary-current variable of a device, if it has one.
    pub fn aux_index(&self, device: &str) -> Option<usize> {
        self.aux_of_device
            .get(&device.to_ascii_uppercase())
            .copied()
    }
}

/// Assign MNA variable indices for a flat circuit.
pub fn build_layout(c: &FlatCircuit) -> Result<SystemLayout, StampError> {
    let n_nodes = c.node_count().saturating_sub(1);
    if n_nodes == 0 {
        return Err(StampError::EmptyCircuit);
    }
    let mut var_names = Vec::with_capacity(n_nodes + c.num_aux);
    for name in &c.node_names[1..] {
        var_names.push(format!("V({name})"));
    }
    let mut aux_of_device = HashMap::new();
    for d in c
        .instances
        .iter()
        .filter(|d| matches!(d.kind, DeviceKind::VSource | DeviceKind::BSourceV))
        .chain(
            c.instances
                .iter()
                .filter(|d| d.kind == DeviceKind::Inductor),
        )
    {
        aux_of_device.insert(d.name.to_ascii_uppercase(), var_names.len());
        var_names.push(format!("I({})", d.name));
    }
    let n_aux = var_names.len() - n_nodes;
    debug_assert_eq!(n_aux, c.num_aux);

    let name_lookup = var_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.to_ascii_uppercase(), i))
        .collect();
    Ok(SystemLayout {
        n_nodes,
        n_aux,
        var_names,
        name_lookup,
        aux_of_device,
    })
}

// ---------------------------------------------------------------------------
// Resolved expressions: references bound to variable indices
// ---------------------------------------------------------------------------

/// An expression with V/I references resolved to solution-vector indices.
#[derive(Debug, Clone)]
enum REx {
    Num(f64),
    Var(usize),
    Neg(Box<REx>),
    Add(Box<REx>, Box<REx>),
    Sub(Box<REx>, Box<REx>),
    Mul(Box<REx>, Box<REx>),
    Div(Box<REx>, Box<REx>),
    Call(Func, Box<REx>),
    Limit(Box<REx>, Box<REx>, Box<REx>),
    InBand(Box<REx>, Box<REx>, Box<REx>),
    Sign(Box<REx>),
}

impl REx {
    fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        match self {
            REx::Num(v) => Ok(*v),
            REx::Var(i) => Ok(x[*i]),
            REx::Neg(a) => Ok(-a.eval(x)?),
            REx::Add(a, b) => Ok(a.eval(x)? + b.eval(x)?),
            REx::Sub(a, b) => Ok(a.eval(x)? - b.eval(x)?),
            REx::Mul(a, b) => {
                // Subgradient convention for derivative chains: an exact-zero
                // factor annihilates an unbounded partner (e.g. d/dx of
                // ACOS(limit(u,-1,1)) in the clamped region is 0, not NaN).
                match (a.eval(x), b.eval(x)) {
                    (Ok(va), Ok(vb)) => Ok(va * vb),
                    (Ok(v), Err(_)) | (Err(_), Ok(v)) if v == 0.0 => Ok(0.0),
                    (Err(e), _) | (_, Err(e)) => Err(e),
                }
            }
            REx::Div(a, b) => {
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero(b.to_string()));
                }
                Ok(a.eval(x)? / den)
            }
            REx::Call(f, a) => {
                let v = a.eval(x)?;
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
            REx::Limit(e, lo, hi) => {
                let (v, lo, hi) = (e.eval(x)?, lo.eval(x)?, hi.eval(x)?);
                if lo > hi {
                    return Err(ExprError::LimitBounds { lo, hi });
                }
                Ok(v.max(lo).min(hi))
            }
            REx::InBand(e, lo, hi) => {
                let (v, lo, hi) = (e.eval(x)?, lo.eval(x)?, hi.eval(x)?);
                Ok(if v > lo && v < hi { 1.0 } else { 0.0 })
            }
            REx::Sign(a) => {
                let v = a.eval(x)?;
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

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            REx::Num(_) => {}
            REx::Var(i) => {
                if !out.contains(i) {
                    out.push(*i);
                }
            }
            REx::Neg(a) | REx::Call(_, a) | REx::Sign(a) => a.collect_vars(out),
            REx::Add(a, b) | REx::Sub(a, b) | REx::Mul(a, b) | REx::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            REx::Limit(a, b, c) | REx::InBand(a, b, c) => {
                a.collect_vars(out);
                b.collect_vars(out);
                c.collect_vars(out);
            }
        }
    }

    /// Symbolic partial derivative with respect to variable `v`, with the
    /// same subgradient conventions as [`Expr::differentiate`].
    fn diff(&self, v: usize) -> REx {
        use REx::*;
        match self {
            Num(_) => Num(0.0),
            Var(i) => Num(if *i == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(v)),
            Add(a, b) => add(a.diff(v), b.diff(v)),
            Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Mul(a, b) => add(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
            Div(a, b) => sub(
                div(a.diff(v), (**b).clone()),
                div(
                    mul((**a).clone(), b.diff(v)),
                    mul((**b).clone(), (**b).clone()),
                ),
            ),
            Call(f, a) => {
                let da = a.diff(v);
                let outer = match f {
                    Func::Sqrt => div(Num(1.0), mul(Num(2.0), Call(Func::Sqrt, a.clone()))),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Acos => neg(div(
                        Num(1.0),
                        Call(
                            Func::Sqrt,
                            Box::new(sub(Num(1.0), mul((**a).clone(), (**a).clone()))),
                        ),
                    )),
                    Func::Abs => Sign(a.clone()),
                    Func::Exp => Call(Func::Exp, a.clone()),
                };
                mul(outer, da)
            }
            Limit(x, lo, hi) => mul(InBand(x.clone(), lo.clone(), hi.clone()), x.diff(v)),
            InBand(..) | Sign(_) => Num(0.0),
        }
    }
}

impl std::fmt::Display for REx {
    /// Infix rendering with `x<i>` for solution variables, for error
    /// messages.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            REx::Num(v) => write!(f, "{v}"),
            REx::Var(i) => write!(f, "x{i}"),
            REx::Neg(a) => write!(f, "(-{a})"),
            REx::Add(a, b) => write!(f, "({a}+{b})"),
            REx::Sub(a, b) => write!(f, "({a}-{b})"),
            REx::Mul(a, b) => write!(f, "({a}*{b})"),
            REx::Div(a, b) => write!(f, "({a}/{b})"),
            REx::Call(func, a) => write!(f, "{}({a})", func.name()),
            REx::Limit(x, lo, hi) => write!(f, "limit({x},{lo},{hi})"),
            REx::InBand(x, lo, hi) => write!(f, "INBAND({x},{lo},{hi})"),
            REx::Sign(a) => write!(f, "SGN({a})"),
        }
    }
}

fn is_zero(e: &REx) -> bool {
    matches!(e, REx::Num(v) if *v == 0.0)
}
fn is_one(e: &REx) -> bool {
    matches!(e, REx::Num(v) if *v == 1.0)
}
fn neg(a: REx) -> REx {
    match a {
        REx::Num(v) => REx::Num(-v),
        o => REx::Neg(Box::new(o)),
    }
}
fn add(a: REx, b: REx) -> REx {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    if let (REx::Num(x), REx::Num(y)) = (&a, &b) {
        return REx::Num(x + y);
    }
    REx::Add(Box::new(a), Box::new(b))
}
fn sub(a: REx, b: REx) -> REx {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return neg(b);
    }
    if let (REx::Num(x), REx::Num(y)) = (&a, &b) {
        return REx::Num(x - y);
    }
    REx::Sub(Box::new(a), Box::new(b))
}
fn mul(a: REx, b: REx) -> REx {
    if is_zero(&a) || is_zero(&b) {
        return REx::Num(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if let (REx::Num(x), REx::Num(y)) = (&a, &b) {
        return REx::Num(x * y);
    }
    REx::Mul(Box::new(a), Box::new(b))
}
fn div(a: REx, b: REx) -> REx {
    if is_zero(&a) {
        return REx::Num(0.0);
    }
    if is_one(&b) {
        return a;
    }
    REx::Div(Box::new(a), Box::new(b))
}

fn resolve(e: &Expr, layout: &SystemLayout, device: &str) -> Result<REx, StampError> {
    Ok(match e {
        Expr::Num(v) => REx::Num(*v),
        Expr::Pi => REx::Num(std::f64::consts::PI),
        Expr::Param(p) => {
            return Err(StampError::UnresolvedParam {
                device: device.to_string(),
                param: p.clone(),
            })
        }
        Expr::Voltage(n) => match layout.var_index(&format!("V({n})")) {
            Some(i) => REx::Var(i),
            None if n == "0" => REx::Num(0.0),
            None => {
                return Err(StampError::UnknownNodeRef {
                    device: device.to_string(),
                    node: n.clone(),
                })
            }
        },
        Expr::Current(d) => match layout.aux_index(d) {
            Some(i) => REx::Var(i),
            None => {
                return Err(StampError::BadCurrentRef {
                    device: device.to_string(),
                    target: d.clone(),
                })
            }
        },
        Expr::Neg(a) => REx::Neg(Box::new(resolve(a, layout, device)?)),
        Expr::Add(a, b) => REx::Add(
            Box::new(resolve(a, layout, device)?),
            Box::new(resolve(b, layout, device)?),
        ),
        Expr::Sub(a, b) => REx::Sub(
            Box::new(resolve(a, layout, device)?),
            Box::new(resolve(b, layout, device)?),
        ),
        Expr::Mul(a, b) => REx::Mul(
            Box::new(resolve(a, layout, device)?),
            Box::new(resolve(b, layout, device)?),
        ),
        Expr::Div(a, b) => REx::Div(
            Box::new(resolve(a, layout, device)?),
            Box::new(resolve(b, layout, device)?),
        ),
        Expr::Call(f, a) => REx::Call(*f, Box::new(resolve(a, layout, device)?)),
        Expr::Limit(x, lo, hi) => REx::Limit(
            Box::new(resolve(x, layout, device)?),
            Box::new(resolve(lo, layout, device)?),
            Box::new(resolve(hi, layout, device)?),
        ),
        Expr::InBand(x, lo, hi) => REx::InBand(
            Box::new(resolve(x, layout, device)?),
            Box::new(resolve(lo, layout, device)?),
            Box::new(resolve(hi, layout, device)?),
        ),
        Expr::SignOf(a) => REx::Sign(Box::new(resolve(a, layout, device)?)),
    })
}

// ---------------------------------------------------------------------------
// Stamps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Stamp {
    Resistor {
        a: Option<usize>,
        b: Option<usize>,
        g: f64,
    },
    Capacitor {
        a: Option<usize>,
        b: Option<usize>,
        c: f64,
    },
    VSource {
        a: Option<usize>,
        b: Option<usize>,
        aux: usize,
        value: f64,
    },
    Inductor {
        a: Option<usize>,
        b: Option<usize>,
        aux: usize,
        l: f64,
    },
    BCurrent {
        name: String,
        a: Option<usize>,
        b: Option<usize>,
        expr: REx,
        partials: Vec<(usize, REx)>,
    },
    BVoltage {
        name: String,
        a: Option<usize>,
        b: Option<usize>,
        aux: usize,
        expr: REx,
        partials: Vec<(usize, REx)>,
    },
}

/// The assembled DAE: residual/Jacobian evaluators over a fixed layout.
///
/// Immutable after construction; evaluation methods take caller-owned
/// buffers, so concurrent evaluation at different points is safe.
#[derive(Debug, Clone)]
pub struct DaeSystem {
    pub layout: SystemLayout,
    stamps: Vec<Stamp>,
    source_scale: f64,
}

/// Build the DAE by stamping every device of the flat circuit.
pub fn stamp_all(c: &FlatCircuit, layout: &SystemLayout) -> Result<DaeSystem, StampError> {
    let var_of_node = |n: usize| -> Option<usize> {
        if n == 0 {
            None
        } else {
            Some(n - 1)
        }
    };
    let mut stamps = Vec::with_capacity(c.instances.len());
    for d in &c.instances {
        let a = var_of_node(d.nodes[0]);
        let b = var_of_node(d.nodes[1]);
        let stamp = match d.kind {
            DeviceKind::Resistor => {
                if d.value == 0.0 {
                    return Err(StampError::ZeroResistance {
                        device: d.name.clone(),
                    });
                }
                Stamp::Resistor {
                    a,
                    b,
                    g: 1.0 / d.value,
                }
            }
            DeviceKind::Capacitor => Stamp::Capacitor { a, b, c: d.value },
            DeviceKind::Inductor => Stamp::Inductor {
                a,
                b,
                aux: layout.aux_index(&d.name).expect("layout covers inductors"),
                l: d.value,
            },
            DeviceKind::VSource => Stamp::VSource {
                a,
                b,
                aux: layout.aux_index(&d.name).expect("layout covers V sources"),
                value: d.value,
            },
            DeviceKind::BSourceI | DeviceKind::BSourceV => {
                let expr = resolve(d.expr.as_ref().expect("B source has expr"), layout, &d.name)?;
                let mut vars = Vec::new();
                expr.collect_vars(&mut vars);
                let mut partials = Vec::new();
                for v in vars {
                    let dv = expr.diff(v);
                    if !is_zero(&dv) {
                        partials.push((v, dv));
                    }
                }
                if d.kind == DeviceKind::BSourceI {
                    Stamp::BCurrent {
                        name: d.name.clone(),
                        a,
                        b,
                        expr,
                        partials,
                    }
                } else {
                    Stamp::BVoltage {
                        name: d.name.clone(),
                        a,
                        b,
                        aux: layout.aux_index(&d.name).expect("layout covers B-V sources"),
                        expr,
                        partials,
                    }
                }
            }
            DeviceKind::Instance => unreachable!("flat circuits contain no X cards"),
        };
        stamps.push(stamp);
    }
    Ok(DaeSystem {
        layout: layout.clone(),
        stamps,
        source_scale: 1.0,
    })
}

fn acc(v: &mut DVector<f64>, idx: Option<usize>, val: f64) {
    if let Some(i) = idx {
        v[i] += val;
    }
}

fn acc_m(m: &mut DMatrix<f64>, r: Option<usize>, c: Option<usize>, val: f64) {
    if let (Some(r), Some(c)) = (r, c) {
        m[(r, c)] += val;
    }
}

impl DaeSystem {
    /// A copy whose independent V-source values are scaled by `s`
    /// (continuation aid for the DC solve).
    pub fn with_source_scale(&self, s: f64) -> DaeSystem {
        let mut sys = self.clone();
        sys.source_scale = s;
        sys
    }

    /// Resistive residual part f_static(x, t).
    pub fn f_static(
        &self,
        x: &DVector<f64>,
        _t: f64,
        out: &mut DVector<f64>,
    ) -> Result<(), DeviceEvalError> {
        out.fill(0.0);
        let xs = x.as_slice();
        let get = |i: Option<usize>| i.map_or(0.0, |i| xs[i]);
        for s in &self.stamps {
            match s {
                Stamp::Resistor { a, b, g } => {
                    let i = g * (get(*a) - get(*b));
                    acc(out, *a, i);
                    acc(out, *b, -i);
                }
                Stamp::Capacitor { .. } => {}
                Stamp::VSource { a, b, aux, value } => {
                    let i = xs[*aux];
                    acc(out, *a, i);
                    acc(out, *b, -i);
                    out[*aux] += get(*a) - get(*b) - self.source_scale * value;
                }
                Stamp::Inductor { a, b, aux, .. } => {
                    let i = xs[*aux];
                    acc(out, *a, i);
                    acc(out, *b, -i);
                    out[*aux] += get(*a) - get(*b);
                }
                Stamp::BCurrent { name, a, b, expr, .. } => {
                    let i = expr.eval(xs).map_err(|e| DeviceEvalError {
                        device: name.clone(),
                        source: e,
                    })?;
                    acc(out, *a, i);
                    acc(out, *b, -i);
                }
                Stamp::BVoltage {
                    name,
                    a,
                    b,
                    aux,
                    expr,
                    ..
                } => {
                    let i = xs[*aux];
                    acc(out, *a, i);
                    acc(out, *b, -i);
                    let v = expr.eval(xs).map_err(|e| DeviceEvalError {
                        device: name.clone(),
                        source: e,
                    })?;
                    out[*aux] += get(*a) - get(*b) - v;
                }
            }
        }
        Ok(())
    }

    /// Reactive part q(x): capacitor charges and (negated) inductor fluxes.
    pub fn q(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        let xs = x.as_slice();
        let get = |i: Option<usize>| i.map_or(0.0, |i| xs[i]);
        for s in &self.stamps {
            match s {
                Stamp::Capacitor { a, b, c } => {
                    let q = c * (get(*a) - get(*b));
                    acc(out, *a, q);
                    acc(out, *b, -q);
                }
                Stamp::Inductor { aux, l, .. } => {
                    out[*aux] += -l * xs[*aux];
                }
                _ => {}
            }
        }
    }

    /// Jacobian of the resistive part, ∂f_static/∂x.
    pub fn g_matrix(
        &self,
        x: &DVector<f64>,
        _t: f64,
        out: &mut DMatrix<f64>,
    ) -> Result<(), DeviceEvalError> {
        out.fill(0.0);
        let xs = x.as_slice();
        for s in &self.stamps {
            match s {
                Stamp::Resistor { a, b, g } => {
                    acc_m(out, *a, *a, *g);
                    acc_m(out, *b, *b, *g);
                    acc_m(out, *a, *b, -g);
                    acc_m(out, *b, *a, -g);
                }
                Stamp::Capacitor { .. } => {}
                Stamp::VSource { a, b, aux, .. } | Stamp::Inductor { a, b, aux, .. } => {
                    acc_m(out, *a, Some(*aux), 1.0);
                    acc_m(out, *b, Some(*aux), -1.0);
                    acc_m(out, Some(*aux), *a, 1.0);
                    acc_m(out, Some(*aux), *b, -1.0);
                }
                Stamp::BCurrent {
                    name, a, b, partials, ..
                } => {
                    for (v, dexpr) in partials {
                        let dv = dexpr.eval(xs).map_err(|e| DeviceEvalError {
                            device: name.clone(),
                            source: e,
                        })?;
                        acc_m(out, *a, Some(*v), dv);
                        acc_m(out, *b, Some(*v), -dv);
                    }
                }
                Stamp::BVoltage {
                    name,
                    a,
                    b,
                    aux,
                    partials,
                    ..
                } => {
                    acc_m(out, *a, Some(*aux), 1.0);
                    acc_m(out, *b, Some(*aux), -1.0);
                    acc_m(out, Some(*aux), *a, 1.0);
                    acc_m(out, Some(*aux), *b, -1.0);
                    for (v, dexpr) in partials {
                        let dv = dexpr.eval(xs).map_err(|e| DeviceEvalError {
                            device: name.clone(),
                            source: e,
                        })?;
                        acc_m(out, Some(*aux), Some(*v), -dv);
                    }
                }
            }
        }
        Ok(())
    }

    /// Jacobian of the reactive part, ∂q/∂x (constant for this device set).
    pub fn c_matrix(&self, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for s in &self.stamps {
            match s {
                Stamp::Capacitor { a, b, c } => {
                    acc_m(out, *a, *a, *c);
                    acc_m(out, *b, *b, *c);
                    acc_m(out, *a, *b, -c);
                    acc_m(out, *b, *a, -c);
                }
                Stamp::Inductor { aux, l, .. } => {
                    out[(*aux, *aux)] += -l;
                }
                _ => {}
            }
        }
    }

    /// Full residual f_static(x, t) + (∂q/∂x)·xdot.
    pub fn residual(
        &self,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>, DeviceEvalError> {
        let n = self.layout.total();
        let mut f = DVector::zeros(n);
        self.f_static(x, t, &mut f)?;
        let mut c = DMatrix::zeros(n, n);
        self.c_matrix(&mut c);
        f += c * xdot;
        Ok(f)
    }

    /// Iteration matrix ∂f_static/∂x + alpha·∂q/∂x (alpha = 1/h for BDF1,
    /// 0 for DC).
    pub fn jacobian(
        &self,
        x: &DVector<f64>,
        t: f64,
        alpha: f64,
    ) -> Result<DMatrix<f64>, DeviceEvalError> {
        let n = self.layout.total();
        let mut g = DMatrix::zeros(n, n);
        self.g_matrix(x, t, &mut g)?;
        if alpha != 0.0 {
            let mut c = DMatrix::zeros(n, n);
            self.c_matrix(&mut c);
            g += c * alpha;
        }
        Ok(g)
    }
}
