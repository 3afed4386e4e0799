//! SPICE-subset netlist front end: lexing, parsing, and elaboration.
//!
//! The grammar is deliberately frozen to what the power-grid device library
//! needs: device letters V, B, R, C, L, X and the directives .SUBCKT, .ENDS,
//! .PARAM, .TRAN, .PRINT, .OPTIONS, .END. Anything else is a parse error.

mod elaborate;
mod lexer;
mod parser;

pub use elaborate::{elaborate, FlatCircuit, FlatDevice};
pub use parser::parse_netlist;

use std::collections::HashMap;
use std::fmt;

use crate::expr::Expr;

/// Device classes of the frozen grammar, keyed by the card's first letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    /// `V` card: independent voltage source (constant value).
    VSource,
    /// `B` card with `I={...}`: behavioral current source.
    BSourceI,
    /// `B` card with `V={...}`: behavioral voltage source.
    BSourceV,
    /// `R` card.
    Resistor,
    /// `C` card.
    Capacitor,
    /// `L` card.
    Inductor,
    /// `X` card: subcircuit instance.
    Instance,
}

impl DeviceKind {
    /// True for devices that introduce an auxiliary branch-current variable.
    pub fn has_branch_current(&self) -> bool {
        matches!(
            self,
            DeviceKind::VSource | DeviceKind::BSourceV | DeviceKind::Inductor
        )
    }
}

/// A card value: numeric constant or a `{...}` expression.
#[derive(Debug, Clone, PartialEq)]
pub enum CardValue {
    Num(f64),
    Expr(Expr),
}

impl CardValue {
    pub fn as_expr(&self) -> Expr {
        match self {
            CardValue::Num(v) => Expr::Num(*v),
            CardValue::Expr(e) => e.clone(),
        }
    }
}

/// One parsed device card.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceCard {
    pub kind: DeviceKind,
    pub name: String,
    pub nodes: Vec<String>,
    /// R/C/L/V value, or the B-source expression. `None` only for X cards.
    pub value: Option<CardValue>,
    /// Referenced subcircuit; `Some` only for X cards.
    pub subckt: Option<String>,
    /// `PARAMS:` overrides on X cards, in source order.
    pub params: Vec<(String, Expr)>,
}

impl DeviceCard {
    pub fn new(kind: DeviceKind, name: &str, nodes: &[&str], value: CardValue) -> DeviceCard {
        DeviceCard {
            kind,
            name: name.to_string(),
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            value: Some(value),
            subckt: None,
            params: Vec::new(),
        }
    }

    pub fn resistor(name: &str, a: &str, b: &str, ohms: f64) -> DeviceCard {
        Self::new(DeviceKind::Resistor, name, &[a, b], CardValue::Num(ohms))
    }
    pub fn capacitor(name: &str, a: &str, b: &str, farads: f64) -> DeviceCard {
        Self::new(DeviceKind::Capacitor, name, &[a, b], CardValue::Num(farads))
    }
    pub fn inductor(name: &str, a: &str, b: &str, henries: f64) -> DeviceCard {
        Self::new(DeviceKind::Inductor, name, &[a, b], CardValue::Num(henries))
    }
    pub fn vsource(name: &str, a: &str, b: &str, volts: f64) -> DeviceCard {
        Self::new(DeviceKind::VSource, name, &[a, b], CardValue::Num(volts))
    }
    pub fn bsource_i(name: &str, a: &str, b: &str, expr: Expr) -> DeviceCard {
        Self::new(DeviceKind::BSourceI, name, &[a, b], CardValue::Expr(expr))
    }
    pub fn bsource_v(name: &str, a: &str, b: &str, expr: Expr) -> DeviceCard {
        Self::new(DeviceKind::BSourceV, name, &[a, b], CardValue::Expr(expr))
    }
}

/// A `.SUBCKT` definition.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcktDef {
    pub name: String,
    pub ports: Vec<String>,
    /// Declared parameter defaults, in source order.
    pub param_defaults: Vec<(String, f64)>,
    pub body: Vec<DeviceCard>,
}

/// Analysis and housekeeping directives.
#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Tran { step: f64, t_stop: f64 },
    Print { vars: Vec<String> },
    Param { name: String, value: Expr },
    Options { entries: Vec<(String, f64)> },
}

/// A parsed netlist: title, top-level cards, subcircuit definitions, and
/// directives, in source order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetlistDocument {
    pub title: String,
    pub devices: Vec<DeviceCard>,
    pub subckt_defs: Vec<SubcktDef>,
    pub directives: Vec<Directive>,
}

impl NetlistDocument {
    pub fn subckt(&self, name: &str) -> Option<&SubcktDef> {
        self.subckt_defs
            .iter()
            .find(|s| s.name.eq_ignore_ascii_case(name))
    }

    /// The `.TRAN` directive, if present.
    pub fn tran(&self) -> Option<(f64, f64)> {
        self.directives.iter().find_map(|d| match d {
            Directive::Tran { step, t_stop } => Some((*step, *t_stop)),
            _ => None,
        })
    }

    /// All `.PRINT` variables in source order.
    pub fn print_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        for d in &self.directives {
            if let Directive::Print { vars } = d {
                out.extend(vars.iter().cloned());
            }
        }
        out
    }

    /// `.OPTIONS` entries merged in source order (later wins).
    pub fn options(&self) -> HashMap<String, f64> {
        let mut map = HashMap::new();
        for d in &self.directives {
            if let Directive::Options { entries } = d {
                for (k, v) in entries {
                    map.insert(k.to_ascii_uppercase(), *v);
                }
            }
        }
        map
    }
}

impl fmt::Display for CardValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CardValue::Num(v) => write!(f, "{v}"),
            CardValue::Expr(e) => write!(f, "{{{e}}}"),
        }
    }
}

impl fmt::Display for DeviceCard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        for n in &self.nodes {
            write!(f, " {n}")?;
        }
        match self.kind {
            DeviceKind::BSourceI => write!(f, " I=")?,
            DeviceKind::BSourceV => write!(f, " V=")?,
            DeviceKind::Instance => {
                write!(f, " {}", self.subckt.as_deref().unwrap_or("?"))?;
                if !self.params.is_empty() {
                    write!(f, " PARAMS:")?;
                    for (k, v) in &self.params {
                        match v {
                            Expr::Num(n) => write!(f, " {k}={n}")?,
                            other => write!(f, " {k}={{{other}}}")?,
                        }
                    }
                }
                return Ok(());
            }
            _ => write!(f, " ")?,
        }
        match &self.value {
            Some(v) => write!(f, "{v}"),
            None => Ok(()),
        }
    }
}

impl fmt::Display for SubcktDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, ".SUBCKT {}", self.name)?;
        for p in &self.ports {
            write!(f, " {p}")?;
        }
        if !self.param_defaults.is_empty() {
            write!(f, " PARAMS:")?;
            for (k, v) in &self.param_defaults {
                write!(f, " {k}={v}")?;
            }
        }
        writeln!(f)?;
        for card in &self.body {
            writeln!(f, "{card}")?;
        }
        write!(f, ".ENDS")
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Tran { step, t_stop } => write!(f, ".TRAN {step} {t_stop}"),
            Directive::Print { vars } => {
                write!(f, ".PRINT TRAN")?;
                for v in vars {
                    write!(f, " {v}")?;
                }
                Ok(())
            }
            Directive::Param { name, value } => match value {
                Expr::Num(n) => write!(f, ".PARAM {name}={n}"),
                other => write!(f, ".PARAM {name}={{{other}}}"),
            },
            Directive::Options { entries } => {
                write!(f, ".OPTIONS")?;
                for (k, v) in entries {
                    write!(f, " {k}={v}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for NetlistDocument {
    /// Pretty-prints to a form that re-parses to a structurally identical
    /// document.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.title.is_empty() {
            writeln!(f, "{}", self.title)?;
        } else {
            // Keep the title slot occupied so the first card is never
            // mistaken for a title on re-parse.
            writeln!(f, "* untitled")?;
        }
        for d in &self.directives {
            if let Directive::Param { .. } = d {
                writeln!(f, "{d}")?;
            }
        }
        for s in &self.subckt_defs {
            writeln!(f, "{s}")?;
        }
        for c in &self.devices {
            writeln!(f, "{c}")?;
        }
        for d in &self.directives {
            match d {
                Directive::Param { .. } => {}
                other => writeln!(f, "{other}")?,
            }
        }
        writeln!(f, ".END")
    }
}
