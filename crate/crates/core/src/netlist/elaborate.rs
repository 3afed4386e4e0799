//! Subcircuit expansion: turns a parsed document into a flat circuit over a
//! global node index.
//!
//! Internal nodes and devices are renamed `<instance>.<name>` so that
//! waveform columns stay human-readable. Ground (`0`) is never renamed.

use std::collections::HashMap;

use crate::error::ElabError;
use crate::expr::{Expr, Ref};

use super::{CardValue, DeviceCard, DeviceKind, Directive, NetlistDocument};

const MAX_DEPTH: usize = 32;

/// One flattened device instance. Node names have been resolved to indices
/// into [`FlatCircuit::node_names`]; ground is index 0.
#[derive(Debug, Clone)]
pub struct FlatDevice {
    pub kind: DeviceKind,
    pub name: String,
    pub nodes: Vec<usize>,
    /// R/C/L/V numeric value (0.0 for behavioral sources).
    pub value: f64,
    /// Behavioral-source expression, with parameters already substituted.
    pub expr: Option<Expr>,
}

/// A fully elaborated circuit.
#[derive(Debug, Clone)]
pub struct FlatCircuit {
    /// Index 0 is ground ("0").
    pub node_names: Vec<String>,
    node_lookup: HashMap<String, usize>,
    pub instances: Vec<FlatDevice>,
    /// One auxiliary current per V source, behavioral V source, and inductor.
    pub num_aux: usize,
}

impl FlatCircuit {
    pub fn node_id(&self, name: &str) -> Option<usize> {
        self.node_lookup.get(&name.to_ascii_uppercase()).copied()
    }

    /// Number of nodes including ground.
    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn device(&self, name: &str) -> Option<&FlatDevice> {
        self.instances
            .iter()
            .find(|d| d.name.eq_ignore_ascii_case(name))
    }
}

/// Expand all subcircuit instances and substitute parameters.
pub fn elaborate(doc: &NetlistDocument) -> Result<FlatCircuit, ElabError> {
    // Global .PARAM values, evaluated in source order; later definitions may
    // reference earlier ones.
    let mut globals: HashMap<String, f64> = HashMap::new();
    for d in &doc.directives {
        if let Directive::Param { name, value } = d {
            let sub = value.substitute_params(&globals);
            let v = sub.eval_constant().map_err(|source| ElabError::Expr {
                device: format!(".PARAM {name}"),
                source,
            })?;
            globals.insert(name.to_ascii_uppercase(), v);
        }
    }

    let mut flat_cards: Vec<DeviceCard> = Vec::new();
    for card in &doc.devices {
        expand_card(doc, card, "", &globals, 0, &mut flat_cards)?;
    }

    build_flat(&flat_cards)
}

fn expand_card(
    doc: &NetlistDocument,
    card: &DeviceCard,
    prefix: &str,
    env: &HashMap<String, f64>,
    depth: usize,
    out: &mut Vec<DeviceCard>,
) -> Result<(), ElabError> {
    if card.kind != DeviceKind::Instance {
        let mut c = card.clone();
        c.name = prefixed(prefix, &card.name);
        if let Some(CardValue::Expr(e)) = &card.value {
            c.value = Some(CardValue::Expr(rename_refs(
                &e.substitute_params(env),
                prefix,
                &HashMap::new(),
            )));
        }
        out.push(c);
        return Ok(());
    }

    if depth >= MAX_DEPTH {
        return Err(ElabError::RecursionLimit {
            instance: prefixed(prefix, &card.name),
            limit: MAX_DEPTH,
        });
    }

    let subckt_name = card.subckt.as_deref().unwrap_or_default();
    let def = doc
        .subckt(subckt_name)
        .ok_or_else(|| ElabError::UndefinedSubckt {
            instance: prefixed(prefix, &card.name),
            subckt: subckt_name.to_string(),
        })?;

    if def.ports.len() != card.nodes.len() {
        return Err(ElabError::PortArity {
            instance: prefixed(prefix, &card.name),
            subckt: def.name.clone(),
            given: card.nodes.len(),
            expected: def.ports.len(),
        });
    }

    // Parameter scope: declared defaults overridden by instance PARAMS.
    // Override expressions are evaluated in the enclosing scope.
    let mut scope: HashMap<String, f64> = def
        .param_defaults
        .iter()
        .map(|(k, v)| (k.to_ascii_uppercase(), *v))
        .collect();
    for (k, vexpr) in &card.params {
        let key = k.to_ascii_uppercase();
        if !scope.contains_key(&key) {
            return Err(ElabError::UndeclaredParam {
                instance: prefixed(prefix, &card.name),
                param: k.clone(),
            });
        }
        let v = vexpr
            .substitute_params(env)
            .eval_constant()
            .map_err(|source| ElabError::Expr {
                device: prefixed(prefix, &card.name),
                source,
            })?;
        scope.insert(key, v);
    }

    // Port -> outer node binding (keys uppercased).
    let inst_path = prefixed(prefix, &card.name);
    let mut port_map: HashMap<String, String> = HashMap::new();
    for (port, outer) in def.ports.iter().zip(card.nodes.iter()) {
        port_map.insert(port.to_ascii_uppercase(), outer.clone());
    }

    for body_card in &def.body {
        if body_card.kind == DeviceKind::Instance {
            let mut inner = body_card.clone();
            inner.nodes = inner
                .nodes
                .iter()
                .map(|n| map_node(n, &inst_path, &port_map))
                .collect();
            // Nested instance parameter values may reference this scope.
            inner.params = inner
                .params
                .into_iter()
                .map(|(k, v)| (k, v.substitute_params(&scope)))
                .collect();
            expand_card(doc, &inner, &inst_path, &scope, depth + 1, out)?;
            continue;
        }
        let mut c = body_card.clone();
        c.name = prefixed(&inst_path, &body_card.name);
        c.nodes = c
            .nodes
            .iter()
            .map(|n| map_node(n, &inst_path, &port_map))
            .collect();
        c.value = match &body_card.value {
            Some(CardValue::Expr(e)) => Some(CardValue::Expr(rename_refs(
                &e.substitute_params(&scope),
                &inst_path,
                &port_map,
            ))),
            other => other.clone(),
        };
        out.push(c);
    }
    Ok(())
}

fn prefixed(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn map_node(node: &str, inst_path: &str, port_map: &HashMap<String, String>) -> String {
    if node == "0" {
        return "0".to_string();
    }
    match port_map.get(&node.to_ascii_uppercase()) {
        Some(outer) => outer.clone(),
        None => prefixed(inst_path, node),
    }
}

/// Rewrite V(.)/I(.) references for the instance scope: ports map to outer
/// nodes, internal names gain the instance prefix. Device references always
/// gain the prefix (they name devices in the same scope).
fn rename_refs(e: &Expr, inst_path: &str, port_map: &HashMap<String, String>) -> Expr {
    match e {
        Expr::Voltage(n) => Expr::Voltage(map_node(n, inst_path, port_map)),
        Expr::Current(d) => Expr::Current(prefixed(inst_path, d)),
        Expr::Num(_) | Expr::Pi | Expr::Param(_) => e.clone(),
        Expr::Neg(a) => Expr::Neg(Box::new(rename_refs(a, inst_path, port_map))),
        Expr::Add(a, b) => Expr::Add(
            Box::new(rename_refs(a, inst_path, port_map)),
            Box::new(rename_refs(b, inst_path, port_map)),
        ),
        Expr::Sub(a, b) => Expr::Sub(
            Box::new(rename_refs(a, inst_path, port_map)),
            Box::new(rename_refs(b, inst_path, port_map)),
        ),
        Expr::Mul(a, b) => Expr::Mul(
            Box::new(rename_refs(a, inst_path, port_map)),
            Box::new(rename_refs(b, inst_path, port_map)),
        ),
        Expr::Div(a, b) => Expr::Div(
            Box::new(rename_refs(a, inst_path, port_map)),
            Box::new(rename_refs(b, inst_path, port_map)),
        ),
        Expr::Call(f, a) => Expr::Call(*f, Box::new(rename_refs(a, inst_path, port_map))),
        Expr::Limit(x, lo, hi) => Expr::Limit(
            Box::new(rename_refs(x, inst_path, port_map)),
            Box::new(rename_refs(lo, inst_path, port_map)),
            Box::new(rename_refs(hi, inst_path, port_map)),
        ),
        Expr::InBand(x, lo, hi) => Expr::InBand(
            Box::new(rename_refs(x, inst_path, port_map)),
            Box::new(rename_refs(lo, inst_path, port_map)),
            Box::new(rename_refs(hi, inst_path, port_map)),
        ),
        Expr::SignOf(a) => Expr::SignOf(Box::new(rename_refs(a, inst_path, port_map))),
    }
}

fn build_flat(cards: &[DeviceCard]) -> Result<FlatCircuit, ElabError> {
    let mut node_names: Vec<String> = vec!["0".to_string()];
    let mut node_lookup: HashMap<String, usize> = HashMap::new();
    node_lookup.insert("0".to_string(), 0);

    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut instances = Vec::new();
    let mut num_aux = 0usize;

    for card in cards {
        let key = card.name.to_ascii_uppercase();
        if seen.insert(key, ()).is_some() {
            return Err(ElabError::DuplicateDevice {
                name: card.name.clone(),
            });
        }

        let mut nodes = Vec::with_capacity(card.nodes.len());
        for n in &card.nodes {
            let key = n.to_ascii_uppercase();
            let idx = match node_lookup.get(&key) {
                Some(i) => *i,
                None => {
                    let i = node_names.len();
                    node_names.push(n.clone());
                    node_lookup.insert(key, i);
                    i
                }
            };
            nodes.push(idx);
        }

        let (value, expr) = match card.kind {
            DeviceKind::BSourceI | DeviceKind::BSourceV => {
                let e = match &card.value {
                    Some(CardValue::Expr(e)) => e.clone(),
                    Some(CardValue::Num(v)) => Expr::Num(*v),
                    None => Expr::Num(0.0),
                };
                (0.0, Some(e))
            }
            _ => {
                let v = match &card.value {
                    Some(CardValue::Num(v)) => *v,
                    Some(CardValue::Expr(e)) => {
                        e.eval_constant().map_err(|_| ElabError::NonConstantValue {
                            device: card.name.clone(),
                        })?
                    }
                    None => {
                        return Err(ElabError::NonConstantValue {
                            device: card.name.clone(),
                        })
                    }
                };
                (v, None)
            }
        };

        if card.kind.has_branch_current() {
            num_aux += 1;
        }
        instances.push(FlatDevice {
            kind: card.kind,
            name: card.name.clone(),
            nodes,
            value,
            expr,
        });
    }

    let flat = FlatCircuit {
        node_names,
        node_lookup,
        instances,
        num_aux,
    };
    validate_refs(&flat)?;
    Ok(flat)
}

/// Every V(.) must name a circuit node and every I(.) a device that carries
/// a branch current; parameters must all have been substituted away.
fn validate_refs(c: &FlatCircuit) -> Result<(), ElabError> {
    let mut with_current: HashMap<String, ()> = HashMap::new();
    for d in &c.instances {
        if d.kind.has_branch_current() {
            with_current.insert(d.name.to_ascii_uppercase(), ());
        }
    }
    for d in &c.instances {
        let Some(expr) = &d.expr else { continue };
        let mut refs = Vec::new();
        expr.collect_refs(&mut refs);
        for r in refs {
            match r {
                Ref::Param(p) => {
                    return Err(ElabError::Expr {
                        device: d.name.clone(),
                        source: crate::error::ExprError::Unbound(p),
                    })
                }
                Ref::Voltage(n) => {
                    if c.node_id(&n).is_none() {
                        return Err(ElabError::UnknownNodeRef {
                            device: d.name.clone(),
                            node: n,
                        });
                    }
                }
                Ref::Current(t) => {
                    if !with_current.contains_key(&t.to_ascii_uppercase()) {
                        return Err(ElabError::BadCurrentRef {
                            device: d.name.clone(),
                            target: t,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    const CPL_LIB: &str = "\
* constant power load
.SUBCKT CPL RNode INode PARAMS: P=0.5 Q=0.0 CurrLim=1000
BloadR RNode ammR
+ I={limit((P*V(RNode)+Q*V(INode))/(V(RNode)*V(RNode)+V(INode)*V(INode)), -CurrLim,CurrLim)}
BloadI INode ammI
+ I={limit((P*V(INode)-Q*V(RNode))/(V(RNode)*V(RNode)+V(INode)*V(INode)), -CurrLim, CurrLim)}
VammR ammR 0 0V
VammI ammI 0 0V
.ENDS
";

    #[test]
    fn cpl_instance_expands_with_overrides() {
        let src = format!("{CPL_LIB}Xload1 bus1R bus1I CPL PARAMS: P=0.9 Q=0.49\n");
        let doc = parse_netlist(&src).unwrap();
        let flat = elaborate(&doc).unwrap();
        assert_eq!(flat.instances.len(), 4);
        assert_eq!(flat.num_aux, 2);

        // Internal nodes gain the instance prefix; ports bind to outer nodes.
        assert!(flat.node_id("bus1R").is_some());
        assert!(flat.node_id("Xload1.ammR").is_some());
        assert!(flat.node_id("RNode").is_none());

        // P=0.9 substituted into the expression: at V=1+j0 the real-part
        // current evaluates to 0.9.
        let b = flat.device("Xload1.BloadR").unwrap();
        let expr = b.expr.as_ref().unwrap();
        let mut bindings = crate::expr::Bindings::new();
        bindings.insert(crate::expr::Ref::voltage("bus1R"), 1.0);
        bindings.insert(crate::expr::Ref::voltage("bus1I"), 0.0);
        let v = expr.eval(&bindings).unwrap();
        assert!((v - 0.9).abs() < 1e-12, "got {v}");

        // CurrLim default (1000) retained.
        let mut bindings = crate::expr::Bindings::new();
        bindings.insert(crate::expr::Ref::voltage("bus1R"), 1e-6);
        bindings.insert(crate::expr::Ref::voltage("bus1I"), 0.0);
        let v = expr.eval(&bindings).unwrap();
        assert_eq!(v, 1000.0);
    }

    #[test]
    fn no_instances_is_identity_on_cards() {
        let doc = parse_netlist("a title\nR1 a 0 2\nC1 a 0 3\n").unwrap();
        let flat = elaborate(&doc).unwrap();
        assert_eq!(flat.instances.len(), 2);
        assert_eq!(flat.instances[0].name, "R1");
        assert_eq!(flat.instances[0].value, 2.0);
        assert_eq!(flat.instances[1].value, 3.0);
        assert_eq!(flat.num_aux, 0);
    }

    #[test]
    fn undefined_subckt_is_reported() {
        let doc = parse_netlist("a title\nX1 a b FOO\n").unwrap();
        let err = elaborate(&doc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("undefined subcircuit FOO"), "{msg}");
    }

    #[test]
    fn undeclared_param_override_is_reported() {
        let src = format!("{CPL_LIB}Xload1 a b CPL PARAMS: NOPE=1\n");
        let doc = parse_netlist(&src).unwrap();
        assert!(matches!(
            elaborate(&doc).unwrap_err(),
            ElabError::UndeclaredParam { .. }
        ));
    }

    #[test]
    fn recursive_nesting_is_guarded() {
        let src = "\
a title
.SUBCKT LOOP a b
X1 a b LOOP
.ENDS
X0 n1 n2 LOOP
";
        let doc = parse_netlist(src).unwrap();
        assert!(matches!(
            elaborate(&doc).unwrap_err(),
            ElabError::RecursionLimit { .. }
        ));
    }

    #[test]
    fn ground_is_never_renamed() {
        let src = "\
a title
.SUBCKT G A
R1 A inner 1
R2 inner 0 1
.ENDS
X1 top G
";
        let doc = parse_netlist(src).unwrap();
        let flat = elaborate(&doc).unwrap();
        assert_eq!(flat.node_id("0"), Some(0));
        assert!(flat.node_id("X1.inner").is_some());
        assert!(flat.node_id("X1.0").is_none());
    }

    #[test]
    fn global_params_substitute() {
        let src = "a title\n.PARAM G=2 H={G*3}\nB1 n 0 I={H*V(n)}\nR1 n 0 1\n";
        let doc = parse_netlist(src).unwrap();
        let flat = elaborate(&doc).unwrap();
        let b = flat.device("B1").unwrap();
        let mut bindings = crate::expr::Bindings::new();
        bindings.insert(crate::expr::Ref::voltage("n"), 1.0);
        assert_eq!(b.expr.as_ref().unwrap().eval(&bindings).unwrap(), 6.0);
    }

    #[test]
    fn unknown_node_reference_is_reported() {
        let doc = parse_netlist("a title\nB1 n 0 I={V(ghost)}\nR1 n 0 1\n").unwrap();
        assert!(matches!(
            elaborate(&doc).unwrap_err(),
            ElabError::UnknownNodeRef { .. }
        ));
    }
}
