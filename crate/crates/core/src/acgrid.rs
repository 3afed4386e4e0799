//! Power-system device library in the rectangular I=YV format.
//!
//! Each complex grid quantity rides on a pair of circuit rails: `<bus>R`
//! carries the real part and `<bus>I` the imaginary part. Devices are
//! emitted as plain netlist cards, so everything here is also reachable
//! from a netlist file through the SUBCKT library in `lib/powergrid.cir`.

use std::f64::consts::PI;

use crate::expr::{Expr, Func};
use crate::netlist::DeviceCard;

/// Synchronous angular frequency, rad/s (60 Hz system).
pub const OMEGA_SYNC: f64 = 2.0 * PI * 60.0;

/// Floor added to squared-voltage denominators so a collapsed bus never
/// divides by exact zero; the limiter bounds the current well before the
/// floor matters.
pub const DENOM_FLOOR: f64 = 1e-12;

/// The real/imaginary rail pair of one bus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusPair {
    pub name: String,
    pub node_r: String,
    pub node_i: String,
}

impl BusPair {
    /// Rails follow the `<name>R` / `<name>I` convention.
    pub fn new(name: &str) -> BusPair {
        BusPair {
            name: name.to_string(),
            node_r: format!("{name}R"),
            node_i: format!("{name}I"),
        }
    }
}

/// Fixed-voltage (slack) bus.
#[derive(Debug, Clone)]
pub struct SlackSpec {
    pub bus: BusPair,
    pub v_mag: f64,
    /// Radians.
    pub v_angle: f64,
}

/// Constant power load drawing P + jQ.
#[derive(Debug, Clone)]
pub struct CplSpec {
    pub bus: BusPair,
    pub p: f64,
    pub q: f64,
    pub curr_lim: f64,
}

impl CplSpec {
    pub fn new(bus: BusPair, p: f64, q: f64) -> CplSpec {
        CplSpec {
            bus,
            p,
            q,
            curr_lim: 1000.0,
        }
    }
}

/// Series-reactance AC branch.
#[derive(Debug, Clone)]
pub struct BranchSpec {
    pub from: BusPair,
    pub to: BusPair,
    /// Per-unit series reactance; must be nonzero.
    pub x: f64,
}

/// Classical swing-equation machine: EMF behind transient reactance.
#[derive(Debug, Clone)]
pub struct MachineSpec {
    pub bus: BusPair,
    /// Inertia constant, seconds.
    pub h: f64,
    /// Damping, pu.
    pub d: f64,
    /// Transient reactance, pu.
    pub xd_p: f64,
    /// Mechanical power, pu.
    pub p_mech: f64,
    /// Internal EMF magnitude, pu.
    pub e_mag: f64,
}

/// Ideal voltage pair pinning the bus, each rail in series with a 0 V
/// ammeter whose positive end sits at ground: measured current is positive
/// when the source injects power into the bus.
pub fn emit_slack(s: &SlackSpec) -> Vec<DeviceCard> {
    let bus = &s.bus;
    let amm_r = format!("amm{}R", bus.name);
    let amm_i = format!("amm{}I", bus.name);
    vec![
        DeviceCard::vsource(
            &format!("Vslack.{}.r", bus.name),
            &bus.node_r,
            &amm_r,
            s.v_mag * s.v_angle.cos(),
        ),
        DeviceCard::vsource(
            &format!("Vslack.{}.i", bus.name),
            &bus.node_i,
            &amm_i,
            s.v_mag * s.v_angle.sin(),
        ),
        DeviceCard::vsource(&format!("Vslackamm.{}.r", bus.name), "0", &amm_r, 0.0),
        DeviceCard::vsource(&format!("Vslackamm.{}.i", bus.name), "0", &amm_i, 0.0),
    ]
}

/// Names of the slack ammeters whose currents are the injected (I_r, I_i).
pub fn slack_ammeters(bus: &BusPair) -> (String, String) {
    (
        format!("Vslackamm.{}.r", bus.name),
        format!("Vslackamm.{}.i", bus.name),
    )
}

fn v(node: &str) -> Expr {
    Expr::voltage(node)
}

/// Squared bus-voltage magnitude with the division floor.
fn denom(bus: &BusPair) -> Expr {
    v(&bus.node_r) * v(&bus.node_r) + v(&bus.node_i) * v(&bus.node_i)
        + Expr::num(DENOM_FLOOR)
}

/// Current drawn by a constant power load, rectangular components:
/// I_r = (P Vr + Q Vi)/|V|^2, I_i = (P Vi - Q Vr)/|V|^2, each clamped to
/// +/- curr_lim.
pub fn cpl_current_exprs(c: &CplSpec) -> (Expr, Expr) {
    let p = Expr::num(c.p);
    let q = Expr::num(c.q);
    let lim = |e: Expr| Expr::limit(e, Expr::num(-c.curr_lim), Expr::num(c.curr_lim));
    let i_r = lim((p.clone() * v(&c.bus.node_r) + q.clone() * v(&c.bus.node_i)) / denom(&c.bus));
    let i_i = lim((p * v(&c.bus.node_i) - q * v(&c.bus.node_r)) / denom(&c.bus));
    (i_r, i_i)
}

/// Two behavioral sources and two ammeters; positive ammeter current flows
/// into the load.
pub fn emit_cpl(c: &CplSpec) -> Vec<DeviceCard> {
    let bus = &c.bus;
    let amm_r = format!("{}.cplammR", bus.name);
    let amm_i = format!("{}.cplammI", bus.name);
    let (i_r, i_i) = cpl_current_exprs(c);
    vec![
        DeviceCard::bsource_i(&format!("Bcpl.{}.r", bus.name), &bus.node_r, &amm_r, i_r),
        DeviceCard::bsource_i(&format!("Bcpl.{}.i", bus.name), &bus.node_i, &amm_i, i_i),
        DeviceCard::vsource(&format!("Vcplamm.{}.r", bus.name), &amm_r, "0", 0.0),
        DeviceCard::vsource(&format!("Vcplamm.{}.i", bus.name), &amm_i, "0", 0.0),
    ]
}

pub fn cpl_ammeters(bus: &BusPair) -> (String, String) {
    (
        format!("Vcplamm.{}.r", bus.name),
        format!("Vcplamm.{}.i", bus.name),
    )
}

/// Series reactance as a through-branch: I = (V_from - V_to)/(jx), i.e.
/// I_r = dVi/x and I_i = -dVr/x. One behavioral source per rail spans the
/// two ends, so the from-side and to-side injections are the same
/// expression with opposite signs by construction.
pub fn emit_branch(b: &BranchSpec) -> Vec<DeviceCard> {
    assert!(b.x != 0.0, "branch reactance must be nonzero");
    let x = Expr::num(b.x);
    let i_r = (v(&b.from.node_i) - v(&b.to.node_i)) / x.clone();
    let i_i = -((v(&b.from.node_r) - v(&b.to.node_r)) / x);
    let tag = format!("{}.{}", b.from.name, b.to.name);
    vec![
        DeviceCard::bsource_i(
            &format!("Bbr.{tag}.r"),
            &b.from.node_r,
            &b.to.node_r,
            i_r,
        ),
        DeviceCard::bsource_i(
            &format!("Bbr.{tag}.i"),
            &b.from.node_i,
            &b.to.node_i,
            i_i,
        ),
    ]
}

/// Classical machine: EMF phasor E∠δ behind x_d', with swing dynamics
/// (2H/ω_s)·dΔω/dt = p_mech − p_elec − D·Δω and dδ/dt = Δω realized as
/// capacitor integrators driven by behavioral sources.
pub fn emit_machine(m: &MachineSpec) -> Vec<DeviceCard> {
    let bus = &m.bus;
    let er = format!("{}.mach.er", bus.name);
    let ei = format!("{}.mach.ei", bus.name);
    let delta = format!("{}.mach.delta", bus.name);
    let omega = format!("{}.mach.w", bus.name);

    let e_r = Expr::num(m.e_mag) * Expr::call(Func::Cos, v(&delta));
    let e_i = Expr::num(m.e_mag) * Expr::call(Func::Sin, v(&delta));

    // Internal branch currents through x_d' (same form as emit_branch).
    let i_r = (v(&ei) - v(&bus.node_i)) / Expr::num(m.xd_p);
    let i_i = -((v(&er) - v(&bus.node_r)) / Expr::num(m.xd_p));

    // Air-gap power Re(E I*) = er*ir + ei*ii.
    let p_elec = v(&er) * i_r.clone() + v(&ei) * i_i.clone();

    let name = |stem: &str| format!("{stem}.{}", bus.name);
    vec![
        DeviceCard::bsource_v(&name("Bmach.er"), &er, "0", e_r),
        DeviceCard::bsource_v(&name("Bmach.ei"), &ei, "0", e_i),
        DeviceCard::bsource_i(&name("Bmach.ir"), &er, &bus.node_r, i_r),
        DeviceCard::bsource_i(&name("Bmach.ii"), &ei, &bus.node_i, i_i),
        // (2H/ws) dΔω/dt + D·Δω + p_elec − p_mech = 0
        DeviceCard::capacitor(&name("Cmach.w"), &omega, "0", 2.0 * m.h / OMEGA_SYNC),
        DeviceCard::bsource_i(
            &name("Bmach.w"),
            &omega,
            "0",
            Expr::num(m.d) * v(&omega) + p_elec - Expr::num(m.p_mech),
        ),
        // dδ/dt = Δω
        DeviceCard::capacitor(&name("Cmach.d"), &delta, "0", 1.0),
        DeviceCard::bsource_i(&name("Bmach.d"), &delta, "0", -v(&omega)),
    ]
}

/// Machine state-node names (δ, Δω) for printing.
pub fn machine_state_nodes(bus: &BusPair) -> (String, String) {
    (
        format!("{}.mach.delta", bus.name),
        format!("{}.mach.w", bus.name),
    )
}
