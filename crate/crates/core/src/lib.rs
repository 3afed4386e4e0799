//! Circuit-simulation kernel for power-grid transient studies.
//!
//! The pipeline: parse a SPICE-subset netlist, elaborate subcircuits into a
//! flat device list, stamp modified-nodal-analysis residual/Jacobian
//! functions, and integrate the resulting DAE with Newton + backward Euler.
//! On top of the kernel sits a power-grid device library in the rectangular
//! I=YV format (slack bus, constant-power load, AC branch, swing machine)
//! and a two-terminal monopolar LCC-HVDC average-value model with its
//! current and extinction-angle control loops, all compiled down to netlist
//! cards.

pub mod acgrid;
pub mod error;
pub mod expr;
pub mod hvdc;
pub mod mna;
pub mod netlist;
pub mod solver;
pub mod waveform;

pub use error::{Error, Result};
pub use expr::{Bindings, Expr, Ref};
pub use mna::{build_layout, stamp_all, DaeSystem, SystemLayout};
pub use netlist::{
    elaborate, parse_netlist, DeviceCard, DeviceKind, FlatCircuit, NetlistDocument,
};
pub use solver::{
    bdf1_step, dc_operating_point, newton_solve, run_transient, run_transient_from,
    SolverOptions, SystemState,
};
pub use waveform::WaveformSet;

/// Build a ready-to-solve system from netlist text.
pub fn compile(source: &str) -> Result<(FlatCircuit, DaeSystem)> {
    let doc = parse_netlist(source)?;
    let flat = elaborate(&doc)?;
    let layout = build_layout(&flat)?;
    let sys = stamp_all(&flat, &layout)?;
    Ok((flat, sys))
}
