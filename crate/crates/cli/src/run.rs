//! CLI entry: argument parsing, the parse→elaborate→stamp→dc→transient
//! pipeline, waveform selection (with derived bus-magnitude columns), and
//! CSV/SVG output.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gridflux_core::solver::{run_transient_from, SolverOptions, SystemState};
use gridflux_core::{
    build_layout, dc_operating_point, elaborate, parse_netlist, stamp_all, DaeSystem,
    WaveformSet,
};

use crate::plot::emit_plot;
use crate::scenario::{build_case4bus, default_case4bus_prints, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "gridflux",
    about = "Power-grid transient simulation with an electronic-circuit kernel",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run a netlist file or the built-in `case4bus` scenario.
    Run(RunArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Netlist path, or `case4bus` for the built-in four-bus HVDC study.
    pub input: String,

    /// Simulation length in seconds (overrides any .TRAN directive).
    #[arg(long)]
    pub tstop: Option<f64>,

    /// Fixed integration step in seconds (overrides any .TRAN directive).
    #[arg(long)]
    pub step: Option<f64>,

    /// Relative residual tolerance.
    #[arg(long)]
    pub reltol: Option<f64>,

    /// Absolute residual tolerance.
    #[arg(long)]
    pub abstol: Option<f64>,

    /// Variables to record; glob patterns over V(node), I(device) and the
    /// derived VM(bus) magnitudes. Repeatable.
    #[arg(long = "print")]
    pub print: Vec<String>,

    /// CSV output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// SVG plot of the recorded variables.
    #[arg(long)]
    pub plot: Option<PathBuf>,

    /// Inverter extinction-angle control for the scenario: on|off.
    #[arg(long = "extinction-control", value_parser = parse_on_off)]
    pub extinction_control: Option<bool>,

    /// Scale the converter EMF term by the bridge count.
    #[arg(long = "appendix-c-scaling")]
    pub appendix_c_scaling: bool,

    /// Scenario override file (TOML) for case4bus.
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// Initial-condition override applied after the DC solve, e.g.
    /// "V(2)=1". Repeatable.
    #[arg(long = "ic")]
    pub ic: Vec<String>,
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected 'on' or 'off', got '{other}'")),
    }
}

pub enum ExitStatus {
    Success,
    /// Exit code 1.
    SolverFailure(String),
    /// Exit code 2.
    InputError(String),
}

pub fn dispatch(cli: Cli) -> ExitStatus {
    match cli.cmd {
        Command::Run(args) => run(args),
    }
}

fn run(args: RunArgs) -> ExitStatus {
    let prepared = match prepare(&args) {
        Ok(p) => p,
        Err(e) => return ExitStatus::InputError(format!("{e:#}")),
    };
    match execute(&args, prepared) {
        Ok(()) => ExitStatus::Success,
        Err(RunError::Input(e)) => ExitStatus::InputError(format!("{e:#}")),
        Err(RunError::Solver(e)) => ExitStatus::SolverFailure(format!("{e:#}")),
    }
}

enum RunError {
    Input(anyhow::Error),
    Solver(anyhow::Error),
}

struct Prepared {
    sys: DaeSystem,
    opts: SolverOptions,
    /// (output column name, realization) in request order.
    selection: Vec<(String, ColumnKind)>,
    /// Raw layout variables the solver must record.
    raw_vars: Vec<String>,
}

#[derive(Debug, Clone)]
enum ColumnKind {
    Raw(String),
    /// sqrt(r^2 + i^2) over two raw columns.
    Magnitude { r: String, i: String },
}

fn prepare(args: &RunArgs) -> Result<Prepared> {
    let is_scenario = args.input.eq_ignore_ascii_case("case4bus");

    let doc = if is_scenario {
        let sc = match &args.scenario {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read scenario file {}", path.display()))?;
                ScenarioConfig::from_toml(&text)?
            }
            None => ScenarioConfig::default(),
        };
        build_case4bus(
            &sc,
            args.extinction_control.unwrap_or(false),
            args.appendix_c_scaling,
        )?
    } else {
        if args.appendix_c_scaling || args.extinction_control.is_some() {
            log::warn!("scenario flags are ignored for netlist-file inputs");
        }
        let text = fs::read_to_string(&args.input)
            .with_context(|| format!("cannot read netlist {}", args.input))?;
        parse_netlist(&text).map_err(|e| anyhow!("{e}"))?
    };

    let flat = elaborate(&doc).map_err(|e| anyhow!("{e}"))?;
    let layout = build_layout(&flat).map_err(|e| anyhow!("{e}"))?;
    let sys = stamp_all(&flat, &layout).map_err(|e| anyhow!("{e}"))?;

    // Solver options: directive values first, then CLI overrides.
    let netlist_opts = doc.options();
    let tran = doc.tran();
    let mut opts = SolverOptions::default();
    if let Some(v) = netlist_opts.get("RELTOL") {
        opts.rel_tol = *v;
    }
    if let Some(v) = netlist_opts.get("ABSTOL") {
        opts.abs_tol = *v;
    }
    if let Some(v) = netlist_opts.get("NEWTONTOL") {
        opts.newton_tol = *v;
    }
    if let Some(v) = netlist_opts.get("MAXITER") {
        opts.max_newton_iters = *v as usize;
    }
    if let Some((step, t_stop)) = tran {
        opts.step_h = step;
        opts.t_stop = t_stop;
    } else if is_scenario {
        opts.step_h = 0.01;
        opts.t_stop = 200.0;
    } else if args.tstop.is_none() {
        bail!("netlist has no .TRAN directive; pass --tstop and --step");
    }
    if let Some(v) = args.reltol {
        opts.rel_tol = v;
    }
    if let Some(v) = args.abstol {
        opts.abs_tol = v;
    }
    if let Some(v) = args.step {
        opts.step_h = v;
    }
    if let Some(v) = args.tstop {
        opts.t_stop = v;
    }
    if opts.step_h <= 0.0 || opts.t_stop < 0.0 {
        bail!("step and tstop must be positive");
    }

    // Candidate columns: every solution variable plus derived VM(bus)
    // magnitudes for nodes following the <bus>R/<bus>I convention.
    let mut candidates: Vec<(String, ColumnKind)> = sys
        .layout
        .var_names
        .iter()
        .map(|n| (n.clone(), ColumnKind::Raw(n.clone())))
        .collect();
    for name in &sys.layout.var_names {
        if let Some(node) = name.strip_prefix("V(").and_then(|s| s.strip_suffix(')')) {
            if let Some(stem) = node.strip_suffix(['R', 'r']) {
                if stem.is_empty() {
                    continue;
                }
                let sibling_i = format!("V({stem}I)");
                if let Some(i_name) = sys
                    .layout
                    .var_names
                    .iter()
                    .find(|n| n.eq_ignore_ascii_case(&sibling_i))
                {
                    candidates.push((
                        format!("VM({stem})"),
                        ColumnKind::Magnitude {
                            r: name.clone(),
                            i: i_name.clone(),
                        },
                    ));
                }
            }
        }
    }

    // Requested patterns, in request order; defaults when none given.
    let patterns: Vec<String> = if !args.print.is_empty() {
        args.print.clone()
    } else if is_scenario {
        default_case4bus_prints()
    } else {
        let from_doc = doc.print_vars();
        if from_doc.is_empty() {
            vec!["V(*)".to_string()]
        } else {
            from_doc
        }
    };

    let mut selection: Vec<(String, ColumnKind)> = Vec::new();
    for pat in &patterns {
        let mut matched = false;
        for (name, kind) in &candidates {
            if glob_match(pat, name) {
                matched = true;
                if !selection.iter().any(|(n, _)| n == name) {
                    selection.push((name.clone(), kind.clone()));
                }
            }
        }
        if !matched {
            bail!("print pattern '{pat}' matches no variable");
        }
    }

    // Raw variables needed to realize the selection.
    let mut raw_vars: Vec<String> = Vec::new();
    let mut need = |name: &str| {
        if !raw_vars.iter().any(|n| n == name) {
            raw_vars.push(name.to_string());
        }
    };
    for (_, kind) in &selection {
        match kind {
            ColumnKind::Raw(n) => need(n),
            ColumnKind::Magnitude { r, i } => {
                need(r);
                need(i);
            }
        }
    }

    Ok(Prepared {
        sys,
        opts,
        selection,
        raw_vars,
    })
}

fn execute(args: &RunArgs, prepared: Prepared) -> Result<(), RunError> {
    let Prepared {
        sys,
        opts,
        selection,
        raw_vars,
    } = prepared;

    let mut x0 = dc_operating_point(&sys, &opts)
        .map_err(|e| RunError::Solver(anyhow!("DC operating point failed: {e}")))?;

    for spec in &args.ic {
        let (name, value) = parse_ic(spec).map_err(RunError::Input)?;
        let idx = sys
            .layout
            .var_index(&name)
            .ok_or_else(|| RunError::Input(anyhow!("--ic: unknown variable '{name}'")))?;
        x0[idx] = value;
    }

    let started = Instant::now();
    let raw = run_transient_from(&sys, &opts, &raw_vars, SystemState::new(0.0, x0))
        .map_err(|e| RunError::Solver(anyhow!("transient failed: {e}")))?;
    let elapsed = started.elapsed();
    eprintln!(
        "transient: {} steps to t={}s in {:.3}s wall clock",
        raw.len().saturating_sub(1),
        opts.t_stop,
        elapsed.as_secs_f64()
    );

    let wave = assemble(&raw, &selection);

    match &args.out {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))
                .map_err(RunError::Input)?;
            wave.write_csv(std::io::BufWriter::new(file))
                .context("writing CSV")
                .map_err(RunError::Input)?;
        }
        None => {
            wave.write_csv(std::io::stdout().lock())
                .context("writing CSV")
                .map_err(RunError::Input)?;
        }
    }

    if let Some(path) = &args.plot {
        let names: Vec<String> = wave.names.clone();
        let svg = emit_plot(&wave, &names).map_err(RunError::Input)?;
        fs::write(path, svg)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(RunError::Input)?;
    }
    Ok(())
}

/// Build the output waveform in request order, synthesizing VM columns.
fn assemble(raw: &WaveformSet, selection: &[(String, ColumnKind)]) -> WaveformSet {
    let mut out = WaveformSet::new(selection.iter().map(|(n, _)| n.clone()).collect());
    for (row, &t) in raw.times.iter().enumerate() {
        let values = selection.iter().map(|(_, kind)| match kind {
            ColumnKind::Raw(n) => raw.column(n).unwrap()[row],
            ColumnKind::Magnitude { r, i } => {
                let vr = raw.column(r).unwrap()[row];
                let vi = raw.column(i).unwrap()[row];
                (vr * vr + vi * vi).sqrt()
            }
        });
        out.push_row(t, values);
    }
    out
}

fn parse_ic(spec: &str) -> Result<(String, f64)> {
    let (name, value) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("--ic expects NAME=VALUE, got '{spec}'"))?;
    let value: f64 = value
        .trim()
        .parse()
        .with_context(|| format!("--ic: bad value in '{spec}'"))?;
    Ok((name.trim().to_string(), value))
}

/// Case-insensitive glob with `*` (any run) and `?` (one character).
pub fn glob_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.to_ascii_lowercase().chars().collect();
    let n: Vec<char> = name.to_ascii_lowercase().chars().collect();
    glob_rec(&p, &n)
}

fn glob_rec(p: &[char], n: &[char]) -> bool {
    match p.first() {
        None => n.is_empty(),
        Some('*') => (0..=n.len()).any(|k| glob_rec(&p[1..], &n[k..])),
        Some('?') => !n.is_empty() && glob_rec(&p[1..], &n[1..]),
        Some(c) => n.first() == Some(c) && glob_rec(&p[1..], &n[1..]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glob_basics() {
        assert!(glob_match("V(2)", "V(2)"));
        assert!(glob_match("v(bus*r)", "V(bus1R)"));
        assert!(glob_match("VM(bus?)", "VM(bus3)"));
        assert!(!glob_match("V(bus*r)", "V(bus1I)"));
        assert!(glob_match("*", "anything"));
    }

    #[test]
    fn ic_parsing() {
        assert_eq!(parse_ic("V(2)=1").unwrap(), ("V(2)".to_string(), 1.0));
        assert!(parse_ic("V(2)").is_err());
        assert!(parse_ic("V(2)=abc").is_err());
    }
}
