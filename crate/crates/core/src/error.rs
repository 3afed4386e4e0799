//! Error types shared across the simulation pipeline.

use thiserror::Error;

/// Errors produced while lexing and parsing a netlist.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: syntax error: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown device letter '{letter}'")]
    UnknownDevice { line: usize, letter: char },

    #[error("line {line}: unknown directive '.{name}'")]
    UnknownDirective { line: usize, name: String },

    #[error("line {line}: invalid numeric literal '{text}'")]
    InvalidNumber { line: usize, text: String },

    #[error("line {line}: unbalanced .SUBCKT/.ENDS")]
    UnbalancedSubckt { line: usize },
}

/// Errors produced while elaborating a parsed document into a flat circuit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElabError {
    #[error("undefined subcircuit {subckt} (instance {instance})")]
    UndefinedSubckt { instance: String, subckt: String },

    #[error("instance {instance}: port count {given} does not match subcircuit {subckt} ({expected} ports)")]
    PortArity {
        instance: String,
        subckt: String,
        given: usize,
        expected: usize,
    },

    #[error("instance {instance}: override of undeclared parameter {param}")]
    UndeclaredParam { instance: String, param: String },

    #[error("subcircuit nesting deeper than {limit} at instance {instance}")]
    RecursionLimit { instance: String, limit: usize },

    #[error("duplicate device name {name}")]
    DuplicateDevice { name: String },

    #[error("device {device}: {source}")]
    Expr {
        device: String,
        source: ExprError,
    },

    #[error("device {device}: value must evaluate to a constant")]
    NonConstantValue { device: String },

    #[error("device {device}: expression references unknown node {node}")]
    UnknownNodeRef { device: String, node: String },

    #[error("device {device}: expression references {target}, which carries no branch current")]
    BadCurrentRef { device: String, target: String },
}

/// Errors produced while evaluating an expression tree.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unbound reference {0}")]
    Unbound(String),

    #[error("division by zero in '{0}'")]
    DivisionByZero(String),

    #[error("ACOS argument {0} outside [-1, 1]")]
    AcosDomain(f64),

    #[error("limit bounds inverted: lo {lo} > hi {hi}")]
    LimitBounds { lo: f64, hi: f64 },
}

/// Errors produced while building the MNA system.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StampError {
    #[error("empty circuit: no non-ground nodes")]
    EmptyCircuit,

    #[error("device {device}: expression references unknown node {node}")]
    UnknownNodeRef { device: String, node: String },

    #[error("device {device}: expression references {target}, which carries no branch current")]
    BadCurrentRef { device: String, target: String },

    #[error("device {device}: unresolved parameter {param} (elaborate first)")]
    UnresolvedParam { device: String, param: String },

    #[error("device {device}: zero resistance is not representable (use an ideal source)")]
    ZeroResistance { device: String },
}

/// An expression evaluation failure tagged with the device it came from.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("device {device}: {source}")]
pub struct DeviceEvalError {
    pub device: String,
    #[source]
    pub source: ExprError,
}

/// Errors produced by the nonlinear/transient solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("singular Jacobian at t={t}")]
    SingularJacobian { t: f64 },

    #[error("Newton did not converge at t={t}: |dx|={last_dx:.3e} after {iters} iterations")]
    NonConvergence { t: f64, last_dx: f64, iters: usize },

    #[error("{source} (t={t})")]
    Eval {
        t: f64,
        #[source]
        source: DeviceEvalError,
    },

    #[error("step size must be positive, got {h}")]
    InvalidStep { h: f64 },

    #[error("invalid solver options: {0}")]
    InvalidOptions(String),

    #[error("unknown print variable '{0}'")]
    UnknownVariable(String),
}

/// Top-level error for the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Elab(#[from] ElabError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Stamp(#[from] StampError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
