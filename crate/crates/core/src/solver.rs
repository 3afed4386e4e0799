//! Newton's method, DC operating point, and fixed-step backward-Euler
//! transient integration over a [`DaeSystem`].

use nalgebra::DVector;

use crate::error::SolverError;
use crate::mna::DaeSystem;
use crate::waveform::WaveformSet;

/// Solver tolerances and step control.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative part of the residual convergence test.
    pub rel_tol: f64,
    /// Absolute part of the residual convergence test.
    pub abs_tol: f64,
    /// Newton update test: stop when the inf-norm of dx falls below this.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Fixed integration step.
    pub step_h: f64,
    pub t_stop: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: 1e-1,
            abs_tol: 1e-3,
            newton_tol: 1e-3,
            max_newton_iters: 50,
            step_h: 1e-2,
            t_stop: 1.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.step_h <= 0.0 {
            return Err(SolverError::InvalidStep { h: self.step_h });
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.newton_tol > 0.0) {
            return Err(SolverError::InvalidOptions(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_newton_iters == 0 {
            return Err(SolverError::InvalidOptions(
                "max_newton_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Solution vector plus step bookkeeping.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub t: f64,
    pub x: DVector<f64>,
    pub x_prev: DVector<f64>,
    pub newton_iters_last: usize,
}

impl SystemState {
    pub fn new(t: f64, x: DVector<f64>) -> SystemState {
        let x_prev = x.clone();
        SystemState {
            t,
            x,
            x_prev,
            newton_iters_last: 0,
        }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solve f_static(x, t) + alpha*q(x) + history_term = 0 by Newton iteration.
///
/// `history_term` is the constant contribution of the previous time point
/// (zero for DC). Convergence needs the residual inf-norm below
/// abs_tol + rel_tol*|x| and the last update below newton_tol; a residual at
/// numerical zero short-circuits the update test, so affine systems finish
/// in one iteration.
pub fn newton_solve(
    sys: &DaeSystem,
    x0: &DVector<f64>,
    t: f64,
    alpha: f64,
    history_term: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, usize), SolverError> {
    if opts.max_newton_iters == 0 {
        return Err(SolverError::InvalidOptions(
            "max_newton_iters must be at least 1".into(),
        ));
    }
    let n = sys.layout.total();
    let mut x = x0.clone();
    let mut f = DVector::zeros(n);
    let mut q = DVector::zeros(n);

    let eval_f = |x: &DVector<f64>,
                  f: &mut DVector<f64>,
                  q: &mut DVector<f64>|
     -> Result<(), SolverError> {
        sys.f_static(x, t, f)
            .map_err(|source| SolverError::Eval { t, source })?;
        if alpha != 0.0 {
            sys.q(x, q);
            f.axpy(alpha, q, 1.0);
        }
        *f += history_term;
        Ok(())
    };

    eval_f(&x, &mut f, &mut q)?;

    for iter in 1..=opts.max_newton_iters {
        let j = sys
            .jacobian(&x, t, alpha)
            .map_err(|source| SolverError::Eval { t, source })?;
        let lu = j.lu();
        let dx = lu
            .solve(&(-&f))
            .ok_or(SolverError::SingularJacobian { t })?;
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(SolverError::SingularJacobian { t });
        }
        x += &dx;
        let dx_norm = inf_norm(&dx);

        eval_f(&x, &mut f, &mut q)?;
        let res_norm = inf_norm(&f);
        let x_norm = inf_norm(&x);

        // An essentially exact residual means the next update would be zero.
        if res_norm <= 1e-12 * x_norm.max(1.0) {
            return Ok((x, iter));
        }
        if dx_norm < opts.newton_tol && res_norm < opts.abs_tol + opts.rel_tol * x_norm {
            return Ok((x, iter));
        }
        if iter == opts.max_newton_iters {
            return Err(SolverError::NonConvergence {
                t,
                last_dx: dx_norm,
                iters: iter,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Flat-start initial guess: power-grid real-rail nodes ("...R") start at
/// 1.0, everything else at 0.
pub fn flat_start(sys: &DaeSystem) -> DVector<f64> {
    DVector::from_fn(sys.layout.total(), |i, _| {
        let name = &sys.layout.var_names[i];
        if let Some(node) = name.strip_prefix("V(").and_then(|s| s.strip_suffix(')')) {
            if node.ends_with(['r', 'R']) {
                return 1.0;
            }
        }
        0.0
    })
}

/// Solve f_static(x, 0) = 0 (capacitors open, inductors shorted).
///
/// Starts from the flat start; on failure retries once with a source-ramping
/// continuation that scales all independent V sources from 10% to 100%.
pub fn dc_operating_point(
    sys: &DaeSystem,
    opts: &SolverOptions,
) -> Result<DVector<f64>, SolverError> {
    let zero = DVector::zeros(sys.layout.total());
    let x0 = flat_start(sys);
    match newton_solve(sys, &x0, 0.0, 0.0, &zero, opts) {
        Ok((x, _)) => Ok(x),
        Err(_) => {
            let mut x = x0;
            for step in 1..=10 {
                let scale = step as f64 / 10.0;
                let scaled = sys.with_source_scale(scale);
                let (xs, _) = newton_solve(&scaled, &x, 0.0, 0.0, &zero, opts)?;
                x = xs;
            }
            Ok(x)
        }
    }
}

/// Advance one backward-Euler step of size `h` from an accepted state.
///
/// Solves f_static(x, t+h) + (q(x) - q(x_old))/h = 0 with the constant
/// predictor x_old as the initial Newton guess. A failed Newton solve
/// rejects the step and surfaces the error; there is no automatic step
/// halving.
pub fn bdf1_step(
    sys: &DaeSystem,
    state: &SystemState,
    h: f64,
    opts: &SolverOptions,
) -> Result<SystemState, SolverError> {
    if h <= 0.0 {
        return Err(SolverError::InvalidStep { h });
    }
    let n = sys.layout.total();
    let alpha = 1.0 / h;
    let mut history = DVector::zeros(n);
    sys.q(&state.x, &mut history);
    history *= -alpha;

    let t_new = state.t + h;
    let (x_new, iters) = newton_solve(sys, &state.x, t_new, alpha, &history, opts)?;
    Ok(SystemState {
        t: t_new,
        x: x_new,
        x_prev: state.x.clone(),
        newton_iters_last: iters,
    })
}

/// Run a full transient: DC operating point, then fixed steps of
/// `opts.step_h` until `opts.t_stop` (final step clamped). Records the
/// requested variables at every accepted point including t = 0.
pub fn run_transient(
    sys: &DaeSystem,
    opts: &SolverOptions,
    print_vars: &[String],
) -> Result<WaveformSet, SolverError> {
    let x0 = dc_operating_point(sys, opts)?;
    run_transient_from(sys, opts, print_vars, SystemState::new(0.0, x0))
}

/// Transient driver starting from a caller-provided state (used for initial
/// condition overrides); otherwise identical to [`run_transient`].
pub fn run_transient_from(
    sys: &DaeSystem,
    opts: &SolverOptions,
    print_vars: &[String],
    initial: SystemState,
) -> Result<WaveformSet, SolverError> {
    opts.validate()?;
    let indices: Vec<usize> = print_vars
        .iter()
        .map(|name| {
            sys.layout
                .var_index(name)
                .ok_or_else(|| SolverError::UnknownVariable(name.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut wave = WaveformSet::new(print_vars.to_vec());
    let record = |wave: &mut WaveformSet, t: f64, x: &DVector<f64>| {
        wave.push_row(t, indices.iter().map(|&i| x[i]));
    };

    let mut state = initial;
    record(&mut wave, state.t, &state.x);

    let h = opts.step_h;
    let n_full = ((opts.t_stop / h) * (1.0 + 1e-12)).floor() as usize;
    for k in 1..=n_full {
        state = bdf1_step(sys, &state, h, opts)?;
        // Fixed steps keyed to the step index so time carries no
        // accumulated rounding.
        state.t = k as f64 * h;
        record(&mut wave, state.t, &state.x);
    }
    let remainder = opts.t_stop - n_full as f64 * h;
    if remainder > 1e-9 * h {
        state = bdf1_step(sys, &state, remainder, opts)?;
        state.t = opts.t_stop;
        record(&mut wave, state.t, &state.x);
    }
    Ok(wave)
}
