//! BFGS with a backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the gradient norm drops below this.
    pub grad_tol: f64,
    /// Stop when an accepted step moves the parameters by less than this (max norm).
    pub step_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Largest initial step (max norm) tried by the line search.
    pub max_step: f64,
    /// Stop after `stall_iters` consecutive iterations whose relative decrease of
    /// `f` is below this (the objective has hit its rounding floor).
    pub f_tol: f64,
    pub stall_iters: usize,
}

impl BfgsOptions {
    /// Settings for exact objectives.
    pub fn exact() -> Self {
        BfgsOptions { max_iter: 500, grad_tol: 1e-8, step_tol: 0.0, armijo: 1e-4, max_backtracks: 40, max_step: 0.5, f_tol: 1e-14, stall_iters: 5 }
    }

    /// Settings for sampled objectives.
    pub fn sampled() -> Self {
        BfgsOptions { max_iter: 60, grad_tol: 0.0, step_tol: 1e-4, armijo: 1e-4, max_backtracks: 12, max_step: 0.2, f_tol: 0.0, stall_iters: usize::MAX }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    GradientTolerance,
    StepTolerance,
    Stalled,
    Budget,
    LineSearchFailure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub stop: StopReason,
    pub evaluations: usize,
}

impl MinimizeResult {
    /// True unless the line search gave up.
    pub fn converged(&self) -> bool {
        self.stop != StopReason::LineSearchFailure
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Minimizes `f` given `fg(x) -> (f(x), grad f(x))`. On line-search failure the
/// best point found so far is returned with [`StopReason::LineSearchFailure`].
pub fn minimize(mut fg: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>, x0: &[f64], opts: &BfgsOptions) -> Result<MinimizeResult> {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut f, g) = fg(x.as_slice())?;
    let mut g = DVector::from_vec(g);
    let mut evals = 1;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![TraceEntry { iter: 0, f, grad_norm: g.norm(), step: 0.0 }];
    let mut stop = StopReason::Budget;
    let mut first = true;
    let mut stalled = 0;
    for it in 1..=opts.max_iter {
        if g.norm() < opts.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = g.dot(&d);
        }
        let mut t = 1.0;
        let dm = max_abs(&d);
        if dm * t > opts.max_step || (first && dm > 0.0) {
            t = (opts.max_step / dm).min(1.0);
        }
        first = false;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let xn = &x + &d * t;
            let (fnew, gnew) = fg(xn.as_slice())?;
            evals += 1;
            if fnew.is_finite() && fnew <= f + opts.armijo * t * slope {
                accepted = Some((xn, fnew, DVector::from_vec(gnew)));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            stop = StopReason::LineSearchFailure;
            break;
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if it == 1 {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let step = max_abs(&s);
        if f - fnew <= opts.f_tol * f.abs() {
            stalled += 1;
        } else {
            stalled = 0;
        }
        x = xn;
        f = fnew;
        g = gnew;
        trace.push(TraceEntry { iter: it, f, grad_norm: g.norm(), step });
        if step < opts.step_tol {
            stop = StopReason::StepTolerance;
            break;
        }
        if stalled >= opts.stall_iters {
            stop = StopReason::Stalled;
            break;
        }
    }
    if stop == StopReason::Budget && g.norm() < opts.grad_tol {
        stop = StopReason::GradientTolerance;
    }
    Ok(MinimizeResult { x: x.as_slice().to_vec(), f, grad: g.as_slice().to_vec(), trace, stop, evaluations: evals })
}
