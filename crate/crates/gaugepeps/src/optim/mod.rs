//! Energy minimization.

pub mod gradient;

pub use gradient::{finite_difference, max_relative_error, EvalMode, GradientReport, GradientRoute};
pub mod bfgs;

pub use bfgs::{minimize, BfgsOptions, MinimizeResult, StopReason, TraceEntry};
pub mod sweep;

pub use sweep::{jittered, parse_grid, refine, sweep, Evaluator, Measurement, Problem, SweepOptions, SweepRow};
