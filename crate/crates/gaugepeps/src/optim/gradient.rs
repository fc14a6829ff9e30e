//! Gradient containers and finite-difference checks.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    Ec,
    Mc,
}

/// How the energy gradient is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientRoute {
    /// `dE = 2 Re[<conj(O) E_loc> - <conj(O)><E_loc>]` with `O = d log psi`, using
    /// that `psi` is holomorphic in the complex parameters.
    LogDerivative,
    /// `dE = <dF> + <F d log w> - <F><d log w>` with the explicit derivative of the
    /// electric estimator through the Gaussian map.
    Explicit,
}

/// `dE/dx` for the interleaved real parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientReport {
    pub grad: Vec<f64>,
    pub mode: EvalMode,
    pub route: GradientRoute,
    /// `<dF>`, `<F dlogw>` and `-<F><dlogw>` of the energy estimator (explicit route).
    pub terms: Option<[Vec<f64>; 3]>,
    /// Statistical errors per component (sampled gradients).
    pub errors: Option<Vec<f64>>,
    /// `|analytic - finite difference|` per component, when requested.
    pub fd_residuals: Option<Vec<f64>>,
}

impl GradientReport {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y)?;
        y[i] = x[i] - h;
        let fm = f(&y)?;
        y[i] = x[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Largest `|a - b| / max(|b|, floor)` over components.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}
