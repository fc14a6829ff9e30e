//! Incremental bookkeeping of the contraction kernel `K = (D + Gamma_in)^-1`.
//!
//! For pure `Gamma_in` one has `det(1 - Gamma_in D) = det(D + Gamma_in)`, so the
//! overlap is `sqrt(det K^-1) / 2^n`. A change of `Gamma_in` confined to the
//! Majorana indices `o` is a rank `|o|` update handled with the matrix
//! determinant lemma and the Woodbury identity.

use nalgebra::DMatrix;

use super::RMat;
use crate::error::{Error, Result};

/// Relative size below which a determinant ratio is treated as an exact zero.
const ZERO_RATIO: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct ContractionCache {
    d: RMat,
    g: RMat,
    k: RMat,
    log_det: f64,
    updates: usize,
}

/// A pending low-rank change of `Gamma_in`.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub idx: Vec<usize>,
    pub delta: RMat,
    /// `det(A') / det(A)`; the weight ratio is its square root.
    pub det_ratio: f64,
    inner: Option<RMat>,
}

impl Proposal {
    /// `|psi(Q')|^2 / |psi(Q)|^2`.
    pub fn weight_ratio(&self) -> f64 {
        self.det_ratio.max(0.0).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.inner.is_none()
    }
}

impl ContractionCache {
    /// Fails with [`Error::ZeroAmplitude`] when `D + Gamma_in` is singular.
    pub fn new(d: RMat, g: RMat) -> Result<Self> {
        if d.shape() != g.shape() || d.nrows() != d.ncols() {
            return Err(Error::Domain("cache matrices must be square and equal in size".into()));
        }
        let (k, log_det) = invert(&(&d + &g))?;
        Ok(ContractionCache { d, g, k, log_det, updates: 0 })
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn kernel(&self) -> &RMat {
        &self.k
    }

    pub fn d(&self) -> &RMat {
        &self.d
    }

    pub fn gamma_in(&self) -> &RMat {
        &self.g
    }

    /// `(1 - Gamma_in D)^-1 = K Gamma_in`.
    pub fn inv_one_minus_gd(&self) -> RMat {
        &self.k * &self.g
    }

    /// `log det(D + Gamma_in)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `log |psi(Q)|^2` for normalized site and link states.
    pub fn log_overlap_sq(&self) -> f64 {
        0.5 * self.log_det - 0.5 * self.dim() as f64 * std::f64::consts::LN_2
    }

    pub fn overlap_sq(&self) -> f64 {
        self.log_overlap_sq().exp()
    }

    pub fn updates_since_rebuild(&self) -> usize {
        self.updates
    }

    /// Determinant ratio for replacing `Gamma_in[idx, idx]` by `Gamma_in[idx, idx] + delta`.
    pub fn propose(&self, idx: &[usize], delta: RMat) -> Proposal {
        let r = idx.len();
        let koo = super::submatrix(&self.k, idx, idx);
        let m = DMatrix::identity(r, r) + &delta * &koo;
        let lu = m.clone().lu();
        let det_ratio = lu.determinant();
        let inner = if det_ratio.abs() > ZERO_RATIO {
            lu.solve(&delta)
        } else {
            None
        };
        Proposal { idx: idx.to_vec(), delta, det_ratio, inner }
    }

    /// Applies a proposal through the Woodbury identity
    /// `K' = K - K[:, o] (1 + delta K_oo)^-1 delta K[o, :]`.
    pub fn accept(&mut self, p: &Proposal) -> Result<()> {
        let c = p.inner.as_ref().ok_or(Error::ZeroAmplitude)?;
        let ko = self.k.select_columns(&p.idx);
        let rows = self.k.select_rows(&p.idx);
        let w = c * rows;
        self.k.gemm(-1.0, &ko, &w, 1.0);
        for (a, &i) in p.idx.iter().enumerate() {
            for (b, &j) in p.idx.iter().enumerate() {
                self.g[(i, j)] += p.delta[(a, b)];
            }
        }
        self.log_det += p.det_ratio.ln();
        self.updates += 1;
        Ok(())
    }

    /// Recomputes the kernel from scratch and returns the relative drift of the
    /// incremental one.
    pub fn rebuild(&mut self) -> Result<f64> {
        let (k, log_det) = invert(&(&self.d + &self.g))?;
        let scale = k.amax().max(1e-300);
        let drift = (&k - &self.k).amax() / scale;
        self.k = k;
        self.log_det = log_det;
        self.updates = 0;
        Ok(drift)
    }

    /// Overwrites `Gamma_in` entirely and rebuilds.
    pub fn reset_gamma_in(&mut self, g: RMat) -> Result<()> {
        let (k, log_det) = invert(&(&self.d + &g))?;
        self.g = g;
        self.k = k;
        self.log_det = log_det;
        self.updates = 0;
        Ok(())
    }

    /// Sum over sites of the diagonal `block x block` blocks of `K`.
    pub fn summed_diagonal_blocks(&self, block: usize) -> RMat {
        let n = self.dim();
        let mut out = RMat::zeros(block, block);
        for s in 0..n / block {
            out += self.k.view((s * block, s * block), (block, block));
        }
        out
    }
}

fn invert(a: &RMat) -> Result<(RMat, f64)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((RMat::zeros(0, 0), 0.0));
    }
    let scale = a.amax().max(1e-300);
    let lu = a.clone().lu();
    let mut log_det = 0.0;
    let mut sign: f64 = lu.p().determinant();
    let u = lu.u();
    for i in 0..n {
        let v = u[(i, i)];
        if !v.is_finite() || v.abs() < 1e-12 * scale {
            return Err(Error::ZeroAmplitude);
        }
        sign *= v.signum();
        log_det += v.abs().ln();
    }
    if sign < 0.0 {
        return Err(Error::Numerical("negative kernel determinant".into()));
    }
    let k = lu.try_inverse().ok_or(Error::ZeroAmplitude)?;
    Ok((k, log_det))
}
