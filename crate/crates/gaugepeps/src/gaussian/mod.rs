//! Fermionic Gaussian states through their covariance matrices.
//!
//! A pure Gaussian state of `n` Dirac modes is written `exp(1/2 M_ij a_i^dag a_j^dag)|0>`
//! with `M` complex antisymmetric. Its Majorana covariance is the real antisymmetric
//! `Gamma_ab = (i/2) <[g_a, g_b]>` where mode `j` carries `g_{2j} = a_j + a_j^dag` and
//! `g_{2j+1} = i (a_j - a_j^dag)`.

mod cache;
mod pfaffian;

pub use cache::{ContractionCache, Proposal};
pub use pfaffian::{pfaffian, pfaffian_complex, pfaffian_sub};
pub(crate) use pfaffian::{laplace, pfaffian_grad};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<C64>;

const ANTISYM_TOL: f64 = 1e-12;
const REALITY_TOL: f64 = 1e-10;

/// Pairing matrix `M` of `exp(1/2 M a^dag a^dag)|0>`.

/// `a[rows, cols]` gathered entry by entry.
pub fn submatrix(a: &RMat, rows: &[usize], cols: &[usize]) -> RMat {
    RMat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairingMatrix(CMat);

impl PairingMatrix {
    /// Accepts `m` if `m + m^T` vanishes up to rounding, then antisymmetrizes exactly.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Domain("pairing matrix must be square".into()));
        }
        let scale = m.iter().map(|x| x.norm()).fold(1.0, f64::max);
        let sym = (&m + m.transpose()).iter().map(|x| x.norm()).fold(0.0, f64::max);
        if sym > ANTISYM_TOL * scale {
            return Err(Error::Domain(format!("pairing matrix not antisymmetric ({sym:e})")));
        }
        Ok(PairingMatrix((&m - m.transpose()) * C64::new(0.5, 0.0)))
    }

    pub fn zeros(n: usize) -> Self {
        PairingMatrix(CMat::zeros(n, n))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn n_modes(&self) -> usize {
        self.0.nrows()
    }
}

/// Dirac covariance in the basis `(a_1..a_n, a_1^dag..a_n^dag)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracCov(CMat);

impl DiracCov {
    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn n_modes(&self) -> usize {
        self.0.nrows() / 2
    }
}

/// Real antisymmetric Majorana covariance, Majoranas interleaved per Dirac mode.
#[derive(Clone, Debug, PartialEq)]
pub struct MajoranaCov(RMat);

impl MajoranaCov {
    /// Wraps `g` after checking antisymmetry.
    pub fn new(g: RMat) -> Result<Self> {
        if g.nrows() != g.ncols() || g.nrows() % 2 == 1 {
            return Err(Error::Domain("covariance must be square of even size".into()));
        }
        let asym = (&g + g.transpose()).amax();
        if asym > ANTISYM_TOL.max(1e-10 * g.amax()) {
            return Err(Error::InconsistentState(format!("covariance not antisymmetric ({asym:e})")));
        }
        Ok(MajoranaCov((&g - g.transpose()) * 0.5))
    }

    pub fn vacuum(n_modes: usize) -> Self {
        let mut g = RMat::zeros(2 * n_modes, 2 * n_modes);
        for j in 0..n_modes {
            g[(2 * j, 2 * j + 1)] = 1.0;
            g[(2 * j + 1, 2 * j)] = -1.0;
        }
        MajoranaCov(g)
    }

    pub fn matrix(&self) -> &RMat {
        &self.0
    }

    pub fn into_matrix(self) -> RMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.0.nrows() / 2
    }

    /// `max |Gamma^2 + 1|`, zero for pure states.
    pub fn purity_defect(&self) -> f64 {
        let n = self.dim();
        (&self.0 * &self.0 + RMat::identity(n, n)).amax()
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        self.purity_defect() < tol
    }

    /// Rows and columns `idx` in the given order.
    pub fn restrict(&self, idx: &[usize]) -> MajoranaCov {
        MajoranaCov(self.0.select_rows(idx).select_columns(idx))
    }
}

/// A covariance and a split of its Majorana indices into open and contracted sets.
#[derive(Clone, Debug)]
pub struct PartitionedCov {
    cov: MajoranaCov,
    open: Vec<usize>,
    contracted: Vec<usize>,
}

impl PartitionedCov {
    /// `open` lists Majorana indices kept open; everything else is contracted.
    pub fn new(cov: MajoranaCov, open: &[usize]) -> Result<Self> {
        let n = cov.dim();
        let mut mark = vec![false; n];
        for &o in open {
            if o >= n || mark[o] {
                return Err(Error::Domain(format!("bad open index {o}")));
            }
            mark[o] = true;
        }
        let contracted = (0..n).filter(|&i| !mark[i]).collect();
        Ok(PartitionedCov { cov, open: open.to_vec(), contracted })
    }

    pub fn open(&self) -> &[usize] {
        &self.open
    }

    pub fn contracted(&self) -> &[usize] {
        &self.contracted
    }

    pub fn d_oo(&self) -> RMat {
        self.cov.0.select_rows(&self.open).select_columns(&self.open)
    }

    pub fn d_oc(&self) -> RMat {
        self.cov.0.select_rows(&self.open).select_columns(&self.contracted)
    }

    pub fn d_cc(&self) -> RMat {
        self.cov.0.select_rows(&self.contracted).select_columns(&self.contracted)
    }
}

/// Dirac covariance of `exp(1/2 M a^dag a^dag)|0>`.
///
/// With `P = (1 - M conj(M))^-1` the blocks are
/// `i [[-P M, P (1 + M conj(M)) / 2], [-conj(P) (1 + conj(M) M) / 2, conj(P) conj(M)]]`.
pub fn dirac_cov_from_m(m: &PairingMatrix) -> Result<DiracCov> {
    let n = m.n_modes();
    let mm = &m.0;
    let mb = mm.map(|x| x.conj());
    let id = CMat::identity(n, n);
    let p = (&id - mm * &mb)
        .try_inverse()
        .ok_or(Error::SingularParametrization)?;
    if !p.iter().all(|x| x.is_finite()) {
        return Err(Error::SingularParametrization);
    }
    let pb = p.map(|x| x.conj());
    let half = C64::new(0.5, 0.0);
    let i = C64::new(0.0, 1.0);
    let mut out = CMat::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&(-(&p * mm) * i));
    out.view_mut((0, n), (n, n)).copy_from(&(&p * (&id + mm * &mb) * (half * i)));
    out.view_mut((n, 0), (n, n)).copy_from(&(-(&pb * (&id + &mb * mm)) * (half * i)));
    out.view_mut((n, n), (n, n)).copy_from(&(&pb * &mb * i));
    Ok(DiracCov(out))
}

/// Change of basis from `(a, a^dag)` to interleaved Majoranas.
fn omega(n: usize) -> CMat {
    let mut om = CMat::zeros(2 * n, 2 * n);
    let i = C64::new(0.0, 1.0);
    for j in 0..n {
        om[(2 * j, j)] = C64::new(1.0, 0.0);
        om[(2 * j, n + j)] = C64::new(1.0, 0.0);
        om[(2 * j + 1, j)] = i;
        om[(2 * j + 1, n + j)] = -i;
    }
    om
}

/// Majorana covariance `Omega Gamma^D Omega^T`. Fails if the result is not real.
pub fn majorana_from_dirac(d: &DiracCov) -> Result<MajoranaCov> {
    let n = d.n_modes();
    let om = omega(n);
    let g = &om * &d.0 * om.transpose();
    let im = g.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
    if im > REALITY_TOL {
        return Err(Error::InconsistentState(format!("imaginary residue {im:e}")));
    }
    MajoranaCov::new(g.map(|x| x.re))
}

/// Covariance of the normalized state `exp(1/2 M a^dag a^dag)|0>`.
pub fn majorana_cov_from_m(m: &PairingMatrix) -> Result<MajoranaCov> {
    majorana_from_dirac(&dirac_cov_from_m(m)?)
}

/// Derivative of the Majorana covariance along `dm` (a direction in pairing space).
pub fn majorana_cov_derivative(m: &PairingMatrix, dm: &CMat) -> Result<RMat> {
    let n = m.n_modes();
    let mm = &m.0;
    let mb = mm.map(|x| x.conj());
    let dmb = dm.map(|x| x.conj());
    let id = CMat::identity(n, n);
    let p = (&id - mm * &mb)
        .try_inverse()
        .ok_or(Error::SingularParametrization)?;
    let dp = &p * (dm * &mb + mm * &dmb) * &p;
    let pb = p.map(|x| x.conj());
    let dpb = dp.map(|x| x.conj());
    let half = C64::new(0.5, 0.0);
    let i = C64::new(0.0, 1.0);
    let mut out = CMat::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(&(-(&dp * mm + &p * dm) * i));
    let ur = &dp * (&id + mm * &mb) + &p * (dm * &mb + mm * &dmb);
    out.view_mut((0, n), (n, n)).copy_from(&(ur * (half * i)));
    let ll = &dpb * (&id + &mb * mm) + &pb * (&dmb * mm + &mb * dm);
    out.view_mut((n, 0), (n, n)).copy_from(&(-ll * (half * i)));
    out.view_mut((n, n), (n, n)).copy_from(&((&dpb * &mb + &pb * &dmb) * i));
    let om = omega(n);
    let g = &om * out * om.transpose();
    Ok(g.map(|x| x.re))
}

/// `|<a|b>|^2 = sqrt(det((1 - Gamma_a Gamma_b) / 2))` for two normalized states.
pub fn overlap_sq(gamma_in: &MajoranaCov, d: &MajoranaCov) -> Result<f64> {
    if gamma_in.dim() != d.dim() {
        return Err(Error::Domain("overlap of covariances of different size".into()));
    }
    let n = d.dim();
    let m = (RMat::identity(n, n) - &gamma_in.0 * &d.0) * 0.5;
    let det = m.determinant();
    if det < -1e-12 {
        return Err(Error::Numerical(format!("negative overlap determinant {det:e}")));
    }
    Ok(det.max(0.0).sqrt())
}

/// Covariance of the open modes after projecting the contracted ones on the state
/// with covariance `gamma_in_c`:
/// `Gamma_v = D_oo + D_oc (D_cc + Gamma_in_c)^-1 D_oc^T`.
pub fn gaussian_map_out(d: &PartitionedCov, gamma_in_c: &MajoranaCov) -> Result<MajoranaCov> {
    if d.open.is_empty() {
        return Err(Error::Domain("no open modes; use overlap_sq".into()));
    }
    if gamma_in_c.dim() != d.contracted.len() {
        return Err(Error::Domain("projector does not match the contracted block".into()));
    }
    if d.contracted.is_empty() {
        return Ok(MajoranaCov(d.d_oo()));
    }
    let kern = d.d_cc() + &gamma_in_c.0;
    let lu = kern.lu();
    if lu.determinant().abs() < 1e-300 {
        return Err(Error::DegenerateContraction);
    }
    let doc = d.d_oc();
    let x = lu
        .solve(&doc.transpose())
        .ok_or(Error::DegenerateContraction)?;
    let gv = d.d_oo() + &doc * x;
    MajoranaCov::new((&gv - gv.transpose()) * 0.5)
}
