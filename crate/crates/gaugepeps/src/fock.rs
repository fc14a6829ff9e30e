//! Brute-force Fock space, used as an independent oracle for the covariance
//! formulas. States are dense vectors over occupation bitmasks; mode `j` is bit
//! `j` and the Jordan-Wigner string runs over the modes below `j`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::gaussian::{pfaffian_complex, CMat, RMat};

pub const MAX_MODES: usize = 24;

#[derive(Clone, Copy, Debug)]
pub struct FockSpace {
    n: usize,
}

fn sign_below(s: usize, j: usize) -> f64 {
    if (s & ((1usize << j) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl FockSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_MODES {
            return Err(Error::InvalidSize(format!("{n} modes exceed the dense oracle limit")));
        }
        Ok(FockSpace { n })
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn vacuum(&self) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        v[0] = C64::new(1.0, 0.0);
        v
    }

    pub fn create(&self, j: usize, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        let b = 1usize << j;
        for (s, &x) in v.iter().enumerate() {
            if s & b == 0 && x != C64::new(0.0, 0.0) {
                out[s | b] += x * sign_below(s, j);
            }
        }
        out
    }

    pub fn annihilate(&self, j: usize, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        let b = 1usize << j;
        for (s, &x) in v.iter().enumerate() {
            if s & b != 0 && x != C64::new(0.0, 0.0) {
                out[s ^ b] += x * sign_below(s, j);
            }
        }
        out
    }

    /// Majorana `a`: `a_j + a_j^dag` for `a = 2j`, `i (a_j - a_j^dag)` for `a = 2j+1`.
    pub fn majorana(&self, a: usize, v: &[C64]) -> Vec<C64> {
        let j = a / 2;
        let c = self.annihilate(j, v);
        let cd = self.create(j, v);
        if a % 2 == 0 {
            c.iter().zip(&cd).map(|(x, y)| x + y).collect()
        } else {
            c.iter().zip(&cd).map(|(x, y)| C64::new(0.0, 1.0) * (x - y)).collect()
        }
    }

    /// `sum_{i<j} m_ij a_i^dag a_j^dag` applied to `v`.
    fn pair_create(&self, m: &CMat, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for i in 0..self.n {
            for j in i + 1..self.n {
                let c = m[(i, j)];
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let w = self.create(i, &self.create(j, v));
                for (o, x) in out.iter_mut().zip(w) {
                    *o += c * x;
                }
            }
        }
        out
    }

    /// Adjoint of [`Self::pair_create`].
    fn pair_annihilate(&self, m: &CMat, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for i in 0..self.n {
            for j in i + 1..self.n {
                let c = m[(i, j)].conj();
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                let w = self.annihilate(j, &self.annihilate(i, v));
                for (o, x) in out.iter_mut().zip(w) {
                    *o += c * x;
                }
            }
        }
        out
    }

    fn exp_series(&self, v: &[C64], op: impl Fn(&[C64]) -> Vec<C64>) -> Vec<C64> {
        let mut out = v.to_vec();
        let mut term = v.to_vec();
        for k in 1..=self.n / 2 + 1 {
            term = op(&term);
            let inv = 1.0 / k as f64;
            if term.iter().all(|x| x.norm_sqr() == 0.0) {
                break;
            }
            for (o, t) in out.iter_mut().zip(term.iter_mut()) {
                *t *= inv;
                *o += *t;
            }
        }
        out
    }

    /// `exp(1/2 M_ij a_i^dag a_j^dag)|0>`, unnormalized.
    pub fn gaussian_state(&self, m: &CMat) -> Vec<C64> {
        self.exp_series(&self.vacuum(), |u| self.pair_create(m, u))
    }

    /// `exp(1/2 M a^dag a^dag) v`.
    pub fn apply_pairing(&self, m: &CMat, v: &[C64]) -> Vec<C64> {
        self.exp_series(v, |u| self.pair_create(m, u))
    }

    /// `exp(1/2 M a^dag a^dag)^dag v`.
    pub fn apply_pairing_adjoint(&self, m: &CMat, v: &[C64]) -> Vec<C64> {
        self.exp_series(v, |u| self.pair_annihilate(m, u))
    }

    /// Zeroes every component where one of `modes` is occupied.
    pub fn project_vacuum(&self, modes: &[usize], v: &[C64]) -> Vec<C64> {
        let mask: usize = modes.iter().map(|&j| 1usize << j).sum();
        v.iter()
            .enumerate()
            .map(|(s, &x)| if s & mask == 0 { x } else { C64::new(0.0, 0.0) })
            .collect()
    }

    /// Applies `w w^dag` with `w = exp(1/2 M a^dag a^dag)|0>` on the modes `modes`;
    /// `m` is a full-size pairing matrix supported on those modes.
    pub fn apply_gaussian_projector(&self, m: &CMat, modes: &[usize], v: &[C64]) -> Vec<C64> {
        let a = self.apply_pairing_adjoint(m, v);
        let b = self.project_vacuum(modes, &a);
        self.apply_pairing(m, &b)
    }

    /// Majorana covariance `(i/2)<[g_a, g_b]>` of the normalized `v`, restricted to
    /// the Majoranas of `modes` in the given order.
    pub fn covariance_on(&self, v: &[C64], modes: &[usize]) -> Result<RMat> {
        let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        if norm == 0.0 {
            return Err(Error::ZeroAmplitude);
        }
        let maj: Vec<usize> = modes.iter().flat_map(|&j| [2 * j, 2 * j + 1]).collect();
        let act: Vec<Vec<C64>> = maj.iter().map(|&a| self.majorana(a, v)).collect();
        let k = maj.len();
        let mut g = RMat::zeros(k, k);
        for a in 0..k {
            for b in a + 1..k {
                // <v| g_a g_b |v> = <g_a v | g_b v>
                let ab: C64 = act[a].iter().zip(&act[b]).map(|(x, y)| x.conj() * y).sum();
                let val = C64::new(0.0, 1.0) * ab / norm;
                if val.im.abs() > 1e-9 {
                    return Err(Error::InconsistentState(format!("complex covariance entry {val}")));
                }
                g[(a, b)] = val.re;
                g[(b, a)] = -val.re;
            }
        }
        Ok(g)
    }

    pub fn covariance(&self, v: &[C64]) -> Result<RMat> {
        let modes: Vec<usize> = (0..self.n).collect();
        self.covariance_on(v, &modes)
    }

    /// Dense matrix of an operator given by its action on basis vectors.
    pub fn operator_matrix(&self, op: impl Fn(&[C64]) -> Vec<C64>) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for s in 0..d {
            let mut e = vec![C64::new(0.0, 0.0); d];
            e[s] = C64::new(1.0, 0.0);
            let col = op(&e);
            for (r, x) in col.into_iter().enumerate() {
                out[(r, s)] = x;
            }
        }
        out
    }
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `<G(M_L)|G(M_R)>` for `G(M) = exp(1/2 M a^dag a^dag)|0>`, through
/// `(-1)^(n(n-1)/2) Pf([[M_R, -1], [1, -conj(M_L)]])`.
pub fn gaussian_overlap_pfaffian(m_r: &CMat, m_l: &CMat) -> Result<C64> {
    let n = m_r.nrows();
    let mut big = CMat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(m_r);
    big.view_mut((n, n), (n, n)).copy_from(&(-m_l.map(|x| x.conj())));
    for i in 0..n {
        big[(i, n + i)] = C64::new(-1.0, 0.0);
        big[(n + i, i)] = C64::new(1.0, 0.0);
    }
    let pf = pfaffian_complex(&big)?;
    Ok(if (n * (n.saturating_sub(1)) / 2) % 2 == 0 { pf } else { -pf })
}

/// Coefficients `c_S` of `X = sum_S c_S g_S`, with `g_S` the ascending product of the
/// Majoranas in `S`, for an operator on a small Fock space (dim at most 2^6).
pub fn majorana_expansion(fs: &FockSpace, x: &CMat) -> Vec<(Vec<usize>, C64)> {
    let n_maj = 2 * fs.n_modes();
    let d = fs.dim() as f64;
    let gammas: Vec<CMat> = (0..n_maj).map(|a| fs.operator_matrix(|v| fs.majorana(a, v))).collect();
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << n_maj) {
        let set: Vec<usize> = (0..n_maj).filter(|&a| mask >> a & 1 == 1).collect();
        let mut p = DMatrix::<C64>::identity(fs.dim(), fs.dim());
        for &a in &set {
            p *= &gammas[a];
        }
        let c = (p.adjoint() * x).trace() / d;
        if c.norm() > 1e-12 {
            out.push((set, c));
        }
    }
    out
}
