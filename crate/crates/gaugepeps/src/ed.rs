//! Exact diagonalization of `H = lambda sum_l (1 - P_l) + lambda^-1 sum_p (1 - Q Q Q Q)`
//! in the gauge invariant sector.
//!
//! In the electric basis (`P = sigma_z` diagonal) gauge invariant states are closed
//! flux loops. A basis of the loop space is `n_p - 1` plaquette boundaries plus the two
//! winding loops, so states are labelled by `n_p + 1` bits. Plaquette operators toggle
//! one bit (the last plaquette is the product of all others) and never change the
//! winding bits, so the four winding sectors are diagonalized separately.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Dir, Lattice};
use crate::observables::{assemble_energy, EnergyBreakdown};

/// Largest sector dimension handled.
pub const MAX_DIM: usize = 1 << 20;
const DENSE_DIM: usize = 4096;

/// Electric-flux basis of one winding sector.
#[derive(Clone, Debug)]
pub struct GaugeSectorBasis {
    lat: Lattice,
    winding: (bool, bool),
    /// Flux masks of the `n_p - 1` independent plaquettes.
    plaq: Vec<u128>,
    /// Flux mask of each basis state.
    masks: Vec<u128>,
}

fn link_mask(links: &[usize]) -> u128 {
    links.iter().fold(0u128, |m, &l| m ^ (1u128 << l))
}

/// Flux along the noncontractible loops `x2 = 0` (horizontal) and `x1 = 0` (vertical).
pub fn winding_masks(lat: &Lattice) -> (u128, u128) {
    let l = lat.extent() as i64;
    let h: Vec<usize> = (0..l).map(|x| lat.link(lat.site(x, 0), Dir::X)).collect();
    let v: Vec<usize> = (0..l).map(|y| lat.link(lat.site(0, y), Dir::Y)).collect();
    (link_mask(&h), link_mask(&v))
}

impl GaugeSectorBasis {
    pub fn new(lat: &Lattice, winding: (bool, bool)) -> Result<Self> {
        if lat.n_links() > 128 {
            return Err(Error::InvalidSize("lattice too large for exact diagonalization".into()));
        }
        let np = lat.n_plaquettes();
        let free = np - 1;
        if free >= 64 || (1usize << free) > MAX_DIM {
            return Err(Error::InvalidSize(format!(
                "sector dimension 2^{free} exceeds the exact diagonalization limit"
            )));
        }
        let plaq: Vec<u128> = (0..free).map(|p| link_mask(&lat.plaquette_links(p))).collect();
        let (wh, wv) = winding_masks(lat);
        let mut base = 0u128;
        if winding.0 {
            base ^= wh;
        }
        if winding.1 {
            base ^= wv;
        }
        let dim = 1usize << free;
        let mut masks = vec![0u128; dim];
        masks[0] = base;
        for s in 1..dim {
            let low = s.trailing_zeros() as usize;
            masks[s] = masks[s & (s - 1)] ^ plaq[low];
        }
        Ok(GaugeSectorBasis { lat: lat.clone(), winding, plaq, masks })
    }

    pub fn dim(&self) -> usize {
        self.masks.len()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn winding(&self) -> (bool, bool) {
        self.winding
    }

    /// Flux mask (bit `l` set when link `l` carries `p = 1`).
    pub fn mask(&self, s: usize) -> u128 {
        self.masks[s]
    }

    /// State reached by applying the plaquette operator `p`.
    pub fn flip(&self, s: usize, p: usize) -> usize {
        if p < self.plaq.len() {
            s ^ (1 << p)
        } else {
            s ^ (self.dim() - 1)
        }
    }
}

/// `H` restricted to one winding sector.
#[derive(Clone, Debug)]
pub struct GaugeHamiltonian {
    basis: GaugeSectorBasis,
    lambda: f64,
    diag: Vec<f64>,
}

impl GaugeHamiltonian {
    pub fn new(basis: GaugeSectorBasis, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("coupling must be positive, got {lambda}")));
        }
        let np = basis.lat.n_plaquettes() as f64;
        let diag = basis
            .masks
            .iter()
            .map(|m| 2.0 * lambda * m.count_ones() as f64 + np / lambda)
            .collect();
        Ok(GaugeHamiltonian { basis, lambda, diag })
    }

    pub fn basis(&self) -> &GaugeSectorBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let np = self.basis.lat.n_plaquettes();
        let off = -1.0 / self.lambda;
        for s in 0..self.dim() {
            let mut acc = self.diag[s] * x[s];
            for p in 0..np {
                acc += off * x[self.basis.flip(s, p)];
            }
            y[s] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for s in 0..n {
            h[(s, s)] += self.diag[s];
            for p in 0..self.basis.lat.n_plaquettes() {
                h[(self.basis.flip(s, p), s)] -= 1.0 / self.lambda;
            }
        }
        h
    }
}

/// Ground state of the full gauge invariant space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralResult {
    pub l: usize,
    pub lambda: f64,
    pub e0: f64,
    pub energy: EnergyBreakdown,
    pub mean_p: f64,
    pub mean_plaq: f64,
    /// `(r1, r2, <W>)` for rectangles up to `(L-1) x (L-1)`.
    pub wilson: Vec<(usize, usize, f64)>,
    pub residual: f64,
    pub winding: (bool, bool),
    /// Lowest energy of every winding sector, in the order `(0,0), (1,0), (0,1), (1,1)`.
    pub sector_e0: Vec<f64>,
    #[serde(skip)]
    pub vector: Vec<f64>,
}

/// Lowest eigenpair of a symmetric operator by Lanczos with full
/// reorthogonalization. Returns `(value, vector, residual)`.
pub fn lanczos_lowest(
    dim: usize,
    apply: impl Fn(&[f64], &mut [f64]),
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n0 = norm(start);
    if n0 == 0.0 {
        return Err(Error::Domain("zero Lanczos start vector".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / n0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let m_max = max_iter.min(dim);
    let mut last = (f64::INFINITY, Vec::new());
    for j in 0..m_max {
        apply(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = norm(&w);
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c || c + 1 == r {
                beta[r.min(c)]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imin, &emin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        let y: Vec<f64> = eig.eigenvectors.column(imin).iter().copied().collect();
        let ritz_res = b * y[k - 1].abs();
        last = (emin, y);
        if ritz_res < tol || b < 1e-14 || j + 1 == m_max {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    let (e, y) = last;
    let mut v = vec![0.0; dim];
    for (c, b) in y.iter().zip(&basis) {
        v.iter_mut().zip(b).for_each(|(x, z)| *x += c * z);
    }
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    apply(&v, &mut w);
    let res = w.iter().zip(&v).map(|(hv, x)| (hv - e * x).powi(2)).sum::<f64>().sqrt();
    Ok((e, v, res))
}

fn sector_ground(h: &GaugeHamiltonian) -> Result<(f64, Vec<f64>, f64)> {
    let n = h.dim();
    if n <= DENSE_DIM {
        let eig = SymmetricEigen::new(h.to_dense());
        let (i, &e) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let mut w = vec![0.0; n];
        h.apply(&v, &mut w);
        let res = w.iter().zip(&v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
        return Ok((e, v, res));
    }
    // deterministic start with weight on every state
    let start: Vec<f64> = (0..n).map(|s| 1.0 + 0.1 * ((s * 2654435761) % 1000) as f64 / 1000.0).collect();
    let scale = h.diag.iter().fold(0.0f64, |a, &b| a.max(b.abs())) + 1.0;
    let mut v = start;
    let mut out = (0.0, Vec::new(), f64::INFINITY);
    for _ in 0..6 {
        out = lanczos_lowest(n, |x, y| h.apply(x, y), &v, 1e-13 * scale, 400)?;
        if out.2 < 1e-10 {
            return Ok(out);
        }
        v = out.1.clone();
    }
    Err(Error::NoConvergence(format!("Lanczos residual {:.3e}", out.2)))
}

/// Observables of a vector in one sector.
fn observables(h: &GaugeHamiltonian, v: &[f64]) -> Result<(f64, f64, Vec<(usize, usize, f64)>)> {
    let b = &h.basis;
    let lat = &b.lat;
    let nl = lat.n_links() as f64;
    let flux: f64 = v.iter().zip(&b.masks).map(|(x, m)| x * x * m.count_ones() as f64).sum();
    let mean_p = 1.0 - 2.0 * flux / nl;
    let np = lat.n_plaquettes();
    let mut plaq = 0.0;
    for p in 0..np {
        plaq += (0..b.dim()).map(|s| v[s] * v[b.flip(s, p)]).sum::<f64>();
    }
    let mean_plaq = plaq / np as f64;
    let index: HashMap<u128, usize> = b.masks.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut wilson = Vec::new();
    let l = lat.extent();
    for r1 in 1..l {
        for r2 in 1..l {
            let lm = link_mask(&lat.wilson_loop_links(0, r1, r2)?);
            let w: f64 = (0..b.dim())
                .map(|s| {
                    let t = index
                        .get(&(b.masks[s] ^ lm))
                        .ok_or_else(|| Error::InconsistentState("loop left the sector".into()))?;
                    Ok(v[s] * v[*t])
                })
                .sum::<Result<f64>>()?;
            wilson.push((r1, r2, w));
        }
    }
    Ok((mean_p, mean_plaq, wilson))
}

/// Ground state over all four winding sectors.
pub fn ground_state(lat: &Lattice, lambda: f64) -> Result<SpectralResult> {
    let sectors = [(false, false), (true, false), (false, true), (true, true)];
    let mut best: Option<(GaugeHamiltonian, f64, Vec<f64>, f64)> = None;
    let mut sector_e0 = Vec::with_capacity(4);
    for w in sectors {
        let h = GaugeHamiltonian::new(GaugeSectorBasis::new(lat, w)?, lambda)?;
        let (e, v, r) = sector_ground(&h)?;
        sector_e0.push(e);
        if best.as_ref().map_or(true, |b| e < b.1 - 1e-12) {
            best = Some((h, e, v, r));
        }
    }
    let (h, e0, v, residual) = best.unwrap();
    let (mean_p, mean_plaq, wilson) = observables(&h, &v)?;
    let energy = assemble_energy(lambda, mean_p, mean_plaq, lat)?;
    Ok(SpectralResult {
        l: lat.extent(),
        lambda,
        e0,
        energy,
        mean_p,
        mean_plaq,
        wilson,
        residual,
        winding: h.basis.winding,
        sector_e0,
        vector: v,
    })
}

/// Lowest two levels of the trivial winding sector (dense; small lattices only).
pub fn trivial_sector_gap(lat: &Lattice, lambda: f64) -> Result<(f64, f64)> {
    let h = GaugeHamiltonian::new(GaugeSectorBasis::new(lat, (false, false))?, lambda)?;
    if h.dim() > DENSE_DIM {
        return Err(Error::InvalidSize("gap check needs a dense sector".into()));
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(h.to_dense()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok((ev[0], ev[1]))
}

/// Independent route on small lattices: the full `2^{n_l}` space in the `Q` basis,
/// where plaquettes are diagonal and `P` flips a link, with the Gauss law imposed by
/// the penalty `c (1 - prod_x (1 + V_x) / 2)`.
#[derive(Clone, Debug)]
pub struct QBasisGround {
    pub e0: f64,
    pub mean_p: f64,
    pub mean_plaq: f64,
    /// Amplitudes indexed by the configuration mask.
    pub vector: DVector<f64>,
}

pub fn ground_state_q_basis(lat: &Lattice, lambda: f64) -> Result<QBasisGround> {
    let nl = lat.n_links();
    if nl > 12 {
        return Err(Error::InvalidSize("dense Q-basis route is limited to 12 links".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("coupling must be positive, got {lambda}")));
    }
    let dim = 1usize << nl;
    let np = lat.n_plaquettes();
    let plaq_sign = |c: usize, p: usize| {
        let m = lat.plaquette_links(p).iter().fold(0usize, |a, &l| a ^ (1 << l));
        if (c & m).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for c in 0..dim {
        h[(c, c)] += lambda * nl as f64;
        for l in 0..nl {
            h[(c ^ (1 << l), c)] -= lambda;
        }
        for p in 0..np {
            h[(c, c)] += (1.0 - plaq_sign(c, p)) / lambda;
        }
    }
    // projector onto gauge invariant states: average over the gauge group
    let stars: Vec<usize> = (0..lat.n_sites())
        .map(|s| lat.star_links(s).iter().fold(0usize, |a, &l| a ^ (1 << l)))
        .collect();
    let ng = 1usize << stars.len();
    let mut gauge_masks = Vec::with_capacity(ng);
    for g in 0..ng {
        gauge_masks.push((0..stars.len()).filter(|i| g >> i & 1 == 1).fold(0usize, |a, i| a ^ stars[i]));
    }
    let penalty = 4.0 * (2.0 * lambda * nl as f64 + 2.0 * np as f64 / lambda) + 1.0;
    for c in 0..dim {
        h[(c, c)] += penalty;
        for &g in &gauge_masks {
            h[(c ^ g, c)] -= penalty / ng as f64;
        }
    }
    let eig = SymmetricEigen::new(h);
    let (i, &e0) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let v: DVector<f64> = eig.eigenvectors.column(i).into_owned();
    let mut p = 0.0;
    let mut pl = 0.0;
    for c in 0..dim {
        for l in 0..nl {
            p += v[c] * v[c ^ (1 << l)];
        }
        for q in 0..np {
            pl += v[c] * v[c] * plaq_sign(c, q);
        }
    }
    Ok(QBasisGround { e0, mean_p: p / nl as f64, mean_plaq: pl / np as f64, vector: v })
}
