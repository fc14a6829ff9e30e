//! Per-configuration estimators and the energy.
//!
//! The electric term uses the Gaussian map: with all links but `l` contracted, the
//! open modes of `l` are left in a pure Gaussian state of covariance `Gamma_v`, and
//! `conj(psi(Q')) psi(Q) / |psi(Q)|^2 = <X> / <w w^dag>` with `X = |w'><w|` the
//! link operator that toggles the gauge bit. Both expectation values are finite
//! sums of Pfaffians of submatrices of `Gamma_v`, found by expanding `X` and
//! `w w^dag` in Majorana monomials once per link.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, Geometry, LinkInfo};
use crate::error::{Error, Result};
use crate::fock::{majorana_expansion, FockSpace};
use crate::gaussian::{laplace, overlap_sq, pfaffian_grad, submatrix, ContractionCache, MajoranaCov, RMat};
use crate::lattice::{GaugeConfig, Lattice};

/// `(local Majorana indices, coefficient)` with `<op> = sum coefficient * Pf(Gamma|indices)`.
pub type PfTerms = Vec<(Vec<usize>, C64)>;

#[derive(Clone, Debug)]
pub struct LinkTables {
    /// Toggle operator `|w_{1-q}><w_q|` for `q = 0, 1`.
    pub toggle: [PfTerms; 2],
    /// Projector `|w_q><w_q|`.
    pub proj: [PfTerms; 2],
}

/// Pfaffian tables of every link.
#[derive(Clone, Debug)]
pub struct ElectricTables {
    links: Vec<LinkTables>,
}

fn to_pf_terms(exp: Vec<(Vec<usize>, C64)>) -> PfTerms {
    // <g_S> = (-i)^{|S|/2} Pf(Gamma|S); odd monomials have zero expectation.
    exp.into_iter()
        .filter(|(s, _)| s.len() % 2 == 0)
        .map(|(s, c)| {
            let k = s.len() / 2;
            let ph = C64::new(0.0, -1.0).powi(k as i32);
            (s, c * ph)
        })
        .collect()
}

fn link_tables(info: &LinkInfo) -> Result<LinkTables> {
    let fs = FockSpace::new(info.modes.len())?;
    let states: Vec<Vec<C64>> = (0..2u8).map(|q| fs.gaussian_state(&info.pairing(q))).collect();
    let outer = |a: &[C64], b: &[C64]| {
        let d = a.len();
        crate::gaussian::CMat::from_fn(d, d, |r, c| a[r] * b[c].conj())
    };
    let mut toggle: [PfTerms; 2] = [Vec::new(), Vec::new()];
    let mut proj: [PfTerms; 2] = [Vec::new(), Vec::new()];
    for q in 0..2 {
        toggle[q] = to_pf_terms(majorana_expansion(&fs, &outer(&states[1 - q], &states[q])));
        proj[q] = to_pf_terms(majorana_expansion(&fs, &outer(&states[q], &states[q])));
    }
    Ok(LinkTables { toggle, proj })
}

impl ElectricTables {
    pub fn new(geo: &Geometry) -> Result<Self> {
        let mut memo: HashMap<Vec<(usize, usize, u64, u64)>, LinkTables> = HashMap::new();
        let mut links = Vec::with_capacity(geo.links().len());
        for info in geo.links() {
            let key: Vec<_> = info
                .pairs
                .iter()
                .map(|&(i, o, c)| (i, o, c.re.to_bits(), c.im.to_bits()))
                .collect();
            if !memo.contains_key(&key) {
                memo.insert(key.clone(), link_tables(info)?);
            }
            links.push(memo[&key].clone());
        }
        Ok(ElectricTables { links })
    }

    pub fn link(&self, l: usize) -> &LinkTables {
        &self.links[l]
    }
}

/// `sum c Pf(gv|S)`.
pub fn pf_expectation(terms: &PfTerms, gv: &RMat) -> C64 {
    terms.iter().map(|(s, c)| c * laplace(gv, s)).sum()
}

/// Gradient of [`pf_expectation`] with respect to the entries of `gv`, with the
/// convention `d<op> = sum_{a,b} G[a,b] dgv[a,b]`.
pub fn pf_expectation_grad(terms: &PfTerms, gv: &RMat) -> crate::gaussian::CMat {
    let n = gv.nrows();
    let mut g = crate::gaussian::CMat::zeros(n, n);
    for (s, c) in terms {
        if s.is_empty() {
            continue;
        }
        let pg = pfaffian_grad(gv, s);
        for (a, &i) in s.iter().enumerate() {
            for (b, &j) in s.iter().enumerate() {
                g[(i, j)] += c * pg[(a, b)] * 0.5;
            }
        }
    }
    g
}

/// Site covariance entries `D[a, b]` for global Majorana indices (zero across sites).
fn d_entry(site_cov: &RMat, block: usize, a: usize, b: usize) -> f64 {
    if a / block == b / block {
        site_cov[(a % block, b % block)]
    } else {
        0.0
    }
}

/// `(D_oo, D_oS)` of a link.
pub fn link_d_blocks(geo: &Geometry, site_cov: &RMat, l: usize) -> (RMat, RMat) {
    let info = geo.link(l);
    let b = geo.site_block();
    let doo = RMat::from_fn(info.maj.len(), info.maj.len(), |i, j| d_entry(site_cov, b, info.maj[i], info.maj[j]));
    let dos = RMat::from_fn(info.maj.len(), info.rest.len(), |i, j| d_entry(site_cov, b, info.maj[i], info.rest[j]));
    (doo, dos)
}

/// Intermediate data of the Gaussian map for one link.
#[derive(Clone, Debug)]
pub struct LinkMap {
    pub gamma_v: RMat,
    /// `K_oo^-1`.
    pub koo_inv: RMat,
    /// `(D_cc + Gamma_in,cc)^-1` restricted to the rest indices.
    pub b: RMat,
}

/// `Gamma_v = D_oo + D_oS B D_oS^T` with `B = K_SS - K_So K_oo^-1 K_oS`.
pub fn link_gamma_v(geo: &Geometry, site_cov: &RMat, k: &RMat, l: usize) -> Result<LinkMap> {
    let info = geo.link(l);
    let o = &info.maj;
    let s = &info.rest;
    let koo = submatrix(k, o, o);
    let koo_inv = koo.try_inverse().ok_or(Error::DegenerateContraction)?;
    let kos = submatrix(k, o, s);
    let kso = submatrix(k, s, o);
    let kss = submatrix(k, s, s);
    let b = kss - &kso * &koo_inv * &kos;
    let (doo, dos) = link_d_blocks(geo, site_cov, l);
    let gv = doo + &dos * &b * dos.transpose();
    let gamma_v = (&gv - gv.transpose()) * 0.5;
    Ok(LinkMap { gamma_v, koo_inv, b })
}

/// `conj(psi(Q^l)) psi(Q) / |psi(Q)|^2`, whose real part is the electric estimator `F_P`.
pub fn electric_ratio(
    geo: &Geometry,
    tables: &ElectricTables,
    site_cov: &RMat,
    k: &RMat,
    config: &GaugeConfig,
    l: usize,
) -> Result<C64> {
    let map = link_gamma_v(geo, site_cov, k, l)?;
    let q = config.get(l) as usize;
    let t = tables.link(l);
    let den = pf_expectation(&t.proj[q], &map.gamma_v);
    if den.norm() < 1e-300 {
        return Err(Error::DegenerateContraction);
    }
    Ok(pf_expectation(&t.toggle[q], &map.gamma_v) / den)
}

/// `F_P` for one link and configuration.
pub fn electric_f_p(
    geo: &Geometry,
    tables: &ElectricTables,
    site_cov: &RMat,
    k: &RMat,
    config: &GaugeConfig,
    l: usize,
) -> Result<f64> {
    Ok(electric_ratio(geo, tables, site_cov, k, config, l)?.re)
}

/// Closed form for one flavor: `(Gamma_v[l1,l2] + Gamma_v[r1,r2]) / (2 <w w^dag>)`.
/// The pair of each leg sits at local positions `(0,1)` and `(2,3)`.
pub fn electric_f_p_f1(gamma_v: &RMat, gamma_w: &RMat) -> Result<f64> {
    if gamma_v.nrows() != 4 {
        return Err(Error::Domain("one-flavor formula needs a 4x4 covariance".into()));
    }
    // <w w^dag> with |w|^2 = 2.
    let w = 2.0 * overlap_sq(&MajoranaCov::new(gamma_w.clone())?, &MajoranaCov::new(gamma_v.clone())?)?;
    Ok((gamma_v[(0, 1)] + gamma_v[(2, 3)]) / (2.0 * w))
}

/// The eight real Pfaffian terms of the two-flavor estimator for a horizontal link
/// with `q = 0`, in the basis `(l1, l1', l2, l2', r1, r1', r2, r2')` (1-based labels for
/// the Majorana pairs of each mode). `Re <X> = 1/4 sum sign Pf`.
pub const F2_HORIZONTAL_TERMS: [([usize; 4], f64); 8] = [
    ([1, 2, 3, 4], -1.0),
    ([1, 2, 5, 6], -1.0),
    ([1, 3, 5, 7], 1.0),
    ([1, 4, 6, 7], -1.0),
    ([2, 3, 5, 8], -1.0),
    ([2, 4, 6, 8], 1.0),
    ([3, 4, 7, 8], -1.0),
    ([5, 6, 7, 8], -1.0),
];

pub fn plaquette_value(lat: &Lattice, config: &GaugeConfig, p: usize) -> i32 {
    config.plaquette(lat, p)
}

pub fn wilson_value(config: &GaugeConfig, loop_links: &[usize]) -> i32 {
    config.loop_sign(loop_links)
}

pub fn mean_plaquette(lat: &Lattice, config: &GaugeConfig) -> f64 {
    (0..lat.n_plaquettes()).map(|p| config.plaquette(lat, p) as f64).sum::<f64>() / lat.n_plaquettes() as f64
}

/// `|psi(Q)|^2` from scratch, with normalized site and link states.
pub fn amplitude_sq(geo: &Geometry, ansatz: &Ansatz, config: &GaugeConfig) -> Result<f64> {
    let d = MajoranaCov::new(ansatz.full_d(geo))?;
    let g = MajoranaCov::new(geo.gamma_in(config)?)?;
    overlap_sq(&g, &d)
}

/// A fresh contraction cache for `config`.
pub fn cache_for(geo: &Geometry, ansatz: &Ansatz, config: &GaugeConfig) -> Result<ContractionCache> {
    ContractionCache::new(ansatz.full_d(geo), geo.gamma_in(config)?)
}

/// Everything a sampler or the exact sum needs from one configuration.
#[derive(Clone, Debug)]
pub struct LocalEstimates {
    /// `conj(psi(Q^l)) psi(Q) / |psi(Q)|^2` for every link.
    pub ratios: Vec<C64>,
    /// Mean plaquette sign.
    pub plaq: f64,
    /// `log |psi(Q)|^2` up to a constant.
    pub log_weight: f64,
    /// `d log |psi(Q)|^2 / dx` for the interleaved real parameters.
    pub dlog_weight: Vec<f64>,
}

impl LocalEstimates {
    pub fn mean_ratio(&self) -> C64 {
        self.ratios.iter().sum::<C64>() / self.ratios.len() as f64
    }
}

/// `1/2 Tr(K dD)` for every parameter, using the block structure of `dD`.
pub fn dlog_weight(cache: &ContractionCache, block: usize, dds: &[RMat]) -> Vec<f64> {
    let ks = cache.summed_diagonal_blocks(block);
    dds.iter().map(|dd| 0.5 * ks.component_mul(&dd.transpose()).sum()).collect()
}

pub fn local_estimates(
    geo: &Geometry,
    tables: &ElectricTables,
    ansatz: &Ansatz,
    cache: &ContractionCache,
    config: &GaugeConfig,
    dds: Option<&[RMat]>,
) -> Result<LocalEstimates> {
    let lat = geo.lattice();
    let mut ratios = Vec::with_capacity(lat.n_links());
    for l in 0..lat.n_links() {
        ratios.push(electric_ratio(geo, tables, ansatz.site_cov(), cache.kernel(), config, l)?);
    }
    let plaq = mean_plaquette(lat, config);
    let dlog = dds.map(|d| dlog_weight(cache, geo.site_block(), d)).unwrap_or_default();
    Ok(LocalEstimates { ratios, plaq, log_weight: cache.log_overlap_sq(), dlog_weight: dlog })
}

/// `F_P` of link `l` together with its explicit parameter derivatives at fixed
/// configuration weight, through `dGamma_v`.
pub fn electric_f_p_grad(
    geo: &Geometry,
    tables: &ElectricTables,
    site_cov: &RMat,
    dds: &[RMat],
    k: &RMat,
    config: &GaugeConfig,
    l: usize,
) -> Result<(f64, Vec<f64>)> {
    let info = geo.link(l);
    let o = &info.maj;
    let s = &info.rest;
    let block = geo.site_block();
    let n_sites = geo.lattice().n_sites();
    let map = link_gamma_v(geo, site_cov, k, l)?;
    // rows S and columns S of (D + Gamma_in)_cc^-1, over all indices
    let k_o_all = k.select_rows(o);
    let k_all_o = k.select_columns(o);
    let x = k.select_rows(s) - submatrix(k, s, o) * &map.koo_inv * &k_o_all;
    let y = k.select_columns(s) - &k_all_o * &map.koo_inv * submatrix(k, o, s);
    let (_, dos) = link_d_blocks(geo, site_cov, l);
    let t = tables.link(l);
    let q = config.get(l) as usize;
    let num = pf_expectation(&t.toggle[q], &map.gamma_v);
    let den = pf_expectation(&t.proj[q], &map.gamma_v);
    if den.norm() < 1e-300 {
        return Err(Error::DegenerateContraction);
    }
    let gnum = pf_expectation_grad(&t.toggle[q], &map.gamma_v);
    let gden = pf_expectation_grad(&t.proj[q], &map.gamma_v);
    let mut out = Vec::with_capacity(dds.len());
    for dd in dds {
        let mut db = RMat::zeros(s.len(), s.len());
        for site in 0..n_sites {
            let r0 = site * block;
            db -= x.columns(r0, block) * dd * y.rows(r0, block);
        }
        let ddoo = RMat::from_fn(o.len(), o.len(), |i, j| d_entry(dd, block, o[i], o[j]));
        let ddos = RMat::from_fn(o.len(), s.len(), |i, j| d_entry(dd, block, o[i], s[j]));
        let dg = ddoo + &ddos * &map.b * dos.transpose() + &dos * &db * dos.transpose() + &dos * &map.b * ddos.transpose();
        let dg = (&dg - dg.transpose()) * 0.5;
        let dnum: C64 = gnum.iter().zip(dg.iter()).map(|(g, d)| g * *d).sum();
        let dden: C64 = gden.iter().zip(dg.iter()).map(|(g, d)| g * *d).sum();
        out.push(((dnum * den - num * dden) / (den * den)).re);
    }
    Ok(((num / den).re, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub electric: f64,
    pub magnetic: f64,
}

/// `E = n_l lambda (1 - <P>) + (n_p / lambda) (1 - <plaq>)`, the expectation of
/// `H = lambda sum_l (1 - P_l) + lambda^-1 sum_p (1 - Q Q Q Q)` for a translation and
/// rotation invariant state.
pub fn assemble_energy(lambda: f64, mean_p: f64, mean_plaq: f64, lat: &Lattice) -> Result<EnergyBreakdown> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("coupling must be positive, got {lambda}")));
    }
    let electric = lat.n_links() as f64 * lambda * (1.0 - mean_p);
    let magnetic = lat.n_plaquettes() as f64 * (1.0 - mean_plaq) / lambda;
    Ok(EnergyBreakdown { total: electric + magnetic, electric, magnetic })
}
