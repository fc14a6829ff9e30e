//! Exact contraction: expectation values as explicit sums over gauge configurations.
//!
//! Every estimator used here is gauge invariant and every gauge orbit has the same
//! size, so by default only configurations with the spanning-tree links set to zero
//! are enumerated (`2^{L^2 + 1}` of them). The enumeration follows a Gray code, so
//! consecutive configurations differ in one link and the contraction kernel is
//! carried along with low-rank updates.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, Geometry};
use crate::error::{Error, Result};
use crate::gaussian::{ContractionCache, RMat};
use crate::lattice::{GaugeConfig, Lattice};
use crate::observables::{
    assemble_energy, cache_for, electric_f_p_grad, local_estimates, wilson_value, ElectricTables, EnergyBreakdown,
};
use crate::optim::{EvalMode, GradientReport, GradientRoute};

/// Enumeration guard on the number of free links.
pub const MAX_FREE_LINKS: usize = 20;
const REBUILD_EVERY: usize = 256;
const CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Enumeration {
    /// One representative per gauge orbit.
    GaugeFixed,
    /// All `2^{n_links}` configurations.
    Full,
}

#[derive(Clone, Copy, Debug)]
pub struct EcOptions {
    pub enumeration: Enumeration,
    pub gradient: Option<GradientRoute>,
    pub keep_weights: bool,
}

impl Default for EcOptions {
    fn default() -> Self {
        EcOptions { enumeration: Enumeration::GaugeFixed, gradient: None, keep_weights: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EcResult {
    pub lambda: f64,
    pub n_configs: usize,
    /// `log sum_Q |psi(Q)|^2` over the enumerated set, up to a parameter independent constant.
    pub log_z: f64,
    pub mean_p: f64,
    /// Imaginary part of the summed complex electric estimator (zero up to rounding).
    pub mean_p_imag: f64,
    pub mean_plaq: f64,
    pub energy: EnergyBreakdown,
    /// `(r1, r2, <W>)` for rectangles up to `(L-1) x (L-1)`.
    pub wilson: Vec<(usize, usize, f64)>,
    pub gradient: Option<GradientReport>,
    /// Normalized weights, in enumeration order.
    #[serde(skip)]
    pub weights: Option<Vec<(GaugeConfig, f64)>>,
}

/// Per-configuration data entering the exact sums.
#[derive(Clone, Debug)]
pub struct Record {
    pub log_w: f64,
    /// Link-averaged complex electric estimator.
    pub f: C64,
    pub plaq: f64,
    pub wilson: Vec<i32>,
    pub dlog_w: Vec<f64>,
    /// Link-averaged explicit derivative of `F_P`.
    pub df: Vec<f64>,
    pub config: Option<GaugeConfig>,
}

fn free_links(lat: &Lattice, e: Enumeration) -> Vec<usize> {
    match e {
        Enumeration::Full => (0..lat.n_links()).collect(),
        Enumeration::GaugeFixed => {
            let tree = lat.spanning_tree();
            (0..lat.n_links()).filter(|l| !tree.contains(l)).collect()
        }
    }
}

pub fn wilson_loops(lat: &Lattice) -> Result<Vec<(usize, usize, Vec<usize>)>> {
    let mut out = Vec::new();
    for r1 in 1..lat.extent() {
        for r2 in 1..lat.extent() {
            out.push((r1, r2, lat.wilson_loop_links(0, r1, r2)?));
        }
    }
    Ok(out)
}

struct Ctx<'a> {
    geo: &'a Geometry,
    tables: &'a ElectricTables,
    ansatz: &'a Ansatz,
    dds: Option<Vec<RMat>>,
    route: Option<GradientRoute>,
    loops: Vec<(usize, usize, Vec<usize>)>,
    keep: bool,
}

impl Ctx<'_> {
    fn record(&self, cache: &ContractionCache, c: &GaugeConfig) -> Result<Record> {
        let le = local_estimates(self.geo, self.tables, self.ansatz, cache, c, self.dds.as_deref())?;
        let n_l = self.geo.lattice().n_links();
        let mut df = Vec::new();
        if let (Some(GradientRoute::Explicit), Some(dds)) = (self.route, &self.dds) {
            df = vec![0.0; dds.len()];
            for l in 0..n_l {
                let (_, d) = electric_f_p_grad(self.geo, self.tables, self.ansatz.site_cov(), dds, cache.kernel(), c, l)?;
                df.iter_mut().zip(d).for_each(|(a, b)| *a += b / n_l as f64);
            }
        }
        Ok(Record {
            log_w: le.log_weight,
            f: le.mean_ratio(),
            plaq: le.plaq,
            wilson: self.loops.iter().map(|(_, _, lk)| wilson_value(c, lk)).collect(),
            dlog_w: le.dlog_weight,
            df,
            config: self.keep.then(|| c.clone()),
        })
    }

    fn zero_record(&self, c: &GaugeConfig) -> Record {
        Record {
            log_w: f64::NEG_INFINITY,
            f: C64::new(0.0, 0.0),
            plaq: 0.0,
            wilson: vec![0; self.loops.len()],
            dlog_w: vec![0.0; self.dds.as_ref().map_or(0, |d| d.len())],
            df: Vec::new(),
            config: self.keep.then(|| c.clone()),
        }
    }

    /// Records for Gray-code positions `start..end`.
    fn chunk(&self, free: &[usize], start: usize, end: usize) -> Result<Vec<Record>> {
        let lat = self.geo.lattice();
        let g = start ^ (start >> 1);
        let mut c = GaugeConfig::zeros(lat);
        for (b, &l) in free.iter().enumerate() {
            c.set(l, (g >> b & 1) as u8);
        }
        let mut cache = fresh(self.geo, self.ansatz, &c)?;
        let mut out = Vec::with_capacity(end - start);
        for k in start..end {
            if k > start {
                let l = free[k.trailing_zeros() as usize];
                let q = c.get(l);
                c.flip(l);
                cache = match cache {
                    Some(mut ch) => {
                        let p = ch.propose(&self.geo.link(l).maj, self.geo.flip_delta(l, q));
                        if p.is_zero() {
                            fresh(self.geo, self.ansatz, &c)?
                        } else {
                            ch.accept(&p)?;
                            if ch.updates_since_rebuild() >= REBUILD_EVERY {
                                ch.rebuild()?;
                            }
                            Some(ch)
                        }
                    }
                    None => fresh(self.geo, self.ansatz, &c)?,
                };
            }
            out.push(match &cache {
                Some(ch) => self.record(ch, &c)?,
                None => self.zero_record(&c),
            });
        }
        Ok(out)
    }
}

fn fresh(geo: &Geometry, ansatz: &Ansatz, c: &GaugeConfig) -> Result<Option<ContractionCache>> {
    match cache_for(geo, ansatz, c) {
        Ok(ch) => Ok(Some(ch)),
        Err(Error::ZeroAmplitude) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Weighted averages, energy and gradient from a set of records. Weights are
/// `exp(log_w)`; samples drawn from `p(Q)` enter with equal `log_w`.
pub fn assemble(records: &[Record], lambda: f64, lat: &Lattice, route: Option<GradientRoute>) -> Result<Summary> {
    let m = records.iter().map(|r| r.log_w).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::ZeroAmplitude);
    }
    let w: Vec<f64> = records.iter().map(|r| (r.log_w - m).exp()).collect();
    let z: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / z).collect();
    let nl = lat.n_links() as f64;
    let np = lat.n_plaquettes() as f64;
    let mean_f: C64 = records.iter().zip(&p).map(|(r, p)| r.f * *p).sum();
    let mean_plaq: f64 = records.iter().zip(&p).map(|(r, p)| r.plaq * p).sum();
    let nw = records.first().map_or(0, |r| r.wilson.len());
    let wilson: Vec<f64> = (0..nw)
        .map(|i| records.iter().zip(&p).map(|(r, p)| r.wilson[i] as f64 * p).sum())
        .collect();
    let energy = assemble_energy(lambda, mean_f.re, mean_plaq, lat)?;
    let gradient = match route {
        None => None,
        Some(route) => {
            let n = records.iter().find(|r| r.log_w.is_finite()).map_or(0, |r| r.dlog_w.len());
            let mut grad = vec![0.0; n];
            let mut terms = None;
            match route {
                GradientRoute::LogDerivative => {
                    let eloc: Vec<C64> = records
                        .iter()
                        .map(|r| lambda * nl * (C64::new(1.0, 0.0) - r.f.conj()) + np / lambda * (1.0 - r.plaq))
                        .collect();
                    let mean_e: C64 = eloc.iter().zip(&p).map(|(e, p)| e * *p).sum();
                    for k in 0..n / 2 {
                        let mut oe = [C64::new(0.0, 0.0); 2];
                        let mut om = [C64::new(0.0, 0.0); 2];
                        for ((r, e), &pi) in records.iter().zip(&eloc).zip(&p) {
                            if pi == 0.0 {
                                continue;
                            }
                            let o = C64::new(0.5 * r.dlog_w[2 * k], -0.5 * r.dlog_w[2 * k + 1]);
                            let os = [o, C64::new(0.0, 1.0) * o];
                            for j in 0..2 {
                                oe[j] += os[j].conj() * e * pi;
                                om[j] += os[j].conj() * pi;
                            }
                        }
                        for j in 0..2 {
                            grad[2 * k + j] = 2.0 * (oe[j] - om[j] * mean_e).re;
                        }
                    }
                }
                GradientRoute::Explicit => {
                    let e_i: Vec<f64> =
                        records.iter().map(|r| lambda * nl * (1.0 - r.f.re) + np / lambda * (1.0 - r.plaq)).collect();
                    let mean_e: f64 = e_i.iter().zip(&p).map(|(e, p)| e * p).sum();
                    let mut t = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
                    for a in 0..n {
                        let mut dfm = 0.0;
                        let mut eg = 0.0;
                        let mut gm = 0.0;
                        for ((r, e), &pi) in records.iter().zip(&e_i).zip(&p) {
                            if pi == 0.0 {
                                continue;
                            }
                            if r.df.len() != n {
                                return Err(Error::InconsistentState("explicit derivatives missing".into()));
                            }
                            dfm += r.df[a] * pi;
                            eg += e * r.dlog_w[a] * pi;
                            gm += r.dlog_w[a] * pi;
                        }
                        t[0][a] = -lambda * nl * dfm;
                        t[1][a] = eg;
                        t[2][a] = -mean_e * gm;
                        grad[a] = t[0][a] + t[1][a] + t[2][a];
                    }
                    terms = Some(t);
                }
            }
            Some(GradientReport { grad, mode: EvalMode::Ec, route, terms, errors: None, fd_residuals: None })
        }
    };
    Ok(Summary { log_z: m + z.ln(), p, mean_f, mean_plaq, wilson, energy, gradient })
}

/// Output of [`assemble`].
#[derive(Clone, Debug)]
pub struct Summary {
    pub log_z: f64,
    pub p: Vec<f64>,
    pub mean_f: C64,
    pub mean_plaq: f64,
    pub wilson: Vec<f64>,
    pub energy: EnergyBreakdown,
    pub gradient: Option<GradientReport>,
}

/// Per-configuration records in enumeration order.
pub fn ec_records(
    geo: &Geometry,
    tables: &ElectricTables,
    ansatz: &Ansatz,
    opts: &EcOptions,
) -> Result<Vec<Record>> {
    let lat = geo.lattice();
    let free = free_links(lat, opts.enumeration);
    if free.len() > MAX_FREE_LINKS {
        return Err(Error::InvalidSize(format!(
            "{} free links exceed the exact contraction limit of {MAX_FREE_LINKS}; use Monte Carlo",
            free.len()
        )));
    }
    let ctx = Ctx {
        geo,
        tables,
        ansatz,
        dds: match opts.gradient {
            Some(_) => Some(ansatz.site_cov_derivatives()?),
            None => None,
        },
        route: opts.gradient,
        loops: wilson_loops(lat)?,
        keep: opts.keep_weights,
    };
    let total = 1usize << free.len();
    let starts: Vec<usize> = (0..total).step_by(CHUNK).collect();
    let chunks: Vec<Result<Vec<Record>>> =
        starts.par_iter().map(|&s| ctx.chunk(&free, s, (s + CHUNK).min(total))).collect();
    let mut out = Vec::with_capacity(total);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

pub fn ec_evaluate(
    geo: &Geometry,
    tables: &ElectricTables,
    ansatz: &Ansatz,
    lambda: f64,
    opts: &EcOptions,
) -> Result<EcResult> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("coupling must be positive, got {lambda}")));
    }
    let lat = geo.lattice();
    let records = ec_records(geo, tables, ansatz, opts)?;
    let s = assemble(&records, lambda, lat, opts.gradient)?;
    let loops = wilson_loops(lat)?;
    let weights = opts.keep_weights.then(|| {
        records.iter().zip(&s.p).map(|(r, p)| (r.config.clone().unwrap(), *p)).collect()
    });
    Ok(EcResult {
        lambda,
        n_configs: records.len(),
        log_z: s.log_z,
        mean_p: s.mean_f.re,
        mean_p_imag: s.mean_f.im,
        mean_plaq: s.mean_plaq,
        energy: s.energy,
        wilson: loops.iter().zip(&s.wilson).map(|((a, b, _), w)| (*a, *b, *w)).collect(),
        gradient: s.gradient,
        weights,
    })
}

/// Normalized `p(Q)` over all `2^{n_links}` configurations.
pub fn ec_distribution(geo: &Geometry, ansatz: &Ansatz) -> Result<Vec<(GaugeConfig, f64)>> {
    let tables = ElectricTables::new(geo)?;
    let opts = EcOptions { enumeration: Enumeration::Full, gradient: None, keep_weights: true };
    let r = ec_evaluate(geo, &tables, ansatz, 1.0, &opts)?;
    let mut w = r.weights.unwrap();
    w.sort_by_key(|(c, _)| c.mask());
    Ok(w)
}
