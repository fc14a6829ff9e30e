//! Metropolis sampling of `p(Q) = |psi(Q)|^2 / Z` with low-rank kernel updates.

use std::io::Write;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, Geometry};
use crate::error::{Error, Result};
use crate::gaussian::{ContractionCache, RMat};
use crate::lattice::GaugeConfig;
use crate::observables::{assemble_energy, cache_for, local_estimates, ElectricTables, EnergyBreakdown};
use crate::optim::{EvalMode, GradientReport, GradientRoute};

/// Relative kernel drift above which a run is aborted.
pub const DRIFT_FAIL: f64 = 1e-5;
/// Relative kernel drift above which a rebuild is logged as necessary.
pub const DRIFT_REBUILD: f64 = 1e-7;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McOptions {
    pub n_warm: usize,
    pub n_meas: usize,
    pub seed: u64,
    /// Probability of proposing a flip of all four links of a plaquette instead of
    /// a single link. Zero gives pure single-link updates.
    pub plaquette_mix: f64,
    /// Accepted updates between kernel rebuilds.
    pub rebuild_every: usize,
    pub gradient: bool,
    /// Print `{step, E_sample, acceptance}` lines every this many measurement steps.
    pub verbose_every: Option<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            n_warm: 100_000,
            n_meas: 100_000,
            seed: 0,
            plaquette_mix: 0.0,
            rebuild_every: 10_000,
            gradient: false,
            verbose_every: None,
        }
    }
}

/// Configuration, kernel and random state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub config: GaugeConfig,
    pub cache: ContractionCache,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub proposed: u64,
    pub accepted: u64,
    /// Largest drift seen at a rebuild.
    pub max_drift: f64,
    /// Rebuilds whose drift exceeded [`DRIFT_REBUILD`].
    pub drift_rebuilds: u64,
}

impl ChainState {
    pub fn new(geo: &Geometry, ansatz: &Ansatz, config: GaugeConfig, seed: u64) -> Result<Self> {
        let cache = cache_for(geo, ansatz, &config)?;
        Ok(ChainState {
            config,
            cache,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            proposed: 0,
            accepted: 0,
            max_drift: 0.0,
            drift_rebuilds: 0,
        })
    }

    /// One Metropolis update; returns whether the proposal was accepted.
    pub fn metropolis_step(&mut self, geo: &Geometry, plaquette_mix: f64, rebuild_every: usize) -> Result<bool> {
        let lat = geo.lattice();
        let links: Vec<usize> = if plaquette_mix > 0.0 && self.rng.random::<f64>() < plaquette_mix {
            lat.plaquette_links(self.rng.random_range(0..lat.n_plaquettes())).to_vec()
        } else {
            vec![self.rng.random_range(0..lat.n_links())]
        };
        let u: f64 = self.rng.random();
        self.step += 1;
        self.proposed += 1;
        let (idx, delta) = flip_block(geo, &self.config, &links);
        let p = self.cache.propose(&idx, delta);
        if p.is_zero() || u >= p.weight_ratio() {
            return Ok(false);
        }
        self.cache.accept(&p)?;
        for &l in &links {
            self.config.flip(l);
        }
        self.accepted += 1;
        if self.cache.updates_since_rebuild() >= rebuild_every {
            self.rebuild()?;
        }
        Ok(true)
    }

    pub fn rebuild(&mut self) -> Result<f64> {
        let drift = self.cache.rebuild()?;
        self.max_drift = self.max_drift.max(drift);
        if drift > DRIFT_FAIL {
            return Err(Error::Numerical(format!("kernel drift {drift:.3e} after low-rank updates")));
        }
        if drift > DRIFT_REBUILD {
            self.drift_rebuilds += 1;
        }
        Ok(drift)
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Indices and change of `Gamma_in` for flipping `links`.
fn flip_block(geo: &Geometry, c: &GaugeConfig, links: &[usize]) -> (Vec<usize>, RMat) {
    let idx: Vec<usize> = links.iter().flat_map(|&l| geo.link(l).maj.iter().copied()).collect();
    let mut delta = RMat::zeros(idx.len(), idx.len());
    let mut off = 0;
    for &l in links {
        let d = geo.flip_delta(l, c.get(l));
        let n = d.nrows();
        delta.view_mut((off, off), (n, n)).copy_from(&d);
        off += n;
    }
    (idx, delta)
}

/// Binned standard error of the mean.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinnedSeries {
    /// `(bin size, error estimate)` for bin sizes `1, 2, 4, ...` with at least 32 bins.
    pub levels: Vec<(usize, f64)>,
    pub stderr: f64,
    /// Whether consecutive levels agreed within their own uncertainty at the end.
    pub plateau: bool,
}

/// Re-binning analysis. Bins are doubled while at least 32 bins remain; the
/// reported error is the first level that agrees with all larger ones within
/// their statistical uncertainty, or the largest level otherwise.
pub fn rebin(series: &[f64]) -> Result<BinnedSeries> {
    if series.len() < 64 {
        return Err(Error::Domain(format!("re-binning needs at least 64 samples, got {}", series.len())));
    }
    let mut levels = Vec::new();
    let mut bins: Vec<f64> = series.to_vec();
    let mut size = 1;
    while bins.len() >= 32 {
        let n = bins.len() as f64;
        let mean = bins.iter().sum::<f64>() / n;
        let var = bins.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        levels.push((size, (var / n).sqrt(), n));
        bins = bins.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        size *= 2;
    }
    // relative uncertainty of an error estimate from n bins is about 1/sqrt(2(n-1))
    let tol = |e: f64, n: f64| e / (2.0 * (n - 1.0)).sqrt();
    let last = levels.len() - 1;
    let mut pick = last;
    for i in 0..=last {
        let (_, e, n) = levels[i];
        let ok = levels[i..].iter().all(|&(_, ej, nj)| (ej - e).abs() <= 2.0 * (tol(e, n) + tol(ej, nj)));
        if ok {
            pick = i;
            break;
        }
    }
    let stderr = levels[pick].1;
    let plateau = pick < last;
    Ok(BinnedSeries { levels: levels.iter().map(|&(s, e, _)| (s, e)).collect(), stderr, plateau })
}

pub fn rebin_error(series: &[f64]) -> Result<f64> {
    Ok(rebin(series)?.stderr)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McResult {
    pub mean_p: f64,
    pub p_err: f64,
    pub mean_plaq: f64,
    pub plaq_err: f64,
    pub energy: EnergyBreakdown,
    pub e_err: f64,
    pub electric_err: f64,
    pub magnetic_err: f64,
    pub acceptance: f64,
    pub warm_acceptance: f64,
    /// No proposal was accepted during warm-up.
    pub frozen: bool,
    pub max_drift: f64,
    pub gradient: Option<GradientReport>,
    pub n_warm: usize,
    pub n_meas: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
struct VerboseLine {
    step: u64,
    #[serde(rename = "E_sample")]
    e_sample: f64,
    acceptance: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs one chain from the flux-free configuration.
pub fn run_chain(
    geo: &Geometry,
    tables: &ElectricTables,
    ansatz: &Ansatz,
    lambda: f64,
    opts: &McOptions,
    mut log: Option<&mut dyn Write>,
) -> Result<McResult> {
    if opts.n_warm == 0 || opts.n_meas == 0 {
        return Err(Error::Domain("warm-up and measurement budgets must be positive".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("coupling must be positive, got {lambda}")));
    }
    let lat = geo.lattice();
    let nl = lat.n_links() as f64;
    let np = lat.n_plaquettes() as f64;
    let mut chain = ChainState::new(geo, ansatz, GaugeConfig::zeros(lat), opts.seed)?;
    for _ in 0..opts.n_warm {
        chain.metropolis_step(geo, opts.plaquette_mix, opts.rebuild_every)?;
    }
    let warm_acceptance = chain.acceptance();
    let frozen = chain.accepted == 0;
    chain.proposed = 0;
    chain.accepted = 0;
    let dds = if opts.gradient { Some(ansatz.site_cov_derivatives()?) } else { None };
    let mut p_s = Vec::with_capacity(opts.n_meas);
    let mut pim_s = Vec::with_capacity(opts.n_meas);
    let mut plaq_s = Vec::with_capacity(opts.n_meas);
    let mut o_s: Vec<Vec<f64>> = Vec::new();
    let mut last: Option<(GaugeConfig, crate::observables::LocalEstimates)> = None;
    for i in 0..opts.n_meas {
        let moved = chain.metropolis_step(geo, opts.plaquette_mix, opts.rebuild_every)?;
        let le = match (&last, moved) {
            (Some((c, le)), false) if *c == chain.config => le.clone(),
            _ => local_estimates(geo, tables, ansatz, &chain.cache, &chain.config, dds.as_deref())?,
        };
        let f = le.mean_ratio();
        p_s.push(f.re);
        pim_s.push(f.im);
        plaq_s.push(le.plaq);
        if opts.gradient {
            o_s.push(le.dlog_weight.clone());
        }
        if let (Some(every), Some(w)) = (opts.verbose_every, log.as_deref_mut()) {
            if (i + 1) % every == 0 {
                let line = VerboseLine {
                    step: chain.step,
                    e_sample: lambda * nl * (1.0 - f.re) + np / lambda * (1.0 - le.plaq),
                    acceptance: chain.acceptance(),
                };
                writeln!(w, "{}", serde_json::to_string(&line)?)?;
            }
        }
        last = Some((chain.config.clone(), le));
    }
    chain.rebuild()?;
    let mean_p = mean(&p_s);
    let mean_plaq = mean(&plaq_s);
    let p_err = rebin_error(&p_s)?;
    let plaq_err = rebin_error(&plaq_s)?;
    let e_s: Vec<f64> = p_s.iter().zip(&plaq_s).map(|(p, q)| lambda * nl * (1.0 - p) + np / lambda * (1.0 - q)).collect();
    let e_err = rebin_error(&e_s)?;
    let energy = assemble_energy(lambda, mean_p, mean_plaq, lat)?;
    let gradient = if opts.gradient {
        Some(sampled_gradient(&p_s, &pim_s, &plaq_s, &o_s, lambda, nl, np)?)
    } else {
        None
    };
    Ok(McResult {
        mean_p,
        p_err,
        mean_plaq,
        plaq_err,
        energy,
        e_err,
        electric_err: lambda * nl * p_err,
        magnetic_err: np / lambda * plaq_err,
        acceptance: chain.acceptance(),
        warm_acceptance,
        frozen,
        max_drift: chain.max_drift,
        gradient,
        n_warm: opts.n_warm,
        n_meas: opts.n_meas,
        seed: opts.seed,
    })
}

/// `dE = 2 Re[<conj(O) E_loc> - <conj(O)><E_loc>]` over samples, with errors from
/// re-binning the per-sample contributions.
fn sampled_gradient(
    p_s: &[f64],
    pim_s: &[f64],
    plaq_s: &[f64],
    g_s: &[Vec<f64>],
    lambda: f64,
    nl: f64,
    np: f64,
) -> Result<GradientReport> {
    let n = g_s.first().map_or(0, |g| g.len());
    let ns = p_s.len() as f64;
    let eloc: Vec<C64> = p_s
        .iter()
        .zip(pim_s)
        .zip(plaq_s)
        .map(|((p, pi), q)| lambda * nl * (C64::new(1.0, 0.0) - C64::new(*p, -*pi)) + np / lambda * (1.0 - q))
        .collect();
    let mean_e: C64 = eloc.iter().sum::<C64>() / ns;
    let mut grad = vec![0.0; n];
    let mut errors = vec![0.0; n];
    let mut contrib = vec![0.0; p_s.len()];
    for k in 0..n / 2 {
        for j in 0..2 {
            let os: Vec<C64> = g_s
                .iter()
                .map(|g| {
                    let o = C64::new(0.5 * g[2 * k], -0.5 * g[2 * k + 1]);
                    if j == 0 {
                        o
                    } else {
                        C64::new(0.0, 1.0) * o
                    }
                })
                .collect();
            let mean_o: C64 = os.iter().sum::<C64>() / ns;
            for (i, (o, e)) in os.iter().zip(&eloc).enumerate() {
                contrib[i] = 2.0 * ((o - mean_o).conj() * (e - mean_e)).re;
            }
            let a = 2 * k + j;
            grad[a] = mean(&contrib);
            errors[a] = rebin_error(&contrib)?;
        }
    }
    Ok(GradientReport {
        grad,
        mode: EvalMode::Mc,
        route: GradientRoute::LogDerivative,
        terms: None,
        errors: Some(errors),
        fd_residuals: None,
    })
}

/// Merges independent chains by sample-count weighted averaging.
pub fn merge(results: &[McResult], lambda: f64, lat: &crate::lattice::Lattice) -> Result<McResult> {
    let first = results.first().ok_or_else(|| Error::Domain("no chains to merge".into()))?;
    let w: Vec<f64> = results.iter().map(|r| r.n_meas as f64).collect();
    let tw: f64 = w.iter().sum();
    let avg = |f: &dyn Fn(&McResult) -> f64| results.iter().zip(&w).map(|(r, w)| f(r) * w).sum::<f64>() / tw;
    let err = |f: &dyn Fn(&McResult) -> f64| {
        results.iter().zip(&w).map(|(r, w)| (f(r) * w).powi(2)).sum::<f64>().sqrt() / tw
    };
    let mean_p = avg(&|r| r.mean_p);
    let mean_plaq = avg(&|r| r.mean_plaq);
    let gradient = if results.iter().all(|r| r.gradient.is_some()) {
        let n = first.gradient.as_ref().unwrap().grad.len();
        let g: Vec<f64> = (0..n).map(|a| avg(&|r| r.gradient.as_ref().unwrap().grad[a])).collect();
        let e: Vec<f64> = (0..n).map(|a| err(&|r| r.gradient.as_ref().unwrap().errors.as_ref().unwrap()[a])).collect();
        Some(GradientReport { grad: g, errors: Some(e), ..first.gradient.clone().unwrap() })
    } else {
        None
    };
    Ok(McResult {
        mean_p,
        p_err: err(&|r| r.p_err),
        mean_plaq,
        plaq_err: err(&|r| r.plaq_err),
        energy: assemble_energy(lambda, mean_p, mean_plaq, lat)?,
        e_err: err(&|r| r.e_err),
        electric_err: err(&|r| r.electric_err),
        magnetic_err: err(&|r| r.magnetic_err),
        acceptance: avg(&|r| r.acceptance),
        warm_acceptance: avg(&|r| r.warm_acceptance),
        frozen: results.iter().all(|r| r.frozen),
        max_drift: results.iter().fold(0.0, |a, r| a.max(r.max_drift)),
        gradient,
        n_warm: first.n_warm,
        n_meas: results.iter().map(|r| r.n_meas).sum(),
        seed: first.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rebin_iid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..1 << 14)
            .map(|_| {
                // Box-Muller standard normal
                let (u, v): (f64, f64) = (rng.random(), rng.random());
                (-2.0 * (1.0 - u).ln()).sqrt() * (std::f64::consts::TAU * v).cos()
            })
            .collect();
        let e = rebin_error(&x).unwrap();
        assert!((e / 2f64.powi(-7) - 1.0).abs() < 0.2, "{e}");
    }

    #[test]
    fn rebin_constant() {
        assert_eq!(rebin_error(&[0.5; 128]).unwrap(), 0.0);
        assert!(rebin_error(&[0.5; 63]).is_err());
    }

    #[test]
    fn rebin_ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: f64 = 0.9;
        let mut x = 0.0;
        let mut s = Vec::with_capacity(1 << 18);
        for _ in 0..1 << 18 {
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let z = (-2.0 * (1.0 - u).ln()).sqrt() * (std::f64::consts::TAU * v).cos();
            x = a * x + z;
            s.push(x);
        }
        let n = s.len() as f64;
        let m = mean(&s);
        let naive = (s.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        // integrated autocorrelation time tau = (1 + a) / (2 (1 - a))
        let tau = (1.0 + a) / (2.0 * (1.0 - a));
        let e = rebin_error(&s).unwrap();
        let want = (2.0 * tau).sqrt() * naive;
        assert!((e / want - 1.0).abs() < 0.3, "{e} vs {want}");
    }
}
