//! Oracle suites behind the `verify` subcommand. Each suite compares a production
//! route against an independent one and reports the worst residual.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ansatz::{Ansatz, AnsatzParams, Geometry};
use crate::ec::{ec_evaluate, EcOptions};
use crate::ed::{ground_state, ground_state_q_basis};
use crate::error::{Error, Result};
use crate::fock::{gaussian_overlap_pfaffian, inner, FockSpace};
use crate::gaussian::{majorana_cov_from_m, overlap_sq, CMat, ContractionCache, PairingMatrix};
use crate::lattice::{GaugeConfig, Lattice};
use crate::mcmc::{run_chain, McOptions};
use crate::observables::{electric_ratio, ElectricTables};
use crate::optim::{finite_difference, max_relative_error, GradientRoute};

pub const SUITES: [&str; 5] = ["gaussian", "electric", "ec-ed", "mc-ec", "gradients"];

/// Deliberate corruption of one ingredient, used to check that the suites notice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Contract against `-Gamma_in` instead of `Gamma_in`.
    GammaInSign,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub label: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check(label: impl Into<String>, residual: f64, tolerance: f64) -> Check {
    Check { label: label.into(), residual, tolerance, pass: residual.is_finite() && residual <= tolerance }
}

fn random_params(f: usize, rng: &mut ChaCha8Rng, scale: f64) -> Result<AnsatzParams> {
    let n = crate::ansatz::n_params(f)?;
    AnsatzParams::new(f, (0..n).map(|_| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))).collect())
}

fn random_pairing(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let z = C64::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            m[(i, j)] = z;
            m[(j, i)] = -z;
        }
    }
    m
}

fn gaussian_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut cov = 0.0f64;
    let mut ovl = 0.0f64;
    for k in 0..20 {
        let n = 1 + k % 6;
        let fs = FockSpace::new(n)?;
        let (ma, mb) = (random_pairing(n, rng), random_pairing(n, rng));
        let (a, b) = (fs.gaussian_state(&ma), fs.gaussian_state(&mb));
        let ga = majorana_cov_from_m(&PairingMatrix::new(ma)?)?;
        let gb = majorana_cov_from_m(&PairingMatrix::new(mb)?)?;
        cov = cov.max((ga.matrix() - fs.covariance(&a)?).amax());
        let na: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
        ovl = ovl.max((overlap_sq(&ga, &gb)? - inner(&a, &b).norm_sqr() / (na * nb)).abs());
    }
    Ok(vec![check("covariance vs Fock", cov, 1e-8), check("overlap vs Fock", ovl, 1e-8)])
}

fn electric_suite(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<Vec<Check>> {
    let lat = Lattice::new(2)?;
    let mut out = Vec::new();
    for f in [1, 2] {
        let geo = Geometry::new(&lat, f)?;
        let tables = ElectricTables::new(&geo)?;
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let ans = Ansatz::new(&geo, random_params(f, rng, 0.5)?)?;
            let sp = ans.site_pairing(&geo);
            let c = GaugeConfig::from_bits((0..lat.n_links()).map(|_| rng.random_range(0..2u8)).collect());
            let mut g = geo.gamma_in(&c)?;
            if fault == Some(Fault::GammaInSign) {
                g = -g;
            }
            let cache = ContractionCache::new(ans.full_d(&geo), g)?;
            let a = gaussian_overlap_pfaffian(&sp, &geo.link_pairing(&c))?;
            for l in 0..lat.n_links() {
                let mut c2 = c.clone();
                c2.flip(l);
                let want = gaussian_overlap_pfaffian(&sp, &geo.link_pairing(&c2))?.conj() * a / a.norm_sqr();
                let got = electric_ratio(&geo, &tables, ans.site_cov(), cache.kernel(), &c, l)?;
                worst = worst.max((want - got).norm());
            }
        }
        out.push(check(format!("F={f} electric ratio vs signed amplitudes"), worst, 1e-8));
    }
    Ok(out)
}

fn ec_ed_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let lat = Lattice::new(2)?;
    let lambda = rng.random_range(0.4..2.0);
    let ed = ground_state(&lat, lambda)?;
    let q = ground_state_q_basis(&lat, lambda)?;
    let mut out = vec![check("ED flux basis vs Q basis", (ed.e0 - q.e0).abs(), 1e-9)];
    for f in [1, 2] {
        let geo = Geometry::new(&lat, f)?;
        let tables = ElectricTables::new(&geo)?;
        let ans = Ansatz::new(&geo, random_params(f, rng, 0.5)?)?;
        let r = ec_evaluate(&geo, &tables, &ans, lambda, &EcOptions::default())?;
        let sp = ans.site_pairing(&geo);
        let n = lat.n_links();
        let amp: Vec<C64> = (0..1u128 << n)
            .map(|m| gaussian_overlap_pfaffian(&sp, &geo.link_pairing(&GaugeConfig::from_mask(&lat, m))))
            .collect::<Result<_>>()?;
        let norm: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
        let mut h = 0.0;
        for (m, a) in amp.iter().enumerate() {
            let c = GaugeConfig::from_mask(&lat, m as u128);
            h += a.norm_sqr() * lambda * n as f64;
            for l in 0..n {
                h -= lambda * (a.conj() * amp[m ^ (1 << l)]).re;
            }
            for p in 0..lat.n_plaquettes() {
                h += a.norm_sqr() * (1.0 - c.plaquette(&lat, p) as f64) / lambda;
            }
        }
        out.push(check(format!("F={f} EC energy vs brute force"), (h / norm - r.energy.total).abs(), 1e-8));
        out.push(check(format!("F={f} variational bound"), (ed.e0 - r.energy.total).max(0.0), 1e-9));
    }
    Ok(out)
}

fn mc_ec_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let lat = Lattice::new(2)?;
    let geo = Geometry::new(&lat, 2)?;
    let tables = ElectricTables::new(&geo)?;
    let mut out = Vec::new();
    for k in 0..2 {
        let lambda = rng.random_range(0.5..2.0);
        let ans = Ansatz::new(&geo, random_params(2, rng, 0.5)?)?;
        let ec = ec_evaluate(&geo, &tables, &ans, lambda, &EcOptions::default())?;
        let opts = McOptions { n_warm: 20_000, n_meas: 40_000, seed: 17 + k, ..Default::default() };
        let mc = run_chain(&geo, &tables, &ans, lambda, &opts, None)?;
        let sigma = mc.e_err.max(1e-12);
        // residual in units of the error bar; pass at 3 sigma
        out.push(check(format!("point {k}: |E_MC - E_EC| / sigma_MC"), (mc.energy.total - ec.energy.total).abs() / sigma, 3.0));
    }
    Ok(out)
}

fn gradient_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let lat = Lattice::new(2)?;
    let mut out = Vec::new();
    for f in [1, 2] {
        let geo = Geometry::new(&lat, f)?;
        let tables = ElectricTables::new(&geo)?;
        let p = random_params(f, rng, 0.5)?;
        let lambda = rng.random_range(0.3..2.0);
        let energy = |x: &[f64]| -> Result<f64> {
            let a = Ansatz::new(&geo, AnsatzParams::from_real(f, x)?)?;
            Ok(ec_evaluate(&geo, &tables, &a, lambda, &EcOptions::default())?.energy.total)
        };
        let fd = finite_difference(energy, &p.to_real(), 1e-5)?;
        let ans = Ansatz::new(&geo, p)?;
        for route in [GradientRoute::LogDerivative, GradientRoute::Explicit] {
            let opts = EcOptions { gradient: Some(route), ..Default::default() };
            let g = ec_evaluate(&geo, &tables, &ans, lambda, &opts)?
                .gradient
                .ok_or_else(|| Error::InconsistentState("gradient missing".into()))?;
            out.push(check(format!("F={f} {route:?} vs finite differences"), max_relative_error(&g.grad, &fd, 1e-3), 1e-6));
        }
    }
    Ok(out)
}

/// Runs one named suite.
pub fn run_suite(name: &str, seed: u64, fault: Option<Fault>) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = match name {
        "gaussian" => gaussian_suite(&mut rng)?,
        "electric" => electric_suite(&mut rng, fault)?,
        "ec-ed" => ec_ed_suite(&mut rng)?,
        "mc-ec" => mc_ec_suite(&mut rng)?,
        "gradients" => gradient_suite(&mut rng)?,
        other => return Err(Error::Domain(format!("unknown suite '{other}', expected one of {SUITES:?}"))),
    };
    Ok(SuiteReport { suite: name.to_string(), checks })
}
