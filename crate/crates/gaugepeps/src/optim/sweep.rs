//! Objective evaluation, minimization and coupling sweeps with warm starts.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bfgs::{minimize, BfgsOptions, MinimizeResult, StopReason};
use super::gradient::{EvalMode, GradientReport, GradientRoute};
use crate::ansatz::{Ansatz, AnsatzParams, Geometry};
use crate::ec::{ec_evaluate, EcOptions};
use crate::error::{Error, Result};
use crate::mcmc::{merge, run_chain, McOptions};
use crate::observables::{ElectricTables, EnergyBreakdown};

/// How energies are evaluated.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Evaluator {
    Ec,
    Mc {
        /// Budgets and proposal settings; the seed is overridden per evaluation.
        options: McOptions,
        /// Independent chains per evaluation.
        chains: usize,
    },
}

impl Evaluator {
    pub fn mode(&self) -> EvalMode {
        match self {
            Evaluator::Ec => EvalMode::Ec,
            Evaluator::Mc { .. } => EvalMode::Mc,
        }
    }
}

/// One energy evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Measurement {
    pub energy: EnergyBreakdown,
    pub e_err: f64,
    pub electric_err: f64,
    pub magnetic_err: f64,
    pub mean_p: f64,
    pub p_err: f64,
    pub mean_plaq: f64,
    pub plaq_err: f64,
    pub n_warm: usize,
    pub n_meas: usize,
    pub acceptance: Option<f64>,
    pub gradient: Option<GradientReport>,
}

impl Measurement {
    /// Placeholder for a coupling whose evaluation failed.
    pub fn failed() -> Self {
        let nan = f64::NAN;
        Measurement {
            energy: EnergyBreakdown { total: nan, electric: nan, magnetic: nan },
            e_err: nan,
            electric_err: nan,
            magnetic_err: nan,
            mean_p: nan,
            p_err: nan,
            mean_plaq: nan,
            plaq_err: nan,
            n_warm: 0,
            n_meas: 0,
            acceptance: None,
            gradient: None,
        }
    }
}

/// Shared data for evaluating the energy at many parameter points.
pub struct Problem<'a> {
    pub geo: &'a Geometry,
    pub tables: &'a ElectricTables,
    pub lambda: f64,
    pub evaluator: &'a Evaluator,
}

impl Problem<'_> {
    /// Energy (and gradient) at `params`; `seed` feeds Monte Carlo evaluations.
    pub fn evaluate(&self, params: &AnsatzParams, gradient: bool, seed: u64) -> Result<Measurement> {
        let ans = Ansatz::new(self.geo, params.clone())?;
        match self.evaluator {
            Evaluator::Ec => {
                let opts = EcOptions { gradient: gradient.then_some(GradientRoute::LogDerivative), ..Default::default() };
                let r = ec_evaluate(self.geo, self.tables, &ans, self.lambda, &opts)?;
                Ok(Measurement {
                    energy: r.energy,
                    e_err: 0.0,
                    electric_err: 0.0,
                    magnetic_err: 0.0,
                    mean_p: r.mean_p,
                    p_err: 0.0,
                    mean_plaq: r.mean_plaq,
                    plaq_err: 0.0,
                    n_warm: 0,
                    n_meas: 0,
                    acceptance: None,
                    gradient: r.gradient,
                })
            }
            Evaluator::Mc { options, chains } => {
                let runs: Vec<Result<_>> = (0..(*chains).max(1) as u64)
                    .into_par_iter()
                    .map(|c| {
                        let o = McOptions { seed: seed.wrapping_add(c), gradient, ..options.clone() };
                        run_chain(self.geo, self.tables, &ans, self.lambda, &o, None)
                    })
                    .collect();
                let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
                let r = merge(&runs, self.lambda, self.geo.lattice())?;
                Ok(Measurement {
                    energy: r.energy,
                    e_err: r.e_err,
                    electric_err: r.electric_err,
                    magnetic_err: r.magnetic_err,
                    mean_p: r.mean_p,
                    p_err: r.p_err,
                    mean_plaq: r.mean_plaq,
                    plaq_err: r.plaq_err,
                    n_warm: r.n_warm,
                    n_meas: r.n_meas,
                    acceptance: Some(r.acceptance),
                    gradient: r.gradient,
                })
            }
        }
    }

    /// BFGS from `x0`. Monte Carlo objectives reuse `seed` at every iterate, so
    /// the sampled energy is a deterministic function of the parameters.
    pub fn minimize(&self, x0: &AnsatzParams, bfgs: &BfgsOptions, seed: u64) -> Result<MinimizeResult> {
        let f = x0.flavors();
        minimize(
            |x| {
                let p = AnsatzParams::from_real(f, x)?;
                let m = self.evaluate(&p, true, seed)?;
                Ok((m.energy.total, m.gradient.map(|g| g.grad).unwrap_or_default()))
            },
            &x0.to_real(),
            bfgs,
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepOptions {
    pub bfgs: BfgsOptions,
    /// Random restarts at each coupling inside `restart_window`.
    pub restarts: usize,
    pub restart_window: (f64, f64),
    /// Scale of the uniform random restart parameters.
    pub restart_scale: f64,
    /// Deterministic perturbation added to the analytic seeds, which are
    /// stationary points of the energy.
    pub seed_jitter: f64,
    pub seed: u64,
    /// Replaces the two analytic seeds by a single warm start.
    pub init: Option<AnsatzParams>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            bfgs: BfgsOptions::exact(),
            restarts: 4,
            restart_window: (0.5, 1.5),
            restart_scale: 0.5,
            seed_jitter: 1e-2,
            seed: 0,
            init: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub params: AnsatzParams,
    pub measurement: Measurement,
    /// Which start produced the kept optimum.
    pub branch: String,
    pub stop: StopReason,
    pub iterations: usize,
    pub seed: u64,
    pub wallclock: f64,
    pub error: Option<String>,
}

/// `p` plus independent uniform noise of half-width `scale` on every real component.
pub fn jittered(p: &AnsatzParams, scale: f64, rng: &mut ChaCha8Rng) -> Result<AnsatzParams> {
    let x: Vec<f64> = p.to_real().iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
    AnsatzParams::from_real(p.flavors(), &x)
}

struct Candidate {
    lambda_idx: usize,
    branch: String,
    result: Result<MinimizeResult>,
    seconds: f64,
}

fn chain_branch(
    problems: &[Problem<'_>],
    order: &[usize],
    start: AnsatzParams,
    name: &str,
    opts: &SweepOptions,
) -> Vec<Candidate> {
    let f = start.flavors();
    let mut x = start;
    let mut out = Vec::with_capacity(order.len());
    for &i in order {
        let t = Instant::now();
        let seed = opts.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1));
        let r = problems[i].minimize(&x, &opts.bfgs, seed);
        if let Ok(m) = &r {
            if let Ok(p) = AnsatzParams::from_real(f, &m.x) {
                x = p;
            }
        }
        out.push(Candidate { lambda_idx: i, branch: name.to_string(), result: r, seconds: t.elapsed().as_secs_f64() });
    }
    out
}

/// Chooses among finished minimizations and measures the winner with `seed`.
/// Exact objectives are compared by their final `f`. Sampled ones are screened
/// by measuring every candidate under one shared seed, so that the winner is not
/// picked by the noise of its own optimization run; the reported measurement
/// then uses `seed`, independent of the screening.
fn pick_and_measure(
    finals: &Problem<'_>,
    exact: bool,
    cands: &[&MinimizeResult],
    f: usize,
    seed: u64,
) -> Result<(usize, AnsatzParams, Measurement)> {
    let params: Vec<AnsatzParams> = cands.iter().map(|m| AnsatzParams::from_real(f, &m.x)).collect::<Result<_>>()?;
    let by_f = || {
        (0..cands.len()).fold(0, |b, i| if cands[i].f < cands[b].f { i } else { b })
    };
    let best = if exact || cands.len() == 1 {
        by_f()
    } else {
        let screen = seed ^ 0x5851_f42d_4c95_7f2d;
        let scores: Vec<f64> = params
            .par_iter()
            .map(|p| finals.evaluate(p, false, screen).map_or(f64::INFINITY, |m| m.energy.total))
            .collect();
        if scores.iter().all(|s| !s.is_finite()) {
            by_f()
        } else {
            (0..scores.len()).fold(0, |b, i| if scores[i] < scores[b] { i } else { b })
        }
    };
    let m = finals.evaluate(&params[best], false, seed)?;
    Ok((best, params[best].clone(), m))
}

/// Minimizes at every coupling of `lambdas` (ascending). Branches: from `psi_E`
/// going down in coupling, from `psi_B` going up (F = 2), random restarts inside
/// the restart window. Per coupling the lowest energy is kept: by the objective
/// itself for exact contraction, by a screening measurement of every candidate
/// for Monte Carlo. The winner is measured with an independent seed, by
/// `measure` when given (otherwise `evaluator`).
pub fn sweep(
    geo: &Geometry,
    lambdas: &[f64],
    evaluator: &Evaluator,
    measure: Option<&Evaluator>,
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("coupling grid must be strictly ascending".into()));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Domain("couplings must be positive".into()));
    }
    let f = geo.flavors();
    let tables = ElectricTables::new(geo)?;
    let problems: Vec<Problem> =
        lambdas.iter().map(|&lambda| Problem { geo, tables: &tables, lambda, evaluator }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let asc: Vec<usize> = (0..lambdas.len()).collect();
    let desc: Vec<usize> = asc.iter().rev().copied().collect();
    let mut jobs: Vec<(Vec<usize>, AnsatzParams, String)> = Vec::new();
    match &opts.init {
        Some(p) => {
            // continue from a converged point of another run, both directions
            jobs.push((desc.clone(), p.clone(), "init-down".into()));
            jobs.push((asc.clone(), p.clone(), "init-up".into()));
        }
        None => {
            jobs.push((desc.clone(), jittered(&AnsatzParams::psi_e(f)?, opts.seed_jitter, &mut rng)?, "psi_E".into()));
            if f == 2 {
                jobs.push((asc.clone(), jittered(&AnsatzParams::psi_b(), opts.seed_jitter, &mut rng)?, "psi_B".into()));
            }
        }
    }
    for (i, &l) in lambdas.iter().enumerate() {
        if l >= opts.restart_window.0 && l <= opts.restart_window.1 {
            for r in 0..opts.restarts {
                let zero = AnsatzParams::psi_e(f)?;
                let p = jittered(&zero, opts.restart_scale, &mut rng)?;
                jobs.push((vec![i], p, format!("restart-{r}")));
            }
        }
    }
    let cands: Vec<Candidate> = jobs
        .par_iter()
        .map(|(order, start, name)| chain_branch(&problems, order, start.clone(), name, opts))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let measure = measure.unwrap_or(evaluator);
    let finals: Vec<Problem> =
        lambdas.iter().map(|&lambda| Problem { geo, tables: &tables, lambda, evaluator: measure }).collect();
    let mut rows = Vec::with_capacity(lambdas.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        let mut ok: Vec<(&Candidate, &MinimizeResult)> = Vec::new();
        let mut seconds = 0.0;
        let mut last_err = None;
        for c in cands.iter().filter(|c| c.lambda_idx == i) {
            seconds += c.seconds;
            match &c.result {
                Ok(m) if m.f.is_finite() => ok.push((c, m)),
                Ok(_) => last_err = Some("non-finite energy".to_string()),
                Err(e) => last_err = Some(e.to_string()),
            }
        }
        let measure_seed = opts.seed.wrapping_add(1_000_003 * (i as u64 + 1));
        let t = Instant::now();
        let exact = evaluator.mode() == EvalMode::Ec;
        let results: Vec<&MinimizeResult> = ok.iter().map(|(_, m)| *m).collect();
        let (params, branch, stop, iterations, meas) = if ok.is_empty() {
            (
                AnsatzParams::psi_e(f)?,
                "none".to_string(),
                StopReason::LineSearchFailure,
                0,
                Err(Error::NoConvergence(last_err.unwrap_or_else(|| "no candidate".into()))),
            )
        } else {
            match pick_and_measure(&finals[i], exact, &results, f, measure_seed) {
                Ok((b, params, m)) => (params, ok[b].0.branch.clone(), ok[b].1.stop, ok[b].1.trace.len() - 1, Ok(m)),
                Err(e) => {
                    let b = (0..ok.len()).fold(0, |b, k| if ok[k].1.f < ok[b].1.f { k } else { b });
                    (AnsatzParams::from_real(f, &ok[b].1.x)?, ok[b].0.branch.clone(), ok[b].1.stop, ok[b].1.trace.len() - 1, Err(e))
                }
            }
        };
        let (measurement, error) = match meas {
            Ok(m) => (m, None),
            Err(e) => (Measurement::failed(), Some(e.to_string())),
        };
        rows.push(SweepRow {
            lambda,
            params,
            measurement,
            branch,
            stop,
            iterations,
            seed: measure_seed,
            wallclock: seconds + t.elapsed().as_secs_f64(),
            error,
        });
    }
    Ok(rows)
}

/// Minimizes at one coupling from each named start with the same seed, keeps the
/// best (see the selection rule of [`sweep`]) and measures it with `measure`
/// under an independent seed.
pub fn refine(
    problem: &Problem<'_>,
    starts: &[(String, AnsatzParams)],
    measure: &Evaluator,
    bfgs: &BfgsOptions,
    seed: u64,
) -> Result<SweepRow> {
    let t = Instant::now();
    let results: Vec<Result<MinimizeResult>> =
        starts.par_iter().map(|(_, x0)| problem.minimize(x0, bfgs, seed)).collect();
    let mut ok: Vec<(usize, MinimizeResult)> = Vec::new();
    let mut last_err = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) if m.f.is_finite() => ok.push((i, m)),
            Ok(_) => last_err = Some(Error::Numerical("non-finite energy".into())),
            Err(e) => last_err = Some(e),
        }
    }
    if ok.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::Domain("no starting point".into())));
    }
    let f = starts[ok[0].0].1.flavors();
    let final_problem = Problem { evaluator: measure, ..*problem };
    let measure_seed = seed.wrapping_add(1_000_003);
    let exact = problem.evaluator.mode() == EvalMode::Ec;
    let results: Vec<&MinimizeResult> = ok.iter().map(|(_, m)| m).collect();
    let (b, params, measurement) = pick_and_measure(&final_problem, exact, &results, f, measure_seed)?;
    let (i, m) = &ok[b];
    Ok(SweepRow {
        lambda: problem.lambda,
        params,
        measurement,
        branch: starts[*i].0.clone(),
        stop: m.stop,
        iterations: m.trace.len() - 1,
        seed: measure_seed,
        wallclock: t.elapsed().as_secs_f64(),
        error: None,
    })
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| Error::Domain(format!("bad number '{x}' in grid '{s}'")));
    match parts.len() {
        1 => Ok(s.split(',').map(num).collect::<Result<Vec<_>>>()?),
        3 => {
            let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(h > 0.0) || b < a {
                return Err(Error::Domain(format!("grid '{s}' must have start <= stop and step > 0")));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| {
                let v = a + h * k as f64;
                (v * 1e12).round() / 1e12
            }).collect())
        }
        _ => Err(Error::Domain(format!("grid '{s}' is neither start:stop:step nor a list"))),
    }
}
