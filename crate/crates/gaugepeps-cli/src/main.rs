use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use gaugepeps::ansatz::{Ansatz, AnsatzParams, Geometry};
use gaugepeps::ec::{ec_distribution, ec_evaluate, EcOptions, MAX_FREE_LINKS};
use gaugepeps::io::{sidecar_path, write_ed_csv, write_sweep_csv, write_weights_csv, EdCache, ParamsFile};
use gaugepeps::lattice::Lattice;
use gaugepeps::mcmc::{merge, run_chain, McOptions};
use gaugepeps::observables::ElectricTables;
use gaugepeps::optim::{parse_grid, sweep, BfgsOptions, Evaluator, Measurement, StopReason, SweepOptions, SweepRow};
use gaugepeps::verify::{run_suite, Fault, SUITES};

/// Worker threads for sweeps and chains.
const WORKERS_ENV: &str = "GAUGEPEPS_WORKERS";

#[derive(Parser)]
#[command(name = "gaugepeps", version, about = "Gauged Gaussian fermionic PEPS for the 2+1d Z2 lattice gauge theory")]
struct Cli {
    /// TOML or JSON file with values for the subcommand flags. Keys are the long flag
    /// names, either at top level or in a table named after the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact ground state energies and observables.
    Ed(EdArgs),
    /// Variational minimization over a coupling grid.
    Minimize(MinimizeArgs),
    /// Observables of fixed parameters.
    Measure(MeasureArgs),
    /// Oracle cross-checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Ec,
    Mc,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Ec => "ec",
            Mode::Mc => "mc",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    PsiE,
    PsiB,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FaultArg {
    GammaInSign,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct EdArgs {
    /// Linear lattice size.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    l: Option<usize>,
    /// Couplings, `start:stop:step` (inclusive) or a comma list.
    #[arg(long)]
    lambdas: Option<String>,
    /// CSV output (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of cached results [default: .gaugepeps-cache].
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Neither read nor write the cache.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    no_cache: Option<bool>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct MinimizeArgs {
    #[arg(long = "L")]
    #[serde(rename = "L")]
    l: Option<usize>,
    /// Virtual fermion flavors per leg, 1 or 2 [default: 2].
    #[arg(long = "F")]
    #[serde(rename = "F")]
    f: Option<usize>,
    /// Exact contraction or Monte Carlo [default: ec for L=2, mc otherwise].
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Warm-up steps of the final measurement [default: 100000].
    #[arg(long)]
    n_warm: Option<usize>,
    /// Measurement steps of the final measurement [default: 100000].
    #[arg(long)]
    n_meas: Option<usize>,
    /// Warm-up steps per optimizer evaluation [default: n-warm / 10].
    #[arg(long)]
    opt_n_warm: Option<usize>,
    /// Measurement steps per optimizer evaluation [default: n-meas / 10].
    #[arg(long)]
    opt_n_meas: Option<usize>,
    /// Random restarts per coupling in the window 0.5 <= lambda <= 1.5 [default: 4].
    #[arg(long)]
    restarts: Option<usize>,
    /// BFGS iteration budget [default: 500 for ec, 60 for mc].
    #[arg(long)]
    max_iter: Option<usize>,
    /// Independent chains per Monte Carlo evaluation [default: 1].
    #[arg(long)]
    chains: Option<usize>,
    /// Probability of a plaquette update instead of a single-link one [default: 0].
    #[arg(long)]
    plaquette_mix: Option<f64>,
    /// Parameter file to start every branch from.
    #[arg(long)]
    init_from: Option<PathBuf>,
    /// CSV output; parameter sidecars are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fill the wallclock column (the output then differs between runs).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    timing: Option<bool>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct MeasureArgs {
    #[arg(long = "L")]
    #[serde(rename = "L")]
    l: Option<usize>,
    #[arg(long = "F")]
    #[serde(rename = "F")]
    f: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    lambdas: Option<String>,
    /// Parameter file to measure.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Analytic parameter point, instead of a file.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_warm: Option<usize>,
    #[arg(long)]
    n_meas: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    plaquette_mix: Option<f64>,
    /// Stream `{step, E_sample, acceptance}` lines to stderr every this many steps.
    #[arg(long)]
    verbose_every: Option<usize>,
    /// Write the exact weight table of every configuration (ec mode).
    #[arg(long)]
    dump_weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    timing: Option<bool>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct VerifyArgs {
    /// Suites to run (repeatable) [default: all].
    #[arg(long)]
    suite: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Corrupt one ingredient to check that the suites catch it.
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

enum Failure {
    Usage(String),
    Compute(String),
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn compute(err: impl std::fmt::Display) -> Failure {
    Failure::Compute(err.to_string())
}

fn load_config(path: &Path) -> std::result::Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    } else {
        let v: toml::Value = toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        serde_json::to_value(v).map_err(usage)
    }
}

/// Flags given on the command line override the config file.
fn merge_config<T: Serialize + DeserializeOwned>(cli: &T, config: Option<&Value>, section: &str) -> std::result::Result<T, Failure> {
    let mut base = Map::new();
    if let Some(Value::Object(obj)) = config {
        let sectioned = SECTIONS.iter().any(|s| obj.contains_key(*s));
        let table = if sectioned { obj.get(section).cloned().unwrap_or(Value::Object(Map::new())) } else { Value::Object(obj.clone()) };
        match table {
            Value::Object(t) => base = t,
            _ => return Err(usage(format!("config section '{section}' must be a table"))),
        }
    }
    if let Value::Object(flags) = serde_json::to_value(cli).map_err(usage)? {
        for (k, v) in flags {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| usage(format!("config: {e}")))
}

const SECTIONS: [&str; 4] = ["ed", "minimize", "measure", "verify"];

fn lattice(l: Option<usize>) -> std::result::Result<Lattice, Failure> {
    let l = l.ok_or_else(|| usage("--L is required"))?;
    Lattice::new(l).map_err(usage)
}

fn flavors(f: Option<usize>) -> std::result::Result<usize, Failure> {
    match f.unwrap_or(2) {
        f @ (1 | 2) => Ok(f),
        f => Err(usage(format!("--F must be 1 or 2, got {f}"))),
    }
}

fn grid(s: Option<&str>) -> std::result::Result<Vec<f64>, Failure> {
    let s = s.ok_or_else(|| usage("--lambdas is required"))?;
    let mut g = parse_grid(s).map_err(usage)?;
    if g.is_empty() || g.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(usage(format!("couplings in '{s}' must be positive")));
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

fn mode_for(mode: Option<Mode>, lat: &Lattice) -> std::result::Result<Mode, Failure> {
    let mode = mode.unwrap_or(if lat.extent() == 2 { Mode::Ec } else { Mode::Mc });
    if mode == Mode::Ec && lat.n_sites() + 1 > MAX_FREE_LINKS {
        return Err(usage(format!("exact contraction is limited to L <= 4, got L={}", lat.extent())));
    }
    Ok(mode)
}

fn positive(v: Option<usize>, default: usize, name: &str) -> std::result::Result<usize, Failure> {
    match v.unwrap_or(default) {
        0 => Err(usage(format!("--{name} must be positive"))),
        n => Ok(n),
    }
}

fn mix(v: Option<f64>) -> std::result::Result<f64, Failure> {
    let m = v.unwrap_or(0.0);
    if (0.0..=1.0).contains(&m) {
        Ok(m)
    } else {
        Err(usage(format!("--plaquette-mix must lie in [0, 1], got {m}")))
    }
}

/// Output goes to `path`, or stdout.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> gaugepeps::Result<()>) -> Outcome {
    match path {
        Some(p) => {
            let mut buf = Vec::new();
            write(&mut buf).map_err(compute)?;
            fs::write(p, buf).map_err(|e| compute(format!("{}: {e}", p.display())))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(compute)?;
            lock.flush().map_err(compute)
        }
    }
}

fn cmd_ed(a: EdArgs) -> Outcome {
    let lat = lattice(a.l)?;
    let lambdas = grid(a.lambdas.as_deref())?;
    let cache = EdCache::new(a.cache_dir.unwrap_or_else(|| PathBuf::from(".gaugepeps-cache")));
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let r = if a.no_cache.unwrap_or(false) {
            gaugepeps::ed::ground_state(&lat, lambda)
        } else {
            cache.ground_state(&lat, lambda).map(|(r, _)| r)
        };
        rows.push(r.map_err(compute)?);
    }
    emit(a.out.as_deref(), |w| write_ed_csv(w, &rows))
}

fn cmd_minimize(a: MinimizeArgs) -> Outcome {
    let lat = lattice(a.l)?;
    let f = flavors(a.f)?;
    let mode = mode_for(a.mode, &lat)?;
    let lambdas = grid(a.lambdas.as_deref())?;
    let seed = a.seed.unwrap_or(0);
    let n_warm = positive(a.n_warm, 100_000, "n-warm")?;
    let n_meas = positive(a.n_meas, 100_000, "n-meas")?;
    let opt_warm = positive(a.opt_n_warm, (n_warm / 10).max(1), "opt-n-warm")?;
    let opt_meas = positive(a.opt_n_meas, (n_meas / 10).max(64), "opt-n-meas")?;
    let chains = positive(a.chains, 1, "chains")?;
    let plaquette_mix = mix(a.plaquette_mix)?;
    let init = match &a.init_from {
        Some(p) => {
            let params = ParamsFile::load(p).and_then(|pf| pf.to_params()).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            if params.flavors() != f {
                return Err(usage(format!("{} holds F={} parameters, expected F={f}", p.display(), params.flavors())));
            }
            Some(params)
        }
        None => None,
    };
    let geo = Geometry::new(&lat, f).map_err(compute)?;
    let mc = |w, m| Evaluator::Mc {
        options: McOptions { n_warm: w, n_meas: m, plaquette_mix, ..Default::default() },
        chains,
    };
    let (evaluator, measure, mut bfgs) = match mode {
        Mode::Ec => (Evaluator::Ec, Evaluator::Ec, BfgsOptions::exact()),
        Mode::Mc => (mc(opt_warm, opt_meas), mc(n_warm, n_meas), BfgsOptions::sampled()),
    };
    if let Some(it) = a.max_iter {
        bfgs.max_iter = it;
    }
    let opts = SweepOptions { bfgs, restarts: a.restarts.unwrap_or(4), seed, init, ..Default::default() };
    let rows = sweep(&geo, &lambdas, &evaluator, Some(&measure), &opts).map_err(compute)?;
    emit(a.out.as_deref(), |w| write_sweep_csv(w, lat.extent(), f, mode.name(), &rows, a.timing.unwrap_or(false)))?;
    if let Some(out) = &a.out {
        for r in &rows {
            ParamsFile::from_params(&r.params).save(&sidecar_path(out, r.lambda)).map_err(compute)?;
        }
    }
    let failed: Vec<String> = rows.iter().filter_map(|r| r.error.as_ref().map(|e| format!("lambda={}: {e}", r.lambda))).collect();
    for e in &failed {
        eprintln!("warning: {e}");
    }
    if failed.len() == rows.len() {
        return Err(compute("every coupling failed"));
    }
    Ok(())
}

fn cmd_measure(a: MeasureArgs) -> Outcome {
    let lat = lattice(a.l)?;
    let mode = mode_for(a.mode, &lat)?;
    let lambdas = grid(a.lambdas.as_deref())?;
    let params = match (&a.params, a.preset) {
        (Some(_), Some(_)) => return Err(usage("give either --params or --preset")),
        (Some(p), None) => ParamsFile::load(p).and_then(|pf| pf.to_params()).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        (None, Some(Preset::PsiE)) => AnsatzParams::psi_e(flavors(a.f)?).map_err(usage)?,
        (None, Some(Preset::PsiB)) => {
            if flavors(a.f)? != 2 {
                return Err(usage("the psi-b preset needs F=2"));
            }
            AnsatzParams::psi_b()
        }
        (None, None) => return Err(usage("--params or --preset is required")),
    };
    if a.f.is_some_and(|f| f != params.flavors()) {
        return Err(usage(format!("parameters have F={}, but --F {} was given", params.flavors(), a.f.unwrap_or(0))));
    }
    let f = params.flavors();
    if a.dump_weights.is_some() && mode != Mode::Ec {
        return Err(usage("--dump-weights needs ec mode"));
    }
    let seed = a.seed.unwrap_or(0);
    let n_warm = positive(a.n_warm, 100_000, "n-warm")?;
    let n_meas = positive(a.n_meas, 100_000, "n-meas")?;
    let chains = positive(a.chains, 1, "chains")?;
    let plaquette_mix = mix(a.plaquette_mix)?;
    let geo = Geometry::new(&lat, f).map_err(compute)?;
    let tables = ElectricTables::new(&geo).map_err(compute)?;
    let ans = Ansatz::new(&geo, params.clone()).map_err(compute)?;
    if let Some(path) = &a.dump_weights {
        let w = ec_distribution(&geo, &ans).map_err(compute)?;
        emit(Some(path), |out| write_weights_csv(out, &w))?;
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let t = Instant::now();
        let m = match mode {
            Mode::Ec => {
                let r = ec_evaluate(&geo, &tables, &ans, lambda, &EcOptions::default()).map_err(compute)?;
                Measurement {
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
                    gradient: None,
                }
            }
            Mode::Mc => {
                let mut runs = Vec::with_capacity(chains);
                for c in 0..chains as u64 {
                    let opts = McOptions {
                        n_warm,
                        n_meas,
                        seed: seed.wrapping_add(c),
                        plaquette_mix,
                        verbose_every: a.verbose_every,
                        ..Default::default()
                    };
                    let mut err = io::stderr();
                    let log: Option<&mut dyn Write> = if a.verbose_every.is_some() { Some(&mut err) } else { None };
                    let r = run_chain(&geo, &tables, &ans, lambda, &opts, log).map_err(compute)?;
                    if r.frozen {
                        eprintln!("warning: chain {c} at lambda={lambda} accepted no update during warm-up");
                    }
                    runs.push(r);
                }
                let r = merge(&runs, lambda, &lat).map_err(compute)?;
                Measurement {
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
                    gradient: None,
                }
            }
        };
        rows.push(SweepRow {
            lambda,
            params: params.clone(),
            measurement: m,
            branch: "fixed".into(),
            stop: StopReason::Budget,
            iterations: 0,
            seed,
            wallclock: t.elapsed().as_secs_f64(),
            error: None,
        });
    }
    emit(a.out.as_deref(), |w| write_sweep_csv(w, lat.extent(), f, mode.name(), &rows, a.timing.unwrap_or(false)))
}

fn cmd_verify(a: VerifyArgs) -> Outcome {
    let suites = a.suite.unwrap_or_else(|| SUITES.iter().map(|s| s.to_string()).collect());
    if let Some(bad) = suites.iter().find(|s| !SUITES.contains(&s.as_str())) {
        return Err(usage(format!("unknown suite '{bad}', expected one of {}", SUITES.join(", "))));
    }
    let fault = a.inject_fault.map(|FaultArg::GammaInSign| Fault::GammaInSign);
    let seed = a.seed.unwrap_or(1);
    let mut all_ok = true;
    for s in &suites {
        match run_suite(s, seed, fault) {
            Ok(rep) => {
                for c in &rep.checks {
                    let tag = if c.pass { "PASS" } else { "FAIL" };
                    println!("{tag} {s}: {} residual={:.3e} tol={:.1e}", c.label, c.residual, c.tolerance);
                }
                all_ok &= rep.passed();
            }
            Err(e) => {
                println!("FAIL {s}: {e}");
                all_ok = false;
            }
        }
    }
    if all_ok {
        println!("all {} suites passed", suites.len());
        Ok(())
    } else {
        Err(compute("verification failed"))
    }
}

fn init_workers() -> Outcome {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| usage(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?;
    if n == 0 {
        return Err(usage(format!("{WORKERS_ENV} must be positive")));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(compute)
}

fn run(cli: Cli) -> Outcome {
    init_workers()?;
    let config = cli.config.as_deref().map(load_config).transpose()?;
    let cfg = config.as_ref();
    match cli.command {
        Command::Ed(a) => cmd_ed(merge_config(&a, cfg, "ed")?),
        Command::Minimize(a) => cmd_minimize(merge_config(&a, cfg, "minimize")?),
        Command::Measure(a) => cmd_measure(merge_config(&a, cfg, "measure")?),
        Command::Verify(a) => cmd_verify(merge_config(&a, cfg, "verify")?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
