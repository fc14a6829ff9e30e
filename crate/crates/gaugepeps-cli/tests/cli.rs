use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaugepeps")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ed_sweep_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ed.csv");
    let cache = dir.path().join("cache");
    let args = ["ed", "--L", "2", "--lambdas", "0.2:3.0:0.2", "--out", p(&out), "--cache-dir", p(&cache)];
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines.len(), 16);
    assert!(lines[0].starts_with("lambda,L,E0"));
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 15);
    // second run answers from the cache with identical output
    let stamp = fs::metadata(cache.join("ed_L2_lambda_1.json")).unwrap().modified().unwrap();
    assert_eq!(code(&run(&args)), 0);
    assert_eq!(fs::read_to_string(&out).unwrap(), first);
    assert_eq!(fs::metadata(cache.join("ed_L2_lambda_1.json")).unwrap().modified().unwrap(), stamp);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["ed", "--L", "1", "--lambdas", "1.0", "--no-cache"])), 2);
    assert_eq!(code(&run(&["ed", "--L", "2", "--lambdas", "-1", "--no-cache"])), 2);
    assert_eq!(code(&run(&["verify", "--suite", "nope"])), 2);
    assert_eq!(code(&run(&["minimize", "--L", "2", "--F", "3", "--lambdas", "1"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["measure", "--L", "2", "--preset", "psi-e", "--lambdas", "1", "--plaquette-mix", "2"])), 2);
}

#[test]
fn minimize_is_deterministic_and_writes_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let csv = |name: &str| dir.path().join(name);
    let (a, b) = (csv("a.csv"), csv("b.csv"));
    for out in [&a, &b] {
        let o = run(&["minimize", "--L", "2", "--F", "1", "--lambdas", "0.5,1.0", "--seed", "3", "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("lambda,F,L,mode,E,E_err,P,P_err,plaq,plaq_err,n_warm,n_meas,seed,wallclock,status"));
    assert_eq!(text.lines().count(), 3);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.lambda_1.json")).unwrap()).unwrap();
    assert_eq!(side["F"], 1);
    assert_eq!(side["eta_convention"], "eta=exp(i*pi/4)");
    assert_eq!(side["params"].as_array().unwrap().len(), 2);

    // an MC sweep at L=2 is reproducible as well
    let (c, d) = (csv("c.csv"), csv("d.csv"));
    for out in [&c, &d] {
        let o = run(&[
            "minimize", "--L", "2", "--F", "1", "--mode", "mc", "--lambdas", "1.0", "--seed", "5", "--n-warm", "2000",
            "--n-meas", "4000", "--max-iter", "3", "--restarts", "0", "--out", p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read_to_string(&c).unwrap(), fs::read_to_string(&d).unwrap());

    // the sidecar feeds measure
    let m = csv("m.csv");
    let side = dir.path().join("a.lambda_1.json");
    let o = run(&["measure", "--L", "2", "--mode", "ec", "--lambdas", "1.0", "--params", p(&side), "--out", p(&m)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e_min: Vec<String> = text.lines().nth(2).unwrap().split(',').map(String::from).collect();
    let e_meas: Vec<String> = fs::read_to_string(&m).unwrap().lines().nth(1).unwrap().split(',').map(String::from).collect();
    assert_eq!(e_min[4], e_meas[4]);
    assert_eq!(code(&run(&["measure", "--L", "2", "--F", "2", "--lambdas", "1", "--params", p(&side)])), 2);
}

#[test]
fn config_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_flag = dir.path().join("flag.csv");
    let out_toml = dir.path().join("toml.csv");
    let out_json = dir.path().join("json.csv");
    let toml = dir.path().join("run.toml");
    fs::write(&toml, format!("[ed]\nL = 2\nlambdas = \"0.5,1.5\"\nno-cache = true\nout = \"{}\"\n", p(&out_toml))).unwrap();
    let json = dir.path().join("run.json");
    fs::write(&json, format!("{{\"L\": 2, \"lambdas\": \"0.5,1.5\", \"no-cache\": true, \"out\": \"{}\"}}", p(&out_json))).unwrap();
    assert_eq!(code(&run(&["ed", "--L", "2", "--lambdas", "0.5,1.5", "--no-cache", "--out", p(&out_flag)])), 0);
    assert_eq!(code(&run(&["ed", "--config", p(&toml)])), 0);
    assert_eq!(code(&run(&["--config", p(&json), "ed"])), 0);
    let want = fs::read_to_string(&out_flag).unwrap();
    assert_eq!(fs::read_to_string(&out_toml).unwrap(), want);
    assert_eq!(fs::read_to_string(&out_json).unwrap(), want);
    // flags override the file
    let out_override = dir.path().join("override.csv");
    assert_eq!(code(&run(&["ed", "--config", p(&toml), "--lambdas", "1.0", "--out", p(&out_override)])), 0);
    assert_eq!(fs::read_to_string(&out_override).unwrap().lines().count(), 2);
    fs::write(&toml, "[ed]\nbogus = 1\n").unwrap();
    assert_eq!(code(&run(&["ed", "--config", p(&toml)])), 2);
}

#[test]
fn verify_suites() {
    let o = run(&["verify", "--suite", "gradients", "--suite", "electric"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("all 2 suites passed"));
    assert!(!text.contains("FAIL"));
    let o = run(&["verify", "--suite", "electric", "--inject-fault", "gamma-in-sign"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn measure_verbose_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gaugepeps"))
        .args(["measure", "--L", "2", "--preset", "psi-e", "--mode", "mc", "--lambdas", "1.0"])
        .args(["--n-warm", "100", "--n-meas", "1000", "--verbose-every", "250"])
        .env("GAUGEPEPS_WORKERS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<serde_json::Value> = String::from_utf8_lossy(&o.stderr)
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(lines.len() >= 4);
    for l in &lines {
        assert!(l["step"].is_u64() && l["E_sample"].is_f64() && l["acceptance"].is_f64());
    }
    let w = dir.path().join("w.csv");
    let o = run(&["measure", "--L", "2", "--preset", "psi-b", "--mode", "ec", "--lambdas", "1.0", "--dump-weights", p(&w)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(&w).unwrap();
    let rows: Vec<(String, f64)> = table
        .lines()
        .skip(1)
        .map(|l| {
            let (c, p) = l.split_once(',').unwrap();
            (c.to_string(), p.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 256);
    assert!(rows.iter().all(|(c, _)| c.len() == 8));
    assert!((rows.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(rows.iter().filter(|r| r.1 > 1e-12).count(), 32);
}
