//! Result files: sweep CSV, parameter sidecars, ED cache, EC weight tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzParams;
use crate::ed::{ground_state, SpectralResult};
use crate::error::{Error, Result};
use crate::lattice::{GaugeConfig, Lattice};
use crate::optim::SweepRow;

/// Written into every parameter file; files with another value are rejected.
pub const ETA_CONVENTION: &str = "eta=exp(i*pi/4)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    #[serde(rename = "F")]
    pub f: usize,
    pub eta_convention: String,
    pub params: Vec<[f64; 2]>,
}

impl ParamsFile {
    pub fn from_params(p: &AnsatzParams) -> Self {
        ParamsFile {
            f: p.flavors(),
            eta_convention: ETA_CONVENTION.to_string(),
            params: p.values().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn to_params(&self) -> Result<AnsatzParams> {
        if self.eta_convention != ETA_CONVENTION {
            return Err(Error::Domain(format!(
                "parameter file uses convention '{}', expected '{ETA_CONVENTION}'",
                self.eta_convention
            )));
        }
        AnsatzParams::new(self.f, self.params.iter().map(|[a, b]| C64::new(*a, *b)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub const SWEEP_HEADER: [&str; 15] = [
    "lambda", "F", "L", "mode", "E", "E_err", "P", "P_err", "plaq", "plaq_err", "n_warm", "n_meas", "seed",
    "wallclock", "status",
];

/// Writes sweep rows. `wallclock` stays empty unless `timing` is set, so that
/// repeated runs produce identical bytes.
pub fn write_sweep_csv<W: Write>(out: W, l: usize, f: usize, mode: &str, rows: &[SweepRow], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let m = &r.measurement;
        w.write_record([
            r.lambda.to_string(),
            f.to_string(),
            l.to_string(),
            mode.to_string(),
            m.energy.total.to_string(),
            m.e_err.to_string(),
            m.mean_p.to_string(),
            m.p_err.to_string(),
            m.mean_plaq.to_string(),
            m.plaq_err.to_string(),
            m.n_warm.to_string(),
            m.n_meas.to_string(),
            r.seed.to_string(),
            if timing { format!("{:.3}", r.wallclock) } else { String::new() },
            r.error.clone().map_or_else(|| "ok".to_string(), |e| format!("error: {e}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar path `<stem>.lambda_<λ>.json` next to the CSV.
pub fn sidecar_path(csv: &Path, lambda: f64) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    csv.with_file_name(format!("{stem}.lambda_{lambda}.json"))
}

pub const ED_HEADER: [&str; 9] = ["lambda", "L", "E0", "P", "plaq", "electric", "magnetic", "residual", "winding"];

pub fn write_ed_csv<W: Write>(out: W, rows: &[SpectralResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ED_HEADER)?;
    for r in rows {
        w.write_record([
            r.lambda.to_string(),
            r.l.to_string(),
            r.e0.to_string(),
            r.mean_p.to_string(),
            r.mean_plaq.to_string(),
            r.energy.electric.to_string(),
            r.energy.magnetic.to_string(),
            format!("{:e}", r.residual),
            format!("{}{}", r.winding.0 as u8, r.winding.1 as u8),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// On-disk cache of ground-state results, one JSON file per `(L, λ)`.
pub struct EdCache {
    dir: PathBuf,
}

impl EdCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        EdCache { dir: dir.into() }
    }

    pub fn path(&self, l: usize, lambda: f64) -> PathBuf {
        self.dir.join(format!("ed_L{l}_lambda_{lambda}.json"))
    }

    /// Cached result if present, otherwise solves and stores. The flag reports a hit.
    pub fn ground_state(&self, lat: &Lattice, lambda: f64) -> Result<(SpectralResult, bool)> {
        let path = self.path(lat.extent(), lambda);
        if let Ok(s) = fs::read_to_string(&path) {
            if let Ok(r) = serde_json::from_str::<SpectralResult>(&s) {
                if r.l == lat.extent() && r.lambda == lambda {
                    return Ok((r, true));
                }
            }
        }
        let r = ground_state(lat, lambda)?;
        fs::create_dir_all(&self.dir)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&r)? + "\n")?;
        fs::rename(&tmp, &path)?;
        Ok((r, false))
    }
}

/// One row per configuration: the link bits as a string (link 0 first) and the weight.
pub fn write_weights_csv<W: Write>(out: W, weights: &[(GaugeConfig, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "weight"])?;
    for (c, p) in weights {
        let bits: String = c.bits().iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
        w.write_record([bits, p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
