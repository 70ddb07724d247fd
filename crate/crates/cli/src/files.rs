//! Measurement files and CSV output.
//!
//! A measurement file is a `#`-prefixed `key=value` header followed by a
//! `re,im` CSV with one row per channel (channel `r + k N_r` for receive
//! element `r` and transmit element `k`):
//!
//! ```text
//! # tigre measurement
//! # scenario=one-target
//! # seed=7
//! # snr_db=1.0000000000000000e1
//! # noise_sigma=1.2345678901234567e-1
//! # config_sha256=<hex digest of the scenario without solver settings>
//! re,im
//! 1.0000000000000000e0,0.0000000000000000e0
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use tigre_core::bench::{AggregateResult, Scenario};
use tigre_core::model::{AngleSpectrum, ArrayModel, Measurement};
use tigre_core::nalgebra::DVector;
use tigre_core::scenario::ScenarioFile;
use tigre_core::solver::SolverParams;
use tigre_core::Complex64;

use crate::CliError;

const MAGIC: &str = "# tigre measurement";

/// Full-precision float formatting shared by every CSV.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Digest of everything about a scenario except solver settings.
pub fn config_hash(scenario: &Scenario) -> String {
    let mut file = ScenarioFile::from_scenario(scenario, &SolverParams::default());
    file.solver = None;
    let text = file.to_toml().expect("scenario serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFile {
    pub scenario: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub measurement: Measurement,
}

impl MeasurementFile {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "# scenario={}", self.scenario).unwrap();
        writeln!(out, "# seed={seed}").unwrap();
        writeln!(out, "# snr_db={}", num(self.measurement.snr_db)).unwrap();
        writeln!(out, "# noise_sigma={}", num(self.measurement.noise_sigma)).unwrap();
        writeln!(out, "# config_sha256={}", self.config_sha256).unwrap();
        writeln!(out, "re,im").unwrap();
        for v in self.measurement.y.iter() {
            writeln!(out, "{},{}", num(v.re), num(v.im)).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |line: usize, msg: &str| CliError::Input(format!("measurement file line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(bad(1, "missing '# tigre measurement' header")),
        }
        let mut header = BTreeMap::new();
        let mut rows = Vec::new();
        let mut seen_columns = false;
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if seen_columns {
                    return Err(bad(n, "header line after data"));
                }
                let (k, v) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| bad(n, "expected key=value"))?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            } else if !seen_columns {
                if line != "re,im" {
                    return Err(bad(n, "expected column header 're,im'"));
                }
                seen_columns = true;
            } else {
                let (re, im) = line.split_once(',').ok_or_else(|| bad(n, "expected 're,im'"))?;
                let re: f64 = re.trim().parse().map_err(|_| bad(n, "bad real part"))?;
                let im: f64 = im.trim().parse().map_err(|_| bad(n, "bad imaginary part"))?;
                rows.push(Complex64::new(re, im));
            }
        }
        let get = |key: &str| {
            header
                .get(key)
                .cloned()
                .ok_or_else(|| CliError::Input(format!("measurement file: missing header key '{key}'")))
        };
        let float = |key: &str| -> Result<f64, CliError> {
            get(key)?
                .parse()
                .map_err(|_| CliError::Input(format!("measurement file: bad value for '{key}'")))
        };
        let seed = match get("seed")?.as_str() {
            "none" => None,
            s => Some(
                s.parse()
                    .map_err(|_| CliError::Input("measurement file: bad value for 'seed'".into()))?,
            ),
        };
        let noise_sigma = float("noise_sigma")?;
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(CliError::Input("measurement file: noise_sigma must be finite and >= 0".into()));
        }
        Ok(Self {
            scenario: get("scenario")?,
            seed,
            config_sha256: get("config_sha256")?,
            measurement: Measurement {
                y: DVector::from_vec(rows),
                noise_sigma,
                snr_db: float("snr_db")?,
            },
        })
    }
}

/// `|X|` as a table: one row per DOA angle, one column per DOD angle.
pub fn grid_csv(x: &AngleSpectrum, model: &ArrayModel) -> String {
    let angles = model.grid().angles_deg();
    let mut out = String::from("doa_deg");
    for a in angles {
        write!(out, ",{}", num(*a)).unwrap();
    }
    out.push('\n');
    for (g, a) in angles.iter().enumerate() {
        out.push_str(&num(*a));
        for q in 0..angles.len() {
            write!(out, ",{}", num(x.get(g, q).norm())).unwrap();
        }
        out.push('\n');
    }
    out
}

/// One row per cell in `vec(X)` order with its 1-based index
/// `i = g + (q - 1) G` and whether `|x_i|` exceeds the threshold.
pub fn stem_csv(x: &AngleSpectrum, model: &ArrayModel, threshold: f64) -> String {
    let angles = model.grid().angles_deg();
    let size = angles.len();
    let mut out = String::from("i,magnitude,doa_deg,dod_deg,above_threshold\n");
    for q in 0..size {
        for g in 0..size {
            let m = x.get(g, q).norm();
            writeln!(
                out,
                "{},{},{},{},{}",
                g + q * size + 1,
                num(m),
                num(angles[g]),
                num(angles[q]),
                u8::from(m > threshold)
            )
            .unwrap();
        }
    }
    out
}

/// Aggregate rows. Time columns stay empty unless `timing` is set, so that
/// identical invocations produce identical bytes.
pub fn aggregate_csv(rows: &[AggregateResult], timing: bool) -> String {
    let mut out = String::from(
        "method,trial_count,converged_count,mean_error,std_error,mean_iterations,std_iterations,\
         mean_time_s,std_time_s,mean_precision,std_precision,mean_recall,std_recall,mean_f1,std_f1\n",
    );
    for r in rows {
        let (t, st) = if timing {
            (num(r.mean_time_s), num(r.std_time_s))
        } else {
            (String::new(), String::new())
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.trial_count,
            r.converged_count,
            num(r.mean_error),
            num(r.std_error),
            num(r.mean_iterations),
            num(r.std_iterations),
            t,
            st,
            num(r.mean_precision),
            num(r.std_precision),
            num(r.mean_recall),
            num(r.std_recall),
            num(r.mean_f1),
            num(r.std_f1),
        )
        .unwrap();
    }
    out
}
