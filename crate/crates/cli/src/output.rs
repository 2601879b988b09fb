use std::fs;
use std::path::Path;

use entropy_gain::experiments::{Abscissa, ExperimentReport, Record};
use entropy_gain::toeplitz::{SingularSpectrum, UNDERFLOW_RATIO};
use serde::Serialize;

use crate::config::ConfigError;

/// Files produced by one run, written in order.
pub struct Artifacts {
    pub files: Vec<(&'static str, String)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn json<T: Serialize>(&mut self, name: &'static str, value: &T) -> Result<(), ConfigError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.files.push((name, text));
        Ok(())
    }

    pub fn records(&mut self, name: &'static str, records: &[Record]) -> Result<(), ConfigError> {
        self.files.push((name, records_csv(records)?));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), ConfigError> {
        fs::create_dir_all(dir).map_err(|e| ConfigError(format!("cannot create {}: {e}", dir.display())))?;
        for (name, text) in &self.files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| ConfigError(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ConfigError> {
    let bytes = w.into_inner().map_err(|e| ConfigError(e.to_string()))?;
    Ok(String::from_utf8(bytes)?)
}

/// `n,value_nats_per_sample,warning_flags`, or `delta,...` for step sweeps.
pub fn records_csv(records: &[Record]) -> Result<String, ConfigError> {
    let mut w = writer();
    let first = match records.first().map(|r| r.n) {
        Some(Abscissa::Step(_)) => "delta",
        _ => "n",
    };
    w.write_record([first, "value_nats_per_sample", "warning_flags"])?;
    for r in records {
        let n = match r.n {
            Abscissa::Len(n) => n.to_string(),
            Abscissa::Step(d) => d.to_string(),
        };
        let flags: Vec<&str> = r.warnings.iter().map(|w| w.as_str()).collect();
        w.write_record([n, r.value.to_string(), flags.join(";")])?;
    }
    finish(w)
}

/// `n,index,singular_value,underflow_flag`, smallest value first.
pub fn spectrum_csv(spectra: &[SingularSpectrum]) -> Result<String, ConfigError> {
    let mut w = writer();
    w.write_record(["n", "index", "singular_value", "underflow_flag"])?;
    for s in spectra {
        let top = s.values.iter().copied().fold(0.0, f64::max);
        for (i, v) in s.values.iter().enumerate() {
            let flag = u8::from(*v < UNDERFLOW_RATIO * top);
            w.write_record([s.n.to_string(), (i + 1).to_string(), v.to_string(), flag.to_string()])?;
        }
    }
    finish(w)
}

/// One stdout line per report.
pub fn summary(label: &str, r: &ExperimentReport, scale: f64, unit: &str) -> String {
    format!(
        "{label}: limit {:.6} target {:.6} tolerance {:.3e} {unit}/sample {}",
        r.limit.value * scale,
        r.target * scale,
        r.tolerance * scale,
        if r.pass { "PASS" } else { "FAIL" }
    )
}
