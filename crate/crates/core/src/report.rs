//! Experiment reports: per-(k, T) statistic rows, pass/fail verdicts, and
//! the two output formats. The CSV writer is hand-rolled so the byte stream
//! is a pure function of the rows; reruns with any thread count must produce
//! identical files. The JSON mirror carries the same rows plus config echo,
//! version, verdicts, and wall time (the one field allowed to differ).

use crate::error::Result;
use crate::stats::summarize;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

pub const CSV_HEADER: &str = "experiment,k,T,statistic,mean,stderr,median,q10,q90,n_paths,seed";

/// 17 significant digits: enough to reproduce any f64 exactly.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub k: u32,
    pub horizon: f64,
    pub statistic: String,
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl ReportRow {
    /// Distributional row from per-path samples.
    pub fn from_sample(
        experiment: &str,
        k: u32,
        horizon: f64,
        statistic: &str,
        xs: &[f64],
        seed: u64,
    ) -> ReportRow {
        let s = summarize(xs);
        ReportRow {
            experiment: experiment.into(),
            k,
            horizon,
            statistic: statistic.into(),
            mean: s.mean,
            stderr: s.stderr,
            median: s.median,
            q10: s.q10,
            q90: s.q90,
            n_paths: s.n,
            seed,
        }
    }

    /// Row for a single derived scalar (a KS distance, a violation count):
    /// the value fills the location columns, stderr is NaN.
    pub fn from_scalar(
        experiment: &str,
        k: u32,
        horizon: f64,
        statistic: &str,
        value: f64,
        n_paths: usize,
        seed: u64,
    ) -> ReportRow {
        ReportRow {
            experiment: experiment.into(),
            k,
            horizon,
            statistic: statistic.into(),
            mean: value,
            stderr: f64::NAN,
            median: value,
            q10: value,
            q90: value,
            n_paths,
            seed,
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.k,
            fmt(self.horizon),
            self.statistic,
            fmt(self.mean),
            fmt(self.stderr),
            fmt(self.median),
            fmt(self.q10),
            fmt(self.q90),
            self.n_paths,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: String) -> Verdict {
        Verdict { name: name.into(), pass, detail }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config_echo: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<Verdict>,
    pub wall_time_seconds: f64,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, config_echo: BTreeMap<String, String>) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_echo,
            rows: Vec::new(),
            verdicts: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(128 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self).map_err(std::io::Error::other)?)
    }

    /// Writes <prefix>.csv and <prefix>.json, creating parent directories.
    pub fn write_outputs(&self, prefix: &Path) -> Result<()> {
        if let Some(parent) = prefix.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(prefix.with_extension("csv"), self.to_csv())?;
        std::fs::write(prefix.with_extension("json"), self.to_json()?)?;
        Ok(())
    }

    /// Human-oriented one-screen summary for the CLI.
    pub fn console_summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{}: {} rows, seed {}, {:.1}s\n",
            self.experiment,
            self.rows.len(),
            self.seed,
            self.wall_time_seconds
        ));
        for v in &self.verdicts {
            out.push_str(&format!(
                "  [{}] {}: {}\n",
                if v.pass { "PASS" } else { "FAIL" },
                v.name,
                v.detail
            ));
        }
        out
    }
}
