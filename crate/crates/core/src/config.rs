//! Experiment configuration: seeding, sizes, and the step-budget guardrail.
//!
//! Configs come from a key=value text file, from CLI flags layered on top, or
//! from code. The same `set` entry point backs all three so precedence is
//! plain: defaults, then file, then flags.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// Durations drawn from the exit-time law.
    Exact,
    /// Every duration is exactly h^2; fast smoke tests only, excluded from
    /// acceptance runs.
    DeterministicDurations,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "exact" => Ok(Mode::Exact),
            "deterministic-durations" | "deterministic_durations" => {
                Ok(Mode::DeterministicDurations)
            }
            other => Err(Error::config(format!(
                "unknown mode '{other}' (expected 'exact' or 'deterministic-durations')"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::DeterministicDurations => "deterministic-durations",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub paths: u64,
    pub levels: Vec<u32>,
    /// K_ref - k: the local-time proxy runs this many levels finer.
    pub proxy_offset: u32,
    pub horizons: Vec<f64>,
    pub eta: f64,
    pub delta: f64,
    pub m: u32,
    pub lambda: f64,
    /// Output path prefix; writes <out>.csv and <out>.json.
    pub out: Option<String>,
    /// 0 means the library picks (all cores).
    pub threads: usize,
    pub mode: Mode,
    /// Base b of the logarithm in the normalizer sqrt(2^{-k} log_b(2^k));
    /// natural log by default (the rate constant 2 is calibrated to it).
    pub log_base: f64,
    /// Refuse runs whose projected fine-step count exceeds this.
    pub step_budget: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 42,
            paths: 100,
            levels: vec![2, 3, 4, 5, 6],
            proxy_offset: 6,
            horizons: vec![1.0],
            eta: 1.0,
            delta: 1.0,
            m: 1,
            lambda: 0.5,
            out: None,
            threads: 0,
            mode: Mode::Exact,
            log_base: std::f64::consts::E,
            step_budget: 2e10,
        }
    }
}

impl ExperimentConfig {
    /// Applies one key=value assignment (config-file lines and flag overrides
    /// both funnel through here).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" | "master_seed" => self.master_seed = parse_num(key, v)?,
            "paths" => self.paths = parse_num(key, v)?,
            "levels" => self.levels = parse_list(key, v)?,
            "proxy_offset" | "proxy-offset" => self.proxy_offset = parse_num(key, v)?,
            "horizons" => self.horizons = parse_list(key, v)?,
            "eta" => self.eta = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "m" => self.m = parse_num(key, v)?,
            "lambda" => self.lambda = parse_num(key, v)?,
            "out" => self.out = Some(v.to_string()),
            "threads" => self.threads = parse_num(key, v)?,
            "mode" => self.mode = Mode::parse(v)?,
            "log_base" | "log-base" => {
                self.log_base = if v == "e" {
                    std::f64::consts::E
                } else {
                    parse_num::<f64>(key, v)?
                }
            }
            "step_budget" | "step-budget" => self.step_budget = parse_num(key, v)?,
            other => return Err(Error::config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a key=value config file ('#' starts a comment).
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths < 1 {
            return Err(Error::config("paths must be >= 1"));
        }
        if self.levels.is_empty() || self.levels.iter().any(|&k| k < 1) {
            return Err(Error::config("levels must be a nonempty list of integers >= 1"));
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::config("horizons must be a nonempty list of positive times"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::config("eta must be > 0"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("delta must be > 0"));
        }
        if self.m < 1 {
            return Err(Error::config("m must be >= 1"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::config("lambda must be > 0"));
        }
        if !(self.log_base > 0.0) || self.log_base == 1.0 {
            return Err(Error::config("log_base must be positive and != 1"));
        }
        Ok(())
    }

    pub fn max_level(&self) -> u32 {
        self.levels.iter().copied().max().unwrap_or(1)
    }

    pub fn max_horizon(&self) -> f64 {
        self.horizons.iter().copied().fold(0.0, f64::max)
    }

    /// Levels ascending, deduplicated: the canonical iteration order.
    pub fn sorted_levels(&self) -> Vec<u32> {
        let mut v = self.levels.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn sorted_horizons(&self) -> Vec<f64> {
        let mut v = self.horizons.clone();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Statistical parameters for report metadata. Execution knobs (threads,
    /// out) are excluded on purpose: reports must not depend on them.
    pub fn echo(&self) -> std::collections::BTreeMap<String, String> {
        let mut map = std::collections::BTreeMap::new();
        let mut put = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };
        put("master_seed", self.master_seed.to_string());
        put("paths", self.paths.to_string());
        put(
            "levels",
            self.levels.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        );
        put("proxy_offset", self.proxy_offset.to_string());
        put(
            "horizons",
            self.horizons.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        );
        put("eta", self.eta.to_string());
        put("delta", self.delta.to_string());
        put("m", self.m.to_string());
        put("lambda", self.lambda.to_string());
        put("mode", self.mode.as_str().to_string());
        put("log_base", self.log_base.to_string());
        put("step_budget", self.step_budget.to_string());
        map
    }

    /// Fine steps one pass will take: max horizon * 4^(finest level) * paths.
    pub fn projected_fine_steps(&self, finest_level: u32, paths: u64) -> f64 {
        self.max_horizon() * 4f64.powi(finest_level as i32) * paths as f64
    }

    /// The guardrail: refuse infeasible runs with a sizing hint.
    pub fn check_budget(&self, finest_level: u32, paths: u64) -> Result<()> {
        let projected = self.projected_fine_steps(finest_level, paths);
        if projected > self.step_budget {
            return Err(Error::Budget { projected, budget: self.step_budget });
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::config(format!("invalid value '{v}' for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}
