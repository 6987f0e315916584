//! `upcross`: Monte Carlo experiments on the upcrossing estimator of
//! Brownian local time.
//!
//! Exit codes: 0 all verdicts passed, 2 at least one verdict failed,
//! 1 usage or runtime error.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::Path;
use std::process::ExitCode;
use upcross_core::experiments;
use upcross_core::{ExperimentConfig, ExperimentReport};

const AFTER_HELP: &str = "\
Settings are applied in order: defaults, UPCROSS_THREADS, --config file, \
flags; later wins. The config file holds key=value lines ('#' comments) with \
the same keys as the long flags, plus step_budget. Values echo the flag \
syntax, e.g. levels=2,3,4. With --out PREFIX the run writes PREFIX.csv and \
PREFIX.json.";

#[derive(Parser)]
#[command(name = "upcross", version, about, after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Every value is kept as the raw string and fed through the one config
/// parser, so a flag and its config-file line cannot disagree on syntax.
#[derive(Args, Default)]
struct Overrides {
    /// Key=value file applied before flags.
    #[arg(long, value_name = "FILE")]
    config: Option<String>,
    /// Master seed for all random streams.
    #[arg(long, value_name = "INT")]
    seed: Option<String>,
    /// Number of Monte Carlo paths N.
    #[arg(long, value_name = "INT")]
    paths: Option<String>,
    /// Comma-separated dyadic levels k.
    #[arg(long, value_name = "LIST")]
    levels: Option<String>,
    /// Reference-level offset: the local-time proxy runs at k + offset.
    #[arg(long, value_name = "INT")]
    proxy_offset: Option<String>,
    /// Comma-separated horizons T.
    #[arg(long, value_name = "LIST")]
    horizons: Option<String>,
    /// Moment excess in E[R^(2+eta)].
    #[arg(long, value_name = "NUM")]
    eta: Option<String>,
    /// Variation excess in the (2+delta)-variation moment.
    #[arg(long, value_name = "NUM")]
    delta: Option<String>,
    /// Half-width of the spatial window [-m, m] for the variation norm.
    #[arg(long, value_name = "INT")]
    m: Option<String>,
    /// Scale factor of the scaling test.
    #[arg(long, value_name = "NUM")]
    lambda: Option<String>,
    /// Worker threads; 0 = all cores. Results do not depend on this.
    #[arg(long, value_name = "INT")]
    threads: Option<String>,
    /// Output path prefix for the CSV and JSON reports.
    #[arg(long, value_name = "PREFIX")]
    out: Option<String>,
    /// 'exact' or 'deterministic-durations'.
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    /// Base of the logarithm in the normalizer; 'e' or a number.
    #[arg(long, value_name = "BASE")]
    log_base: Option<String>,
    /// Refuse runs projected to exceed this many fine steps.
    #[arg(long, value_name = "NUM")]
    step_budget: Option<String>,
}

impl Overrides {
    fn build(&self) -> Result<ExperimentConfig, upcross_core::Error> {
        let mut config = ExperimentConfig::default();
        if let Ok(v) = std::env::var("UPCROSS_THREADS") {
            config.set("threads", &v).map_err(|_| {
                upcross_core::Error::config(format!("UPCROSS_THREADS: invalid value '{v}'"))
            })?;
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            config.apply_file(&text)?;
        }
        let flags: [(&str, &Option<String>); 14] = [
            ("seed", &self.seed),
            ("paths", &self.paths),
            ("levels", &self.levels),
            ("proxy_offset", &self.proxy_offset),
            ("horizons", &self.horizons),
            ("eta", &self.eta),
            ("delta", &self.delta),
            ("m", &self.m),
            ("lambda", &self.lambda),
            ("threads", &self.threads),
            ("out", &self.out),
            ("mode", &self.mode),
            ("log_base", &self.log_base),
            ("step_budget", &self.step_budget),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the first-exit-time law against its closed-form moments.
    SelftestExitLaw(Overrides),
    /// Run the cross-module consistency checks.
    Selftest(Overrides),
    /// Sup-norm deviation rate of the upcrossing estimator.
    SupRate(Overrides),
    /// Moment bound E[R^(2+eta)] across levels and horizons.
    LpRate(Overrides),
    /// p-variation moment of the estimator over the spatial window.
    Variation(Overrides),
    /// Distributional scaling identity via a two-sample KS test.
    ScalingTest(Overrides),
    /// Pathwise square-root subadditivity of the sup deviation.
    Subadditivity(Overrides),
}

impl Command {
    fn run(&self) -> Result<ExperimentReport, upcross_core::Error> {
        type Runner = fn(&ExperimentConfig) -> upcross_core::Result<ExperimentReport>;
        let (overrides, runner): (_, Runner) = match self {
            Command::SelftestExitLaw(o) => (o, experiments::run_exit_law_selftest as _),
            Command::Selftest(o) => (o, experiments::run_selftest as _),
            Command::SupRate(o) => (o, experiments::run_sup_rate as _),
            Command::LpRate(o) => (o, experiments::run_lp_rate as _),
            Command::Variation(o) => (o, experiments::run_variation as _),
            Command::ScalingTest(o) => (o, experiments::run_scaling_test as _),
            Command::Subadditivity(o) => (o, experiments::run_subadditivity as _),
        };
        let config = overrides.build()?;
        let report = runner(&config)?;
        if let Some(prefix) = &config.out {
            report.write_outputs(Path::new(prefix))?;
            println!("wrote {prefix}.csv and {prefix}.json");
        }
        Ok(report)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command.run() {
        Ok(report) => {
            print!("{}", report.console_summary());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
