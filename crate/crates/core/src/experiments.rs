//! Monte Carlo experiment drivers.
//!
//! Every driver follows the same scheme: validate the config, refuse runs
//! over the step budget, fan the paths out over a worker pool, and reduce in
//! path-index order. Path i draws from the counter-based stream
//! (master_seed, domain, i), so results are bit-identical for any thread
//! count.

use crate::config::{ExperimentConfig, Mode};
use crate::deviation::{subadditivity_check, DeviationStatistics, SubadditivityReport};
use crate::error::{Error, Result};
use crate::exit_time::ExitTimeLaw;
use crate::field::UpcrossingField;
use crate::pipeline::{count_upcrossings_at, run_path_deviations, LevelDeviations};
use crate::pvariation::{pvar_sequence, sup_pvar_over_time};
use crate::report::{ExperimentReport, ReportRow, Verdict};
use crate::rng::{split_word, stream, DOMAIN_PATHS, DOMAIN_SCALING_B, DOMAIN_SELFTEST};
use crate::skeleton::CrossingSkeleton;
use crate::stats::{ks_two_sample, log_log_slope, quantile, summarize};
use rand::RngCore;
use rayon::prelude::*;
use std::time::Instant;

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

/// One deviation pipeline pass over all paths: out[path][level].stats[horizon].
fn collect_deviations(
    config: &ExperimentConfig,
    levels: &[u32],
    horizons: &[f64],
    gen_level: u32,
) -> Result<Vec<Vec<LevelDeviations>>> {
    let law = ExitTimeLaw::default();
    pool(config.threads)?.install(|| {
        (0..config.paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(config.master_seed, DOMAIN_PATHS, i);
                run_path_deviations(
                    &mut rng,
                    &law,
                    gen_level,
                    levels,
                    config.proxy_offset,
                    horizons,
                    config.mode,
                    config.log_base,
                )
            })
            .collect()
    })
}

fn median_of(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// Sup-norm rate experiment: per (k, T) the distribution of
/// R = D(T)/nu_k and of |R - 2 sqrt(lhat*(T))|. The centered statistic
/// should vanish as k grows; the verdict checks its median decreases in k
/// and, at the largest k, is small relative to the median of 2 sqrt(lhat*).
pub fn run_sup_rate(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let t0 = Instant::now();
    let levels = config.sorted_levels();
    let horizons = config.sorted_horizons();
    let gen_level = levels.last().unwrap() + config.proxy_offset;
    config.check_budget(gen_level, config.paths)?;
    let per_path = collect_deviations(config, &levels, &horizons, gen_level)?;

    let mut report = ExperimentReport::new("sup-rate", config.master_seed, config.echo());
    let seed = config.master_seed;
    let mut med_centered = vec![vec![0.0f64; horizons.len()]; levels.len()];
    let mut med_scale = vec![vec![0.0f64; horizons.len()]; levels.len()];
    for (li, &k) in levels.iter().enumerate() {
        for (hi, &t) in horizons.iter().enumerate() {
            let pick =
                |f: fn(&DeviationStatistics) -> f64| -> Vec<f64> {
                    per_path.iter().map(|p| f(&p[li].stats[hi])).collect()
                };
            let sup = pick(|d| d.sup_deviation);
            let rate = pick(|d| d.rate);
            let centered = pick(|d| d.centered.abs());
            let scale = pick(|d| 2.0 * d.ell_star.sqrt());
            med_centered[li][hi] = median_of(&centered);
            med_scale[li][hi] = median_of(&scale);
            report.rows.push(ReportRow::from_sample("sup-rate", k, t, "sup_deviation", &sup, seed));
            report.rows.push(ReportRow::from_sample("sup-rate", k, t, "rate", &rate, seed));
            report
                .rows
                .push(ReportRow::from_sample("sup-rate", k, t, "abs_centered", &centered, seed));
            report
                .rows
                .push(ReportRow::from_sample("sup-rate", k, t, "two_sqrt_ell_star", &scale, seed));
        }
    }
    for (hi, &t) in horizons.iter().enumerate() {
        let meds: Vec<f64> = (0..levels.len()).map(|li| med_centered[li][hi]).collect();
        let decreasing = meds.windows(2).all(|w| w[1] < w[0]);
        report.verdicts.push(Verdict::new(
            &format!("abs_centered_median_decreasing_T={t}"),
            decreasing,
            format!("medians across k {:?}: {:?}", levels, meds),
        ));
        let rel = med_centered[levels.len() - 1][hi] / med_scale[levels.len() - 1][hi];
        report.verdicts.push(Verdict::new(
            &format!("relative_error_at_k={}_T={t}", levels.last().unwrap()),
            rel <= 0.35,
            format!("median |R - 2sqrt(l*)| / median 2sqrt(l*) = {rel:.4}"),
        ));
    }
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    Ok(report)
}

/// Moment-bound experiment: per (k, T) the Monte Carlo estimate of
/// E[R^{2+eta}]. The bound predicts it is uniform in k and grows at most
/// like T^{(2+eta)/4 * ...}; with the normalizer squared out, the usable cap
/// on the log-log slope in T is 1/2 + eta/4 plus tolerance.
pub fn run_lp_rate(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let t0 = Instant::now();
    let levels = config.sorted_levels();
    let horizons = config.sorted_horizons();
    let gen_level = levels.last().unwrap() + config.proxy_offset;
    config.check_budget(gen_level, config.paths)?;
    let per_path = collect_deviations(config, &levels, &horizons, gen_level)?;

    let p = 2.0 + config.eta;
    let mut report = ExperimentReport::new("lp-rate", config.master_seed, config.echo());
    let seed = config.master_seed;
    let mut estimates = vec![vec![0.0f64; horizons.len()]; levels.len()];
    for (li, &k) in levels.iter().enumerate() {
        for (hi, &t) in horizons.iter().enumerate() {
            let moment: Vec<f64> =
                per_path.iter().map(|pp| pp[li].stats[hi].rate.powf(p)).collect();
            let row = ReportRow::from_sample("lp-rate", k, t, "rate_moment", &moment, seed);
            estimates[li][hi] = row.mean;
            report.rows.push(row);
            report.rows.push(ReportRow::from_scalar(
                "lp-rate",
                k,
                t,
                "normalized_ratio",
                estimates[li][hi] / t.powf(0.5 + config.eta / 4.0),
                moment.len(),
                seed,
            ));
        }
    }
    for (hi, &t) in horizons.iter().enumerate() {
        let col: Vec<f64> = (0..levels.len()).map(|li| estimates[li][hi]).collect();
        let (lo, hi_v) = col.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
        report.verdicts.push(Verdict::new(
            &format!("uniform_in_k_T={t}"),
            hi_v <= 2.0 * lo,
            format!("estimates {col:?}, max/min = {:.4}", hi_v / lo),
        ));
    }
    if horizons.len() >= 2 {
        for (li, &k) in levels.iter().enumerate() {
            let slope = log_log_slope(&horizons, &estimates[li])?;
            report.rows.push(ReportRow::from_scalar(
                "lp-rate",
                k,
                *horizons.last().unwrap(),
                "loglog_slope",
                slope,
                config.paths as usize,
                seed,
            ));
            let cap = 0.5 + config.eta / 4.0 + 0.15;
            report.verdicts.push(Verdict::new(
                &format!("slope_cap_k={k}"),
                slope <= cap,
                format!("slope {slope:.4} vs cap {cap:.2}"),
            ));
        }
    }
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    Ok(report)
}

/// Variation-bound experiment: per (k, T) the estimate of
/// E sup_{t<=T} ||U^k(t)||^{2+delta}_{I_m;2+delta}. No proxy: the statistic
/// is a functional of the coarse field alone, so paths are generated at the
/// largest requested level and coarsened.
pub fn run_variation(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let t0 = Instant::now();
    let levels = config.sorted_levels();
    let horizons = config.sorted_horizons();
    let fine_level = *levels.last().unwrap();
    config.check_budget(fine_level, config.paths)?;
    let q = 2.0 + config.delta;
    let m = config.m;
    let max_h = *horizons.last().unwrap();
    let law = ExitTimeLaw::default();

    let per_path: Vec<Vec<Vec<f64>>> = pool(config.threads)?.install(|| {
        (0..config.paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(config.master_seed, DOMAIN_PATHS, i);
                let fine = CrossingSkeleton::generate(
                    &mut rng,
                    &law,
                    fine_level,
                    0.0,
                    max_h,
                    config.mode,
                )?;
                levels
                    .iter()
                    .map(|&k| {
                        let f = UpcrossingField::build(&fine.coarsen(k)?);
                        horizons.iter().map(|&t| sup_pvar_over_time(&f, q, m, t)).collect()
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<Vec<f64>>>>>()
    })?;

    let mut report = ExperimentReport::new("variation", config.master_seed, config.echo());
    let seed = config.master_seed;
    let mut means = vec![vec![0.0f64; horizons.len()]; levels.len()];
    for (li, &k) in levels.iter().enumerate() {
        for (hi, &t) in horizons.iter().enumerate() {
            let xs: Vec<f64> = per_path.iter().map(|pp| pp[li][hi]).collect();
            let row = ReportRow::from_sample("variation", k, t, "variation_moment", &xs, seed);
            means[li][hi] = row.mean;
            report.rows.push(row);
        }
    }
    for (hi, &t) in horizons.iter().enumerate() {
        let col: Vec<f64> = (0..levels.len()).map(|li| means[li][hi]).collect();
        let (lo, hi_v) =
            col.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        report.verdicts.push(Verdict::new(
            &format!("bounded_in_k_T={t}"),
            hi_v <= 2.0 * lo,
            format!("estimates {col:?}, max/min = {:.4}", hi_v / lo),
        ));
    }
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    Ok(report)
}

/// Scaling-identity experiment: for each k, compare the law of
/// F^k(lambda^2)/lambda (sample A) against F^k(lambda) (sample B) with a
/// two-sample KS test. The two samples use disjoint stream domains of the
/// same master seed, so they are independent.
pub fn run_scaling_test(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let t0 = Instant::now();
    let levels = config.sorted_levels();
    let lam = config.lambda;
    let lam2 = lam * lam;
    let gen_max = levels.last().unwrap() + config.proxy_offset;
    let projected =
        (lam2 + lam) * 4f64.powi(gen_max as i32) * config.paths as f64;
    if projected > config.step_budget {
        return Err(Error::Budget { projected, budget: config.step_budget });
    }
    let law = ExitTimeLaw::default();

    let mut report = ExperimentReport::new("scaling-test", config.master_seed, config.echo());
    let seed = config.master_seed;
    for &k in &levels {
        let gen_level = k + config.proxy_offset;
        let one_sample = |domain: u64, horizon: f64, scale: f64| -> Result<Vec<f64>> {
            pool(config.threads)?.install(|| {
                (0..config.paths)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = stream(config.master_seed, domain, i);
                        let out = run_path_deviations(
                            &mut rng,
                            &law,
                            gen_level,
                            &[k],
                            config.proxy_offset,
                            &[horizon],
                            config.mode,
                            config.log_base,
                        )?;
                        Ok(out[0].stats[0].f_statistic / scale)
                    })
                    .collect()
            })
        };
        let a = one_sample(DOMAIN_PATHS, lam2, lam)?;
        let b = one_sample(DOMAIN_SCALING_B, lam, 1.0)?;
        report.rows.push(ReportRow::from_sample("scaling-test", k, lam2, "f_over_lambda", &a, seed));
        report.rows.push(ReportRow::from_sample("scaling-test", k, lam, "f", &b, seed));
        let ks = ks_two_sample(&a, &b)?;
        report.rows.push(ReportRow::from_scalar(
            "scaling-test",
            k,
            lam,
            "ks_distance",
            ks.statistic,
            a.len(),
            seed,
        ));
        report.rows.push(ReportRow::from_scalar(
            "scaling-test",
            k,
            lam,
            "ks_p_value",
            ks.p_value,
            a.len(),
            seed,
        ));
        report.verdicts.push(Verdict::new(
            &format!("ks_p_above_0.01_k={k}"),
            ks.p_value > 0.01,
            format!("D = {:.4}, p = {:.4}", ks.statistic, ks.p_value),
        ));
    }
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    Ok(report)
}

/// Pathwise subadditivity experiment: drives the exact increment identities
/// and the square-root triangle bound over N paths; both must hold with zero
/// violations. The squared-form failure rate is reported as a diagnostic.
pub fn run_subadditivity(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let t0 = Instant::now();
    let levels = config.sorted_levels();
    let horizons = config.sorted_horizons();
    let gen_level = levels.last().unwrap() + config.proxy_offset;
    config.check_budget(gen_level, config.paths)?;
    let max_h = *horizons.last().unwrap();
    let law = ExitTimeLaw::default();

    let per_path: Vec<Vec<Vec<SubadditivityReport>>> = pool(config.threads)?.install(|| {
        (0..config.paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(config.master_seed, DOMAIN_PATHS, i);
                let fine = CrossingSkeleton::generate(
                    &mut rng,
                    &law,
                    gen_level,
                    0.0,
                    max_h,
                    config.mode,
                )?;
                levels
                    .iter()
                    .map(|&k| {
                        horizons.iter().map(|&t| subadditivity_check(&fine, k, t)).collect()
                    })
                    .collect()
            })
            .collect::<Result<Vec<Vec<Vec<SubadditivityReport>>>>>()
    })?;

    let mut report = ExperimentReport::new("subadditivity", config.master_seed, config.echo());
    let seed = config.master_seed;
    let n = config.paths as usize;
    for (li, &k) in levels.iter().enumerate() {
        for (hi, &t) in horizons.iter().enumerate() {
            let mut tested = 0usize;
            let mut violations = 0usize;
            let mut identity_failures = 0usize;
            let mut squared = 0usize;
            let mut max_excess = f64::NEG_INFINITY;
            for pp in &per_path {
                let r = &pp[li][hi];
                tested += r.tested;
                violations += r.violations;
                identity_failures += r.identity_failures;
                squared += r.squared_violations;
                max_excess = max_excess.max(r.max_excess);
            }
            let mk = |name: &str, v: f64| {
                ReportRow::from_scalar("subadditivity", k, t, name, v, n, seed)
            };
            report.rows.push(mk("splits_tested", tested as f64));
            report.rows.push(mk("sqrt_violations", violations as f64));
            report.rows.push(mk("identity_failures", identity_failures as f64));
            report.rows.push(mk("max_excess", max_excess));
            report.rows.push(mk("squared_violation_rate", squared as f64 / tested as f64));
            report.verdicts.push(Verdict::new(
                &format!("zero_violations_k={k}_T={t}"),
                violations == 0 && identity_failures == 0,
                format!(
                    "{tested} splits: {violations} sqrt violations, \
                     {identity_failures} identity failures, max excess {max_excess:.3e}"
                ),
            ));
        }
    }
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    Ok(report)
}

/// Per-path values of U^{level}(horizon, 0), parallel and deterministic.
pub fn levy_sample(
    master_seed: u64,
    domain: u64,
    n_paths: u64,
    level: u32,
    horizon: f64,
    mode: Mode,
    threads: usize,
) -> Result<Vec<f64>> {
    let law = ExitTimeLaw::default();
    let scale = 2.0 * 0.5f64.powi(level as i32);
    pool(threads)?.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(master_seed, domain, i);
                Ok(scale * count_upcrossings_at(&mut rng, &law, level, 0, horizon, mode)? as f64)
            })
            .collect()
    })
}

/// Exit-law selftest as a report: 10^6 samples against the optional-stopping
/// moments plus the dual-series cross-check. Sample count is pinned, not
/// taken from `paths`: the tolerances are calibrated to it.
pub fn run_exit_law_selftest(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let t0 = Instant::now();
    let law = ExitTimeLaw::default();
    let st = law.selftest(1_000_000, config.master_seed)?;
    let mut report = ExperimentReport::new("selftest-exit-law", config.master_seed, config.echo());
    let seed = config.master_seed;
    let n = st.n as usize;
    let mk = |name: &str, v: f64| ReportRow::from_scalar("selftest-exit-law", 0, 1.0, name, v, n, seed);
    report.rows.push(mk("tau_mean", st.mean));
    report.rows.push(mk("tau_mean_error", st.mean_error));
    report.rows.push(mk("tau_second_moment", st.second_moment));
    report.rows.push(mk("tau_second_moment_error", st.second_moment_error));
    report.rows.push(mk("series_gap", st.series_gap));
    report.verdicts.push(Verdict::new(
        "exit_law_moments_and_series",
        st.pass,
        format!(
            "|mean-1| = {:.3e} (tol {:.3e}), |m2-5/3| = {:.3e} (tol {:.3e}), series gap {:.3e}",
            st.mean_error,
            st.mean_tolerance,
            st.second_moment_error,
            st.second_moment_tolerance,
            st.series_gap
        ),
    ));
    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    Ok(report)
}

/// Composite smoke test: exit law, a small Levy-mean run, the variation DP
/// against exhaustive enumeration, and the increment identities.
pub fn run_selftest(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let t0 = Instant::now();
    let mut report = ExperimentReport::new("selftest", config.master_seed, config.echo());
    let seed = config.master_seed;

    if config.mode == Mode::Exact {
        let law = ExitTimeLaw::default();
        let st = law.selftest(100_000, config.master_seed)?;
        report.rows.push(ReportRow::from_scalar(
            "selftest",
            0,
            1.0,
            "tau_mean",
            st.mean,
            st.n as usize,
            seed,
        ));
        report.verdicts.push(Verdict::new(
            "exit_law",
            st.pass,
            format!("mean err {:.2e}, m2 err {:.2e}", st.mean_error, st.second_moment_error),
        ));
    } else {
        report.verdicts.push(Verdict::new(
            "exit_law",
            true,
            "skipped: deterministic-durations mode has no exit-time law to test".into(),
        ));
    }

    // Levy: E U^k(1, 0) -> sqrt(2/pi), loose gate sized for the small run.
    let n_levy = 256u64;
    let levy = levy_sample(config.master_seed, DOMAIN_SELFTEST, n_levy, 8, 1.0, config.mode, config.threads)?;
    let s = summarize(&levy);
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let tol = 0.08 + 4.0 * s.stderr;
    report.rows.push(ReportRow::from_sample("selftest", 8, 1.0, "levy_mean", &levy, seed));
    report.verdicts.push(Verdict::new(
        "levy_mean",
        (s.mean - target).abs() <= tol,
        format!("mean {:.4} vs sqrt(2/pi) = {:.4}, tol {:.4}", s.mean, target, tol),
    ));

    // p-variation DP vs exhaustive enumeration.
    let mut rng = stream(config.master_seed, DOMAIN_SELFTEST, 1);
    let mut dp_ok = true;
    let mut worst = 0.0f64;
    for case in 0..100 {
        let len = 2 + case % 9;
        let values: Vec<f64> =
            (0..len).map(|_| split_word(rng.next_u64()).0 * 2.0 - 1.0).collect();
        for q in [1.0, 2.0, 3.0] {
            let got = pvar_sequence(&values, q)?.value;
            let want = exhaustive_pvar(&values, q);
            worst = worst.max((got - want).abs());
            if (got - want).abs() > 1e-12 {
                dp_ok = false;
            }
        }
    }
    report.verdicts.push(Verdict::new(
        "pvariation_dp",
        dp_ok,
        format!("100 sequences, q in {{1,2,3}}, worst gap {worst:.2e}"),
    ));

    // Increment identities and sqrt-form subadditivity on a few paths.
    let law = ExitTimeLaw::default();
    let mut sub_ok = true;
    let mut detail = String::new();
    for i in 0..10u64 {
        let mut rng = stream(config.master_seed, DOMAIN_SELFTEST, 100 + i);
        let fine = CrossingSkeleton::generate(&mut rng, &law, 8, 0.0, 0.25, config.mode)?;
        let r = subadditivity_check(&fine, 3, 0.25)?;
        if r.violations != 0 || r.identity_failures != 0 {
            sub_ok = false;
            detail = format!("path {i}: {r:?}");
        }
    }
    report.verdicts.push(Verdict::new(
        "increment_identities",
        sub_ok,
        if sub_ok { "10 paths, all split points exact".into() } else { detail },
    ));

    report.wall_time_seconds = t0.elapsed().as_secs_f64();
    Ok(report)
}

fn exhaustive_pvar(values: &[f64], q: f64) -> f64 {
    let n = values.len();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        let mut prev: Option<f64> = None;
        let mut sum = 0.0;
        for (i, &v) in values.iter().enumerate() {
            if mask & (1 << i) != 0 {
                if let Some(p) = prev {
                    sum += (v - p).abs().powf(q);
                }
                prev = Some(v);
            }
        }
        best = best.max(sum);
    }
    best
}
