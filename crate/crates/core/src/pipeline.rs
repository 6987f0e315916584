//! Streaming per-path engine: a single finest-level walk drives every
//! requested coarse level through an online coarsening cascade, and one
//! deviation sweep per coarse level consumes the emitted events without ever
//! materializing the fine skeleton. Statistics come out bit-identical to the
//! materialized route (coarsen + build fields + sup_deviation); the test
//! suite holds the two implementations to exact equality.

use crate::config::Mode;
use crate::deviation::DeviationStatistics;
use crate::error::{Error, Result};
use crate::exit_time::ExitTimeLaw;
use crate::grid::OffsetVec;
use crate::skeleton::generate_streaming;
use rand::RngCore;

/// One coarse step produced by the cascade. The time is the driving fine
/// step's time (level-k crossing times are a subset of finer ones).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeEmit {
    pub level: u32,
    /// New walk value in units of 2^{-level}.
    pub value: i64,
    pub sign: i8,
}

/// Tracks every level in [min_level, gen_level) against the generation-level
/// walk. Level L emits a step when the level-(L+1) walk moves two
/// level-(L+1) units away from the last level-L grid point.
#[derive(Debug, Clone)]
pub struct CoarseningCascade {
    gen_level: u32,
    /// anchors[i] = current value at level gen_level-1-i, in that level's
    /// own units.
    anchors: Vec<i64>,
}

impl CoarseningCascade {
    pub fn new(gen_level: u32, min_level: u32, start_scaled: i64) -> Result<Self> {
        if min_level < 1 || min_level > gen_level {
            return Err(Error::precondition(format!(
                "cascade levels [{min_level}, {gen_level}] invalid"
            )));
        }
        let span = gen_level - min_level;
        if start_scaled.trailing_zeros() < span && start_scaled != 0 {
            return Err(Error::precondition(format!(
                "start {start_scaled} not on the level-{min_level} grid"
            )));
        }
        let anchors = (1..=span).map(|d| start_scaled >> d).collect();
        Ok(CoarseningCascade { gen_level, anchors })
    }

    /// Feeds one generation-level step; appends emissions to out (cleared
    /// first), finest level first. The chain stops at the first level that
    /// does not move.
    pub fn advance(&mut self, value: i64, out: &mut Vec<CascadeEmit>) {
        out.clear();
        let mut child_value = value;
        for (i, anchor) in self.anchors.iter_mut().enumerate() {
            let d = child_value - 2 * *anchor;
            debug_assert!(d.abs() <= 2);
            if d == 2 {
                *anchor += 1;
            } else if d == -2 {
                *anchor -= 1;
            } else {
                break;
            }
            out.push(CascadeEmit {
                level: self.gen_level - 1 - i as u32,
                value: *anchor,
                sign: if d == 2 { 1 } else { -1 },
            });
            child_value = *anchor;
        }
    }
}

/// Streaming counterpart of deviation::sup_deviation for one coarse level
/// against one reference level, with checkpoints at several horizons.
#[derive(Debug, Clone)]
struct DeviationSweep {
    bump: i64,
    q: f64,
    diff: OffsetVec<i64>,
    counts: OffsetVec<u64>,
    max_abs_diff: i64,
    max_count: u64,
    touched: Vec<i64>,
    horizons: Vec<f64>,
    next: usize,
    snapshots: Vec<(f64, f64)>,
}

impl DeviationSweep {
    fn new(coarse_level: u32, ref_level: u32, horizons: &[f64]) -> Self {
        DeviationSweep {
            bump: 1i64 << (ref_level - coarse_level),
            q: 2.0 * 0.5f64.powi(ref_level as i32),
            diff: OffsetVec::new(),
            counts: OffsetVec::new(),
            max_abs_diff: 0,
            max_count: 0,
            touched: Vec::new(),
            horizons: horizons.to_vec(),
            next: 0,
            snapshots: Vec::with_capacity(horizons.len()),
        }
    }

    fn snapshot(&mut self) {
        self.snapshots
            .push((self.q * self.max_abs_diff as f64, self.q * self.max_count as f64));
    }

    /// Every field change at one instant arrives in a single call, so the
    /// sup never sees an artificial half-updated state. An upcrossing at the
    /// coarse level always coincides with one at the reference level.
    fn apply(&mut self, t: f64, ref_up: Option<i64>, coarse_up: Option<i64>) {
        while self.next < self.horizons.len() && t > self.horizons[self.next] {
            self.snapshot();
            self.next += 1;
        }
        self.touched.clear();
        if let Some(j) = ref_up {
            *self.diff.get_mut_grow(j) -= 1;
            let c = self.counts.get_mut_grow(j);
            *c += 1;
            self.max_count = self.max_count.max(*c);
            self.touched.push(j);
        }
        if let Some(cell) = coarse_up {
            let base = (cell - 1) * self.bump;
            for j in base + 1..=base + self.bump {
                *self.diff.get_mut_grow(j) += self.bump;
                self.touched.push(j);
            }
        }
        for &j in &self.touched {
            self.max_abs_diff = self.max_abs_diff.max(self.diff.get(j).unwrap().abs());
        }
    }

    fn finish(&mut self) {
        while self.next < self.horizons.len() {
            self.snapshot();
            self.next += 1;
        }
    }
}

/// Deviation statistics for one coarse level, one entry per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDeviations {
    pub level: u32,
    pub stats: Vec<DeviationStatistics>,
}

/// Runs one path started at the origin: generates at gen_level up to the
/// last horizon and returns, for every coarse level k, the deviation
/// statistics against reference level k + offset at every horizon.
#[allow(clippy::too_many_arguments)]
pub fn run_path_deviations<R: RngCore>(
    rng: &mut R,
    law: &ExitTimeLaw,
    gen_level: u32,
    levels: &[u32],
    offset: u32,
    horizons: &[f64],
    mode: Mode,
    log_base: f64,
) -> Result<Vec<LevelDeviations>> {
    if levels.is_empty() || horizons.is_empty() {
        return Err(Error::precondition("need at least one level and one horizon"));
    }
    for w in horizons.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::precondition("horizons must be strictly increasing"));
        }
    }
    if !(horizons[0] > 0.0) {
        return Err(Error::precondition("horizons must be positive"));
    }
    let min_level = *levels.iter().min().unwrap();
    for &k in levels {
        if k < 1 || k + offset > gen_level {
            return Err(Error::precondition(format!(
                "level {k} with offset {offset} exceeds generation level {gen_level}"
            )));
        }
    }
    let last_horizon = *horizons.last().unwrap();

    let mut sweeps: Vec<DeviationSweep> =
        levels.iter().map(|&k| DeviationSweep::new(k, k + offset, horizons)).collect();
    // watchers[L - min_level] lists (sweep, role) pairs interested in level-L
    // upcrossings; the generation level is watched separately since it never
    // appears among cascade emissions.
    let mut watchers: Vec<Vec<(usize, bool)>> =
        vec![Vec::new(); (gen_level - min_level) as usize + 1];
    let mut gen_watchers: Vec<(usize, bool)> = Vec::new();
    for (i, &k) in levels.iter().enumerate() {
        for (lvl, is_ref) in [(k + offset, true), (k, false)] {
            if lvl == gen_level {
                gen_watchers.push((i, is_ref));
            } else {
                watchers[(lvl - min_level) as usize].push((i, is_ref));
            }
        }
    }

    let mut cascade = CoarseningCascade::new(gen_level, min_level, 0)?;
    let mut emits: Vec<CascadeEmit> = Vec::new();
    let mut pending_ref: Vec<Option<i64>> = vec![None; sweeps.len()];
    let mut pending_coarse: Vec<Option<i64>> = vec![None; sweeps.len()];
    let mut dirty: Vec<usize> = Vec::new();

    generate_streaming(rng, law, gen_level, 0, last_horizon, mode, |step| {
        cascade.advance(step.value, &mut emits);
        if step.sign > 0 {
            for &(i, is_ref) in &gen_watchers {
                if pending_ref[i].is_none() && pending_coarse[i].is_none() {
                    dirty.push(i);
                }
                if is_ref {
                    pending_ref[i] = Some(step.value);
                } else {
                    pending_coarse[i] = Some(step.value);
                }
            }
            for e in &emits {
                if e.level < min_level {
                    break;
                }
                for &(i, is_ref) in &watchers[(e.level - min_level) as usize] {
                    if pending_ref[i].is_none() && pending_coarse[i].is_none() {
                        dirty.push(i);
                    }
                    if is_ref {
                        pending_ref[i] = Some(e.value);
                    } else {
                        pending_coarse[i] = Some(e.value);
                    }
                }
            }
        }
        for &i in &dirty {
            sweeps[i].apply(step.time, pending_ref[i].take(), pending_coarse[i].take());
        }
        dirty.clear();
    })?;

    let mut out = Vec::with_capacity(levels.len());
    for (i, sweep) in sweeps.iter_mut().enumerate() {
        sweep.finish();
        let stats = sweep
            .snapshots
            .iter()
            .zip(horizons)
            .map(|(&(d, ell_star), &t)| {
                DeviationStatistics::from_raw(levels[i], t, d, ell_star, log_base)
            })
            .collect();
        out.push(LevelDeviations { level: levels[i], stats });
    }
    Ok(out)
}

/// Streaming count of completed upcrossings of one cell for a path started
/// at the origin; 2 * 2^{-level} * count is the local-time estimator there.
pub fn count_upcrossings_at<R: RngCore>(
    rng: &mut R,
    law: &ExitTimeLaw,
    level: u32,
    cell: i64,
    horizon: f64,
    mode: Mode,
) -> Result<u64> {
    let mut n = 0u64;
    generate_streaming(rng, law, level, 0, horizon, mode, |step| {
        if step.sign > 0 && step.value == cell && step.time <= horizon {
            n += 1;
        }
    })?;
    Ok(n)
}
