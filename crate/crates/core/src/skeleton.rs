//! The embedded dyadic walk.
//!
//! A level-k skeleton records the successive times the Brownian path moves by
//! exactly 2^{-k} from its last recorded value, the move directions, and the
//! walk values. Values are scaled integers in units of 2^{-k}: grid arithmetic
//! must be exact because coarsening and upcrossing counting compare grid
//! values for equality.
//!
//! Cumulative times are the primary representation. Coarsening then SELECTS
//! time values from the finer skeleton, so the coarse times are bit-for-bit a
//! subsequence of the fine times and nested coarsening is exactly idempotent;
//! re-summing durations would re-associate floating adds and break both.

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::exit_time::ExitTimeLaw;
use crate::rng::split_word;
use rand_chacha::rand_core::RngCore;
use std::io::{Read, Write};

const DUMP_MAGIC: &[u8; 4] = b"UXSK";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingSkeleton {
    level: u32,
    /// Start value in units of 2^{-level}.
    start_scaled: i64,
    /// times[i] is the completion time of step i+1; the implicit step 0 sits
    /// at time 0. Strictly increasing.
    times: Vec<f64>,
    /// Move directions, +1 or -1.
    signs: Vec<i8>,
    /// values[i] is the walk value after step i+1, scaled by 2^{-level}.
    values: Vec<i64>,
    /// Time up to which the skeleton is complete.
    horizon: f64,
}

/// One step delivered by the streaming generator.
#[derive(Debug, Clone, Copy)]
pub struct StreamStep {
    /// Completion time of the step (cumulative).
    pub time: f64,
    /// Walk value after the step, in units of 2^{-level}.
    pub value: i64,
    /// Move direction.
    pub sign: i8,
}

impl CrossingSkeleton {
    /// Generates a level-K skeleton from x0 up to (and one step past) horizon.
    pub fn generate<R: RngCore>(
        rng: &mut R,
        law: &ExitTimeLaw,
        level: u32,
        x0: f64,
        horizon: f64,
        mode: Mode,
    ) -> Result<Self> {
        let start_scaled = grid_aligned(x0, level)?;
        let mut times = Vec::new();
        let mut signs = Vec::new();
        let mut values = Vec::new();
        generate_streaming(rng, law, level, start_scaled, horizon, mode, |step| {
            times.push(step.time);
            signs.push(step.sign);
            values.push(step.value);
        })?;
        Ok(CrossingSkeleton { level, start_scaled, times, signs, values, horizon })
    }

    /// Builds a skeleton directly from parts; used by loading and tests.
    pub fn from_parts(
        level: u32,
        start_scaled: i64,
        times: Vec<f64>,
        signs: Vec<i8>,
        horizon: f64,
    ) -> Result<Self> {
        if level < 1 {
            return Err(Error::precondition("level must be >= 1"));
        }
        let mut values = Vec::with_capacity(signs.len());
        let mut v = start_scaled;
        for (i, &s) in signs.iter().enumerate() {
            if s != 1 && s != -1 {
                return Err(Error::Format(format!("sign {} at step {i} is not +-1", s)));
            }
            v += s as i64;
            values.push(v);
        }
        if times.len() != signs.len() {
            return Err(Error::Format("times/signs length mismatch".into()));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !(t > prev) {
                return Err(Error::Format(format!("times not strictly increasing at step {i}")));
            }
            prev = t;
        }
        Ok(CrossingSkeleton { level, start_scaled, times, signs, values, horizon })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn spacing(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn start_scaled(&self) -> i64 {
        self.start_scaled
    }

    pub fn start_value(&self) -> f64 {
        self.start_scaled as f64 * self.spacing()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Completion times T_1..T_len (cumulative, strictly increasing).
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Walk values after each step, in units of 2^{-level}.
    pub fn values_scaled(&self) -> &[i64] {
        &self.values
    }

    /// Step durations T_n - T_{n-1}, derived from the cumulative times.
    pub fn durations(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .map(|&t| {
                let d = t - prev;
                prev = t;
                d
            })
            .collect()
    }

    /// N^k(t): number of steps completed by time t.
    pub fn step_count_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain(format!(
                "query time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(self.times.partition_point(|&x| x <= t))
    }

    /// Walk value at time t (right-continuous step function), scaled.
    pub fn walk_value_scaled_at(&self, t: f64) -> Result<i64> {
        let n = self.step_count_at(t)?;
        Ok(if n == 0 { self.start_scaled } else { self.values[n - 1] })
    }

    /// Walk value at time t as a real number.
    pub fn walk_value_at(&self, t: f64) -> Result<f64> {
        Ok(self.walk_value_scaled_at(t)? as f64 * self.spacing())
    }

    /// Derives the level-k skeleton: emit a step whenever the running value
    /// first differs from the last emitted value by 2^{-k}. Emitted times are
    /// selected (not recomputed), hence bit-exact subsequences.
    pub fn coarsen(&self, k: u32) -> Result<CrossingSkeleton> {
        if k < 1 || k > self.level {
            return Err(Error::precondition(format!(
                "coarsen target {k} must be in [1, {}]",
                self.level
            )));
        }
        if k == self.level {
            return Ok(self.clone());
        }
        let shift = self.level - k;
        let step = 1i64 << shift;
        if self.start_scaled % step != 0 {
            return Err(Error::precondition(format!(
                "start value {} (scaled) not grid-aligned at level {k}",
                self.start_scaled
            )));
        }
        let mut last = self.start_scaled;
        let mut times = Vec::new();
        let mut signs = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            if v == last + step {
                times.push(self.times[i]);
                signs.push(1);
                values.push(v >> shift);
                last = v;
            } else if v == last - step {
                times.push(self.times[i]);
                signs.push(-1);
                values.push(v >> shift);
                last = v;
            }
        }
        Ok(CrossingSkeleton {
            level: k,
            start_scaled: self.start_scaled >> shift,
            times,
            signs,
            values,
            horizon: self.horizon,
        })
    }

    /// Restarts the skeleton after step n: steps n+1.. with times rebased to
    /// T_n, start value V_n, horizon reduced by T_n. Absolute grid values are
    /// preserved.
    pub fn shift_tail(&self, n: usize) -> Result<CrossingSkeleton> {
        if n > self.len() {
            return Err(Error::precondition(format!(
                "shift index {n} out of range 0..={}",
                self.len()
            )));
        }
        if n == 0 {
            return Ok(self.clone());
        }
        let base = self.times[n - 1];
        let start_scaled = self.values[n - 1];
        let times: Vec<f64> = self.times[n..].iter().map(|&t| t - base).collect();
        Ok(CrossingSkeleton {
            level: self.level,
            start_scaled,
            times,
            signs: self.signs[n..].to_vec(),
            values: self.values[n..].to_vec(),
            horizon: (self.horizon - base).max(0.0),
        })
    }

    /// Checks the structural invariants; used by tests and after loading.
    pub fn validate(&self) -> Result<()> {
        let mut prev_t = 0.0;
        let mut v = self.start_scaled;
        for i in 0..self.len() {
            if !(self.times[i] > prev_t) {
                return Err(Error::Format(format!("times not increasing at {i}")));
            }
            prev_t = self.times[i];
            let s = self.signs[i];
            if s != 1 && s != -1 {
                return Err(Error::Format(format!("bad sign at {i}")));
            }
            v += s as i64;
            if v != self.values[i] {
                return Err(Error::Format(format!("value mismatch at {i}")));
            }
        }
        Ok(())
    }

    /// Versioned little-endian debug dump: header (magic, version, level,
    /// start, horizon, count) then durations (f64) and signs (i8). Durations
    /// and signs round-trip exactly; cumulative times rebuilt from a dump can
    /// differ from the source skeleton by ulps, which is why in-memory
    /// pipelines never go through this format.
    pub fn dump<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&self.level.to_le_bytes())?;
        w.write_all(&self.start_scaled.to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for d in self.durations() {
            w.write_all(&d.to_le_bytes())?;
        }
        for &s in &self.signs {
            w.write_all(&[s as u8])?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<CrossingSkeleton> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != DUMP_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let level = read_u32(r)?;
        let start_scaled = read_i64(r)?;
        let horizon = read_f64(r)?;
        let count = read_u64(r)? as usize;
        let mut times = Vec::with_capacity(count);
        let mut t = 0.0;
        for _ in 0..count {
            t += read_f64(r)?;
            times.push(t);
        }
        let mut signs = Vec::with_capacity(count);
        for _ in 0..count {
            let mut b = [0u8; 1];
            r.read_exact(&mut b)?;
            signs.push(b[0] as i8);
        }
        CrossingSkeleton::from_parts(level, start_scaled, times, signs, horizon)
    }
}

/// Streaming generation: delivers each step to the consumer without storing
/// the sequence. One generator word per step: low bit is the move direction,
/// the rest the duration uniform, so exact and deterministic-duration modes
/// consume identical stream positions.
pub fn generate_streaming<R: RngCore, F: FnMut(StreamStep)>(
    rng: &mut R,
    law: &ExitTimeLaw,
    level: u32,
    start_scaled: i64,
    horizon: f64,
    mode: Mode,
    mut consumer: F,
) -> Result<(f64, u64)> {
    if level < 1 {
        return Err(Error::precondition("level must be >= 1"));
    }
    if !(horizon > 0.0) {
        return Err(Error::precondition(format!("horizon must be > 0, got {horizon}")));
    }
    let h = 0.5f64.powi(level as i32);
    let h2 = h * h;
    let mut t = 0.0;
    let mut v = start_scaled;
    let mut n: u64 = 0;
    loop {
        let word = rng.next_u64();
        let (_, sign) = split_word(word);
        let d = match mode {
            Mode::Exact => law.duration_from_word(word, h),
            Mode::DeterministicDurations => h2,
        };
        t += d;
        v += sign as i64;
        n += 1;
        consumer(StreamStep { time: t, value: v, sign });
        if t >= horizon {
            return Ok((t, n));
        }
    }
}

fn grid_aligned(x0: f64, level: u32) -> Result<i64> {
    let scaled = x0 * (1u64 << level.min(62)) as f64;
    if level > 62 || scaled.fract() != 0.0 || scaled.abs() > 9e15 {
        return Err(Error::precondition(format!(
            "start value {x0} is not grid-aligned at level {level}"
        )));
    }
    Ok(scaled as i64)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_i64<R: Read>(r: &mut R) -> Result<i64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(i64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
