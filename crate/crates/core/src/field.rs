//! Completed-upcrossing events per dyadic cell.
//!
//! Cell j at level k is the interval ((j-1)2^{-k}, j 2^{-k}] (left-open,
//! right-closed). An upcrossing of cell j completes when the walk steps from
//! (j-1)2^{-k} up to j 2^{-k}; the upcrossing estimator of local time at
//! (t, x) is 2 * 2^{-k} * (number of completions of cell j_k(x) by time t).

use crate::error::{Error, Result};
use crate::grid::OffsetVec;
use crate::skeleton::CrossingSkeleton;
use std::io::{Read, Write};

const DUMP_MAGIC: &[u8; 4] = b"UXUF";
const DUMP_VERSION: u32 = 1;

/// j_k(x): the unique integer with (j-1)2^{-k} < x <= j 2^{-k}.
/// Multiplying by 2^k is exact (power-of-two scaling), so grid points land on
/// their cell boundary exactly and belong to the cell ending at them.
#[inline]
pub fn level_index(x: f64, k: u32) -> i64 {
    debug_assert!(x.is_finite());
    (x * 2f64.powi(k as i32)).ceil() as i64
}

#[derive(Debug, Clone)]
pub struct UpcrossingField {
    level: u32,
    start_scaled: i64,
    horizon: f64,
    /// Completion times per cell index, each strictly increasing.
    cells: OffsetVec<Vec<f64>>,
    total_upcrossings: u64,
    total_steps: u64,
}

impl UpcrossingField {
    /// Single pass over the skeleton: every up-step with new value v completes
    /// an upcrossing of cell v at that step's time.
    pub fn build(s: &CrossingSkeleton) -> UpcrossingField {
        let mut cells: OffsetVec<Vec<f64>> = OffsetVec::new();
        let mut total = 0u64;
        for i in 0..s.len() {
            if s.signs()[i] > 0 {
                cells.get_mut_grow(s.values_scaled()[i]).push(s.times()[i]);
                total += 1;
            }
        }
        UpcrossingField {
            level: s.level(),
            start_scaled: s.start_scaled(),
            horizon: s.horizon(),
            cells,
            total_upcrossings: total,
            total_steps: s.len() as u64,
        }
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

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn total_upcrossings(&self) -> u64 {
        self.total_upcrossings
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    /// (index, times) over cells with at least one completion.
    fn populated(&self) -> impl Iterator<Item = (i64, &[f64])> {
        self.cells
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(j, v)| (j, v.as_slice()))
    }

    /// Smallest and largest cell index with at least one upcrossing, if any.
    pub fn cell_range(&self) -> Option<(i64, i64)> {
        let mut lo = None;
        let mut hi = None;
        for (j, times) in self.cells.iter() {
            if !times.is_empty() {
                if lo.is_none() {
                    lo = Some(j);
                }
                hi = Some(j);
            }
        }
        Some((lo?, hi?))
    }

    pub fn cell_times(&self, j: i64) -> &[f64] {
        self.cells.get(j).map(Vec::as_slice).unwrap_or(&[])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain(format!(
                "query time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// u(j 2^{-k}, k, t): completions of cell j by time t, inclusive.
    pub fn upcrossings_before(&self, j: i64, t: f64) -> Result<u64> {
        self.check_time(t)?;
        Ok(self.cell_times(j).partition_point(|&x| x <= t) as u64)
    }

    /// Left-limit count: completions strictly before t.
    pub fn upcrossings_strictly_before(&self, j: i64, t: f64) -> Result<u64> {
        self.check_time(t)?;
        Ok(self.cell_times(j).partition_point(|&x| x < t) as u64)
    }

    /// U^k(t, x) = 2 * 2^{-k} * u(j_k(x) 2^{-k}, k, t); zero off the visited
    /// range.
    pub fn u_value(&self, t: f64, x: f64) -> Result<f64> {
        let count = self.upcrossings_before(level_index(x, self.level), t)?;
        Ok(2.0 * self.spacing() * count as f64)
    }

    /// Versioned little-endian dump mirroring the skeleton debug format.
    pub fn dump<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&self.level.to_le_bytes())?;
        w.write_all(&self.start_scaled.to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&self.total_steps.to_le_bytes())?;
        let populated: Vec<(i64, &[f64])> = self.populated().collect();
        w.write_all(&(populated.len() as u64).to_le_bytes())?;
        for (j, times) in populated {
            w.write_all(&j.to_le_bytes())?;
            w.write_all(&(times.len() as u64).to_le_bytes())?;
            for &t in times {
                w.write_all(&t.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<UpcrossingField> {
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
        let total_steps = read_u64(r)?;
        let n_cells = read_u64(r)?;
        let mut cells: OffsetVec<Vec<f64>> = OffsetVec::new();
        let mut total = 0u64;
        for _ in 0..n_cells {
            let j = read_i64(r)?;
            let n = read_u64(r)? as usize;
            let mut times = Vec::with_capacity(n);
            let mut prev = f64::NEG_INFINITY;
            for _ in 0..n {
                let t = read_f64(r)?;
                if !(t > prev) {
                    return Err(Error::Format(format!("cell {j} times not increasing")));
                }
                prev = t;
                times.push(t);
            }
            total += n as u64;
            *cells.get_mut_grow(j) = times;
        }
        Ok(UpcrossingField {
            level,
            start_scaled,
            horizon,
            cells,
            total_upcrossings: total,
            total_steps,
        })
    }
}

/// Equality over logical content: unpopulated cells compare equal regardless
/// of how the backing storage grew.
impl PartialEq for UpcrossingField {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level
            && self.start_scaled == other.start_scaled
            && self.horizon == other.horizon
            && self.total_upcrossings == other.total_upcrossings
            && self.total_steps == other.total_steps
            && self.populated().eq(other.populated())
    }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;
    use crate::exit_time::ExitTimeLaw;
    use crate::rng::stream;

    fn skeleton_from(signs: Vec<i8>) -> CrossingSkeleton {
        let times: Vec<f64> = (1..=signs.len()).map(|i| i as f64).collect();
        let horizon = signs.len() as f64;
        CrossingSkeleton::from_parts(1, 0, times, signs, horizon).unwrap()
    }

    fn random_skeleton(seed: u64, level: u32, horizon: f64) -> CrossingSkeleton {
        let mut rng = stream(seed, 0, 0);
        CrossingSkeleton::generate(&mut rng, &ExitTimeLaw::default(), level, 0.0, horizon, Mode::Exact)
            .unwrap()
    }

    #[test]
    fn level_index_cases() {
        assert_eq!(level_index(0.0, 1), 0);
        assert_eq!(level_index(0.0, 7), 0);
        assert_eq!(level_index(0.3, 1), 1);
        assert_eq!(level_index(0.25, 2), 1);
        assert_eq!(level_index(0.2500001, 2), 2);
        assert_eq!(level_index(-0.25, 2), -1);
        assert_eq!(level_index(-0.2500001, 2), -1);
        assert_eq!(level_index(-0.75, 2), -3);
    }

    #[test]
    fn hand_counted_field() {
        // Values (x 2^{-k}) after start 0: [1, 0, 1, 2].
        let f = UpcrossingField::build(&skeleton_from(vec![1, -1, 1, 1]));
        assert_eq!(f.cell_times(1).len(), 2);
        assert_eq!(f.cell_times(2).len(), 1);
        assert_eq!(f.cell_times(0).len(), 0);
        assert_eq!(f.total_upcrossings(), 3);
        // Mid-path time: only the first upcrossing of cell 1 has completed.
        assert_eq!(f.upcrossings_before(1, 2.5).unwrap(), 1);
        // Completion exactly at the query time counts.
        assert_eq!(f.upcrossings_before(1, 3.0).unwrap(), 2);
        assert_eq!(f.upcrossings_strictly_before(1, 3.0).unwrap(), 1);
        assert_eq!(f.upcrossings_before(1, 0.0).unwrap(), 0);
        assert_eq!(f.upcrossings_before(1, f.horizon()).unwrap(), 2);
    }

    #[test]
    fn monotone_decreasing_walk_has_empty_field() {
        let f = UpcrossingField::build(&skeleton_from(vec![-1, -1, -1, -1]));
        assert_eq!(f.total_upcrossings(), 0);
        assert_eq!(f.cell_range(), None);
        assert_eq!(f.u_value(4.0, -0.5).unwrap(), 0.0);
    }

    #[test]
    fn u_value_normalization_and_off_range() {
        let f = UpcrossingField::build(&skeleton_from(vec![
            1, -1, 1, -1, 1, -1,
        ]));
        // Cell 1 upcrossed 3 times at level 1: U = 2 * (1/2) * 3 = 3.
        assert_eq!(f.u_value(6.0, 0.3).unwrap(), 3.0);
        assert_eq!(f.u_value(6.0, 0.5).unwrap(), 3.0);
        assert_eq!(f.u_value(6.0, 40.0).unwrap(), 0.0);
        assert_eq!(f.u_value(6.0, -40.0).unwrap(), 0.0);
        assert!(f.u_value(7.0, 0.0).is_err());
    }

    #[test]
    fn counts_match_naive_rescan() {
        let s = random_skeleton(12, 3, 2.0);
        let f = UpcrossingField::build(&s);
        let spacing = s.spacing();
        let (lo, hi) = f.cell_range().unwrap();
        for j in (lo - 1)..=(hi + 1) {
            for &t in
                &[0.0, 0.3, 0.7, 1.0, 1.5, 2.0, s.times()[s.len() / 2], s.times()[s.len() / 3]]
            {
                if t > f.horizon() {
                    continue;
                }
                let mut naive = 0u64;
                let mut prev = s.start_scaled();
                for i in 0..s.len() {
                    let v = s.values_scaled()[i];
                    if v == prev + 1 && v == j && s.times()[i] <= t {
                        naive += 1;
                    }
                    prev = v;
                }
                assert_eq!(f.upcrossings_before(j, t).unwrap(), naive, "j={j} t={t}");
                let expect_u = 2.0 * spacing * naive as f64;
                assert_eq!(f.u_value(t, j as f64 * spacing).unwrap(), expect_u);
            }
        }
    }

    #[test]
    fn up_down_counts_balance() {
        let s = random_skeleton(77, 4, 1.0);
        let f = UpcrossingField::build(&s);
        let mut down: std::collections::HashMap<i64, i64> = std::collections::HashMap::new();
        let mut total_down = 0u64;
        let mut prev = s.start_scaled();
        for i in 0..s.len() {
            let v = s.values_scaled()[i];
            if v < prev {
                *down.entry(prev).or_insert(0) += 1;
                total_down += 1;
            }
            prev = v;
        }
        assert_eq!(f.total_upcrossings() + total_down, s.len() as u64);
        let (lo, hi) = f.cell_range().unwrap();
        for j in lo..=hi {
            let ups = f.cell_times(j).len() as i64;
            let downs = *down.get(&j).unwrap_or(&0);
            assert!(
                (ups - downs).abs() <= 1,
                "cell {j}: {ups} ups vs {downs} downs"
            );
        }
    }

    #[test]
    fn monotone_in_t_and_constant_on_cells() {
        let s = random_skeleton(5, 3, 1.0);
        let f = UpcrossingField::build(&s);
        let x = 0.125;
        let mut prev = 0.0;
        for i in 0..=20 {
            let t = f.horizon() * i as f64 / 20.0;
            let u = f.u_value(t, x).unwrap();
            assert!(u >= prev);
            prev = u;
        }
        // Constant across each cell (left-open, right-closed).
        let j = level_index(x, 3);
        let (lo_x, hi_x) = ((j - 1) as f64 * 0.125, j as f64 * 0.125);
        let t = 0.8;
        let at_right = f.u_value(t, hi_x).unwrap();
        for frac in [1e-9, 0.25, 0.5, 0.75, 1.0 - 1e-12] {
            let xx = lo_x + (hi_x - lo_x) * frac;
            if xx > lo_x {
                assert_eq!(f.u_value(t, xx).unwrap(), at_right);
            }
        }
    }

    #[test]
    fn shift_additivity_is_exact() {
        for seed in 0..20 {
            let s = random_skeleton(100 + seed, 4, 0.5);
            let f = UpcrossingField::build(&s);
            let n = s.len() / 3 + (seed as usize % 3);
            let base = s.times()[n - 1];
            let tail = s.shift_tail(n).unwrap();
            let tf = UpcrossingField::build(&tail);
            let (lo, hi) = f.cell_range().unwrap();
            for j in lo..=hi {
                for frac in [0.0, 0.3, 0.9, 1.0] {
                    let t = base + (s.horizon() - base) * frac;
                    let full = f.upcrossings_before(j, t).unwrap();
                    let upto = f.upcrossings_before(j, base).unwrap();
                    let shifted = tf.upcrossings_before(j, t - base).unwrap();
                    assert_eq!(full - upto, shifted, "seed {seed} j {j} frac {frac}");
                }
            }
        }
    }

    #[test]
    fn coarsened_field_is_deterministic() {
        let s = random_skeleton(31, 6, 0.25);
        let a = UpcrossingField::build(&s.coarsen(3).unwrap());
        let b = UpcrossingField::build(&s.coarsen(3).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn dump_load_round_trip_exact() {
        let s = random_skeleton(64, 4, 0.4);
        let f = UpcrossingField::build(&s);
        let mut buf = Vec::new();
        f.dump(&mut buf).unwrap();
        let loaded = UpcrossingField::load(&mut buf.as_slice()).unwrap();
        assert_eq!(loaded, f);
        assert_eq!(loaded.level(), f.level());
        assert_eq!(loaded.horizon(), f.horizon());
        assert_eq!(loaded.total_upcrossings(), f.total_upcrossings());
        let (lo, hi) = f.cell_range().unwrap();
        for j in lo..=hi {
            assert_eq!(loaded.cell_times(j), f.cell_times(j));
        }
        let mut bad = buf.clone();
        bad[1] = b'z';
        assert!(UpcrossingField::load(&mut bad.as_slice()).is_err());
    }
}
