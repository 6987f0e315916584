//! q-variation of finite sequences and of the step function x -> U^k(t, x)
//! on I_m = [-2^m, 2^m].
//!
//! For a step function, the sup over partitions of I_m equals the max over
//! subsequences of per-cell values: partition points inside one cell
//! contribute zero increments. Cells intersecting I_m are j in
//! [-2^(m+k), 2^(m+k)]; both endpoint cells meet I_m (the leftmost in the
//! single point -2^m).

use crate::error::{Error, Result};
use crate::field::UpcrossingField;
use crate::grid::OffsetVec;

#[derive(Debug, Clone, PartialEq)]
pub struct VariationResult {
    /// ||f||^q: max over subsequences of sum |increments|^q.
    pub value: f64,
    /// An attaining subsequence, as indices into the analyzed sequence
    /// (for pvar_field: the collapsed representative sequence).
    pub indices: Vec<usize>,
    /// Sequence values at those indices.
    pub values: Vec<f64>,
}

fn check_exponent(q: f64) -> Result<()> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::precondition(format!("exponent q = {q}, need q >= 1")));
    }
    Ok(())
}

/// Max over all subsequences i_0 < ... < i_r (free endpoints) of
/// sum |v[i_l] - v[i_{l-1}]|^q, by O(n^2) DP after pruning to local extrema.
/// Pruning is valid for q >= 1: merging same-direction increments never
/// decreases the sum ((x+y)^q >= x^q + y^q for x, y >= 0), so an optimal
/// subsequence alternates, and each alternation point can be pushed to an
/// extremum of the full sequence. DP ties break toward shorter subsequences.
pub fn pvar_sequence(values: &[f64], q: f64) -> Result<VariationResult> {
    check_exponent(q)?;
    if values.is_empty() {
        return Err(Error::precondition("empty sequence"));
    }

    // Drop repeated values, then interior points that are not strict extrema.
    // Sequence endpoints always stay: they are candidate subsequence ends.
    let mut kept: Vec<usize> = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        if kept.last().is_some_and(|&p| values[p] == values[i]) {
            continue;
        }
        while kept.len() >= 2 {
            let a = values[kept[kept.len() - 2]];
            let b = values[*kept.last().unwrap()];
            let c = values[i];
            if (b > a) == (c > b) {
                kept.pop();
            } else {
                break;
            }
        }
        kept.push(i);
    }

    let n = kept.len();
    let mut best = vec![0.0f64; n];
    let mut len = vec![1usize; n];
    let mut prev = vec![usize::MAX; n];
    for j in 1..n {
        for i in 0..j {
            let cand = best[i] + (values[kept[j]] - values[kept[i]]).abs().powf(q);
            let cand_len = len[i] + 1;
            if cand > best[j] || (cand == best[j] && cand_len < len[j]) {
                best[j] = cand;
                len[j] = cand_len;
                prev[j] = i;
            }
        }
    }

    let mut arg = 0;
    for j in 1..n {
        if best[j] > best[arg] || (best[j] == best[arg] && len[j] < len[arg]) {
            arg = j;
        }
    }
    let mut chain = Vec::with_capacity(len[arg]);
    let mut cur = arg;
    loop {
        chain.push(kept[cur]);
        if prev[cur] == usize::MAX {
            break;
        }
        cur = prev[cur];
    }
    chain.reverse();
    let vals = chain.iter().map(|&i| values[i]).collect();
    Ok(VariationResult { value: best[arg], indices: chain, values: vals })
}

/// Representative values of x -> U^k(t, x) over the cells meeting I_m,
/// ordered by x, with runs of zeros collapsed to a single entry (repeated
/// equal values never help the sup).
fn representative_values(f: &UpcrossingField, t: f64, m: u32) -> Result<Vec<f64>> {
    if m < 1 {
        return Err(Error::precondition(format!("interval index m = {m}, need m >= 1")));
    }
    let span = m + f.level();
    if span > 26 {
        return Err(Error::precondition(format!(
            "m + k = {span} would enumerate 2^{} cells",
            span + 1
        )));
    }
    let j_max = 1i64 << span;
    let scale = 2.0 * f.spacing();
    let mut out = Vec::new();
    for j in -j_max..=j_max {
        let v = scale * f.upcrossings_before(j, t)? as f64;
        if v == 0.0 && out.last() == Some(&0.0) {
            continue;
        }
        out.push(v);
    }
    Ok(out)
}

/// ||U^k(t)||^q_{I_m;q}.
pub fn pvar_field(f: &UpcrossingField, t: f64, q: f64, m: u32) -> Result<VariationResult> {
    check_exponent(q)?;
    pvar_sequence(&representative_values(f, t, m)?, q)
}

/// sup_{0 <= t <= T} ||U^k(t)||^q_{I_m;q}.
///
/// The field changes only when an upcrossing completes, and the variation is
/// not monotone in t (a later upcrossing can fill in a dip), so every event
/// state up to T must be inspected. Events outside the I_m cell range leave
/// the restricted sequence unchanged and are skipped.
pub fn sup_pvar_over_time(f: &UpcrossingField, q: f64, m: u32, horizon: f64) -> Result<f64> {
    check_exponent(q)?;
    if m < 1 {
        return Err(Error::precondition(format!("interval index m = {m}, need m >= 1")));
    }
    if !(0.0..=f.horizon()).contains(&horizon) {
        return Err(Error::domain(format!(
            "sup horizon {horizon} outside [0, {}]",
            f.horizon()
        )));
    }
    let span = m + f.level();
    if span > 26 {
        return Err(Error::precondition(format!(
            "m + k = {span} would enumerate 2^{} cells",
            span + 1
        )));
    }
    let j_max = 1i64 << span;
    let mut events: Vec<(f64, i64)> = Vec::new();
    for j in -j_max..=j_max {
        for &t in f.cell_times(j) {
            if t <= horizon {
                events.push((t, j));
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let scale = 2.0 * f.spacing();
    let mut counts: OffsetVec<u64> = OffsetVec::with_range(-j_max, j_max);
    let mut seq = Vec::new();
    let mut sup = 0.0f64;
    for (_, j) in events {
        *counts.get_mut_grow(j) += 1;
        seq.clear();
        for jj in -j_max..=j_max {
            let v = scale * counts.get(jj).copied().unwrap_or(0) as f64;
            if v == 0.0 && seq.last() == Some(&0.0) {
                continue;
            }
            seq.push(v);
        }
        sup = sup.max(pvar_sequence(&seq, q)?.value);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;
    use crate::exit_time::ExitTimeLaw;
    use crate::rng::stream;
    use crate::skeleton::CrossingSkeleton;

    fn exhaustive(values: &[f64], q: f64) -> f64 {
        let n = values.len();
        assert!(n <= 16);
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

    fn skeleton_from(level: u32, start: i64, signs: Vec<i8>) -> CrossingSkeleton {
        let times: Vec<f64> = (1..=signs.len()).map(|i| i as f64).collect();
        let horizon = signs.len() as f64;
        CrossingSkeleton::from_parts(level, start, times, signs, horizon).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let r = pvar_sequence(&[0.0, 1.0, 0.0], 2.0).unwrap();
        assert_eq!(r.value, 2.0);
        assert_eq!(r.indices, vec![0, 1, 2]);
        let r = pvar_sequence(&[0.0, 1.0, 2.0], 2.0).unwrap();
        assert_eq!(r.value, 4.0);
        assert_eq!(r.indices, vec![0, 2]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(pvar_sequence(&[], 2.0).is_err());
        assert!(pvar_sequence(&[0.0, 1.0], 0.5).is_err());
        assert!(pvar_sequence(&[0.0, 1.0], f64::NAN).is_err());
        let r = pvar_sequence(&[3.0], 2.0).unwrap();
        assert_eq!(r.value, 0.0);
        let r = pvar_sequence(&[2.0, 2.0, 2.0], 1.5).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.indices.len(), 1);
    }

    #[test]
    fn plateau_indices_map_to_input() {
        let r = pvar_sequence(&[0.0, 1.0, 1.0, 2.0], 2.0).unwrap();
        assert_eq!(r.value, 4.0);
        assert_eq!(r.indices, vec![0, 3]);
        assert_eq!(r.values, vec![0.0, 2.0]);
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let mut rng = stream(2024, 2, 5);
        for case in 0..200 {
            let n = 2 + (case % 11);
            let values: Vec<f64> = (0..n)
                .map(|_| crate::rng::split_word(rand::RngCore::next_u64(&mut rng)).0 * 4.0 - 2.0)
                .collect();
            for q in [1.0, 2.0, 3.0] {
                let got = pvar_sequence(&values, q).unwrap();
                let want = exhaustive(&values, q);
                assert!(
                    (got.value - want).abs() <= 1e-12,
                    "case {case} q {q}: {} vs {want}",
                    got.value
                );
                let replay: f64 = got
                    .values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs().powf(q))
                    .sum();
                assert!((replay - got.value).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn q1_is_total_variation_of_pruned_extrema() {
        let mut rng = stream(9, 2, 6);
        for _ in 0..50 {
            let values: Vec<f64> = (0..40)
                .map(|_| crate::rng::split_word(rand::RngCore::next_u64(&mut rng)).0)
                .collect();
            let r = pvar_sequence(&values, 1.0).unwrap();
            let tv: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            assert!((r.value - tv).abs() <= 1e-12 * tv.max(1.0));
        }
    }

    #[test]
    fn scaling_by_constant() {
        let values = [0.3, -0.8, 0.25, 1.7, 0.9, 0.95, -2.0];
        for q in [1.0, 2.0, 2.5, 3.0] {
            let base = pvar_sequence(&values, q).unwrap().value;
            for c in [0.5f64, 2.0, 7.3] {
                let scaled: Vec<f64> = values.iter().map(|v| c * v).collect();
                let got = pvar_sequence(&scaled, q).unwrap().value;
                let want = c.powf(q) * base;
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn field_at_time_zero_is_zero() {
        let s = skeleton_from(2, 0, vec![1, -1, 1, 1]);
        let f = UpcrossingField::build(&s);
        assert_eq!(pvar_field(&f, 0.0, 3.0, 1).unwrap().value, 0.0);
        assert!(pvar_field(&f, s.horizon() + 1.0, 3.0, 1).is_err());
    }

    #[test]
    fn single_bump_interior_and_boundary() {
        // Three upcrossings of one cell: U = 2 * 2^{-2} * 3 = 1.5 there.
        let v: f64 = 1.5;
        let q = 2.0;
        let interior = UpcrossingField::build(&skeleton_from(2, 0, vec![1, -1, 1, -1, 1]));
        let r = pvar_field(&interior, 5.0, q, 1).unwrap();
        assert!((r.value - 2.0 * v.powf(q)).abs() <= 1e-12);
        // Bump in the last cell of I_1 (j = 2^{m+k} = 8): one-sided.
        let right = UpcrossingField::build(&skeleton_from(2, 7, vec![1, -1, 1, -1, 1]));
        let r = pvar_field(&right, 5.0, q, 1).unwrap();
        assert!((r.value - v.powf(q)).abs() <= 1e-12);
        // Bump in the first cell (j = -8): also one-sided.
        let left = UpcrossingField::build(&skeleton_from(2, -9, vec![1, -1, 1, -1, 1]));
        let r = pvar_field(&left, 5.0, q, 1).unwrap();
        assert!((r.value - v.powf(q)).abs() <= 1e-12);
        // One cell further out: outside I_1 entirely.
        let out = UpcrossingField::build(&skeleton_from(2, 8, vec![1, -1, 1, -1, 1]));
        assert_eq!(pvar_field(&out, 5.0, q, 1).unwrap().value, 0.0);
    }

    #[test]
    fn field_matches_exhaustive_on_representatives() {
        let mut rng = stream(55, 0, 3);
        let law = ExitTimeLaw::default();
        for trial in 0..10 {
            let s = CrossingSkeleton::generate(
                &mut rng,
                &law,
                1,
                0.0,
                0.4 + 0.1 * trial as f64,
                Mode::Exact,
            )
            .unwrap();
            let f = UpcrossingField::build(&s);
            let t = f.horizon() * 0.9;
            let reps = representative_values(&f, t, 1).unwrap();
            assert!(reps.len() <= 16);
            for q in [1.0, 2.0, 3.0] {
                let got = pvar_field(&f, t, q, 1).unwrap().value;
                assert!((got - exhaustive(&reps, q)).abs() <= 1e-12, "trial {trial} q {q}");
            }
        }
    }

    #[test]
    fn sup_over_time_trivial_cases() {
        let s = skeleton_from(2, 0, vec![1, -1, 1, 1]);
        let f = UpcrossingField::build(&s);
        // Before the first event (t=1) nothing has happened.
        assert_eq!(sup_pvar_over_time(&f, 2.0, 1, 0.5).unwrap(), 0.0);
        // Single event by t=1.5.
        let single = sup_pvar_over_time(&f, 2.0, 1, 1.5).unwrap();
        assert_eq!(single, pvar_field(&f, 1.0, 2.0, 1).unwrap().value);
        assert!(sup_pvar_over_time(&f, 2.0, 1, 100.0).is_err());
    }

    #[test]
    fn sup_over_time_matches_dense_grid_and_is_monotone() {
        let mut rng = stream(7, 0, 11);
        let law = ExitTimeLaw::default();
        let s =
            CrossingSkeleton::generate(&mut rng, &law, 3, 0.0, 1.0, Mode::Exact).unwrap();
        assert!(s.len() >= 30);
        let f = UpcrossingField::build(&s);
        let horizon = 1.0f64;
        let got = sup_pvar_over_time(&f, 2.0, 1, horizon).unwrap();
        // A grid finer than the smallest inter-event gap visits every state.
        let min_gap = s
            .durations()
            .iter()
            .fold(f64::INFINITY, |a, &d| a.min(d));
        let steps = (horizon / min_gap).ceil() as usize * 2;
        let mut dense = 0.0f64;
        for i in 0..=steps {
            let t = horizon * i as f64 / steps as f64;
            dense = dense.max(pvar_field(&f, t, 2.0, 1).unwrap().value);
        }
        assert_eq!(got, dense);
        let mut prev = 0.0;
        for i in 1..=8 {
            let cur = sup_pvar_over_time(&f, 2.0, 1, horizon * i as f64 / 8.0).unwrap();
            assert!(cur >= prev);
            prev = cur;
        }
    }

    #[test]
    fn variation_not_monotone_in_time() {
        // Counts (2,1,2) over three cells give values (1, .5, 1): the dip is
        // worth 1 + .25 + .25 + 1 = 2.5. One more upcrossing of the middle
        // cell fills the dip: (1,1,1) scores only 2.
        let s = skeleton_from(2, 0, vec![1, 1, 1, -1, 1, -1, -1, -1, 1, 1]);
        let f = UpcrossingField::build(&s);
        let early = pvar_field(&f, 9.0, 2.0, 1).unwrap().value;
        let late = pvar_field(&f, 10.0, 2.0, 1).unwrap().value;
        assert_eq!(early, 2.5);
        assert_eq!(late, 2.0);
        // The sup still reports the earlier peak.
        assert_eq!(sup_pvar_over_time(&f, 2.0, 1, 10.0).unwrap(), early);
    }
}
