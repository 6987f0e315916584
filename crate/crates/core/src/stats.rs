//! Sample statistics shared by the experiments: moments, quantiles,
//! Kolmogorov-Smirnov distances, and a log-log slope fit.

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean, sample variance with n-1 in the denominator.
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Linear-interpolation quantile on the order statistics (the common
/// "type 7" convention: h = (n-1)p).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub n: usize,
}

pub fn summarize(xs: &[f64]) -> SampleSummary {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    SampleSummary {
        mean: mean(xs),
        stderr: stderr(xs),
        median: quantile(&sorted, 0.5),
        q10: quantile(&sorted, 0.1),
        q90: quantile(&sorted, 0.9),
        n: xs.len(),
    }
}

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 l^2},
/// switched to the dual theta expansion for small lambda where the
/// alternating series converges slowly.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let x = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for j in 0..10 {
            let m = (2 * j + 1) as f64;
            let term = (-m * m * x).exp();
            cdf += term;
            if term < 1e-18 * cdf {
                break;
            }
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut q = 0.0;
        let mut sign = 1.0;
        for j in 1..=32 {
            let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
            q += term;
            if term.abs() < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * q).clamp(0.0, 1.0)
    }
}

fn ks_p_value(d: f64, n_effective: f64) -> f64 {
    let sq = n_effective.sqrt();
    kolmogorov_survival(d * (sq + 0.12 + 0.11 / sq))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample KS distance with the finite-n p-value approximation
/// (effective size n_a n_b / (n_a + n_b)). Ties are handled by advancing
/// both samples through an equal value before measuring the gap.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::precondition("KS needs nonempty samples"));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xa.len() || j < xb.len() {
        let x = match (xa.get(i), xb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < xa.len() && xa[i] == x {
            i += 1;
        }
        while j < xb.len() && xb[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsTest { statistic: d, p_value: ks_p_value(d, n_eff) })
}

/// One-sample KS against a cdf.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsTest> {
    if sample.is_empty() {
        return Err(Error::precondition("KS needs a nonempty sample"));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        d = d.max((c - i as f64 / n).abs()).max(((i + 1) as f64 / n - c).abs());
    }
    Ok(KsTest { statistic: d, p_value: ks_p_value(d, n) })
}

/// cdf of |Z| for Z ~ N(0, sigma^2).
pub fn half_normal_cdf(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    libm::erf(x / (sigma * std::f64::consts::SQRT_2))
}

/// Least-squares slope of ln y against ln x.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::precondition("slope needs matched samples, length >= 2"));
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0) {
        return Err(Error::precondition("log-log fit needs positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{split_word, stream};
    use rand::RngCore;

    #[test]
    fn moments_of_small_samples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        // Sample variance 5/3, stderr = sqrt(5/12).
        assert!((stderr(&xs) - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(stderr(&[1.0]).is_nan());
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
        let s = summarize(&xs);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q10, 1.3);
        assert!((s.q90 - 3.7).abs() < 1e-15);
        assert_eq!(s.n, 4);
    }

    #[test]
    fn kolmogorov_survival_limits_and_crossover() {
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(0.2) > 1.0 - 1e-9);
        assert!(kolmogorov_survival(4.0) < 1e-12);
        // The two expansions must agree where either could be used.
        for i in 0..=50 {
            let l = 0.9 + 0.5 * i as f64 / 50.0;
            let small = {
                let x = std::f64::consts::PI * std::f64::consts::PI / (8.0 * l * l);
                let s: f64 = (0..12)
                    .map(|j| (-(2.0 * j as f64 + 1.0).powi(2) * x).exp())
                    .sum();
                1.0 - (2.0 * std::f64::consts::PI).sqrt() / l * s
            };
            let large = {
                let mut q = 0.0;
                let mut sign = 1.0;
                for j in 1..=64 {
                    q += sign * (-2.0 * (j * j) as f64 * l * l).exp();
                    sign = -sign;
                }
                2.0 * q
            };
            assert!((small - large).abs() < 1e-9, "lambda {l}");
            let got = kolmogorov_survival(l);
            assert!((got - large).abs() < 1e-9);
        }
        // Monotone decreasing.
        let mut prev = 1.0;
        for i in 1..=60 {
            let v = kolmogorov_survival(i as f64 * 0.05);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn ks_two_sample_hand_cases() {
        let t = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
        let t = ks_two_sample(&[1.0, 2.0, 3.0], &[10.0, 11.0]).unwrap();
        assert_eq!(t.statistic, 1.0);
        // 3 vs 2 points cannot be decisive (exact p would be 0.2), but six
        // fully separated points a side are.
        assert!(t.p_value > 0.05);
        let a: Vec<f64> = (1..=6).map(f64::from).collect();
        let b: Vec<f64> = (11..=16).map(f64::from).collect();
        let t = ks_two_sample(&a, &b).unwrap();
        assert_eq!(t.statistic, 1.0);
        assert!(t.p_value < 0.05);
        let t = ks_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap();
        assert!((t.statistic - 1.0 / 3.0).abs() < 1e-15);
        // Heavy ties.
        let t = ks_two_sample(&[1.0, 1.0, 1.0, 2.0], &[1.0, 2.0, 2.0, 2.0]).unwrap();
        assert!((t.statistic - 0.5).abs() < 1e-15);
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_calibration_on_seeded_gaussians() {
        // Box-Muller from the deterministic stream.
        let gauss = |seed: u64, n: usize, shift: f64| -> Vec<f64> {
            let mut rng = stream(seed, 2, 90);
            (0..n)
                .map(|_| {
                    let u1 = split_word(rng.next_u64()).0;
                    let u2 = split_word(rng.next_u64()).0;
                    shift
                        + (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect()
        };
        let a = gauss(1, 800, 0.0);
        let b = gauss(2, 800, 0.0);
        let same = ks_two_sample(&a, &b).unwrap();
        assert!(same.p_value > 0.01, "p = {}", same.p_value);
        let c = gauss(3, 800, 0.35);
        let shifted = ks_two_sample(&a, &c).unwrap();
        assert!(shifted.p_value < 0.001, "p = {}", shifted.p_value);

        let one = ks_one_sample(&a, |x| {
            0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
        })
        .unwrap();
        assert!(one.p_value > 0.01);
        let abs: Vec<f64> = a.iter().map(|x| x.abs()).collect();
        let half = ks_one_sample(&abs, |x| half_normal_cdf(x, 1.0)).unwrap();
        assert!(half.p_value > 0.01);
        let wrong = ks_one_sample(&abs, |x| half_normal_cdf(x, 1.3)).unwrap();
        assert!(wrong.p_value < 0.001);
    }

    #[test]
    fn half_normal_shape() {
        assert_eq!(half_normal_cdf(-1.0, 1.0), 0.0);
        assert_eq!(half_normal_cdf(0.0, 1.0), 0.0);
        assert!((half_normal_cdf(1e9, 1.0) - 1.0).abs() < 1e-15);
        // Median of |N(0,1)| is the 75th normal percentile, about 0.67449.
        assert!((half_normal_cdf(0.6744897501960817, 1.0) - 0.5).abs() < 1e-9);
        // Scaling: P(|N(0,s)| <= x) = P(|N(0,1)| <= x/s).
        for x in [0.3, 1.0, 2.5] {
            assert!(
                (half_normal_cdf(x, 2.0) - half_normal_cdf(x / 2.0, 1.0)).abs() < 1e-15
            );
        }
    }

    #[test]
    fn slope_recovers_power_law() {
        let xs: Vec<f64> = (1..=8).map(|i| 0.5f64.powi(i)).collect();
        for s in [-0.5, 0.37, 1.0, 2.0] {
            let ys: Vec<f64> = xs.iter().map(|x| 3.7 * x.powf(s)).collect();
            let got = log_log_slope(&xs, &ys).unwrap();
            assert!((got - s).abs() < 1e-10, "slope {s} got {got}");
        }
        assert!(log_log_slope(&[1.0], &[1.0]).is_err());
        assert!(log_log_slope(&[1.0, -2.0], &[1.0, 1.0]).is_err());
    }
}
