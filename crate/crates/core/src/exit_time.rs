//! Law of the first exit time of standard Brownian motion from [-1, 1].
//!
//! These are the step durations of the embedded walk: a level-k step lasts
//! h^2 * tau with h = 2^{-k} and tau the unit-interval exit time. The CDF has
//! two classical series, each fast on one side:
//!
//! small t:  P(tau <= t) = 2 * sum_{n>=0} (-1)^n erfc((2n+1)/sqrt(2t))
//! large t:  P(tau <= t) = 1 - sum_{n>=0} (-1)^n (4/((2n+1)pi)) e^{-(2n+1)^2 pi^2 t / 8}
//!
//! Both alternate with decreasing terms, so truncation error is bounded by the
//! first omitted term. Sampling inverts the CDF through a precomputed quantile
//! table; the innermost sampling path evaluates the table's cubic Hermite
//! interpolant only (its error against the Newton-refined quantile is below
//! 1e-9, far under Monte Carlo resolution), while `quantile` itself always
//! Newton-refines and the extreme tails invert the dominant series term
//! directly.

use crate::error::{Error, Result};
use crate::rng::split_word;
use rand_chacha::rand_core::RngCore;

/// E[tau] for the unit interval (optional stopping on B^2 - t).
pub const MEAN: f64 = 1.0;
/// E[tau^2] (optional stopping on B^4 - 6tB^2 + 3t^2).
pub const SECOND_MOMENT: f64 = 5.0 / 3.0;
/// Var(tau).
pub const VARIANCE: f64 = 2.0 / 3.0;

const PI: f64 = std::f64::consts::PI;
const DEFAULT_TOLERANCE: f64 = 1e-12;
const DEFAULT_CROSSOVER: f64 = 0.45;
const DEFAULT_TABLE_SIZE: usize = 4096;
/// Below/above these, `quantile` inverts the dominant series term directly.
const TAIL_LO: f64 = 1e-4;
const TAIL_HI: f64 = 1.0 - 1e-4;
/// Inside this band the sampler trusts the Hermite interpolant as-is.
const FAST_LO: f64 = 0.01;
const FAST_HI: f64 = 0.99;

#[derive(Debug, Clone)]
pub struct ExitTimeLaw {
    truncation_tolerance: f64,
    series_crossover: f64,
    /// Quantile knots on a uniform u-grid over [TAIL_LO, TAIL_HI].
    knot_t: Vec<f64>,
    /// dt/du = 1/pdf(t) at the knots.
    knot_d: Vec<f64>,
    u_lo: f64,
    u_step_inv: f64,
}

impl Default for ExitTimeLaw {
    fn default() -> Self {
        Self::new(DEFAULT_TOLERANCE, DEFAULT_CROSSOVER, DEFAULT_TABLE_SIZE)
    }
}

impl ExitTimeLaw {
    pub fn new(truncation_tolerance: f64, series_crossover: f64, table_size: usize) -> Self {
        assert!(truncation_tolerance > 0.0 && series_crossover > 0.0 && table_size >= 16);
        let mut law = ExitTimeLaw {
            truncation_tolerance,
            series_crossover,
            knot_t: Vec::new(),
            knot_d: Vec::new(),
            u_lo: TAIL_LO,
            u_step_inv: 0.0,
        };
        law.build_table(table_size);
        law
    }

    pub fn truncation_tolerance(&self) -> f64 {
        self.truncation_tolerance
    }

    pub fn series_crossover(&self) -> f64 {
        self.series_crossover
    }

    /// P(tau <= t) to within the truncation tolerance.
    pub fn cdf(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("exit_time_cdf needs t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(if t < self.series_crossover { self.cdf_small_time(t) } else { self.cdf_large_time(t) })
    }

    /// Density of tau at t > 0.
    pub fn pdf(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("exit time pdf needs t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(if t < self.series_crossover {
            self.cdf_pdf_small(t).1
        } else {
            self.cdf_pdf_large(t).1
        })
    }

    /// Reflection series, accurate for small t. Exposed for validation.
    pub fn cdf_small_time(&self, t: f64) -> f64 {
        let inv = 1.0 / (2.0 * t).sqrt();
        let mut sum = 0.0;
        let mut sign = 1.0;
        let mut n = 0u32;
        loop {
            let term = 2.0 * libm::erfc((2 * n + 1) as f64 * inv);
            sum += sign * term;
            if term < self.truncation_tolerance || n > 64 {
                break;
            }
            sign = -sign;
            n += 1;
        }
        sum.clamp(0.0, 1.0)
    }

    /// Spectral series, accurate for large t. Exposed for validation.
    pub fn cdf_large_time(&self, t: f64) -> f64 {
        // e^{-(2n+1)^2 c} via the chain E_n = E_{n-1} * (B^8)^n since
        // (2n+1)^2 - (2n-1)^2 = 8n: two multiplies per term, one exp total.
        let b = (-PI * PI * t / 8.0).exp();
        let b8 = {
            let b2 = b * b;
            let b4 = b2 * b2;
            b4 * b4
        };
        let mut e = b;
        let mut d = 1.0;
        let mut sum = 0.0;
        let mut sign = 1.0;
        let mut n = 0u32;
        loop {
            let term = 4.0 / ((2 * n + 1) as f64 * PI) * e;
            sum += sign * term;
            if term < self.truncation_tolerance || n > 64 {
                break;
            }
            sign = -sign;
            n += 1;
            d *= b8;
            e *= d;
        }
        (1.0 - sum).clamp(0.0, 1.0)
    }

    /// CDF and PDF together, sharing the series terms (Newton steps need both).
    pub fn cdf_pdf(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (0.0, 0.0);
        }
        if t < self.series_crossover {
            self.cdf_pdf_small(t)
        } else {
            self.cdf_pdf_large(t)
        }
    }

    fn cdf_pdf_small(&self, t: f64) -> (f64, f64) {
        let inv_sqrt_2t = 1.0 / (2.0 * t).sqrt();
        // pdf = sqrt(2/(pi t^3)) sum (-1)^n (2n+1) e^{-(2n+1)^2/(2t)}
        let a = (-1.0 / (2.0 * t)).exp();
        let a8 = {
            let a2 = a * a;
            let a4 = a2 * a2;
            a4 * a4
        };
        let pdf_scale = (2.0 / (PI * t * t * t)).sqrt();
        let mut e = a;
        let mut d = 1.0;
        let mut cdf = 0.0;
        let mut pdf = 0.0;
        let mut sign = 1.0;
        let mut n = 0u32;
        loop {
            let m = (2 * n + 1) as f64;
            let cdf_term = 2.0 * libm::erfc(m * inv_sqrt_2t);
            cdf += sign * cdf_term;
            pdf += sign * m * e;
            if cdf_term < self.truncation_tolerance && m * e * pdf_scale < self.truncation_tolerance
            {
                break;
            }
            if n > 64 {
                break;
            }
            sign = -sign;
            n += 1;
            d *= a8;
            e *= d;
        }
        (cdf.clamp(0.0, 1.0), (pdf * pdf_scale).max(0.0))
    }

    fn cdf_pdf_large(&self, t: f64) -> (f64, f64) {
        let b = (-PI * PI * t / 8.0).exp();
        let b8 = {
            let b2 = b * b;
            let b4 = b2 * b2;
            b4 * b4
        };
        let mut e = b;
        let mut d = 1.0;
        let mut tail = 0.0;
        let mut pdf = 0.0;
        let mut sign = 1.0;
        let mut n = 0u32;
        loop {
            let m = (2 * n + 1) as f64;
            tail += sign * 4.0 / (m * PI) * e;
            pdf += sign * m * PI / 2.0 * e;
            if 4.0 / (m * PI) * e < self.truncation_tolerance && m * PI / 2.0 * e < self.truncation_tolerance
            {
                break;
            }
            if n > 64 {
                break;
            }
            sign = -sign;
            n += 1;
            d *= b8;
            e *= d;
        }
        ((1.0 - tail).clamp(0.0, 1.0), pdf.max(0.0))
    }

    /// Inverse CDF. Table lookup plus two Newton refinements in the bulk,
    /// direct inversion of the dominant series term in the extreme tails.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0 && u < 1.0) {
            return Err(Error::domain(format!("quantile needs u in [0,1), got {u}")));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(self.quantile_refined(u))
    }

    fn quantile_refined(&self, u: f64) -> f64 {
        let t0 = if u < TAIL_LO {
            // 2 erfc(z) = u with z = 1/sqrt(2t); later terms are O(e^{-8 z^2}).
            let z = invert_erfc(u / 2.0);
            1.0 / (2.0 * z * z)
        } else if u > TAIL_HI {
            // 1 - u ~ (4/pi) e^{-pi^2 t / 8}.
            -(8.0 / (PI * PI)) * ((1.0 - u) * PI / 4.0).ln()
        } else {
            self.hermite(u)
        };
        let mut t = t0;
        for _ in 0..2 {
            let (c, p) = self.cdf_pdf(t);
            if p <= 0.0 {
                break;
            }
            let step = (c - u) / p;
            let next = t - step;
            if next > 0.0 && next.is_finite() {
                t = next;
            }
        }
        t
    }

    /// Sampler fast path: Hermite interpolation alone in the bulk where its
    /// error is negligible, refined quantile outside.
    #[inline]
    fn sample_u(&self, u: f64) -> f64 {
        if (FAST_LO..=FAST_HI).contains(&u) {
            self.hermite(u)
        } else {
            self.quantile_refined(u)
        }
    }

    #[inline]
    fn hermite(&self, u: f64) -> f64 {
        let s = (u - self.u_lo) * self.u_step_inv;
        let i = (s as usize).min(self.knot_t.len() - 2);
        let x = s - i as f64;
        let (t0, t1) = (self.knot_t[i], self.knot_t[i + 1]);
        let du = 1.0 / self.u_step_inv;
        let (d0, d1) = (self.knot_d[i] * du, self.knot_d[i + 1] * du);
        let x2 = x * x;
        let x3 = x2 * x;
        let h00 = 2.0 * x3 - 3.0 * x2 + 1.0;
        let h10 = x3 - 2.0 * x2 + x;
        let h01 = -2.0 * x3 + 3.0 * x2;
        let h11 = x3 - x2;
        h00 * t0 + h10 * d0 + h01 * t1 + h11 * d1
    }

    /// Exit duration for barrier half-width h: h^2 * tau by Brownian scaling.
    /// Consumes exactly one generator word; the duration uses bits independent
    /// of the word's sign bit, so duration and exit side are independent.
    #[inline]
    pub fn sample_exit_time<R: RngCore>(&self, rng: &mut R, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::precondition(format!("barrier half-width must be > 0, got {h}")));
        }
        Ok(self.duration_from_word(rng.next_u64(), h))
    }

    /// Duration from one pre-drawn generator word (shared with the sign draw
    /// during skeleton generation).
    #[inline]
    pub fn duration_from_word(&self, word: u64, h: f64) -> f64 {
        let (u, _) = split_word(word);
        h * h * self.sample_u(u)
    }

    /// Runs the moment and dual-series checks on n samples.
    pub fn selftest(&self, n: u64, seed: u64) -> Result<ExitLawSelfTest> {
        if n < 10_000 {
            return Err(Error::precondition(format!(
                "selftest needs at least 10^4 samples, got {n}"
            )));
        }
        let mut rng = crate::rng::stream(seed, crate::rng::DOMAIN_SELFTEST, 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut sum_q = 0.0;
        for _ in 0..n {
            let tau = self.duration_from_word(rng.next_u64(), 1.0);
            sum += tau;
            let sq = tau * tau;
            sum_sq += sq;
            sum_q += sq * sq;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let m2 = sum_sq / nf;
        let mean_tol = 4.0 * VARIANCE.sqrt() / nf.sqrt();
        let m2_var = (sum_q / nf - m2 * m2).max(0.0);
        let m2_tol = 4.0 * (m2_var / nf).sqrt();

        let mut series_gap: f64 = 0.0;
        for i in 0..100 {
            let t = 0.3 + 0.4 * i as f64 / 99.0;
            series_gap = series_gap.max((self.cdf_small_time(t) - self.cdf_large_time(t)).abs());
        }
        let series_tol = 10.0 * self.truncation_tolerance;

        let pass = (mean - MEAN).abs() <= mean_tol
            && (m2 - SECOND_MOMENT).abs() <= m2_tol
            && series_gap <= series_tol;
        Ok(ExitLawSelfTest {
            n,
            mean,
            mean_error: (mean - MEAN).abs(),
            mean_tolerance: mean_tol,
            second_moment: m2,
            second_moment_error: (m2 - SECOND_MOMENT).abs(),
            second_moment_tolerance: m2_tol,
            series_gap,
            series_tolerance: series_tol,
            pass,
        })
    }

    fn build_table(&mut self, table_size: usize) {
        let u_hi = TAIL_HI;
        let n = table_size;
        self.u_lo = TAIL_LO;
        self.u_step_inv = (n - 1) as f64 / (u_hi - self.u_lo);
        self.knot_t = Vec::with_capacity(n);
        self.knot_d = Vec::with_capacity(n);
        let mut t = {
            // First knot by bisection; the CDF is strictly increasing.
            let (mut lo, mut hi) = (1e-9, 100.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if self.cdf_pdf(mid).0 < self.u_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        for i in 0..n {
            let u = self.u_lo + i as f64 / self.u_step_inv;
            // Newton from the previous knot; grid steps are small.
            for _ in 0..40 {
                let (c, p) = self.cdf_pdf(t);
                if p <= 0.0 {
                    break;
                }
                let step = (c - u) / p;
                let next = t - step;
                if !(next > 0.0) || !next.is_finite() {
                    break;
                }
                t = next;
                if step.abs() < 1e-15 * t.max(1.0) {
                    break;
                }
            }
            let p = self.cdf_pdf(t).1;
            self.knot_t.push(t);
            self.knot_d.push(1.0 / p);
        }
    }
}

/// erfc(z) = y for y in (0, 0.5), bisection then Newton.
fn invert_erfc(y: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 30.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..3 {
        let f = libm::erfc(z) - y;
        let df = -2.0 / PI.sqrt() * (-z * z).exp();
        if df == 0.0 {
            break;
        }
        z -= f / df;
    }
    z
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ExitLawSelfTest {
    pub n: u64,
    pub mean: f64,
    pub mean_error: f64,
    pub mean_tolerance: f64,
    pub second_moment: f64,
    pub second_moment_error: f64,
    pub second_moment_tolerance: f64,
    pub series_gap: f64,
    pub series_tolerance: f64,
    pub pass: bool,
}
