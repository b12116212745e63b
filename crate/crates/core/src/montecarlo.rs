//! Monte Carlo check of the radiometer error rates.
//!
//! Each trial draws Willie's `n` observations under both hypotheses,
//! forms `T = (1/n) Σ |y_w[i]|²`, and compares it with the threshold.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Trials are cut into fixed batches of
//! [`BATCH_TRIALS`]; batch `b` uses ChaCha stream `b`, so results do not
//! depend on how batches are spread over threads. Batch partials are reduced
//! in batch order. Gaussians come from Box–Muller on pairs of 53-bit
//! uniforms.

use std::f64::consts::TAU;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::detection::radiometer_threshold;
use crate::error::{Error, Result};
use crate::specfun::Probability;

pub const BATCH_TRIALS: u64 = 2048;
pub const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    pub n: u64,
    pub params: ChannelParams,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::invalid("blocklength must be at least 1"));
        }
        self.params.validate()
    }
}

/// Empirical error rates with their binomial standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p_false_hat: Probability,
    pub p_miss_hat: Probability,
    pub stderr_false: f64,
    pub stderr_miss: f64,
    pub trials: u64,
}

/// Sample mean and variance of `T` under each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticMoments {
    pub mean_h0: f64,
    pub mean_h1: f64,
    pub var_h0: f64,
    pub var_h1: f64,
}

fn binomial_stderr(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

struct GaussianSource {
    rng: ChaCha8Rng,
}

impl GaussianSource {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        GaussianSource { rng }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One circularly-symmetric complex Gaussian with `E|z|² = variance`.
    #[inline]
    fn complex(&mut self, variance: f64) -> (f64, f64) {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt() * (0.5 * variance).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        (radius * c, radius * s)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    trials: u64,
    false_alarms: u64,
    misses: u64,
    sum_h0: f64,
    sum_sq_h0: f64,
    sum_h1: f64,
    sum_sq_h1: f64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.trials += other.trials;
        self.false_alarms += other.false_alarms;
        self.misses += other.misses;
        self.sum_h0 += other.sum_h0;
        self.sum_sq_h0 += other.sum_sq_h0;
        self.sum_h1 += other.sum_h1;
        self.sum_sq_h1 += other.sum_sq_h1;
        self
    }
}

fn run_batch(config: &McConfig, threshold: f64, batch: u64) -> Tally {
    let start = batch * BATCH_TRIALS;
    let count = BATCH_TRIALS.min(config.trials - start);
    let mut src = GaussianSource::new(config.seed, batch);
    let noise = config.params.sigma_w2;
    let signal = config.params.power;
    let inv_n = 1.0 / config.n as f64;
    let mut tally = Tally {
        trials: count,
        ..Tally::default()
    };
    for _ in 0..count {
        let mut energy_h0 = 0.0;
        let mut energy_h1 = 0.0;
        for _ in 0..config.n {
            let (re, im) = src.complex(noise);
            energy_h0 += re * re + im * im;

            let (xr, xi) = src.complex(signal);
            let (rr, ri) = src.complex(noise);
            let (yr, yi) = (xr + rr, xi + ri);
            energy_h1 += yr * yr + yi * yi;
        }
        let t0 = energy_h0 * inv_n;
        let t1 = energy_h1 * inv_n;
        if t0 >= threshold {
            tally.false_alarms += 1;
        }
        if t1 < threshold {
            tally.misses += 1;
        }
        tally.sum_h0 += t0;
        tally.sum_sq_h0 += t0 * t0;
        tally.sum_h1 += t1;
        tally.sum_sq_h1 += t1 * t1;
    }
    tally
}

fn run(config: &McConfig, threshold: f64) -> Tally {
    let batches = config.trials.div_ceil(BATCH_TRIALS);
    let partials: Vec<Tally> = (0..batches)
        .into_par_iter()
        .map(|b| run_batch(config, threshold, b))
        .collect();
    partials.into_iter().fold(Tally::default(), Tally::merge)
}

/// Empirical false-alarm and miss rates of the radiometer.
pub fn simulate_detection(config: &McConfig) -> Result<McEstimate> {
    config.validate()?;
    if !(config.params.power > 0.0) {
        return Err(Error::domain(
            "simulate_detection",
            "requires positive transmit power",
        ));
    }
    let threshold = radiometer_threshold(&config.params)?;
    let tally = run(config, threshold);
    let trials = tally.trials as f64;
    let p_false = tally.false_alarms as f64 / trials;
    let p_miss = tally.misses as f64 / trials;
    Ok(McEstimate {
        p_false_hat: Probability::new(p_false)?,
        p_miss_hat: Probability::new(p_miss)?,
        stderr_false: binomial_stderr(p_false, tally.trials),
        stderr_miss: binomial_stderr(p_miss, tally.trials),
        trials: tally.trials,
    })
}

/// Sample moments of `T` under both hypotheses; `P = 0` is allowed.
pub fn simulate_statistic_moments(config: &McConfig) -> Result<StatisticMoments> {
    config.validate()?;
    // the decision is irrelevant here
    let tally = run(config, f64::INFINITY);
    let m = tally.trials as f64;
    let variance = |sum: f64, sum_sq: f64| {
        if tally.trials < 2 {
            0.0
        } else {
            (sum_sq - sum * sum / m) / (m - 1.0)
        }
    };
    Ok(StatisticMoments {
        mean_h0: tally.sum_h0 / m,
        mean_h1: tally.sum_h1 / m,
        var_h0: variance(tally.sum_h0, tally.sum_sq_h0),
        var_h1: variance(tally.sum_h1, tally.sum_sq_h1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{false_positive_rate, miss_detection_rate};

    fn config(n: u64, power: f64, trials: u64, seed: u64) -> McConfig {
        McConfig {
            trials,
            seed,
            n,
            params: ChannelParams::new(1.0, 1.0, power).unwrap(),
        }
    }

    #[test]
    fn single_use_rates() {
        let est = simulate_detection(&config(1, 1.0, 100_000, 7)).unwrap();
        assert!((est.p_false_hat.value() - 0.25).abs() <= 3.0 * est.stderr_false);
        assert!((est.p_miss_hat.value() - 0.5).abs() <= 3.0 * est.stderr_miss);
        assert_eq!(est.trials, 100_000);
        let p = est.p_false_hat.value();
        assert_eq!(est.stderr_false, (p * (1.0 - p) / 1e5).sqrt());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let c = config(10, 0.3, 10_001, 99);
        let a = simulate_detection(&c).unwrap();
        let b = simulate_detection(&c).unwrap();
        assert_eq!(a, b);
        let other = simulate_detection(&McConfig { seed: 100, ..c }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = config(5, 0.8, 20_000, 3);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| simulate_statistic_moments(&c).unwrap());
        let b = four.install(|| simulate_statistic_moments(&c).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn statistic_means() {
        let m = simulate_statistic_moments(&config(64, 0.5, 10_000, 1)).unwrap();
        assert!((m.mean_h0 - 1.0).abs() < 0.02);
        assert!((m.mean_h1 - 1.5).abs() < 0.02);

        let m = simulate_statistic_moments(&config(64, 0.0, 10_000, 2)).unwrap();
        // both means estimate σ_w² with standard error σ_w²/√(n·trials)
        assert!((m.mean_h0 - m.mean_h1).abs() < 4.0 * (2.0 / (64.0 * 1e4f64)).sqrt());
    }

    #[test]
    fn statistic_variance_under_h0() {
        // T = σ²/(2n) · χ²(2n): Var T = (σ²/2n)² · 2·2n = σ⁴/n
        let m = simulate_statistic_moments(&config(100, 0.5, 40_000, 5)).unwrap();
        assert!((m.var_h0 / 0.01 - 1.0).abs() < 0.03, "{}", m.var_h0);
    }

    #[test]
    fn chi_square_mean() {
        let m = simulate_statistic_moments(&config(50, 1.0, 100_000, 11)).unwrap();
        // 2nT/σ_w² ~ χ²(2n)
        assert!((2.0 * 50.0 * m.mean_h0 / 100.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn agrees_with_analytic_rates() {
        for &(n, p) in &[(3u64, 0.5), (20, 0.2)] {
            let c = config(n, p, 50_000, 17);
            let est = simulate_detection(&c).unwrap();
            let pf = false_positive_rate(&c.params, n).unwrap().value();
            let pm = miss_detection_rate(&c.params, n).unwrap().value();
            assert!((est.p_false_hat.value() - pf).abs() <= 3.0 * (pf * (1.0 - pf) / 5e4).sqrt());
            assert!((est.p_miss_hat.value() - pm).abs() <= 3.0 * (pm * (1.0 - pm) / 5e4).sqrt());
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(simulate_detection(&config(1, 0.0, 10, 1)).is_err());
        assert!(simulate_detection(&config(1, 1.0, 0, 1)).is_err());
        assert!(simulate_statistic_moments(&config(0, 1.0, 10, 1)).is_err());
    }
}
