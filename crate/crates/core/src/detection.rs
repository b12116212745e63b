//! Willie's radiometer.
//!
//! Under equal priors the likelihood-ratio test reduces to comparing the
//! average received power `T = (1/n) Σ |y_w[i]|²` with a threshold `Γ`.
//! `2nT/σ²` is chi-square with `2n` degrees of freedom under either
//! hypothesis (with `σ² = σ_w²` or `P + σ_w²`), so both error rates are
//! regularized incomplete gamma values with shape `n`.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::specfun::{log1pmx, reg_gamma_lower, reg_gamma_upper, Probability};

/// Everything Willie's optimal detector achieves at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub threshold: f64,
    pub p_false: Probability,
    pub p_miss: Probability,
    /// `p_false + p_miss`
    pub xi: f64,
    pub kl: f64,
    /// `1 - √(kl / 2)`; negative (vacuous) once `kl > 2`.
    pub pinsker_bound: f64,
}

fn require_power(func: &'static str, params: &ChannelParams) -> Result<f64> {
    let gamma = params.gamma_w();
    if !(gamma > 0.0) {
        return Err(Error::domain(
            func,
            "threshold undefined at zero transmit power",
        ));
    }
    Ok(gamma)
}

fn require_blocklength(func: &'static str, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain(func, "blocklength must be at least 1"));
    }
    Ok(())
}

/// `ln(1+γ)/γ`, the threshold in units of `P + σ_w²`.
fn threshold_over_h1_power(gamma: f64) -> f64 {
    gamma.ln_1p() / gamma
}

/// Radiometer threshold `Γ = (P + σ_w²) σ_w² / P · ln((P + σ_w²)/σ_w²)`.
///
/// Always strictly between `σ_w²` and `P + σ_w²`; tends to `σ_w²` as
/// `P → 0`, where the expression itself is `0/0` and rejected.
pub fn radiometer_threshold(params: &ChannelParams) -> Result<f64> {
    let gamma = require_power("radiometer_threshold", params)?;
    Ok(params.sigma_w2 * (1.0 + gamma) * threshold_over_h1_power(gamma))
}

/// `P_F = Pr(T > Γ | H0) = 1 - P(n, nΓ/σ_w²)`.
pub fn false_positive_rate(params: &ChannelParams, n: u64) -> Result<Probability> {
    let gamma = require_power("false_positive_rate", params)?;
    require_blocklength("false_positive_rate", n)?;
    let nf = n as f64;
    reg_gamma_upper(nf, nf * (1.0 + gamma) * threshold_over_h1_power(gamma))
}

/// `P_M = Pr(T < Γ | H1) = P(n, nΓ/(P + σ_w²))`.
pub fn miss_detection_rate(params: &ChannelParams, n: u64) -> Result<Probability> {
    let gamma = require_power("miss_detection_rate", params)?;
    require_blocklength("miss_detection_rate", n)?;
    let nf = n as f64;
    reg_gamma_lower(nf, nf * threshold_over_h1_power(gamma))
}

/// Per-channel-use divergence `ln(1+γ) - γ/(1+γ)`, accurate down to `γ → 0`.
pub(crate) fn kl_per_use(gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    if gamma >= 1.0 {
        return gamma.ln_1p() - gamma / (1.0 + gamma);
    }
    // with u = γ/(1+γ) < ½: ln(1+γ) = -ln(1-u), so the value is -(ln(1-u) + u)
    let u = gamma / (1.0 + gamma);
    (-log1pmx(-u)).max(0.0)
}

/// `D(P0 || P1) = n [ln((P + σ_w²)/σ_w²) - P/(P + σ_w²)]`; zero iff `P = 0`.
pub fn kl_divergence(params: &ChannelParams, n: u64) -> f64 {
    n as f64 * kl_per_use(params.gamma_w())
}

/// Pinsker lower bound on the total error, `1 - √(D/2)`.
pub fn pinsker_lower_bound(kl: f64) -> f64 {
    1.0 - (kl.max(0.0) / 2.0).sqrt()
}

/// Full detector report: threshold, both error rates, their sum, the
/// divergence, and its Pinsker bound.
pub fn total_error(params: &ChannelParams, n: u64) -> Result<DetectionReport> {
    let threshold = radiometer_threshold(params)?;
    let p_false = false_positive_rate(params, n)?;
    let p_miss = miss_detection_rate(params, n)?;
    let kl = kl_divergence(params, n);
    Ok(DetectionReport {
        threshold,
        p_false,
        p_miss,
        xi: p_false.value() + p_miss.value(),
        kl,
        pinsker_bound: pinsker_lower_bound(kl),
    })
}

/// `ξ(P)` sampled on an evenly spaced power grid.
#[derive(Debug, Clone, PartialEq)]
pub struct XiScan {
    pub powers: Vec<f64>,
    pub xi: Vec<f64>,
}

impl XiScan {
    /// True when `ξ` never increases along the grid (up to `slack`).
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.xi.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// Samples `ξ` at `P = p_max · k / points` for `k = 1..=points`.
///
/// The exact-constraint power solver relies on `ξ` falling with `P`; this
/// scan lets it check that on the interval it searches instead of assuming it.
pub fn scan_total_error(sigma_w2: f64, n: u64, p_max: f64, points: usize) -> Result<XiScan> {
    if !(p_max > 0.0 && p_max.is_finite()) || points == 0 {
        return Err(Error::invalid(
            "scan needs a positive upper power and at least one point",
        ));
    }
    let mut powers = Vec::with_capacity(points);
    let mut xi = Vec::with_capacity(points);
    for k in 1..=points {
        let power = p_max * k as f64 / points as f64;
        let params = ChannelParams::new(1.0, sigma_w2, power)?;
        powers.push(power);
        xi.push(total_error(&params, n)?.xi);
    }
    Ok(XiScan { powers, xi })
}
