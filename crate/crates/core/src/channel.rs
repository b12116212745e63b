//! Finite-blocklength coding on the Alice → Bob link.
//!
//! Normal approximation of the maximal coding rate at blocklength `n` and
//! decoding error `δ`, its exact algebraic inverse, and the effective
//! throughput `η = n R (1 - δ)`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{q_func, q_inv, Probability};

/// Noise powers at Bob and Willie plus Alice's transmit power, all linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub sigma_b2: f64,
    pub sigma_w2: f64,
    pub power: f64,
}

impl ChannelParams {
    pub fn new(sigma_b2: f64, sigma_w2: f64, power: f64) -> Result<Self> {
        let params = ChannelParams {
            sigma_b2,
            sigma_w2,
            power,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_b2 > 0.0 && self.sigma_b2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma_b2 = {} must be positive",
                self.sigma_b2
            )));
        }
        if !(self.sigma_w2 > 0.0 && self.sigma_w2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma_w2 = {} must be positive",
                self.sigma_w2
            )));
        }
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(Error::invalid(format!(
                "power = {} must be non-negative",
                self.power
            )));
        }
        Ok(())
    }

    pub fn with_power(self, power: f64) -> Result<Self> {
        ChannelParams::new(self.sigma_b2, self.sigma_w2, power)
    }

    /// SNR at Bob, `P / σ_b²`.
    #[inline]
    pub fn gamma_b(&self) -> f64 {
        self.power / self.sigma_b2
    }

    /// SNR at Willie, `P / σ_w²`.
    #[inline]
    pub fn gamma_w(&self) -> f64 {
        self.power / self.sigma_w2
    }
}

/// One operating point of a code: blocklength, rate, and decoding error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingPoint {
    pub n: u64,
    pub rate: f64,
    pub delta: Probability,
}

impl CodingPoint {
    pub fn new(n: u64, rate: f64, delta: Probability) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("blocklength must be at least 1"));
        }
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "rate {rate} must be finite and non-negative"
            )));
        }
        Ok(CodingPoint { n, rate, delta })
    }
}

/// Dispersion factor `√(γ(γ+2)) / (γ+1)`, split so huge SNRs don't overflow.
fn dispersion_sqrt(gamma: f64) -> f64 {
    gamma.sqrt() * (gamma + 2.0).sqrt() / (gamma + 1.0)
}

fn check_blocklength(func: &'static str, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain(func, "blocklength must be at least 1"));
    }
    Ok(())
}

/// Normal-approximation coding rate in bits per channel use.
///
/// The value is returned raw and can be negative for short blocks or low
/// SNR; callers that need a physical rate clamp it themselves.
pub fn rate_fbl(params: &ChannelParams, n: u64, delta: f64) -> Result<f64> {
    check_blocklength("rate_fbl", n)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(
            "rate_fbl",
            format!("delta = {delta} must lie in (0, 1)"),
        ));
    }
    let gamma = params.gamma_b();
    if !(gamma > 0.0) {
        return Err(Error::domain("rate_fbl", "requires a positive SNR at Bob"));
    }
    let nf = n as f64;
    let capacity = gamma.ln_1p() / LN_2;
    let penalty = dispersion_sqrt(gamma) / nf.sqrt() * q_inv(delta)? / LN_2;
    Ok(capacity - penalty + nf.log2() / (2.0 * nf))
}

/// Decoding error at Bob for a given rate; the exact inverse of [`rate_fbl`].
///
/// Negative rates (the raw output of [`rate_fbl`] on short blocks) are
/// accepted so the two functions invert each other everywhere. With zero
/// SNR nothing can be carried: `δ = 1` for a positive rate and `δ = 0`
/// otherwise.
pub fn delta_fbl(params: &ChannelParams, n: u64, rate: f64) -> Result<Probability> {
    check_blocklength("delta_fbl", n)?;
    if !rate.is_finite() {
        return Err(Error::domain(
            "delta_fbl",
            format!("rate = {rate} must be finite"),
        ));
    }
    let gamma = params.gamma_b();
    if gamma == 0.0 {
        return Ok(if rate > 0.0 {
            Probability::ONE
        } else {
            Probability::ZERO
        });
    }
    let nf = n as f64;
    let margin = gamma.ln_1p() + nf.ln() / (2.0 * nf) - rate * LN_2;
    q_func(nf.sqrt() * margin / dispersion_sqrt(gamma))
}

/// Effective throughput `η = n R (1 - δ)` in bits per block.
pub fn effective_throughput(point: &CodingPoint) -> f64 {
    point.n as f64 * point.rate * (1.0 - point.delta.value())
}
