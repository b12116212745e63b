//! Special-function kernel.
//!
//! Gaussian tail `Q`, its inverse, `ln Γ`, and the regularized incomplete
//! gamma pair. Everything is evaluated in double precision with fixed
//! algorithms so results are stable across platforms:
//!
//! * `ln Γ`: exact factorial products for small integers, otherwise the
//!   Stirling series after an upward shift to `x >= 10`.
//! * `P(a, x)` / `Q(a, x)`: power series for `x < a + 1`, Lentz continued
//!   fraction for the upper function otherwise. The prefactor
//!   `x^a e^{-x} / Γ(a)` is formed in log space, using a `log1p(t) - t`
//!   rearrangement for large `a` so it stays accurate near `x ≈ a`.
//!   From `a = 10⁷` on, Temme's uniform asymptotic expansion (two terms)
//!   replaces both, whose cost grows like `√a`.
//! * `Q(x)`: `½ Q(½, x²/2)`, i.e. the same incomplete-gamma machinery.
//! * `Q⁻¹(p)`: rational initial guess polished by Newton steps on `Q`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);
    pub const HALF: Probability = Probability(0.5);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::invalid(format!(
                "probability {value} outside [0, 1]"
            )))
        }
    }

    /// Clamps rounding spill (e.g. `1 + 1e-17`) back into `[0, 1]`.
    pub(crate) fn saturating(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        Probability(value.clamp(0.0, 1.0))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Stopping rule shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        let tol = Tolerance {
            abs_tol,
            rel_tol,
            max_iter,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.abs_tol) || !ok(self.rel_tol) {
            return Err(Error::invalid("tolerances must be finite and non-negative"));
        }
        if self.abs_tol == 0.0 && self.rel_tol == 0.0 {
            return Err(Error::invalid(
                "at least one of abs_tol, rel_tol must be positive",
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_iter: 200,
        }
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const EPS: f64 = f64::EPSILON;

/// Standard Gaussian upper-tail probability `Q(x) = Pr(Z > x)`.
pub fn q_func(x: f64) -> Result<Probability> {
    if !x.is_finite() {
        return Err(Error::domain("q_func", format!("non-finite argument {x}")));
    }
    let half_sq = 0.5 * x * x;
    let (lower, upper) = gamma_pair(0.5, half_sq)?;
    let q = if x >= 0.0 {
        0.5 * upper
    } else {
        0.5 + 0.5 * lower
    };
    Ok(Probability::saturating(q))
}

/// Inverse of [`q_func`]: the `x` with `Q(x) = p`.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(
            "q_inv",
            format!("probability {p} must lie strictly inside (0, 1)"),
        ));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    const MAX_NEWTON: usize = 50;

    // Q^{-1}(p) = Φ^{-1}(1 - p) = -Φ^{-1}(p)
    let mut x = -normal_quantile_guess(p);
    for _ in 0..MAX_NEWTON {
        let residual = q_func(x)?.value() - p;
        if residual.abs() <= 1e-15 * p.min(1.0 - p) {
            break;
        }
        let density = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
        if density == 0.0 {
            break;
        }
        // dQ/dx = -φ(x)
        let step = residual / density;
        x += step;
        if step.abs() <= 4.0 * EPS * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Rational approximation to the lower Gaussian quantile Φ⁻¹(p)
/// (P. J. Acklam), relative error about 1.15e-9.
fn normal_quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Natural log of Γ(x) for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(
            "ln_gamma",
            format!("argument {x} must be positive and finite"),
        ));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    // (x-1)! is exact in f64 up to 22!
    if x.fract() == 0.0 && x <= 23.0 {
        let mut fact = 1.0;
        let mut k = 2.0;
        while k < x {
            fact *= k;
            k += 1.0;
        }
        return fact.ln();
    }
    if x >= 10.0 {
        return (x - 0.5) * x.ln() - x + LN_SQRT_2PI + stirling_correction(x);
    }
    // Γ(x) = Γ(x + k) / (x (x+1) ... (x+k-1))
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < 10.0 {
        product *= shifted;
        shifted += 1.0;
    }
    (shifted - 0.5) * shifted.ln() - shifted + LN_SQRT_2PI + stirling_correction(shifted)
        - product.ln()
}

/// `ln Γ(x) - [(x - ½) ln x - x + ½ ln 2π]` for `x >= 10`.
fn stirling_correction(x: f64) -> f64 {
    const COEF: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in COEF.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// `ln(1 + t) - t` without cancellation for small `|t|`. Requires `t > -1`.
pub(crate) fn log1pmx(t: f64) -> f64 {
    if t.abs() >= 0.5 {
        return t.ln_1p() - t;
    }
    // ln(1+t) = 2 atanh(s), s = t / (2 + t); 2s - t = -t² / (2 + t)
    let s = t / (2.0 + t);
    let s2 = s * s;
    let mut power = s * s2;
    let mut series = 0.0;
    let mut k = 3.0;
    loop {
        let term = power / k;
        series += term;
        if term.abs() <= EPS * 0.25 * series.abs() {
            break;
        }
        power *= s2;
        k += 2.0;
    }
    -t * t / (2.0 + t) + 2.0 * series
}

/// Regularized lower incomplete gamma function `P(a, x) = γ(a, x) / Γ(a)`.
pub fn reg_gamma_lower(a: f64, x: f64) -> Result<Probability> {
    check_gamma_args("reg_gamma_lower", a, x)?;
    let (lower, _) = gamma_pair(a, x)?;
    Ok(Probability::saturating(lower))
}

/// Regularized upper incomplete gamma function `Q(a, x) = 1 - P(a, x)`,
/// computed directly so small upper tails keep full relative accuracy.
pub fn reg_gamma_upper(a: f64, x: f64) -> Result<Probability> {
    check_gamma_args("reg_gamma_upper", a, x)?;
    let (_, upper) = gamma_pair(a, x)?;
    Ok(Probability::saturating(upper))
}

fn check_gamma_args(func: &'static str, a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(
            func,
            format!("shape {a} must be positive and finite"),
        ));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(
            func,
            format!("argument {x} must be non-negative"),
        ));
    }
    Ok(())
}

/// `ln(x^a e^{-x} / Γ(a))`.
fn log_gamma_prefactor(a: f64, x: f64) -> f64 {
    if a >= 10.0 {
        // a ln x - x - ln Γ(a) = a·log1pmx((x - a)/a) + ½ ln(a / 2π) - stirling(a)
        let t = (x - a) / a;
        a * log1pmx(t) + 0.5 * a.ln() - LN_SQRT_2PI - stirling_correction(a)
    } else {
        a * x.ln() - x - ln_gamma_unchecked(a)
    }
}

fn gamma_iteration_cap(a: f64, x: f64) -> usize {
    1_000 + (50.0 * a.max(x).sqrt()) as usize
}

const TEMME_MIN_A: f64 = 1e7;

// Taylor coefficients in η of the first two Temme functions C₀, C₁.
const TEMME_C0: [f64; 26] = [
    -3.333_333_333_333_333e-1,
    8.333_333_333_333_333e-2,
    -1.481_481_481_481_481_5e-2,
    1.157_407_407_407_407_3e-3,
    3.527_336_860_670_194e-4,
    -1.787_551_440_329_218e-4,
    3.919_263_178_522_438e-5,
    -2.185_448_510_679_992e-6,
    -1.854_062_210_715_16e-6,
    8.296_711_340_953_087e-7,
    -1.766_595_273_682_607_8e-7,
    6.707_853_543_401_498e-9,
    1.026_180_978_424_030_9e-8,
    -4.382_036_018_453_353e-9,
    9.147_699_582_236_79e-10,
    -2.551_419_399_494_624_8e-11,
    -5.830_772_132_550_426e-11,
    2.436_194_802_066_741_5e-11,
    -5.027_669_280_114_175_5e-12,
    1.100_439_203_195_613_5e-13,
    3.371_763_262_400_985e-13,
    -1.392_388_722_418_162e-13,
    2.853_489_380_704_744_5e-14,
    -5.139_111_834_242_572e-16,
    -1.975_228_829_434_944_2e-15,
    8.099_521_156_704_561e-16,
];

const TEMME_C1: [f64; 24] = [
    -1.851_851_851_851_852e-3,
    -3.472_222_222_222_222e-3,
    2.645_502_645_502_645_4e-3,
    -9.902_263_374_485_596e-4,
    2.057_613_168_724_279_8e-4,
    -4.018_775_720_164_609e-7,
    -1.809_855_033_448_997_7e-5,
    7.649_160_916_081_11e-6,
    -1.612_090_089_456_344_6e-6,
    4.647_127_802_807_434e-9,
    1.378_633_446_915_721e-7,
    -5.752_545_603_517_705e-8,
    1.195_162_859_977_814_8e-8,
    -1.754_324_171_974_764_7e-11,
    -1.009_154_371_060_041_3e-9,
    4.162_792_991_842_583e-10,
    -8.563_907_026_492_98e-11,
    6.067_215_101_604_758e-14,
    7.162_498_964_811_485_6e-12,
    -2.933_186_643_771_437e-12,
    5.996_696_365_683_689e-13,
    -2.167_178_652_732_331_3e-16,
    -4.978_339_972_369_262e-14,
    2.029_162_882_371_342_5e-14,
];

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Uniform asymptotic expansion for large `a`:
/// `Q(a, x) = Q_N(η√a) + e^{-aη²/2} / √(2πa) · (C₀(η) + C₁(η)/a)` with
/// `η²/2 = λ - 1 - ln λ`, `λ = x/a`, `sign η = sign(λ - 1)`.
fn temme_pair(a: f64, x: f64) -> Result<(f64, f64)> {
    let sigma = (x - a) / a;
    let eta = (-2.0 * log1pmx(sigma)).sqrt().copysign(sigma);
    let (c0, c1) = if eta.abs() <= 1.0 {
        (horner(&TEMME_C0, eta), horner(&TEMME_C1, eta))
    } else {
        let (s, e) = (1.0 / sigma, 1.0 / eta);
        (s - e, e * e * e - s * s * s - s * s - s / 12.0)
    };
    let y = eta * a.sqrt();
    let r = (-0.5 * y * y).exp() * FRAC_1_SQRT_2PI / a.sqrt() * (c0 + c1 / a);
    let upper = q_func(y)?.value() + r;
    let lower = q_func(-y)?.value() - r;
    Ok((lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0)))
}

/// Returns `(P(a, x), Q(a, x))`; arguments already validated.
fn gamma_pair(a: f64, x: f64) -> Result<(f64, f64)> {
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    if a >= TEMME_MIN_A {
        return temme_pair(a, x);
    }
    let log_pref = log_gamma_prefactor(a, x);
    let cap = gamma_iteration_cap(a, x);

    if x < a + 1.0 {
        // γ(a, x) = x^a e^{-x} Σ_k x^k / (a (a+1) ... (a+k))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        let mut converged = false;
        for _ in 0..cap {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term <= sum * EPS * 0.5 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                routine: "incomplete gamma series",
                iterations: cap,
                residual: term / sum,
            });
        }
        let lower = (log_pref + sum.ln()).exp().min(1.0);
        Ok((lower, 1.0 - lower))
    } else {
        // Lentz evaluation of Γ(a, x) e^{x} x^{-a}
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        let mut converged = false;
        let mut delta_last = f64::INFINITY;
        for i in 1..=cap {
            let fi = i as f64;
            let an = -fi * (fi - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            delta_last = delta;
            if (delta - 1.0).abs() <= EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                routine: "incomplete gamma continued fraction",
                iterations: cap,
                residual: (delta_last - 1.0).abs(),
            });
        }
        let upper = (log_pref + h.ln()).exp().min(1.0);
        Ok((1.0 - upper, upper))
    }
}
