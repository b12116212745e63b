//! Optimal covert design for a block of `N` channel uses.
//!
//! With the covertness budget met with equality the blocklength and the
//! Willie-side SNR are tied by `n f(γ_w) = 2ε²`, where
//! `f(γ) = ln(1+γ) - γ/(1+γ)` is the per-use divergence. The total SNR
//! `n γ_w = 2ε² / g(γ_w)` with `g(γ) = f(γ)/γ` is smallest where `g` peaks,
//! at the positive root `γ†` of
//! `h(γ) = 2γ² + γ - (1+γ)² ln(1+γ)`, and grows on both sides. For every
//! `ε ≤ ½` the peak sits below one channel use, so using the whole block
//! (`n* = N`) maximizes the total power `N P*`.
//!
//! [`optimize_design`] fixes `n* = N`, solves for `P*` (either by the
//! divergence budget or by the exact detector error), and then searches the
//! decoding error `δ` that maximizes `η = N R(δ) (1 - δ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{effective_throughput, rate_fbl, ChannelParams, CodingPoint};
use crate::detection::{kl_per_use, scan_total_error, total_error};
use crate::error::{Error, Result};
use crate::specfun::{Probability, Tolerance};

/// Which covertness requirement the power solver enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    /// `D(P0 || P1) <= 2ε²`
    Kl,
    /// `P_F + P_M >= 1 - ε`, evaluated with the exact chi-square error rates.
    Exact,
}

impl ConstraintMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintMode::Kl => "kl",
            ConstraintMode::Exact => "exact",
        }
    }
}

impl fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(ConstraintMode::Kl),
            "exact" => Ok(ConstraintMode::Exact),
            other => Err(Error::invalid(format!("unknown constraint mode `{other}`"))),
        }
    }
}

/// Covertness budget `ε ∈ (0, ½]` and how it is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovertConstraint {
    pub epsilon: f64,
    pub mode: ConstraintMode,
}

impl CovertConstraint {
    pub fn new(epsilon: f64, mode: ConstraintMode) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::invalid(format!(
                "epsilon = {epsilon} must lie in (0, 0.5]"
            )));
        }
        Ok(CovertConstraint { epsilon, mode })
    }

    pub fn kl(epsilon: f64) -> Result<Self> {
        CovertConstraint::new(epsilon, ConstraintMode::Kl)
    }

    pub fn exact(epsilon: f64) -> Result<Self> {
        CovertConstraint::new(epsilon, ConstraintMode::Exact)
    }

    /// The divergence budget `2ε²`.
    pub fn kl_budget(&self) -> f64 {
        2.0 * self.epsilon * self.epsilon
    }
}

/// How the exact-constraint solver located its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    /// Bisection on a guaranteed monotone root-finding bracket.
    Bisection,
    /// `ξ(P)` was not monotone on the scan; the largest feasible scan point
    /// was refined locally.
    ScanRefinement,
}

/// Output of a power solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSolution {
    pub power: f64,
    pub iterations: usize,
    /// KL mode: `|f(γ*) - 2ε²/N| / (2ε²/N)`. Exact mode: `ξ(P*) - (1 - ε)`.
    pub residual: f64,
    pub path: SolverPath,
}

/// Optimal operating point for one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub n_star: u64,
    pub p_star: f64,
    pub r_star: f64,
    pub delta_star: Probability,
    pub eta_star: f64,
    pub total_power: f64,
    pub iterations: usize,
    pub residual: f64,
    pub constraint: CovertConstraint,
    pub power_path: SolverPath,
}

impl DesignResult {
    pub fn eta_per_use(&self) -> f64 {
        self.eta_star / self.n_star as f64
    }
}

fn require_nonnegative(func: &'static str, gamma_w: f64) -> Result<()> {
    if !(gamma_w >= 0.0) || !gamma_w.is_finite() {
        return Err(Error::domain(
            func,
            format!("gamma_w = {gamma_w} must be finite and >= 0"),
        ));
    }
    Ok(())
}

/// Per-use divergence `f(γ) = ln(γ+1) - γ/(γ+1)`.
pub fn f_gamma(gamma_w: f64) -> Result<f64> {
    require_nonnegative("f_gamma", gamma_w)?;
    Ok(kl_per_use(gamma_w))
}

/// `g(γ) = ln(1+γ)/γ - 1/(1+γ)`, i.e. `f(γ)/γ`.
pub fn g_gamma(gamma_w: f64) -> Result<f64> {
    if !(gamma_w > 0.0) || !gamma_w.is_finite() {
        return Err(Error::domain(
            "g_gamma",
            format!("gamma_w = {gamma_w} must be positive"),
        ));
    }
    Ok(kl_per_use(gamma_w) / gamma_w)
}

/// `h(γ) = 2γ² + γ - (1+γ)² ln(1+γ)`; `g'(γ) = h(γ) / (γ²(1+γ)²)`.
pub fn h_gamma(gamma_w: f64) -> Result<f64> {
    require_nonnegative("h_gamma", gamma_w)?;
    let g = gamma_w;
    Ok(2.0 * g * g + g - (1.0 + g) * (1.0 + g) * g.ln_1p())
}

#[derive(Debug, Clone, Copy)]
struct Root {
    x: f64,
    iterations: usize,
}

/// Bisection for a sign change of `func` on `[lo, hi]`.
///
/// Stops once `accept(value)` holds at the midpoint or the bracket can no
/// longer be split in floating point.
fn bisect(
    routine: &'static str,
    func: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    max_iter: usize,
    accept: impl Fn(f64) -> bool,
) -> Result<Root> {
    let f_lo = func(lo);
    let f_hi = func(hi);
    if f_lo == 0.0 {
        return Ok(Root {
            x: lo,
            iterations: 0,
        });
    }
    if f_hi == 0.0 {
        return Ok(Root {
            x: hi,
            iterations: 0,
        });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::domain(
            routine,
            format!("no sign change on [{lo}, {hi}]"),
        ));
    }
    let lo_negative = f_lo < 0.0;
    let mut last = f64::NAN;
    for iter in 1..=max_iter {
        let mid = 0.5 * (lo + hi);
        let value = func(mid);
        last = value;
        if accept(value) || mid <= lo || mid >= hi {
            return Ok(Root {
                x: mid,
                iterations: iter,
            });
        }
        if (value < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence {
        routine,
        iterations: max_iter,
        residual: last.abs(),
    })
}

/// Positive root `γ†` of `h`, where `g` peaks (≈ 2.1626).
pub fn gamma_dagger(tol: &Tolerance) -> Result<f64> {
    tol.validate()?;
    let h = |g: f64| h_gamma(g).unwrap_or(f64::NAN);
    let abs_tol = tol.abs_tol;
    bisect("gamma_dagger", h, 1.0, 4.0, tol.max_iter, |v| {
        v.abs() <= abs_tol
    })
    .map(|r| r.x)
}

/// Solves `f(γ) = target` for `γ >= 0`; unique because `f` is increasing.
///
/// The bracket `[0, γ_hi]` starts at `γ_hi = 1` and doubles until
/// `f(γ_hi) > target`.
pub fn f_gamma_inverse(target: f64, tol: &Tolerance) -> Result<f64> {
    solve_f_inverse(target, tol).map(|r| r.x)
}

fn solve_f_inverse(target: f64, tol: &Tolerance) -> Result<Root> {
    tol.validate()?;
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::domain(
            "f_gamma_inverse",
            format!("target {target} must be positive"),
        ));
    }
    let mut hi = 1.0_f64;
    let mut doublings = 0;
    while kl_per_use(hi) <= target {
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 {
            return Err(Error::Convergence {
                routine: "f_gamma_inverse bracket",
                iterations: doublings,
                residual: target - kl_per_use(hi),
            });
        }
    }
    let rel = tol.rel_tol;
    let abs = tol.abs_tol;
    // relative residual when rel_tol is set, so tiny targets are still resolved
    let accept = move |v: f64| {
        if rel > 0.0 {
            v.abs() <= rel * target
        } else {
            v.abs() <= abs
        }
    };
    let mut root = bisect(
        "f_gamma_inverse",
        |g| kl_per_use(g) - target,
        0.0,
        hi,
        tol.max_iter,
        accept,
    )?;
    root.iterations += doublings;
    Ok(root)
}

/// Total SNR `n γ_w` when the divergence budget `2ε²` is spent over `n`
/// channel uses. `n` may be fractional.
pub fn constrained_total_snr(n: f64, epsilon: f64, tol: &Tolerance) -> Result<f64> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::domain(
            "constrained_total_snr",
            format!("n = {n} must be positive"),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::domain(
            "constrained_total_snr",
            "epsilon must be positive",
        ));
    }
    Ok(n * f_gamma_inverse(2.0 * epsilon * epsilon / n, tol)?)
}

fn check_design_inputs(n_max: u64, sigma_w2: f64, tol: &Tolerance) -> Result<()> {
    if n_max == 0 {
        return Err(Error::invalid("maximum blocklength must be at least 1"));
    }
    if !(sigma_w2 > 0.0) || !sigma_w2.is_finite() {
        return Err(Error::invalid(format!(
            "sigma_w2 = {sigma_w2} must be positive"
        )));
    }
    tol.validate()
}

/// Largest per-use power meeting `N f(P/σ_w²) = 2ε²`.
///
/// This is the divergence-budget solve; `constraint.mode` is not consulted.
pub fn solve_p_star_kl(
    n_max: u64,
    constraint: &CovertConstraint,
    sigma_w2: f64,
    tol: &Tolerance,
) -> Result<PowerSolution> {
    check_design_inputs(n_max, sigma_w2, tol)?;
    let target = constraint.kl_budget() / n_max as f64;
    let root = solve_f_inverse(target, tol)?;
    Ok(PowerSolution {
        power: sigma_w2 * root.x,
        iterations: root.iterations,
        residual: (kl_per_use(root.x) - target).abs() / target,
        path: SolverPath::Bisection,
    })
}

const EXACT_SCAN_POINTS: usize = 200;

/// Largest per-use power with `ξ(P, N) >= 1 - ε` under the exact detector.
///
/// `ξ` is scanned on 200 evenly spaced powers up to the first infeasible
/// doubling of the divergence-budget power. If the scan is monotone the
/// crossing is bisected; otherwise the last feasible scan point is refined
/// against its right neighbour and the path is reported as
/// [`SolverPath::ScanRefinement`]. The returned power is always on the
/// feasible side of the crossing.
pub fn solve_p_star_exact(
    n_max: u64,
    constraint: &CovertConstraint,
    sigma_w2: f64,
    tol: &Tolerance,
) -> Result<PowerSolution> {
    check_design_inputs(n_max, sigma_w2, tol)?;
    let floor = 1.0 - constraint.epsilon;
    let xi_at = |power: f64| -> Result<f64> {
        Ok(total_error(&ChannelParams::new(1.0, sigma_w2, power)?, n_max)?.xi)
    };

    let kl_power = solve_p_star_kl(n_max, constraint, sigma_w2, tol)?.power;
    let mut p_hi = 2.0 * kl_power;
    let mut doublings = 0;
    while xi_at(p_hi)? >= floor {
        p_hi *= 2.0;
        doublings += 1;
        if doublings >= tol.max_iter || !p_hi.is_finite() {
            return Err(Error::Convergence {
                routine: "solve_p_star_exact bracket",
                iterations: doublings,
                residual: xi_at(p_hi).unwrap_or(f64::NAN) - floor,
            });
        }
    }

    let scan = scan_total_error(sigma_w2, n_max, p_hi, EXACT_SCAN_POINTS)?;
    let feasible = |i: usize| scan.xi[i] >= floor;
    let (path, lo, hi) = if scan.is_nonincreasing(1e-13) {
        let first_bad = (0..scan.xi.len())
            .find(|&i| !feasible(i))
            .unwrap_or(scan.xi.len() - 1);
        let lo = if first_bad == 0 {
            0.0
        } else {
            scan.powers[first_bad - 1]
        };
        (SolverPath::Bisection, lo, scan.powers[first_bad])
    } else {
        let last_ok = (0..scan.xi.len()).rev().find(|&i| feasible(i));
        match last_ok {
            Some(i) if i + 1 < scan.xi.len() => (
                SolverPath::ScanRefinement,
                scan.powers[i],
                scan.powers[i + 1],
            ),
            // the top scan point is infeasible by construction
            Some(_) => unreachable!("p_hi was chosen infeasible"),
            None => (SolverPath::ScanRefinement, 0.0, scan.powers[0]),
        }
    };

    // bisection that keeps `lo` feasible; ξ(0) = 1 by continuity
    let (mut lo, mut hi) = (lo, hi);
    let mut iterations = doublings;
    loop {
        if hi - lo <= tol.rel_tol.max(f64::EPSILON) * hi {
            break;
        }
        if iterations >= doublings + tol.max_iter {
            return Err(Error::Convergence {
                routine: "solve_p_star_exact",
                iterations,
                residual: hi - lo,
            });
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if xi_at(mid)? >= floor {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    if lo == 0.0 {
        return Err(Error::Convergence {
            routine: "solve_p_star_exact",
            iterations,
            residual: hi,
        });
    }
    Ok(PowerSolution {
        power: lo,
        iterations,
        residual: xi_at(lo)? - floor,
        path,
    })
}

/// Effective throughput at decoding error `δ`, with negative rates clamped to
/// zero: `η(δ) = N max(R(δ), 0) (1 - δ)`.
pub fn throughput_at(params: &ChannelParams, n: u64, delta: f64) -> Result<f64> {
    let rate = rate_fbl(params, n, delta)?.max(0.0);
    Ok(n as f64 * rate * (1.0 - delta))
}

pub const DELTA_MIN: f64 = 1e-9;
pub const DELTA_MAX: f64 = 1.0 - 1e-9;
const DELTA_GRID_POINTS: usize = 64;

/// 64 log-spaced decoding errors spanning `[1e-9, 1 - 1e-9]`.
pub fn delta_grid() -> Vec<f64> {
    let (a, b) = (DELTA_MIN.log10(), DELTA_MAX.log10());
    let last = DELTA_GRID_POINTS - 1;
    (0..DELTA_GRID_POINTS)
        .map(|k| match k {
            0 => DELTA_MIN,
            k if k == last => DELTA_MAX,
            k => 10f64.powf(a + (b - a) * k as f64 / last as f64),
        })
        .collect()
}

/// Maximizer of a function on `[a, b]` by golden-section search.
/// Returns `(x, f(x), evaluations)`.
fn golden_section_max(
    func: impl Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<(f64, f64, usize)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = func(x1)?;
    let mut f2 = func(x2)?;
    let mut evals = 2;
    while b - a > x_tol && evals < max_iter {
        // ties move right-to-left so the smaller abscissa survives
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = func(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = func(x2)?;
        }
        evals += 1;
    }
    Ok(if f1 >= f2 {
        (x1, f1, evals)
    } else {
        (x2, f2, evals)
    })
}

/// `δ*` maximizing `η(δ)` at fixed `(N, P)`. Returns `(δ*, η*, evaluations)`.
pub fn optimize_delta(
    params: &ChannelParams,
    n: u64,
    tol: &Tolerance,
) -> Result<(f64, f64, usize)> {
    const DELTA_X_TOL: f64 = 1e-9;
    const TIE: f64 = 1e-12;
    let grid = delta_grid();
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &d) in grid.iter().enumerate() {
        let eta = throughput_at(params, n, d)?;
        if eta > best.1 * (1.0 + TIE) {
            best = (i, eta);
        }
    }
    let (i, grid_eta) = best;
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let (d, eta, evals) = golden_section_max(
        |d| throughput_at(params, n, d),
        lo,
        hi,
        DELTA_X_TOL,
        tol.max_iter.max(64),
    )?;
    let evals = evals + grid.len();
    let grid_d = grid[i];
    let beats_grid = eta > grid_eta * (1.0 + TIE) || (eta >= grid_eta && d < grid_d);
    Ok(if beats_grid {
        (d, eta, evals)
    } else {
        (grid_d, grid_eta, evals)
    })
}

/// Full design at maximum blocklength `N`: `n* = N`, `P*` from the
/// constraint, and the throughput-optimal `δ*` and `R*`.
pub fn optimize_design(
    n_max: u64,
    constraint: &CovertConstraint,
    sigma_b2: f64,
    sigma_w2: f64,
    tol: &Tolerance,
) -> Result<DesignResult> {
    if !(sigma_b2 > 0.0) || !sigma_b2.is_finite() {
        return Err(Error::invalid(format!(
            "sigma_b2 = {sigma_b2} must be positive"
        )));
    }
    let power = match constraint.mode {
        ConstraintMode::Kl => solve_p_star_kl(n_max, constraint, sigma_w2, tol)?,
        ConstraintMode::Exact => solve_p_star_exact(n_max, constraint, sigma_w2, tol)?,
    };
    let params = ChannelParams::new(sigma_b2, sigma_w2, power.power)?;
    let (delta, _, _) = optimize_delta(&params, n_max, tol)?;
    let rate = rate_fbl(&params, n_max, delta)?.max(0.0);
    let point = CodingPoint::new(n_max, rate, Probability::new(delta)?)?;
    Ok(DesignResult {
        n_star: n_max,
        p_star: power.power,
        r_star: rate,
        delta_star: point.delta,
        eta_star: effective_throughput(&point),
        total_power: n_max as f64 * power.power,
        iterations: power.iterations,
        residual: power.residual,
        constraint: *constraint,
        power_path: power.path,
    })
}
