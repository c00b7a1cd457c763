//! Privacy accounting and noise primitives.
//!
//! Accounting is done in zero-concentrated differential privacy (zCDP) with
//! budget ρ. Composition is additive: a search that makes `N` unit-sensitivity
//! counting queries, each noised with Gaussian standard deviation
//! `sqrt(N / (2 ρ))`, spends ρ/N per call and ρ in total.
//!
//! Two conversions to the (ε, δ)-DP view are provided:
//!
//! * [`epsilon_to_rho`] identifies a pure-DP budget with a zCDP budget
//!   one-to-one (ρ = ε). This is the convention used by the benchmark harness
//!   so that sweep axes labelled in ε carry over directly; it is deliberately
//!   kept as a single swappable function.
//! * [`rho_to_epsilon`] gives the approximate-DP parameter
//!   ε = ρ + 2·sqrt(ρ·ln(1/δ)) for a failure probability δ ∈ (0, 1).
//!
//! Throughout the crate `dp_delta` names the (ε, δ)-DP failure probability
//! and `precision` names the binary-search interval tolerance; the two are
//! never interchangeable.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::ScoreSet;

/// A privacy budget carrying both the zCDP and pure-DP views.
///
/// The two views are identified one-to-one (`rho == epsilon`); `dp_delta` is
/// only used when reporting the approximate-DP parameter via
/// [`PrivacyBudget::approx_dp_epsilon`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    rho: f64,
    epsilon: f64,
    dp_delta: f64,
}

impl PrivacyBudget {
    /// Budget from a pure-DP parameter ε > 0.
    pub fn from_epsilon(epsilon: f64, dp_delta: f64) -> Result<Self> {
        let rho = epsilon_to_rho(epsilon)?;
        check_dp_delta(dp_delta)?;
        Ok(PrivacyBudget {
            rho,
            epsilon,
            dp_delta,
        })
    }

    /// Budget from a zCDP parameter ρ > 0.
    pub fn from_rho(rho: f64, dp_delta: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::domain(format!("rho must be positive, got {rho}")));
        }
        check_dp_delta(dp_delta)?;
        Ok(PrivacyBudget {
            rho,
            epsilon: rho,
            dp_delta,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dp_delta(&self) -> f64 {
        self.dp_delta
    }

    /// The (ε, δ)-DP parameter implied by this budget at its `dp_delta`.
    pub fn approx_dp_epsilon(&self) -> f64 {
        // constructor invariants make the conversion infallible
        rho_to_epsilon(self.rho, self.dp_delta).expect("valid budget")
    }
}

fn check_dp_delta(dp_delta: f64) -> Result<()> {
    if !(dp_delta > 0.0 && dp_delta < 1.0) {
        return Err(Error::domain(format!(
            "dp_delta must lie in (0, 1), got {dp_delta}"
        )));
    }
    Ok(())
}

/// Convert a zCDP budget ρ to the (ε, δ)-DP parameter
/// ε = ρ + 2·sqrt(ρ·ln(1/dp_delta)).
///
/// Monotone increasing in ρ and decreasing in `dp_delta`. Natural logarithm.
pub fn rho_to_epsilon(rho: f64, dp_delta: f64) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!("rho must be positive, got {rho}")));
    }
    check_dp_delta(dp_delta)?;
    Ok(rho + 2.0 * (rho * (1.0 / dp_delta).ln()).sqrt())
}

/// Convert a pure-DP budget ε to a zCDP budget under the one-to-one
/// identification ρ = ε used by this crate's benchmarks.
pub fn epsilon_to_rho(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(epsilon)
}

/// Per-call Gaussian noise level for a total budget ρ split across `n_calls`
/// unit-sensitivity counting queries: sd = sqrt(n_calls / (2 ρ)).
pub fn per_call_noise_sd(rho: f64, n_calls: u32) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!("rho must be positive, got {rho}")));
    }
    if n_calls == 0 {
        return Err(Error::domain("n_calls must be at least 1"));
    }
    Ok((n_calls as f64 / (2.0 * rho)).sqrt())
}

/// Gaussian noise applied to each range count, with the number of calls the
/// budget was split across.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation of the per-call Gaussian noise.
    pub sd: f64,
    /// Number of noisy-count calls the budget is split across.
    pub calls_budgeted: u32,
}

impl NoiseSpec {
    /// Noise calibrated so `calls_budgeted` counts compose to ρ-zCDP.
    pub fn from_budget(rho: f64, calls_budgeted: u32) -> Result<Self> {
        Ok(NoiseSpec {
            sd: per_call_noise_sd(rho, calls_budgeted)?,
            calls_budgeted,
        })
    }

    /// Exact counting oracle (sd = 0). Test mode only: carries no privacy
    /// guarantee.
    pub fn noiseless(calls_budgeted: u32) -> Self {
        NoiseSpec {
            sd: 0.0,
            calls_budgeted,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sd == 0.0
    }
}

/// Count of scores in the closed interval `[lower, upper]` plus Gaussian
/// noise of standard deviation `noise.sd` drawn from `rng`.
///
/// With `noise.sd == 0` the count is exact (oracle mode). One call consumes
/// ρ/`calls_budgeted` of the budget the spec was derived from.
pub fn noisy_range_count<R: Rng + ?Sized>(
    scores: &ScoreSet,
    lower: f64,
    upper: f64,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<f64> {
    if !(lower <= upper) {
        return Err(Error::domain(format!(
            "range requires lower <= upper, got [{lower}, {upper}]"
        )));
    }
    let exact = scores.count_in(lower, upper) as f64;
    if noise.sd == 0.0 {
        return Ok(exact);
    }
    let gauss = Normal::new(0.0, noise.sd)
        .map_err(|e| Error::domain(format!("invalid noise sd {}: {e}", noise.sd)))?;
    Ok(exact + gauss.sample(rng))
}

/// Laplace noise with the given scale, via the inverse-CDF transform
/// x = -b·sign(u)·ln(1 - 2|u|) for u uniform on (-1/2, 1/2).
///
/// Used to privatize model sufficient statistics; deterministic given the
/// stream, so seeded model fits replay exactly.
pub fn laplace_noise<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    debug_assert!(scale > 0.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        // u = ±1/2 would map to ±infinity
        if u.abs() < 0.5 {
            return -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}
