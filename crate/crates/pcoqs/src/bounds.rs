//! Closed-form guarantees for the noisy binary-search quantile.
//!
//! [`rank_error_bound`] bounds how far the released threshold's rank can sit
//! from the target rank, with probability at least 1 - β over the search's
//! Gaussian noise: a union bound over the N = ceil(log2(u)) noisy counts
//! combined with the Gaussian tail gives
//!
//!   τ = sqrt((N / ρ) · ln(2N / β)),   u = (upper - lower) / precision.
//!
//! [`coverage_bounds`] turns a rank error τ into a band around the nominal
//! level for exchangeable scores:
//!
//!   1 - α - τ/(n_cal+1)  <=  coverage  <=  1 - α + (τ+1)/(n_cal+1).
//!
//! These are report-time quantities; the mechanism itself never inflates its
//! quantile to compensate.

use crate::error::{Error, Result};
use crate::quantile::ceil_log2;

/// Inputs for evaluating both bounds in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Interval-to-precision ratio u = (upper - lower) / precision.
    pub u: f64,
    pub rho: f64,
    /// Failure probability of the rank-error bound.
    pub beta: f64,
    pub n_cal: usize,
    pub alpha: f64,
}

impl BoundInputs {
    pub fn new(u: f64, rho: f64, beta: f64, n_cal: usize, alpha: f64) -> Result<Self> {
        if !(u > 1.0) || !u.is_finite() {
            return Err(Error::domain(format!(
                "u must exceed 1 (otherwise the search makes no noisy calls), got {u}"
            )));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::domain(format!("rho must be positive, got {rho}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!("beta must lie in (0, 1), got {beta}")));
        }
        if n_cal == 0 {
            return Err(Error::domain("n_cal must be at least 1"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(BoundInputs {
            u,
            rho,
            beta,
            n_cal,
            alpha,
        })
    }

    pub fn rank_error(&self) -> f64 {
        rank_error_bound(self.u, self.rho, self.beta).expect("validated inputs")
    }

    pub fn coverage_band(&self) -> (f64, f64) {
        coverage_bounds(self.rank_error(), self.n_cal, self.alpha).expect("validated inputs")
    }
}

/// High-probability rank error τ = sqrt((N/ρ)·ln(2N/β)) with
/// N = ceil(log2(u)). Natural logarithm; monotone decreasing in ρ and β.
pub fn rank_error_bound(u: f64, rho: f64, beta: f64) -> Result<f64> {
    if !(u > 1.0) || !u.is_finite() {
        return Err(Error::domain(format!("u must exceed 1, got {u}")));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!("rho must be positive, got {rho}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    let n = ceil_log2(u) as f64;
    Ok(((n / rho) * (2.0 * n / beta).ln()).sqrt())
}

/// Coverage band (lower, upper) implied by a rank error τ:
/// lower = 1 - α - τ/(n_cal+1), upper = 1 - α + (τ+1)/(n_cal+1).
/// The width is exactly (2τ+1)/(n_cal+1).
pub fn coverage_bounds(tau: f64, n_cal: usize, alpha: f64) -> Result<(f64, f64)> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!(
            "tau must be nonnegative, got {tau}"
        )));
    }
    if n_cal == 0 {
        return Err(Error::domain("n_cal must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let denom = n_cal as f64 + 1.0;
    Ok((
        1.0 - alpha - tau / denom,
        1.0 - alpha + (tau + 1.0) / denom,
    ))
}
