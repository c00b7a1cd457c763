//! Quantile mechanisms over bounded score sets.
//!
//! Three ways to turn calibration scores into a threshold:
//!
//! * [`nonprivate_quantile`] — the r-th order statistic with
//!   r = ceil((1-α)(n+1)), the standard split-calibration choice.
//! * [`pcoqs_quantile`] — a noisy binary search over `[lower, upper]`. Each
//!   of the N = ceil(log2((upper-lower)/precision)) halving steps queries a
//!   Gaussian-noised count of scores below the midpoint, so the whole search
//!   is ρ-zCDP by composition.
//! * [`exponq_quantile`] — an exponential-mechanism baseline that discretizes
//!   the interval into bins and samples a bin edge with probability
//!   proportional to exp(ε·u/2), where the utility u penalizes the distance
//!   between the edge's rank and an inflated target rank.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::{noisy_range_count, NoiseSpec};
use crate::score::ScoreSet;

/// Which mechanism produced a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Nonprivate,
    Pcoqs,
    Exponq,
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mechanism::Nonprivate => write!(f, "nonprivate"),
            Mechanism::Pcoqs => write!(f, "pcoqs"),
            Mechanism::Exponq => write!(f, "exponq"),
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonprivate" => Ok(Mechanism::Nonprivate),
            "pcoqs" => Ok(Mechanism::Pcoqs),
            "exponq" => Ok(Mechanism::Exponq),
            other => Err(Error::domain(format!(
                "unknown method {other:?} (expected nonprivate, pcoqs or exponq)"
            ))),
        }
    }
}

/// A threshold plus the trace of how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileResult {
    /// The released threshold, always within the score bounds.
    pub threshold: f64,
    pub mechanism: Mechanism,
    /// r = min(n_cal, ceil((1-α)(n_cal+1))); for the bin-edge mechanism this
    /// is the inflated rank r̃ its utility targeted.
    pub target_rank: usize,
    /// Noisy-count calls made (0 for the other mechanisms).
    pub iterations_used: u32,
    /// Per-call Gaussian noise level (0 when noiseless or not applicable).
    pub noise_sd: f64,
}

/// Target order-statistic rank r = ceil((1-α)(n_cal+1)), clamped to n_cal.
///
/// For small n_cal and α the unclamped value can reach n_cal + 1, where no
/// order statistic exists; clamping to n_cal returns the maximum score, the
/// usual convention for split calibration.
pub fn target_rank(n_cal: usize, alpha: f64) -> Result<usize> {
    if n_cal == 0 {
        return Err(Error::domain("n_cal must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let raw = ((1.0 - alpha) * (n_cal as f64 + 1.0)).ceil() as usize;
    Ok(raw.min(n_cal).max(1))
}

/// Smallest N with 2^N >= u, i.e. ceil(log2(u)), floored at 0.
///
/// Computed by comparison rather than floating log2 so exact powers of two
/// (u = 256 -> 8) do not round up from representation error.
pub(crate) fn ceil_log2(u: f64) -> u32 {
    let mut n = 0u32;
    let mut pow = 1.0f64;
    while pow < u {
        pow *= 2.0;
        n += 1;
        if n > 2100 {
            break; // u <= f64::MAX guarantees termination well before this
        }
    }
    n
}

/// Number of halving steps needed to shrink `[lower, upper]` to at most
/// `precision`: the smallest N with (upper-lower)/2^N <= precision.
pub fn max_iterations(lower: f64, upper: f64, precision: f64) -> Result<u32> {
    if !lower.is_finite() || !upper.is_finite() || lower >= upper {
        return Err(Error::domain(format!(
            "interval requires lower < upper, got [{lower}, {upper}]"
        )));
    }
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(Error::domain(format!(
            "precision must be positive, got {precision}"
        )));
    }
    Ok(ceil_log2((upper - lower) / precision))
}

/// The r-th smallest score, r = [`target_rank`].
pub fn nonprivate_quantile(scores: &ScoreSet, alpha: f64) -> Result<QuantileResult> {
    let r = target_rank(scores.len(), alpha)?;
    Ok(QuantileResult {
        threshold: scores.values()[r - 1],
        mechanism: Mechanism::Nonprivate,
        target_rank: r,
        iterations_used: 0,
        noise_sd: 0.0,
    })
}

/// Knobs for the noisy binary search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    /// Interval tolerance terminating the search (distinct from any DP
    /// failure probability).
    pub precision: f64,
    /// When true the loop runs one extra halving step (N + 1 noisy calls,
    /// each noised at sqrt((N+1)/(2ρ)) so the total budget is unchanged).
    /// The default N-call loop makes the per-call budget split exact.
    pub inclusive_loop_bound: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            precision: 1e-10,
            inclusive_loop_bound: false,
        }
    }
}

/// Noisy binary search for the target-rank score under a total budget of
/// ρ-zCDP.
///
/// Runs exactly N = ceil(log2((upper-lower)/precision)) noisy-count calls
/// (the number its per-call noise was calibrated for), keeps the search
/// interval within the score bounds, and returns the midpoint of the final
/// interval. The returned threshold is clamped into `[lower, upper]`.
///
/// When the count says the target lies above the midpoint, the left endpoint
/// moves to the midpoint itself rather than stepping past it: on a
/// continuous domain any positive step can overshoot the target score and
/// push the final midpoint up to 1.5x the precision away from it, while
/// plain halving keeps the noiseless search within precision/2 of the exact
/// order statistic.
pub fn pcoqs_quantile<R: Rng + ?Sized>(
    scores: &ScoreSet,
    alpha: f64,
    precision: f64,
    rho: f64,
    rng: &mut R,
) -> Result<QuantileResult> {
    let params = SearchParams {
        precision,
        ..SearchParams::default()
    };
    pcoqs_quantile_with(scores, alpha, &params, Some(rho), rng)
}

/// Noiseless variant of the search: the counting oracle is exact, so the
/// result tracks [`nonprivate_quantile`] to within the precision. Test and
/// diagnostics mode only; carries no privacy guarantee.
pub fn pcoqs_quantile_noiseless(
    scores: &ScoreSet,
    alpha: f64,
    precision: f64,
) -> Result<QuantileResult> {
    let params = SearchParams {
        precision,
        ..SearchParams::default()
    };
    // the exact oracle draws nothing from the stream
    let mut rng = crate::rng::stream(0, 0);
    pcoqs_quantile_with(scores, alpha, &params, None, &mut rng)
}

/// Full-control entry point: `rho = None` selects the noiseless oracle.
pub fn pcoqs_quantile_with<R: Rng + ?Sized>(
    scores: &ScoreSet,
    alpha: f64,
    params: &SearchParams,
    rho: Option<f64>,
    rng: &mut R,
) -> Result<QuantileResult> {
    let r = target_rank(scores.len(), alpha)?;
    let halvings = max_iterations(scores.lower(), scores.upper(), params.precision)?;
    let calls = if params.inclusive_loop_bound {
        halvings + 1
    } else {
        halvings
    };
    let noise = match rho {
        Some(rho) if calls > 0 => NoiseSpec::from_budget(rho, calls)?,
        Some(rho) => {
            // zero-call search never touches the data; still validate rho
            NoiseSpec::from_budget(rho, 1)?;
            NoiseSpec::noiseless(0)
        }
        None => NoiseSpec::noiseless(calls),
    };

    let mut left = scores.lower();
    let mut right = scores.upper();
    let mut calls_made = 0u32;
    for _ in 0..calls {
        let mid = 0.5 * (left + right);
        let count = noisy_range_count(scores, scores.lower(), mid, &noise, rng)?;
        calls_made += 1;
        if count < r as f64 {
            left = mid;
        } else {
            right = mid;
        }
    }
    debug_assert_eq!(calls_made, calls, "budget split assumed {calls} calls");

    let threshold = (0.5 * (left + right)).clamp(scores.lower(), scores.upper());
    Ok(QuantileResult {
        threshold,
        mechanism: Mechanism::Pcoqs,
        target_rank: r,
        iterations_used: calls_made,
        noise_sd: noise.sd,
    })
}

/// Exponential-mechanism threshold over `n_bins` uniform bins.
///
/// Candidates are the bin upper edges; edge e gets utility
/// -(|#{s <= e} - r̃|) against the inflated rank
/// r̃ = min(n_cal, ceil((1-α+inflation)(n_cal+1))), and is sampled with
/// probability proportional to exp(ε·utility/2) (rank utility has
/// sensitivity 1). An inflation that pushes r̃ past n_cal is clamped, which
/// degenerates toward full-coverage thresholds rather than erroring.
pub fn exponq_quantile<R: Rng + ?Sized>(
    scores: &ScoreSet,
    alpha: f64,
    epsilon: f64,
    n_bins: usize,
    inflation: f64,
    rng: &mut R,
) -> Result<QuantileResult> {
    let setup = ExponqSetup::new(scores, alpha, epsilon, n_bins, inflation)?;
    let edge = setup.draw(rng);
    Ok(QuantileResult {
        threshold: setup.edges[edge],
        mechanism: Mechanism::Exponq,
        target_rank: setup.target_rank,
        iterations_used: 0,
        noise_sd: 0.0,
    })
}

/// Precomputed sampling state for one (n_bins, inflation) pair.
///
/// Edge utilities depend only on the sorted scores, so the weight table and
/// its cumulative sum are built once and each draw costs one uniform plus a
/// binary search.
struct ExponqSetup {
    edges: Vec<f64>,
    /// #{s <= edge} per edge.
    ranks: Vec<usize>,
    cumulative: Vec<f64>,
    target_rank: usize,
}

impl ExponqSetup {
    fn new(
        scores: &ScoreSet,
        alpha: f64,
        epsilon: f64,
        n_bins: usize,
        inflation: f64,
    ) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::domain(format!(
                "n_bins must be at least 2, got {n_bins}"
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(inflation >= 0.0) || !inflation.is_finite() {
            return Err(Error::domain(format!(
                "inflation must be nonnegative, got {inflation}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let n = scores.len();
        let raw = ((1.0 - alpha + inflation) * (n as f64 + 1.0)).ceil();
        let target_rank = if raw >= n as f64 {
            n // clamp: degenerate full-coverage regime
        } else {
            (raw as usize).max(1)
        };

        let (lo, hi) = (scores.lower(), scores.upper());
        let width = (hi - lo) / n_bins as f64;
        let mut edges = Vec::with_capacity(n_bins);
        let mut ranks = Vec::with_capacity(n_bins);
        for j in 1..=n_bins {
            let e = if j == n_bins { hi } else { lo + width * j as f64 };
            edges.push(e);
            ranks.push(scores.count_at_most(e));
        }

        // max utility is 0 or the closest achievable; shift so weights <= 1
        let best = ranks
            .iter()
            .map(|r| (*r as f64 - target_rank as f64).abs())
            .fold(f64::INFINITY, f64::min);
        let mut cumulative = Vec::with_capacity(n_bins);
        let mut acc = 0.0;
        for r in &ranks {
            let utility = -((*r as f64 - target_rank as f64).abs() - best);
            acc += (epsilon * utility / 2.0).exp();
            cumulative.push(acc);
        }
        Ok(ExponqSetup {
            edges,
            ranks,
            cumulative,
            target_rank,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("n_bins >= 2");
        let u: f64 = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|c| *c <= u)
            .min(self.edges.len() - 1)
    }
}

/// Tuning grids for the exponential-mechanism baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrids {
    pub bin_grid: Vec<usize>,
    pub inflation_grid: Vec<f64>,
    /// Mechanism draws per grid point used to estimate coverage.
    pub draws: usize,
}

impl Default for TuneGrids {
    fn default() -> Self {
        TuneGrids {
            bin_grid: vec![100, 500, 1000, 5000],
            inflation_grid: vec![0.0, 0.01, 0.02, 0.05],
            draws: 150,
        }
    }
}

/// Outcome of [`exponq_tune`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedExponq {
    pub n_bins: usize,
    pub inflation: f64,
    /// True when no grid point met the coverage constraint and the most
    /// conservative one (maximum inflation) was returned instead.
    pub infeasible_fallback: bool,
}

/// Grid search for the (n_bins, inflation) pair minimizing the expected
/// threshold subject to an estimated coverage of at least 1 - α.
///
/// Coverage for a pair is estimated from repeated mechanism draws on the
/// calibration scores: the pair is feasible when every draw's threshold
/// already covers a (1-α)-fraction of the calibration set (the worst draw is
/// the estimate, which is what keeps the baseline conservative at small ε).
/// Deterministic given the generator state.
pub fn exponq_tune<R: Rng + ?Sized>(
    scores: &ScoreSet,
    alpha: f64,
    epsilon: f64,
    grids: &TuneGrids,
    rng: &mut R,
) -> Result<TunedExponq> {
    if grids.bin_grid.is_empty() || grids.inflation_grid.is_empty() {
        return Err(Error::domain("tuning grids must be nonempty"));
    }
    if grids.draws == 0 {
        return Err(Error::domain("tuning requires at least one draw"));
    }
    let n = scores.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for &n_bins in &grids.bin_grid {
        for &inflation in &grids.inflation_grid {
            let setup = ExponqSetup::new(scores, alpha, epsilon, n_bins, inflation)?;
            let mut feasible = true;
            let mut threshold_sum = 0.0;
            for _ in 0..grids.draws {
                let j = setup.draw(rng);
                threshold_sum += setup.edges[j];
                if (setup.ranks[j] as f64) / n < 1.0 - alpha {
                    feasible = false;
                }
            }
            if feasible {
                let mean_threshold = threshold_sum / grids.draws as f64;
                if best.is_none_or(|(t, _, _)| mean_threshold < t) {
                    best = Some((mean_threshold, n_bins, inflation));
                }
            }
        }
    }
    match best {
        Some((_, n_bins, inflation)) => Ok(TunedExponq {
            n_bins,
            inflation,
            infeasible_fallback: false,
        }),
        None => {
            let max_inflation = grids
                .inflation_grid
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(TunedExponq {
                n_bins: grids.bin_grid[0],
                inflation: max_inflation,
                infeasible_fallback: true,
            })
        }
    }
}
