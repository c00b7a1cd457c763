//! Split conformal prediction with hinge-loss scores.
//!
//! Calibration turns held-out class probabilities into non-conformity scores
//! s = 1 - p(true class), a quantile mechanism turns the scores into a
//! threshold, and a prediction set for a test point keeps every label whose
//! score is at or below the threshold. Empty sets are legal output (the
//! threshold can fall below all of a row's scores) and are reported as-is;
//! substituting the argmax label would silently distort coverage.

use rand::Rng;
use serde::Serialize;

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::privacy::PrivacyBudget;
use crate::quantile::{
    exponq_quantile, exponq_tune, nonprivate_quantile, pcoqs_quantile_with, Mechanism,
    QuantileResult, SearchParams, TuneGrids,
};
use crate::score::ScoreSet;

/// Tolerance for probability rows summing to one.
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Rounding slack absorbed when clamping hinge scores into [0, 1]; anything
/// further out is an error.
const SCORE_CLAMP_TOLERANCE: f64 = 1e-12;

/// Labels whose score passed the threshold for one test point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionSet {
    /// Sorted subset of {0, .., K-1}; may be empty.
    pub labels: Vec<usize>,
    pub threshold_used: f64,
}

impl PredictionSet {
    pub fn contains(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }
}

/// Aggregate prediction-set quality over a test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Fraction of sets containing the true label.
    pub coverage: f64,
    /// Mean set size.
    pub efficiency: f64,
    /// Fraction of singleton sets.
    pub informativeness: f64,
    pub n_test: usize,
}

fn check_prob_row(row: &[f64]) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::domain(format!(
            "probability row sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Hinge non-conformity score for one (probabilities, label) pair:
/// 1 - p[label], clamped into [0, 1] by at most [`SCORE_CLAMP_TOLERANCE`].
fn hinge_score(row: &[f64], label: usize) -> Result<f64> {
    if label >= row.len() {
        return Err(Error::domain(format!(
            "label {label} out of range for {} classes",
            row.len()
        )));
    }
    let s = 1.0 - row[label];
    if s < -SCORE_CLAMP_TOLERANCE || s > 1.0 + SCORE_CLAMP_TOLERANCE {
        return Err(Error::domain(format!(
            "hinge score {s} outside [0, 1] beyond rounding tolerance"
        )));
    }
    Ok(s.clamp(0.0, 1.0))
}

/// Raw hinge scores for every row, without packaging into a score set.
pub fn hinge_values(class_probabilities: &Matrix, true_labels: &[usize]) -> Result<Vec<f64>> {
    if class_probabilities.n_rows() != true_labels.len() {
        return Err(Error::domain(format!(
            "probability rows ({}) and labels ({}) disagree",
            class_probabilities.n_rows(),
            true_labels.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::domain("need at least one calibration point"));
    }
    class_probabilities
        .rows()
        .zip(true_labels)
        .map(|(row, &label)| {
            check_prob_row(row)?;
            hinge_score(row, label)
        })
        .collect()
}

/// Hinge scores packaged as a [`ScoreSet`] on [0, 1].
pub fn hinge_scores(class_probabilities: &Matrix, true_labels: &[usize]) -> Result<ScoreSet> {
    ScoreSet::new(hinge_values(class_probabilities, true_labels)?, 0.0, 1.0)
}

/// Prediction set for one probability row: all labels y with
/// `1 - prob_row[y] <= threshold`.
pub fn prediction_set(prob_row: &[f64], threshold: f64) -> Result<PredictionSet> {
    check_prob_row(prob_row)?;
    let labels = (0..prob_row.len())
        .filter(|y| 1.0 - prob_row[*y] <= threshold)
        .collect();
    Ok(PredictionSet {
        labels,
        threshold_used: threshold,
    })
}

/// Mechanism knobs shared by calibration and the benchmark harness.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismParams {
    /// Binary-search interval tolerance.
    pub precision: f64,
    /// Run the search loop with an inclusive upper bound (one extra call).
    pub inclusive_loop_bound: bool,
    /// Exponential-mechanism tuning grids.
    pub tune: TuneGrids,
    /// Skip tuning and use these (n_bins, inflation) directly.
    pub exponq_override: Option<(usize, f64)>,
}

impl Default for MechanismParams {
    fn default() -> Self {
        MechanismParams {
            precision: 1e-10,
            inclusive_loop_bound: false,
            tune: TuneGrids::default(),
            exponq_override: None,
        }
    }
}

/// Run the selected quantile mechanism on an existing score set.
///
/// This is the step a privacy budget is spent on; the exponential-mechanism
/// path includes its hyperparameter tuning here, which is why benchmark
/// timings wrap exactly this call.
pub fn dispatch_quantile<R: Rng + ?Sized>(
    scores: &ScoreSet,
    alpha: f64,
    method: Mechanism,
    budget: &PrivacyBudget,
    params: &MechanismParams,
    rng: &mut R,
) -> Result<QuantileResult> {
    match method {
        Mechanism::Nonprivate => nonprivate_quantile(scores, alpha),
        Mechanism::Pcoqs => {
            let search = SearchParams {
                precision: params.precision,
                inclusive_loop_bound: params.inclusive_loop_bound,
            };
            pcoqs_quantile_with(scores, alpha, &search, Some(budget.rho()), rng)
        }
        Mechanism::Exponq => {
            let (n_bins, inflation) = match params.exponq_override {
                Some(pair) => pair,
                None => {
                    let tuned = exponq_tune(scores, alpha, budget.epsilon(), &params.tune, rng)?;
                    (tuned.n_bins, tuned.inflation)
                }
            };
            exponq_quantile(scores, alpha, budget.epsilon(), n_bins, inflation, rng)
        }
    }
}

/// Calibrate a threshold from held-out probabilities: compute hinge scores,
/// then run the selected quantile mechanism. For the noisy-search method the
/// released threshold is ρ-zCDP with respect to the calibration data.
pub fn calibrate<R: Rng + ?Sized>(
    cal_probabilities: &Matrix,
    cal_labels: &[usize],
    alpha: f64,
    method: Mechanism,
    budget: &PrivacyBudget,
    params: &MechanismParams,
    rng: &mut R,
) -> Result<QuantileResult> {
    let scores = hinge_scores(cal_probabilities, cal_labels)?;
    dispatch_quantile(&scores, alpha, method, budget, params, rng)
}

/// Coverage, efficiency and informativeness over a test split.
pub fn evaluate(sets: &[PredictionSet], true_labels: &[usize]) -> Result<MetricsReport> {
    if sets.len() != true_labels.len() {
        return Err(Error::domain(format!(
            "sets ({}) and labels ({}) disagree",
            sets.len(),
            true_labels.len()
        )));
    }
    if sets.is_empty() {
        return Err(Error::domain("need at least one prediction set"));
    }
    let n = sets.len() as f64;
    let mut covered = 0usize;
    let mut size_sum = 0usize;
    let mut singletons = 0usize;
    for (set, &label) in sets.iter().zip(true_labels) {
        if set.contains(label) {
            covered += 1;
        }
        size_sum += set.size();
        if set.size() == 1 {
            singletons += 1;
        }
    }
    Ok(MetricsReport {
        coverage: covered as f64 / n,
        efficiency: size_sum as f64 / n,
        informativeness: singletons as f64 / n,
        n_test: sets.len(),
    })
}
