//! Benchmark harness: replicated synthetic experiments, parameter sweeps,
//! mechanism timing, and CSV/JSON emission.
//!
//! Each replication h derives its own random streams from
//! `(base_seed, h)`, so runs are deterministic for a fixed seed, replications
//! can execute in parallel, and every sweep value sees the same sequence of
//! datasets (rows of a sweep are paired comparisons). Replication h of a run:
//! generate data, split 60/24/16, fit the model, score the calibration split,
//! run the quantile mechanism (this step alone is timed), build prediction
//! sets on the test split and evaluate them.

use std::fs::File;
use std::io::Write as IoWrite;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{evaluate, prediction_set, MechanismParams};
use crate::data::Dataset;
use crate::datagen::{generate, split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::models::{accuracy, fit_dp_gnb, fit_gnb, predict_proba, GnbModel};
use crate::privacy::PrivacyBudget;
use crate::quantile::{Mechanism, TuneGrids};
use crate::rng::{replication_stream, Phase};
use crate::score::ScoreSet;

/// Which classifier backs the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gnb,
    DpGnb,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Gnb => write!(f, "gnb"),
            ModelKind::DpGnb => write!(f, "dp_gnb"),
        }
    }
}

/// Axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EpsilonCp,
    N,
    Alpha,
    EpsilonF,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::EpsilonCp => "epsilon_cp",
            SweepAxis::N => "n",
            SweepAxis::Alpha => "alpha",
            SweepAxis::EpsilonF => "epsilon_f",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon_cp" => Ok(SweepAxis::EpsilonCp),
            "n" => Ok(SweepAxis::N),
            "alpha" => Ok(SweepAxis::Alpha),
            "epsilon_f" => Ok(SweepAxis::EpsilonF),
            other => Err(Error::config(format!(
                "unknown sweep axis {other:?} (expected epsilon_cp, n, alpha or epsilon_f)"
            ))),
        }
    }
}

/// Full description of one experiment. A flat JSON document with these field
/// names configures the CLI; every field is optional and defaults to the
/// benchmark setting (n = 10,000, α = 0.1, ε_CP = 1, ε_f = 2, 1000
/// replications).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Mechanism,
    pub model: ModelKind,
    pub alpha: f64,
    /// Conformal privacy budget in ε; converted to ρ one-to-one.
    pub epsilon_cp: f64,
    /// Model-training privacy budget (dp_gnb only).
    pub epsilon_f: f64,
    /// Total sample size before the 60/24/16 split.
    pub n: usize,
    pub replications: usize,
    /// Binary-search interval tolerance.
    pub precision: f64,
    pub score_bounds: (f64, f64),
    pub base_seed: u64,
    /// Failure probability for (ε, δ)-DP reporting.
    pub dp_delta: f64,
    /// Clipping range for private model training.
    pub feature_bounds: (f64, f64),
    pub split_fractions: (f64, f64, f64),
    /// Run the search loop with an inclusive upper bound (one extra call).
    pub inclusive_loop_bound: bool,
    pub exponq_bin_grid: Vec<usize>,
    pub exponq_inflation_grid: Vec<f64>,
    pub exponq_tune_draws: usize,
    pub sweep_axis: Option<SweepAxis>,
    pub sweep_values: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let grids = TuneGrids::default();
        ExperimentConfig {
            method: Mechanism::Pcoqs,
            model: ModelKind::Gnb,
            alpha: 0.1,
            epsilon_cp: 1.0,
            epsilon_f: 2.0,
            n: 10_000,
            replications: 1000,
            precision: 1e-10,
            score_bounds: (0.0, 1.0),
            base_seed: 42,
            dp_delta: 1e-5,
            feature_bounds: (-12.0, 12.0),
            split_fractions: (0.60, 0.24, 0.16),
            inclusive_loop_bound: false,
            exponq_bin_grid: grids.bin_grid,
            exponq_inflation_grid: grids.inflation_grid,
            exponq_tune_draws: grids.draws,
            sweep_axis: None,
            sweep_values: None,
        }
    }
}

impl ExperimentConfig {
    /// Load a flat JSON config, applying `key=value` overrides in order
    /// (later entries win, and every override wins over the file).
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("invalid JSON in {}: {e}", path.display())))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::config("config must be a JSON object".to_string()))?;
        for (key, raw) in overrides {
            let parsed = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            obj.insert(key.clone(), parsed);
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reject configurations that could not run, before any replication.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.epsilon_cp > 0.0) {
            return fail(format!("epsilon_cp must be positive, got {}", self.epsilon_cp));
        }
        if !(self.epsilon_f > 0.0) {
            return fail(format!("epsilon_f must be positive, got {}", self.epsilon_f));
        }
        if !(self.precision > 0.0) {
            return fail(format!("precision must be positive, got {}", self.precision));
        }
        if self.score_bounds.0 >= self.score_bounds.1 {
            return fail(format!(
                "score_bounds must satisfy lower < upper, got {:?}",
                self.score_bounds
            ));
        }
        if !(self.dp_delta > 0.0 && self.dp_delta < 1.0) {
            return fail(format!("dp_delta must lie in (0, 1), got {}", self.dp_delta));
        }
        let (a, b, c) = self.split_fractions;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-12 {
            return fail(format!(
                "split_fractions must be positive and sum to 1, got {:?}",
                self.split_fractions
            ));
        }
        // b + c < 1 so the floors cannot exceed n
        let n_cal = (b * self.n as f64).floor() as usize;
        let n_test = (c * self.n as f64).floor() as usize;
        let n_train = self.n - n_cal - n_test;
        if n_cal == 0 || n_test == 0 || n_train < 4 {
            return fail(format!(
                "n = {} is too small for the split (train {n_train}, cal {n_cal}, test {n_test})",
                self.n
            ));
        }
        if self.method == Mechanism::Exponq
            && (self.exponq_bin_grid.is_empty()
                || self.exponq_inflation_grid.is_empty()
                || self.exponq_tune_draws == 0)
        {
            return fail("exponq tuning grids must be nonempty with at least one draw".into());
        }
        if self.sweep_axis.is_some() != self.sweep_values.is_some() {
            return fail("sweep_axis and sweep_values must be given together".into());
        }
        if let Some(values) = &self.sweep_values {
            if values.is_empty() {
                return fail("sweep_values must be nonempty".into());
            }
        }
        Ok(())
    }

    fn mechanism_params(&self) -> MechanismParams {
        MechanismParams {
            precision: self.precision,
            inclusive_loop_bound: self.inclusive_loop_bound,
            tune: TuneGrids {
                bin_grid: self.exponq_bin_grid.clone(),
                inflation_grid: self.exponq_inflation_grid.clone(),
                draws: self.exponq_tune_draws,
            },
            exponq_override: None,
        }
    }

    fn with_axis_value(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.sweep_axis = None;
        cfg.sweep_values = None;
        match axis {
            SweepAxis::EpsilonCp => cfg.epsilon_cp = value,
            SweepAxis::Alpha => cfg.alpha = value,
            SweepAxis::EpsilonF => cfg.epsilon_f = value,
            SweepAxis::N => {
                if !(value > 0.0) || value.fract() != 0.0 {
                    return Err(Error::config(format!(
                        "sweep over n needs positive integers, got {value}"
                    )));
                }
                cfg.n = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Aggregated metrics for one experiment (one sweep value).
///
/// `*_disp` fields are sample variances across replications; the matching
/// standard deviations are included so emitted JSON carries both views.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_axis: String,
    pub sweep_value: f64,
    pub method: Mechanism,
    pub coverage_mean: f64,
    pub coverage_disp: f64,
    pub coverage_sd: f64,
    pub efficiency_mean: f64,
    pub efficiency_disp: f64,
    pub efficiency_sd: f64,
    pub informativeness_mean: f64,
    pub informativeness_disp: f64,
    pub informativeness_sd: f64,
    pub accuracy_mean: f64,
    pub accuracy_disp: f64,
    pub accuracy_sd: f64,
    /// Wall time of the quantile mechanism alone, per replication.
    pub time_mean_s: f64,
    pub time_disp_s: f64,
    pub time_sd_s: f64,
    pub replications: usize,
    pub base_seed: u64,
}

/// Per-replication outcome before aggregation.
struct RepOutcome {
    coverage: f64,
    efficiency: f64,
    informativeness: f64,
    accuracy: f64,
    mech_seconds: f64,
}

fn fit_model(cfg: &ExperimentConfig, train: &Dataset, h: u64) -> Result<GnbModel> {
    match cfg.model {
        ModelKind::Gnb => fit_gnb(&train.features, &train.labels),
        ModelKind::DpGnb => {
            let mut model_rng = replication_stream(cfg.base_seed, h, Phase::Model);
            fit_dp_gnb(
                &train.features,
                &train.labels,
                cfg.epsilon_f,
                cfg.feature_bounds,
                &mut model_rng,
            )
        }
    }
}

fn replicate(cfg: &ExperimentConfig, h: u64) -> Result<RepOutcome> {
    let mut data_rng = replication_stream(cfg.base_seed, h, Phase::Data);
    let mut mech_rng = replication_stream(cfg.base_seed, h, Phase::Mechanism);

    let mut spec = SyntheticSpec::with_n(cfg.n);
    spec.split_fractions = cfg.split_fractions;
    let dataset = generate(&spec, &mut data_rng)?;
    let (train, cal, test) = split(&dataset, cfg.split_fractions, &mut data_rng)?;

    let model = fit_model(cfg, &train, h)?;
    let cal_probs = predict_proba(&model, &cal.features)?;
    let test_probs = predict_proba(&model, &test.features)?;

    let values = crate::conformal::hinge_values(&cal_probs, &cal.labels)?;
    let scores = ScoreSet::new(values, cfg.score_bounds.0, cfg.score_bounds.1)?;
    let budget = PrivacyBudget::from_epsilon(cfg.epsilon_cp, cfg.dp_delta)?;
    let params = cfg.mechanism_params();

    // fresh noise per replication: the threshold is never cached or reused
    let start = Instant::now();
    let quantile = crate::conformal::dispatch_quantile(
        &scores,
        cfg.alpha,
        cfg.method,
        &budget,
        &params,
        &mut mech_rng,
    )?;
    let mech_seconds = start.elapsed().as_secs_f64();

    let sets: Result<Vec<_>> = test_probs
        .rows()
        .map(|row| prediction_set(row, quantile.threshold))
        .collect();
    let report = evaluate(&sets?, &test.labels)?;
    let model_accuracy = accuracy(&model, &test.features, &test.labels)?;

    Ok(RepOutcome {
        coverage: report.coverage,
        efficiency: report.efficiency,
        informativeness: report.informativeness,
        accuracy: model_accuracy,
        mech_seconds,
    })
}

fn mean_and_variance(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn aggregate(
    cfg: &ExperimentConfig,
    axis: &str,
    value: f64,
    outcomes: &[RepOutcome],
) -> ResultRow {
    let (coverage_mean, coverage_disp) =
        mean_and_variance(outcomes.iter().map(|o| o.coverage));
    let (efficiency_mean, efficiency_disp) =
        mean_and_variance(outcomes.iter().map(|o| o.efficiency));
    let (informativeness_mean, informativeness_disp) =
        mean_and_variance(outcomes.iter().map(|o| o.informativeness));
    let (accuracy_mean, accuracy_disp) =
        mean_and_variance(outcomes.iter().map(|o| o.accuracy));
    let (time_mean_s, time_disp_s) =
        mean_and_variance(outcomes.iter().map(|o| o.mech_seconds));
    ResultRow {
        sweep_axis: axis.to_string(),
        sweep_value: value,
        method: cfg.method,
        coverage_mean,
        coverage_disp,
        coverage_sd: coverage_disp.sqrt(),
        efficiency_mean,
        efficiency_disp,
        efficiency_sd: efficiency_disp.sqrt(),
        informativeness_mean,
        informativeness_disp,
        informativeness_sd: informativeness_disp.sqrt(),
        accuracy_mean,
        accuracy_disp,
        accuracy_sd: accuracy_disp.sqrt(),
        time_mean_s,
        time_disp_s,
        time_sd_s: time_disp_s.sqrt(),
        replications: cfg.replications,
        base_seed: cfg.base_seed,
    }
}

fn run_single(cfg: &ExperimentConfig, axis: &str, value: f64, parallel: bool) -> Result<ResultRow> {
    let outcomes: Result<Vec<RepOutcome>> = if parallel {
        (0..cfg.replications as u64)
            .into_par_iter()
            .map(|h| replicate(cfg, h))
            .collect()
    } else {
        (0..cfg.replications as u64)
            .map(|h| replicate(cfg, h))
            .collect()
    };
    Ok(aggregate(cfg, axis, value, &outcomes?))
}

/// Run the configured experiment: one aggregated row, or one per sweep value
/// when the config carries a sweep. Deterministic for a fixed `base_seed`
/// (timing fields aside).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    match (&cfg.sweep_axis, &cfg.sweep_values) {
        (Some(axis), Some(values)) => sweep(cfg, *axis, values),
        _ => Ok(vec![run_single(cfg, "none", 0.0, true)?]),
    }
}

/// One run per value, in input order. All values share the same base seed,
/// so replication h sees the same data at every value and rows differ only
/// through the swept parameter.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<ResultRow>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|&v| {
            let at = cfg.with_axis_value(axis, v)?;
            run_single(&at, axis.name(), v, true)
        })
        .collect()
}

/// Timing-focused run: replications execute serially so wall-clock
/// measurements of the mechanism do not contend with each other.
pub fn bench_timing(cfg: &ExperimentConfig) -> Result<ResultRow> {
    cfg.validate()?;
    run_single(cfg, "none", 0.0, false)
}

/// Output format for [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Json,
}

impl std::str::FromStr for EmitFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EmitFormat::Csv),
            "json" => Ok(EmitFormat::Json),
            other => Err(Error::config(format!(
                "unknown format {other:?} (expected csv or json)"
            ))),
        }
    }
}

/// Fixed CSV header; `*_disp` columns carry variances.
pub const CSV_HEADER: &str = "sweep_axis,sweep_value,method,coverage_mean,coverage_disp,\
efficiency_mean,efficiency_disp,informativeness_mean,informativeness_disp,\
accuracy_mean,accuracy_disp,time_mean_s,time_disp_s,replications,base_seed";

/// Format with up to `sig` significant digits, trimming trailing zeros,
/// switching to scientific notation outside a readable exponent range.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= sig as i32 {
        format!("{}e{exp}", trim_trailing_zeros(mantissa))
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_trailing_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_trailing_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sig6(x: f64) -> String {
    fmt_sig(x, 6)
}

/// Render rows as CSV under [`CSV_HEADER`], numbers at 6 significant digits.
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.sweep_axis,
            sig6(r.sweep_value),
            r.method,
            sig6(r.coverage_mean),
            sig6(r.coverage_disp),
            sig6(r.efficiency_mean),
            sig6(r.efficiency_disp),
            sig6(r.informativeness_mean),
            sig6(r.informativeness_disp),
            sig6(r.accuracy_mean),
            sig6(r.accuracy_disp),
            sig6(r.time_mean_s),
            sig6(r.time_disp_s),
            r.replications,
            r.base_seed,
        ));
    }
    out
}

/// Render rows as a JSON array. Objects carry the CSV columns plus `*_sd`
/// standard-deviation fields; numbers at 6 significant digits.
pub fn render_json(rows: &[ResultRow]) -> String {
    let mut out = String::from("[\n");
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            concat!(
                "  {{\"sweep_axis\":\"{}\",\"sweep_value\":{},\"method\":\"{}\",",
                "\"coverage_mean\":{},\"coverage_disp\":{},\"coverage_sd\":{},",
                "\"efficiency_mean\":{},\"efficiency_disp\":{},\"efficiency_sd\":{},",
                "\"informativeness_mean\":{},\"informativeness_disp\":{},\"informativeness_sd\":{},",
                "\"accuracy_mean\":{},\"accuracy_disp\":{},\"accuracy_sd\":{},",
                "\"time_mean_s\":{},\"time_disp_s\":{},\"time_sd_s\":{},",
                "\"replications\":{},\"base_seed\":{}}}"
            ),
            r.sweep_axis,
            sig6(r.sweep_value),
            r.method,
            sig6(r.coverage_mean),
            sig6(r.coverage_disp),
            sig6(r.coverage_sd),
            sig6(r.efficiency_mean),
            sig6(r.efficiency_disp),
            sig6(r.efficiency_sd),
            sig6(r.informativeness_mean),
            sig6(r.informativeness_disp),
            sig6(r.informativeness_sd),
            sig6(r.accuracy_mean),
            sig6(r.accuracy_disp),
            sig6(r.accuracy_sd),
            sig6(r.time_mean_s),
            sig6(r.time_disp_s),
            sig6(r.time_sd_s),
            r.replications,
            r.base_seed,
        ));
        out.push_str(if i + 1 == rows.len() { "\n" } else { ",\n" });
    }
    out.push_str("]\n");
    out
}

/// Write rows to `path` in the requested format.
pub fn emit(rows: &[ResultRow], format: EmitFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::domain("no rows to emit"));
    }
    let text = match format {
        EmitFormat::Csv => render_csv(rows),
        EmitFormat::Json => render_json(rows),
    };
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
