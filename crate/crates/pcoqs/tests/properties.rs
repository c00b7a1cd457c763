//! Cross-module statistical properties and randomized invariants.
//!
//! Monte-Carlo suites here are seeded, so every run checks the same draws;
//! tolerances follow the three-standard-error convention used throughout the
//! crate's statistical tests.

use pcoqs::bounds::{coverage_bounds, rank_error_bound};
use pcoqs::conformal::{evaluate, prediction_set, MechanismParams};
use pcoqs::data::Matrix;
use pcoqs::datagen::{generate, split, SyntheticSpec, DEFAULT_SPLIT};
use pcoqs::models::{fit_gnb, predict_proba};
use pcoqs::privacy::{noisy_range_count, per_call_noise_sd, NoiseSpec, PrivacyBudget};
use pcoqs::quantile::{
    exponq_quantile, nonprivate_quantile, pcoqs_quantile, pcoqs_quantile_noiseless, target_rank,
    Mechanism,
};
use pcoqs::rng::{replication_stream, stream, Phase};
use pcoqs::score::ScoreSet;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Draw a score set with all pairwise gaps strictly above `min_gap`.
fn gapped_scores<R: Rng>(n: usize, min_gap: f64, rng: &mut R) -> ScoreSet {
    loop {
        let mut values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        values.sort_unstable_by(|a, b| a.total_cmp(b));
        let ok = values.windows(2).all(|w| w[1] - w[0] > min_gap);
        if ok {
            return ScoreSet::new(values, 0.0, 1.0).unwrap();
        }
    }
}

#[test]
fn gaussian_tail_mass_is_within_union_bound_budget() {
    // the rank-error analysis needs P(|Z| > sd * sqrt(2 ln(2/beta))) <= beta
    let sd = 13.038_404_810_405_298;
    let draws = 200_000;
    let mut rng = stream(2024, 0);
    let normal = Normal::new(0.0, sd).unwrap();
    let samples: Vec<f64> = (0..draws).map(|_| normal.sample(&mut rng)).collect();
    for beta in [0.1f64, 0.01] {
        let threshold = sd * (2.0 * (2.0 / beta).ln()).sqrt();
        let exceed = samples.iter().filter(|z| z.abs() > threshold).count() as f64
            / draws as f64;
        let mc_err = 3.0 * (beta * (1.0 - beta) / draws as f64).sqrt();
        assert!(
            exceed <= beta + mc_err,
            "beta {beta}: exceedance {exceed} > {}",
            beta + mc_err
        );
    }
}

#[test]
fn noiseless_search_matches_oracle_across_sizes() {
    let mut rng = stream(501, 0);
    let precision = 1e-10;
    for n in [10usize, 100, 1000] {
        for _ in 0..500 {
            let scores = gapped_scores(n, 2.0 * precision, &mut rng);
            let oracle = nonprivate_quantile(&scores, 0.1).unwrap().threshold;
            let got = pcoqs_quantile_noiseless(&scores, 0.1, precision)
                .unwrap()
                .threshold;
            assert!(
                (got - oracle).abs() <= precision,
                "n = {n}: |{got} - {oracle}| > precision"
            );
        }
    }
}

#[test]
fn rank_error_stays_within_bound_at_stated_frequency() {
    // 2000 independent searches at rho = 0.1 on [0, 1] with 3000 scores
    let runs = 2000usize;
    let n_cal = 3000usize;
    let rho = 0.1;
    let precision = 1e-10;
    let r = target_rank(n_cal, 0.1).unwrap() as f64;
    let mut errors = Vec::with_capacity(runs);
    for h in 0..runs {
        let mut data_rng = replication_stream(600, h as u64, Phase::Data);
        let mut mech_rng = replication_stream(600, h as u64, Phase::Mechanism);
        let values: Vec<f64> = (0..n_cal).map(|_| data_rng.random::<f64>()).collect();
        let scores = ScoreSet::new(values, 0.0, 1.0).unwrap();
        let q = pcoqs_quantile(&scores, 0.1, precision, rho, &mut mech_rng).unwrap();
        let rank = scores.count_at_most(q.threshold) as f64;
        errors.push((rank - r).abs());
    }
    for beta in [0.05, 0.01] {
        let tau = rank_error_bound(1.0 / precision, rho, beta).unwrap();
        let frequency =
            errors.iter().filter(|e| **e > tau).count() as f64 / runs as f64;
        let allowance = beta + 3.0 * (beta * (1.0 - beta) / runs as f64).sqrt();
        assert!(
            frequency <= allowance,
            "beta {beta}: exceedance {frequency} > {allowance}"
        );
    }
}

#[test]
fn split_conformal_coverage_sits_in_standard_band() {
    // 1000 replications of the nonprivate pipeline at n = 1000
    let reps = 1000usize;
    let n = 1000usize;
    let alpha = 0.1;
    let mut coverages = Vec::with_capacity(reps);
    for h in 0..reps {
        let mut data_rng = replication_stream(601, h as u64, Phase::Data);
        let ds = generate(&SyntheticSpec::with_n(n), &mut data_rng).unwrap();
        let (train, cal, test) = split(&ds, DEFAULT_SPLIT, &mut data_rng).unwrap();
        let model = fit_gnb(&train.features, &train.labels).unwrap();
        let cal_probs = predict_proba(&model, &cal.features).unwrap();
        let scores = pcoqs::conformal::hinge_scores(&cal_probs, &cal.labels).unwrap();
        let q = nonprivate_quantile(&scores, alpha).unwrap();
        let test_probs = predict_proba(&model, &test.features).unwrap();
        let sets: Vec<_> = test_probs
            .rows()
            .map(|row| prediction_set(row, q.threshold).unwrap())
            .collect();
        coverages.push(evaluate(&sets, &test.labels).unwrap().coverage);
    }
    let (mean, sd) = mean_and_sd(&coverages);
    let n_cal = (0.24 * n as f64) as f64;
    let se = sd / (reps as f64).sqrt();
    let lower = 1.0 - alpha - 3.0 * se;
    let upper = 1.0 - alpha + 1.0 / (n_cal + 1.0) + 3.0 * se;
    assert!(
        mean >= lower && mean <= upper,
        "mean coverage {mean} outside [{lower}, {upper}]"
    );
}

#[test]
fn private_search_coverage_sits_in_theoretical_band() {
    // 400 replications at n = 2000, rho = 1; band from the closed-form tau
    let reps = 400usize;
    let n = 2000usize;
    let alpha = 0.1;
    let rho = 1.0;
    let precision = 1e-10;
    let mut coverages = Vec::with_capacity(reps);
    for h in 0..reps {
        let mut data_rng = replication_stream(602, h as u64, Phase::Data);
        let mut mech_rng = replication_stream(602, h as u64, Phase::Mechanism);
        let ds = generate(&SyntheticSpec::with_n(n), &mut data_rng).unwrap();
        let (train, cal, test) = split(&ds, DEFAULT_SPLIT, &mut data_rng).unwrap();
        let model = fit_gnb(&train.features, &train.labels).unwrap();
        let cal_probs = predict_proba(&model, &cal.features).unwrap();
        let scores = pcoqs::conformal::hinge_scores(&cal_probs, &cal.labels).unwrap();
        let q = pcoqs_quantile(&scores, alpha, precision, rho, &mut mech_rng).unwrap();
        let test_probs = predict_proba(&model, &test.features).unwrap();
        let sets: Vec<_> = test_probs
            .rows()
            .map(|row| prediction_set(row, q.threshold).unwrap())
            .collect();
        coverages.push(evaluate(&sets, &test.labels).unwrap().coverage);
    }
    let (mean, sd) = mean_and_sd(&coverages);
    let se = sd / (reps as f64).sqrt();
    let n_cal = (0.24 * n as f64) as usize;
    let tau = rank_error_bound(1.0 / precision, rho, 0.01).unwrap();
    let (lo, hi) = coverage_bounds(tau, n_cal, alpha).unwrap();
    assert!(
        mean >= lo - 3.0 * se && mean <= hi + 3.0 * se,
        "mean coverage {mean} outside [{lo}, {hi}] widened by {}",
        3.0 * se
    );
}

#[test]
fn harness_nonprivate_defaults_cover_at_nominal_level() {
    let cfg = pcoqs::harness::ExperimentConfig {
        method: Mechanism::Nonprivate,
        replications: 100,
        base_seed: 604,
        ..pcoqs::harness::ExperimentConfig::default()
    };
    let rows = pcoqs::harness::run_experiment(&cfg).unwrap();
    let coverage = rows[0].coverage_mean;
    assert!(
        (coverage - 0.900).abs() <= 0.01,
        "nonprivate coverage {coverage}"
    );
}

#[test]
fn dp_model_lowers_accuracy_but_keeps_coverage() {
    let base = pcoqs::harness::ExperimentConfig {
        replications: 60,
        base_seed: 605,
        ..pcoqs::harness::ExperimentConfig::default()
    };
    let plain = pcoqs::harness::run_experiment(&base).unwrap();
    let dp_cfg = pcoqs::harness::ExperimentConfig {
        model: pcoqs::harness::ModelKind::DpGnb,
        ..base
    };
    let dp = pcoqs::harness::run_experiment(&dp_cfg).unwrap();

    let (plain_acc, dp_acc) = (plain[0].accuracy_mean, dp[0].accuracy_mean);
    assert!(
        dp_acc < plain_acc - 0.01,
        "private training should cost accuracy: {dp_acc} vs {plain_acc}"
    );
    assert!(dp_acc > 0.70, "dp accuracy collapsed: {dp_acc}");
    // the coverage guarantee does not depend on model quality
    assert!(
        (dp[0].coverage_mean - 0.9).abs() <= 0.02,
        "dp-model coverage {}",
        dp[0].coverage_mean
    );
}

#[test]
fn model_budget_sweep_degrades_accuracy_monotonically() {
    let cfg = pcoqs::harness::ExperimentConfig {
        model: pcoqs::harness::ModelKind::DpGnb,
        replications: 40,
        base_seed: 606,
        ..pcoqs::harness::ExperimentConfig::default()
    };
    let rows = pcoqs::harness::sweep(
        &cfg,
        pcoqs::harness::SweepAxis::EpsilonF,
        &[0.1, 10.0],
    )
    .unwrap();
    assert!(
        rows[0].accuracy_mean < rows[1].accuracy_mean - 0.05,
        "accuracy at eps_f 0.1 ({}) should trail eps_f 10 ({})",
        rows[0].accuracy_mean,
        rows[1].accuracy_mean
    );
}

#[test]
fn calibrate_supports_every_mechanism() {
    let mut rng = stream(603, 0);
    let n = 400usize;
    let rows: Vec<f64> = (0..n)
        .flat_map(|_| {
            let p: f64 = rng.random();
            [p, 1.0 - p]
        })
        .collect();
    let probs = Matrix::new(rows, 2).unwrap();
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let budget = PrivacyBudget::from_epsilon(1.0, 1e-5).unwrap();
    let params = MechanismParams::default();
    for method in [Mechanism::Nonprivate, Mechanism::Pcoqs, Mechanism::Exponq] {
        let q = pcoqs::conformal::calibrate(
            &probs,
            &labels,
            0.1,
            method,
            &budget,
            &params,
            &mut rng,
        )
        .unwrap();
        assert_eq!(q.mechanism, method);
        assert!((0.0..=1.0).contains(&q.threshold));
    }
}

proptest! {
    #[test]
    fn noiseless_count_equals_brute_force(
        values in prop::collection::vec(0.0f64..1.0, 1..60),
        lo in 0.0f64..1.0,
        width in 0.0f64..1.0,
    ) {
        let hi = (lo + width).min(1.0);
        let brute = values.iter().filter(|v| lo <= **v && **v <= hi).count() as f64;
        let scores = ScoreSet::new(values, 0.0, 1.0).unwrap();
        let got = noisy_range_count(
            &scores, lo, hi, &NoiseSpec::noiseless(1), &mut stream(0, 0),
        ).unwrap();
        prop_assert_eq!(got, brute);
    }

    #[test]
    fn thresholds_always_lie_in_bounds(
        values in prop::collection::vec(0.0f64..1.0, 1..50),
        alpha in 0.01f64..0.99,
        rho in 0.001f64..10.0,
        seed in any::<u64>(),
    ) {
        let scores = ScoreSet::new(values, 0.0, 1.0).unwrap();
        let mut rng = stream(seed, 0);
        let a = nonprivate_quantile(&scores, alpha).unwrap().threshold;
        let b = pcoqs_quantile(&scores, alpha, 1e-10, rho, &mut rng).unwrap().threshold;
        let c = exponq_quantile(&scores, alpha, rho, 64, 0.02, &mut rng).unwrap().threshold;
        for t in [a, b, c] {
            prop_assert!((0.0..=1.0).contains(&t));
        }
    }

    #[test]
    fn target_rank_is_monotone_and_clamped(
        n_cal in 1usize..5000,
        alpha in 0.01f64..0.99,
    ) {
        let r = target_rank(n_cal, alpha).unwrap();
        prop_assert!(r >= 1 && r <= n_cal);
        let tighter = (alpha * 0.5).max(0.005);
        prop_assert!(target_rank(n_cal, tighter).unwrap() >= r);
    }

    #[test]
    fn prediction_sets_grow_with_threshold(
        p0 in 0.0f64..1.0,
        t_lo in 0.0f64..1.0,
        bump in 0.0f64..1.0,
    ) {
        let row = [p0, 1.0 - p0];
        let t_hi = (t_lo + bump).min(1.0);
        let small = prediction_set(&row, t_lo).unwrap();
        let large = prediction_set(&row, t_hi).unwrap();
        for label in &small.labels {
            prop_assert!(large.labels.contains(label));
        }
    }

    #[test]
    fn metric_identities_hold(
        rows in prop::collection::vec((0.0f64..1.0, 0usize..2, 0.0f64..1.0), 1..40),
    ) {
        let k = 2usize;
        let mut sets = Vec::new();
        let mut labels = Vec::new();
        for (p0, label, t) in rows {
            sets.push(prediction_set(&[p0, 1.0 - p0], t).unwrap());
            labels.push(label);
        }
        let m = evaluate(&sets, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.coverage));
        prop_assert!((0.0..=1.0).contains(&m.informativeness));
        prop_assert!(m.efficiency >= 0.0 && m.efficiency <= k as f64);
        // coverage can only be claimed through a set that holds the label
        if m.coverage > 0.0 {
            prop_assert!(m.efficiency > 0.0);
        }
    }

    #[test]
    fn partitions_are_disjoint_exhaustive_and_balanced(
        n in 10usize..400,
        seed in any::<u64>(),
    ) {
        let mut rng = stream(seed, 0);
        let ds = generate(&SyntheticSpec::with_n(n), &mut rng).unwrap();
        let c0 = ds.labels.iter().filter(|l| **l == 0).count();
        prop_assert!(c0.abs_diff(n - c0) <= 1);
        let (train, cal, test) = split(&ds, DEFAULT_SPLIT, &mut rng).unwrap();
        prop_assert_eq!(train.len() + cal.len() + test.len(), n);
        prop_assert_eq!(cal.len(), (0.24 * n as f64).floor() as usize);
        prop_assert_eq!(test.len(), (0.16 * n as f64).floor() as usize);
    }

    #[test]
    fn noise_sd_matches_budget_split(
        rho in 0.01f64..20.0,
        calls in 1u32..100,
    ) {
        let sd = per_call_noise_sd(rho, calls).unwrap();
        // composing `calls` Gaussian counts at this sd spends exactly rho
        prop_assert!((sd * sd * 2.0 * rho - calls as f64).abs() < 1e-9);
    }

    #[test]
    fn formatted_numbers_reparse_within_six_digits(
        x in prop::num::f64::NORMAL.prop_filter("reasonable range", |x| {
            x.abs() > 1e-30 && x.abs() < 1e30
        }),
    ) {
        let s = pcoqs::harness::fmt_sig(x, 6);
        let back: f64 = s.parse().unwrap();
        prop_assert!(((back - x) / x).abs() < 1e-5, "{} -> {}", x, s);
        prop_assert_eq!(pcoqs::harness::fmt_sig(back, 6), s);
    }
}
