//! Gaussian naive Bayes classifiers, plain and privately trained.
//!
//! The private variant noises the per-class sufficient statistics (counts,
//! feature sums, feature sums of squares) with Laplace noise calibrated to
//! their sensitivity over a clipped feature domain, then rebuilds priors,
//! means and variances from the noisy statistics. Neighboring datasets are
//! taken to differ by one substituted record.

use rand::Rng;

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::privacy::laplace_noise;

/// Noised or degenerate variance estimates are floored here so densities
/// stay finite.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// A fitted Gaussian naive Bayes model.
#[derive(Debug, Clone, PartialEq)]
pub struct GnbModel {
    /// Class priors, summing to 1.
    priors: Vec<f64>,
    /// Per-class per-feature means, K x d row-major.
    means: Vec<f64>,
    /// Per-class per-feature variances, K x d row-major, all positive.
    variances: Vec<f64>,
    n_classes: usize,
    dim: usize,
    is_private: bool,
    epsilon_f: Option<f64>,
}

impl GnbModel {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_private(&self) -> bool {
        self.is_private
    }

    pub fn epsilon_f(&self) -> Option<f64> {
        self.epsilon_f
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn mean(&self, class: usize, feature: usize) -> f64 {
        self.means[class * self.dim + feature]
    }

    pub fn variance(&self, class: usize, feature: usize) -> f64 {
        self.variances[class * self.dim + feature]
    }
}

/// Per-class counts, sums and sums of squares.
struct SufficientStats {
    counts: Vec<f64>,
    sums: Vec<f64>,    // K x d
    squares: Vec<f64>, // K x d
    n_classes: usize,
    dim: usize,
}

fn collect_stats(features: &Matrix, labels: &[usize]) -> Result<SufficientStats> {
    if features.n_rows() != labels.len() {
        return Err(Error::domain("features and labels length mismatch"));
    }
    if features.n_rows() == 0 {
        return Err(Error::domain("cannot fit a model on an empty dataset"));
    }
    let dim = features.n_cols();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(Error::domain("need at least two classes"));
    }
    let mut stats = SufficientStats {
        counts: vec![0.0; n_classes],
        sums: vec![0.0; n_classes * dim],
        squares: vec![0.0; n_classes * dim],
        n_classes,
        dim,
    };
    for (row, &label) in features.rows().zip(labels) {
        stats.counts[label] += 1.0;
        for (j, &x) in row.iter().enumerate() {
            stats.sums[label * dim + j] += x;
            stats.squares[label * dim + j] += x * x;
        }
    }
    Ok(stats)
}

fn model_from_stats(
    stats: SufficientStats,
    is_private: bool,
    epsilon_f: Option<f64>,
) -> GnbModel {
    let SufficientStats {
        counts,
        sums,
        squares,
        n_classes,
        dim,
    } = stats;
    let total: f64 = counts.iter().sum();
    let priors: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let mut means = vec![0.0; n_classes * dim];
    let mut variances = vec![0.0; n_classes * dim];
    for k in 0..n_classes {
        for j in 0..dim {
            let idx = k * dim + j;
            let mean = sums[idx] / counts[k];
            means[idx] = mean;
            variances[idx] = (squares[idx] / counts[k] - mean * mean).max(VARIANCE_FLOOR);
        }
    }
    GnbModel {
        priors,
        means,
        variances,
        n_classes,
        dim,
        is_private,
        epsilon_f,
    }
}

/// Maximum-likelihood fit: class priors from frequencies, per-class
/// per-feature Gaussian means and variances.
///
/// Every class must appear at least twice (a single point has no variance).
pub fn fit_gnb(features: &Matrix, labels: &[usize]) -> Result<GnbModel> {
    let stats = collect_stats(features, labels)?;
    if let Some(k) = stats.counts.iter().position(|c| *c < 2.0) {
        return Err(Error::domain(format!(
            "class {k} has fewer than 2 samples"
        )));
    }
    Ok(model_from_stats(stats, false, None))
}

/// Privately fitted model satisfying ε_f-DP by composition.
///
/// Features are clipped into `feature_bounds`, the budget is split into even
/// thirds across the three statistic families, and each family receives
/// Laplace noise scaled to its l1 sensitivity under a one-record
/// substitution: 2 for the count vector, 2·d·m for the sums and 2·d·m² for
/// the sums of squares, where m = max(|lo|, |hi|). Noisy counts are floored
/// at 1 and variances at [`VARIANCE_FLOOR`].
pub fn fit_dp_gnb<R: Rng + ?Sized>(
    features: &Matrix,
    labels: &[usize],
    epsilon_f: f64,
    feature_bounds: (f64, f64),
    rng: &mut R,
) -> Result<GnbModel> {
    if !(epsilon_f > 0.0) || !epsilon_f.is_finite() {
        return Err(Error::domain(format!(
            "epsilon_f must be positive, got {epsilon_f}"
        )));
    }
    let (lo, hi) = feature_bounds;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::domain(format!(
            "feature bounds must be finite with lo < hi, got [{lo}, {hi}]"
        )));
    }

    let mut clipped = features.clone();
    for i in 0..clipped.n_rows() {
        for x in clipped.row_mut(i) {
            *x = x.clamp(lo, hi);
        }
    }
    let mut stats = collect_stats(&clipped, labels)?;
    if let Some(k) = stats.counts.iter().position(|c| *c < 2.0) {
        return Err(Error::domain(format!(
            "class {k} has fewer than 2 samples"
        )));
    }

    let d = stats.dim as f64;
    let m = lo.abs().max(hi.abs());
    let per_family = epsilon_f / 3.0;
    let count_scale = 2.0 / per_family;
    let sum_scale = 2.0 * d * m / per_family;
    let square_scale = 2.0 * d * m * m / per_family;

    for c in stats.counts.iter_mut() {
        *c = (*c + laplace_noise(count_scale, rng)).max(1.0);
    }
    for s in stats.sums.iter_mut() {
        *s += laplace_noise(sum_scale, rng);
    }
    for q in stats.squares.iter_mut() {
        *q += laplace_noise(square_scale, rng);
    }
    Ok(model_from_stats(stats, true, Some(epsilon_f)))
}

/// Posterior class probabilities, one row per input row, rows summing to 1.
///
/// Likelihoods are accumulated in log space and normalized with
/// log-sum-exp, so inputs many standard deviations out still produce a
/// well-defined distribution.
pub fn predict_proba(model: &GnbModel, features: &Matrix) -> Result<Matrix> {
    if features.n_cols() != model.dim {
        return Err(Error::domain(format!(
            "input dimension {} does not match model dimension {}",
            features.n_cols(),
            model.dim
        )));
    }
    let k = model.n_classes;
    let mut out = Matrix::zeros(features.n_rows(), k);
    let mut log_post = vec![0.0f64; k];
    for (i, row) in features.rows().enumerate() {
        for (c, lp) in log_post.iter_mut().enumerate() {
            let mut acc = model.priors[c].max(f64::MIN_POSITIVE).ln();
            for (j, &x) in row.iter().enumerate() {
                let mean = model.means[c * model.dim + j];
                let var = model.variances[c * model.dim + j];
                let diff = x - mean;
                acc += -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + diff * diff / var);
            }
            *lp = acc;
        }
        let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        let out_row = out.row_mut(i);
        for (c, lp) in log_post.iter().enumerate() {
            let w = (lp - max).exp();
            out_row[c] = w;
            total += w;
        }
        for p in out_row.iter_mut() {
            *p /= total;
        }
    }
    Ok(out)
}

/// Fraction of rows whose argmax posterior matches the label. Ties break
/// toward the lower class index.
pub fn accuracy(model: &GnbModel, features: &Matrix, labels: &[usize]) -> Result<f64> {
    if features.n_rows() != labels.len() {
        return Err(Error::domain("features and labels length mismatch"));
    }
    if labels.is_empty() {
        return Err(Error::domain("accuracy needs at least one row"));
    }
    let probs = predict_proba(model, features)?;
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = probs.row(i);
        let mut arg = 0usize;
        for (c, &p) in row.iter().enumerate() {
            if p > row[arg] {
                arg = c;
            }
        }
        if arg == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Simulation helper: `n` rows with Gaussian features around two separated
/// class means.
#[cfg(test)]
fn two_class_blobs<R: Rng>(
    n: usize,
    mu: (f64, f64),
    sd: f64,
    dim: usize,
    rng: &mut R,
) -> crate::data::Dataset {
    use crate::data::Dataset;
    use rand_distr::{Distribution, Normal};

    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (m, label) = if i % 2 == 0 { (mu.0, 0) } else { (mu.1, 1) };
        let normal = Normal::new(m, sd).unwrap();
        for _ in 0..dim {
            data.push(normal.sample(rng));
        }
        labels.push(label);
    }
    Dataset::new(Matrix::new(data, dim).unwrap(), labels).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn separable_classes_reach_perfect_accuracy() {
        let mut rng = stream(1, 0);
        let train = two_class_blobs(200, (-10.0, 10.0), 0.1, 1, &mut rng);
        let test = two_class_blobs(100, (-10.0, 10.0), 0.1, 1, &mut rng);
        let model = fit_gnb(&train.features, &train.labels).unwrap();
        let acc = accuracy(&model, &test.features, &test.labels).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn identical_class_distributions_are_chance_level() {
        let mut rng = stream(2, 0);
        let train = two_class_blobs(2000, (0.0, 0.0), 1.0, 2, &mut rng);
        let test = two_class_blobs(2000, (0.0, 0.0), 1.0, 2, &mut rng);
        let model = fit_gnb(&train.features, &train.labels).unwrap();
        let acc = accuracy(&model, &test.features, &test.labels).unwrap();
        assert!((acc - 0.5).abs() < 0.05, "accuracy {acc}");
    }

    #[test]
    fn fit_rejects_underpopulated_classes() {
        let m = Matrix::new(vec![0.0, 1.0, 2.0], 1).unwrap();
        // class 1 has a single sample
        assert!(fit_gnb(&m, &[0, 0, 1]).is_err());
        // only one class present
        assert!(fit_gnb(&m, &[0, 0, 0]).is_err());
    }

    #[test]
    fn posterior_rows_sum_to_one() {
        let mut rng = stream(3, 0);
        let train = two_class_blobs(400, (-1.0, 1.0), 1.5, 3, &mut rng);
        let model = fit_gnb(&train.features, &train.labels).unwrap();
        let test = two_class_blobs(10_000, (-1.0, 1.0), 1.5, 3, &mut rng);
        let probs = predict_proba(&model, &test.features).unwrap();
        for row in probs.rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "row sum {sum}");
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn posterior_is_half_half_at_symmetric_midpoint() {
        // hand-checkable: means (0, 2), unit variances, equal priors, x = 1
        let model = GnbModel {
            priors: vec![0.5, 0.5],
            means: vec![0.0, 2.0],
            variances: vec![1.0, 1.0],
            n_classes: 2,
            dim: 1,
            is_private: false,
            epsilon_f: None,
        };
        let x = Matrix::new(vec![1.0], 1).unwrap();
        let p = predict_proba(&model, &x).unwrap();
        assert!((p.row(0)[0] - 0.5).abs() < 1e-12);
        assert!((p.row(0)[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn posterior_confident_at_class_mean() {
        let mut rng = stream(4, 0);
        let train = two_class_blobs(400, (-5.0, 5.0), 1.0, 2, &mut rng);
        let model = fit_gnb(&train.features, &train.labels).unwrap();
        let x = Matrix::new(vec![-5.0, -5.0], 2).unwrap();
        let p = predict_proba(&model, &x).unwrap();
        assert!(p.row(0)[0] > 0.99, "p0 = {}", p.row(0)[0]);
    }

    #[test]
    fn extreme_inputs_do_not_break_normalization() {
        let mut rng = stream(5, 0);
        let train = two_class_blobs(400, (-1.0, 1.0), 1.0, 2, &mut rng);
        let model = fit_gnb(&train.features, &train.labels).unwrap();
        // ten standard deviations out
        let x = Matrix::new(vec![10.0, -10.0, -10.0, 10.0], 2).unwrap();
        let p = predict_proba(&model, &x).unwrap();
        for row in p.rows() {
            let sum: f64 = row.iter().sum();
            assert!(sum.is_finite() && (sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut rng = stream(6, 0);
        let train = two_class_blobs(100, (-1.0, 1.0), 1.0, 2, &mut rng);
        let model = fit_gnb(&train.features, &train.labels).unwrap();
        let x = Matrix::new(vec![0.0, 0.0, 0.0], 3).unwrap();
        assert!(predict_proba(&model, &x).is_err());
    }

    #[test]
    fn dp_fit_converges_to_plain_fit_at_huge_budget() {
        let mut rng = stream(7, 0);
        let train = two_class_blobs(4000, (-1.0, 1.0), 2.0, 4, &mut rng);
        let plain = fit_gnb(&train.features, &train.labels).unwrap();
        let dp = fit_dp_gnb(
            &train.features,
            &train.labels,
            1e6,
            (-12.0, 12.0),
            &mut rng,
        )
        .unwrap();
        for k in 0..2 {
            assert!((plain.priors()[k] - dp.priors()[k]).abs() < 1e-3);
            for j in 0..4 {
                assert!((plain.mean(k, j) - dp.mean(k, j)).abs() < 1e-3);
                assert!((plain.variance(k, j) - dp.variance(k, j)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn dp_fit_degrades_to_chance_at_tiny_budget() {
        let mut rng = stream(8, 0);
        let mut accs = 0.0;
        let reps = 40;
        for _ in 0..reps {
            let train = two_class_blobs(2000, (-1.0, 1.0), 2.0, 4, &mut rng);
            let test = two_class_blobs(1000, (-1.0, 1.0), 2.0, 4, &mut rng);
            let dp = fit_dp_gnb(
                &train.features,
                &train.labels,
                0.01,
                (-12.0, 12.0),
                &mut rng,
            )
            .unwrap();
            accs += accuracy(&dp, &test.features, &test.labels).unwrap();
        }
        let mean_acc = accs / reps as f64;
        assert!((mean_acc - 0.5).abs() < 0.08, "mean accuracy {mean_acc}");
    }

    #[test]
    fn dp_fit_requires_finite_bounds() {
        let mut rng = stream(9, 0);
        let train = two_class_blobs(100, (-1.0, 1.0), 1.0, 2, &mut rng);
        assert!(fit_dp_gnb(
            &train.features,
            &train.labels,
            1.0,
            (f64::NEG_INFINITY, 12.0),
            &mut rng
        )
        .is_err());
        assert!(
            fit_dp_gnb(&train.features, &train.labels, 0.0, (-1.0, 1.0), &mut rng).is_err()
        );
        assert!(
            fit_dp_gnb(&train.features, &train.labels, 1.0, (2.0, 1.0), &mut rng).is_err()
        );
    }

    #[test]
    fn dp_variances_stay_positive() {
        let mut rng = stream(10, 0);
        for _ in 0..20 {
            let train = two_class_blobs(100, (-1.0, 1.0), 1.0, 2, &mut rng);
            let dp = fit_dp_gnb(
                &train.features,
                &train.labels,
                0.05,
                (-12.0, 12.0),
                &mut rng,
            )
            .unwrap();
            for k in 0..2 {
                for j in 0..2 {
                    assert!(dp.variance(k, j) >= VARIANCE_FLOOR);
                }
            }
        }
    }

    #[test]
    fn accuracy_of_constant_model_on_balanced_labels_is_half() {
        let model = GnbModel {
            priors: vec![1.0, 0.0],
            means: vec![0.0, 0.0],
            variances: vec![1.0, 1.0],
            n_classes: 2,
            dim: 1,
            is_private: false,
            epsilon_f: None,
        };
        let x = Matrix::new(vec![0.3, -0.2, 0.7, -0.9], 1).unwrap();
        let acc = accuracy(&model, &x, &[0, 1, 0, 1]).unwrap();
        assert_eq!(acc, 0.5);
    }
}
