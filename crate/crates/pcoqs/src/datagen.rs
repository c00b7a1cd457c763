//! Synthetic two-class Gaussian benchmark data and deterministic splitting.
//!
//! The default generator draws a class-balanced binary problem with eight
//! features: class 0 is isotropic Gaussian with mean 0.8 and variance 7 per
//! coordinate, class 1 has mean -1 and variance 8. The slightly unequal
//! variances give the problem a mildly non-linear optimal boundary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};

/// Default train/calibration/test fractions.
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.60, 0.24, 0.16);

/// Parameters of the synthetic two-class Gaussian generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Total sample size before splitting.
    pub n: usize,
    /// Feature dimension.
    pub dim: usize,
    /// Per-dimension means of class 0.
    pub mu1: Vec<f64>,
    /// Per-dimension means of class 1.
    pub mu2: Vec<f64>,
    /// Isotropic variance of class 0.
    pub var1: f64,
    /// Isotropic variance of class 1.
    pub var2: f64,
    /// Train/calibration/test fractions, each positive, summing to 1.
    pub split_fractions: (f64, f64, f64),
}

impl SyntheticSpec {
    /// The benchmark defaults: dim 8, means 0.8 and -1, variances 7 and 8,
    /// 60/24/16 split.
    pub fn with_n(n: usize) -> Self {
        SyntheticSpec {
            n,
            dim: 8,
            mu1: vec![0.8; 8],
            mu2: vec![-1.0; 8],
            var1: 7.0,
            var2: 8.0,
            split_fractions: DEFAULT_SPLIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("n must be positive"));
        }
        if self.dim == 0 {
            return Err(Error::domain("dim must be positive"));
        }
        if self.mu1.len() != self.dim || self.mu2.len() != self.dim {
            return Err(Error::domain(format!(
                "mean vectors must have length dim = {}",
                self.dim
            )));
        }
        if !(self.var1 > 0.0) || !(self.var2 > 0.0) {
            return Err(Error::domain("variances must be positive"));
        }
        validate_fractions(self.split_fractions)?;
        Ok(())
    }
}

fn validate_fractions(fractions: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(Error::domain("split fractions must all be positive"));
    }
    if ((a + b + c) - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "split fractions must sum to 1, got {}",
            a + b + c
        )));
    }
    Ok(())
}

/// Draw a class-balanced dataset: ceil(n/2) rows of class 0 and floor(n/2)
/// of class 1, features i.i.d. Gaussian per coordinate, rows shuffled.
/// Bit-identical for a fixed generator state.
pub fn generate<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let n0 = spec.n.div_ceil(2);
    let n1 = spec.n / 2;
    let sd1 = spec.var1.sqrt();
    let sd2 = spec.var2.sqrt();

    let mut data = Vec::with_capacity(spec.n * spec.dim);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..n0 {
        for j in 0..spec.dim {
            let dist = Normal::new(spec.mu1[j], sd1).expect("validated sd");
            data.push(dist.sample(rng));
        }
        labels.push(0);
    }
    for _ in 0..n1 {
        for j in 0..spec.dim {
            let dist = Normal::new(spec.mu2[j], sd2).expect("validated sd");
            data.push(dist.sample(rng));
        }
        labels.push(1);
    }
    let ds = Dataset::new(Matrix::new(data, spec.dim)?, labels)?;

    let mut order: Vec<usize> = (0..spec.n).collect();
    order.shuffle(rng);
    Ok(ds.select(&order))
}

/// Disjoint, exhaustive train/calibration/test partition.
///
/// Calibration and test take exactly floor(f·n) rows each; any remainder
/// goes to training so the calibration size (which drives the guarantees)
/// stays exact. The permutation is drawn from `rng`.
pub fn split<R: Rng + ?Sized>(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    rng: &mut R,
) -> Result<(Dataset, Dataset, Dataset)> {
    validate_fractions(fractions)?;
    if dataset.is_empty() {
        return Err(Error::domain("cannot split an empty dataset"));
    }
    let n = dataset.len();
    let n_cal = (fractions.1 * n as f64).floor() as usize;
    let n_test = (fractions.2 * n as f64).floor() as usize;
    let n_train = n - n_cal - n_test;
    if n_train == 0 || n_cal == 0 || n_test == 0 {
        return Err(Error::domain(format!(
            "split of n = {n} leaves an empty partition (train {n_train}, cal {n_cal}, test {n_test})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let train = dataset.select(&order[..n_train]);
    let cal = dataset.select(&order[n_train..n_train + n_cal]);
    let test = dataset.select(&order[n_train + n_cal..]);
    Ok((train, cal, test))
}

/// Write the dataset as CSV with header `f0,..,f{d-1},label`.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        let d = dataset.features.n_cols();
        for j in 0..d {
            write!(w, "f{j},")?;
        }
        writeln!(w, "label")?;
        for (row, label) in dataset.features.rows().zip(&dataset.labels) {
            for x in row {
                write!(w, "{x},")?;
            }
            writeln!(w, "{label}")?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn defaults_match_benchmark_parameters() {
        let spec = SyntheticSpec::with_n(10_000);
        assert_eq!(spec.dim, 8);
        assert_eq!(spec.mu1, vec![0.8; 8]);
        assert_eq!(spec.mu2, vec![-1.0; 8]);
        assert_eq!(spec.var1, 7.0);
        assert_eq!(spec.var2, 8.0);
        assert_eq!(spec.split_fractions, (0.60, 0.24, 0.16));
        spec.validate().unwrap();
    }

    #[test]
    fn class_counts_are_balanced() {
        let mut rng = stream(1, 0);
        for n in [2usize, 7, 100, 999] {
            let ds = generate(&SyntheticSpec::with_n(n), &mut rng).unwrap();
            let c0 = ds.labels.iter().filter(|l| **l == 0).count();
            let c1 = ds.len() - c0;
            assert_eq!(c0, n.div_ceil(2));
            assert_eq!(c1, n / 2);
            assert!(c0.abs_diff(c1) <= 1);
        }
    }

    #[test]
    fn sample_moments_match_generator_parameters() {
        let mut rng = stream(12, 0);
        let ds = generate(&SyntheticSpec::with_n(10_000), &mut rng).unwrap();
        for class in 0..2 {
            let (target_mu, target_var) = if class == 0 { (0.8, 7.0) } else { (-1.0, 8.0) };
            for j in 0..8 {
                let vals: Vec<f64> = ds
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| **l == class)
                    .map(|(i, _)| ds.features.row(i)[j])
                    .collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                assert!((mean - target_mu).abs() < 0.1, "mean {mean} (dim {j})");
                assert!((var - target_var).abs() < 0.5, "var {var} (dim {j})");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::with_n(500);
        let a = generate(&spec, &mut stream(9, 1)).unwrap();
        let b = generate(&spec, &mut stream(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_sizes_follow_floor_arithmetic() {
        let mut rng = stream(3, 0);
        let ds = generate(&SyntheticSpec::with_n(10_000), &mut rng).unwrap();
        let (train, cal, test) = split(&ds, DEFAULT_SPLIT, &mut rng).unwrap();
        assert_eq!((train.len(), cal.len(), test.len()), (6000, 2400, 1600));

        let ds = generate(&SyntheticSpec::with_n(100), &mut rng).unwrap();
        let (train, cal, test) = split(&ds, DEFAULT_SPLIT, &mut rng).unwrap();
        assert_eq!((train.len(), cal.len(), test.len()), (60, 24, 16));

        // remainder rows go to training
        let ds = generate(&SyntheticSpec::with_n(103), &mut rng).unwrap();
        let (train, cal, test) = split(&ds, DEFAULT_SPLIT, &mut rng).unwrap();
        assert_eq!((train.len(), cal.len(), test.len()), (63, 24, 16));
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let mut rng = stream(4, 0);
        for trial in 0..100 {
            let n = 10 + (trial * 37) % 500;
            let spec = SyntheticSpec::with_n(n);
            let ds = generate(&spec, &mut rng).unwrap();
            match split(&ds, DEFAULT_SPLIT, &mut rng) {
                Ok((train, cal, test)) => {
                    assert_eq!(train.len() + cal.len() + test.len(), n);
                    // exhaustiveness via multiset equality of feature sums
                    let total: f64 = ds.features.rows().flat_map(|r| r.iter()).sum();
                    let parts: f64 = [&train, &cal, &test]
                        .iter()
                        .flat_map(|p| p.features.rows())
                        .flat_map(|r| r.iter())
                        .sum();
                    assert!((total - parts).abs() < 1e-9 * total.abs().max(1.0));
                }
                Err(_) => assert!(n < 10, "split failed for n = {n}"),
            }
        }
    }

    #[test]
    fn split_same_seed_is_identical() {
        let ds = generate(&SyntheticSpec::with_n(200), &mut stream(5, 0)).unwrap();
        let a = split(&ds, DEFAULT_SPLIT, &mut stream(5, 1)).unwrap();
        let b = split(&ds, DEFAULT_SPLIT, &mut stream(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_configs_with_empty_partitions() {
        let ds = generate(&SyntheticSpec::with_n(3), &mut stream(6, 0)).unwrap();
        assert!(split(&ds, DEFAULT_SPLIT, &mut stream(6, 1)).is_err());
        let ds = generate(&SyntheticSpec::with_n(100), &mut stream(6, 2)).unwrap();
        assert!(split(&ds, (0.5, 0.25, 0.35), &mut stream(6, 3)).is_err());
    }

    #[test]
    fn csv_export_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = generate(&SyntheticSpec::with_n(20), &mut stream(7, 0)).unwrap();
        write_csv(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "f0,f1,f2,f3,f4,f5,f6,f7,label"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 20);
        let first: Vec<&str> = rows[0].split(',').collect();
        assert_eq!(first.len(), 9);
        let back: f64 = first[0].parse().unwrap();
        assert_eq!(back, ds.features.row(0)[0]);
        let label: usize = first[8].parse().unwrap();
        assert_eq!(label, ds.labels[0]);
    }

    #[test]
    fn distribution_matches_target_gaussian() {
        // one-sample KS test of a single coordinate against its target law
        use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
        let mut rng = stream(8, 0);
        let spec = SyntheticSpec::with_n(100_000);
        let ds = generate(&spec, &mut rng).unwrap();
        let mut vals: Vec<f64> = ds
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == 0)
            .map(|(i, _)| ds.features.row(i)[3])
            .collect();
        vals.sort_unstable_by(|a, b| a.total_cmp(b));
        let target = StatNormal::new(0.8, 7.0_f64.sqrt()).unwrap();
        let n = vals.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, v) in vals.iter().enumerate() {
            let cdf = target.cdf(*v);
            ks = ks.max((cdf - i as f64 / n).abs());
            ks = ks.max(((i + 1) as f64 / n - cdf).abs());
        }
        // 1% critical value for large samples: 1.628 / sqrt(n)
        let critical = 1.628 / n.sqrt();
        assert!(ks < critical, "KS statistic {ks} >= {critical}");
    }
}
