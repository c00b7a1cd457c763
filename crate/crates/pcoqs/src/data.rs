//! Row-major feature matrices and labeled datasets.

use crate::error::{Error, Result};

/// A dense row-major matrix of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 {
            return Err(Error::domain("matrix must have at least one column"));
        }
        if data.len() % cols != 0 {
            return Err(Error::domain(format!(
                "matrix data length {} is not a multiple of {cols} columns",
                data.len()
            )));
        }
        Ok(Matrix { data, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            data: vec![0.0; rows * cols],
            cols,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }
}

/// Features plus integer class labels in `{0, ..., K-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::domain(format!(
                "feature rows ({}) and labels ({}) disagree",
                features.n_rows(),
                labels.len()
            )));
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of classes, taken as max label + 1.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// The subset of rows selected by `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let cols = self.features.n_cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features: Matrix { data, cols },
            labels,
        }
    }
}
