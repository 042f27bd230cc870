//! Linear function approximation: a shared `|S| x K` feature matrix and
//! weight vectors that evaluate as `<w, phi(s)>`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// State features as the rows of a dense matrix `Phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    matrix: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Shape("feature matrix must be non-empty".into()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("feature matrix contains non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::Shape("feature matrix must be non-empty".into()));
        }
        let ncols = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::Shape(format!(
                    "feature row {i} has length {}, expected {ncols}",
                    row.len()
                )));
            }
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::new(DMatrix::from_row_slice(nrows, ncols, &flat))
    }

    /// Identity features: one indicator per state.
    pub fn tabular(num_states: usize) -> Self {
        Self {
            matrix: DMatrix::identity(num_states, num_states),
        }
    }

    pub fn num_states(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `phi(s)` as a row view.
    pub fn row(&self, s: usize) -> RowDVector<f64> {
        RowDVector::from_row_slice(self.matrix.row(s).transpose().as_slice())
    }

    /// `phi(s) . w` without materializing the row.
    pub fn dot(&self, s: usize, weights: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.matrix.ncols() {
            acc += self.matrix[(s, k)] * weights[k];
        }
        acc
    }

    /// `Phi w`: the value of every state under `weights`.
    pub fn values(&self, weights: &DVector<f64>) -> DVector<f64> {
        &self.matrix * weights
    }

    /// Numerical column rank (SVD, relative tolerance 1e-10).
    pub fn rank(&self) -> usize {
        linalg::rank(&self.matrix, 1e-10)
    }
}

/// A weight vector bound to its feature map; used for both value weights `w`
/// and emphasis weights `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunction {
    features: Arc<FeatureMap>,
    weights: DVector<f64>,
}

impl LinearFunction {
    pub fn new(features: Arc<FeatureMap>, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != features.num_features() {
            return Err(Error::Shape(format!(
                "weight vector has length {} but features have {} columns",
                weights.len(),
                features.num_features()
            )));
        }
        Ok(Self { features, weights })
    }

    pub fn zeros(features: Arc<FeatureMap>) -> Self {
        let k = features.num_features();
        Self {
            features,
            weights: DVector::zeros(k),
        }
    }

    pub fn evaluate(&self, s: usize) -> f64 {
        self.features.dot(s, &self.weights)
    }

    /// `Phi w` over all states.
    pub fn all_values(&self) -> DVector<f64> {
        self.features.values(&self.weights)
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn features(&self) -> &Arc<FeatureMap> {
        &self.features
    }

    /// Same features, new weights. The update rules are pure functions and
    /// produce their results through this.
    pub fn with_weights(&self, weights: DVector<f64>) -> Self {
        Self {
            features: Arc::clone(&self.features),
            weights,
        }
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.norm()
    }
}
