use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{DpqError, Result};

/// An N x L matrix of embedding vectors with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    vectors: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl VectorSet {
    pub fn new(vectors: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(labels) = &labels {
            if labels.len() != vectors.nrows() {
                return Err(DpqError::ShapeMismatch {
                    what: "label count",
                    expected: vectors.nrows(),
                    actual: labels.len(),
                });
            }
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(DpqError::NonFinite("vector set"));
        }
        Ok(Self { vectors, labels })
    }

    pub fn unlabeled(vectors: Array2<f64>) -> Result<Self> {
        Self::new(vectors, None)
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or an error if the set is unlabeled.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| DpqError::InvalidConfig("vector set has no labels".into()))
    }

    /// One more than the largest label, or 0 when unlabeled/empty.
    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(0)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            vectors: self.vectors.select(Axis(0), indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn into_parts(self) -> (Array2<f64>, Option<Vec<usize>>) {
        (self.vectors, self.labels)
    }
}
