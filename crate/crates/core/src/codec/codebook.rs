use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::code::check_indices;
use crate::error::{DpqError, Result};

/// The M centroid matrices `C_m`, each K x D.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<Array2<f64>>,
}

impl Codebook {
    pub fn new(centroids: Vec<Array2<f64>>) -> Result<Self> {
        let first = centroids.first().ok_or(DpqError::Empty("codebook"))?;
        let (k, d) = first.dim();
        if k == 0 || d == 0 {
            return Err(DpqError::Empty("codebook partition"));
        }
        if !k.is_power_of_two() {
            return Err(DpqError::NotPowerOfTwo(k));
        }
        for c in &centroids {
            if c.nrows() != k {
                return Err(DpqError::ShapeMismatch {
                    what: "codebook rows",
                    expected: k,
                    actual: c.nrows(),
                });
            }
            if c.ncols() != d {
                return Err(DpqError::ShapeMismatch {
                    what: "codebook row dimension",
                    expected: d,
                    actual: c.ncols(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(DpqError::NonFinite("codebook"));
            }
        }
        Ok(Self { centroids })
    }

    pub fn num_partitions(&self) -> usize {
        self.centroids.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.centroids[0].nrows()
    }

    pub fn centroid_dim(&self) -> usize {
        self.centroids[0].ncols()
    }

    /// Dimension of a full reconstruction, `M * D`.
    pub fn dim(&self) -> usize {
        self.num_partitions() * self.centroid_dim()
    }

    pub fn partition(&self, m: usize) -> ArrayView2<'_, f64> {
        self.centroids[m].view()
    }

    pub fn row(&self, m: usize, k: usize) -> ArrayView1<'_, f64> {
        self.centroids[m].row(k)
    }

    pub fn partitions(&self) -> &[Array2<f64>] {
        &self.centroids
    }

    pub(crate) fn partitions_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.centroids
    }

    pub fn into_partitions(self) -> Vec<Array2<f64>> {
        self.centroids
    }

    /// Concatenation `[C_1(z_1), .., C_M(z_M)]`.
    pub fn reconstruct(&self, code: &[u32]) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.dim());
        self.reconstruct_into(code, out.as_slice_mut().expect("contiguous"))?;
        Ok(out)
    }

    pub fn reconstruct_into(&self, code: &[u32], out: &mut [f64]) -> Result<()> {
        if code.len() != self.num_partitions() {
            return Err(DpqError::ShapeMismatch {
                what: "code length",
                expected: self.num_partitions(),
                actual: code.len(),
            });
        }
        if out.len() != self.dim() {
            return Err(DpqError::ShapeMismatch {
                what: "reconstruction buffer",
                expected: self.dim(),
                actual: out.len(),
            });
        }
        check_indices(code, self.num_clusters())?;
        let d = self.centroid_dim();
        for (m, (&z, chunk)) in code.iter().zip(out.chunks_exact_mut(d)).enumerate() {
            for (o, c) in chunk.iter_mut().zip(self.centroids[m].row(z as usize)) {
                *o = *c;
            }
        }
        Ok(())
    }

    /// Returns a copy with every element scaled by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.centroids.iter().map(|c| c * alpha).collect())
    }
}
