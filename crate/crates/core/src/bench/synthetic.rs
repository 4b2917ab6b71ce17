use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::VectorSet;
use crate::error::{DpqError, Result};

/// Gaussian class blobs standing in for image embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub points_per_class: usize,
    /// Per-coordinate standard deviation around the class mean.
    pub cluster_spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 10 classes, dimension 64, 500 points per class, spread 0.3, seed 7.
    pub fn standard() -> Self {
        Self {
            num_classes: 10,
            dim: 64,
            points_per_class: 500,
            cluster_spread: 0.3,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || self.points_per_class == 0 {
            return Err(DpqError::InvalidConfig(
                "synthetic classes, dim and points per class must be positive".into(),
            ));
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread > 0.0) {
            return Err(DpqError::InvalidConfig(format!(
                "cluster spread must be positive, got {}",
                self.cluster_spread
            )));
        }
        Ok(())
    }
}

/// Class means with i.i.d. N(0, 1/dim) coordinates (expected squared norm 1),
/// one matrix row per class.
pub fn class_means(spec: &SyntheticSpec) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = 1.0 / (spec.dim as f64).sqrt();
    Array2::from_shape_fn((spec.num_classes, spec.dim), |_| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Points ordered class by class; labels are `0..num_classes`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<VectorSet> {
    spec.validate()?;
    let means = class_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let noise = Normal::new(0.0, spec.cluster_spread).expect("validated spread");
    let n = spec.num_classes * spec.points_per_class;
    let mut x = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.axis_iter(Axis(0)).enumerate() {
        for i in 0..spec.points_per_class {
            let mut row = x.row_mut(c * spec.points_per_class + i);
            for (v, mu) in row.iter_mut().zip(mean) {
                *v = mu + noise.sample(&mut rng);
            }
            labels.push(c);
        }
    }
    VectorSet::new(x, Some(labels))
}
