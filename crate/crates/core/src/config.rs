//! Hyperparameters shared by the PQ baseline and the DPQ model.

use serde::{Deserialize, Serialize};

use crate::error::{DpqError, Result};

/// Weights of the five training objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub softmax: f64,
    pub central: f64,
    pub gini_batch: f64,
    pub gini_sample: f64,
    pub weight_decay: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            softmax: 1.0,
            central: 0.5,
            gini_batch: 0.1,
            gini_sample: 0.1,
            weight_decay: 5e-4,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            softmax: 0.0,
            central: 0.0,
            gini_batch: 0.0,
            gini_sample: 0.0,
            weight_decay: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.softmax,
            self.central,
            self.gini_batch,
            self.gini_sample,
            self.weight_decay,
        ]
    }

    pub fn from_array(w: [f64; 5]) -> Self {
        Self {
            softmax: w[0],
            central: w[1],
            gini_batch: w[2],
            gini_sample: w[3],
            weight_decay: w[4],
        }
    }
}

/// Optimization schedule: SGD with momentum and a single step decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplier applied to the learning rate once `decay_at` of the epochs have run.
    pub decay_factor: f64,
    pub decay_at: f64,
    /// Train the hard path (softmax + central loss on the hard representation,
    /// straight-through gradients). Disabling gives the soft-only ablation.
    pub hard_path: bool,
    /// Lloyd iterations used when seeding the codebooks.
    pub kmeans_iters: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            decay_factor: 0.1,
            decay_at: 2.0 / 3.0,
            hard_path: true,
            kmeans_iters: 100,
        }
    }
}

impl Schedule {
    /// Learning rate in effect for the given (zero-based) epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let boundary = (self.epochs as f64 * self.decay_at).ceil() as usize;
        if epoch >= boundary {
            self.learning_rate * self.decay_factor
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    /// M: number of disjoint partitions.
    pub num_partitions: usize,
    /// K: clusters per partition, a power of two.
    pub num_clusters: usize,
    /// D: dimension of each codebook row.
    pub centroid_dim: usize,
    /// L: dimension of raw input vectors.
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// C: number of class labels.
    pub num_classes: usize,
    /// Width of the optional affine+ReLU layer applied before slicing.
    pub front_dim: Option<usize>,
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub seed: u64,
}

impl QuantizerConfig {
    /// Plain configuration with default weights and schedule, `D = L / M` and no front layer.
    pub fn new(
        input_dim: usize,
        num_partitions: usize,
        num_clusters: usize,
        num_classes: usize,
    ) -> Self {
        Self {
            num_partitions,
            num_clusters,
            centroid_dim: input_dim / num_partitions.max(1),
            input_dim,
            hidden_dim: 64,
            num_classes,
            front_dim: None,
            weights: LossWeights::default(),
            schedule: Schedule::default(),
            seed: 0,
        }
    }

    /// Single-domain preset: K = 64, per-slice MLP of 128 hidden units, `D = L / M`.
    pub fn cifar_style(input_dim: usize, num_partitions: usize, num_classes: usize) -> Self {
        Self {
            num_clusters: 64,
            hidden_dim: 128,
            ..Self::new(input_dim, num_partitions, 64, num_classes)
        }
    }

    /// Cross-domain preset: 2048-unit front layer, M = 8, K = 256, D = 64 (64-bit codes).
    pub fn crossdomain_style(input_dim: usize, num_classes: usize) -> Self {
        Self {
            num_partitions: 8,
            num_clusters: 256,
            centroid_dim: 64,
            hidden_dim: 256,
            front_dim: Some(2048),
            ..Self::new(input_dim, 8, 256, num_classes)
        }
    }

    /// Number of bits of one compressed code, `M * log2(K)`.
    pub fn code_bits(&self) -> usize {
        self.num_partitions * self.num_clusters.trailing_zeros() as usize
    }

    /// Dimension of the representation fed to the slicer.
    pub fn sliced_dim(&self) -> usize {
        self.front_dim.unwrap_or(self.input_dim)
    }

    /// Width of one slice; trailing units that do not divide evenly are dropped.
    pub fn slice_width(&self) -> usize {
        self.sliced_dim() / self.num_partitions
    }

    /// V = M * D.
    pub fn representation_dim(&self) -> usize {
        self.num_partitions * self.centroid_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_partitions", self.num_partitions),
            ("num_clusters", self.num_clusters),
            ("centroid_dim", self.centroid_dim),
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(DpqError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !self.num_clusters.is_power_of_two() {
            return Err(DpqError::NotPowerOfTwo(self.num_clusters));
        }
        if self.front_dim == Some(0) {
            return Err(DpqError::InvalidConfig("front_dim must be positive".into()));
        }
        if self.slice_width() == 0 {
            return Err(DpqError::InvalidConfig(format!(
                "cannot slice {} units into {} partitions",
                self.sliced_dim(),
                self.num_partitions
            )));
        }
        for (i, w) in self.weights.as_array().iter().enumerate() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(DpqError::InvalidConfig(format!(
                    "loss weight #{i} must be finite and nonnegative, got {w}"
                )));
            }
        }
        let s = &self.schedule;
        if s.batch_size == 0 {
            return Err(DpqError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(s.learning_rate.is_finite() && s.learning_rate > 0.0) {
            return Err(DpqError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&s.momentum) {
            return Err(DpqError::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if s.kmeans_iters == 0 {
            return Err(DpqError::InvalidConfig("kmeans_iters must be positive".into()));
        }
        Ok(())
    }
}
