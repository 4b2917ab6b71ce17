use log::{debug, warn};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::{total_loss, GradientMode, LossBreakdown, LossOptions};
use super::{DpqModel, Params};
use crate::codec::VectorSet;
use crate::config::QuantizerConfig;
use crate::error::{DpqError, Result};
use crate::pq::partition_seed;

/// Points used to seed the codebooks before the first epoch.
const WARMUP_POINTS: usize = 1024;

/// Summary of one training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Sample-weighted mean of the per-batch loss terms.
    pub loss: LossBreakdown,
    /// `cluster_usage[m][k]`: training points whose argmax in partition m was k.
    pub cluster_usage: Vec<Vec<u64>>,
}

impl EpochStats {
    /// Largest fraction of points assigned to a single cluster of partition `m`.
    pub fn max_cluster_share(&self, m: usize) -> f64 {
        let row = &self.cluster_usage[m];
        let total: u64 = row.iter().sum();
        if total == 0 {
            return 0.0;
        }
        *row.iter().max().unwrap_or(&0) as f64 / total as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainingLog {
    pub fn total_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss.total()).collect()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

pub fn train(data: &VectorSet, config: &QuantizerConfig) -> Result<DpqModel> {
    train_with_log(data, config).map(|(model, _)| model)
}

/// Trains a model from scratch and returns it with per-epoch statistics.
///
/// Runs on the calling thread; identical inputs give bit-identical models.
pub fn train_with_log(data: &VectorSet, config: &QuantizerConfig) -> Result<(DpqModel, TrainingLog)> {
    config.validate()?;
    if data.is_empty() {
        return Err(DpqError::Empty("training set"));
    }
    if data.dim() != config.input_dim {
        return Err(DpqError::ShapeMismatch {
            what: "training vector dimension",
            expected: config.input_dim,
            actual: data.dim(),
        });
    }
    let labels = data.require_labels()?;
    let classes = config.num_classes;
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(DpqError::LabelOutOfRange { label, classes });
    }
    let mut seen = vec![false; classes];
    labels.iter().for_each(|&y| seen[y] = true);
    for (c, _) in seen.iter().enumerate().filter(|(_, s)| !**s) {
        warn!("class {c} has no training points");
    }

    let schedule = &config.schedule;
    let mut rng = ChaCha8Rng::seed_from_u64(partition_seed(config.seed, usize::MAX - 1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);

    let warmup = data.vectors().select(Axis(0), &order[..order.len().min(WARMUP_POINTS)]);
    let mut model = DpqModel::init(config, warmup.view())?;
    let mut velocity = model.params().zeros_like();
    let options = LossOptions {
        gradient: GradientMode::StraightThrough,
        hard_path: schedule.hard_path,
    };

    let mut log = TrainingLog::default();
    for epoch in 0..schedule.epochs {
        let lr = schedule.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = LossBreakdown::default();
        let mut usage = vec![vec![0u64; config.num_clusters]; config.num_partitions];

        for (step, batch) in order.chunks(schedule.batch_size).enumerate() {
            let x: Array2<f64> = data.vectors().select(Axis(0), batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let trace = model.forward_batch(x.view())?;
            let out = total_loss(&model, &trace, &y, &config.weights, &options)?;
            if !out.breakdown.is_finite() || !out.grads.is_finite() {
                return Err(DpqError::Diverged {
                    epoch,
                    step,
                    detail: format!("loss terms {:?}", out.breakdown),
                });
            }
            for (i, code) in trace.codes.chunks(config.num_partitions).enumerate() {
                debug_assert!(i < batch.len());
                for (m, &k) in code.iter().enumerate() {
                    usage[m][k as usize] += 1;
                }
            }
            epoch_loss.accumulate(&out.breakdown, batch.len() as f64 / data.len() as f64);
            sgd_step(model.params_mut(), &mut velocity, &out.grads, lr, schedule.momentum);
            if !model.params().is_finite() {
                return Err(DpqError::Diverged {
                    epoch,
                    step,
                    detail: "non-finite parameters after update".into(),
                });
            }
        }

        debug!("epoch {epoch}: lr {lr}, loss {:.6}", epoch_loss.total());
        log.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            loss: epoch_loss,
            cluster_usage: usage,
        });
    }
    Ok((model, log))
}

/// `v <- mu v - lr g; theta <- theta + v`.
fn sgd_step(params: &mut Params, velocity: &mut Params, grads: &Params, lr: f64, momentum: f64) {
    for ((mut p, mut v), g) in params
        .tensors_mut()
        .into_iter()
        .zip(velocity.tensors_mut())
        .zip(grads.tensors())
    {
        v *= momentum;
        v.scaled_add(-lr, &g);
        p += &v;
    }
}
