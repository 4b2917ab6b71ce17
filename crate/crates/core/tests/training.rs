use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use dpq::bench::top_k_accuracy;
use dpq::model::{train, train_with_log};
use dpq::{LossWeights, QuantizerConfig, Schedule, VectorSet};

/// Two classes separated along the first axis by a margin of 2.
fn separable(seed: u64, per_class: usize) -> VectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((2 * per_class, 8));
    let mut labels = Vec::new();
    for i in 0..2 * per_class {
        let class = i / per_class;
        let sign = if class == 0 { -1.0 } else { 1.0 };
        x[[i, 0]] = sign * rng.random_range(1.0..2.0);
        for j in 1..8 {
            x[[i, j]] = rng.random_range(-1.0..1.0);
        }
        labels.push(class);
    }
    VectorSet::new(x, Some(labels)).unwrap()
}

/// Gaussian blobs around well-separated means.
fn blobs(seed: u64, classes: usize, per_class: usize, dim: usize) -> VectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = Array2::from_shape_fn((classes, dim), |_| 3.0 * rng.sample::<f64, _>(StandardNormal));
    let mut x = Array2::zeros((classes * per_class, dim));
    let mut labels = Vec::new();
    for i in 0..classes * per_class {
        let c = i / per_class;
        for j in 0..dim {
            x[[i, j]] = means[[c, j]] + 0.5 * rng.sample::<f64, _>(StandardNormal);
        }
        labels.push(c);
    }
    VectorSet::new(x, Some(labels)).unwrap()
}

fn config(dim: usize, m: usize, k: usize, classes: usize, epochs: usize) -> QuantizerConfig {
    let mut c = QuantizerConfig::new(dim, m, k, classes);
    c.hidden_dim = 16;
    c.seed = 11;
    c.schedule = Schedule {
        epochs,
        batch_size: 32,
        ..Schedule::default()
    };
    c
}

fn hard_accuracy(model: &dpq::DpqModel, data: &VectorSet) -> f64 {
    let scores = model.predict_hard(data.vectors().view()).unwrap();
    let rows: Vec<Vec<f64>> = scores.rows().into_iter().map(|r| r.to_vec()).collect();
    top_k_accuracy(&rows, data.labels().unwrap(), 1).unwrap()
}

#[test]
fn loss_decreases_on_a_separable_toy() {
    let data = separable(1, 100);
    let cfg = config(8, 2, 4, 2, 30);
    let (_, log) = train_with_log(&data, &cfg).unwrap();
    // Gini terms make the objective bounded below by a negative constant;
    // tolerances apply to the excess over that bound.
    let w = cfg.weights;
    let m = cfg.num_partitions as f64;
    let floor = m * (w.gini_batch / cfg.num_clusters as f64 - w.gini_sample);
    let losses: Vec<f64> = log.total_losses().iter().map(|l| l - floor).collect();
    assert!(losses.iter().all(|l| *l >= 0.0));
    for (e, pair) in losses.windows(2).enumerate() {
        assert!(pair[1] <= pair[0] * 1.05, "epoch {}: {} -> {}", e + 1, pair[0], pair[1]);
    }
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn learns_separated_blobs() {
    let train_set = blobs(2, 4, 100, 8);
    let model = train(&train_set, &config(8, 2, 8, 4, 40)).unwrap();
    let held_out = blobs(2, 4, 150, 8).select(&(400..600).collect::<Vec<_>>());
    assert!(hard_accuracy(&model, &train_set) >= 0.95);
    assert!(hard_accuracy(&model, &held_out) >= 0.95);
}

#[test]
fn batch_gini_spreads_cluster_usage() {
    let data = blobs(3, 8, 60, 8);
    let mut cfg = config(8, 2, 8, 8, 30);
    cfg.weights = LossWeights {
        gini_batch: 1.0,
        ..LossWeights::default()
    };
    let (_, log) = train_with_log(&data, &cfg).unwrap();
    let last = log.last().unwrap();
    for m in 0..2 {
        let share = last.max_cluster_share(m);
        assert!(share <= 0.8, "partition {m}: largest cluster holds {share}");
    }
}
