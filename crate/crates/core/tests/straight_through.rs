#![allow(clippy::needless_range_loop)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpq::model::{representation_backward, GradientMode};
use dpq::{DpqModel, QuantizerConfig};

/// Slice-MLP gradients of `sum(g * hard)` with the one-hot replaced by `p`,
/// written as plain loops over a single sample at a time.
fn scalar_oracle(model: &DpqModel, x: &Array2<f64>, g: &Array2<f64>) -> Vec<[Vec<f64>; 4]> {
    let cfg = model.config();
    let (m_parts, k, d, width) = (cfg.num_partitions, cfg.num_clusters, cfg.centroid_dim, cfg.slice_width());
    let h = cfg.hidden_dim;
    let p = model.params();
    let mut out: Vec<[Vec<f64>; 4]> = (0..m_parts)
        .map(|_| [vec![0.0; width * h], vec![0.0; h], vec![0.0; h * k], vec![0.0; k]])
        .collect();
    for i in 0..x.nrows() {
        for m in 0..m_parts {
            let mlp = &p.slices[m];
            let input: Vec<f64> = (0..width).map(|j| x[[i, m * width + j]]).collect();
            let mut pre = vec![0.0; h];
            for u in 0..h {
                pre[u] = mlp.hidden.bias[u];
                for j in 0..width {
                    pre[u] += input[j] * mlp.hidden.weight[[j, u]];
                }
            }
            let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
            let mut logits = vec![0.0; k];
            for c in 0..k {
                logits[c] = mlp.output.bias[c];
                for u in 0..h {
                    logits[c] += act[u] * mlp.output.weight[[u, c]];
                }
            }
            let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = exps.iter().sum();
            let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();

            let centroids = p.codebook.partition(m);
            let mut dp = vec![0.0; k];
            for c in 0..k {
                for t in 0..d {
                    dp[c] += g[[i, m * d + t]] * centroids[[c, t]];
                }
            }
            let dot: f64 = (0..k).map(|c| probs[c] * dp[c]).sum();
            let dlogit: Vec<f64> = (0..k).map(|c| probs[c] * (dp[c] - dot)).collect();
            let mut dact = vec![0.0; h];
            for u in 0..h {
                for c in 0..k {
                    out[m][2][u * k + c] += act[u] * dlogit[c];
                    dact[u] += mlp.output.weight[[u, c]] * dlogit[c];
                }
            }
            for c in 0..k {
                out[m][3][c] += dlogit[c];
            }
            for u in 0..h {
                let dpre = if pre[u] > 0.0 { dact[u] } else { 0.0 };
                out[m][1][u] += dpre;
                for j in 0..width {
                    out[m][0][j * h + u] += input[j] * dpre;
                }
            }
        }
    }
    out
}

#[test]
fn hard_path_gradient_matches_scalar_pass_through_oracle() {
    for seed in 0..5u64 {
        let mut cfg = QuantizerConfig::new(8, 2, 8, 3);
        cfg.hidden_dim = 6;
        cfg.centroid_dim = 3;
        cfg.seed = seed;
        let model = DpqModel::random(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((7, 8), |_| rng.random_range(-2.0..2.0));
        let g = Array2::from_shape_fn((7, 6), |_| rng.random_range(-1.0..1.0));
        let trace = model.forward_batch(x.view()).unwrap();
        let zero = Array2::zeros(g.raw_dim());
        let grads =
            representation_backward(&model, &trace, zero.view(), g.view(), GradientMode::StraightThrough).unwrap();
        let want = scalar_oracle(&model, &x, &g);
        for (m, w) in want.iter().enumerate() {
            let s = &grads.slices[m];
            let got = [
                s.hidden.weight.iter().copied().collect::<Vec<_>>(),
                s.hidden.bias.to_vec(),
                s.output.weight.iter().copied().collect(),
                s.output.bias.to_vec(),
            ];
            for (a, b) in got.iter().zip(w) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "seed {seed} partition {m}: {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn exact_mode_blocks_the_hard_path() {
    let mut cfg = QuantizerConfig::new(8, 2, 8, 3);
    cfg.hidden_dim = 6;
    let model = DpqModel::random(&cfg).unwrap();
    let x = Array2::from_shape_fn((4, 8), |(i, j)| (i * 8 + j) as f64 / 10.0 - 1.5);
    let trace = model.forward_batch(x.view()).unwrap();
    let g = Array2::from_elem((4, 8), 0.5);
    let zero = Array2::zeros(g.raw_dim());
    let grads = representation_backward(&model, &trace, zero.view(), g.view(), GradientMode::Exact).unwrap();
    for s in &grads.slices {
        assert!(s.hidden.weight.iter().chain(s.output.bias.iter()).all(|v| *v == 0.0));
    }
    assert!(grads.codebook.partitions().iter().any(|c| c.iter().any(|v| *v != 0.0)));
}
