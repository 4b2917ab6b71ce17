//! The training objective and its exact gradients.
//!
//! The objective for a batch of size B is
//!
//! ```text
//! w_softmax * mean_i [CE(pred_soft_i) + CE(pred_hard_i)]
//!   + w_central * mean_i [1/2 |soft_i - o_y|^2 + 1/2 |hard_i - o_y|^2]
//!   + w_gini_batch * sum_m GiniBatch(P_m)
//!   + w_gini_sample * (1/B) sum_{i,m} GiniSample(p_m^i)
//!   + w_weight_decay * 1/2 |theta|^2
//! ```
//!
//! The hard terms are dropped entirely when the hard path is disabled.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::forward::BatchTrace;
use super::ops::{gini_batch, st_backward};
use super::{DpqModel, Params};
use crate::config::LossWeights;
use crate::error::{DpqError, Result};

/// How the argmax between `p_m` and `e_m` is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Gradients reaching `e_m` pass to `p_m` unchanged (training).
    StraightThrough,
    /// The true derivative of the piecewise-constant argmax, i.e. zero.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossOptions {
    pub gradient: GradientMode,
    pub hard_path: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            gradient: GradientMode::StraightThrough,
            hard_path: true,
        }
    }
}

/// Weighted value of each objective term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub softmax_soft: f64,
    pub softmax_hard: f64,
    pub central: f64,
    pub gini_batch: f64,
    pub gini_sample: f64,
    pub weight_decay: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.softmax_soft
            + self.softmax_hard
            + self.central
            + self.gini_batch
            + self.gini_sample
            + self.weight_decay
    }

    pub fn is_finite(&self) -> bool {
        [
            self.softmax_soft,
            self.softmax_hard,
            self.central,
            self.gini_batch,
            self.gini_sample,
            self.weight_decay,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub(crate) fn accumulate(&mut self, other: &Self, scale: f64) {
        self.softmax_soft += scale * other.softmax_soft;
        self.softmax_hard += scale * other.softmax_hard;
        self.central += scale * other.central;
        self.gini_batch += scale * other.gini_batch;
        self.gini_sample += scale * other.gini_sample;
        self.weight_decay += scale * other.weight_decay;
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    pub grads: Params,
}

impl LossOutput {
    pub fn total(&self) -> f64 {
        self.breakdown.total()
    }
}

/// Row-wise softmax cross-entropy: returns the summed loss and `softmax - onehot`.
fn cross_entropy(scores: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let mut grad = scores.clone();
    let mut loss = 0.0;
    for (mut row, &y) in grad.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
        loss += max + total.ln() - row[y];
        row.mapv_inplace(|v| (v - max).exp() / total);
        row[y] -= 1.0;
    }
    (loss, grad)
}

/// Backpropagates gradients on the soft and hard representations down to
/// the codebooks, slice MLPs and front layer. `extra_dprobs` are additional
/// gradients on each `P_m` (from the regularizers).
fn backprop_partitions(
    model: &DpqModel,
    trace: &BatchTrace,
    d_soft: ArrayView2<'_, f64>,
    d_hard: ArrayView2<'_, f64>,
    extra_dprobs: Option<&[Array2<f64>]>,
    mode: GradientMode,
    grads: &mut Params,
) {
    let cfg = model.config();
    let params = model.params();
    let (d, width) = (cfg.centroid_dim, cfg.slice_width());
    let mut d_base = Array2::<f64>::zeros((trace.batch_size(), cfg.sliced_dim()));

    for (m, mlp) in params.slices.iter().enumerate() {
        let centroids = params.codebook.partition(m);
        let ds = d_soft.slice(s![.., m * d..(m + 1) * d]);
        let dh = d_hard.slice(s![.., m * d..(m + 1) * d]);
        let probs = &trace.probs[m];

        // Codebook: soft = P C, hard = E C.
        {
            let g = &mut grads.codebook.partitions_mut()[m];
            *g += &probs.t().dot(&ds);
            for (i, row) in dh.rows().into_iter().enumerate() {
                let k = trace.code(i)[m] as usize;
                let mut target = g.row_mut(k);
                target += &row;
            }
        }

        let mut dp = ds.dot(&centroids.t());
        if mode == GradientMode::StraightThrough {
            let d_one_hot = dh.dot(&centroids.t());
            dp += &st_backward(d_one_hot.view());
        }
        if let Some(extra) = extra_dprobs {
            dp += &extra[m];
        }

        // Softmax: dz = p * (dp - <dp, p>).
        let inner = (&dp * probs).sum_axis(Axis(1)).insert_axis(Axis(1));
        let dz = probs * &(&dp - &inner);

        let g = &mut grads.slices[m];
        g.output.weight += &trace.hidden[m].t().dot(&dz);
        g.output.bias += &dz.sum_axis(Axis(0));
        let mut dhid = dz.dot(&mlp.output.weight.t());
        Zip::from(&mut dhid)
            .and(&trace.hidden_pre[m])
            .for_each(|g, &pre| {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            });
        g.hidden.weight += &trace.slices[m].t().dot(&dhid);
        g.hidden.bias += &dhid.sum_axis(Axis(0));
        let dslice = dhid.dot(&mlp.hidden.weight.t());
        d_base
            .slice_mut(s![.., m * width..(m + 1) * width])
            .assign(&dslice);
    }

    if let (Some(front), Some(pre), Some(g)) = (&params.front, &trace.front_pre, grads.front.as_mut()) {
        Zip::from(&mut d_base).and(pre).for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        debug_assert_eq!(front.inputs(), trace.input.ncols());
        g.weight += &trace.input.t().dot(&d_base);
        g.bias += &d_base.sum_axis(Axis(0));
    }
}

/// Gradients on codebooks, slice MLPs and the front layer produced by the
/// given upstream gradients on the soft and hard representations alone.
pub fn representation_backward(
    model: &DpqModel,
    trace: &BatchTrace,
    d_soft: ArrayView2<'_, f64>,
    d_hard: ArrayView2<'_, f64>,
    mode: GradientMode,
) -> Result<Params> {
    let v = model.config().representation_dim();
    for (what, shape) in [("soft gradient", d_soft.dim()), ("hard gradient", d_hard.dim())] {
        if shape != (trace.batch_size(), v) {
            return Err(DpqError::ShapeMismatch {
                what,
                expected: v,
                actual: shape.1,
            });
        }
    }
    let mut grads = model.params().zeros_like();
    backprop_partitions(model, trace, d_soft, d_hard, None, mode, &mut grads);
    Ok(grads)
}

/// Value of the objective on a traced batch plus the gradient of every parameter.
pub fn total_loss(
    model: &DpqModel,
    trace: &BatchTrace,
    labels: &[usize],
    weights: &LossWeights,
    options: &LossOptions,
) -> Result<LossOutput> {
    let b = trace.batch_size();
    if b == 0 {
        return Err(DpqError::Empty("loss batch"));
    }
    if labels.len() != b {
        return Err(DpqError::ShapeMismatch {
            what: "label count",
            expected: b,
            actual: labels.len(),
        });
    }
    let classes = model.config().num_classes;
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(DpqError::LabelOutOfRange { label, classes });
    }

    let params = model.params();
    let hard_on = options.hard_path;
    let inv_b = 1.0 / b as f64;
    let mut grads = params.zeros_like();
    let mut loss = LossBreakdown::default();

    // Classifier on both representations.
    let (ce_soft, mut d_pred_soft) = cross_entropy(&trace.pred_soft, labels);
    let (ce_hard, mut d_pred_hard) = cross_entropy(&trace.pred_hard, labels);
    loss.softmax_soft = weights.softmax * inv_b * ce_soft;
    d_pred_soft *= weights.softmax * inv_b;
    if hard_on {
        loss.softmax_hard = weights.softmax * inv_b * ce_hard;
        d_pred_hard *= weights.softmax * inv_b;
    } else {
        d_pred_hard.fill(0.0);
    }
    grads.classifier.weight = trace.soft.t().dot(&d_pred_soft) + trace.hard.t().dot(&d_pred_hard);
    grads.classifier.bias = d_pred_soft.sum_axis(Axis(0)) + d_pred_hard.sum_axis(Axis(0));
    let w_t = params.classifier.weight.t();
    let mut d_soft = d_pred_soft.dot(&w_t);
    let mut d_hard = d_pred_hard.dot(&w_t);

    // Joint central loss with one center per class shared by both paths.
    let central_scale = weights.central * inv_b;
    let mut central = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let o = params.centers.row(y);
        let ds_res = &trace.soft.row(i) - &o;
        central += 0.5 * ds_res.dot(&ds_res);
        let mut d_center = ds_res.clone();
        let mut row = d_soft.row_mut(i);
        row.scaled_add(central_scale, &ds_res);
        if hard_on {
            let dh_res = &trace.hard.row(i) - &o;
            central += 0.5 * dh_res.dot(&dh_res);
            let mut row = d_hard.row_mut(i);
            row.scaled_add(central_scale, &dh_res);
            d_center += &dh_res;
        }
        grads.centers.row_mut(y).scaled_add(-central_scale, &d_center);
    }
    loss.central = central_scale * central;

    // Regularizers act directly on the distributions.
    let mut extra = Vec::with_capacity(trace.num_partitions());
    for probs in &trace.probs {
        let mean = probs.sum_axis(Axis(0)) * inv_b;
        loss.gini_batch += weights.gini_batch * gini_batch(probs.view())?;
        loss.gini_sample -= weights.gini_sample * inv_b * probs.iter().map(|p| p * p).sum::<f64>();
        let mut dp = probs * (-2.0 * weights.gini_sample * inv_b);
        let d_mean = &mean * (2.0 * weights.gini_batch * inv_b);
        dp += &d_mean.insert_axis(Axis(0));
        extra.push(dp);
    }

    backprop_partitions(
        model,
        trace,
        d_soft.view(),
        d_hard.view(),
        Some(&extra),
        options.gradient,
        &mut grads,
    );

    // Weight decay over every parameter tensor.
    loss.weight_decay = weights.weight_decay * 0.5 * params.squared_norm();
    if weights.weight_decay != 0.0 {
        for (g, p) in grads.tensors_mut().into_iter().zip(params.tensors()) {
            let mut g = g;
            g.scaled_add(weights.weight_decay, &p);
        }
    }

    Ok(LossOutput {
        breakdown: loss,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::QuantizerConfig;
    use crate::model::ops::{gini_sample, joint_central_loss, softmax_loss};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (DpqModel, Array2<f64>, Vec<usize>) {
        let mut c = QuantizerConfig::new(6, 2, 4, 3);
        c.centroid_dim = 3;
        c.hidden_dim = 5;
        c.seed = seed;
        let mut model = DpqModel::random(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for t in model.params_mut().tensors_mut() {
            let mut t = t;
            t.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        let x = Array2::from_shape_fn((5, 6), |_| rng.random_range(-1.0..1.0));
        let labels = (0..5).map(|i| i % 3).collect();
        (model, x, labels)
    }

    #[test]
    fn zero_weights_zero_everything() {
        let (model, x, labels) = setup(1);
        let trace = model.forward_batch(x.view()).unwrap();
        let out = total_loss(&model, &trace, &labels, &LossWeights::zero(), &LossOptions::default()).unwrap();
        assert_eq!(out.total(), 0.0);
        assert!(out.grads.tensors().iter().all(|t| t.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn value_is_composed_from_the_scalar_ops() {
        let (model, x, labels) = setup(2);
        let trace = model.forward_batch(x.view()).unwrap();
        let w = LossWeights {
            softmax: 0.7,
            central: 0.4,
            gini_batch: 0.3,
            gini_sample: 0.2,
            weight_decay: 0.01,
        };
        let out = total_loss(&model, &trace, &labels, &w, &LossOptions::default()).unwrap();

        let b = labels.len() as f64;
        let mut expected = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let s = trace.sample(i);
            expected += w.softmax / b
                * (softmax_loss(s.pred_soft.view(), y).unwrap() + softmax_loss(s.pred_hard.view(), y).unwrap());
            expected += w.central / b
                * joint_central_loss(s.soft.view(), s.hard.view(), y, model.params().centers.view()).unwrap();
            for p in &s.probs {
                expected += w.gini_sample / b * gini_sample(p.view());
            }
        }
        for p in &trace.probs {
            expected += w.gini_batch * gini_batch(p.view()).unwrap();
        }
        expected += w.weight_decay * 0.5 * model.params().squared_norm();
        assert!((out.total() - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn disabled_hard_path_makes_straight_through_irrelevant() {
        let (model, x, labels) = setup(3);
        let trace = model.forward_batch(x.view()).unwrap();
        let w = LossWeights::default();
        let st = LossOptions {
            gradient: GradientMode::StraightThrough,
            hard_path: false,
        };
        let exact = LossOptions {
            gradient: GradientMode::Exact,
            hard_path: false,
        };
        let a = total_loss(&model, &trace, &labels, &w, &st).unwrap();
        let b = total_loss(&model, &trace, &labels, &w, &exact).unwrap();
        assert_eq!(a.grads, b.grads);
        assert_eq!(a.breakdown.softmax_hard, 0.0);
    }

    #[test]
    fn rejects_bad_labels() {
        let (model, x, _) = setup(4);
        let trace = model.forward_batch(x.view()).unwrap();
        let w = LossWeights::default();
        assert!(total_loss(&model, &trace, &[0, 1, 2, 3, 0], &w, &LossOptions::default()).is_err());
        assert!(total_loss(&model, &trace, &[0, 1], &w, &LossOptions::default()).is_err());
    }
}
