use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::ops::argmax;
use super::DpqModel;
use crate::error::{DpqError, Result};

/// Everything the forward pass computes for a batch, kept for backprop.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    pub input: Array2<f64>,
    /// Front layer pre-activations, when the model has a front layer.
    pub front_pre: Option<Array2<f64>>,
    /// Per partition: the slice `s_m` fed to its MLP (B x N).
    pub slices: Vec<Array2<f64>>,
    pub hidden_pre: Vec<Array2<f64>>,
    pub hidden: Vec<Array2<f64>>,
    pub logits: Vec<Array2<f64>>,
    /// Per partition: cluster distributions `p_m` (B x K).
    pub probs: Vec<Array2<f64>>,
    /// Argmax cluster per sample and partition, row-major B x M.
    pub codes: Vec<u32>,
    pub soft: Array2<f64>,
    pub hard: Array2<f64>,
    pub pred_soft: Array2<f64>,
    pub pred_hard: Array2<f64>,
}

impl BatchTrace {
    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn num_partitions(&self) -> usize {
        self.probs.len()
    }

    pub fn code(&self, i: usize) -> &[u32] {
        let m = self.num_partitions();
        &self.codes[i * m..(i + 1) * m]
    }

    /// The one-hot matrix `e_m` (B x K) of partition `m`.
    pub fn one_hot(&self, m: usize) -> Array2<f64> {
        let (b, k) = self.probs[m].dim();
        let mut e = Array2::zeros((b, k));
        for i in 0..b {
            e[[i, self.code(i)[m] as usize]] = 1.0;
        }
        e
    }

    /// Extracts the single-sample view of row `i`.
    pub fn sample(&self, i: usize) -> ForwardTrace {
        let m = self.num_partitions();
        let row = |a: &Array2<f64>| a.row(i).to_owned();
        let codes = self.code(i).to_vec();
        ForwardTrace {
            slices: self.slices.iter().map(row).collect(),
            logits: self.logits.iter().map(row).collect(),
            probs: self.probs.iter().map(row).collect(),
            one_hot: (0..m)
                .map(|p| {
                    let mut e = Array1::zeros(self.probs[p].ncols());
                    e[codes[p] as usize] = 1.0;
                    e
                })
                .collect(),
            codes,
            soft: row(&self.soft),
            hard: row(&self.hard),
            pred_soft: row(&self.pred_soft),
            pred_hard: row(&self.pred_hard),
        }
    }
}

/// Forward quantities for a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub slices: Vec<Array1<f64>>,
    pub logits: Vec<Array1<f64>>,
    pub probs: Vec<Array1<f64>>,
    pub one_hot: Vec<Array1<f64>>,
    pub codes: Vec<u32>,
    pub soft: Array1<f64>,
    pub hard: Array1<f64>,
    pub pred_soft: Array1<f64>,
    pub pred_hard: Array1<f64>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    p
}

impl DpqModel {
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<ForwardTrace> {
        let batch = x.insert_axis(Axis(0));
        Ok(self.forward_batch(batch)?.sample(0))
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<BatchTrace> {
        let cfg = self.config();
        if x.ncols() != cfg.input_dim {
            return Err(DpqError::ShapeMismatch {
                what: "input dimension",
                expected: cfg.input_dim,
                actual: x.ncols(),
            });
        }
        let params = self.params();
        let b = x.nrows();
        let (m_parts, d) = (cfg.num_partitions, cfg.centroid_dim);
        let width = cfg.slice_width();

        let front_pre = params.front.as_ref().map(|f| f.apply(x));
        let base = match &front_pre {
            Some(pre) => pre.mapv(|v| v.max(0.0)),
            None => x.to_owned(),
        };

        let mut slices = Vec::with_capacity(m_parts);
        let mut hidden_pre = Vec::with_capacity(m_parts);
        let mut hidden = Vec::with_capacity(m_parts);
        let mut logits = Vec::with_capacity(m_parts);
        let mut probs = Vec::with_capacity(m_parts);
        let mut codes = vec![0u32; b * m_parts];
        let mut soft = Array2::zeros((b, cfg.representation_dim()));
        let mut hard = Array2::zeros((b, cfg.representation_dim()));

        for (m, mlp) in params.slices.iter().enumerate() {
            let slice = base.slice(s![.., m * width..(m + 1) * width]).to_owned();
            let pre = mlp.hidden.apply(slice.view());
            let act = pre.mapv(|v| v.max(0.0));
            let z = mlp.output.apply(act.view());
            let p = softmax_rows(&z);
            let centroids = params.codebook.partition(m);

            soft.slice_mut(s![.., m * d..(m + 1) * d]).assign(&p.dot(&centroids));
            for (i, row) in p.rows().into_iter().enumerate() {
                let k = argmax(row);
                codes[i * m_parts + m] = k as u32;
                hard.slice_mut(s![i, m * d..(m + 1) * d]).assign(&centroids.row(k));
            }

            slices.push(slice);
            hidden_pre.push(pre);
            hidden.push(act);
            logits.push(z);
            probs.push(p);
        }

        let pred_soft = params.classifier.apply(soft.view());
        let pred_hard = params.classifier.apply(hard.view());
        Ok(BatchTrace {
            input: x.to_owned(),
            front_pre,
            slices,
            hidden_pre,
            hidden,
            logits,
            probs,
            codes,
            soft,
            hard,
            pred_soft,
            pred_hard,
        })
    }
}
