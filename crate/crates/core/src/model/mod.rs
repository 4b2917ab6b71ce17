//! The DPQ network: per-partition MLPs producing cluster distributions,
//! learned codebooks, soft/hard representations and a linear classifier.

mod backward;
mod forward;
mod io;
mod ops;
mod train;

pub use backward::{representation_backward, total_loss, GradientMode, LossBreakdown, LossOptions, LossOutput};
pub use forward::{BatchTrace, ForwardTrace};
pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use ops::{
    argmax, gini_batch, gini_sample, hard_subvector, joint_central_loss, soft_subvector, softmax,
    softmax_loss, st_backward,
};
pub use train::{train, train_with_log, EpochStats, TrainingLog};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, Ix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::codec::{CodeSet, Codebook, CompressedCode};
use crate::config::QuantizerConfig;
use crate::error::{DpqError, Result};
use crate::pq::{kmeans, partition_seed};
use crate::quantizer::Quantizer;

/// An affine map `x -> x W + b` with `W` of shape (in, out).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Weights uniform in `[-a, a]` with `a = sqrt(6 / fan_in)`, zero bias.
    fn uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-bound..=bound)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Affine -> ReLU -> affine, ending in K logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceMlp {
    pub hidden: Dense,
    pub output: Dense,
}

/// Every learnable tensor of a [`DpqModel`].
///
/// The same structure doubles as a gradient and a momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub front: Option<Dense>,
    pub slices: Vec<SliceMlp>,
    pub codebook: Codebook,
    /// W of shape (M*D, C) and bias b of length C.
    pub classifier: Dense,
    /// Class centers `o_i`, one row per class.
    pub centers: Array2<f64>,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        let zero_dense = |d: &Dense| Dense::zeros(d.inputs(), d.outputs());
        let codebook = Codebook::new(
            self.codebook
                .partitions()
                .iter()
                .map(|c| Array2::zeros(c.raw_dim()))
                .collect(),
        )
        .expect("shape copied from a valid codebook");
        Self {
            front: self.front.as_ref().map(zero_dense),
            slices: self
                .slices
                .iter()
                .map(|s| SliceMlp {
                    hidden: zero_dense(&s.hidden),
                    output: zero_dense(&s.output),
                })
                .collect(),
            codebook,
            classifier: zero_dense(&self.classifier),
            centers: Array2::zeros(self.centers.raw_dim()),
        }
    }

    /// Tensor names in declaration order (the order used by the model file).
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.front.is_some() {
            names.extend(["front.weight".to_string(), "front.bias".to_string()]);
        }
        for m in 0..self.slices.len() {
            for t in ["hidden.weight", "hidden.bias", "output.weight", "output.bias"] {
                names.push(format!("slice[{m}].{t}"));
            }
        }
        for m in 0..self.codebook.num_partitions() {
            names.push(format!("codebook[{m}]"));
        }
        names.extend([
            "classifier.weight".to_string(),
            "classifier.bias".to_string(),
            "centers".to_string(),
        ]);
        names
    }

    pub fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = Vec::new();
        if let Some(f) = &self.front {
            out.push(f.weight.view().into_dyn());
            out.push(f.bias.view().into_dyn());
        }
        for s in &self.slices {
            out.push(s.hidden.weight.view().into_dyn());
            out.push(s.hidden.bias.view().into_dyn());
            out.push(s.output.weight.view().into_dyn());
            out.push(s.output.bias.view().into_dyn());
        }
        for c in self.codebook.partitions() {
            out.push(c.view().into_dyn());
        }
        out.push(self.classifier.weight.view().into_dyn());
        out.push(self.classifier.bias.view().into_dyn());
        out.push(self.centers.view().into_dyn());
        out
    }

    /// Mutable views in declaration order. Writing non-finite values breaks
    /// the codebook invariant; callers own that responsibility.
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        if let Some(f) = &mut self.front {
            out.push(f.weight.view_mut().into_dyn());
            out.push(f.bias.view_mut().into_dyn());
        }
        for s in &mut self.slices {
            out.push(s.hidden.weight.view_mut().into_dyn());
            out.push(s.hidden.bias.view_mut().into_dyn());
            out.push(s.output.weight.view_mut().into_dyn());
            out.push(s.output.bias.view_mut().into_dyn());
        }
        for c in self.codebook.partitions_mut() {
            out.push(c.view_mut().into_dyn());
        }
        out.push(self.classifier.weight.view_mut().into_dyn());
        out.push(self.classifier.bias.view_mut().into_dyn());
        out.push(self.centers.view_mut().into_dyn());
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpqModel {
    config: QuantizerConfig,
    params: Params,
    intra_normalized: bool,
}

impl DpqModel {
    /// Assembles a model from explicit parameters, checking every shape against `config`.
    pub fn from_params(config: QuantizerConfig, params: Params, intra_normalized: bool) -> Result<Self> {
        config.validate()?;
        let (m, k, d) = (config.num_partitions, config.num_clusters, config.centroid_dim);
        let v = config.representation_dim();
        let expect = |what, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(DpqError::ShapeMismatch { what, expected, actual })
            }
        };
        match (&params.front, config.front_dim) {
            (Some(f), Some(width)) => {
                expect("front inputs", config.input_dim, f.inputs())?;
                expect("front outputs", width, f.outputs())?;
                expect("front bias", width, f.bias.len())?;
            }
            (None, None) => {}
            _ => return Err(DpqError::InvalidConfig("front layer presence disagrees with config".into())),
        }
        expect("slice MLP count", m, params.slices.len())?;
        for s in &params.slices {
            expect("slice inputs", config.slice_width(), s.hidden.inputs())?;
            expect("slice hidden width", config.hidden_dim, s.hidden.outputs())?;
            expect("slice hidden bias", config.hidden_dim, s.hidden.bias.len())?;
            expect("slice output inputs", config.hidden_dim, s.output.inputs())?;
            expect("slice logits", k, s.output.outputs())?;
            expect("slice logit bias", k, s.output.bias.len())?;
        }
        expect("codebook partitions", m, params.codebook.num_partitions())?;
        expect("codebook clusters", k, params.codebook.num_clusters())?;
        expect("codebook row dimension", d, params.codebook.centroid_dim())?;
        expect("classifier inputs", v, params.classifier.inputs())?;
        expect("classifier outputs", config.num_classes, params.classifier.outputs())?;
        expect("classifier bias", config.num_classes, params.classifier.bias.len())?;
        expect("center count", config.num_classes, params.centers.nrows())?;
        expect("center dimension", v, params.centers.ncols())?;
        if !params.is_finite() {
            return Err(DpqError::NonFinite("model parameters"));
        }
        Ok(Self {
            config,
            params,
            intra_normalized,
        })
    }

    /// Random model with every parameter (including codebooks) drawn from the
    /// seeded initializer. Used for tests and as the starting point of [`DpqModel::init`].
    pub fn random(config: &QuantizerConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let front = config
            .front_dim
            .map(|width| Dense::uniform(config.input_dim, width, &mut rng));
        let slices = (0..config.num_partitions)
            .map(|_| SliceMlp {
                hidden: Dense::uniform(config.slice_width(), config.hidden_dim, &mut rng),
                output: Dense::uniform(config.hidden_dim, config.num_clusters, &mut rng),
            })
            .collect();
        let codebook = Codebook::new(
            (0..config.num_partitions)
                .map(|_| {
                    Array2::from_shape_fn((config.num_clusters, config.centroid_dim), |_| {
                        rng.random_range(-1.0..=1.0)
                    })
                })
                .collect(),
        )?;
        let classifier = Dense::uniform(config.representation_dim(), config.num_classes, &mut rng);
        let centers = Array2::zeros((config.num_classes, config.representation_dim()));
        Self::from_params(
            config.clone(),
            Params {
                front,
                slices,
                codebook,
                classifier,
                centers,
            },
            false,
        )
    }

    /// Training initialization: random MLPs and classifier, codebooks seeded by
    /// k-means on the slices the (untrained) front layer produces for `warmup`.
    ///
    /// When the slice width differs from D, k-means output would live in the
    /// wrong space, so rows are drawn from a Gaussian matched to the slice scale.
    pub fn init(config: &QuantizerConfig, warmup: ArrayView2<'_, f64>) -> Result<Self> {
        let mut model = Self::random(config)?;
        if warmup.ncols() != config.input_dim {
            return Err(DpqError::ShapeMismatch {
                what: "warmup dimension",
                expected: config.input_dim,
                actual: warmup.ncols(),
            });
        }
        let base = model.sliced_input(warmup);
        let n = config.slice_width();
        let (k, d) = (config.num_clusters, config.centroid_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(partition_seed(config.seed, usize::MAX));
        let mut parts = Vec::with_capacity(config.num_partitions);
        for m in 0..config.num_partitions {
            let slice = base.slice(s![.., m * n..(m + 1) * n]);
            if n == d {
                let r = kmeans(slice, k, config.schedule.kmeans_iters, partition_seed(config.seed, m))?;
                parts.push(r.centroids);
            } else {
                let rms = (slice.iter().map(|v| v * v).sum::<f64>() / slice.len().max(1) as f64).sqrt();
                let scale = if rms > 0.0 { rms } else { 1.0 / (d as f64).sqrt() };
                parts.push(Array2::from_shape_fn((k, d), |_| scale * rng.sample::<f64, _>(StandardNormal)));
            }
        }
        model.params.codebook = Codebook::new(parts)?;
        Ok(model)
    }

    pub fn config(&self) -> &QuantizerConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn into_params(self) -> Params {
        self.params
    }

    pub fn codebook(&self) -> &Codebook {
        &self.params.codebook
    }

    pub fn is_intra_normalized(&self) -> bool {
        self.intra_normalized
    }

    /// Applies the front layer (if any) to a batch; the result is what gets sliced.
    pub(crate) fn sliced_input(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        match &self.params.front {
            Some(f) => f.apply(x).mapv(|v| v.max(0.0)),
            None => x.to_owned(),
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.config.input_dim {
            return Err(DpqError::ShapeMismatch {
                what: "input dimension",
                expected: self.config.input_dim,
                actual: len,
            });
        }
        Ok(())
    }

    /// Compressed hard representation: the argmax cluster of every partition.
    pub fn encode(&self, x: ArrayView1<'_, f64>) -> Result<CompressedCode> {
        let trace = self.forward(x)?;
        CompressedCode::new(trace.codes, self.config.num_clusters)
    }

    /// Soft representation used on the query side of asymmetric search.
    /// For an intra-normalized model every sub-vector is L2-normalized.
    pub fn query_soft(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let mut soft = self.forward(x)?.soft;
        if self.intra_normalized {
            normalize_subvectors(&mut soft, self.config.centroid_dim);
        }
        Ok(soft)
    }

    /// Returns a copy whose codebook rows are L2-normalized; soft query
    /// vectors of the result are normalized per sub-vector.
    pub fn intra_normalize(&self) -> Result<Self> {
        let mut out = self.clone();
        for (m, part) in out.params.codebook.partitions_mut().iter_mut().enumerate() {
            for (row_idx, mut row) in part.axis_iter_mut(Axis(0)).enumerate() {
                let norm = row.dot(&row).sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    return Err(DpqError::ZeroNormRow { partition: m, row: row_idx });
                }
                row /= norm;
            }
        }
        out.intra_normalized = true;
        Ok(out)
    }

    /// Class scores for a batch of inputs through the hard path.
    pub fn predict_hard(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(x)?.pred_hard)
    }
}

/// L2-normalizes each `d`-sized chunk of `v` in place; zero chunks are left as is.
pub fn normalize_subvectors(v: &mut Array1<f64>, d: usize) {
    for mut chunk in v.exact_chunks_mut(d) {
        let norm = chunk.dot(&chunk).sqrt();
        if norm > 0.0 {
            chunk /= norm;
        }
    }
}

const ENCODE_CHUNK: usize = 256;

impl Quantizer for DpqModel {
    fn codebook(&self) -> &Codebook {
        &self.params.codebook
    }

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn encode(&self, x: ArrayView1<'_, f64>) -> Result<Vec<u32>> {
        Ok(self.forward(x)?.codes)
    }

    fn query_vector(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.query_soft(x)
    }

    fn encode_all(&self, data: ArrayView2<'_, f64>) -> Result<CodeSet> {
        self.check_input(data.ncols())?;
        let chunks: Vec<Vec<u32>> = data
            .axis_chunks_iter(Axis(0), ENCODE_CHUNK)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|chunk| self.forward_batch(chunk.into_dimensionality::<Ix2>().expect("2-d")).map(|t| t.codes))
            .collect::<Result<_>>()?;
        CodeSet::from_flat(
            self.config.num_partitions,
            self.config.num_clusters,
            chunks.into_iter().flatten().collect(),
        )
    }
}
