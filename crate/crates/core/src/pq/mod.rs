//! Classical unsupervised product quantization.

mod kmeans;

pub use kmeans::{kmeans, nearest_centroid, KMeansResult};

use ndarray::{s, Array1, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::codec::{Codebook, CompressedCode, VectorSet};
use crate::config::QuantizerConfig;
use crate::error::{DpqError, Result};
use crate::quantizer::Quantizer;

/// Seed used for the k-means run of partition `m`; partition 0 uses `seed` itself.
pub fn partition_seed(seed: u64, m: usize) -> u64 {
    seed.wrapping_add((m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs k-means independently on each of the M contiguous sub-vector blocks.
pub fn pq_train_partitions(
    data: ArrayView2<'_, f64>,
    num_partitions: usize,
    num_clusters: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Vec<KMeansResult>> {
    if num_partitions == 0 {
        return Err(DpqError::InvalidConfig("M must be positive".into()));
    }
    if !num_clusters.is_power_of_two() {
        return Err(DpqError::NotPowerOfTwo(num_clusters));
    }
    let dim = data.ncols();
    if !dim.is_multiple_of(num_partitions) {
        return Err(DpqError::InvalidConfig(format!(
            "dimension {dim} is not divisible by M = {num_partitions}"
        )));
    }
    let d = dim / num_partitions;
    (0..num_partitions)
        .into_par_iter()
        .map(|m| {
            let block = data.slice(s![.., m * d..(m + 1) * d]);
            kmeans(block, num_clusters, max_iters, partition_seed(seed, m))
        })
        .collect()
}

pub fn pq_train(data: &VectorSet, config: &QuantizerConfig) -> Result<Codebook> {
    let parts = pq_train_partitions(
        data.vectors().view(),
        config.num_partitions,
        config.num_clusters,
        config.schedule.kmeans_iters,
        config.seed,
    )?;
    Codebook::new(parts.into_iter().map(|r| r.centroids).collect())
}

fn check_dim(x: ArrayView1<'_, f64>, codebook: &Codebook) -> Result<()> {
    if x.len() != codebook.dim() {
        return Err(DpqError::ShapeMismatch {
            what: "vector dimension",
            expected: codebook.dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

fn encode_indices(x: ArrayView1<'_, f64>, codebook: &Codebook) -> Result<Vec<u32>> {
    check_dim(x, codebook)?;
    let d = codebook.centroid_dim();
    Ok((0..codebook.num_partitions())
        .map(|m| nearest_centroid(x.slice(s![m * d..(m + 1) * d]), codebook.partition(m)).0)
        .collect())
}

/// Nearest centroid per partition; ties go to the lowest index.
pub fn pq_encode(x: ArrayView1<'_, f64>, codebook: &Codebook) -> Result<CompressedCode> {
    CompressedCode::new(encode_indices(x, codebook)?, codebook.num_clusters())
}

/// Mean over `data` of `||x - reconstruct(pq_encode(x))||^2`.
pub fn quantization_error(data: &VectorSet, codebook: &Codebook) -> Result<f64> {
    if data.is_empty() {
        return Err(DpqError::Empty("quantization error data"));
    }
    if data.dim() != codebook.dim() {
        return Err(DpqError::ShapeMismatch {
            what: "vector dimension",
            expected: codebook.dim(),
            actual: data.dim(),
        });
    }
    let errors: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = data.vector(i);
            let code = encode_indices(x, codebook)?;
            let rec = codebook.reconstruct(&code)?;
            Ok(x.iter().zip(rec.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
        })
        .collect::<Result<_>>()?;
    Ok(errors.iter().sum::<f64>() / data.len() as f64)
}

/// A trained PQ codebook usable wherever a [`Quantizer`] is expected.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductQuantizer {
    codebook: Codebook,
}

impl ProductQuantizer {
    pub fn new(codebook: Codebook) -> Self {
        Self { codebook }
    }

    pub fn train(data: &VectorSet, config: &QuantizerConfig) -> Result<Self> {
        pq_train(data, config).map(Self::new)
    }

    pub fn into_codebook(self) -> Codebook {
        self.codebook
    }
}

impl Quantizer for ProductQuantizer {
    fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    fn input_dim(&self) -> usize {
        self.codebook.dim()
    }

    fn encode(&self, x: ArrayView1<'_, f64>) -> Result<Vec<u32>> {
        encode_indices(x, &self.codebook)
    }

    fn query_vector(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        check_dim(x, &self.codebook)?;
        Ok(x.to_owned())
    }
}
