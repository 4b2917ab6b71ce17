use ndarray::{Array1, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::codec::{CodeSet, Codebook};
use crate::error::Result;

/// Anything that maps raw vectors to codes over a [`Codebook`].
///
/// `query_vector` is the uncompressed side of an asymmetric comparison: the raw
/// vector for classical PQ, the soft representation for DPQ.
pub trait Quantizer: Sync {
    fn codebook(&self) -> &Codebook;

    fn input_dim(&self) -> usize;

    fn encode(&self, x: ArrayView1<'_, f64>) -> Result<Vec<u32>>;

    fn query_vector(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>>;

    fn encode_all(&self, data: ArrayView2<'_, f64>) -> Result<CodeSet> {
        let cb = self.codebook();
        let codes: Vec<Vec<u32>> = (0..data.nrows())
            .into_par_iter()
            .map(|i| self.encode(data.row(i)))
            .collect::<Result<_>>()?;
        CodeSet::from_flat(
            cb.num_partitions(),
            cb.num_clusters(),
            codes.into_iter().flatten().collect(),
        )
    }
}
