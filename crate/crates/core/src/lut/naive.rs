//! Direct dense evaluations the lookup paths are checked against.

use ndarray::{Array1, ArrayView1};

use super::search::{neighbor_order, Neighbor, SearchMode};
use crate::codec::{CodeSet, Codebook};
use crate::error::Result;
use crate::model::DpqModel;
use crate::quantizer::Quantizer;

/// Class scores `W^T reconstruct(code) + b`, by explicit loops.
pub fn class_scores(model: &DpqModel, code: &[u32]) -> Result<Array1<f64>> {
    let rep = model.codebook().reconstruct(code)?;
    let w = &model.params().classifier.weight;
    let mut out = model.params().classifier.bias.clone();
    for c in 0..w.ncols() {
        for (v, r) in rep.iter().enumerate() {
            out[c] += w[[v, c]] * r;
        }
    }
    Ok(out)
}

pub fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `||reconstruct(x) - reconstruct(y)||^2`.
pub fn code_distance(codebook: &Codebook, x: &[u32], y: &[u32]) -> Result<f64> {
    let a = codebook.reconstruct(x)?;
    let b = codebook.reconstruct(y)?;
    Ok(squared_distance(a.view(), b.view()))
}

/// `||query - reconstruct(code)||^2`.
pub fn vector_code_distance(codebook: &Codebook, query: ArrayView1<'_, f64>, code: &[u32]) -> Result<f64> {
    let rec = codebook.reconstruct(code)?;
    Ok(squared_distance(query, rec.view()))
}

/// Ranks the whole database by reconstruction distance, without tables.
pub fn brute_force_ranking<Q: Quantizer + ?Sized>(
    query: ArrayView1<'_, f64>,
    database: &CodeSet,
    quantizer: &Q,
    mode: SearchMode,
) -> Result<Vec<Neighbor>> {
    let cb = quantizer.codebook();
    let q = match mode {
        SearchMode::Symmetric => cb.reconstruct(&quantizer.encode(query)?)?,
        SearchMode::Asymmetric => quantizer.query_vector(query)?,
    };
    let mut out = database
        .iter()
        .enumerate()
        .map(|(index, code)| {
            Ok(Neighbor {
                index,
                distance: vector_code_distance(cb, q.view(), code)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(neighbor_order);
    Ok(out)
}
