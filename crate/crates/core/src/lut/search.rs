use std::cmp::Ordering;

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counters;
use super::tables::{build_asym_lut, build_sym_lut, SymLut};
use crate::codec::CodeSet;
use crate::error::{DpqError, Result};
use crate::quantizer::Quantizer;

/// Database items scanned per parallel task.
const SCAN_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SearchMode {
    /// Query encoded, then compared code-to-code.
    Symmetric,
    /// Query kept uncompressed (soft for DPQ, raw for PQ) and compared to codes.
    Asymmetric,
}

impl SearchMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Symmetric => "sym",
            Self::Asymmetric => "asym",
        }
    }
}

impl std::str::FromStr for SearchMode {
    type Err = DpqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym" | "symmetric" => Ok(Self::Symmetric),
            "asym" | "asymmetric" => Ok(Self::Asymmetric),
            other => Err(DpqError::InvalidConfig(format!("unknown search mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Ascending distance, then ascending index.
pub fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index))
}

/// Ranks the `k` nearest database items given a per-item distance function.
/// Independent of the number of worker threads.
pub(crate) fn scan<F>(database: &CodeSet, k: usize, distance: F) -> Vec<Neighbor>
where
    F: Fn(&[u32]) -> f64 + Sync,
{
    let n = database.len();
    let m = database.num_partitions();
    let flat = database.flat();
    let chunks: Vec<Vec<Neighbor>> = (0..n.div_ceil(SCAN_CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * SCAN_CHUNK;
            let end = (start + SCAN_CHUNK).min(n);
            let mut local: Vec<Neighbor> = (start..end)
                .map(|i| Neighbor {
                    index: i,
                    distance: distance(&flat[i * m..(i + 1) * m]),
                })
                .collect();
            counters::record_evals((end - start) as u64, ((end - start) * m) as u64);
            if k < local.len() {
                local.select_nth_unstable_by(k, neighbor_order);
                local.truncate(k);
            }
            local
        })
        .collect();
    let mut all: Vec<Neighbor> = chunks.into_iter().flatten().collect();
    if k < all.len() {
        all.select_nth_unstable_by(k, neighbor_order);
        all.truncate(k);
    }
    all.sort_unstable_by(neighbor_order);
    all
}

/// A database of codes bound to the quantizer that produced them. The
/// symmetric table is built once and reused across queries.
pub struct SearchIndex<'a, Q: Quantizer + ?Sized> {
    quantizer: &'a Q,
    database: &'a CodeSet,
    sym: Option<SymLut>,
}

impl<'a, Q: Quantizer + ?Sized> SearchIndex<'a, Q> {
    pub fn new(quantizer: &'a Q, database: &'a CodeSet) -> Result<Self> {
        let cb = quantizer.codebook();
        if database.is_empty() {
            return Err(DpqError::Empty("search database"));
        }
        if database.num_partitions() != cb.num_partitions() {
            return Err(DpqError::ShapeMismatch {
                what: "database M",
                expected: cb.num_partitions(),
                actual: database.num_partitions(),
            });
        }
        if database.num_clusters() != cb.num_clusters() {
            return Err(DpqError::ShapeMismatch {
                what: "database K",
                expected: cb.num_clusters(),
                actual: database.num_clusters(),
            });
        }
        Ok(Self {
            quantizer,
            database,
            sym: None,
        })
    }

    pub fn database(&self) -> &CodeSet {
        self.database
    }

    fn sym_lut(&mut self) -> &SymLut {
        let cb = self.quantizer.codebook();
        self.sym.get_or_insert_with(|| build_sym_lut(cb))
    }

    pub fn search(&mut self, query: ArrayView1<'_, f64>, mode: SearchMode, k: usize) -> Result<Vec<Neighbor>> {
        let n = self.database.len();
        if k == 0 || k > n {
            return Err(DpqError::InvalidConfig(format!("k = {k} must lie in 1..={n}")));
        }
        if query.len() != self.quantizer.input_dim() {
            return Err(DpqError::ShapeMismatch {
                what: "query dimension",
                expected: self.quantizer.input_dim(),
                actual: query.len(),
            });
        }
        match mode {
            SearchMode::Symmetric => {
                let code = self.quantizer.encode(query)?;
                let database = self.database;
                let lut = self.sym_lut();
                Ok(scan(database, k, |item| lut.distance_unchecked(&code, item)))
            }
            SearchMode::Asymmetric => {
                let q = self.quantizer.query_vector(query)?;
                let lut = build_asym_lut(q.view(), self.quantizer.codebook())?;
                Ok(scan(self.database, k, |item| lut.distance_unchecked(item)))
            }
        }
    }

    /// Full ranking of the database (k = database size).
    pub fn rank_all(&mut self, query: ArrayView1<'_, f64>, mode: SearchMode) -> Result<Vec<Neighbor>> {
        let n = self.database.len();
        self.search(query, mode, n)
    }
}

/// One-off search; builds whatever table the mode needs.
pub fn search<Q: Quantizer + ?Sized>(
    query: ArrayView1<'_, f64>,
    database: &CodeSet,
    quantizer: &Q,
    mode: SearchMode,
    k: usize,
) -> Result<Vec<Neighbor>> {
    SearchIndex::new(quantizer, database)?.search(query, mode, k)
}
