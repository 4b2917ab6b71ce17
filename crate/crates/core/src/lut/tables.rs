use ndarray::{Array1, Array2, ArrayView1};

use super::counters;
use crate::codec::{check_indices, Codebook, CompressedCode};
use crate::error::{DpqError, Result};
use crate::model::DpqModel;

fn check_code(code: &[u32], m: usize, k: usize) -> Result<()> {
    if code.len() != m {
        return Err(DpqError::ShapeMismatch {
            what: "code length",
            expected: m,
            actual: code.len(),
        });
    }
    check_indices(code, k)
}

fn check_k(code: &CompressedCode, k: usize) -> Result<()> {
    if code.num_clusters() != k {
        return Err(DpqError::ShapeMismatch {
            what: "code K",
            expected: k,
            actual: code.num_clusters(),
        });
    }
    Ok(())
}

/// Per-partition class-score tables: `tables[m][[c, k]] = <W_m[:, c], C_m(k)>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLut {
    tables: Vec<Array2<f64>>,
    bias: Array1<f64>,
}

impl ClassLut {
    pub fn tables(&self) -> &[Array2<f64>] {
        &self.tables
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn num_partitions(&self) -> usize {
        self.tables.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.tables[0].ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    /// Scores for raw indices: `b_c + sum_m tables[m][[c, z_m]]`.
    pub fn scores(&self, code: &[u32]) -> Result<Array1<f64>> {
        check_code(code, self.num_partitions(), self.num_clusters())?;
        let mut out = self.bias.clone();
        for (table, &z) in self.tables.iter().zip(code) {
            out += &table.column(z as usize);
        }
        Ok(out)
    }
}

pub fn build_class_lut(model: &DpqModel) -> ClassLut {
    let params = model.params();
    let d = model.config().centroid_dim;
    let w = &params.classifier.weight;
    let tables = params
        .codebook
        .partitions()
        .iter()
        .enumerate()
        .map(|(m, centroids)| {
            let w_m = w.slice(ndarray::s![m * d..(m + 1) * d, ..]);
            w_m.t().dot(&centroids.t())
        })
        .collect();
    ClassLut {
        tables,
        bias: params.classifier.bias.clone(),
    }
}

pub fn classify_code(code: &CompressedCode, lut: &ClassLut) -> Result<Array1<f64>> {
    check_k(code, lut.num_clusters())?;
    lut.scores(code.indices())
}

/// Per-partition K x K tables of squared distances between codebook rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SymLut {
    tables: Vec<Array2<f64>>,
}

impl SymLut {
    pub fn tables(&self) -> &[Array2<f64>] {
        &self.tables
    }

    pub fn num_partitions(&self) -> usize {
        self.tables.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.tables[0].nrows()
    }

    /// Distance between two index slices without validation.
    #[inline]
    pub(crate) fn distance_unchecked(&self, x: &[u32], y: &[u32]) -> f64 {
        self.tables
            .iter()
            .zip(x.iter().zip(y))
            .map(|(t, (&a, &b))| t[[a as usize, b as usize]])
            .sum()
    }

    pub fn distance(&self, x: &[u32], y: &[u32]) -> Result<f64> {
        check_code(x, self.num_partitions(), self.num_clusters())?;
        check_code(y, self.num_partitions(), self.num_clusters())?;
        counters::record_evals(1, self.num_partitions() as u64);
        Ok(self.distance_unchecked(x, y))
    }
}

pub fn build_sym_lut(codebook: &Codebook) -> SymLut {
    let tables = codebook
        .partitions()
        .iter()
        .map(|c| {
            let k = c.nrows();
            let mut t = Array2::zeros((k, k));
            for a in 0..k {
                for b in (a + 1)..k {
                    let dist: f64 = c.row(a).iter().zip(c.row(b)).map(|(x, y)| (x - y) * (x - y)).sum();
                    t[[a, b]] = dist;
                    t[[b, a]] = dist;
                }
            }
            t
        })
        .collect();
    SymLut { tables }
}

pub fn sym_distance(x: &CompressedCode, y: &CompressedCode, lut: &SymLut) -> Result<f64> {
    check_k(x, lut.num_clusters())?;
    check_k(y, lut.num_clusters())?;
    lut.distance(x.indices(), y.indices())
}

/// Squared distances from one query's sub-vectors to every codebook row,
/// stored M x K.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymLut {
    tables: Array2<f64>,
}

impl AsymLut {
    pub fn tables(&self) -> &Array2<f64> {
        &self.tables
    }

    pub fn table(&self, m: usize) -> ArrayView1<'_, f64> {
        self.tables.row(m)
    }

    pub fn num_partitions(&self) -> usize {
        self.tables.nrows()
    }

    pub fn num_clusters(&self) -> usize {
        self.tables.ncols()
    }

    #[inline]
    pub(crate) fn distance_unchecked(&self, code: &[u32]) -> f64 {
        code.iter()
            .enumerate()
            .map(|(m, &z)| self.tables[[m, z as usize]])
            .sum()
    }

    pub fn distance(&self, code: &[u32]) -> Result<f64> {
        check_code(code, self.num_partitions(), self.num_clusters())?;
        counters::record_evals(1, self.num_partitions() as u64);
        Ok(self.distance_unchecked(code))
    }
}

pub fn build_asym_lut(query: ArrayView1<'_, f64>, codebook: &Codebook) -> Result<AsymLut> {
    if query.len() != codebook.dim() {
        return Err(DpqError::ShapeMismatch {
            what: "query representation dimension",
            expected: codebook.dim(),
            actual: query.len(),
        });
    }
    let (m_parts, k, d) = (codebook.num_partitions(), codebook.num_clusters(), codebook.centroid_dim());
    let mut tables = Array2::zeros((m_parts, k));
    for (m, c) in codebook.partitions().iter().enumerate() {
        let q = query.slice(ndarray::s![m * d..(m + 1) * d]);
        for (j, row) in c.rows().into_iter().enumerate() {
            tables[[m, j]] = row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    counters::record_asym_build((m_parts * k * d) as u64);
    Ok(AsymLut { tables })
}

pub fn asym_distance(lut: &AsymLut, code: &CompressedCode) -> Result<f64> {
    check_k(code, lut.num_clusters())?;
    lut.distance(code.indices())
}
