//! Python bindings. Vectors cross the boundary as lists of float lists and
//! codes as lists of int lists.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use dpq::bench::{gen_synthetic, run_experiment as run_core_experiment, ExperimentConfig, SyntheticSpec};
use dpq::codec::format::{load_codebook, save_codebook};
use dpq::lut::build_class_lut;
use dpq::model::{load_model, save_model, train as train_dpq};
use dpq::pq::quantization_error;
use dpq::{CodeSet, DpqError, LossWeights, Quantizer, QuantizerConfig, Schedule, SearchMode, VectorSet};

fn to_py(e: DpqError) -> PyErr {
    match e {
        DpqError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Array2::from_shape_vec((rows.len(), dim), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn code_set(codes: &[Vec<u32>], m: usize, k: usize) -> PyResult<CodeSet> {
    if codes.iter().any(|c| c.len() != m) {
        return Err(PyValueError::new_err(format!("every code must have {m} indices")));
    }
    CodeSet::from_flat(m, k, codes.concat()).map_err(to_py)
}

fn parse_mode(mode: &str) -> PyResult<SearchMode> {
    mode.parse().map_err(|e: DpqError| PyValueError::new_err(e.to_string()))
}

fn encode_rows(q: &dyn Quantizer, vectors: &[Vec<f64>]) -> PyResult<Vec<Vec<u32>>> {
    let x = matrix(vectors)?;
    let codes = q.encode_all(x.view()).map_err(to_py)?;
    Ok(codes.iter().map(<[u32]>::to_vec).collect())
}

fn search_rows(
    q: &dyn Quantizer,
    query: Vec<f64>,
    codes: &[Vec<u32>],
    k: usize,
    mode: &str,
) -> PyResult<Vec<(usize, f64)>> {
    let cb = q.codebook();
    let db = code_set(codes, cb.num_partitions(), cb.num_clusters())?;
    let query = ndarray::Array1::from(query);
    let hits = dpq::search(query.view(), &db, q, parse_mode(mode)?, k).map_err(to_py)?;
    Ok(hits.into_iter().map(|n| (n.index, n.distance)).collect())
}

/// k-means product quantizer.
#[pyclass(module = "pydpq")]
struct ProductQuantizer {
    inner: dpq::ProductQuantizer,
}

#[pymethods]
impl ProductQuantizer {
    #[staticmethod]
    #[pyo3(signature = (vectors, partitions, clusters, seed = 0, kmeans_iters = 100))]
    fn train(
        py: Python<'_>,
        vectors: Vec<Vec<f64>>,
        partitions: usize,
        clusters: usize,
        seed: u64,
        kmeans_iters: usize,
    ) -> PyResult<Self> {
        let set = VectorSet::unlabeled(matrix(&vectors)?).map_err(to_py)?;
        let mut cfg = QuantizerConfig::new(set.dim(), partitions, clusters, 1);
        cfg.seed = seed;
        cfg.schedule.kmeans_iters = kmeans_iters;
        let inner = py.detach(|| dpq::ProductQuantizer::train(&set, &cfg)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let cb = load_codebook(path).map_err(to_py)?;
        Ok(Self {
            inner: dpq::ProductQuantizer::new(cb),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_codebook(path, self.inner.codebook()).map_err(to_py)
    }

    #[getter]
    fn num_partitions(&self) -> usize {
        self.inner.codebook().num_partitions()
    }

    #[getter]
    fn num_clusters(&self) -> usize {
        self.inner.codebook().num_clusters()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn encode(&self, py: Python<'_>, vectors: Vec<Vec<f64>>) -> PyResult<Vec<Vec<u32>>> {
        py.detach(|| encode_rows(&self.inner, &vectors))
    }

    fn quantization_error(&self, vectors: Vec<Vec<f64>>) -> PyResult<f64> {
        let set = VectorSet::unlabeled(matrix(&vectors)?).map_err(to_py)?;
        quantization_error(&set, self.inner.codebook()).map_err(to_py)
    }

    /// `(database index, distance)` pairs of the `k` nearest codes.
    #[pyo3(signature = (query, codes, k, mode = "asym"))]
    fn search(&self, query: Vec<f64>, codes: Vec<Vec<u32>>, k: usize, mode: &str) -> PyResult<Vec<(usize, f64)>> {
        search_rows(&self.inner, query, &codes, k, mode)
    }
}

/// Trained deep product quantization model.
#[pyclass(module = "pydpq")]
struct DpqModel {
    inner: dpq::DpqModel,
}

#[pymethods]
impl DpqModel {
    #[staticmethod]
    #[pyo3(signature = (
        vectors, labels, partitions, clusters, *, centroid_dim = None, hidden = 64, front_dim = None,
        epochs = 100, batch_size = 64, learning_rate = 0.01, momentum = 0.9, w_softmax = 1.0,
        w_central = 0.5, w_gini_batch = 0.1, w_gini_sample = 0.1, w_weight_decay = 5e-4,
        soft_only = false, seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        vectors: Vec<Vec<f64>>,
        labels: Vec<usize>,
        partitions: usize,
        clusters: usize,
        centroid_dim: Option<usize>,
        hidden: usize,
        front_dim: Option<usize>,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        momentum: f64,
        w_softmax: f64,
        w_central: f64,
        w_gini_batch: f64,
        w_gini_sample: f64,
        w_weight_decay: f64,
        soft_only: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let set = VectorSet::new(matrix(&vectors)?, Some(labels)).map_err(to_py)?;
        let mut cfg = QuantizerConfig::new(set.dim(), partitions, clusters, set.num_classes());
        cfg.hidden_dim = hidden;
        cfg.front_dim = front_dim;
        cfg.centroid_dim = centroid_dim.unwrap_or_else(|| cfg.slice_width());
        cfg.weights = LossWeights {
            softmax: w_softmax,
            central: w_central,
            gini_batch: w_gini_batch,
            gini_sample: w_gini_sample,
            weight_decay: w_weight_decay,
        };
        cfg.schedule = Schedule {
            epochs,
            batch_size,
            learning_rate,
            momentum,
            hard_path: !soft_only,
            ..Schedule::default()
        };
        cfg.seed = seed;
        let inner = py.detach(|| train_dpq(&set, &cfg)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_model(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn num_partitions(&self) -> usize {
        self.inner.config().num_partitions
    }

    #[getter]
    fn num_clusters(&self) -> usize {
        self.inner.config().num_clusters
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.config().num_classes
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.config().input_dim
    }

    #[getter]
    fn code_bits(&self) -> usize {
        self.inner.config().code_bits()
    }

    #[getter]
    fn intra_normalized(&self) -> bool {
        self.inner.is_intra_normalized()
    }

    fn intra_normalize(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.intra_normalize().map_err(to_py)?,
        })
    }

    fn encode(&self, py: Python<'_>, vectors: Vec<Vec<f64>>) -> PyResult<Vec<Vec<u32>>> {
        py.detach(|| encode_rows(&self.inner, &vectors))
    }

    /// Soft representations, normalized per sub-vector for an intra-normalized model.
    fn soft(&self, vectors: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(&vectors)?;
        x.rows()
            .into_iter()
            .map(|r| self.inner.query_soft(r).map(|v| v.to_vec()).map_err(to_py))
            .collect()
    }

    /// Class scores of compressed codes, computed through lookup tables.
    fn class_scores(&self, codes: Vec<Vec<u32>>) -> PyResult<Vec<Vec<f64>>> {
        let cfg = self.inner.config();
        let set = code_set(&codes, cfg.num_partitions, cfg.num_clusters)?;
        let lut = build_class_lut(&self.inner);
        set.iter().map(|c| lut.scores(c).map(|s| s.to_vec()).map_err(to_py)).collect()
    }

    /// Hard-path class scores computed directly from input vectors.
    fn predict_scores(&self, vectors: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(&vectors)?;
        Ok(rows_of(&self.inner.predict_hard(x.view()).map_err(to_py)?))
    }

    #[pyo3(signature = (query, codes, k, mode = "asym"))]
    fn search(&self, query: Vec<f64>, codes: Vec<Vec<u32>>, k: usize, mode: &str) -> PyResult<Vec<(usize, f64)>> {
        search_rows(&self.inner, query, &codes, k, mode)
    }
}

/// Labeled Gaussian class clusters: returns `(vectors, labels)`.
#[pyfunction]
#[pyo3(signature = (num_classes = 10, dim = 64, points_per_class = 500, spread = 0.3, seed = 7))]
fn synthetic(
    num_classes: usize,
    dim: usize,
    points_per_class: usize,
    spread: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let spec = SyntheticSpec {
        num_classes,
        dim,
        points_per_class,
        cluster_spread: spread,
        seed,
    };
    let (x, labels) = gen_synthetic(&spec).map_err(to_py)?.into_parts();
    Ok((rows_of(&x), labels.unwrap_or_default()))
}

#[pyfunction]
fn pack_code<'py>(py: Python<'py>, indices: Vec<u32>, k: usize) -> PyResult<Bound<'py, PyBytes>> {
    let bytes = dpq::codec::pack_code(&indices, k).map_err(to_py)?;
    Ok(PyBytes::new(py, &bytes))
}

#[pyfunction]
fn unpack_code(packed: &[u8], m: usize, k: usize) -> PyResult<Vec<u32>> {
    dpq::codec::unpack_code(packed, m, k).map_err(to_py)
}

#[pyfunction]
fn compression_ratio(input_dim: usize, m: usize, k: usize) -> PyResult<f64> {
    dpq::compression_ratio(input_dim, m, k).map_err(to_py)
}

/// Runs an experiment from `key = value` config text; returns `(metric, mode, bits, value)` records.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<Vec<(String, String, usize, f64)>> {
    let cfg = ExperimentConfig::parse(config, None).map_err(to_py)?;
    let out = py
        .detach(|| run_core_experiment(&cfg))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(out
        .report
        .records
        .into_iter()
        .map(|r| (r.metric, r.mode, r.bits, r.value))
        .collect())
}

#[pymodule]
fn pydpq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ProductQuantizer>()?;
    m.add_class::<DpqModel>()?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(pack_code, m)?)?;
    m.add_function(wrap_pyfunction!(unpack_code, m)?)?;
    m.add_function(wrap_pyfunction!(compression_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
