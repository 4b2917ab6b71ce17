//! Config-driven experiments: data, split, training, encoding, search and
//! metric reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{eval_map, top_k_accuracy, RetrievalRun};
use super::synthetic::{gen_synthetic, SyntheticSpec};
use crate::codec::{compression_ratio, format::load_vectors, CodeSet, VectorSet};
use crate::config::{LossWeights, QuantizerConfig, Schedule};
use crate::error::{DpqError, Result};
use crate::lut::{build_class_lut, SearchIndex, SearchMode};
use crate::model::{train_with_log, DpqModel, TrainingLog};
use crate::pq::{quantization_error, ProductQuantizer};
use crate::quantizer::Quantizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// Train on the database; queries are held out from the same classes.
    SingleDomain,
    /// Train on one label subset, retrieve among a disjoint one.
    CrossDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Pq,
    Dpq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub protocol: Protocol,
    pub train_classes: Vec<usize>,
    pub eval_classes: Vec<usize>,
    pub num_queries: usize,
    pub methods: Vec<Method>,
    pub modes: Vec<SearchMode>,
    pub num_partitions: usize,
    pub num_clusters: usize,
    /// Codebook row dimension; defaults to the slice width.
    pub centroid_dim: Option<usize>,
    pub hidden_dim: usize,
    pub front_dim: Option<usize>,
    pub weights: LossWeights,
    pub schedule: Schedule,
    /// Also evaluate DPQ retrieval with intra-normalized codebooks.
    pub intra_normalize: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticSpec::standard()),
            protocol: Protocol::SingleDomain,
            train_classes: Vec::new(),
            eval_classes: Vec::new(),
            num_queries: 500,
            methods: vec![Method::Pq, Method::Dpq],
            modes: vec![SearchMode::Symmetric, SearchMode::Asymmetric],
            num_partitions: 4,
            num_clusters: 16,
            centroid_dim: None,
            hidden_dim: 64,
            front_dim: None,
            weights: LossWeights::default(),
            schedule: Schedule::default(),
            intra_normalize: false,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| DpqError::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(DpqError::InvalidConfig(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// `"0-6"`, `"1,3,5"` or a mix such as `"0-2,7"`.
pub fn parse_class_list(key: &str, value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse_num(key, a.trim())?, parse_num(key, b.trim())?);
                if a > b {
                    return Err(DpqError::InvalidConfig(format!("{key}: empty range {part}")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num(key, part)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn parse_list<T>(key: &str, value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<Vec<_>>>()?;
    if items.is_empty() {
        return Err(DpqError::InvalidConfig(format!("{key}: empty list")));
    }
    Ok(items)
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative data paths
    /// are resolved against `base_dir` when given.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut synth = SyntheticSpec::standard();
        let mut data_path: Option<PathBuf> = None;
        let mut seen = BTreeMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DpqError::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), lineno).is_some() {
                return Err(DpqError::InvalidConfig(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            let s = &mut cfg.schedule;
            let w = &mut cfg.weights;
            match key {
                "data" => {
                    if value != "synthetic" {
                        let p = PathBuf::from(value);
                        data_path = Some(match base_dir {
                            Some(dir) if p.is_relative() => dir.join(p),
                            _ => p,
                        });
                    }
                }
                "classes" => synth.num_classes = parse_num(key, value)?,
                "dim" => synth.dim = parse_num(key, value)?,
                "points_per_class" => synth.points_per_class = parse_num(key, value)?,
                "spread" => synth.cluster_spread = parse_num(key, value)?,
                "data_seed" => synth.seed = parse_num(key, value)?,
                "protocol" => {
                    cfg.protocol = match value {
                        "single" | "single-domain" => Protocol::SingleDomain,
                        "cross" | "cross-domain" => Protocol::CrossDomain,
                        _ => return Err(DpqError::InvalidConfig(format!("protocol: unknown {value:?}"))),
                    }
                }
                "train_classes" => cfg.train_classes = parse_class_list(key, value)?,
                "eval_classes" => cfg.eval_classes = parse_class_list(key, value)?,
                "queries" => cfg.num_queries = parse_num(key, value)?,
                "methods" => {
                    cfg.methods = parse_list(key, value, |m| match m {
                        "pq" => Ok(Method::Pq),
                        "dpq" => Ok(Method::Dpq),
                        _ => Err(DpqError::InvalidConfig(format!("methods: unknown {m:?}"))),
                    })?
                }
                "modes" => cfg.modes = parse_list(key, value, str::parse)?,
                "partitions" => cfg.num_partitions = parse_num(key, value)?,
                "clusters" => cfg.num_clusters = parse_num(key, value)?,
                "centroid_dim" => cfg.centroid_dim = Some(parse_num(key, value)?),
                "hidden" => cfg.hidden_dim = parse_num(key, value)?,
                "front_dim" => {
                    let v: usize = parse_num(key, value)?;
                    cfg.front_dim = (v > 0).then_some(v);
                }
                "epochs" => s.epochs = parse_num(key, value)?,
                "batch_size" => s.batch_size = parse_num(key, value)?,
                "learning_rate" => s.learning_rate = parse_num(key, value)?,
                "momentum" => s.momentum = parse_num(key, value)?,
                "decay_factor" => s.decay_factor = parse_num(key, value)?,
                "decay_at" => s.decay_at = parse_num(key, value)?,
                "hard_path" => s.hard_path = parse_bool(key, value)?,
                "kmeans_iters" => s.kmeans_iters = parse_num(key, value)?,
                "w_softmax" => w.softmax = parse_num(key, value)?,
                "w_central" => w.central = parse_num(key, value)?,
                "w_gini_batch" => w.gini_batch = parse_num(key, value)?,
                "w_gini_sample" => w.gini_sample = parse_num(key, value)?,
                "w_weight_decay" => w.weight_decay = parse_num(key, value)?,
                "intra_normalize" => cfg.intra_normalize = parse_bool(key, value)?,
                "seed" => cfg.seed = parse_num(key, value)?,
                _ => {
                    return Err(DpqError::InvalidConfig(format!(
                        "line {}: unknown key {key:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.data = match data_path {
            Some(p) => DataSource::File(p),
            None => DataSource::Synthetic(synth),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        if self.methods.is_empty() || self.modes.is_empty() {
            return Err(DpqError::InvalidConfig("methods and modes must be nonempty".into()));
        }
        if self.num_queries == 0 {
            return Err(DpqError::InvalidConfig("queries must be positive".into()));
        }
        if self.protocol == Protocol::CrossDomain {
            if self.train_classes.is_empty() || self.eval_classes.is_empty() {
                return Err(DpqError::InvalidConfig(
                    "cross-domain protocol needs train_classes and eval_classes".into(),
                ));
            }
            if self.train_classes.iter().any(|c| self.eval_classes.contains(c)) {
                return Err(DpqError::InvalidConfig("train and eval classes must be disjoint".into()));
            }
        }
        Ok(())
    }

    /// Model configuration for a training set of `input_dim` vectors and `num_classes` labels.
    pub fn quantizer_config(&self, input_dim: usize, num_classes: usize) -> QuantizerConfig {
        let mut c = QuantizerConfig::new(input_dim, self.num_partitions, self.num_clusters, num_classes);
        c.hidden_dim = self.hidden_dim;
        c.front_dim = self.front_dim;
        c.centroid_dim = self.centroid_dim.unwrap_or_else(|| c.slice_width());
        c.weights = self.weights;
        c.schedule = self.schedule;
        c.seed = self.seed;
        c
    }
}

/// One line of the machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub mode: String,
    pub bits: usize,
    pub value: f64,
}

/// Database code counts per cluster for one method and partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageHistogram {
    pub method: String,
    pub partition: usize,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<MetricRecord>,
    pub histograms: Vec<UsageHistogram>,
}

impl Report {
    fn push(&mut self, metric: &str, mode: &str, bits: usize, value: f64) {
        self.records.push(MetricRecord {
            metric: metric.into(),
            mode: mode.into(),
            bits,
            value,
        });
    }

    /// Value of the first record matching `metric` and `mode`.
    pub fn get(&self, metric: &str, mode: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.metric == metric && r.mode == mode)
            .map(|r| r.value)
    }

    /// One JSON object per line: metric records, then histograms.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("plain struct serializes"));
            out.push('\n');
        }
        for h in &self.histograms {
            out.push_str(&serde_json::to_string(h).expect("plain struct serializes"));
            out.push('\n');
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:<16} {:>5} {:>12}", "metric", "mode", "bits", "value");
        for r in &self.records {
            let _ = writeln!(out, "{:<20} {:<16} {:>5} {:>12.6}", r.metric, r.mode, r.bits, r.value);
        }
        if !self.histograms.is_empty() {
            out.push_str("\ncluster usage (database codes)\n");
            for h in &self.histograms {
                let counts: Vec<String> = h.counts.iter().map(u64::to_string).collect();
                let _ = writeln!(out, "{:<5} m={:<3} {}", h.method, h.partition, counts.join(" "));
            }
        }
        out
    }
}

/// A failure tagged with the pipeline stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: DpqError,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// The data partition used by an experiment.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: VectorSet,
    pub queries: VectorSet,
    pub database: VectorSet,
    /// Number of classes the model is trained on (train labels are dense in `0..n`).
    pub train_classes: usize,
}

pub fn load_data(config: &ExperimentConfig) -> Result<VectorSet> {
    match &config.data {
        DataSource::Synthetic(spec) => gen_synthetic(spec),
        DataSource::File(path) => load_vectors(path),
    }
}

/// Seeded split following the configured protocol.
pub fn split(data: &VectorSet, config: &ExperimentConfig) -> Result<Split> {
    let labels = data.require_labels()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_5EED);
    match config.protocol {
        Protocol::SingleDomain => {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut rng);
            if config.num_queries >= order.len() {
                return Err(DpqError::InvalidConfig(format!(
                    "{} queries leave no database out of {} points",
                    config.num_queries,
                    order.len()
                )));
            }
            let (q, db) = order.split_at(config.num_queries);
            let database = data.select(db);
            Ok(Split {
                train: database.clone(),
                queries: data.select(q),
                database,
                train_classes: data.num_classes(),
            })
        }
        Protocol::CrossDomain => {
            let train_idx: Vec<usize> = (0..data.len())
                .filter(|&i| config.train_classes.contains(&labels[i]))
                .collect();
            let mut eval_idx: Vec<usize> = (0..data.len())
                .filter(|&i| config.eval_classes.contains(&labels[i]))
                .collect();
            eval_idx.shuffle(&mut rng);
            if train_idx.is_empty() || config.num_queries >= eval_idx.len() {
                return Err(DpqError::InvalidConfig(
                    "cross-domain split leaves an empty train set or database".into(),
                ));
            }
            let (q, db) = eval_idx.split_at(config.num_queries);
            let remap: Vec<usize> = train_idx
                .iter()
                .map(|&i| config.train_classes.binary_search(&labels[i]).expect("filtered"))
                .collect();
            let train = VectorSet::new(data.vectors().select(ndarray::Axis(0), &train_idx), Some(remap))?;
            Ok(Split {
                train,
                queries: data.select(q),
                database: data.select(db),
                train_classes: config.train_classes.len(),
            })
        }
    }
}

/// Output of [`run_experiment`]: the report and the trained quantizers.
pub struct ExperimentOutput {
    pub report: Report,
    pub pq: Option<ProductQuantizer>,
    pub dpq: Option<DpqModel>,
    pub training_log: Option<TrainingLog>,
}

fn usage(codes: &CodeSet, method: &str) -> Vec<UsageHistogram> {
    let (m, k) = (codes.num_partitions(), codes.num_clusters());
    let mut counts = vec![vec![0u64; k]; m];
    for code in codes.iter() {
        for (p, &z) in code.iter().enumerate() {
            counts[p][z as usize] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(partition, counts)| UsageHistogram {
            method: method.into(),
            partition,
            counts,
        })
        .collect()
}

/// mAP of full-database rankings for every query.
pub fn retrieval_map<Q: Quantizer + ?Sized>(
    quantizer: &Q,
    database_codes: &CodeSet,
    split: &Split,
    mode: SearchMode,
    tag: &str,
) -> Result<f64> {
    let mut index = SearchIndex::new(quantizer, database_codes)?;
    let rankings = (0..split.queries.len())
        .map(|i| {
            index
                .rank_all(split.queries.vector(i), mode)
                .map(|r| r.into_iter().map(|n| n.index).collect())
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;
    let run = RetrievalRun::new(
        tag,
        split.queries.require_labels()?.to_vec(),
        split.database.require_labels()?.to_vec(),
        rankings,
    )?;
    eval_map(&run)
}

/// Hard-code Top-1/Top-5 accuracy of `model` on labeled points, via the class LUT.
pub fn classification_accuracy(model: &DpqModel, data: &VectorSet) -> Result<(f64, f64)> {
    let lut = build_class_lut(model);
    let codes = model.encode_all(data.vectors().view())?;
    let scores = codes
        .iter()
        .map(|c| lut.scores(c).map(|s| s.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let labels = data.require_labels()?;
    Ok((top_k_accuracy(&scores, labels, 1)?, top_k_accuracy(&scores, labels, 5)?))
}

/// Mean `||soft - hard||^2` over a set of inputs.
fn soft_hard_gap(model: &DpqModel, data: &VectorSet) -> Result<f64> {
    let trace = model.forward_batch(data.vectors().view())?;
    let diff: Array1<f64> = (&trace.soft - &trace.hard).mapv(|v| v * v).sum_axis(ndarray::Axis(1));
    Ok(diff.mean().unwrap_or(0.0))
}

pub fn run_experiment(config: &ExperimentConfig) -> std::result::Result<ExperimentOutput, StageError> {
    config.validate().stage("config")?;
    let data = load_data(config).stage("data")?;
    let split = split(&data, config).stage("split")?;
    let qc = config.quantizer_config(data.dim(), split.train_classes);
    qc.validate().stage("config")?;
    let bits = qc.code_bits();
    let mut report = Report::default();
    let ratio = compression_ratio(data.dim(), qc.num_partitions, qc.num_clusters).stage("config")?;
    report.push("compression_ratio", "codes", bits, ratio);

    let mut out = ExperimentOutput {
        report: Report::default(),
        pq: None,
        dpq: None,
        training_log: None,
    };

    if config.methods.contains(&Method::Pq) {
        let pq = ProductQuantizer::train(&split.train, &qc).stage("train-pq")?;
        let codes = pq.encode_all(split.database.vectors().view()).stage("encode")?;
        let err = quantization_error(&split.database, pq.codebook()).stage("evaluate")?;
        report.push("quantization_error", "pq", bits, err);
        for &mode in &config.modes {
            let tag = format!("pq-{}", mode.name());
            let map = retrieval_map(&pq, &codes, &split, mode, &tag).stage("search")?;
            report.push("map", &tag, bits, map);
        }
        report.histograms.extend(usage(&codes, "pq"));
        out.pq = Some(pq);
    }

    if config.methods.contains(&Method::Dpq) {
        let (model, log) = train_with_log(&split.train, &qc).stage("train-dpq")?;
        if let Some(last) = log.last() {
            report.push("train_loss", "dpq", bits, last.loss.total());
        }
        let codes = model.encode_all(split.database.vectors().view()).stage("encode")?;
        let gap = soft_hard_gap(&model, &split.queries).stage("evaluate")?;
        report.push("soft_hard_gap", "dpq", bits, gap);
        if config.protocol == Protocol::SingleDomain {
            let (top1, top5) = classification_accuracy(&model, &split.queries).stage("evaluate")?;
            report.push("top1", "dpq-hard", bits, top1);
            report.push("top5", "dpq-hard", bits, top5);
        }
        for &mode in &config.modes {
            let tag = format!("dpq-{}", mode.name());
            let map = retrieval_map(&model, &codes, &split, mode, &tag).stage("search")?;
            report.push("map", &tag, bits, map);
        }
        if config.intra_normalize {
            let normed = model.intra_normalize().stage("evaluate")?;
            for &mode in &config.modes {
                let tag = format!("dpq-{}-norm", mode.name());
                let map = retrieval_map(&normed, &codes, &split, mode, &tag).stage("search")?;
                report.push("map", &tag, bits, map);
            }
        }
        report.histograms.extend(usage(&codes, "dpq"));
        out.dpq = Some(model);
        out.training_log = Some(log);
    }

    out.report = report;
    Ok(out)
}
