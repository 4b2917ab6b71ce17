use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use dpq::bench::{
    experiment::retrieval_map, format_sig, gen_synthetic, run_experiment, top_k_accuracy, ExperimentConfig,
    MetricRecord, Report, SyntheticSpec,
};
use dpq::codec::format::{load_codebook, load_codes, load_vectors, save_codebook, save_codes, save_vectors};
use dpq::lut::{build_class_lut, SearchIndex, SearchMode};
use dpq::model::{load_model, save_model, train_with_log};
use dpq::pq::ProductQuantizer;
use dpq::{DpqError, DpqModel, LossWeights, Quantizer, QuantizerConfig, Schedule};

#[derive(Parser)]
#[command(name = "dpq", version, about = "Product quantization and deep product quantization tools")]
struct Cli {
    /// Seed for data generation, splits and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for encoding and search (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    JsonLines,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sym,
    Asym,
}

impl From<Mode> for SearchMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sym => SearchMode::Symmetric,
            Mode::Asym => SearchMode::Asymmetric,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic vector set (DPQV).
    Gen {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 500)]
        points_per_class: usize,
        #[arg(long, default_value_t = 0.3)]
        spread: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a k-means product quantizer and write its codebook (DPQC).
    TrainPq {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        partitions: usize,
        #[arg(long)]
        clusters: usize,
        #[arg(long, default_value_t = 100)]
        kmeans_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a DPQ model and write it (DPQM).
    TrainDpq(TrainDpqArgs),
    /// Encode vectors into packed codes (DPQZ).
    Encode {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        quantizer: QuantizerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank database codes for each query vector.
    Search {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        database: PathBuf,
        #[command(flatten)]
        quantizer: QuantizerArgs,
        #[arg(long, value_enum, default_value_t = Mode::Asym)]
        mode: Mode,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Classify vectors through their hard codes.
    Classify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Retrieval mAP of queries against an encoded database.
    Eval {
        #[arg(long)]
        queries: PathBuf,
        /// Labeled database vectors (DPQV); encoded with the quantizer.
        #[arg(long)]
        database: PathBuf,
        #[command(flatten)]
        quantizer: QuantizerArgs,
        #[arg(long, value_enum, default_value_t = Mode::Asym)]
        mode: Mode,
    },
    /// Run a full experiment described by a `key = value` config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Write the trained DPQ model here.
        #[arg(long)]
        model_out: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct QuantizerArgs {
    /// DPQ model file (DPQM).
    #[arg(long)]
    model: Option<PathBuf>,
    /// PQ codebook file (DPQC).
    #[arg(long)]
    codebook: Option<PathBuf>,
}

#[derive(Args)]
struct TrainDpqArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    partitions: usize,
    #[arg(long)]
    clusters: usize,
    #[arg(long)]
    centroid_dim: Option<usize>,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long)]
    front_dim: Option<usize>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1.0)]
    w_softmax: f64,
    #[arg(long, default_value_t = 0.5)]
    w_central: f64,
    #[arg(long, default_value_t = 0.1)]
    w_gini_batch: f64,
    #[arg(long, default_value_t = 0.1)]
    w_gini_sample: f64,
    #[arg(long, default_value_t = 5e-4)]
    w_weight_decay: f64,
    /// Train the soft path only (no hard losses, no straight-through).
    #[arg(long)]
    soft_only: bool,
    /// Store the model with L2-normalized codebook rows.
    #[arg(long)]
    intra_normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Config(String),
    Stage(&'static str, DpqError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Stage(..) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "configuration error: {msg}"),
            Self::Stage(stage, e) => write!(f, "stage {stage} failed: {e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

trait Context<T> {
    fn config(self) -> CliResult<T>;
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Context<T> for dpq::Result<T> {
    fn config(self) -> CliResult<T> {
        self.map_err(|e| CliError::Config(e.to_string()))
    }

    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError::Stage(stage, e))
    }
}

enum Loaded {
    Pq(ProductQuantizer),
    Dpq(Box<DpqModel>),
}

impl Loaded {
    fn open(args: &QuantizerArgs) -> CliResult<Self> {
        match (&args.model, &args.codebook) {
            (Some(path), _) => load_model(path).config().map(|m| Loaded::Dpq(Box::new(m))),
            (None, Some(path)) => load_codebook(path).config().map(|cb| Loaded::Pq(ProductQuantizer::new(cb))),
            (None, None) => Err(CliError::Config("either --model or --codebook is required".into())),
        }
    }

    fn quantizer(&self) -> &dyn Quantizer {
        match self {
            Loaded::Pq(q) => q,
            Loaded::Dpq(m) => m.as_ref(),
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Loaded::Pq(_) => "pq",
            Loaded::Dpq(_) => "dpq",
        }
    }
}

fn emit(report: &Report, format: OutputFormat, path: Option<&Path>) -> CliResult<()> {
    let text = match format {
        OutputFormat::Text => report.to_table(),
        OutputFormat::JsonLines => report.to_json_lines(),
    };
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Stage("report", e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn single_record(metric: &str, mode: String, bits: usize, value: f64) -> Report {
    Report {
        records: vec![MetricRecord {
            metric: metric.into(),
            mode,
            bits,
            value,
        }],
        histograms: Vec::new(),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Gen {
            classes,
            dim,
            points_per_class,
            spread,
            out,
        } => {
            let spec = SyntheticSpec {
                num_classes: classes,
                dim,
                points_per_class,
                cluster_spread: spread,
                seed,
            };
            spec.validate().config()?;
            let data = gen_synthetic(&spec).stage("gen")?;
            save_vectors(&out, &data).stage("write")?;
            info!("wrote {} vectors to {}", data.len(), out.display());
        }
        Command::TrainPq {
            data,
            partitions,
            clusters,
            kmeans_iters,
            out,
        } => {
            let data = load_vectors(&data).config()?;
            let mut c = QuantizerConfig::new(data.dim(), partitions, clusters, 1);
            c.schedule.kmeans_iters = kmeans_iters;
            c.seed = seed;
            c.validate().config()?;
            let pq = ProductQuantizer::train(&data, &c).stage("train-pq")?;
            save_codebook(&out, pq.codebook()).stage("write")?;
        }
        Command::TrainDpq(a) => {
            let data = load_vectors(&a.data).config()?;
            let classes = data.num_classes();
            if classes == 0 {
                return Err(CliError::Config("training data has no labels".into()));
            }
            let mut c = QuantizerConfig::new(data.dim(), a.partitions, a.clusters, classes);
            c.hidden_dim = a.hidden;
            c.front_dim = a.front_dim;
            c.centroid_dim = a.centroid_dim.unwrap_or_else(|| c.slice_width());
            c.weights = LossWeights {
                softmax: a.w_softmax,
                central: a.w_central,
                gini_batch: a.w_gini_batch,
                gini_sample: a.w_gini_sample,
                weight_decay: a.w_weight_decay,
            };
            c.schedule = Schedule {
                epochs: a.epochs,
                batch_size: a.batch_size,
                learning_rate: a.learning_rate,
                momentum: a.momentum,
                hard_path: !a.soft_only,
                ..Schedule::default()
            };
            c.seed = seed;
            c.validate().config()?;
            let (mut model, log) = train_with_log(&data, &c).stage("train-dpq")?;
            for e in &log.epochs {
                info!("epoch {} lr {} loss {:.6}", e.epoch, e.learning_rate, e.loss.total());
            }
            if a.intra_normalize {
                model = model.intra_normalize().stage("intra-normalize")?;
            }
            save_model(&a.out, &model).stage("write")?;
        }
        Command::Encode { data, quantizer, out } => {
            let data = load_vectors(&data).config()?;
            let q = Loaded::open(&quantizer)?;
            let codes = q.quantizer().encode_all(data.vectors().view()).stage("encode")?;
            save_codes(&out, &codes).stage("write")?;
        }
        Command::Search {
            queries,
            database,
            quantizer,
            mode,
            k,
        } => {
            let queries = load_vectors(&queries).config()?;
            let codes = load_codes(&database).config()?;
            let q = Loaded::open(&quantizer)?;
            let mut index = SearchIndex::new(q.quantizer(), &codes).config()?;
            if k == 0 || k > codes.len() {
                return Err(CliError::Config(format!("k must lie in 1..={}", codes.len())));
            }
            let mut out = String::new();
            for i in 0..queries.len() {
                let hits = index.search(queries.vector(i), mode.into(), k).stage("search")?;
                for (rank, n) in hits.iter().enumerate() {
                    out.push_str(&format!("{i}\t{rank}\t{}\t{}\n", n.index, format_sig(n.distance, 9)));
                }
            }
            print!("{out}");
        }
        Command::Classify { data, model } => {
            let data = load_vectors(&data).config()?;
            let model = load_model(&model).config()?;
            let lut = build_class_lut(&model);
            let codes = model.encode_all(data.vectors().view()).stage("encode")?;
            let scores = codes
                .iter()
                .map(|c| lut.scores(c).map(|s| s.to_vec()))
                .collect::<dpq::Result<Vec<_>>>()
                .stage("classify")?;
            match data.labels() {
                Some(labels) => {
                    let bits = model.config().code_bits();
                    let top1 = top_k_accuracy(&scores, labels, 1).stage("evaluate")?;
                    let top5 = top_k_accuracy(&scores, labels, 5).stage("evaluate")?;
                    let mut report = single_record("top1", "dpq-hard".into(), bits, top1);
                    report.records.extend(single_record("top5", "dpq-hard".into(), bits, top5).records);
                    emit(&report, cli.format, None)?;
                }
                None => {
                    for (i, row) in scores.iter().enumerate() {
                        let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                        println!("{i}\t{best}");
                    }
                }
            }
        }
        Command::Eval {
            queries,
            database,
            quantizer,
            mode,
        } => {
            let queries = load_vectors(&queries).config()?;
            let database = load_vectors(&database).config()?;
            if queries.labels().is_none() || database.labels().is_none() {
                return Err(CliError::Config("eval needs labeled queries and database".into()));
            }
            let q = Loaded::open(&quantizer)?;
            let codes = q.quantizer().encode_all(database.vectors().view()).stage("encode")?;
            let split = dpq::bench::experiment::Split {
                train: database.clone(),
                queries,
                database,
                train_classes: 0,
            };
            let mode: SearchMode = mode.into();
            let tag = format!("{}-{}", q.tag(), mode.name());
            let map = retrieval_map(q.quantizer(), &codes, &split, mode, &tag).stage("search")?;
            let cb = q.quantizer().codebook();
            let bits = cb.num_partitions() * cb.num_clusters().trailing_zeros() as usize;
            emit(&single_record("map", tag, bits, map), cli.format, None)?;
        }
        Command::Experiment {
            config,
            model_out,
            report_out,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config).config()?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = run_experiment(&cfg).map_err(|e| CliError::Stage(e.stage, e.source))?;
            if let (Some(path), Some(model)) = (&model_out, &out.dpq) {
                save_model(path, model).stage("write")?;
            }
            emit(&out.report, cli.format, report_out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
