//! Command-line interface: training runs, checkpoint evaluation, synthetic
//! data and the scaling benchmark.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, scaling_benchmark, write_scaling_csv, EvalReport, ScalingConfig};
use crate::graph::{write_adjacency_list, Dataset, InteractionFormat};
use crate::model::{checkpoint_precision, infer_embeddings, Checkpoint, Inference, LightGcnSampler, ModelKind};
use crate::propagation::{PropagationConfig, VrMode};
use crate::scalar::{Precision, Real};
use crate::synthetic::{community_bipartite, split_per_user, uniform_bipartite, CommunitySpec};
use crate::training::{train_with, TrainConfig};

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid flags or flag combination (exit code 2).
    Usage(String),
    /// Data or runtime failure (exit code 1).
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ltgnn", version, about = "Linear-time graph collaborative filtering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write manifest, metrics and checkpoint to --out.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and print metrics as JSON.
    Eval(EvalArgs),
    /// Generate a synthetic interaction dataset.
    Synth(SynthArgs),
    /// Time epochs of several models on synthetic graphs of growing size.
    Bench(BenchArgs),
    /// Re-run a training run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Mf,
    Lightgcn,
    Ltgnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VrArg {
    Ns,
    Fvr,
    Bvr,
    Bivr,
    Classic,
    Full,
}

impl From<VrArg> for VrMode {
    fn from(v: VrArg) -> Self {
        match v {
            VrArg::Ns => VrMode::Ns,
            VrArg::Fvr => VrMode::Fvr,
            VrArg::Bvr => VrMode::Bvr,
            VrArg::Bivr => VrMode::Bivr,
            VrArg::Classic => VrMode::ClassicVr,
            VrArg::Full => VrMode::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Full,
    Ns,
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    AdjacencyList,
    PairCsv,
}

impl From<FormatArg> for InteractionFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::AdjacencyList => InteractionFormat::AdjacencyList,
            FormatArg::PairCsv => InteractionFormat::PairCsv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InferenceArg {
    Appnp,
    History,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding train.txt (and optionally test.txt), or a single training file.
    #[arg(long)]
    pub data: PathBuf,
    /// Explicit test file, overriding DIR/test.txt.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "adjacency-list")]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "ltgnn")]
    pub model: ModelArg,
    /// Propagation layers (default 1 for ltgnn, 3 for lightgcn).
    #[arg(long)]
    pub layers: Option<usize>,
    /// Teleport factor (ltgnn only; default 0.45).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sampled neighbors per node (default 10).
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// Variance reduction mode (ltgnn only; default fvr).
    #[arg(long, value_enum)]
    pub vr: Option<VrArg>,
    /// Aggregation estimator for lightgcn (default full).
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 2048)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub wd: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub eval_k: usize,
    /// Evaluate every N epochs (0 disables).
    #[arg(long, default_value_t = 5)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub init_std: f64,
    /// Measure PPNP relative error every N iterations (small graphs only).
    #[arg(long)]
    pub probe_every: Option<usize>,
    /// Embeddings used for ranking by ltgnn.
    #[arg(long, value_enum, default_value = "appnp")]
    pub inference: InferenceArg,
    /// APPNP steps for `--inference appnp`.
    #[arg(long, default_value_t = 3)]
    pub inference_steps: usize,
    /// Arithmetic precision; f64 runs are bitwise reproducible.
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: PrecisionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "appnp")]
    pub inference: InferenceArg,
    #[arg(long, default_value_t = 3)]
    pub inference_steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub users: usize,
    #[arg(long)]
    pub items: usize,
    #[arg(long)]
    pub edges: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plant this many user/item communities instead of uniform edges.
    #[arg(long)]
    pub communities: Option<usize>,
    /// Share of in-community interactions (with --communities).
    #[arg(long, default_value_t = 0.8)]
    pub affinity: f64,
    /// Item popularity skew (with --communities).
    #[arg(long, default_value_t = 0.8)]
    pub popularity_exponent: f64,
    /// Hold out this fraction per user; --out then names a directory.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![100_000, 200_000, 400_000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub density: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![ModelArg::Mf, ModelArg::Ltgnn, ModelArg::Lightgcn])]
    pub models: Vec<ModelArg>,
    /// Layers of the LightGCN baseline.
    #[arg(long, default_value_t = 3)]
    pub lightgcn_layers: usize,
    #[arg(long, default_value_t = 2)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2048)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub neighbors: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the replayed run.
    #[arg(long)]
    pub out: PathBuf,
}

/// Identity of the data a run was trained on.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetFingerprint {
    pub train: PathBuf,
    pub test: Option<PathBuf>,
    pub format: InteractionFormat,
    pub train_edges: usize,
    pub test_interactions: usize,
    /// SHA-256 over the train file bytes followed by the test file bytes.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Artifacts {
    pub checkpoint: PathBuf,
    pub metrics: Option<PathBuf>,
}

/// Everything needed to repeat a training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub precision: Precision,
    pub dataset: DatasetFingerprint,
    pub seed: u64,
    pub artifacts: Artifacts,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(Self::FILE);
        let tmp = dir.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

fn resolve_data(args: &DataArgs) -> (PathBuf, Option<PathBuf>) {
    if args.data.is_dir() {
        let test = args.test.clone().or_else(|| {
            let t = args.data.join("test.txt");
            t.exists().then_some(t)
        });
        (args.data.join("train.txt"), test)
    } else {
        (args.data.clone(), args.test.clone())
    }
}

fn fingerprint(train: &Path, test: Option<&Path>, format: InteractionFormat, dataset: &Dataset) -> Result<DatasetFingerprint> {
    let mut hasher = Sha256::new();
    for p in std::iter::once(train).chain(test) {
        hasher.update(fs::read(p).map_err(|e| Error::io(p, e))?);
    }
    let sha256 = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(DatasetFingerprint {
        train: train.to_path_buf(),
        test: test.map(Path::to_path_buf),
        format,
        train_edges: dataset.train.n_edges(),
        test_interactions: dataset.n_test_interactions(),
        sha256,
    })
}

fn inference(arg: InferenceArg, steps: usize) -> Inference {
    match arg {
        InferenceArg::Appnp => Inference::Appnp(steps),
        InferenceArg::History => Inference::OutputHistory,
    }
}

/// Builds the training configuration, rejecting flags that do not apply to
/// the chosen model.
pub fn train_config(args: &TrainArgs) -> std::result::Result<TrainConfig, CliError> {
    let usage = |m: &str| Err(CliError::Usage(m.to_string()));
    let model = match args.model {
        ModelArg::Mf => {
            if args.neighbors.is_some() || args.alpha.is_some() || args.vr.is_some() || args.layers.is_some() || args.sampler.is_some() {
                return usage("--layers, --alpha, --neighbors, --vr and --sampler do not apply to --model mf");
            }
            ModelKind::Mf
        }
        ModelArg::Lightgcn => {
            if args.alpha.is_some() || args.vr.is_some() {
                return usage("--alpha and --vr apply only to --model ltgnn");
            }
            let sampler = match args.sampler.unwrap_or(SamplerArg::Full) {
                SamplerArg::Full => LightGcnSampler::Full,
                SamplerArg::Ns => LightGcnSampler::Ns,
                SamplerArg::Classic => LightGcnSampler::ClassicVr,
            };
            if sampler == LightGcnSampler::Full && args.neighbors.is_some() {
                return usage("--neighbors requires --sampler ns or classic for --model lightgcn");
            }
            ModelKind::LightGcn {
                layers: args.layers.unwrap_or(3),
                sampler,
                sample_size: args.neighbors.unwrap_or(10),
            }
        }
        ModelArg::Ltgnn => {
            if args.sampler.is_some() {
                return usage("--sampler applies only to --model lightgcn");
            }
            let vr_mode: VrMode = args.vr.map(Into::into).unwrap_or(VrMode::Fvr);
            if vr_mode == VrMode::Full && args.neighbors.is_some() {
                return usage("--neighbors has no effect with --vr full");
            }
            ModelKind::Ltgnn(PropagationConfig {
                alpha: args.alpha.unwrap_or(0.45),
                layers: args.layers.unwrap_or(1),
                sample_size: args.neighbors.unwrap_or(10),
                vr_mode,
            })
        }
    };
    let config = TrainConfig {
        model,
        epochs: args.epochs,
        batch_size: args.batch,
        lr: args.lr,
        weight_decay: args.wd,
        dim: args.dim,
        init_std: args.init_std,
        seed: args.seed,
        eval_every: args.eval_every,
        eval_k: args.eval_k,
        inference: inference(args.inference, args.inference_steps),
        probe_every: args.probe_every,
        ..TrainConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// Runs training into `out` and returns the written manifest.
pub fn run_training(
    config: TrainConfig,
    precision: Precision,
    train_path: &Path,
    test_path: Option<&Path>,
    format: InteractionFormat,
    out: &Path,
) -> Result<RunManifest> {
    let dataset = Dataset::load(train_path, test_path, format)?;
    for w in &dataset.report.warnings {
        log::warn!("{w}");
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let metrics = (config.epochs > 0).then(|| out.join("metrics.csv"));
    let mut manifest = RunManifest {
        seed: config.seed,
        dataset: fingerprint(train_path, test_path, format, &dataset)?,
        config,
        precision,
        artifacts: Artifacts {
            checkpoint: out.join("model.ckpt"),
            metrics: metrics.clone(),
        },
        started_at: now(),
        finished_at: None,
    };
    manifest.write(out)?;
    match precision {
        Precision::F32 => train_into::<f32>(&dataset, &manifest)?,
        Precision::F64 => train_into::<f64>(&dataset, &manifest)?,
    }
    manifest.finished_at = Some(now());
    manifest.write(out)?;
    Ok(manifest)
}

fn train_into<T: Real>(dataset: &Dataset, manifest: &RunManifest) -> Result<()> {
    let config = &manifest.config;
    let ckpt_path = &manifest.artifacts.checkpoint;
    let mut csv = match &manifest.artifacts.metrics {
        Some(p) => {
            let mut f = OpenOptions::new()
                .create(true)
                .write(true)
                .truncate(true)
                .open(p)
                .map_err(|e| Error::io(p, e))?;
            writeln!(f, "{}", EvalReport::csv_header(config.eval_k)).map_err(|e| Error::io(p, e))?;
            Some((p.clone(), f))
        }
        None => None,
    };
    if config.epochs == 0 {
        let mut rng = crate::sampler::RngStreams::new(config.seed).stream(0, 0, crate::sampler::Stream::Init);
        let state = crate::model::init_embeddings::<T, _>(
            dataset.train.n_users(),
            dataset.train.n_items(),
            config.dim,
            &mut rng,
            config.init_std,
        )?;
        return Checkpoint {
            kind: config.model,
            state,
        }
        .write(ckpt_path);
    }
    let outcome = train_with::<T>(dataset, config, |report, state| {
        if let Some((p, f)) = csv.as_mut() {
            writeln!(f, "{}", report.csv_row()).map_err(|e| Error::io(&*p, e))?;
            f.flush().map_err(|e| Error::io(&*p, e))?;
        }
        Checkpoint {
            kind: config.model,
            state: state.clone(),
        }
        .write(ckpt_path)
    })?;
    Checkpoint {
        kind: config.model,
        state: outcome.state,
    }
    .write(ckpt_path)
}

fn cmd_train(args: &TrainArgs) -> std::result::Result<(), CliError> {
    let config = train_config(args)?;
    let precision = match args.precision {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
    };
    let (train, test) = resolve_data(&args.data);
    let manifest = run_training(config, precision, &train, test.as_deref(), args.data.format.into(), &args.out)?;
    println!("{}", serde_json::to_string_pretty(&manifest.artifacts).map_err(Error::from)?);
    Ok(())
}

fn eval_checkpoint<T: Real>(args: &EvalArgs, dataset: &Dataset) -> Result<serde_json::Value> {
    let ckpt: Checkpoint<T> = Checkpoint::read(&args.checkpoint)?;
    let s = &ckpt.state;
    if s.n_users() != dataset.train.n_users() || s.n_items() != dataset.train.n_items() {
        return Err(Error::Dimension(format!(
            "checkpoint is {} users x {} items, dataset is {} x {}",
            s.n_users(),
            s.n_items(),
            dataset.train.n_users(),
            dataset.train.n_items()
        )));
    }
    let norm = dataset.train.norm_adjacency().cast::<T>();
    let emb = infer_embeddings(&norm, s, &ckpt.kind, inference(args.inference, args.inference_steps))?;
    let m = evaluate(&emb, &dataset.train, &dataset.test, args.k)?;
    Ok(serde_json::json!({
        "model": ckpt.kind.name(),
        "epoch": s.epoch,
        "k": m.k,
        "recall": m.recall,
        "ndcg": m.ndcg,
        "users": m.users,
    }))
}

fn cmd_eval(args: &EvalArgs) -> std::result::Result<(), CliError> {
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let (train, test) = resolve_data(&args.data);
    let dataset = Dataset::load(&train, test.as_deref(), args.data.format.into())?;
    let value = match checkpoint_precision(&args.checkpoint)? {
        Precision::F32 => eval_checkpoint::<f32>(args, &dataset)?,
        Precision::F64 => eval_checkpoint::<f64>(args, &dataset)?,
    };
    println!("{value}");
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> std::result::Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let pairs = match args.communities {
        Some(communities) => community_bipartite(
            &CommunitySpec {
                n_users: args.users,
                n_items: args.items,
                n_edges: args.edges,
                communities,
                affinity: args.affinity,
                popularity_exponent: args.popularity_exponent,
            },
            &mut rng,
        ),
        None => uniform_bipartite(args.users, args.items, args.edges, &mut rng),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    match args.test_fraction {
        None => write_adjacency_list(&args.out, args.users, &pairs)?,
        Some(f) => {
            if !(0.0..1.0).contains(&f) {
                return Err(CliError::Usage("--test-fraction must lie in [0, 1)".into()));
            }
            let (train, test) = split_per_user(args.users, &pairs, f, &mut rng);
            fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
            write_adjacency_list(&args.out.join("train.txt"), args.users, &train)?;
            write_adjacency_list(&args.out.join("test.txt"), args.users, &test)?;
        }
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> std::result::Result<(), CliError> {
    let models = args
        .models
        .iter()
        .map(|m| match m {
            ModelArg::Mf => ModelKind::Mf,
            ModelArg::Ltgnn => ModelKind::Ltgnn(PropagationConfig {
                sample_size: args.neighbors,
                ..Default::default()
            }),
            ModelArg::Lightgcn => ModelKind::LightGcn {
                layers: args.lightgcn_layers,
                sampler: LightGcnSampler::Full,
                sample_size: args.neighbors,
            },
        })
        .collect();
    let config = ScalingConfig {
        sizes: args.sizes.clone(),
        density: args.density,
        models,
        epochs: args.epochs,
        train: TrainConfig {
            batch_size: args.batch,
            dim: args.dim,
            seed: args.seed,
            ..TrainConfig::default()
        },
    };
    let rows = scaling_benchmark(&config).map_err(|e| match e {
        Error::Config(m) => CliError::Usage(m),
        other => CliError::Run(other),
    })?;
    write_scaling_csv(&args.out, &rows)?;
    for r in &rows {
        println!("{:<20} {:>9} edges {:>9.3} s/epoch", r.model, r.edges, r.epoch_s);
    }
    Ok(())
}

fn cmd_replay(args: &ReplayArgs) -> std::result::Result<(), CliError> {
    let original = RunManifest::read(&args.manifest)?;
    let d = &original.dataset;
    let dataset = Dataset::load(&d.train, d.test.as_deref(), d.format)?;
    let now = fingerprint(&d.train, d.test.as_deref(), d.format, &dataset)?;
    if now.sha256 != d.sha256 {
        return Err(CliError::Run(Error::Config(format!(
            "dataset changed since the run (sha256 {} != {})",
            now.sha256, d.sha256
        ))));
    }
    let manifest = run_training(
        original.config.clone(),
        original.precision,
        &d.train,
        d.test.as_deref(),
        d.format,
        &args.out,
    )?;
    println!("{}", serde_json::to_string_pretty(&manifest.artifacts).map_err(Error::from)?);
    Ok(())
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli) -> std::result::Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

/// Applies `LTGNN_THREADS` to the global worker pool.
pub fn configure_threads() {
    if let Ok(v) = std::env::var("LTGNN_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not set thread count: {e}");
                }
            }
            _ => log::warn!("ignoring LTGNN_THREADS={v}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> TrainArgs {
        let mut full = vec!["ltgnn", "train", "--data", "x", "--out", "o"];
        full.extend_from_slice(args);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Train(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn default_ltgnn_configuration() {
        let c = train_config(&parse(&["--model", "ltgnn", "--layers", "1", "--alpha", "0.45", "--neighbors", "10"])).unwrap();
        assert_eq!(
            c.model,
            ModelKind::Ltgnn(PropagationConfig {
                alpha: 0.45,
                layers: 1,
                sample_size: 10,
                vr_mode: VrMode::Fvr
            })
        );
        assert_eq!((c.batch_size, c.dim, c.eval_k), (2048, 64, 20));
    }

    #[test]
    fn inapplicable_flags_are_usage_errors() {
        for args in [
            vec!["--model", "mf", "--neighbors", "5"],
            vec!["--model", "lightgcn", "--alpha", "0.5"],
            vec!["--model", "ltgnn", "--sampler", "ns"],
            vec!["--model", "ltgnn", "--alpha", "1.5"],
        ] {
            let err = train_config(&parse(&args)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{args:?}");
        }
    }

    #[test]
    fn lightgcn_sampler_flags() {
        let c = train_config(&parse(&["--model", "lightgcn", "--sampler", "ns", "--neighbors", "5"])).unwrap();
        assert_eq!(
            c.model,
            ModelKind::LightGcn {
                layers: 3,
                sampler: LightGcnSampler::Ns,
                sample_size: 5
            }
        );
    }
}

