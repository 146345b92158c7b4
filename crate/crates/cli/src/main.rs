//! `trackclust`: refine precomputed face-track features, cluster them, and
//! score the result.
//!
//! Every subcommand reads and writes the library's on-disk formats, so any
//! artifact produced here can be consumed by another subcommand or by the
//! library directly. Runtime failures exit 1 with `error[<category>]: ...`
//! on stderr; usage mistakes exit 2.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trackclust::features::io::{load_dataset, save_dataset};
use trackclust::features::synth::{generate, SynthConfig};
use trackclust::features::{base_track_representations, embedded_track_representations, Dataset};
use trackclust::metrics::{frame_level_view, Level, MetricReport, SimilarityHistogram};
use trackclust::mining::{
    build_miner, mine_epoch, DistanceSpace, MinerSetup, MiningConfig, MiningContext,
    write_pairs_csv,
};
use trackclust::model::checkpoint::{load_checkpoint, save_checkpoint, save_sidecar, Sidecar};
use trackclust::model::{train, DistanceKind, TrainConfig};
use trackclust::pipeline::{
    cluster_reps, partition_from_assignment, read_assignment_csv, run_pipeline, Method,
    PipelineConfig, PipelineError, write_assignment_csv, write_histogram_csv,
};

#[derive(Parser)]
#[command(name = "trackclust", version, about = "Face-track feature refinement and clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Synth(SynthCmd),
    /// Mine one epoch of training pairs and export them as CSV.
    MinePairs(MinePairsCmd),
    /// Train an embedder and save its checkpoint.
    Train(TrainCmd),
    /// Cluster track representations and write the assignment.
    Cluster(ClusterCmd),
    /// Score an assignment against ground-truth labels.
    Evaluate(EvaluateCmd),
    /// Full pipeline: load, refine, cluster, score, write artifacts.
    Run(RunCmd),
    /// Export the same/different-identity similarity histogram.
    Histogram(HistogramCmd),
}

/// Input dataset locations shared by most subcommands.
#[derive(Args)]
struct DataArgs {
    /// Feature file, binary (TCF1) or CSV; the format is sniffed.
    #[arg(long)]
    features: PathBuf,
    /// Track metadata JSON.
    #[arg(long)]
    tracks: PathBuf,
}

#[derive(Args, Default)]
struct MiningFlags {
    /// Frames drawn per ranked-list iteration (ssiam, pseudo-rf).
    #[arg(long)]
    subset_size: Option<usize>,
    /// Hard pairs kept per polarity per iteration (ssiam).
    #[arg(long)]
    pairs_per_polarity: Option<usize>,
    /// Farthest-track pool size for singleton negatives (tsiam).
    #[arg(long)]
    farthest_tracks: Option<usize>,
    /// Positives mined per anchor frame (tsiam).
    #[arg(long)]
    pos_per_frame: Option<usize>,
    /// Negatives mined per anchor frame (tsiam).
    #[arg(long)]
    neg_per_frame: Option<usize>,
    /// Mine distances in the raw feature space instead of the current
    /// embedding.
    #[arg(long)]
    base_space: bool,
}

impl MiningFlags {
    fn apply(&self, c: &mut MiningConfig) {
        if let Some(v) = self.subset_size {
            c.subset_size = v;
        }
        if let Some(v) = self.pairs_per_polarity {
            c.pairs_per_polarity = v;
        }
        if let Some(v) = self.farthest_tracks {
            c.farthest_tracks = v;
        }
        if let Some(v) = self.pos_per_frame {
            c.pos_per_frame = v;
        }
        if let Some(v) = self.neg_per_frame {
            c.neg_per_frame = v;
        }
        if self.base_space {
            c.space = DistanceSpace::Base;
        }
    }
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Relative loss change below which an epoch counts as calm.
    #[arg(long)]
    plateau_tolerance: Option<f64>,
    /// Consecutive calm epochs that end training.
    #[arg(long)]
    plateau_patience: Option<usize>,
    /// Override the fan-in-scaled uniform init bound.
    #[arg(long)]
    init_scale: Option<f64>,
    /// Pair distance: euclidean or squared-euclidean.
    #[arg(long, value_parser = parse_distance_kind)]
    distance_kind: Option<DistanceKind>,
}

impl TrainFlags {
    fn apply(&self, c: &mut TrainConfig) {
        if let Some(v) = self.margin {
            c.margin = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.max_epochs {
            c.max_epochs = v;
        }
        if let Some(v) = self.plateau_tolerance {
            c.plateau_tolerance = v;
        }
        if let Some(v) = self.plateau_patience {
            c.plateau_patience = v;
        }
        if let Some(v) = self.init_scale {
            c.init_scale = Some(v);
        }
        if let Some(v) = self.distance_kind {
            c.distance_kind = v;
        }
    }
}

#[derive(Args)]
struct SynthCmd {
    /// JSON generator config; the flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    identities: Option<usize>,
    #[arg(long)]
    tracks_per_identity: Option<usize>,
    /// Minimum frames per track (inclusive).
    #[arg(long)]
    frames_min: Option<usize>,
    /// Maximum frames per track (inclusive).
    #[arg(long)]
    frames_max: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    /// Minimum distance between identity centers on the unit sphere.
    #[arg(long)]
    separation: Option<f64>,
    /// Per-coordinate frame noise sigma.
    #[arg(long)]
    noise: Option<f64>,
    /// Share of tracks paired into overlapping different-identity spans.
    #[arg(long)]
    cooccurrence: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output feature file (binary).
    #[arg(long)]
    features: PathBuf,
    /// Output track metadata JSON.
    #[arg(long)]
    tracks: PathBuf,
}

#[derive(Args)]
struct MinePairsCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Mining method: tsiam, ssiam or pseudo-rf.
    #[arg(long, default_value = "ssiam")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    mining: MiningFlags,
    /// Output pair CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Training method: tsiam, ssiam or pseudo-rf.
    #[arg(long, default_value = "ssiam")]
    method: Method,
    /// Master seed (mandatory so runs are reproducible).
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    embed_dim: usize,
    #[arg(long, default_value_t = 2)]
    proj_dim: usize,
    #[command(flatten)]
    mining: MiningFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Output checkpoint; a `.json` sidecar lands next to it.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ClusterCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint whose embedding to cluster; omit to cluster raw features.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Cluster count; defaults to the distinct ground-truth label count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
    /// Output assignment CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Assignment CSV produced by `cluster` or `run`.
    #[arg(long)]
    assignment: PathBuf,
    /// Scoring granularity: track or frame.
    #[arg(long, default_value = "track", value_parser = parse_level)]
    level: Level,
}

#[derive(Args)]
struct RunCmd {
    /// JSON pipeline config; the flags below override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    tracks: Option<PathBuf>,
    /// base, tsiam, ssiam or pseudo-rf.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    k: Option<u64>,
    #[arg(long, value_parser = parse_level)]
    level: Option<Level>,
    /// Directory for report, assignment, checkpoint and histograms.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed (mandatory so runs are reproducible).
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    proj_dim: Option<usize>,
    #[command(flatten)]
    mining: MiningFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct HistogramCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint whose embedding to histogram; omit for raw features.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    bins: usize,
    /// Output histogram CSV.
    #[arg(long)]
    out: PathBuf,
}

fn parse_level(s: &str) -> Result<Level, String> {
    match s {
        "track" => Ok(Level::Track),
        "frame" => Ok(Level::Frame),
        other => Err(format!("unknown level '{other}'; expected track or frame")),
    }
}

fn parse_distance_kind(s: &str) -> Result<DistanceKind, String> {
    match s {
        "euclidean" => Ok(DistanceKind::Euclidean),
        "squared-euclidean" => Ok(DistanceKind::SquaredEuclidean),
        other => Err(format!(
            "unknown distance kind '{other}'; expected euclidean or squared-euclidean"
        )),
    }
}

enum CliError {
    /// Bad invocation or unreadable/malformed config file; exits 2.
    Usage(String),
    /// Everything else; exits 1 with the library's error category.
    Runtime(PipelineError),
}

impl<E: Into<PipelineError>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn load_json_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))
}

fn representations(
    dataset: &Dataset,
    model: &Option<PathBuf>,
) -> Result<BTreeMap<u64, Vec<f64>>, CliError> {
    match model {
        Some(path) => {
            let params = load_checkpoint(path)?;
            Ok(embedded_track_representations(dataset, &params)?)
        }
        None => Ok(base_track_representations(dataset)?),
    }
}

fn resolve_k(dataset: &Dataset, k: Option<u64>) -> Result<usize, CliError> {
    match k {
        Some(k) => Ok(k as usize),
        None => {
            let labels = dataset.distinct_labels();
            if labels.is_empty() {
                return Err(CliError::Runtime(PipelineError::MissingLabels(
                    "pass an explicit cluster count",
                )));
            }
            Ok(labels.len())
        }
    }
}

fn cmd_synth(cmd: SynthCmd) -> Result<(), CliError> {
    let mut cfg = match &cmd.config {
        Some(path) => load_json_config::<SynthConfig>(path)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = cmd.identities {
        cfg.num_identities = v;
    }
    if let Some(v) = cmd.tracks_per_identity {
        cfg.tracks_per_identity = v;
    }
    if let Some(v) = cmd.frames_min {
        cfg.frames_per_track.0 = v;
    }
    if let Some(v) = cmd.frames_max {
        cfg.frames_per_track.1 = v;
    }
    if let Some(v) = cmd.dimension {
        cfg.dimension = v;
    }
    if let Some(v) = cmd.separation {
        cfg.cluster_separation = v;
    }
    if let Some(v) = cmd.noise {
        cfg.noise_sigma = v;
    }
    if let Some(v) = cmd.cooccurrence {
        cfg.cooccurrence_fraction = v;
    }
    if let Some(v) = cmd.seed {
        cfg.seed = v;
    }
    let dataset = generate(&cfg)?;
    save_dataset(&dataset, &cmd.features, &cmd.tracks)?;
    info!(
        "wrote {} frames in {} tracks to {} / {}",
        dataset.num_frames(),
        dataset.num_tracks(),
        cmd.features.display(),
        cmd.tracks.display()
    );
    Ok(())
}

fn cmd_mine_pairs(cmd: MinePairsCmd) -> Result<(), CliError> {
    let dataset = load_dataset(&cmd.data.features, &cmd.data.tracks)?;
    let base = dataset.feature_matrix();
    let mut config = MiningConfig {
        seed: cmd.seed,
        // Standalone mining has no trained embedder, so distances are
        // measured in the raw feature space.
        space: DistanceSpace::Base,
        ..MiningConfig::default()
    };
    cmd.mining.apply(&mut config);
    let setup = MinerSetup {
        dataset: &dataset,
        base: &base,
        config: &config,
    };
    let mut miner = build_miner(&cmd.method, &setup)?;
    let ctx = MiningContext {
        dataset: &dataset,
        base: &base,
        params: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cmd.seed);
    let pairs = mine_epoch(miner.as_mut(), &ctx, &mut rng)?;
    write_pairs_csv(&pairs, &cmd.out)?;
    info!("wrote {} {} pairs to {}", pairs.len(), cmd.method, cmd.out.display());
    Ok(())
}

fn cmd_train(cmd: TrainCmd) -> Result<(), CliError> {
    let miner_name = cmd.method.miner_name().ok_or_else(|| {
        CliError::Usage("method 'base' does not train; pick tsiam, ssiam or pseudo-rf".into())
    })?;
    let dataset = load_dataset(&cmd.data.features, &cmd.data.tracks)?;
    let features = dataset.feature_matrix();
    let mut mining = MiningConfig {
        seed: cmd.seed,
        ..MiningConfig::default()
    };
    cmd.mining.apply(&mut mining);
    let mut train_config = TrainConfig {
        seed: cmd.seed,
        ..TrainConfig::default()
    };
    cmd.train.apply(&mut train_config);

    let setup = MinerSetup {
        dataset: &dataset,
        base: &features,
        config: &mining,
    };
    let mut miner = build_miner(miner_name, &setup)?;
    let (params, history) = train(
        &dataset,
        &features,
        miner.as_mut(),
        cmd.embed_dim,
        cmd.proj_dim,
        &train_config,
    )?;
    save_checkpoint(&cmd.model, &params)?;
    save_sidecar(
        &cmd.model,
        &Sidecar {
            train_config,
            loss_history: history.clone(),
        },
    )?;
    info!(
        "trained {} for {} epochs (final loss {:.6}); checkpoint at {}",
        miner_name,
        history.len(),
        history.last().map_or(f64::NAN, |r| r.mean_loss),
        cmd.model.display()
    );
    Ok(())
}

fn cmd_cluster(cmd: ClusterCmd) -> Result<(), CliError> {
    let dataset = load_dataset(&cmd.data.features, &cmd.data.tracks)?;
    let k = resolve_k(&dataset, cmd.k)?;
    let reps = representations(&dataset, &cmd.model)?;
    let (ids, assignment) = cluster_reps(&reps, k)?;
    let rows: Vec<(u64, usize)> = ids
        .into_iter()
        .zip(assignment.labels().iter().copied())
        .collect();
    write_assignment_csv(&cmd.out, &rows)?;
    info!(
        "clustered {} tracks into {} clusters; assignment at {}",
        rows.len(),
        k,
        cmd.out.display()
    );
    Ok(())
}

fn cmd_evaluate(cmd: EvaluateCmd) -> Result<(), CliError> {
    let dataset = load_dataset(&cmd.data.features, &cmd.data.tracks)?;
    let assignment = read_assignment_csv(&cmd.assignment)?;
    let partition = partition_from_assignment(&dataset, &assignment)?;
    let partition = match cmd.level {
        Level::Track => partition,
        Level::Frame => frame_level_view(&partition, &dataset)?,
    };
    let report = MetricReport::from_partition(&partition, cmd.level);
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(PipelineError::Parse(e.to_string())))?;
    println!("{json}");
    Ok(())
}

fn cmd_run(cmd: RunCmd) -> Result<(), CliError> {
    let mut config = match &cmd.config {
        Some(path) => load_json_config::<PipelineConfig>(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = cmd.features {
        config.features = v;
    }
    if let Some(v) = cmd.tracks {
        config.tracks = v;
    }
    if let Some(v) = cmd.method {
        config.method = v;
    }
    if let Some(v) = cmd.k {
        config.k = Some(v as usize);
    }
    if let Some(v) = cmd.level {
        config.level = v;
    }
    if let Some(v) = cmd.out_dir {
        config.output_dir = Some(v);
    }
    if let Some(v) = cmd.embed_dim {
        config.embed_dim = v;
    }
    if let Some(v) = cmd.proj_dim {
        config.proj_dim = v;
    }
    config.seed = cmd.seed;
    cmd.mining.apply(&mut config.mining);
    cmd.train.apply(&mut config.train);

    let report = run_pipeline(&config)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(PipelineError::Parse(e.to_string())))?;
    println!("{json}");
    Ok(())
}

fn cmd_histogram(cmd: HistogramCmd) -> Result<(), CliError> {
    let dataset = load_dataset(&cmd.data.features, &cmd.data.tracks)?;
    let reps_map = representations(&dataset, &cmd.model)?;
    let mut reps = Vec::with_capacity(reps_map.len());
    let mut labels = Vec::with_capacity(reps_map.len());
    for (&id, rep) in &reps_map {
        let label = dataset
            .track(id)
            .and_then(|t| t.label.clone())
            .ok_or(PipelineError::MissingLabels("cannot split the histogram"))?;
        reps.push(rep.clone());
        labels.push(label);
    }
    let hist: SimilarityHistogram =
        trackclust::metrics::similarity_histogram(&reps, &labels, cmd.bins)?;
    write_histogram_csv(&cmd.out, &hist)?;
    info!(
        "histogram over {} pairs written to {}",
        hist.total_pos() + hist.total_neg(),
        cmd.out.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(cmd) => cmd_synth(cmd),
        Command::MinePairs(cmd) => cmd_mine_pairs(cmd),
        Command::Train(cmd) => cmd_train(cmd),
        Command::Cluster(cmd) => cmd_cluster(cmd),
        Command::Evaluate(cmd) => cmd_evaluate(cmd),
        Command::Run(cmd) => cmd_run(cmd),
        Command::Histogram(cmd) => cmd_histogram(cmd),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error[{}]: {e}", e.category());
            std::process::exit(1);
        }
    }
}
