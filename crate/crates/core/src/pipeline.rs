//! End-to-end orchestration: load, optionally refine, cluster, score, and
//! write artifacts.
//!
//! A single [`PipelineConfig`] drives the whole run so results are
//! reproducible from one JSON document plus a seed. With an output
//! directory set, a run leaves behind `report.json`, `assignment.csv`, the
//! model checkpoint and, when ground truth is available, similarity
//! histograms for the base and refined spaces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{cut_dendrogram, hac_ward, ClusterAssignment, ClusteringError};
use crate::features::{
    base_track_representations, embedded_track_representations, io as feature_io, Dataset,
    FeatureError,
};
use crate::metrics::{
    frame_level_view, similarity_histogram, LabeledItem, LabeledPartition, Level, MetricError,
    MetricReport, SimilarityHistogram,
};
use crate::mining::{build_miner, MinerSetup, MiningConfig, MiningError};
use crate::model::checkpoint::{save_checkpoint, save_sidecar, Sidecar};
use crate::model::{train, EmbedderParams, LossReport, ModelError, TrainConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid pipeline configuration: {0}")]
    BadConfig(String),
    #[error("tracks are unlabeled; {0}")]
    MissingLabels(&'static str),
    #[error("assignment is not a partition of the dataset tracks: {0}")]
    BadAssignment(String),
    #[error("malformed file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn category(&self) -> &'static str {
        match self {
            PipelineError::Feature(e) => e.category(),
            PipelineError::Model(e) => e.category(),
            PipelineError::Mining(e) => e.category(),
            PipelineError::Clustering(e) => e.category(),
            PipelineError::Metric(e) => e.category(),
            PipelineError::BadConfig(_) => "bad-config",
            PipelineError::MissingLabels(_) => "missing-label",
            PipelineError::BadAssignment(_) => "referential-integrity",
            PipelineError::Parse(_) => "malformed-input",
            PipelineError::Io(_) => "io",
        }
    }
}

/// Which representation the final clustering consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// No refinement; cluster the averaged input features directly.
    Base,
    Tsiam,
    #[default]
    Ssiam,
    PseudoRf,
}

impl Method {
    /// Registry name of the miner backing this method, if it trains at all.
    pub fn miner_name(self) -> Option<&'static str> {
        match self {
            Method::Base => None,
            Method::Tsiam => Some("tsiam"),
            Method::Ssiam => Some("ssiam"),
            Method::PseudoRf => Some("pseudo-rf"),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Base => "base",
            Method::Tsiam => "tsiam",
            Method::Ssiam => "ssiam",
            Method::PseudoRf => "pseudo-rf",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Method::Base),
            "tsiam" => Ok(Method::Tsiam),
            "ssiam" => Ok(Method::Ssiam),
            "pseudo-rf" => Ok(Method::PseudoRf),
            other => Err(PipelineError::BadConfig(format!(
                "unknown method '{other}'; expected base, tsiam, ssiam or pseudo-rf"
            ))),
        }
    }
}

/// Full description of one run. Every field has a default so a config file
/// may specify only what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub features: PathBuf,
    pub tracks: PathBuf,
    pub method: Method,
    pub mining: MiningConfig,
    pub train: TrainConfig,
    pub embed_dim: usize,
    pub proj_dim: usize,
    /// Number of clusters; defaults to the distinct ground-truth label count.
    pub k: Option<usize>,
    pub level: Level,
    pub output_dir: Option<PathBuf>,
    /// Master seed; copied into the train and mining configs.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            features: PathBuf::new(),
            tracks: PathBuf::new(),
            method: Method::default(),
            mining: MiningConfig::default(),
            train: TrainConfig::default(),
            embed_dim: 256,
            proj_dim: 2,
            k: None,
            level: Level::default(),
            output_dir: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.embed_dim == 0 {
            return Err(PipelineError::BadConfig("embed_dim must be positive".into()));
        }
        if self.proj_dim == 0 || self.proj_dim >= self.embed_dim {
            return Err(PipelineError::BadConfig(format!(
                "proj_dim must be in 1..embed_dim, got {} vs {}",
                self.proj_dim, self.embed_dim
            )));
        }
        if matches!(self.k, Some(k) if k < 2) {
            return Err(PipelineError::BadConfig("k must be at least 2".into()));
        }
        self.mining.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// The config actually executed: master seed pushed into subconfigs.
    fn effective(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.train.seed = self.seed;
        c.mining.seed = self.seed;
        c
    }
}

/// Wall-clock phase timings in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub train_ms: u64,
    pub cluster_ms: u64,
    pub total_ms: u64,
}

/// Everything a run produced, which `report.json` mirrors verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub num_frames: usize,
    pub num_tracks: usize,
    pub k: usize,
    pub losses: Vec<LossReport>,
    /// Scores for clustering the unrefined representations; present only
    /// with ground-truth labels.
    pub base_metrics: Option<MetricReport>,
    /// Scores after refinement; `None` for [`Method::Base`].
    pub refined_metrics: Option<MetricReport>,
    /// Final track-to-cluster assignment, ascending by track id.
    pub assignment: Vec<(u64, usize)>,
    pub timings: Timings,
}

/// Cluster a track-id-keyed representation map with Ward linkage.
///
/// Returns the id order used (ascending) alongside the assignment.
pub fn cluster_reps(
    reps: &BTreeMap<u64, Vec<f64>>,
    k: usize,
) -> Result<(Vec<u64>, ClusterAssignment), PipelineError> {
    let ids: Vec<u64> = reps.keys().copied().collect();
    let dim = reps
        .values()
        .next()
        .map(Vec::len)
        .ok_or_else(|| PipelineError::BadConfig("no representations to cluster".into()))?;
    let mut matrix = ndarray::Array2::zeros((ids.len(), dim));
    for (row, vec) in reps.values().enumerate() {
        for (col, &v) in vec.iter().enumerate() {
            matrix[[row, col]] = v;
        }
    }
    let dendrogram = hac_ward(&matrix)?;
    let assignment = cut_dendrogram(&dendrogram, k)?;
    Ok((ids, assignment))
}

fn labeled_partition(
    dataset: &Dataset,
    ids: &[u64],
    assignment: &ClusterAssignment,
) -> Result<LabeledPartition, PipelineError> {
    let items = ids
        .iter()
        .zip(assignment.labels())
        .map(|(&track_id, &cluster)| {
            let track = dataset
                .track(track_id)
                .expect("clustered ids come from the dataset");
            let label = track
                .label
                .clone()
                .ok_or(PipelineError::MissingLabels("cannot score the clustering"))?;
            Ok(LabeledItem::new(track_id, cluster, label))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(LabeledPartition::new(items)?)
}

fn score(
    dataset: &Dataset,
    ids: &[u64],
    assignment: &ClusterAssignment,
    level: Level,
) -> Result<MetricReport, PipelineError> {
    let partition = labeled_partition(dataset, ids, assignment)?;
    let partition = match level {
        Level::Track => partition,
        Level::Frame => frame_level_view(&partition, dataset)?,
    };
    Ok(MetricReport::from_partition(&partition, level))
}

fn rep_labels(dataset: &Dataset, ids: &[u64]) -> Option<Vec<String>> {
    ids.iter()
        .map(|&id| dataset.track(id).and_then(|t| t.label.clone()))
        .collect()
}

/// Run the configured pipeline on an already-loaded dataset.
pub fn run_pipeline_on(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let config = config.effective();
    let started = Instant::now();

    if dataset.num_tracks() < 2 {
        return Err(PipelineError::BadConfig(
            "clustering needs at least 2 tracks".into(),
        ));
    }
    let k = match config.k {
        Some(k) => k,
        None => {
            let labels = dataset.distinct_labels();
            if labels.is_empty() {
                return Err(PipelineError::MissingLabels(
                    "pass an explicit cluster count",
                ));
            }
            labels.len()
        }
    };
    if k > dataset.num_tracks() {
        return Err(PipelineError::BadConfig(format!(
            "k={} exceeds the {} tracks",
            k,
            dataset.num_tracks()
        )));
    }

    let features = dataset.feature_matrix();
    let base_reps = base_track_representations(dataset)?;
    let (base_ids, base_assignment) = {
        let t = Instant::now();
        let out = cluster_reps(&base_reps, k)?;
        info!("base clustering took {} ms", t.elapsed().as_millis());
        out
    };
    let base_metrics = if dataset.has_labels() {
        Some(score(dataset, &base_ids, &base_assignment, config.level)?)
    } else {
        None
    };

    let mut timings = Timings::default();
    let mut losses = Vec::new();
    let mut refined_metrics = None;
    let mut trained: Option<EmbedderParams> = None;
    let mut final_ids = base_ids.clone();
    let mut final_assignment = base_assignment;
    let mut refined_reps = None;

    if let Some(miner_name) = config.method.miner_name() {
        let train_started = Instant::now();
        let setup = MinerSetup {
            dataset,
            base: &features,
            config: &config.mining,
        };
        let mut miner = build_miner(miner_name, &setup)?;
        let (params, history) = train(
            dataset,
            &features,
            miner.as_mut(),
            config.embed_dim,
            config.proj_dim,
            &config.train,
        )?;
        timings.train_ms = train_started.elapsed().as_millis() as u64;
        info!(
            "{} training: {} epochs, final loss {:.6}",
            miner_name,
            history.len(),
            history.last().map_or(f64::NAN, |r| r.mean_loss)
        );
        losses = history;

        let cluster_started = Instant::now();
        let reps = embedded_track_representations(dataset, &params)?;
        let (ids, assignment) = cluster_reps(&reps, k)?;
        timings.cluster_ms = cluster_started.elapsed().as_millis() as u64;
        if dataset.has_labels() {
            refined_metrics = Some(score(dataset, &ids, &assignment, config.level)?);
        }
        trained = Some(params);
        final_ids = ids;
        final_assignment = assignment;
        refined_reps = Some(reps);
    }

    let assignment: Vec<(u64, usize)> = final_ids
        .iter()
        .copied()
        .zip(final_assignment.labels().iter().copied())
        .collect();
    timings.total_ms = started.elapsed().as_millis() as u64;

    let report = RunReport {
        config: config.clone(),
        num_frames: dataset.num_frames(),
        num_tracks: dataset.num_tracks(),
        k,
        losses,
        base_metrics,
        refined_metrics,
        assignment,
        timings,
    };

    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
        write_report(&dir.join("report.json"), &report)?;
        write_assignment_csv(&dir.join("assignment.csv"), &report.assignment)?;
        if let Some(params) = &trained {
            let model_path = dir.join("model.tcm1");
            save_checkpoint(&model_path, params)?;
            save_sidecar(
                &model_path,
                &Sidecar {
                    train_config: config.train.clone(),
                    loss_history: report.losses.clone(),
                },
            )?;
        }
        if let Some(labels) = rep_labels(dataset, &base_ids) {
            let reps: Vec<Vec<f64>> = base_reps.values().cloned().collect();
            let hist = similarity_histogram(&reps, &labels, 100)?;
            write_histogram_csv(&dir.join("histogram_base.csv"), &hist)?;
            if let Some(refined) = &refined_reps {
                let reps: Vec<Vec<f64>> = refined.values().cloned().collect();
                let hist = similarity_histogram(&reps, &labels, 100)?;
                write_histogram_csv(&dir.join("histogram_refined.csv"), &hist)?;
            }
        }
    }
    Ok(report)
}

/// Load the dataset named by the config, then run the pipeline on it.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    if config.features.as_os_str().is_empty() || config.tracks.as_os_str().is_empty() {
        return Err(PipelineError::BadConfig(
            "features and tracks paths are required".into(),
        ));
    }
    let dataset = feature_io::load_dataset(&config.features, &config.tracks)?;
    run_pipeline_on(&dataset, config)
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<(), PipelineError> {
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| PipelineError::Parse(e.to_string()))?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Parse(e.to_string()))
}

pub fn write_assignment_csv(path: &Path, assignment: &[(u64, usize)]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Parse(e.to_string()))?;
    w.write_record(["track_id", "cluster"])
        .map_err(|e| PipelineError::Parse(e.to_string()))?;
    for &(track_id, cluster) in assignment {
        w.write_record([track_id.to_string(), cluster.to_string()])
            .map_err(|e| PipelineError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignment_csv(path: &Path) -> Result<Vec<(u64, usize)>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| PipelineError::Parse(e.to_string()))?;
    {
        let headers = r.headers().map_err(|e| PipelineError::Parse(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["track_id", "cluster"] {
            return Err(PipelineError::Parse(format!(
                "expected header track_id,cluster, got {:?}",
                headers
            )));
        }
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| PipelineError::Parse(e.to_string()))?;
        if record.len() != 2 {
            return Err(PipelineError::Parse(format!(
                "expected 2 fields per row, got {}",
                record.len()
            )));
        }
        let track_id = record[0]
            .parse::<u64>()
            .map_err(|e| PipelineError::Parse(format!("bad track_id '{}': {e}", &record[0])))?;
        let cluster = record[1]
            .parse::<usize>()
            .map_err(|e| PipelineError::Parse(format!("bad cluster '{}': {e}", &record[1])))?;
        out.push((track_id, cluster));
    }
    Ok(out)
}

pub fn write_histogram_csv(path: &Path, hist: &SimilarityHistogram) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Parse(e.to_string()))?;
    w.write_record(["bin_left", "bin_right", "pos_count", "neg_count"])
        .map_err(|e| PipelineError::Parse(e.to_string()))?;
    for i in 0..hist.num_bins() {
        w.write_record([
            hist.edges[i].to_string(),
            hist.edges[i + 1].to_string(),
            hist.pos[i].to_string(),
            hist.neg[i].to_string(),
        ])
        .map_err(|e| PipelineError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Build a scoreable partition from an externally produced assignment.
///
/// The assignment must cover every dataset track exactly once, and every
/// track needs a ground-truth label.
pub fn partition_from_assignment(
    dataset: &Dataset,
    assignment: &[(u64, usize)],
) -> Result<LabeledPartition, PipelineError> {
    if assignment.len() != dataset.num_tracks() {
        return Err(PipelineError::BadAssignment(format!(
            "{} rows for {} tracks",
            assignment.len(),
            dataset.num_tracks()
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    let items = assignment
        .iter()
        .map(|&(track_id, cluster)| {
            let track = dataset.track(track_id).ok_or_else(|| {
                PipelineError::BadAssignment(format!("unknown track {track_id}"))
            })?;
            if !seen.insert(track_id) {
                return Err(PipelineError::BadAssignment(format!(
                    "track {track_id} assigned twice"
                )));
            }
            let label = track
                .label
                .clone()
                .ok_or(PipelineError::MissingLabels("cannot score the assignment"))?;
            Ok(LabeledItem::new(track_id, cluster, label))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(LabeledPartition::new(items)?)
}
