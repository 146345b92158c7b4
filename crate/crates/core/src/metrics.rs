//! Clustering quality measures: weighted clustering purity (accuracy),
//! BCubed precision/recall/F, and the pairwise-similarity histogram split by
//! same/different identity.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Dataset;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metrics need a nonempty partition")]
    Empty,
    #[error("item {0} has a nonpositive or non-finite weight")]
    BadWeight(u64),
    #[error("item {0} has an empty label")]
    EmptyLabel(u64),
    #[error("partition references unknown track {0}")]
    UnknownTrack(u64),
    #[error("similarity histogram needs at least 2 labeled tracks, got {0}")]
    TooFewTracks(usize),
    #[error("track representation {0} is not unit-norm")]
    NotUnitNorm(usize),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("reps and labels differ in length: {reps} vs {labels}")]
    LengthMismatch { reps: usize, labels: usize },
}

impl MetricError {
    pub fn category(&self) -> &'static str {
        match self {
            MetricError::Empty | MetricError::TooFewTracks(_) => "empty-input",
            MetricError::BadWeight(_) => "bad-weight",
            MetricError::EmptyLabel(_) => "missing-label",
            MetricError::UnknownTrack(_) => "referential-integrity",
            MetricError::NotUnitNorm(_) => "degenerate-vector",
            MetricError::NoBins | MetricError::LengthMismatch { .. } => "bad-config",
        }
    }
}

/// One scored item: a clustered unit (track, or track expanded to frames)
/// with its predicted cluster and ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub item_id: u64,
    pub cluster: usize,
    pub label: String,
    /// Scoring weight; 1 for plain track-level metrics, the frame count for
    /// frame-level reporting.
    pub weight: f64,
}

impl LabeledItem {
    pub fn new(item_id: u64, cluster: usize, label: impl Into<String>) -> Self {
        LabeledItem {
            item_id,
            cluster,
            label: label.into(),
            weight: 1.0,
        }
    }
}

/// A validated set of labeled, clustered items.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPartition {
    items: Vec<LabeledItem>,
}

impl LabeledPartition {
    pub fn new(items: Vec<LabeledItem>) -> Result<Self, MetricError> {
        if items.is_empty() {
            return Err(MetricError::Empty);
        }
        for item in &items {
            if !(item.weight > 0.0 && item.weight.is_finite()) {
                return Err(MetricError::BadWeight(item.item_id));
            }
            if item.label.is_empty() {
                return Err(MetricError::EmptyLabel(item.item_id));
            }
        }
        Ok(LabeledPartition { items })
    }

    pub fn items(&self) -> &[LabeledItem] {
        &self.items
    }

    pub fn total_weight(&self) -> f64 {
        self.items.iter().map(|i| i.weight).sum()
    }
}

/// Weighted clustering purity: each cluster contributes its dominant-label
/// weight, normalized by the total weight.
///
/// Ordered maps keep the summation order fixed, so repeated calls are
/// bit-identical.
pub fn clustering_accuracy(partition: &LabeledPartition) -> f64 {
    let mut per_cluster: BTreeMap<usize, BTreeMap<&str, f64>> = BTreeMap::new();
    for item in partition.items() {
        *per_cluster
            .entry(item.cluster)
            .or_default()
            .entry(item.label.as_str())
            .or_insert(0.0) += item.weight;
    }
    let correct: f64 = per_cluster
        .values()
        .map(|labels| labels.values().fold(0.0f64, |a, &b| a.max(b)))
        .sum();
    correct / partition.total_weight()
}

/// BCubed precision, recall and F over the partition, weighted per item.
pub fn bcubed(partition: &LabeledPartition) -> (f64, f64, f64) {
    let mut cluster_w: HashMap<usize, f64> = HashMap::new();
    let mut class_w: HashMap<&str, f64> = HashMap::new();
    let mut joint_w: HashMap<(usize, &str), f64> = HashMap::new();
    for item in partition.items() {
        *cluster_w.entry(item.cluster).or_insert(0.0) += item.weight;
        *class_w.entry(item.label.as_str()).or_insert(0.0) += item.weight;
        *joint_w
            .entry((item.cluster, item.label.as_str()))
            .or_insert(0.0) += item.weight;
    }
    let total = partition.total_weight();
    let mut precision = 0.0;
    let mut recall = 0.0;
    for item in partition.items() {
        let joint = joint_w[&(item.cluster, item.label.as_str())];
        // Ratio first: when a cluster or class is pure, joint equals the
        // denominator bitwise and the per-item score is exactly 1.
        precision += item.weight * (joint / cluster_w[&item.cluster]);
        recall += item.weight * (joint / class_w[item.label.as_str()]);
    }
    precision /= total;
    recall /= total;
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f)
}

/// Scoring granularity of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    #[default]
    Track,
    Frame,
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Track => "track",
            Level::Frame => "frame",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub bcubed_p: f64,
    pub bcubed_r: f64,
    pub bcubed_f: f64,
    pub level: Level,
}

impl MetricReport {
    pub fn from_partition(partition: &LabeledPartition, level: Level) -> Self {
        let acc = clustering_accuracy(partition);
        let (bcubed_p, bcubed_r, bcubed_f) = bcubed(partition);
        MetricReport {
            acc,
            bcubed_p,
            bcubed_r,
            bcubed_f,
            level,
        }
    }
}

/// Re-weight a track-level partition so each track counts once per frame.
pub fn frame_level_view(
    track_partition: &LabeledPartition,
    dataset: &Dataset,
) -> Result<LabeledPartition, MetricError> {
    let items = track_partition
        .items()
        .iter()
        .map(|item| {
            let track = dataset
                .track(item.item_id)
                .ok_or(MetricError::UnknownTrack(item.item_id))?;
            Ok(LabeledItem {
                weight: track.len() as f64,
                ..item.clone()
            })
        })
        .collect::<Result<_, _>>()?;
    LabeledPartition::new(items)
}

/// Cosine-similarity histogram over all unordered track pairs, split into
/// same-label (positive) and different-label (negative) counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    /// `num_bins + 1` edges spanning [-1, 1].
    pub edges: Vec<f64>,
    pub pos: Vec<u64>,
    pub neg: Vec<u64>,
}

impl SimilarityHistogram {
    pub fn num_bins(&self) -> usize {
        self.pos.len()
    }

    pub fn total_pos(&self) -> u64 {
        self.pos.iter().sum()
    }

    pub fn total_neg(&self) -> u64 {
        self.neg.iter().sum()
    }
}

pub fn similarity_histogram(
    reps: &[Vec<f64>],
    labels: &[String],
    num_bins: usize,
) -> Result<SimilarityHistogram, MetricError> {
    if num_bins == 0 {
        return Err(MetricError::NoBins);
    }
    if reps.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            reps: reps.len(),
            labels: labels.len(),
        });
    }
    if reps.len() < 2 {
        return Err(MetricError::TooFewTracks(reps.len()));
    }
    for (i, (rep, label)) in reps.iter().zip(labels.iter()).enumerate() {
        let norm_sq: f64 = rep.iter().map(|v| v * v).sum();
        if (norm_sq.sqrt() - 1.0).abs() > 1e-6 {
            return Err(MetricError::NotUnitNorm(i));
        }
        if label.is_empty() {
            return Err(MetricError::EmptyLabel(i as u64));
        }
    }

    let edges: Vec<f64> = (0..=num_bins)
        .map(|i| -1.0 + 2.0 * i as f64 / num_bins as f64)
        .collect();
    let mut pos = vec![0u64; num_bins];
    let mut neg = vec![0u64; num_bins];
    for i in 0..reps.len() {
        for j in (i + 1)..reps.len() {
            let dot: f64 = reps[i].iter().zip(reps[j].iter()).map(|(a, b)| a * b).sum();
            let sim = dot.clamp(-1.0, 1.0);
            let bin = (((sim + 1.0) / 2.0 * num_bins as f64) as usize).min(num_bins - 1);
            if labels[i] == labels[j] {
                pos[bin] += 1;
            } else {
                neg[bin] += 1;
            }
        }
    }
    Ok(SimilarityHistogram { edges, pos, neg })
}
