//! Training-pair generation.
//!
//! Three interchangeable miners produce labeled pairs: track supervision
//! (positives within a track, negatives from co-occurring or farthest
//! tracks), ranked-list self-supervision (hard positives and negatives picked
//! from per-batch nearest/farthest neighbor sets), and a pseudo-relevance
//! baseline without batch-level hard selection. Miners are registered by name
//! and selected at runtime through [`MINER_REGISTRY`].

pub mod pseudo_rf;
pub mod ranked;
pub mod ssiam;
pub mod tsiam;

use std::path::Path;

use ndarray::Array2;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Dataset, FeatureError};
use crate::model::EmbedderParams;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("mining needs at least {need} frames, got {got}")]
    TooFewFrames { got: usize, need: usize },
    #[error("negative mining needs at least two tracks")]
    SingleTrack,
    #[error("invalid mining configuration: {0}")]
    BadConfig(String),
    #[error("unknown mining method {0:?}; known: {known}", known = known_methods())]
    UnknownMethod(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("malformed pair file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MiningError {
    pub fn category(&self) -> &'static str {
        match self {
            MiningError::TooFewFrames { .. } => "too-few-frames",
            MiningError::SingleTrack => "single-track",
            MiningError::BadConfig(_) => "bad-config",
            MiningError::UnknownMethod(_) => "unknown-method",
            MiningError::Feature(e) => e.category(),
            MiningError::Parse(_) => "malformed-input",
            MiningError::Io(_) => "io",
        }
    }
}

fn known_methods() -> String {
    MINER_REGISTRY
        .iter()
        .map(|e| e.name)
        .collect::<Vec<_>>()
        .join(", ")
}

/// One labeled training pair. y = 0 means same identity, y = 1 different.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub anchor_frame_id: u64,
    pub partner_frame_id: u64,
    pub y: u8,
    /// Euclidean distance between the two frames in the mining space.
    pub distance: f64,
}

/// Which miner produced a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSource {
    Tsiam,
    Ssiam,
    PseudoRf,
}

impl std::fmt::Display for PairSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PairSource::Tsiam => "tsiam",
            PairSource::Ssiam => "ssiam",
            PairSource::PseudoRf => "pseudo-rf",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub pairs: Vec<Pair>,
    pub source: PairSource,
}

impl PairBatch {
    pub fn count_label(&self, y: u8) -> usize {
        self.pairs.iter().filter(|p| p.y == y).count()
    }
}

/// A pair in subset-local index space, before mapping back to frame ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexPair {
    pub query: usize,
    pub partner: usize,
    pub y: u8,
    pub distance: f64,
}

/// Feature space used for mining distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceSpace {
    /// Rank on the live embedding; adapts as training progresses.
    #[default]
    Embedded,
    /// Rank on the raw input features.
    Base,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    /// Random query-subset size per ranked-list iteration (clamped to the
    /// frame count with a warning).
    pub subset_size: usize,
    /// Hard pairs kept per polarity from each ranked-list subset.
    pub pairs_per_polarity: usize,
    /// Pool size of farthest tracks supplying singleton negatives.
    pub farthest_tracks: usize,
    /// Same-track positives mined per anchor frame.
    pub pos_per_frame: usize,
    /// Co-occurring-track negatives mined per anchor frame.
    pub neg_per_frame: usize,
    pub space: DistanceSpace,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            subset_size: 1000,
            pairs_per_polarity: 64,
            farthest_tracks: 25,
            pos_per_frame: 2,
            neg_per_frame: 4,
            space: DistanceSpace::Embedded,
            seed: 0,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), MiningError> {
        if self.subset_size < 2 {
            return Err(MiningError::BadConfig(format!(
                "subset_size {} must be at least 2",
                self.subset_size
            )));
        }
        if self.pairs_per_polarity == 0 || self.pairs_per_polarity > self.subset_size {
            return Err(MiningError::BadConfig(format!(
                "pairs_per_polarity {} must lie in 1..={}",
                self.pairs_per_polarity, self.subset_size
            )));
        }
        if self.farthest_tracks == 0 {
            return Err(MiningError::BadConfig(
                "farthest_tracks must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Read-only view of the data a miner measures distances on.
///
/// With `params` present the mining space is the current embedding, so
/// rankings adapt across epochs; without it miners fall back to raw features
/// regardless of the configured space.
pub struct MiningContext<'a> {
    pub dataset: &'a Dataset,
    /// Raw frame features, row i = frame at dataset position i.
    pub base: &'a Array2<f64>,
    pub params: Option<&'a EmbedderParams>,
}

impl MiningContext<'_> {
    fn use_embedding(&self, space: DistanceSpace) -> bool {
        space == DistanceSpace::Embedded && self.params.is_some()
    }

    /// Mining-space features for the given frame positions, one row each.
    pub fn subset_features(&self, positions: &[usize], space: DistanceSpace) -> Array2<f64> {
        let mut rows = Array2::zeros((positions.len(), self.base.ncols()));
        for (r, &p) in positions.iter().enumerate() {
            rows.row_mut(r).assign(&self.base.row(p));
        }
        if self.use_embedding(space) {
            self.params.unwrap().embed_all(&rows)
        } else {
            rows
        }
    }

    /// Mining-space features for every frame.
    pub fn all_features(&self, space: DistanceSpace) -> Array2<f64> {
        if self.use_embedding(space) {
            self.params.unwrap().embed_all(self.base)
        } else {
            self.base.clone()
        }
    }
}

/// A pair-mining strategy, driven one epoch at a time.
///
/// `begin_epoch` resets per-epoch state (shuffles, pair queues); repeated
/// `next_batch` calls then yield the epoch's batches until `None`. All
/// randomness flows through the caller's rng, so a fixed seed fixes the
/// pair stream.
pub trait PairMiner {
    fn name(&self) -> &'static str;
    fn source(&self) -> PairSource;
    fn begin_epoch(&mut self, ctx: &MiningContext, rng: &mut dyn RngCore)
        -> Result<(), MiningError>;
    fn next_batch(&mut self, ctx: &MiningContext, rng: &mut dyn RngCore) -> Option<PairBatch>;
}

/// Everything needed to construct a miner.
pub struct MinerSetup<'a> {
    pub dataset: &'a Dataset,
    pub base: &'a Array2<f64>,
    pub config: &'a MiningConfig,
}

/// A named miner constructor.
pub struct MinerEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub build: fn(&MinerSetup) -> Result<Box<dyn PairMiner>, MiningError>,
}

/// All available mining strategies, selectable by name at runtime.
pub static MINER_REGISTRY: &[MinerEntry] = &[
    MinerEntry {
        name: "tsiam",
        summary: "track-supervised pairs: positives within a track, negatives from co-occurring or farthest tracks",
        build: tsiam::build,
    },
    MinerEntry {
        name: "ssiam",
        summary: "ranked-list self-supervision: hardest positives and negatives selected per random subset",
        build: ssiam::build,
    },
    MinerEntry {
        name: "pseudo-rf",
        summary: "pseudo-relevance baseline: per-query nearest positive and farthest negative, no hard selection",
        build: pseudo_rf::build,
    },
];

pub fn miner_by_name(name: &str) -> Result<&'static MinerEntry, MiningError> {
    MINER_REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| MiningError::UnknownMethod(name.to_string()))
}

/// Look up a miner by name and construct it.
pub fn build_miner(name: &str, setup: &MinerSetup) -> Result<Box<dyn PairMiner>, MiningError> {
    (miner_by_name(name)?.build)(setup)
}

/// Run one full epoch of a miner and collect every pair, for audit exports.
pub fn mine_epoch(
    miner: &mut dyn PairMiner,
    ctx: &MiningContext,
    rng: &mut dyn RngCore,
) -> Result<Vec<Pair>, MiningError> {
    miner.begin_epoch(ctx, rng)?;
    let mut pairs = Vec::new();
    while let Some(batch) = miner.next_batch(ctx, rng) {
        pairs.extend(batch.pairs);
    }
    Ok(pairs)
}

pub fn write_pairs_csv(pairs: &[Pair], path: &Path) -> Result<(), MiningError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| MiningError::Parse(e.to_string()))?;
    w.write_record(["anchor_frame_id", "partner_frame_id", "y", "distance"])
        .map_err(|e| MiningError::Parse(e.to_string()))?;
    for p in pairs {
        w.write_record([
            p.anchor_frame_id.to_string(),
            p.partner_frame_id.to_string(),
            p.y.to_string(),
            p.distance.to_string(),
        ])
        .map_err(|e| MiningError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<Pair>, MiningError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| MiningError::Parse(e.to_string()))?;
    let mut pairs = Vec::new();
    for record in r.deserialize::<Pair>() {
        let pair = record.map_err(|e| MiningError::Parse(e.to_string()))?;
        if pair.y > 1 {
            return Err(MiningError::Parse(format!(
                "pair label {} is not 0 or 1",
                pair.y
            )));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Draw `size` distinct frame positions, returned in ascending order.
pub(crate) fn draw_subset(rng: &mut dyn RngCore, num_frames: usize, size: usize) -> Vec<usize> {
    let mut positions = rand::seq::index::sample(rng, num_frames, size).into_vec();
    positions.sort_unstable();
    positions
}

/// Euclidean distance between two rows of a feature matrix.
pub(crate) fn row_distance(features: &Array2<f64>, a: usize, b: usize) -> f64 {
    features
        .row(a)
        .iter()
        .zip(features.row(b).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::synth::{self, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_dataset() -> Dataset {
        synth::generate(&SynthConfig {
            num_identities: 3,
            tracks_per_identity: 3,
            frames_per_track: (2, 4),
            dimension: 6,
            cluster_separation: 0.7,
            noise_sigma: 0.1,
            cooccurrence_fraction: 0.6,
            seed: 31,
        })
        .unwrap()
    }

    #[test]
    fn registry_resolves_every_advertised_name() {
        let ds = tiny_dataset();
        let base = ds.feature_matrix();
        let config = MiningConfig {
            subset_size: 8,
            pairs_per_polarity: 2,
            ..MiningConfig::default()
        };
        let setup = MinerSetup {
            dataset: &ds,
            base: &base,
            config: &config,
        };
        for entry in MINER_REGISTRY {
            let miner = build_miner(entry.name, &setup).unwrap();
            assert_eq!(miner.name(), entry.name);
        }
    }

    #[test]
    fn unknown_method_is_an_error() {
        let err = miner_by_name("triplet").err().unwrap();
        assert!(matches!(err, MiningError::UnknownMethod(_)));
        assert!(err.to_string().contains("tsiam"));
    }

    #[test]
    fn each_miner_is_deterministic_under_a_fixed_seed() {
        let ds = tiny_dataset();
        let base = ds.feature_matrix();
        let config = MiningConfig {
            subset_size: 10,
            pairs_per_polarity: 3,
            ..MiningConfig::default()
        };
        let setup = MinerSetup {
            dataset: &ds,
            base: &base,
            config: &config,
        };
        let ctx = MiningContext {
            dataset: &ds,
            base: &base,
            params: None,
        };
        for entry in MINER_REGISTRY {
            let run = |seed: u64| {
                let mut miner = build_miner(entry.name, &setup).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                mine_epoch(miner.as_mut(), &ctx, &mut rng).unwrap()
            };
            assert_eq!(run(7), run(7), "{} diverged under same seed", entry.name);
            assert_ne!(run(7), run(8), "{} ignored the seed", entry.name);
        }
    }

    #[test]
    fn pairs_csv_round_trips() {
        let pairs = vec![
            Pair {
                anchor_frame_id: 3,
                partner_frame_id: 9,
                y: 0,
                distance: 0.25,
            },
            Pair {
                anchor_frame_id: 4,
                partner_frame_id: 1,
                y: 1,
                distance: 1.75,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.csv");
        write_pairs_csv(&pairs, &p).unwrap();
        assert_eq!(read_pairs_csv(&p).unwrap(), pairs);
    }

    #[test]
    fn pairs_csv_rejects_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(
            &p,
            "anchor_frame_id,partner_frame_id,y,distance\n0,1,2,0.5\n",
        )
        .unwrap();
        assert!(matches!(
            read_pairs_csv(&p).unwrap_err(),
            MiningError::Parse(_)
        ));
    }

    #[test]
    fn subset_features_embeds_when_params_present() {
        let ds = tiny_dataset();
        let base = ds.feature_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = EmbedderParams::init(6, 4, 2, None, &mut rng).unwrap();
        let ctx = MiningContext {
            dataset: &ds,
            base: &base,
            params: Some(&params),
        };
        let got = ctx.subset_features(&[0, 2], DistanceSpace::Embedded);
        assert_eq!(got.ncols(), 4);
        let want0 = params.embed(base.row(0).as_slice().unwrap());
        for (a, b) in got.row(0).iter().zip(want0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let raw = ctx.subset_features(&[0, 2], DistanceSpace::Base);
        assert_eq!(raw.ncols(), 6);
        assert_eq!(raw.row(1), base.row(2));
    }
}
