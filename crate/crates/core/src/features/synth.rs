//! Deterministic synthetic datasets: isotropic Gaussian identity clusters
//! around unit-norm centers, contiguous track timelines, and a configurable
//! share of temporally overlapping different-identity track pairs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{l2_normalize, Dataset, FeatureError, FrameFeature, Track};

/// Attempts to place one cluster center before giving up.
const MAX_CENTER_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_identities: usize,
    pub tracks_per_identity: usize,
    /// Inclusive (min, max) frames per track.
    pub frames_per_track: (usize, usize),
    pub dimension: usize,
    /// Minimum pairwise Euclidean distance between identity centers.
    pub cluster_separation: f64,
    /// Per-coordinate standard deviation of frame noise.
    pub noise_sigma: f64,
    /// Share of tracks given a span overlapping a different identity's track.
    pub cooccurrence_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_identities: 5,
            tracks_per_identity: 20,
            frames_per_track: (3, 10),
            dimension: 64,
            cluster_separation: 1.0,
            noise_sigma: 0.2,
            cooccurrence_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), FeatureError> {
        let gen = |m: String| Err(FeatureError::Generation(m));
        if self.num_identities < 2 {
            return gen(format!("num_identities {} < 2", self.num_identities));
        }
        if self.dimension < 2 {
            return gen(format!("dimension {} < 2", self.dimension));
        }
        if self.tracks_per_identity == 0 {
            return gen("tracks_per_identity must be positive".into());
        }
        let (lo, hi) = self.frames_per_track;
        if lo == 0 || lo > hi {
            return gen(format!("bad frames_per_track range ({lo}, {hi})"));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return gen(format!("noise_sigma {} must be ≥ 0", self.noise_sigma));
        }
        if self.cluster_separation < 0.0 || !self.cluster_separation.is_finite() {
            return gen(format!(
                "cluster_separation {} must be ≥ 0",
                self.cluster_separation
            ));
        }
        // Centers live on the unit sphere, so 2 is the hard diameter cap.
        if self.cluster_separation > 2.0 {
            return gen(format!(
                "cluster_separation {} exceeds the unit-sphere diameter 2",
                self.cluster_separation
            ));
        }
        if !(0.0..=1.0).contains(&self.cooccurrence_fraction) {
            return gen(format!(
                "cooccurrence_fraction {} outside [0, 1]",
                self.cooccurrence_fraction
            ));
        }
        Ok(())
    }
}

/// One draw from N(0, 1) via the Box-Muller transform.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = loop {
        let u: f64 = rng.random();
        if u > f64::MIN_POSITIVE {
            break u;
        }
    };
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sample_centers(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>, FeatureError> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_identities);
    while centers.len() < cfg.num_identities {
        let mut placed = false;
        for _ in 0..MAX_CENTER_ATTEMPTS {
            let raw: Vec<f64> = (0..cfg.dimension).map(|_| standard_normal(rng)).collect();
            let Ok(candidate) = l2_normalize(&raw) else {
                continue;
            };
            let far_enough = centers.iter().all(|c| {
                let d2: f64 = c
                    .iter()
                    .zip(candidate.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2.sqrt() >= cfg.cluster_separation
            });
            if far_enough {
                centers.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(FeatureError::Generation(format!(
                "cannot place center {} of {} at separation {} in {} dims after {} attempts",
                centers.len() + 1,
                cfg.num_identities,
                cfg.cluster_separation,
                cfg.dimension,
                MAX_CENTER_ATTEMPTS
            )));
        }
    }
    Ok(centers)
}

/// Generate a labeled dataset. Identical configs produce bit-identical output.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset, FeatureError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers = sample_centers(cfg, &mut rng)?;

    let num_tracks = cfg.num_identities * cfg.tracks_per_identity;
    let (lo, hi) = cfg.frames_per_track;
    let identity_of: Vec<usize> = (0..num_tracks)
        .map(|t| t / cfg.tracks_per_identity)
        .collect();
    let len_of: Vec<usize> = (0..num_tracks)
        .map(|_| rng.random_range(lo..=hi))
        .collect();

    // Pair up a cooccurrence_fraction of tracks across identities; each pair
    // shares a span start, everything else gets a disjoint slot. Always
    // drawing from the two identities with the most unpaired tracks keeps the
    // matching maximal, so the target is met whenever it is feasible.
    let mut order: Vec<usize> = (0..num_tracks).collect();
    order.shuffle(&mut rng);
    let target_pairs = ((cfg.cooccurrence_fraction * num_tracks as f64) / 2.0).round() as usize;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_identities];
    for &t in &order {
        buckets[identity_of[t]].push(t);
    }
    let mut paired = vec![false; num_tracks];
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(target_pairs);
    while pairs.len() < target_pairs {
        let mut top: Option<usize> = None;
        let mut second: Option<usize> = None;
        for (idx, bucket) in buckets.iter().enumerate() {
            if bucket.is_empty() {
                continue;
            }
            if top.is_none_or(|t| bucket.len() > buckets[t].len()) {
                second = top;
                top = Some(idx);
            } else if second.is_none_or(|s| bucket.len() > buckets[s].len()) {
                second = Some(idx);
            }
        }
        let (Some(i), Some(j)) = (top, second) else {
            break;
        };
        let a = buckets[i].pop().expect("top bucket is nonempty");
        let b = buckets[j].pop().expect("second bucket is nonempty");
        paired[a] = true;
        paired[b] = true;
        pairs.push((a, b));
    }

    let mut start_of = vec![0i64; num_tracks];
    let mut cursor: i64 = 0;
    for &(a, b) in &pairs {
        start_of[a] = cursor;
        start_of[b] = cursor;
        cursor += len_of[a].max(len_of[b]) as i64 + 2;
    }
    for &t in &order {
        if !paired[t] {
            start_of[t] = cursor;
            cursor += len_of[t] as i64 + 2;
        }
    }

    let mut frames = Vec::new();
    let mut tracks = Vec::with_capacity(num_tracks);
    let mut next_frame_id: u64 = 0;
    for t in 0..num_tracks {
        let center = &centers[identity_of[t]];
        let mut frame_ids = Vec::with_capacity(len_of[t]);
        for j in 0..len_of[t] {
            let vector: Vec<f32> = center
                .iter()
                .map(|&c| (c + cfg.noise_sigma * standard_normal(&mut rng)) as f32)
                .collect();
            frames.push(FrameFeature {
                frame_id: next_frame_id,
                track_id: t as u64,
                timestamp: start_of[t] + j as i64,
                vector,
            });
            frame_ids.push(next_frame_id);
            next_frame_id += 1;
        }
        tracks.push(Track {
            track_id: t as u64,
            frame_ids,
            label: Some(format!("id_{}", identity_of[t])),
            time_span: (0, 0),
        });
    }

    Dataset::new(frames, tracks, cfg.dimension, Some(cfg.num_identities))
}
