//! Track-supervised mining.
//!
//! Positives are frame pairs within one track. Negatives pair an anchor with
//! frames of a uniformly chosen co-occurring track (guaranteed different
//! identity). Anchors on tracks that never overlap anything fall back to
//! frames of the farthest few tracks, measured on the base track
//! representations. The epoch's pairs are shuffled and served in fixed-size
//! batches.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::RngCore;

use crate::features::{build_cooccurrence, track_mean_base};

use super::{
    MinerSetup, MiningConfig, MiningContext, MiningError, Pair, PairBatch, PairMiner, PairSource,
    row_distance,
};

/// Pairs per training batch served from the shuffled epoch queue.
pub const BATCH_PAIRS: usize = 128;

pub struct TsiamMiner {
    config: MiningConfig,
    /// Frame positions per track, in dataset track order.
    track_frames: Vec<Vec<usize>>,
    /// Track position for every frame position.
    track_of_frame: Vec<usize>,
    /// Co-occurring track positions per track.
    cooc_lists: Vec<Vec<usize>>,
    /// Pooled frame positions of the farthest tracks, for singleton tracks
    /// only (empty otherwise).
    singleton_pools: Vec<Vec<usize>>,
    pending: Vec<Pair>,
    cursor: usize,
}

pub fn build(setup: &MinerSetup) -> Result<Box<dyn PairMiner>, MiningError> {
    setup.config.validate()?;
    let dataset = setup.dataset;
    if dataset.num_tracks() < 2 {
        return Err(MiningError::SingleTrack);
    }

    let num_tracks = dataset.num_tracks();
    let mut track_frames = Vec::with_capacity(num_tracks);
    let mut track_of_frame = vec![0usize; dataset.num_frames()];
    for (ti, track) in dataset.tracks().iter().enumerate() {
        let positions: Vec<usize> = track
            .frame_ids
            .iter()
            .map(|&fid| dataset.frame_index(fid).expect("validated dataset"))
            .collect();
        for &p in &positions {
            track_of_frame[p] = ti;
        }
        track_frames.push(positions);
    }

    let cooc = build_cooccurrence(dataset);
    let cooc_lists: Vec<Vec<usize>> = dataset
        .tracks()
        .iter()
        .map(|t| {
            cooc.co_occurring(t.track_id)
                .map(|set| {
                    set.iter()
                        .map(|&id| dataset.track_index(id).expect("validated dataset"))
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();

    // Base (raw-feature) track representations drive the farthest-track
    // fallback; they stay fixed for the miner's lifetime.
    let reps: Vec<Vec<f64>> = dataset
        .tracks()
        .iter()
        .map(|t| track_mean_base(t, dataset))
        .collect::<Result<_, _>>()?;
    let pool_tracks = setup.config.farthest_tracks.min(num_tracks - 1);
    let singleton_pools: Vec<Vec<usize>> = (0..num_tracks)
        .map(|ti| {
            if !cooc_lists[ti].is_empty() {
                return Vec::new();
            }
            let mut others: Vec<(usize, f64)> = (0..num_tracks)
                .filter(|&tj| tj != ti)
                .map(|tj| {
                    let d: f64 = reps[ti]
                        .iter()
                        .zip(reps[tj].iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (tj, d)
                })
                .collect();
            others.sort_by(|a, b| {
                b.1.total_cmp(&a.1).then_with(|| {
                    dataset.tracks()[a.0]
                        .track_id
                        .cmp(&dataset.tracks()[b.0].track_id)
                })
            });
            others
                .iter()
                .take(pool_tracks)
                .flat_map(|&(tj, _)| track_frames[tj].iter().copied())
                .collect()
        })
        .collect();

    Ok(Box::new(TsiamMiner {
        config: setup.config.clone(),
        track_frames,
        track_of_frame,
        cooc_lists,
        singleton_pools,
        pending: Vec::new(),
        cursor: 0,
    }))
}

/// Draw `amount` entries from `pool`, without replacement when it is large
/// enough and with replacement otherwise.
fn sample_pool(pool: &[usize], amount: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    if pool.len() >= amount {
        rand::seq::index::sample(rng, pool.len(), amount)
            .iter()
            .map(|i| pool[i])
            .collect()
    } else {
        (0..amount)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect()
    }
}

impl PairMiner for TsiamMiner {
    fn name(&self) -> &'static str {
        "tsiam"
    }

    fn source(&self) -> PairSource {
        PairSource::Tsiam
    }

    fn begin_epoch(
        &mut self,
        ctx: &MiningContext,
        rng: &mut dyn RngCore,
    ) -> Result<(), MiningError> {
        let features = ctx.all_features(self.config.space);
        let per_anchor = self.config.pos_per_frame + self.config.neg_per_frame;
        let mut pairs = Vec::with_capacity(ctx.dataset.num_frames() * per_anchor);
        let frames = ctx.dataset.frames();

        for anchor in 0..frames.len() {
            let ti = self.track_of_frame[anchor];
            let own = &self.track_frames[ti];

            if own.len() > 1 && self.config.pos_per_frame > 0 {
                let pool: Vec<usize> = own.iter().copied().filter(|&p| p != anchor).collect();
                for partner in sample_pool(&pool, self.config.pos_per_frame, rng) {
                    pairs.push(Pair {
                        anchor_frame_id: frames[anchor].frame_id,
                        partner_frame_id: frames[partner].frame_id,
                        y: 0,
                        distance: row_distance(&features, anchor, partner),
                    });
                }
            }

            if self.config.neg_per_frame > 0 {
                let pool: &[usize] = if self.cooc_lists[ti].is_empty() {
                    &self.singleton_pools[ti]
                } else {
                    let pick =
                        self.cooc_lists[ti][rng.random_range(0..self.cooc_lists[ti].len())];
                    &self.track_frames[pick]
                };
                for partner in sample_pool(pool, self.config.neg_per_frame, rng) {
                    pairs.push(Pair {
                        anchor_frame_id: frames[anchor].frame_id,
                        partner_frame_id: frames[partner].frame_id,
                        y: 1,
                        distance: row_distance(&features, anchor, partner),
                    });
                }
            }
        }

        pairs.shuffle(rng);
        self.pending = pairs;
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self, _ctx: &MiningContext, _rng: &mut dyn RngCore) -> Option<PairBatch> {
        if self.cursor >= self.pending.len() {
            return None;
        }
        let end = (self.cursor + BATCH_PAIRS).min(self.pending.len());
        let batch = PairBatch {
            pairs: self.pending[self.cursor..end].to_vec(),
            source: PairSource::Tsiam,
        };
        self.cursor = end;
        Some(batch)
    }
}
