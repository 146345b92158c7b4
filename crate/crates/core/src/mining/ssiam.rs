//! Ranked-list self-supervised mining.
//!
//! Each iteration draws a random subset of B frames, takes every frame's
//! nearest non-self neighbor as a candidate positive and its farthest
//! neighbor as a candidate negative, then keeps only the hardest K of each:
//! the positives with the largest distances and the negatives with the
//! smallest. One iteration yields one 2K-pair batch.

use ndarray::Array2;
use rand::RngCore;

use super::ranked::nearest_and_farthest;
use super::{
    draw_subset, IndexPair, MinerSetup, MiningConfig, MiningContext, MiningError, Pair, PairBatch,
    PairMiner, PairSource,
};

/// Hard-pair selection on one subset; returns K positives then K negatives.
pub fn ssiam_select_pairs(subset: &Array2<f64>, k: usize) -> Result<Vec<IndexPair>, MiningError> {
    let b = subset.nrows();
    if k == 0 || k > b {
        return Err(MiningError::BadConfig(format!(
            "pairs_per_polarity {k} must lie in 1..={b} for a subset of {b}"
        )));
    }
    let (nearest, farthest) = nearest_and_farthest(subset)?;

    let mut s_plus: Vec<IndexPair> = nearest
        .iter()
        .enumerate()
        .map(|(q, &(p, d))| IndexPair {
            query: q,
            partner: p,
            y: 0,
            distance: d,
        })
        .collect();
    let mut s_minus: Vec<IndexPair> = farthest
        .iter()
        .enumerate()
        .map(|(q, &(p, d))| IndexPair {
            query: q,
            partner: p,
            y: 1,
            distance: d,
        })
        .collect();

    // Hardest positives: largest distance first; hardest negatives: smallest
    // distance first. Ties fall back to the query index.
    s_plus.sort_by(|a, b| b.distance.total_cmp(&a.distance).then(a.query.cmp(&b.query)));
    s_minus.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.query.cmp(&b.query)));
    s_plus.truncate(k);
    s_minus.truncate(k);
    s_plus.extend(s_minus);
    Ok(s_plus)
}

pub(super) fn clamp_subset_size(
    config: &MiningConfig,
    num_frames: usize,
    miner: &str,
) -> Result<usize, MiningError> {
    config.validate()?;
    if num_frames < 2 {
        return Err(MiningError::TooFewFrames {
            got: num_frames,
            need: 2,
        });
    }
    let effective = config.subset_size.min(num_frames);
    if effective < config.subset_size {
        log::warn!(
            "{miner}: clamping subset size {} to the {} available frames",
            config.subset_size,
            num_frames
        );
    }
    Ok(effective)
}

pub struct SsiamMiner {
    config: MiningConfig,
    num_frames: usize,
    subset_size: usize,
    iters_left: usize,
}

pub fn build(setup: &MinerSetup) -> Result<Box<dyn PairMiner>, MiningError> {
    let num_frames = setup.dataset.num_frames();
    let subset_size = clamp_subset_size(setup.config, num_frames, "ssiam")?;
    if setup.config.pairs_per_polarity > subset_size {
        return Err(MiningError::BadConfig(format!(
            "pairs_per_polarity {} exceeds the effective subset size {}",
            setup.config.pairs_per_polarity, subset_size
        )));
    }
    Ok(Box::new(SsiamMiner {
        config: setup.config.clone(),
        num_frames,
        subset_size,
        iters_left: 0,
    }))
}

impl PairMiner for SsiamMiner {
    fn name(&self) -> &'static str {
        "ssiam"
    }

    fn source(&self) -> PairSource {
        PairSource::Ssiam
    }

    fn begin_epoch(
        &mut self,
        _ctx: &MiningContext,
        _rng: &mut dyn RngCore,
    ) -> Result<(), MiningError> {
        self.iters_left = self.num_frames.div_ceil(self.subset_size);
        Ok(())
    }

    fn next_batch(&mut self, ctx: &MiningContext, rng: &mut dyn RngCore) -> Option<PairBatch> {
        if self.iters_left == 0 {
            return None;
        }
        self.iters_left -= 1;
        let positions = draw_subset(rng, self.num_frames, self.subset_size);
        let subset = ctx.subset_features(&positions, self.config.space);
        let selected = ssiam_select_pairs(&subset, self.config.pairs_per_polarity)
            .expect("subset bounds were validated at build time");
        let frames = ctx.dataset.frames();
        let pairs = selected
            .into_iter()
            .map(|p| Pair {
                anchor_frame_id: frames[positions[p.query]].frame_id,
                partner_frame_id: frames[positions[p.partner]].frame_id,
                y: p.y,
                distance: p.distance,
            })
            .collect();
        Some(PairBatch {
            pairs,
            source: PairSource::Ssiam,
        })
    }
}
