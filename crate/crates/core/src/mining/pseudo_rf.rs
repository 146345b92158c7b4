//! Pseudo-relevance-feedback baseline mining.
//!
//! Like the ranked-list miner it works on random B-frame subsets, but keeps
//! every query's nearest neighbor as a positive and farthest neighbor as a
//! negative with no batch-level hard selection, so each iteration yields all
//! 2B pairs.

use ndarray::Array2;
use rand::RngCore;

use super::ranked::nearest_and_farthest;
use super::ssiam::clamp_subset_size;
use super::{
    draw_subset, IndexPair, MinerSetup, MiningConfig, MiningContext, MiningError, Pair, PairBatch,
    PairMiner, PairSource,
};

/// All per-query pairs of one subset: B positives then B negatives, each
/// ordered by query index.
pub fn pseudo_rf_pairs(subset: &Array2<f64>) -> Result<Vec<IndexPair>, MiningError> {
    let (nearest, farthest) = nearest_and_farthest(subset)?;
    let mut pairs = Vec::with_capacity(2 * nearest.len());
    for (q, &(p, d)) in nearest.iter().enumerate() {
        pairs.push(IndexPair {
            query: q,
            partner: p,
            y: 0,
            distance: d,
        });
    }
    for (q, &(p, d)) in farthest.iter().enumerate() {
        pairs.push(IndexPair {
            query: q,
            partner: p,
            y: 1,
            distance: d,
        });
    }
    Ok(pairs)
}

pub struct PseudoRfMiner {
    config: MiningConfig,
    num_frames: usize,
    subset_size: usize,
    iters_left: usize,
}

pub fn build(setup: &MinerSetup) -> Result<Box<dyn PairMiner>, MiningError> {
    let num_frames = setup.dataset.num_frames();
    let subset_size = clamp_subset_size(setup.config, num_frames, "pseudo-rf")?;
    Ok(Box::new(PseudoRfMiner {
        config: setup.config.clone(),
        num_frames,
        subset_size,
        iters_left: 0,
    }))
}

impl PairMiner for PseudoRfMiner {
    fn name(&self) -> &'static str {
        "pseudo-rf"
    }

    fn source(&self) -> PairSource {
        PairSource::PseudoRf
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
        let selected = pseudo_rf_pairs(&subset).expect("subset size validated at build time");
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
            source: PairSource::PseudoRf,
        })
    }
}
