//! SGD training loop over mined pair batches.

use log::{debug, info};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_loss_gradients, DistanceKind, EmbedderParams, ModelError};
use crate::features::Dataset;
use crate::mining::{MiningContext, PairMiner};

/// Training hyperparameters. Defaults follow the refinement recipe the
/// crate ships with; all fields are optional in serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the relative epoch-loss change stays below this for
    /// `plateau_patience` consecutive epochs.
    pub plateau_tolerance: f64,
    pub plateau_patience: usize,
    pub seed: u64,
    /// Overrides the fan-in-scaled uniform init bound when set.
    pub init_scale: Option<f64>,
    pub distance_kind: DistanceKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            learning_rate: 1e-3,
            max_epochs: 50,
            plateau_tolerance: 1e-4,
            plateau_patience: 3,
            seed: 0,
            init_scale: None,
            distance_kind: DistanceKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(ModelError::BadConfig(format!(
                "margin must be positive and finite, got {}",
                self.margin
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::BadConfig(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(ModelError::BadConfig("max_epochs must be at least 1".into()));
        }
        if !(self.plateau_tolerance >= 0.0 && self.plateau_tolerance.is_finite()) {
            return Err(ModelError::BadConfig(format!(
                "plateau tolerance must be nonnegative, got {}",
                self.plateau_tolerance
            )));
        }
        if self.plateau_patience == 0 {
            return Err(ModelError::BadConfig(
                "plateau patience must be at least 1".into(),
            ));
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ModelError::BadConfig(format!(
                    "init scale must be positive and finite, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub mean_loss: f64,
    pub num_pairs: usize,
}

/// Trains a fresh embedder against `miner`'s pair stream.
///
/// `features` must be the dataset's frame-feature matrix in dataset frame
/// order; pair frame ids are resolved against it. Two independent rng
/// streams are derived from the seed, one for parameter init and one for
/// mining, so the same seed reproduces the run bit for bit.
pub fn train(
    dataset: &Dataset,
    features: &Array2<f64>,
    miner: &mut dyn PairMiner,
    embed_dim: usize,
    proj_dim: usize,
    config: &TrainConfig,
) -> Result<(EmbedderParams, Vec<LossReport>), ModelError> {
    config.validate()?;
    if features.nrows() != dataset.num_frames() || features.ncols() != dataset.dimension() {
        return Err(ModelError::DimensionMismatch {
            what: "feature matrix",
            expected: dataset.num_frames() * dataset.dimension(),
            got: features.nrows() * features.ncols(),
        });
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(0);
    let mut mine_rng = ChaCha8Rng::seed_from_u64(config.seed);
    mine_rng.set_stream(1);

    let d_in = dataset.dimension();
    let mut params = EmbedderParams::init(d_in, embed_dim, proj_dim, config.init_scale, &mut init_rng)?;

    let mut history: Vec<LossReport> = Vec::new();
    let mut calm_epochs = 0usize;
    for epoch in 0..config.max_epochs {
        {
            let ctx = MiningContext {
                dataset,
                base: features,
                params: Some(&params),
            };
            miner.begin_epoch(&ctx, &mut mine_rng)?;
        }

        let mut loss_sum = 0.0;
        let mut pair_count = 0usize;
        loop {
            let batch = {
                let ctx = MiningContext {
                    dataset,
                    base: features,
                    params: Some(&params),
                };
                miner.next_batch(&ctx, &mut mine_rng)
            };
            let Some(batch) = batch else { break };
            if batch.pairs.is_empty() {
                continue;
            }

            let n = batch.pairs.len();
            let mut x1 = Array2::zeros((n, d_in));
            let mut x2 = Array2::zeros((n, d_in));
            let mut ys = vec![0u8; n];
            for (row, pair) in batch.pairs.iter().enumerate() {
                let i = dataset
                    .frame_index(pair.anchor_frame_id)
                    .ok_or(ModelError::UnknownFrame(pair.anchor_frame_id))?;
                let j = dataset
                    .frame_index(pair.partner_frame_id)
                    .ok_or(ModelError::UnknownFrame(pair.partner_frame_id))?;
                x1.row_mut(row).assign(&features.row(i));
                x2.row_mut(row).assign(&features.row(j));
                ys[row] = pair.y;
            }

            let (batch_loss, grads) =
                batch_loss_gradients(&params, &x1, &x2, &ys, config.margin, config.distance_kind);
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFinite("batch loss"));
            }
            params.apply_step(&grads, config.learning_rate);
            loss_sum += batch_loss * n as f64;
            pair_count += n;
        }

        if pair_count == 0 {
            return Err(ModelError::EmptyMining { epoch });
        }
        let mean_loss = loss_sum / pair_count as f64;
        debug!(
            "epoch {}: mean loss {:.6} over {} pairs ({})",
            epoch,
            mean_loss,
            pair_count,
            miner.name()
        );
        history.push(LossReport {
            epoch,
            mean_loss,
            num_pairs: pair_count,
        });

        if history.len() >= 2 {
            let prev = history[history.len() - 2].mean_loss;
            let rel = (mean_loss - prev).abs() / prev.abs().max(1e-12);
            if rel < config.plateau_tolerance {
                calm_epochs += 1;
                if calm_epochs >= config.plateau_patience {
                    info!(
                        "loss plateaued after epoch {} ({} calm epochs)",
                        epoch, calm_epochs
                    );
                    break;
                }
            } else {
                calm_epochs = 0;
            }
        }
    }
    Ok((params, history))
}
