//! Refining face-track representations with contrastive metric learning,
//! then clustering them by identity.
//!
//! The crate takes precomputed per-frame face features, mines training
//! pairs without any identity labels (track-level temporal constraints or
//! ranked-list hard examples), trains a small linear embedder with a
//! contrastive loss, and finally groups track representations with
//! Ward-linkage agglomerative clustering. Quality is scored against ground
//! truth with weighted clustering purity and BCubed F.
//!
//! Module map:
//! - [`features`]: datasets, file formats, track representations, synthesis
//! - [`mining`]: the pair-mining strategies and their registry
//! - [`model`]: the embedder, contrastive loss, training, checkpoints
//! - [`clustering`]: Ward-linkage agglomeration and dendrogram cuts
//! - [`metrics`]: purity, BCubed, similarity histograms
//! - [`pipeline`]: one-config end-to-end runs and their artifacts

pub mod clustering;
pub mod features;
pub mod metrics;
pub mod mining;
pub mod model;
pub mod pipeline;
