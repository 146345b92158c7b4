//! Frame/track data model, feature file I/O, track-level aggregation and
//! temporal co-occurrence analysis.
//!
//! Raw descriptors are stored as `f32` (the on-disk precision); everything
//! computed from them (means, embeddings, distances) is `f64`.

pub mod io;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::model::EmbedderParams;

/// Norm below which a vector is considered degenerate.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("dimension mismatch: expected {expected}, got {got} (frame {frame_id})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        frame_id: u64,
    },
    #[error("frame {frame_id} references unknown track {track_id}")]
    UnknownTrack { frame_id: u64, track_id: u64 },
    #[error("track {track_id} lists unknown frame {frame_id}")]
    UnknownFrame { track_id: u64, frame_id: u64 },
    #[error("track {track_id} lists frame {frame_id} whose track field is {actual}")]
    TrackMismatch {
        track_id: u64,
        frame_id: u64,
        actual: u64,
    },
    #[error("track {0} has no frames")]
    EmptyTrack(u64),
    #[error("duplicate frame id {0}")]
    DuplicateFrame(u64),
    #[error("duplicate track id {0}")]
    DuplicateTrack(u64),
    #[error("non-finite value in frame {0}")]
    NonFinite(u64),
    #[error("vector norm below {NORM_EPSILON:e}; cannot normalize")]
    DegenerateVector,
    #[error("synthetic generation failed: {0}")]
    Generation(String),
    #[error("bad feature file header: {0}")]
    BadHeader(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FeatureError {
    /// Stable machine-readable category, used by the CLI on exit.
    pub fn category(&self) -> &'static str {
        match self {
            FeatureError::DimensionMismatch { .. } => "dimension-mismatch",
            FeatureError::UnknownTrack { .. }
            | FeatureError::UnknownFrame { .. }
            | FeatureError::TrackMismatch { .. } => "referential-integrity",
            FeatureError::EmptyTrack(_) => "empty-track",
            FeatureError::DuplicateFrame(_) | FeatureError::DuplicateTrack(_) => "duplicate-id",
            FeatureError::NonFinite(_) => "non-finite-value",
            FeatureError::DegenerateVector => "degenerate-vector",
            FeatureError::Generation(_) => "generation",
            FeatureError::BadHeader(_) | FeatureError::Parse(_) => "malformed-input",
            FeatureError::Io(_) => "io",
        }
    }
}

/// One face image's descriptor plus identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeature {
    pub frame_id: u64,
    pub track_id: u64,
    /// Frame index in the source video.
    pub timestamp: i64,
    pub vector: Vec<f32>,
}

/// A temporally contiguous sequence of detections of one person.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    /// Frame ids ordered by (timestamp, frame_id).
    pub frame_ids: Vec<u64>,
    /// Ground-truth character identity, when known.
    pub label: Option<String>,
    /// First and last timestamp covered by the track.
    pub time_span: (i64, i64),
}

impl Track {
    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }
}

/// A validated collection of frames and tracks sharing one descriptor dimension.
///
/// Immutable after construction; safe to share across threads by reference.
#[derive(Debug, Clone)]
pub struct Dataset {
    frames: Vec<FrameFeature>,
    tracks: Vec<Track>,
    dimension: usize,
    cast_size: Option<usize>,
    frame_pos: HashMap<u64, usize>,
    track_pos: HashMap<u64, usize>,
}

impl Dataset {
    /// Validates all cross-references and value invariants, sorts each track's
    /// frames by (timestamp, frame_id) and derives its time span.
    pub fn new(
        frames: Vec<FrameFeature>,
        mut tracks: Vec<Track>,
        dimension: usize,
        cast_size: Option<usize>,
    ) -> Result<Self, FeatureError> {
        let mut frame_pos = HashMap::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            if f.vector.len() != dimension {
                return Err(FeatureError::DimensionMismatch {
                    expected: dimension,
                    got: f.vector.len(),
                    frame_id: f.frame_id,
                });
            }
            if f.vector.iter().any(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite(f.frame_id));
            }
            if frame_pos.insert(f.frame_id, i).is_some() {
                return Err(FeatureError::DuplicateFrame(f.frame_id));
            }
        }

        let mut track_pos = HashMap::with_capacity(tracks.len());
        for (i, t) in tracks.iter_mut().enumerate() {
            if t.frame_ids.is_empty() {
                return Err(FeatureError::EmptyTrack(t.track_id));
            }
            if track_pos.insert(t.track_id, i).is_some() {
                return Err(FeatureError::DuplicateTrack(t.track_id));
            }
            for &fid in &t.frame_ids {
                let pos = *frame_pos.get(&fid).ok_or(FeatureError::UnknownFrame {
                    track_id: t.track_id,
                    frame_id: fid,
                })?;
                let actual = frames[pos].track_id;
                if actual != t.track_id {
                    return Err(FeatureError::TrackMismatch {
                        track_id: t.track_id,
                        frame_id: fid,
                        actual,
                    });
                }
            }
            t.frame_ids.sort_by_key(|fid| {
                let f = &frames[frame_pos[fid]];
                (f.timestamp, f.frame_id)
            });
            let first = frames[frame_pos[&t.frame_ids[0]]].timestamp;
            let last = frames[frame_pos[t.frame_ids.last().unwrap()]].timestamp;
            t.time_span = (first, last);
        }

        for f in &frames {
            if !track_pos.contains_key(&f.track_id) {
                return Err(FeatureError::UnknownTrack {
                    frame_id: f.frame_id,
                    track_id: f.track_id,
                });
            }
        }

        Ok(Dataset {
            frames,
            tracks,
            dimension,
            cast_size,
            frame_pos,
            track_pos,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn cast_size(&self) -> Option<usize> {
        self.cast_size
    }

    pub fn frames(&self) -> &[FrameFeature] {
        &self.frames
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_tracks(&self) -> usize {
        self.tracks.len()
    }

    pub fn frame(&self, frame_id: u64) -> Option<&FrameFeature> {
        self.frame_pos.get(&frame_id).map(|&i| &self.frames[i])
    }

    pub fn track(&self, track_id: u64) -> Option<&Track> {
        self.track_pos.get(&track_id).map(|&i| &self.tracks[i])
    }

    /// Position of a frame in `frames()`, the row index used by matrix views.
    pub fn frame_index(&self, frame_id: u64) -> Option<usize> {
        self.frame_pos.get(&frame_id).copied()
    }

    /// Position of a track in `tracks()`.
    pub fn track_index(&self, track_id: u64) -> Option<usize> {
        self.track_pos.get(&track_id).copied()
    }

    pub fn has_labels(&self) -> bool {
        self.tracks.iter().all(|t| t.label.is_some())
    }

    /// Distinct ground-truth labels, sorted.
    pub fn distinct_labels(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .tracks
            .iter()
            .filter_map(|t| t.label.as_deref())
            .collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// All frame vectors as an `num_frames x dimension` f64 matrix, row i
    /// holding the frame at position i of `frames()`.
    pub fn feature_matrix(&self) -> ndarray::Array2<f64> {
        let mut m = ndarray::Array2::zeros((self.frames.len(), self.dimension));
        for (i, f) in self.frames.iter().enumerate() {
            for (j, &v) in f.vector.iter().enumerate() {
                m[[i, j]] = f64::from(v);
            }
        }
        m
    }
}

/// Scale `v` to unit L2 norm.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>, FeatureError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= NORM_EPSILON {
        return Err(FeatureError::DegenerateVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Track representation on raw descriptors: elementwise mean of the track's
/// frame vectors, normalized to unit norm.
pub fn track_mean_base(track: &Track, dataset: &Dataset) -> Result<Vec<f64>, FeatureError> {
    let mut acc = vec![0.0f64; dataset.dimension()];
    for &fid in &track.frame_ids {
        let frame = dataset.frame(fid).ok_or(FeatureError::UnknownFrame {
            track_id: track.track_id,
            frame_id: fid,
        })?;
        for (a, &v) in acc.iter_mut().zip(frame.vector.iter()) {
            *a += f64::from(v);
        }
    }
    let m = track.len() as f64;
    for a in acc.iter_mut() {
        *a /= m;
    }
    l2_normalize(&acc)
}

/// Track representation in the learned space: mean of the *embedded* frame
/// vectors, normalized. Pooling happens after embedding.
pub fn track_mean_embedded(
    track: &Track,
    dataset: &Dataset,
    embedder: &EmbedderParams,
) -> Result<Vec<f64>, FeatureError> {
    let (d_in, d_embed, _) = embedder.dims();
    if d_in != dataset.dimension() {
        return Err(FeatureError::DimensionMismatch {
            expected: dataset.dimension(),
            got: d_in,
            frame_id: track.frame_ids[0],
        });
    }
    let mut acc = vec![0.0f64; d_embed];
    for &fid in &track.frame_ids {
        let frame = dataset.frame(fid).ok_or(FeatureError::UnknownFrame {
            track_id: track.track_id,
            frame_id: fid,
        })?;
        let x: Vec<f64> = frame.vector.iter().map(|&v| f64::from(v)).collect();
        let e = embedder.embed(&x);
        for (a, v) in acc.iter_mut().zip(e.iter()) {
            *a += v;
        }
    }
    let m = track.len() as f64;
    for a in acc.iter_mut() {
        *a /= m;
    }
    l2_normalize(&acc)
}

/// Raw-feature representations for every track, keyed by track id.
pub fn base_track_representations(
    dataset: &Dataset,
) -> Result<BTreeMap<u64, Vec<f64>>, FeatureError> {
    dataset
        .tracks()
        .iter()
        .map(|t| Ok((t.track_id, track_mean_base(t, dataset)?)))
        .collect()
}

/// Embedded representations for every track, keyed by track id.
pub fn embedded_track_representations(
    dataset: &Dataset,
    embedder: &EmbedderParams,
) -> Result<BTreeMap<u64, Vec<f64>>, FeatureError> {
    dataset
        .tracks()
        .iter()
        .map(|t| Ok((t.track_id, track_mean_embedded(t, dataset, embedder)?)))
        .collect()
}

/// Which tracks overlap in time. Overlapping tracks are guaranteed to show
/// different people (one person appears at most once per frame).
#[derive(Debug, Clone, Default)]
pub struct CooccurrenceMap {
    neighbors: BTreeMap<u64, BTreeSet<u64>>,
}

impl CooccurrenceMap {
    pub fn co_occurring(&self, track_id: u64) -> Option<&BTreeSet<u64>> {
        self.neighbors.get(&track_id)
    }

    /// True when the track overlaps no other track.
    pub fn is_singleton(&self, track_id: u64) -> bool {
        self.neighbors
            .get(&track_id)
            .map_or(true, |s| s.is_empty())
    }

    pub fn num_singletons(&self) -> usize {
        self.neighbors.values().filter(|s| s.is_empty()).count()
    }

    pub fn num_co_occurring(&self) -> usize {
        self.neighbors.values().filter(|s| !s.is_empty()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &BTreeSet<u64>)> {
        self.neighbors.iter().map(|(&k, v)| (k, v))
    }
}

/// Tracks co-occur iff their [first, last] timestamp intervals share at least
/// one frame index.
pub fn build_cooccurrence(dataset: &Dataset) -> CooccurrenceMap {
    let mut neighbors: BTreeMap<u64, BTreeSet<u64>> = dataset
        .tracks()
        .iter()
        .map(|t| (t.track_id, BTreeSet::new()))
        .collect();
    let tracks = dataset.tracks();
    for i in 0..tracks.len() {
        for j in (i + 1)..tracks.len() {
            let (a0, a1) = tracks[i].time_span;
            let (b0, b1) = tracks[j].time_span;
            if a0 <= b1 && b0 <= a1 {
                neighbors
                    .get_mut(&tracks[i].track_id)
                    .unwrap()
                    .insert(tracks[j].track_id);
                neighbors
                    .get_mut(&tracks[j].track_id)
                    .unwrap()
                    .insert(tracks[i].track_id);
            }
        }
    }
    CooccurrenceMap { neighbors }
}
