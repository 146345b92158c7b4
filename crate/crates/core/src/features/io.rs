//! Reading and writing feature and track files.
//!
//! Features travel either in a little-endian binary container (magic `TCF1`)
//! or, for hand-written fixtures, as CSV. Track metadata is a JSON array.
//! The format is sniffed from the file content, not the extension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureError, FrameFeature, Track};

/// Magic bytes opening a binary feature file.
pub const FEATURE_MAGIC: [u8; 4] = *b"TCF1";

/// On-disk shape of one track in the JSON metadata file.
#[derive(Debug, Serialize, Deserialize)]
struct TrackRecord {
    track_id: u64,
    frame_ids: Vec<u64>,
    #[serde(default)]
    label: Option<String>,
}

/// Load features plus track metadata into a validated [`Dataset`].
pub fn load_dataset(features_path: &Path, tracks_path: &Path) -> Result<Dataset, FeatureError> {
    let (frames, dimension) = read_features(features_path)?;
    let tracks = read_tracks(tracks_path)?;
    Dataset::new(frames, tracks, dimension, None)
}

/// Write a dataset as a binary feature file plus a JSON track file.
pub fn save_dataset(
    dataset: &Dataset,
    features_path: &Path,
    tracks_path: &Path,
) -> Result<(), FeatureError> {
    write_features_binary(dataset.frames(), dataset.dimension(), features_path)?;
    write_tracks(dataset.tracks(), tracks_path)
}

/// Read a feature file in either supported format, sniffing by magic bytes.
pub fn read_features(path: &Path) -> Result<(Vec<FrameFeature>, usize), FeatureError> {
    let mut probe = [0u8; 4];
    let n = File::open(path)?.read(&mut probe)?;
    if n == 4 && probe == FEATURE_MAGIC {
        read_features_binary(path)
    } else {
        read_features_csv(path)
    }
}

pub fn read_features_binary(path: &Path) -> Result<(Vec<FrameFeature>, usize), FeatureError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != FEATURE_MAGIC {
        return Err(FeatureError::BadHeader(format!(
            "magic {:02x?} is not TCF1",
            magic
        )));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let dimension = r.read_u32::<LittleEndian>()? as usize;
    if dimension == 0 {
        return Err(FeatureError::BadHeader("zero feature dimension".into()));
    }
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let frame_id = r.read_u64::<LittleEndian>()?;
        let track_id = r.read_u64::<LittleEndian>()?;
        let timestamp = r.read_i64::<LittleEndian>()?;
        let mut vector = vec![0f32; dimension];
        r.read_f32_into::<LittleEndian>(&mut vector)?;
        frames.push(FrameFeature {
            frame_id,
            track_id,
            timestamp,
            vector,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(FeatureError::Parse(
            "trailing bytes after declared frame count".into(),
        ));
    }
    Ok((frames, dimension))
}

pub fn write_features_binary(
    frames: &[FrameFeature],
    dimension: usize,
    path: &Path,
) -> Result<(), FeatureError> {
    let count = u32::try_from(frames.len())
        .map_err(|_| FeatureError::Parse("more than u32::MAX frames".into()))?;
    let dim = u32::try_from(dimension)
        .map_err(|_| FeatureError::Parse("dimension exceeds u32::MAX".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FEATURE_MAGIC)?;
    w.write_u32::<LittleEndian>(count)?;
    w.write_u32::<LittleEndian>(dim)?;
    for f in frames {
        w.write_u64::<LittleEndian>(f.frame_id)?;
        w.write_u64::<LittleEndian>(f.track_id)?;
        w.write_i64::<LittleEndian>(f.timestamp)?;
        for &v in &f.vector {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<(Vec<FrameFeature>, usize), FeatureError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        // Ragged rows must surface as DimensionMismatch, not a csv error.
        .flexible(true)
        .from_path(path)
        .map_err(|e| FeatureError::Parse(e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| FeatureError::Parse(e.to_string()))?;
    let fixed = ["frame_id", "track_id", "timestamp"];
    if headers.len() < 4 {
        return Err(FeatureError::BadHeader(
            "CSV needs frame_id,track_id,timestamp plus at least one value column".into(),
        ));
    }
    for (i, want) in fixed.iter().enumerate() {
        if &headers[i] != *want {
            return Err(FeatureError::BadHeader(format!(
                "CSV column {i} is {:?}, expected {want:?}",
                &headers[i]
            )));
        }
    }
    let dimension = headers.len() - fixed.len();

    let mut frames = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| FeatureError::Parse(e.to_string()))?;
        let frame_id: u64 = parse_field(&record, 0)?;
        if record.len() != fixed.len() + dimension {
            return Err(FeatureError::DimensionMismatch {
                expected: dimension,
                got: record.len().saturating_sub(fixed.len()),
                frame_id,
            });
        }
        let track_id: u64 = parse_field(&record, 1)?;
        let timestamp: i64 = parse_field(&record, 2)?;
        let mut vector = Vec::with_capacity(dimension);
        for i in 0..dimension {
            vector.push(parse_field::<f32>(&record, fixed.len() + i)?);
        }
        frames.push(FrameFeature {
            frame_id,
            track_id,
            timestamp,
            vector,
        });
    }
    Ok((frames, dimension))
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
) -> Result<T, FeatureError> {
    let raw = record
        .get(index)
        .ok_or_else(|| FeatureError::Parse(format!("missing CSV field {index}")))?;
    raw.parse()
        .map_err(|_| FeatureError::Parse(format!("cannot parse CSV field {index}: {raw:?}")))
}

pub fn write_features_csv(
    frames: &[FrameFeature],
    dimension: usize,
    path: &Path,
) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FeatureError::Parse(e.to_string()))?;
    let mut header = vec![
        "frame_id".to_string(),
        "track_id".to_string(),
        "timestamp".to_string(),
    ];
    header.extend((0..dimension).map(|i| format!("v{i}")));
    w.write_record(&header)
        .map_err(|e| FeatureError::Parse(e.to_string()))?;
    for f in frames {
        let mut row = vec![
            f.frame_id.to_string(),
            f.track_id.to_string(),
            f.timestamp.to_string(),
        ];
        row.extend(f.vector.iter().map(|v| v.to_string()));
        w.write_record(&row)
            .map_err(|e| FeatureError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tracks(path: &Path) -> Result<Vec<Track>, FeatureError> {
    let r = BufReader::new(File::open(path)?);
    let records: Vec<TrackRecord> =
        serde_json::from_reader(r).map_err(|e| FeatureError::Parse(e.to_string()))?;
    Ok(records
        .into_iter()
        .map(|t| Track {
            track_id: t.track_id,
            frame_ids: t.frame_ids,
            label: t.label,
            time_span: (0, 0),
        })
        .collect())
}

pub fn write_tracks(tracks: &[Track], path: &Path) -> Result<(), FeatureError> {
    let records: Vec<TrackRecord> = tracks
        .iter()
        .map(|t| TrackRecord {
            track_id: t.track_id,
            frame_ids: t.frame_ids.clone(),
            label: t.label.clone(),
        })
        .collect();
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &records)
        .map_err(|e| FeatureError::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
