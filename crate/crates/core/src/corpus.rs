//! Caption annotations, tokenization, dataset splits, and clip features.
//!
//! The annotation JSON follows the ActivityNet Captions convention:
//!
//! ```json
//! {"<video_id>": {"duration": 10.0, "timestamps": [[0.0, 5.0]], "sentences": ["a man runs"]}}
//! ```
//!
//! Clip features arrive in SAPF files, a little-endian binary format:
//! magic bytes `SAPF`, `u32` version (= 1), `u32` dim, `u32` clip_count,
//! then `clip_count * dim` `f32` values row-major. Clip time intervals are
//! not stored in the file; they come from the JSON manifest entry
//! (`clip_duration`, `stride`): clip `i` spans
//! `[i * stride, i * stride + clip_duration]`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// A closed time interval in seconds with `0 <= start <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::validation(format!(
                "segment endpoints must be finite, got [{start}, {end}]"
            )));
        }
        if start < 0.0 {
            return Err(Error::validation(format!(
                "segment start must be non-negative, got {start}"
            )));
        }
        if start > end {
            return Err(Error::validation(format!(
                "segment start {start} exceeds end {end}"
            )));
        }
        Ok(Segment { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Length of the overlap with another segment (0 when disjoint).
    pub fn overlap(&self, other: &Segment) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

/// One captioned event: a time segment plus its sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub segment: Segment,
    pub sentence: String,
}

/// One video's duration and its captioned events.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub duration: f64,
    pub events: Vec<Event>,
}

/// Raw on-disk shape of one annotation entry.
#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    duration: f64,
    timestamps: Vec<[f64; 2]>,
    sentences: Vec<String>,
}

/// Result of loading an annotation file: the annotations plus the number of
/// events whose timestamps had to be clamped into `[0, duration]`.
#[derive(Debug)]
pub struct LoadedAnnotations {
    pub annotations: BTreeMap<String, VideoAnnotation>,
    pub clamp_warnings: usize,
}

/// Load annotations from JSON, clamping out-of-range timestamps.
///
/// Real corpora contain event ends slightly past the video duration;
/// those events are clamped (and counted) rather than rejected. Inverted
/// timestamp pairs are reordered before clamping so the result always
/// satisfies `0 <= start <= end <= duration`.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<LoadedAnnotations> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_annotations(&text)
}

/// Parse annotation JSON from a string. See [`load_annotations`].
pub fn parse_annotations(text: &str) -> Result<LoadedAnnotations> {
    let raw: BTreeMap<String, RawAnnotation> =
        serde_json::from_str(text).map_err(|e| Error::from_json(&e, text))?;

    let mut annotations = BTreeMap::new();
    let mut clamp_warnings = 0usize;
    for (video_id, entry) in raw {
        if !entry.duration.is_finite() || entry.duration <= 0.0 {
            return Err(Error::validation(format!(
                "video {video_id:?}: duration must be positive, got {}",
                entry.duration
            )));
        }
        if entry.timestamps.len() != entry.sentences.len() {
            return Err(Error::validation(format!(
                "video {video_id:?}: {} timestamps but {} sentences",
                entry.timestamps.len(),
                entry.sentences.len()
            )));
        }
        let mut events = Vec::with_capacity(entry.timestamps.len());
        for (idx, (&[s, e], sentence)) in entry
            .timestamps
            .iter()
            .zip(entry.sentences.iter())
            .enumerate()
        {
            if !s.is_finite() || !e.is_finite() {
                return Err(Error::validation(format!(
                    "video {video_id:?}: event {idx} has non-finite timestamps [{s}, {e}]"
                )));
            }
            let (lo, hi) = if s <= e { (s, e) } else { (e, s) };
            let start = lo.clamp(0.0, entry.duration);
            let end = hi.clamp(0.0, entry.duration);
            if start != s || end != e {
                clamp_warnings += 1;
            }
            events.push(Event {
                segment: Segment { start, end },
                sentence: sentence.clone(),
            });
        }
        annotations.insert(
            video_id.clone(),
            VideoAnnotation {
                video_id,
                duration: entry.duration,
                events,
            },
        );
    }
    Ok(LoadedAnnotations {
        annotations,
        clamp_warnings,
    })
}

/// Serialize annotations back to the on-disk JSON shape.
pub fn annotations_to_json(annotations: &BTreeMap<String, VideoAnnotation>) -> Result<String> {
    let raw: BTreeMap<&str, RawAnnotation> = annotations
        .iter()
        .map(|(id, ann)| {
            (
                id.as_str(),
                RawAnnotation {
                    duration: ann.duration,
                    timestamps: ann
                        .events
                        .iter()
                        .map(|ev| [ev.segment.start, ev.segment.end])
                        .collect(),
                    sentences: ann.events.iter().map(|ev| ev.sentence.clone()).collect(),
                },
            )
        })
        .collect();
    serde_json::to_string_pretty(&raw).map_err(|e| Error::format(e.to_string()))
}

pub fn save_annotations(
    path: impl AsRef<Path>,
    annotations: &BTreeMap<String, VideoAnnotation>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, annotations_to_json(annotations)?)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Lowercase a sentence and split it into tokens.
///
/// Unicode letters and digits are kept; every other character acts as a
/// separator. No stemming, no empty tokens.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Disjoint train/holdout partition of a set of video ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: BTreeSet<String>,
    pub holdout_ids: BTreeSet<String>,
}

/// Deterministically split ids into train and holdout sets.
///
/// The ids are sorted lexicographically, shuffled by Fisher–Yates with a
/// [`SplitMix64`] generator seeded by `seed`, and the first
/// `round(holdout_fraction * n)` of the shuffled order become the holdout
/// set. `round` is half-away-from-zero.
pub fn split_dataset(ids: &[String], holdout_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(0.0..=1.0).contains(&holdout_fraction) || holdout_fraction.is_nan() {
        return Err(Error::argument(format!(
            "holdout fraction must be in [0, 1], got {holdout_fraction}"
        )));
    }
    if ids.is_empty() {
        return Err(Error::argument("id list must be nonempty".to_string()));
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::validation(format!("duplicate video id {id:?}")));
        }
    }

    let mut ordered: Vec<String> = ids.to_vec();
    ordered.sort_unstable();
    SplitMix64::new(seed).shuffle(&mut ordered);

    let holdout_count = (holdout_fraction * ids.len() as f64).round() as usize;
    let holdout_ids: BTreeSet<String> = ordered[..holdout_count].iter().cloned().collect();
    let train_ids: BTreeSet<String> = ordered[holdout_count..].iter().cloned().collect();
    Ok(DatasetSplit {
        train_ids,
        holdout_ids,
    })
}

/// One clip: its time interval and feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub interval: Segment,
    pub vector: Vec<f32>,
}

/// Per-video matrix of clip feature vectors in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatureSet {
    pub video_id: String,
    pub dim: usize,
    pub clips: Vec<Clip>,
}

const SAPF_MAGIC: &[u8; 4] = b"SAPF";
const SAPF_VERSION: u32 = 1;

/// Write one SAPF feature file: `rows` of `dim` finite f32 values each.
pub fn write_sapf(path: impl AsRef<Path>, dim: usize, rows: &[Vec<f32>]) -> Result<()> {
    let path = path.as_ref();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::validation(format!(
                "row {i} has {} values, expected dim {dim}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "row {i} channel {j} is not finite"
            )));
        }
    }
    let mut buf = Vec::with_capacity(16 + rows.len() * dim * 4);
    buf.extend_from_slice(SAPF_MAGIC);
    buf.extend_from_slice(&SAPF_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    for row in rows {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read one SAPF feature file, returning `(dim, rows)`.
pub fn read_sapf(path: impl AsRef<Path>) -> Result<(usize, Vec<Vec<f32>>)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let name = path.display();
    if bytes.len() < 16 {
        return Err(Error::format(format!("{name}: file shorter than header")));
    }
    if &bytes[0..4] != SAPF_MAGIC {
        return Err(Error::format(format!(
            "{name}: bad magic {:?}, expected \"SAPF\"",
            &bytes[0..4]
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SAPF_VERSION {
        return Err(Error::format(format!(
            "{name}: unsupported version {version}, expected {SAPF_VERSION}"
        )));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let clip_count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::format(format!("{name}: dim must be positive")));
    }
    let expected = 16 + clip_count * dim * 4;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "{name}: declares {clip_count} clips of dim {dim} ({expected} bytes) but file has {} bytes",
            bytes.len()
        )));
    }
    let mut rows = Vec::with_capacity(clip_count);
    let mut off = 16;
    for clip_idx in 0..clip_count {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "{name}: non-finite value in clip {clip_idx}"
                )));
            }
            row.push(v);
            off += 4;
        }
        rows.push(row);
    }
    Ok((dim, rows))
}

/// One manifest entry: where a video's SAPF file lives and how its clips
/// tile the timeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub clip_duration: f64,
    pub stride: f64,
}

/// Load a feature manifest plus all SAPF files it names.
///
/// Relative file paths are resolved against the manifest's directory. All
/// videos in one manifest must share a feature dim.
pub fn load_features(manifest_path: impl AsRef<Path>) -> Result<Vec<ClipFeatureSet>> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: BTreeMap<String, ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::from_json(&e, &text))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut sets = Vec::with_capacity(manifest.len());
    let mut shared_dim: Option<usize> = None;
    for (video_id, entry) in manifest {
        if entry.stride <= 0.0 || entry.clip_duration <= 0.0 {
            return Err(Error::validation(format!(
                "video {video_id:?}: stride and clip_duration must be positive"
            )));
        }
        let file = resolve_relative(base, &entry.file);
        let (dim, rows) = read_sapf(&file)?;
        match shared_dim {
            None => shared_dim = Some(dim),
            Some(d) if d != dim => {
                return Err(Error::validation(format!(
                    "video {video_id:?}: dim {dim} differs from dim {d} elsewhere in the manifest"
                )));
            }
            _ => {}
        }
        let clips = rows
            .into_iter()
            .enumerate()
            .map(|(i, vector)| Clip {
                interval: Segment {
                    start: i as f64 * entry.stride,
                    end: i as f64 * entry.stride + entry.clip_duration,
                },
                vector,
            })
            .collect();
        sets.push(ClipFeatureSet {
            video_id,
            dim,
            clips,
        });
    }
    Ok(sets)
}

pub(crate) fn resolve_relative(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Write a feature manifest mapping video ids to entries.
pub fn save_manifest(
    path: impl AsRef<Path>,
    entries: &BTreeMap<String, ManifestEntry>,
) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(entries).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
