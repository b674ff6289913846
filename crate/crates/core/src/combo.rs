//! Feature-combination search: concatenate named feature sets along the
//! channel axis and rank every subset of the pool by a pluggable scorer.
//!
//! Within a combination the concatenation order is the pool's registration
//! order; the combination itself is reported with its names sorted. The
//! default scorer trains the probe heads and reports held-out semantic
//! mean average precision; a CSV of externally computed scores can replace
//! it.

use std::collections::{BTreeMap, BTreeSet};
use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concepts::{clip_semantic_targets, ConceptVocabulary};
use crate::corpus::{split_dataset, Clip, ClipFeatureSet, VideoAnnotation};
use crate::error::{Error, Result};
use crate::objective::{
    evaluate_heads, global_feature, temporal_region_label, train_heads, AsymmetricLossParams,
    ClipExample, ObjectiveWeights, ProbeReport, TemporalLabel, TrainConfig,
};

/// Registry of named feature sets aligned per video.
///
/// Every set must cover the same videos with identical clip intervals;
/// channel counts may differ.
#[derive(Debug, Clone, Default)]
pub struct FeaturePool {
    names: Vec<String>,
    sets: HashMap<String, BTreeMap<String, ClipFeatureSet>>,
}

impl FeaturePool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Names in registration order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&BTreeMap<String, ClipFeatureSet>> {
        self.sets.get(name)
    }

    /// Register a named feature set, checking alignment against the sets
    /// already present.
    pub fn register(&mut self, name: impl Into<String>, sets: Vec<ClipFeatureSet>) -> Result<()> {
        let name = name.into();
        if self.sets.contains_key(&name) {
            return Err(Error::argument(format!(
                "feature set {name:?} is already registered"
            )));
        }
        let by_video: BTreeMap<String, ClipFeatureSet> = sets
            .into_iter()
            .map(|s| (s.video_id.clone(), s))
            .collect();
        if let Some(reference) = self.names.first().map(|n| &self.sets[n]) {
            if reference.keys().ne(by_video.keys()) {
                return Err(Error::validation(format!(
                    "feature set {name:?} does not cover the same videos as {:?}",
                    self.names[0]
                )));
            }
            for (video_id, set) in &by_video {
                let base = &reference[video_id];
                if set.clips.len() != base.clips.len() {
                    return Err(Error::validation(format!(
                        "video {video_id:?}: {name:?} has {} clips, {:?} has {}",
                        set.clips.len(),
                        self.names[0],
                        base.clips.len()
                    )));
                }
                for (i, (a, b)) in set.clips.iter().zip(&base.clips).enumerate() {
                    if a.interval != b.interval {
                        return Err(Error::validation(format!(
                            "video {video_id:?}: clip {i} interval differs between \
                             {name:?} and {:?}",
                            self.names[0]
                        )));
                    }
                }
            }
        }
        self.names.push(name.clone());
        self.sets.insert(name, by_video);
        Ok(())
    }
}

/// Concatenate the named sets channel-wise, in the given order, per clip.
pub fn concat_features(
    pool: &FeaturePool,
    names: &[String],
) -> Result<BTreeMap<String, ClipFeatureSet>> {
    if names.is_empty() {
        return Err(Error::argument("no feature sets selected".to_string()));
    }
    let mut unique = BTreeSet::new();
    for name in names {
        if !pool.sets.contains_key(name) {
            return Err(Error::argument(format!("unknown feature set {name:?}")));
        }
        if !unique.insert(name) {
            return Err(Error::argument(format!("feature set {name:?} selected twice")));
        }
    }
    let dim: usize = names.iter().map(|n| first_dim(&pool.sets[n])).sum();
    let reference = &pool.sets[&names[0]];
    let mut out = BTreeMap::new();
    for (video_id, base) in reference {
        let mut clips: Vec<Clip> = base
            .clips
            .iter()
            .map(|c| Clip {
                interval: c.interval,
                vector: Vec::with_capacity(dim),
            })
            .collect();
        for name in names {
            let set = &pool.sets[name][video_id];
            if set.clips.len() != clips.len() {
                return Err(Error::validation(format!(
                    "video {video_id:?}: clip counts misaligned across feature sets"
                )));
            }
            for (target, source) in clips.iter_mut().zip(&set.clips) {
                target.vector.extend_from_slice(&source.vector);
            }
        }
        out.insert(
            video_id.clone(),
            ClipFeatureSet {
                video_id: video_id.clone(),
                dim,
                clips,
            },
        );
    }
    Ok(out)
}

fn first_dim(sets: &BTreeMap<String, ClipFeatureSet>) -> usize {
    sets.values().next().map_or(0, |s| s.dim)
}

/// One evaluated combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    /// Member names, sorted lexicographically.
    pub combination: Vec<String>,
    pub score: f64,
    pub report: Option<ProbeReport>,
}

/// Scores one combination of feature sets.
pub trait CombinationScorer {
    /// `names` are sorted member names; `features` the concatenated sets
    /// per video.
    fn score(
        &mut self,
        names: &[String],
        features: &BTreeMap<String, ClipFeatureSet>,
    ) -> Result<(f64, Option<ProbeReport>)>;
}

/// Canonical key for a combination: sorted names joined by `+`.
pub fn combination_key(names: &[String]) -> String {
    let mut sorted: Vec<&str> = names.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    sorted.join("+")
}

/// Default scorer: train the probe heads on a split of the videos and
/// score by held-out semantic mean average precision.
pub struct ProbeScorer<'a> {
    pub annotations: &'a BTreeMap<String, VideoAnnotation>,
    pub vocab: &'a ConceptVocabulary,
    pub actions: Option<&'a BTreeMap<String, usize>>,
    pub config: TrainConfig,
    pub weights: ObjectiveWeights,
    pub asl: AsymmetricLossParams,
    /// Fraction of videos held out for scoring.
    pub holdout_fraction: f64,
    /// Foreground threshold for temporal labels.
    pub fg_threshold: f64,
}

/// Build one training example per clip of a video.
pub fn build_examples(
    annotation: &VideoAnnotation,
    features: &ClipFeatureSet,
    vocab: &ConceptVocabulary,
    action_class: Option<usize>,
    fg_threshold: f64,
) -> Result<Vec<ClipExample>> {
    let global = global_feature(features)?;
    let event_segments: Vec<_> = annotation.events.iter().map(|ev| ev.segment).collect();
    features
        .clips
        .iter()
        .map(|clip| {
            let temporal_label =
                temporal_region_label(&clip.interval, &event_segments, fg_threshold)?;
            Ok(ClipExample {
                local: clip.vector.iter().map(|&v| v as f64).collect(),
                global: global.clone(),
                action_class: match temporal_label {
                    TemporalLabel::Foreground => action_class,
                    TemporalLabel::Background => None,
                },
                temporal_label,
                semantic_target: clip_semantic_targets(annotation, &clip.interval, vocab),
            })
        })
        .collect()
}

/// Build examples for every video in `features`, requiring an annotation
/// per video.
pub fn build_example_set(
    annotations: &BTreeMap<String, VideoAnnotation>,
    features: &BTreeMap<String, ClipFeatureSet>,
    vocab: &ConceptVocabulary,
    actions: Option<&BTreeMap<String, usize>>,
    fg_threshold: f64,
) -> Result<Vec<ClipExample>> {
    let mut examples = Vec::new();
    for (video_id, set) in features {
        let annotation = annotations.get(video_id).ok_or_else(|| {
            Error::validation(format!("no annotation for video {video_id:?}"))
        })?;
        let action_class = actions.and_then(|map| map.get(video_id)).copied();
        examples.extend(build_examples(annotation, set, vocab, action_class, fg_threshold)?);
    }
    Ok(examples)
}

impl CombinationScorer for ProbeScorer<'_> {
    fn score(
        &mut self,
        _names: &[String],
        features: &BTreeMap<String, ClipFeatureSet>,
    ) -> Result<(f64, Option<ProbeReport>)> {
        let ids: Vec<String> = features.keys().cloned().collect();
        let split = split_dataset(&ids, self.holdout_fraction, self.config.seed)?;
        let subset = |keep: &std::collections::BTreeSet<String>| {
            features
                .iter()
                .filter(|(vid, _)| keep.contains(*vid))
                .map(|(vid, set)| (vid.clone(), set.clone()))
                .collect::<BTreeMap<_, _>>()
        };
        let train_features = subset(&split.train_ids);
        let eval_features = if split.holdout_ids.is_empty() {
            train_features.clone()
        } else {
            subset(&split.holdout_ids)
        };
        let train_examples = build_example_set(
            self.annotations,
            &train_features,
            self.vocab,
            self.actions,
            self.fg_threshold,
        )?;
        let eval_examples = build_example_set(
            self.annotations,
            &eval_features,
            self.vocab,
            self.actions,
            self.fg_threshold,
        )?;
        let (heads, _) = train_heads(&train_examples, &self.config, &self.weights, &self.asl)?;
        let report = evaluate_heads(&heads, &eval_examples)?;
        let score = report.semantic_map.unwrap_or(0.0);
        Ok((score, Some(report)))
    }
}

/// Scorer backed by an externally computed score table.
///
/// CSV lines are `name1+name2+...,score` with names sorted; `#` comments
/// and blank lines are skipped.
pub struct CsvScorer {
    scores: HashMap<String, f64>,
}

impl CsvScorer {
    pub fn parse(text: &str) -> Result<Self> {
        let mut scores = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.rsplit_once(',').ok_or_else(|| {
                Error::validation(format!("scores line {}: missing comma", lineno + 1))
            })?;
            let score: f64 = value.trim().parse().map_err(|_| {
                Error::validation(format!("scores line {}: bad score {value:?}", lineno + 1))
            })?;
            scores.insert(key.trim().to_string(), score);
        }
        Ok(CsvScorer { scores })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }
}

impl CombinationScorer for CsvScorer {
    fn score(
        &mut self,
        names: &[String],
        _features: &BTreeMap<String, ClipFeatureSet>,
    ) -> Result<(f64, Option<ProbeReport>)> {
        let key = combination_key(names);
        let score = self.scores.get(&key).copied().ok_or_else(|| {
            Error::validation(format!("no score for combination {key:?}"))
        })?;
        Ok((score, None))
    }
}

/// Evaluate every nonempty subset of the pool up to `max_size` and rank by
/// score descending, then fewer members, then lexicographic names.
pub fn search_combination(
    pool: &FeaturePool,
    scorer: &mut dyn CombinationScorer,
    max_size: usize,
) -> Result<Vec<ComboResult>> {
    if pool.is_empty() {
        return Err(Error::argument("feature pool is empty".to_string()));
    }
    if max_size < 1 {
        return Err(Error::argument("max combination size must be at least 1".to_string()));
    }
    if max_size > pool.len() {
        return Err(Error::argument(format!(
            "max combination size {max_size} exceeds pool size {}",
            pool.len()
        )));
    }

    let mut results = Vec::new();
    for mask in 1u64..(1u64 << pool.len()) {
        if (mask.count_ones() as usize) > max_size {
            continue;
        }
        // registration order for concatenation
        let members: Vec<String> = pool
            .names
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, n)| n.clone())
            .collect();
        let features = concat_features(pool, &members)?;
        let mut sorted = members.clone();
        sorted.sort_unstable();
        let (score, report) = scorer.score(&sorted, &features)?;
        if !score.is_finite() {
            return Err(Error::validation(format!(
                "scorer returned non-finite score for {:?}",
                combination_key(&sorted)
            )));
        }
        results.push(ComboResult {
            combination: sorted,
            score,
            report,
        });
    }
    results.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then(a.combination.len().cmp(&b.combination.len()))
            .then_with(|| a.combination.cmp(&b.combination))
    });
    Ok(results)
}
