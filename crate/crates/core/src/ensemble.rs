//! Ensemble caption selection: pick the best caption per proposal from M
//! model outputs by unique-concept count, then max unigram IDF.
//!
//! IDF documents are ground-truth sentences, smoothed as
//! `ln((D + 1) / (df + 1))` so unseen unigrams resolve to the finite
//! maximum `ln(D + 1)`.

use std::collections::HashMap;

use crate::concepts::{unique_concept_count, ConceptVocabulary};
use crate::corpus::{tokenize, Segment, VideoAnnotation};
use crate::error::{Error, Result};
use crate::metrics::{Prediction, PredictionSet};

/// Smoothed inverse document frequencies over a sentence corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    idf: HashMap<String, f64>,
    document_count: usize,
}

impl IdfTable {
    pub fn document_count(&self) -> usize {
        self.document_count
    }

    /// IDF of one token; unseen tokens get the maximum ln(D + 1).
    pub fn idf(&self, token: &str) -> f64 {
        self.idf
            .get(token)
            .copied()
            .unwrap_or_else(|| ((self.document_count + 1) as f64).ln())
    }
}

/// Build the IDF table from ground-truth sentences (one document per
/// sentence).
pub fn idf_table<'a, I>(annotations: I) -> Result<IdfTable>
where
    I: IntoIterator<Item = &'a VideoAnnotation>,
{
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut documents = 0usize;
    for ann in annotations {
        for event in &ann.events {
            documents += 1;
            let mut seen: Vec<String> = tokenize(&event.sentence);
            seen.sort_unstable();
            seen.dedup();
            for token in seen {
                *df.entry(token).or_insert(0) += 1;
            }
        }
    }
    if documents == 0 {
        return Err(Error::argument(
            "IDF table needs at least one ground-truth sentence".to_string(),
        ));
    }
    let d = (documents + 1) as f64;
    let idf = df
        .into_iter()
        .map(|(token, count)| (token, (d / (count + 1) as f64).ln()))
        .collect();
    Ok(IdfTable {
        idf,
        document_count: documents,
    })
}

/// Maximum IDF over a caption's tokens; 0 for an empty caption.
pub fn max_idf(caption: &str, table: &IdfTable) -> f64 {
    tokenize(caption)
        .iter()
        .map(|t| table.idf(t))
        .fold(0.0, f64::max)
}

/// The captions competing for one proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub proposal: Segment,
    /// (caption, source model index) in run order.
    pub candidates: Vec<(String, usize)>,
}

/// Pick the winning (caption, source model) of a pool.
///
/// Lexicographic key: unique concept count descending, max IDF descending,
/// caption string ascending, source model ascending.
pub fn select_caption(
    pool: &CandidatePool,
    vocab: &ConceptVocabulary,
    table: &IdfTable,
) -> Result<(String, usize)> {
    let mut best: Option<(usize, f64, &str, usize)> = None;
    for (caption, source) in &pool.candidates {
        let key = (
            unique_concept_count(caption, vocab),
            max_idf(caption, table),
            caption.as_str(),
            *source,
        );
        let wins = match &best {
            None => true,
            Some((count, idf, text, src)) => {
                key.0 > *count
                    || (key.0 == *count
                        && (key.1 > *idf
                            || (key.1 == *idf
                                && (key.2 < *text || (key.2 == *text && key.3 < *src)))))
            }
        };
        if wins {
            best = Some(key);
        }
    }
    best.map(|(_, _, caption, source)| (caption.to_string(), source))
        .ok_or_else(|| Error::argument("candidate pool is empty".to_string()))
}

/// Fuse M prediction runs into one by per-proposal caption selection.
///
/// All runs must cover the same videos with identical proposal segments in
/// identical order; the winner keeps its source run's score.
pub fn ensemble_predictions(
    runs: &[PredictionSet],
    vocab: &ConceptVocabulary,
    table: &IdfTable,
) -> Result<PredictionSet> {
    let first = runs
        .first()
        .ok_or_else(|| Error::argument("ensemble needs at least one run".to_string()))?;
    for (r, run) in runs.iter().enumerate().skip(1) {
        if run.results.keys().ne(first.results.keys()) {
            let missing = first
                .results
                .keys()
                .find(|k| !run.results.contains_key(*k))
                .or_else(|| run.results.keys().find(|k| !first.results.contains_key(*k)))
                .cloned()
                .unwrap_or_default();
            return Err(Error::validation(format!(
                "run {r} does not cover the same videos as run 0 (video {missing:?})"
            )));
        }
        for (video_id, preds) in &run.results {
            let base = &first.results[video_id];
            if preds.len() != base.len() {
                return Err(Error::validation(format!(
                    "video {video_id:?}: run {r} has {} proposals, run 0 has {}",
                    preds.len(),
                    base.len()
                )));
            }
            for (i, (p, b)) in preds.iter().zip(base).enumerate() {
                if p.segment != b.segment {
                    return Err(Error::validation(format!(
                        "video {video_id:?}: proposal {i} differs between run {r} and run 0"
                    )));
                }
            }
        }
    }

    let mut out = PredictionSet::default();
    for (video_id, base) in &first.results {
        let fused = base
            .iter()
            .enumerate()
            .map(|(i, proto)| {
                let pool = CandidatePool {
                    proposal: proto.segment,
                    candidates: runs
                        .iter()
                        .enumerate()
                        .map(|(src, run)| (run.results[video_id][i].caption.clone(), src))
                        .collect(),
                };
                let (caption, source) = select_caption(&pool, vocab, table)?;
                Ok(Prediction {
                    segment: proto.segment,
                    caption,
                    score: runs[source].results[video_id][i].score,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.results.insert(video_id.clone(), fused);
    }
    Ok(out)
}
