//! Dense-captioning evaluation: temporal IoU, proposal precision/recall,
//! corpus-level BLEU-4, vanilla CIDEr, and the threshold-averaged protocol.
//!
//! BLEU-4 is unsmoothed: clipped n-gram counts are pooled over the corpus
//! for n = 1..4, combined by geometric mean, and multiplied by the brevity
//! penalty exp(min(0, 1 - r/c)) where r sums each candidate's closest
//! reference length (ties resolved to the shorter reference). CIDEr uses
//! per-group document frequencies over the reference sets, idf =
//! ln(D / max(df, 1)), plain tf counts, cosine similarity averaged over
//! references and over n, scaled by 10.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Segment, VideoAnnotation};
use crate::error::{Error, Result};

/// One scored (segment, caption) prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub segment: Segment,
    pub caption: String,
    pub score: f64,
}

/// Per-video predictions; the unit scored by the evaluation harness.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub results: BTreeMap<String, Vec<Prediction>>,
}

#[derive(Serialize, Deserialize)]
struct RawPrediction {
    sentence: String,
    timestamp: [f64; 2],
    #[serde(default)]
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPredictionFile {
    version: String,
    results: BTreeMap<String, Vec<RawPrediction>>,
    external_data: serde_json::Map<String, serde_json::Value>,
}

impl PredictionSet {
    pub fn parse_json(text: &str) -> Result<Self> {
        let raw: RawPredictionFile =
            serde_json::from_str(text).map_err(|e| Error::from_json(&e, text))?;
        let mut results = BTreeMap::new();
        for (video_id, preds) in raw.results {
            let mut list = Vec::with_capacity(preds.len());
            for (idx, p) in preds.into_iter().enumerate() {
                let [s, e] = p.timestamp;
                if !s.is_finite() || !e.is_finite() || s > e {
                    return Err(Error::validation(format!(
                        "video {video_id:?}: prediction {idx} has invalid timestamp [{s}, {e}]"
                    )));
                }
                if !p.score.is_finite() {
                    return Err(Error::validation(format!(
                        "video {video_id:?}: prediction {idx} has non-finite score"
                    )));
                }
                list.push(Prediction {
                    segment: Segment { start: s, end: e },
                    caption: p.sentence,
                    score: p.score,
                });
            }
            results.insert(video_id, list);
        }
        Ok(PredictionSet { results })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw = RawPredictionFile {
            version: "VERSION 1.0".to_string(),
            results: self
                .results
                .iter()
                .map(|(vid, preds)| {
                    let raws = preds
                        .iter()
                        .map(|p| RawPrediction {
                            sentence: p.caption.clone(),
                            timestamp: [p.segment.start, p.segment.end],
                            score: p.score,
                        })
                        .collect();
                    (vid.clone(), raws)
                })
                .collect(),
            external_data: serde_json::Map::new(),
        };
        serde_json::to_string_pretty(&raw).expect("predictions serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Temporal intersection over union; 0 when the union has zero length.
pub fn tiou(a: &Segment, b: &Segment) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Proposal precision and recall at one tIoU threshold, without one-to-one
/// matching. Absent sides (no predictions / no ground truth) yield `None`.
pub fn proposal_pr(
    predictions: &[Segment],
    ground_truth: &[Segment],
    threshold: f64,
) -> Result<(Option<f64>, Option<f64>)> {
    check_threshold(threshold)?;
    let matched = |xs: &[Segment], ys: &[Segment]| {
        xs.iter()
            .filter(|x| ys.iter().any(|y| tiou(x, y) >= threshold))
            .count()
    };
    let precision = (!predictions.is_empty())
        .then(|| matched(predictions, ground_truth) as f64 / predictions.len() as f64);
    let recall = (!ground_truth.is_empty())
        .then(|| matched(ground_truth, predictions) as f64 / ground_truth.len() as f64);
    Ok((precision, recall))
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold.is_finite() && threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::argument(format!(
            "tIoU threshold must lie in (0,1], got {threshold}"
        )));
    }
    Ok(())
}

/// One candidate caption with its reference captions, tokenized.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionGroup {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level unsmoothed BLEU-4.
pub fn bleu4(corpus: &[CaptionGroup]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::argument("BLEU-4 needs at least one candidate".to_string()));
    }
    let mut numerator = [0u64; 4];
    let mut denominator = [0u64; 4];
    let mut candidate_len = 0u64;
    let mut reference_len = 0u64;

    for group in corpus {
        let c = group.candidate.len();
        candidate_len += c as u64;
        // closest reference length; ties go to the shorter reference
        let closest = group
            .references
            .iter()
            .map(|r| r.len())
            .min_by_key(|&rl| (rl.abs_diff(c), rl));
        reference_len += closest.unwrap_or(0) as u64;

        for n in 1..=4 {
            let cand = ngram_counts(&group.candidate, n);
            let mut max_ref: HashMap<&[String], u64> = HashMap::new();
            for r in &group.references {
                for (gram, count) in ngram_counts(r, n) {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(count);
                }
            }
            for (gram, count) in cand {
                numerator[n - 1] += count.min(max_ref.get(gram).copied().unwrap_or(0));
                denominator[n - 1] += count;
            }
        }
    }

    let mut log_sum = 0.0;
    for n in 0..4 {
        if numerator[n] == 0 || denominator[n] == 0 {
            return Ok(0.0);
        }
        log_sum += (numerator[n] as f64 / denominator[n] as f64).ln();
    }
    if candidate_len == 0 {
        return Ok(0.0);
    }
    let bp = (1.0 - reference_len as f64 / candidate_len as f64).min(0.0).exp();
    Ok(bp * (log_sum / 4.0).exp())
}

type NgramVec = HashMap<Vec<String>, f64>;

fn tfidf_vector(tokens: &[String], n: usize, df: &HashMap<Vec<String>, u64>, d: f64) -> NgramVec {
    let mut vec = NgramVec::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *vec.entry(gram.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    for (gram, tf) in vec.iter_mut() {
        let freq = df.get(gram).copied().unwrap_or(0).max(1) as f64;
        *tf *= (d / freq).ln();
    }
    vec
}

fn cosine(a: &NgramVec, b: &NgramVec) -> f64 {
    let norm = |v: &NgramVec| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .map(|(gram, x)| x * b.get(gram).copied().unwrap_or(0.0))
        .sum();
    dot / (na * nb)
}

/// Vanilla corpus-level CIDEr (tf-idf n-gram cosine, n = 1..4, scaled by 10).
pub fn cider(corpus: &[CaptionGroup]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::argument("CIDEr needs at least one candidate".to_string()));
    }
    let d = corpus.len() as f64;
    // document frequency per n: number of groups whose reference set
    // contains the n-gram
    let mut df: [HashMap<Vec<String>, u64>; 4] = Default::default();
    for group in corpus {
        for n in 1..=4 {
            let mut seen: Vec<&[String]> = Vec::new();
            for r in &group.references {
                if r.len() >= n {
                    for gram in r.windows(n) {
                        if !seen.contains(&gram) {
                            seen.push(gram);
                        }
                    }
                }
            }
            for gram in seen {
                *df[n - 1].entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
    }

    let mut total = 0.0;
    for group in corpus {
        let mut per_n_sum = 0.0;
        for n in 1..=4 {
            if group.references.is_empty() {
                continue;
            }
            let cand = tfidf_vector(&group.candidate, n, &df[n - 1], d);
            let mean: f64 = group
                .references
                .iter()
                .map(|r| cosine(&cand, &tfidf_vector(r, n, &df[n - 1], d)))
                .sum::<f64>()
                / group.references.len() as f64;
            per_n_sum += mean;
        }
        total += 10.0 * per_n_sum / 4.0;
    }
    Ok(total / d)
}

/// Scores of one evaluation threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScores {
    pub threshold: f64,
    pub bleu4: f64,
    pub cider: f64,
    pub proposal_precision: Option<f64>,
    pub proposal_recall: Option<f64>,
}

/// Dense-captioning evaluation report: per-threshold scores plus their
/// arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_threshold: Vec<ThresholdScores>,
    pub bleu4_mean: f64,
    pub cider_mean: f64,
    pub proposal_precision_mean: Option<f64>,
    pub proposal_recall_mean: Option<f64>,
}

/// The standard evaluation thresholds {0.3, 0.5, 0.7, 0.9}.
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

impl EvalReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("report serialize");
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::from_json(&e, &text))
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Threshold-averaged dense-captioning evaluation.
///
/// At each threshold every prediction is scored against all ground-truth
/// events of its video with tIoU at or above the threshold (many-to-many);
/// unmatched predictions are scored against a placeholder empty reference.
/// Proposal precision/recall pool predictions and events over all videos.
pub fn dense_eval(
    predictions: &PredictionSet,
    ground_truth: &BTreeMap<String, VideoAnnotation>,
    thresholds: &[f64],
) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::argument("threshold list must be nonempty".to_string()));
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    for video_id in predictions.results.keys() {
        if !ground_truth.contains_key(video_id) {
            return Err(Error::validation(format!(
                "predictions reference video {video_id:?} absent from ground truth"
            )));
        }
    }

    let gt_event_total: usize = ground_truth.values().map(|a| a.events.len()).sum();
    let pred_total: usize = predictions.results.values().map(Vec::len).sum();

    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut corpus = Vec::with_capacity(pred_total);
        let mut pred_matched = 0usize;
        for (video_id, preds) in &predictions.results {
            let annotation = &ground_truth[video_id];
            for pred in preds {
                let references: Vec<Vec<String>> = annotation
                    .events
                    .iter()
                    .filter(|ev| tiou(&pred.segment, &ev.segment) >= t)
                    .map(|ev| tokenize(&ev.sentence))
                    .collect();
                if references.is_empty() {
                    corpus.push(CaptionGroup {
                        candidate: tokenize(&pred.caption),
                        references: vec![Vec::new()],
                    });
                } else {
                    pred_matched += 1;
                    corpus.push(CaptionGroup {
                        candidate: tokenize(&pred.caption),
                        references,
                    });
                }
            }
        }
        let mut gt_matched = 0usize;
        for (video_id, annotation) in ground_truth {
            let preds = predictions.results.get(video_id);
            for ev in &annotation.events {
                let hit = preds.is_some_and(|ps| {
                    ps.iter().any(|p| tiou(&p.segment, &ev.segment) >= t)
                });
                if hit {
                    gt_matched += 1;
                }
            }
        }
        let (b, c) = if corpus.is_empty() {
            (0.0, 0.0)
        } else {
            (bleu4(&corpus)?, cider(&corpus)?)
        };
        per_threshold.push(ThresholdScores {
            threshold: t,
            bleu4: b,
            cider: c,
            proposal_precision: (pred_total > 0).then(|| pred_matched as f64 / pred_total as f64),
            proposal_recall: (gt_event_total > 0)
                .then(|| gt_matched as f64 / gt_event_total as f64),
        });
    }

    let n = per_threshold.len() as f64;
    Ok(EvalReport {
        bleu4_mean: per_threshold.iter().map(|s| s.bleu4).sum::<f64>() / n,
        cider_mean: per_threshold.iter().map(|s| s.cider).sum::<f64>() / n,
        proposal_precision_mean: mean_opt(per_threshold.iter().map(|s| s.proposal_precision)),
        proposal_recall_mean: mean_opt(per_threshold.iter().map(|s| s.proposal_recall)),
        per_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Event;
    use proptest::prelude::*;

    fn seg(start: f64, end: f64) -> Segment {
        Segment { start, end }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|w| w.to_string()).collect()
    }

    fn group(candidate: &str, references: &[&str]) -> CaptionGroup {
        CaptionGroup {
            candidate: toks(candidate),
            references: references.iter().map(|r| toks(r)).collect(),
        }
    }

    #[test]
    fn tiou_fixtures() {
        assert_eq!(tiou(&seg(0.0, 10.0), &seg(0.0, 10.0)), 1.0);
        assert!((tiou(&seg(0.0, 10.0), &seg(5.0, 15.0)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(tiou(&seg(0.0, 1.0), &seg(2.0, 3.0)), 0.0);
        assert_eq!(tiou(&seg(1.0, 1.0), &seg(1.0, 1.0)), 0.0);
    }

    #[test]
    fn tiou_is_symmetric_and_bounded() {
        let pairs = [
            (seg(0.0, 4.0), seg(2.0, 9.0)),
            (seg(1.0, 2.0), seg(1.5, 1.7)),
            (seg(0.0, 1.0), seg(1.0, 2.0)),
        ];
        for (a, b) in pairs {
            let x = tiou(&a, &b);
            assert_eq!(x, tiou(&b, &a));
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn proposal_pr_fixtures() {
        let (p, r) = proposal_pr(&[seg(0.0, 10.0)], &[seg(0.0, 10.0)], 0.5).unwrap();
        assert_eq!((p, r), (Some(1.0), Some(1.0)));

        // tIoUs 0.5 and 0.4 against the single ground truth
        let (p, r) =
            proposal_pr(&[seg(0.0, 5.0), seg(6.0, 10.0)], &[seg(0.0, 10.0)], 0.5).unwrap();
        assert_eq!((p, r), (Some(0.5), Some(1.0)));

        let (p, r) = proposal_pr(&[], &[seg(0.0, 1.0)], 0.5).unwrap();
        assert_eq!((p, r), (None, Some(0.0)));
        let (p, r) = proposal_pr(&[seg(0.0, 1.0)], &[], 0.5).unwrap();
        assert_eq!((p, r), (Some(0.0), None));

        assert!(proposal_pr(&[], &[], 0.0).is_err());
        assert!(proposal_pr(&[], &[], 1.5).is_err());
    }

    #[test]
    fn duplicate_predictions_do_not_change_recall() {
        let gt = [seg(0.0, 4.0), seg(6.0, 9.0)];
        let preds = [seg(0.0, 4.0)];
        let doubled = [seg(0.0, 4.0), seg(0.0, 4.0), seg(0.0, 4.0)];
        let (_, r1) = proposal_pr(&preds, &gt, 0.5).unwrap();
        let (_, r2) = proposal_pr(&doubled, &gt, 0.5).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn bleu_fixtures() {
        // identity
        let score = bleu4(&[group("a man runs down the hill", &["a man runs down the hill"])])
            .unwrap();
        assert!((score - 1.0).abs() < 1e-6);

        // brevity penalty e^{1 - 5/4}
        let score = bleu4(&[group("a b c d", &["a b c d e"])]).unwrap();
        assert!((score - 0.778_800_783_071_404_9).abs() < 1e-6);

        // no shared 4-gram zeroes the corpus
        let score = bleu4(&[group("a b c d e", &["b a d c e"])]).unwrap();
        assert_eq!(score, 0.0);

        // pooled precisions 8/9, 6/7, 4/5, 2/3 with BP 1
        let score = bleu4(&[
            group("a b c d e", &["a b c d f"]),
            group("x y z w", &["x y z w"]),
        ])
        .unwrap();
        assert!((score - 0.798_407_952_309_893_1).abs() < 1e-6);

        // clipping caps repeated candidate n-grams at the reference count
        let score = bleu4(&[group(
            "the the the cat sat on the mat",
            &["the cat sat on the mat"],
        )])
        .unwrap();
        assert!((score - 0.680_374_933_317_120_2).abs() < 1e-6);

        // closest-length tie resolves to the shorter reference: r = 3 < c
        let score = bleu4(&[group("a b c d", &["a b c d e", "a b c"])]).unwrap();
        assert!((score - 1.0).abs() < 1e-6);

        assert!(bleu4(&[]).is_err());
    }

    #[test]
    fn bleu_is_permutation_invariant() {
        let a = group("a b c d e", &["a b c d f"]);
        let b = group("x y z w", &["x y z w"]);
        let fwd = bleu4(&[a.clone(), b.clone()]).unwrap();
        let rev = bleu4(&[b, a]).unwrap();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn cider_fixtures() {
        // identical pair, n-grams unique per group
        let score = cider(&[
            group("a b c d", &["a b c d"]),
            group("e f g h", &["e f g h"]),
        ])
        .unwrap();
        assert!((score - 10.0).abs() < 1e-6);

        // candidates orthogonal to their references
        let score = cider(&[group("x y", &["a b"]), group("c d", &["e f"])]).unwrap();
        assert_eq!(score, 0.0);

        // "a" occurs in every group: idf 0 contributes nothing, and
        // lengths below n give zero-norm vectors scoring 0
        let score = cider(&[group("a b", &["a b"]), group("a c", &["a c"])]).unwrap();
        assert!((score - 5.0).abs() < 1e-6);

        // hand-computed partial overlap
        let score = cider(&[group("a b c d", &["a b c e"]), group("f", &["f"])]).unwrap();
        assert!((score - 3.645_833_333_333_333).abs() < 1e-6);

        // mean over references
        let score = cider(&[group("a b", &["a b", "a c"]), group("d e", &["d e"])]).unwrap();
        assert!((score - 4.0625).abs() < 1e-6);

        // empty candidate scores zero but does not fail
        let score = cider(&[group("", &["a"]), group("b", &["b"])]).unwrap();
        assert!((score - 1.25).abs() < 1e-6);

        assert!(cider(&[]).is_err());
    }

    #[test]
    fn prediction_json_round_trip() {
        let text = r#"{
            "version": "VERSION 1.0",
            "results": {
                "v_a": [
                    {"sentence": "a man runs", "timestamp": [0.0, 5.5], "score": 0.9},
                    {"sentence": "a man rests", "timestamp": [6.0, 9.0], "score": 0.4}
                ]
            },
            "external_data": {}
        }"#;
        let preds = PredictionSet::parse_json(text).unwrap();
        assert_eq!(preds.results["v_a"].len(), 2);
        assert_eq!(preds.results["v_a"][0].caption, "a man runs");
        let back = PredictionSet::parse_json(&preds.to_json()).unwrap();
        assert_eq!(back, preds);
    }

    #[test]
    fn prediction_json_rejects_bad_timestamps() {
        let text = r#"{"version":"VERSION 1.0","results":{"v":[{"sentence":"x","timestamp":[5.0,1.0],"score":0.0}]},"external_data":{}}"#;
        assert!(matches!(PredictionSet::parse_json(text), Err(Error::Validation(_))));
    }

    fn annotation(video_id: &str, duration: f64, events: &[(f64, f64, &str)]) -> VideoAnnotation {
        VideoAnnotation {
            video_id: video_id.to_string(),
            duration,
            events: events
                .iter()
                .map(|&(s, e, sentence)| Event {
                    segment: seg(s, e),
                    sentence: sentence.to_string(),
                })
                .collect(),
        }
    }

    fn gt_fixture() -> BTreeMap<String, VideoAnnotation> {
        [
            annotation(
                "v_a",
                10.0,
                &[(0.0, 4.0, "a man runs very fast"), (5.0, 9.0, "the man rests on grass")],
            ),
            annotation("v_b", 8.0, &[(0.0, 8.0, "a dog jumps quite high")]),
        ]
        .into_iter()
        .map(|a| (a.video_id.clone(), a))
        .collect()
    }

    fn identity_predictions(gt: &BTreeMap<String, VideoAnnotation>) -> PredictionSet {
        let mut preds = PredictionSet::default();
        for (vid, ann) in gt {
            preds.results.insert(
                vid.clone(),
                ann.events
                    .iter()
                    .map(|ev| Prediction {
                        segment: ev.segment,
                        caption: ev.sentence.clone(),
                        score: 1.0,
                    })
                    .collect(),
            );
        }
        preds
    }

    #[test]
    fn dense_eval_identity() {
        let gt = gt_fixture();
        let preds = identity_predictions(&gt);
        let report = dense_eval(&preds, &gt, &DEFAULT_THRESHOLDS).unwrap();
        for scores in &report.per_threshold {
            assert!((scores.bleu4 - 1.0).abs() < 1e-12);
            assert!((scores.cider - 10.0).abs() < 1e-9);
            assert_eq!(scores.proposal_precision, Some(1.0));
            assert_eq!(scores.proposal_recall, Some(1.0));
        }
        assert!((report.bleu4_mean - 1.0).abs() < 1e-12);
        assert_eq!(report.proposal_precision_mean, Some(1.0));
        assert_eq!(report.proposal_recall_mean, Some(1.0));
    }

    #[test]
    fn dense_eval_empty_predictions() {
        let gt = gt_fixture();
        let report = dense_eval(&PredictionSet::default(), &gt, &DEFAULT_THRESHOLDS).unwrap();
        for scores in &report.per_threshold {
            assert_eq!(scores.bleu4, 0.0);
            assert_eq!(scores.cider, 0.0);
            assert_eq!(scores.proposal_precision, None);
            assert_eq!(scores.proposal_recall, Some(0.0));
        }
        assert_eq!(report.proposal_precision_mean, None);
        assert_eq!(report.proposal_recall_mean, Some(0.0));
    }

    #[test]
    fn dense_eval_rejects_unknown_video() {
        let gt = gt_fixture();
        let mut preds = PredictionSet::default();
        preds.results.insert(
            "v_missing".to_string(),
            vec![Prediction {
                segment: seg(0.0, 1.0),
                caption: "x y z w".to_string(),
                score: 0.0,
            }],
        );
        assert!(matches!(
            dense_eval(&preds, &gt, &DEFAULT_THRESHOLDS),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn dense_eval_partial_overlap() {
        // v_a: prediction covers 60% of its event; v_b: exact match
        let gt: BTreeMap<String, VideoAnnotation> = [
            annotation("v_a", 10.0, &[(0.0, 10.0, "a man runs fast")]),
            annotation("v_b", 8.0, &[(0.0, 8.0, "a dog jumps high")]),
        ]
        .into_iter()
        .map(|a| (a.video_id.clone(), a))
        .collect();
        let mut preds = PredictionSet::default();
        preds.results.insert(
            "v_a".to_string(),
            vec![Prediction {
                segment: seg(0.0, 6.0),
                caption: "a man runs fast".to_string(),
                score: 0.8,
            }],
        );
        preds.results.insert(
            "v_b".to_string(),
            vec![Prediction {
                segment: seg(0.0, 8.0),
                caption: "a dog jumps high".to_string(),
                score: 0.9,
            }],
        );

        let report = dense_eval(&preds, &gt, &[0.5, 0.7]).unwrap();
        let at_05 = &report.per_threshold[0];
        assert!((at_05.bleu4 - 1.0).abs() < 1e-12);
        assert!((at_05.cider - 10.0).abs() < 1e-9);
        assert_eq!(at_05.proposal_precision, Some(1.0));
        assert_eq!(at_05.proposal_recall, Some(1.0));

        // at 0.7 only v_b matches; v_a scores against the empty placeholder
        let at_07 = &report.per_threshold[1];
        assert!((at_07.bleu4 - 0.5).abs() < 1e-12);
        assert!((at_07.cider - 5.0).abs() < 1e-9);
        assert_eq!(at_07.proposal_precision, Some(0.5));
        assert_eq!(at_07.proposal_recall, Some(0.5));

        // pointwise-larger thresholds do not increase the averages here
        assert!(report.per_threshold[0].bleu4 >= report.per_threshold[1].bleu4);
        assert!(report.per_threshold[0].cider >= report.per_threshold[1].cider);
    }

    proptest! {
        #[test]
        fn bleu_bounded_and_self_reference_monotone(seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let words = ["a", "b", "c", "d", "e", "f"];
            let sentence = |rng: &mut crate::rng::SplitMix64| -> Vec<String> {
                let len = 4 + rng.next_below(4) as usize;
                (0..len).map(|_| words[rng.next_below(6) as usize].to_string()).collect()
            };
            let corpus: Vec<CaptionGroup> = (0..3)
                .map(|_| CaptionGroup {
                    candidate: sentence(&mut rng),
                    references: vec![sentence(&mut rng)],
                })
                .collect();
            let base = bleu4(&corpus).unwrap();
            prop_assert!((0.0..=1.0).contains(&base));

            // adding the candidate itself as an extra reference never hurts
            let boosted: Vec<CaptionGroup> = corpus
                .iter()
                .map(|g| {
                    let mut refs = g.references.clone();
                    refs.push(g.candidate.clone());
                    CaptionGroup { candidate: g.candidate.clone(), references: refs }
                })
                .collect();
            let improved = bleu4(&boosted).unwrap();
            prop_assert!(improved >= base - 1e-12);
        }

        #[test]
        fn cider_permutation_invariant(seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let words = ["a", "b", "c", "d"];
            let sentence = |rng: &mut crate::rng::SplitMix64| -> Vec<String> {
                let len = 1 + rng.next_below(5) as usize;
                (0..len).map(|_| words[rng.next_below(4) as usize].to_string()).collect()
            };
            let mut corpus: Vec<CaptionGroup> = (0..4)
                .map(|_| CaptionGroup {
                    candidate: sentence(&mut rng),
                    references: vec![sentence(&mut rng), sentence(&mut rng)],
                })
                .collect();
            let fwd = cider(&corpus).unwrap();
            corpus.reverse();
            let rev = cider(&corpus).unwrap();
            prop_assert!((fwd - rev).abs() < 1e-12);
        }
    }
}
