//! Pretraining objective: action cross-entropy, temporal region
//! cross-entropy, and asymmetric semantic loss, with analytic gradients,
//! plus a deterministic Adam trainer for linear probe heads.
//!
//! The combined loss is `L = L_action + alpha * L_temporal + beta *
//! L_semantic`. Heads are linear probes over fixed clip features: the
//! action and semantic heads read the local clip feature (dimension D),
//! the temporal head reads local and global features concatenated (2D).
//! Background clips carry no action label and contribute no action term.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concepts::ConceptTarget;
use crate::corpus::{ClipFeatureSet, Segment};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

const LOG_FLOOR: f64 = 1e-12;

/// Parameters of the asymmetric multi-label loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricLossParams {
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    pub margin: f64,
}

impl Default for AsymmetricLossParams {
    fn default() -> Self {
        AsymmetricLossParams {
            gamma_pos: 0.0,
            gamma_neg: 4.0,
            margin: 0.05,
        }
    }
}

impl AsymmetricLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_pos.is_finite() && self.gamma_pos >= 0.0) {
            return Err(Error::argument(format!(
                "gamma_pos must be finite and >= 0, got {}",
                self.gamma_pos
            )));
        }
        if !(self.gamma_neg.is_finite() && self.gamma_neg >= 0.0) {
            return Err(Error::argument(format!(
                "gamma_neg must be finite and >= 0, got {}",
                self.gamma_neg
            )));
        }
        if !(self.margin.is_finite() && (0.0..1.0).contains(&self.margin)) {
            return Err(Error::argument(format!(
                "margin must lie in [0,1), got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

/// Task weights alpha (temporal) and beta (semantic) of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            alpha: 1.0,
            beta: 0.1,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::argument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One linear map plus bias, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LinearHead {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let row = &self.weights[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[r]
            })
            .collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.weights.len() != self.rows * self.cols || self.bias.len() != self.rows {
            return Err(Error::validation(format!(
                "{name} head: weights/bias sizes inconsistent with {}x{}",
                self.rows, self.cols
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("{name} head contains non-finite values")));
        }
        Ok(())
    }

    /// grad_W += scale * (g outer x); grad_b += scale * g
    fn accumulate(&mut self, g: &[f64], x: &[f64], scale: f64) {
        for (r, &gr) in g.iter().enumerate() {
            let row = &mut self.weights[r * self.cols..(r + 1) * self.cols];
            for (w, &xv) in row.iter_mut().zip(x) {
                *w += scale * gr * xv;
            }
            self.bias[r] += scale * gr;
        }
    }

    fn for_each_param(&mut self, mut f: impl FnMut(&mut f64)) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(&mut f);
    }
}

/// The three probe heads trained by the combined objective.
///
/// Also reused as the gradient carrier: `combined_objective` returns its
/// gradients in a value of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskHeads {
    /// Local clip feature dimension D.
    pub dim: usize,
    /// Action classification head, A x D.
    pub action: LinearHead,
    /// Temporal region head over local ⊕ global input, 2 x 2D.
    pub temporal: LinearHead,
    /// Semantic concept head, C x D.
    pub semantic: LinearHead,
}

impl MultiTaskHeads {
    pub fn zeros(dim: usize, action_classes: usize, concepts: usize) -> Self {
        MultiTaskHeads {
            dim,
            action: LinearHead::zeros(action_classes, dim),
            temporal: LinearHead::zeros(2, 2 * dim),
            semantic: LinearHead::zeros(concepts, dim),
        }
    }

    pub fn action_classes(&self) -> usize {
        self.action.rows
    }

    pub fn concepts(&self) -> usize {
        self.semantic.rows
    }

    pub fn validate(&self) -> Result<()> {
        self.action.validate("action")?;
        self.temporal.validate("temporal")?;
        self.semantic.validate("semantic")?;
        if self.action.cols != self.dim
            || self.semantic.cols != self.dim
            || self.temporal.cols != 2 * self.dim
            || self.temporal.rows != 2
        {
            return Err(Error::validation(format!(
                "head shapes inconsistent with feature dim {}",
                self.dim
            )));
        }
        Ok(())
    }

    fn zeros_like(&self) -> Self {
        MultiTaskHeads::zeros(self.dim, self.action.rows, self.semantic.rows)
    }

    fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.action.for_each_param(&mut f);
        self.temporal.for_each_param(&mut f);
        self.semantic.for_each_param(&mut f);
    }

    /// Pairwise parameter visit in a fixed order; all four values must have
    /// identical shapes.
    fn adam_step(
        &mut self,
        grad: &MultiTaskHeads,
        m: &mut MultiTaskHeads,
        v: &mut MultiTaskHeads,
        t: u64,
        config: &TrainConfig,
    ) {
        let b1 = config.adam_beta1;
        let b2 = config.adam_beta2;
        let corr1 = 1.0 - b1.powi(t as i32);
        let corr2 = 1.0 - b2.powi(t as i32);
        let heads = [
            (&mut self.action, &grad.action, &mut m.action, &mut v.action),
            (&mut self.temporal, &grad.temporal, &mut m.temporal, &mut v.temporal),
            (&mut self.semantic, &grad.semantic, &mut m.semantic, &mut v.semantic),
        ];
        for (theta, g, ms, vs) in heads {
            for i in 0..theta.weights.len() {
                adam_update(
                    &mut theta.weights[i],
                    g.weights[i],
                    &mut ms.weights[i],
                    &mut vs.weights[i],
                    b1,
                    b2,
                    corr1,
                    corr2,
                    config,
                );
            }
            for i in 0..theta.bias.len() {
                adam_update(
                    &mut theta.bias[i],
                    g.bias[i],
                    &mut ms.bias[i],
                    &mut vs.bias[i],
                    b1,
                    b2,
                    corr1,
                    corr2,
                    config,
                );
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("heads serialize");
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let heads: MultiTaskHeads =
            serde_json::from_str(&text).map_err(|e| Error::from_json(&e, &text))?;
        heads.validate()?;
        Ok(heads)
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    theta: &mut f64,
    g: f64,
    m: &mut f64,
    v: &mut f64,
    b1: f64,
    b2: f64,
    corr1: f64,
    corr2: f64,
    config: &TrainConfig,
) {
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    let m_hat = *m / corr1;
    let v_hat = *v / corr2;
    *theta -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
}

/// Foreground/background temporal region classes; the class index doubles
/// as the cross-entropy label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalLabel {
    Background,
    Foreground,
}

impl TemporalLabel {
    pub fn index(&self) -> usize {
        match self {
            TemporalLabel::Background => 0,
            TemporalLabel::Foreground => 1,
        }
    }
}

/// One training example: local/global features plus all three targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipExample {
    pub local: Vec<f64>,
    pub global: Vec<f64>,
    /// Absent for background clips (and for videos without an action label).
    pub action_class: Option<usize>,
    pub temporal_label: TemporalLabel,
    pub semantic_target: ConceptTarget,
}

/// Trainer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 40,
            batch_size: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::argument("batch size must be at least 1".to_string()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return Err(Error::argument(format!("{name} must lie in [0,1), got {b}")));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(Error::argument(format!(
                "adam_epsilon must be positive, got {}",
                self.adam_epsilon
            )));
        }
        Ok(())
    }
}

/// Element-wise maximum over all clip vectors of a video.
pub fn global_feature(clips: &ClipFeatureSet) -> Result<Vec<f64>> {
    let first = clips
        .clips
        .first()
        .ok_or_else(|| Error::argument(format!("video {:?} has no clips", clips.video_id)))?;
    let mut out: Vec<f64> = first.vector.iter().map(|&v| v as f64).collect();
    for clip in &clips.clips[1..] {
        for (acc, &v) in out.iter_mut().zip(&clip.vector) {
            *acc = acc.max(v as f64);
        }
    }
    Ok(out)
}

/// Merge segments into a disjoint union and return the total overlap with
/// `clip`.
fn union_overlap(clip: &Segment, events: &[Segment]) -> f64 {
    let mut spans: Vec<(f64, f64)> = events.iter().map(|s| (s.start, s.end)).collect();
    spans.sort_by(|a, b| a.partial_cmp(b).expect("finite segment endpoints"));
    let mut total = 0.0;
    let mut cursor = f64::NEG_INFINITY;
    for (s, e) in spans {
        let s = s.max(cursor);
        if e > s {
            total += (e.min(clip.end) - s.max(clip.start)).max(0.0);
            cursor = e;
        }
    }
    total
}

/// Label a clip foreground iff its overlap with the union of the event
/// segments covers at least `threshold` of the clip length.
pub fn temporal_region_label(
    clip: &Segment,
    events: &[Segment],
    threshold: f64,
) -> Result<TemporalLabel> {
    if clip.length() <= 0.0 {
        return Err(Error::argument(format!(
            "clip [{}, {}] has zero length",
            clip.start, clip.end
        )));
    }
    if !(threshold.is_finite() && threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::argument(format!(
            "foreground threshold must lie in (0,1], got {threshold}"
        )));
    }
    let fraction = union_overlap(clip, events) / clip.length();
    Ok(if fraction >= threshold {
        TemporalLabel::Foreground
    } else {
        TemporalLabel::Background
    })
}

/// Numerically stable sigmoid.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softmax cross-entropy with max-shift stabilization.
///
/// Returns the loss and its gradient with respect to the logits,
/// `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::argument(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let loss = max + sum.ln() - logits[label];
    let mut grad: Vec<f64> = exp.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss.max(0.0), grad))
}

/// Per-label asymmetric loss and its derivative with respect to the logit.
///
/// p = sigmoid(z), p_m = max(p - margin, 0);
/// positive: -(1-p)^g+ * ln(max(p, floor));
/// negative: -p_m^g- * ln(max(1-p_m, floor)).
/// Gradients flow through the focusing factors; the clamp region (p <=
/// margin on negatives) and the log floor contribute zero gradient.
fn asymmetric_term(z: f64, positive: bool, params: &AsymmetricLossParams) -> (f64, f64) {
    let p = sigmoid(z);
    let dp_dz = p * (1.0 - p);
    if positive {
        let g = params.gamma_pos;
        let focus = (1.0 - p).powf(g);
        let log_p = p.max(LOG_FLOOR).ln();
        let loss = -focus * log_p;
        let mut dl_dp = 0.0;
        if g > 0.0 {
            dl_dp += g * (1.0 - p).powf(g - 1.0) * log_p;
        }
        if p > LOG_FLOOR {
            dl_dp -= focus / p;
        }
        (loss, dl_dp * dp_dz)
    } else {
        let pm = (p - params.margin).max(0.0);
        if pm <= 0.0 {
            return (0.0, 0.0);
        }
        let g = params.gamma_neg;
        let focus = pm.powf(g);
        let q = 1.0 - pm;
        let log_q = q.max(LOG_FLOOR).ln();
        let loss = -focus * log_q;
        let mut dl_dpm = 0.0;
        if g > 0.0 {
            dl_dpm -= g * pm.powf(g - 1.0) * log_q;
        }
        if q > LOG_FLOOR {
            dl_dpm += focus / q;
        }
        (loss, dl_dpm * dp_dz)
    }
}

/// Asymmetric multi-label loss, averaged over labels, with the exact
/// gradient with respect to the logits.
pub fn asymmetric_loss(
    logits: &[f64],
    target: &ConceptTarget,
    params: &AsymmetricLossParams,
) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    if logits.len() != target.len() {
        return Err(Error::argument(format!(
            "logit count {} does not match target length {}",
            logits.len(),
            target.len()
        )));
    }
    if logits.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let scale = 1.0 / logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (i, (&z, &y)) in logits.iter().zip(target.bits()).enumerate() {
        let (l, g) = asymmetric_term(z, y, params);
        loss += scale * l;
        grad[i] = scale * g;
    }
    Ok((loss, grad))
}

/// Combined loss of one example and its gradients with respect to every
/// head parameter.
///
/// Background examples (no action label) contribute no action term; their
/// action-head gradient block is zero.
pub fn combined_objective(
    example: &ClipExample,
    heads: &MultiTaskHeads,
    weights: &ObjectiveWeights,
    asl: &AsymmetricLossParams,
) -> Result<(f64, MultiTaskHeads)> {
    weights.validate()?;
    let d = heads.dim;
    if example.local.len() != d || example.global.len() != d {
        return Err(Error::argument(format!(
            "example feature dims {}/{} do not match head dim {d}",
            example.local.len(),
            example.global.len()
        )));
    }
    if example.semantic_target.len() != heads.semantic.rows {
        return Err(Error::argument(format!(
            "semantic target length {} does not match concept count {}",
            example.semantic_target.len(),
            heads.semantic.rows
        )));
    }
    let mut grads = heads.zeros_like();
    let mut total = 0.0;

    if let Some(class) = example.action_class {
        if class >= heads.action.rows {
            return Err(Error::argument(format!(
                "action class {class} out of range for {} classes",
                heads.action.rows
            )));
        }
        let logits = heads.action.forward(&example.local);
        let (loss, grad) = softmax_cross_entropy(&logits, class)?;
        grads.action.accumulate(&grad, &example.local, 1.0);
        total += loss;
    }

    let mut joint = Vec::with_capacity(2 * d);
    joint.extend_from_slice(&example.local);
    joint.extend_from_slice(&example.global);
    let logits = heads.temporal.forward(&joint);
    let (loss, grad) = softmax_cross_entropy(&logits, example.temporal_label.index())?;
    grads.temporal.accumulate(&grad, &joint, weights.alpha);
    total += weights.alpha * loss;

    let logits = heads.semantic.forward(&example.local);
    let (loss, grad) = asymmetric_loss(&logits, &example.semantic_target, asl)?;
    grads.semantic.accumulate(&grad, &example.local, weights.beta);
    total += weights.beta * loss;

    Ok((total, grads))
}

fn check_examples(examples: &[ClipExample]) -> Result<(usize, usize, usize)> {
    let first = examples
        .first()
        .ok_or_else(|| Error::argument("example set is empty".to_string()))?;
    let d = first.local.len();
    let c = first.semantic_target.len();
    for (i, ex) in examples.iter().enumerate() {
        if ex.local.len() != d || ex.global.len() != d || ex.semantic_target.len() != c {
            return Err(Error::argument(format!(
                "example {i} has inconsistent dimensions"
            )));
        }
        if ex.local.iter().chain(&ex.global).any(|v| !v.is_finite()) {
            return Err(Error::argument(format!("example {i} has non-finite features")));
        }
    }
    // the action head needs at least two classes even when unused
    let classes = examples
        .iter()
        .filter_map(|ex| ex.action_class)
        .max()
        .map_or(2, |m| (m + 1).max(2));
    Ok((d, classes, c))
}

/// Train zero-initialized heads with Adam, shuffling example order each
/// epoch with the seeded generator. Returns the heads and the per-epoch
/// mean loss history.
pub fn train_heads(
    examples: &[ClipExample],
    config: &TrainConfig,
    weights: &ObjectiveWeights,
    asl: &AsymmetricLossParams,
) -> Result<(MultiTaskHeads, Vec<f64>)> {
    config.validate()?;
    weights.validate()?;
    asl.validate()?;
    let (dim, classes, concepts) = check_examples(examples)?;
    let mut heads = MultiTaskHeads::zeros(dim, classes, concepts);
    let mut m = heads.zeros_like();
    let mut v = heads.zeros_like();
    let mut t: u64 = 0;
    let mut rng = SplitMix64::new(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = heads.zeros_like();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (loss, g) = combined_objective(&examples[idx], &heads, weights, asl)?;
                batch_loss += loss;
                accumulate_heads(&mut grad, &g);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.for_each_param_mut(|p| *p *= scale);
            epoch_loss += batch_loss;
            t += 1;
            heads.adam_step(&grad, &mut m, &mut v, t, config);
        }
        history.push(epoch_loss / examples.len() as f64);
    }
    Ok((heads, history))
}

fn accumulate_heads(acc: &mut MultiTaskHeads, g: &MultiTaskHeads) {
    for (a, b) in [
        (&mut acc.action, &g.action),
        (&mut acc.temporal, &g.temporal),
        (&mut acc.semantic, &g.semantic),
    ] {
        for (x, y) in a.weights.iter_mut().zip(&b.weights) {
            *x += y;
        }
        for (x, y) in a.bias.iter_mut().zip(&b.bias) {
            *x += y;
        }
    }
}

/// Probe quality on a fixed example set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Accuracy over examples carrying an action label; absent when none do.
    pub action_accuracy: Option<f64>,
    pub temporal_accuracy: f64,
    /// Mean average precision over concepts with at least one positive;
    /// absent when no concept has a positive example.
    pub semantic_map: Option<f64>,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Average precision of `scores` against binary labels; ranking is by
/// score descending with ties broken by ascending example index.
fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Evaluate heads on a fixed example set: action accuracy (labelled
/// examples only), temporal accuracy, and semantic mean average precision.
pub fn evaluate_heads(heads: &MultiTaskHeads, examples: &[ClipExample]) -> Result<ProbeReport> {
    heads.validate()?;
    check_examples(examples)?;
    if examples[0].local.len() != heads.dim {
        return Err(Error::argument(format!(
            "example dim {} does not match head dim {}",
            examples[0].local.len(),
            heads.dim
        )));
    }
    if examples[0].semantic_target.len() != heads.semantic.rows {
        return Err(Error::argument(format!(
            "semantic target length {} does not match concept count {}",
            examples[0].semantic_target.len(),
            heads.semantic.rows
        )));
    }

    let mut action_hits = 0usize;
    let mut action_total = 0usize;
    let mut temporal_hits = 0usize;
    let concepts = heads.semantic.rows;
    let mut scores: Vec<Vec<f64>> = vec![Vec::with_capacity(examples.len()); concepts];
    let mut labels: Vec<Vec<bool>> = vec![Vec::with_capacity(examples.len()); concepts];

    for ex in examples {
        if let Some(class) = ex.action_class {
            action_total += 1;
            if argmax(&heads.action.forward(&ex.local)) == class {
                action_hits += 1;
            }
        }
        let mut joint = Vec::with_capacity(2 * heads.dim);
        joint.extend_from_slice(&ex.local);
        joint.extend_from_slice(&ex.global);
        if argmax(&heads.temporal.forward(&joint)) == ex.temporal_label.index() {
            temporal_hits += 1;
        }
        let logits = heads.semantic.forward(&ex.local);
        for (j, (&z, &y)) in logits.iter().zip(ex.semantic_target.bits()).enumerate() {
            scores[j].push(sigmoid(z));
            labels[j].push(y);
        }
    }

    let aps: Vec<f64> = (0..concepts)
        .filter_map(|j| average_precision(&scores[j], &labels[j]))
        .collect();
    Ok(ProbeReport {
        action_accuracy: (action_total > 0).then(|| action_hits as f64 / action_total as f64),
        temporal_accuracy: temporal_hits as f64 / examples.len() as f64,
        semantic_map: (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::ConceptTarget;
    use crate::corpus::Clip;

    fn target(bits: &[bool]) -> ConceptTarget {
        ConceptTarget::from_bits(bits.to_vec())
    }

    #[test]
    fn cross_entropy_fixtures() {
        let (loss, grad) = softmax_cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((grad[0] + 0.5).abs() < 1e-12 && (grad[1] - 0.5).abs() < 1e-12);

        // evaluates ln(e^1 + e^2 + e^3) - 3 without overflow tricks showing
        let (loss, _) = softmax_cross_entropy(&[1.0, 2.0, 3.0], 2).unwrap();
        assert!((loss - 0.407_605_964_444_380_13).abs() < 1e-12);

        let (loss, _) = softmax_cross_entropy(&[1000.0, -1000.0], 0).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);

        assert!(softmax_cross_entropy(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero() {
        let logits = [0.3, -1.2, 2.5, 0.0];
        for label in 0..logits.len() {
            let (_, grad) = softmax_cross_entropy(&logits, label).unwrap();
            assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_loss_fixtures() {
        let params = AsymmetricLossParams::default();

        // perfect positive: p -> 1 drives the loss to ~0
        let (loss, _) = asymmetric_loss(&[30.0], &target(&[true]), &params).unwrap();
        assert!(loss < 1e-10);

        // clamp zeroes easy negatives: p = 0.05 = margin -> p_m = 0
        // (nudged below the margin so rounding cannot push p past it)
        let z = (0.05f64 / 0.95).ln() - 1e-9;
        let (loss, grad) = asymmetric_loss(&[z], &target(&[false]), &params).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad[0], 0.0);

        // hand value: p = 0.55, p_m = 0.5 -> 0.5^4 * (-ln 0.5)
        let z = (0.55f64 / 0.45).ln();
        let (loss, _) = asymmetric_loss(&[z], &target(&[false]), &params).unwrap();
        assert!((loss - 0.043_321_698_784_996_58).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_loss_length_mismatch() {
        let params = AsymmetricLossParams::default();
        assert!(asymmetric_loss(&[0.0, 0.0], &target(&[true]), &params).is_err());
    }

    #[test]
    fn asymmetric_reduces_to_bce() {
        let params = AsymmetricLossParams {
            gamma_pos: 0.0,
            gamma_neg: 0.0,
            margin: 0.0,
        };
        let logits = [0.7, -1.3, 0.0, 2.2];
        let bits = [true, false, false, true];
        let (loss, _) = asymmetric_loss(&logits, &target(&bits), &params).unwrap();
        let bce: f64 = logits
            .iter()
            .zip(&bits)
            .map(|(&z, &y)| {
                let p = sigmoid(z);
                if y {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / logits.len() as f64;
        assert!((loss - bce).abs() <= 1e-12);
    }

    fn example(d: usize, c: usize, seed: u64) -> ClipExample {
        let mut rng = SplitMix64::new(seed);
        ClipExample {
            local: (0..d).map(|_| rng.next_f64() * 2.0 - 1.0).collect(),
            global: (0..d).map(|_| rng.next_f64() * 2.0 - 1.0).collect(),
            action_class: Some((seed % 3) as usize),
            temporal_label: if seed % 2 == 0 {
                TemporalLabel::Foreground
            } else {
                TemporalLabel::Background
            },
            semantic_target: ConceptTarget::from_bits(
                (0..c).map(|_| rng.next_f64() < 0.5).collect(),
            ),
        }
    }

    #[test]
    fn combined_objective_degenerate_cases() {
        let d = 3;
        let heads = MultiTaskHeads::zeros(d, 3, 4);
        let asl = AsymmetricLossParams::default();
        let ex = example(d, 4, 2);

        // alpha = beta = 0 leaves L_action alone
        let weights = ObjectiveWeights { alpha: 0.0, beta: 0.0 };
        let (loss, grads) = combined_objective(&ex, &heads, &weights, &asl).unwrap();
        let logits = heads.action.forward(&ex.local);
        let (action_loss, _) = softmax_cross_entropy(&logits, ex.action_class.unwrap()).unwrap();
        assert!((loss - action_loss).abs() <= 1e-12);
        assert!(grads.temporal.weights.iter().all(|&g| g == 0.0));
        assert!(grads.semantic.weights.iter().all(|&g| g == 0.0));

        // zero heads: L_temporal = ln 2 regardless of label
        let weights = ObjectiveWeights { alpha: 1.0, beta: 0.0 };
        let mut bg = ex.clone();
        bg.action_class = None;
        bg.temporal_label = TemporalLabel::Background;
        let (loss, grads) = combined_objective(&bg, &heads, &weights, &asl).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(grads.action.weights.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn combined_objective_linear_in_alpha_beta() {
        let d = 4;
        let mut heads = MultiTaskHeads::zeros(d, 3, 5);
        let mut rng = SplitMix64::new(99);
        heads.for_each_param_mut(|p| *p = rng.next_f64() - 0.5);
        let asl = AsymmetricLossParams::default();
        let ex = example(d, 5, 4);
        let at = |alpha: f64, beta: f64| {
            combined_objective(&ex, &heads, &ObjectiveWeights { alpha, beta }, &asl)
                .unwrap()
                .0
        };
        let base = at(0.0, 0.0);
        let da = at(1.0, 0.0) - base;
        let db = at(0.0, 1.0) - base;
        for (alpha, beta) in [(0.5, 0.25), (2.0, 0.1), (1.0, 1.0), (0.0, 3.0)] {
            let expect = base + alpha * da + beta * db;
            assert!((at(alpha, beta) - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn global_feature_fixtures() {
        let set = ClipFeatureSet {
            video_id: "v".to_string(),
            dim: 2,
            clips: vec![
                Clip {
                    interval: Segment { start: 0.0, end: 1.0 },
                    vector: vec![1.0, 0.0],
                },
                Clip {
                    interval: Segment { start: 1.0, end: 2.0 },
                    vector: vec![0.0, 2.0],
                },
            ],
        };
        assert_eq!(global_feature(&set).unwrap(), vec![1.0, 2.0]);

        let single = ClipFeatureSet {
            video_id: "v".to_string(),
            dim: 2,
            clips: set.clips[..1].to_vec(),
        };
        assert_eq!(global_feature(&single).unwrap(), vec![1.0, 0.0]);

        let empty = ClipFeatureSet {
            video_id: "v".to_string(),
            dim: 2,
            clips: Vec::new(),
        };
        assert!(global_feature(&empty).is_err());
    }

    #[test]
    fn temporal_label_fixtures() {
        let events = [Segment { start: 0.0, end: 10.0 }];
        let fg = temporal_region_label(&Segment { start: 2.0, end: 4.0 }, &events, 0.5).unwrap();
        assert_eq!(fg, TemporalLabel::Foreground);

        // overlap 1 over length 2: the >= is inclusive
        let edge = temporal_region_label(&Segment { start: 9.0, end: 11.0 }, &events, 0.5).unwrap();
        assert_eq!(edge, TemporalLabel::Foreground);

        let bg = temporal_region_label(&Segment { start: 11.0, end: 13.0 }, &events, 0.5).unwrap();
        assert_eq!(bg, TemporalLabel::Background);

        // overlapping events must not double-count
        let stacked = [
            Segment { start: 0.0, end: 3.0 },
            Segment { start: 0.0, end: 3.0 },
        ];
        let got =
            temporal_region_label(&Segment { start: 0.0, end: 10.0 }, &stacked, 0.5).unwrap();
        assert_eq!(got, TemporalLabel::Background);

        assert!(temporal_region_label(&Segment { start: 1.0, end: 1.0 }, &events, 0.5).is_err());
        assert!(temporal_region_label(&Segment { start: 1.0, end: 2.0 }, &events, 0.0).is_err());
    }

    #[test]
    fn training_zero_epochs_is_a_no_op() {
        let examples: Vec<ClipExample> = (0..4).map(|i| example(3, 4, i)).collect();
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (heads, history) = train_heads(
            &examples,
            &config,
            &ObjectiveWeights::default(),
            &AsymmetricLossParams::default(),
        )
        .unwrap();
        assert!(history.is_empty());
        assert!(heads.action.weights.iter().all(|&w| w == 0.0));
        assert!(heads.semantic.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn training_rejects_empty_dataset() {
        let err = train_heads(
            &[],
            &TrainConfig::default(),
            &ObjectiveWeights::default(),
            &AsymmetricLossParams::default(),
        );
        assert!(matches!(err, Err(Error::Argument(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let examples: Vec<ClipExample> = (0..6).map(|i| example(3, 4, i)).collect();
        let config = TrainConfig {
            learning_rate: 1e-2,
            epochs: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || {
            train_heads(
                &examples,
                &config,
                &ObjectiveWeights::default(),
                &AsymmetricLossParams::default(),
            )
            .unwrap()
        };
        let (h1, hist1) = run();
        let (h2, hist2) = run();
        assert_eq!(h1, h2);
        assert_eq!(hist1, hist2);
        assert!(hist1.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn training_reduces_loss_on_separable_data() {
        // separable clusters: channels 0/1 encode the action class, the
        // overall sign encodes foreground/background
        let mut examples = Vec::new();
        for i in 0..20u64 {
            let fg = i % 2 == 0;
            let class = ((i / 2) % 2) as usize;
            let mut rng = SplitMix64::new(1000 + i);
            let mut local: Vec<f64> = (0..4).map(|_| 0.1 * rng.next_gaussian()).collect();
            if fg {
                local[class] += 2.0;
                local[2] += 1.0;
            } else {
                local[2] -= 1.0;
            }
            examples.push(ClipExample {
                local,
                global: vec![1.0; 4],
                action_class: fg.then_some(class),
                temporal_label: if fg {
                    TemporalLabel::Foreground
                } else {
                    TemporalLabel::Background
                },
                semantic_target: ConceptTarget::from_bits(vec![fg, !fg]),
            });
        }
        let config = TrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            seed: 3,
            ..TrainConfig::default()
        };
        let (heads, history) = train_heads(
            &examples,
            &config,
            &ObjectiveWeights::default(),
            &AsymmetricLossParams::default(),
        )
        .unwrap();
        assert_eq!(history.len(), 30);
        assert!(history[0] >= *history.last().unwrap());

        let report = evaluate_heads(&heads, &examples).unwrap();
        assert!(report.temporal_accuracy >= 0.95);
        assert!(report.action_accuracy.unwrap() >= 0.95);
    }

    #[test]
    fn evaluation_fixtures() {
        // hand-built heads that predict perfectly on one example set
        let mut heads = MultiTaskHeads::zeros(2, 2, 2);
        heads.action.weights = vec![10.0, 0.0, 0.0, 10.0];
        heads.temporal.weights = vec![-10.0, 0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0];
        heads.semantic.weights = vec![10.0, -10.0, -10.0, 10.0];
        let examples = vec![
            ClipExample {
                local: vec![1.0, 0.0],
                global: vec![1.0, 0.0],
                action_class: Some(0),
                temporal_label: TemporalLabel::Foreground,
                semantic_target: target(&[true, false]),
            },
            ClipExample {
                local: vec![0.0, 1.0],
                global: vec![0.0, 1.0],
                action_class: Some(1),
                temporal_label: TemporalLabel::Background,
                semantic_target: target(&[false, true]),
            },
        ];
        let report = evaluate_heads(&heads, &examples).unwrap();
        assert_eq!(report.action_accuracy, Some(1.0));
        assert_eq!(report.temporal_accuracy, 1.0);
        assert_eq!(report.semantic_map, Some(1.0));

        // constant scores: tie broken by ascending index, positive first
        let mut bg = examples.clone();
        for ex in &mut bg {
            ex.action_class = None;
        }
        let zero_heads = MultiTaskHeads::zeros(2, 2, 2);
        let report = evaluate_heads(&zero_heads, &bg).unwrap();
        assert_eq!(report.action_accuracy, None);
        // concept 0 positive at index 0 -> AP 1; concept 1 positive at
        // index 1 -> AP 0.5
        assert_eq!(report.semantic_map, Some(0.75));
    }

    #[test]
    fn average_precision_rules() {
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]), Some(1.0));
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(average_precision(&[0.1, 0.9], &[true, false]), Some(0.5));
        assert_eq!(average_precision(&[0.1, 0.9], &[false, false]), None);
    }

    #[test]
    fn heads_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heads.json");
        let mut heads = MultiTaskHeads::zeros(3, 2, 4);
        let mut rng = SplitMix64::new(5);
        heads.for_each_param_mut(|p| *p = rng.next_f64() - 0.5);
        heads.save(&path).unwrap();
        let back = MultiTaskHeads::load(&path).unwrap();
        assert_eq!(back, heads);
    }

    fn finite_difference(
        f: &mut dyn FnMut(&[f64]) -> f64,
        point: &[f64],
        step: f64,
    ) -> Vec<f64> {
        let mut grad = vec![0.0; point.len()];
        let mut x = point.to_vec();
        for i in 0..point.len() {
            x[i] = point[i] + step;
            let hi = f(&x);
            x[i] = point[i] - step;
            let lo = f(&x);
            x[i] = point[i];
            grad[i] = (hi - lo) / (2.0 * step);
        }
        grad
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    #[test]
    fn asymmetric_gradient_matches_finite_differences() {
        let mut rng = SplitMix64::new(42);
        let gammas = [0.0, 0.5, 1.0, 2.0, 4.0];
        for _ in 0..50 {
            let params = AsymmetricLossParams {
                gamma_pos: gammas[rng.next_below(5) as usize],
                gamma_neg: gammas[rng.next_below(5) as usize],
                margin: 0.05 * rng.next_below(4) as f64,
            };
            let c = 3;
            let mut logits = Vec::with_capacity(c);
            while logits.len() < c {
                let z = rng.next_f64() * 8.0 - 4.0;
                if (sigmoid(z) - params.margin).abs() > 1e-3 {
                    logits.push(z);
                }
            }
            let bits: Vec<bool> = (0..c).map(|_| rng.next_f64() < 0.5).collect();
            let tg = target(&bits);
            let (_, analytic) = asymmetric_loss(&logits, &tg, &params).unwrap();
            let fd = finite_difference(
                &mut |z| asymmetric_loss(z, &tg, &params).unwrap().0,
                &logits,
                1e-5,
            );
            for (a, f) in analytic.iter().zip(&fd) {
                assert!(rel_err(*a, *f) < 1e-5, "analytic {a} vs fd {f} ({params:?})");
            }
        }
    }
}
