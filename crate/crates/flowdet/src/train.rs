//! Training with class-weighted cross-entropy and Adam, validation-driven
//! threshold tuning, best-checkpoint retention, and test-set metrics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FlowSchema;
use crate::model::{init_model, Checkpoint, CnnBiLstmModel, ModelConfig, ModelGrads};
use crate::nn::derive_seed;
use crate::preprocess::{DatasetSplits, FeatureEncoder, SequenceWindow};

/// Scores are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logs.
pub const BCE_EPS: f64 = 1e-7;

/// Windows per chunk when accumulating batch gradients. Chunk boundaries
/// depend only on position, so the floating-point reduction order is fixed
/// regardless of how many threads run.
const GRAD_CHUNK: usize = 32;

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Weight the loss by inverse class frequency (normalized to mean 1).
    pub class_weighting: bool,
    pub threshold_grid_step: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            class_weighting: true,
            threshold_grid_step: 0.01,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.threshold_grid_step > 0.0 && self.threshold_grid_step <= 1.0) {
            return Err(Error::Config(format!(
                "threshold_grid_step {} outside (0, 1]",
                self.threshold_grid_step
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Class-weighted binary cross-entropy over a batch of scores, plus the
/// gradient dLoss/dScore per element:
///
/// `loss = -(1/N) sum [ w_pos y log p + w_neg (1-y) log(1-p) ]`
pub fn weighted_bce(scores: &[f64], labels: &[u8], weights: (f64, f64)) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (w_pos, w_neg) = weights;
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for (k, (&p, &y)) in scores.iter().zip(labels).enumerate() {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        if y == 1 {
            loss -= w_pos * p.ln();
            grad[k] = -w_pos / (p * n);
        } else {
            loss -= w_neg * (1.0 - p).ln();
            grad[k] = w_neg / ((1.0 - p) * n);
        }
    }
    Ok((loss / n, grad))
}

/// Inverse-class-frequency weights normalized to mean 1:
/// `(N / (2 N_pos), N / (2 N_neg))`. Falls back to (1, 1) when a class is
/// absent.
pub fn class_weights(labels: &[u8]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return (1.0, 1.0);
    }
    let n = labels.len() as f64;
    (n / (2.0 * n_pos as f64), n / (2.0 * n_neg as f64))
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// First/second moment accumulators, one buffer per parameter block.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn for_model(model: &CnnBiLstmModel) -> Self {
        let shapes: Vec<usize> = model
            .param_blocks()
            .iter()
            .map(|(_, _, data)| data.len())
            .collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

fn adam_update_block(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    bias_corr1: f64,
    bias_corr2: f64,
    cfg: &TrainConfig,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bias_corr1;
        let v_hat = v[i] / bias_corr2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// One Adam update: the step counter is incremented before bias correction.
pub fn adam_step(
    model: &mut CnnBiLstmModel,
    grads: &ModelGrads,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let grad_blocks = grads.blocks();
    let mut param_blocks = model.param_blocks_mut();
    if grad_blocks.len() != param_blocks.len() || param_blocks.len() != state.m.len() {
        return Err(Error::ShapeMismatch(
            "parameter/gradient/state block counts differ".into(),
        ));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (i, (p, g)) in param_blocks.iter_mut().zip(grad_blocks).enumerate() {
        if p.len() != g.len() {
            return Err(Error::ShapeMismatch(format!(
                "block {i}: {} params vs {} grads",
                p.len(),
                g.len()
            )));
        }
        adam_update_block(p, g, &mut state.m[i], &mut state.v[i], bc1, bc2, cfg);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }
}

/// Confusion counts plus accuracy, precision, recall and F1 (positive
/// class = malicious). Degenerate denominators yield 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Apply threshold `tau` (predicted positive iff score >= tau) and derive
/// the four metrics from the confusion counts.
pub fn compute_metrics(scores: &[f64], labels: &[u8], tau: f64) -> Result<MetricsReport> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = ConfusionCounts {
        true_pos: 0,
        true_neg: 0,
        false_pos: 0,
        false_neg: 0,
    };
    for (&p, &y) in scores.iter().zip(labels) {
        let predicted = p >= tau;
        match (predicted, y == 1) {
            (true, true) => counts.true_pos += 1,
            (false, false) => counts.true_neg += 1,
            (true, false) => counts.false_pos += 1,
            (false, true) => counts.false_neg += 1,
        }
    }
    Ok(metrics_from_counts(counts))
}

fn metrics_from_counts(counts: ConfusionCounts) -> MetricsReport {
    let tp = counts.true_pos as f64;
    let tn = counts.true_neg as f64;
    let fp = counts.false_pos as f64;
    let fneg = counts.false_neg as f64;
    let accuracy = (tp + tn) / (tp + tn + fp + fneg);
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fneg > 0.0 {
        tp / (tp + fneg)
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricsReport {
        counts,
        accuracy,
        precision,
        recall,
        f1,
    }
}

/// Exhaustive search over the threshold grid `{0, step, 2 step, ..., 1}`:
/// returns the smallest threshold maximizing F1 together with that F1.
pub fn tune_threshold(scores: &[f64], labels: &[u8], grid_step: f64) -> Result<(f64, f64)> {
    if scores.is_empty() || labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Config(format!(
            "threshold grid step {grid_step} outside (0, 1]"
        )));
    }
    let mut best_tau = 0.0;
    let mut best_f1 = f64::NEG_INFINITY;
    for tau in threshold_grid(grid_step) {
        let f1 = compute_metrics(scores, labels, tau)?.f1;
        if f1 > best_f1 {
            best_f1 = f1;
            best_tau = tau;
        }
    }
    Ok((best_tau, best_f1))
}

/// Multiples of `step` up to 1, with 1 itself always included.
pub fn threshold_grid(step: f64) -> Vec<f64> {
    let k_max = (1.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=k_max).map(|k| (k as f64 * step).min(1.0)).collect();
    if grid.last().map(|&t| t < 1.0).unwrap_or(true) {
        grid.push(1.0);
    }
    grid
}

// ---------------------------------------------------------------------------
// Epoch loop
// ---------------------------------------------------------------------------

/// Per-epoch record: mean training loss, validation F1 at the tuned
/// threshold, and the threshold itself.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub threshold: f64,
}

/// Render epoch logs as `epoch,train_loss,val_f1,threshold` CSV.
pub fn epoch_log_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_f1,threshold\n");
    for log in logs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            log.epoch, log.train_loss, log.val_f1, log.threshold
        ));
    }
    out
}

/// One pass over the training windows: seeded shuffle, mini-batches, and for
/// each batch forward (dropout active) -> weighted BCE -> backward -> Adam.
/// Returns the mean of batch losses weighted by batch size.
pub fn train_epoch(
    model: &mut CnnBiLstmModel,
    adam: &mut AdamState,
    windows: &[SequenceWindow],
    weights: (f64, f64),
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(rng);

    let mut loss_sum = 0.0;
    for batch_ids in order.chunks(cfg.batch_size) {
        let mask_base: u64 = rng.random();
        let tasks: Vec<(&SequenceWindow, u64)> = batch_ids
            .iter()
            .enumerate()
            .map(|(k, &id)| (&windows[id], derive_seed(mask_base, k as u64)))
            .collect();

        let frozen = &*model;
        let passes: Vec<(f64, crate::model::ForwardCache)> = tasks
            .par_iter()
            .map(|(w, seed)| frozen.forward_window_train(w, *seed))
            .collect::<Result<_>>()?;

        let scores: Vec<f64> = passes.iter().map(|(p, _)| *p).collect();
        let labels: Vec<u8> = batch_ids.iter().map(|&id| windows[id].label).collect();
        let (batch_loss, d_scores) = weighted_bce(&scores, &labels, weights)?;

        let work: Vec<(&crate::model::ForwardCache, f64)> = passes
            .iter()
            .zip(&d_scores)
            .map(|((_, cache), &d)| (cache, d))
            .collect();
        let chunk_grads: Vec<ModelGrads> = work
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut acc = ModelGrads::zeros_like(frozen);
                for (cache, d) in chunk {
                    acc.accumulate(&frozen.backward(cache, *d)?);
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut total = ModelGrads::zeros_like(model);
        for g in &chunk_grads {
            total.accumulate(g);
        }

        adam_step(model, &total, adam, cfg)?;
        loss_sum += batch_loss * batch_ids.len() as f64;
    }
    Ok(loss_sum / windows.len() as f64)
}

/// Full training run: per epoch, train then tune the threshold on the
/// validation set; the checkpoint with the highest validation F1 (ties to
/// the earlier epoch) is returned with its threshold embedded, along with
/// the complete epoch log.
pub fn fit(
    splits: &DatasetSplits,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    encoder: &FeatureEncoder,
    schema: &FlowSchema,
    stride: usize,
) -> Result<(Checkpoint, Vec<EpochLog>)> {
    train_cfg.validate()?;
    for (name, split) in [
        ("train", &splits.train),
        ("val", &splits.val),
        ("test", &splits.test),
    ] {
        if split.is_empty() {
            return Err(Error::EmptySplit(name));
        }
    }

    let mut model = init_model(model_cfg)?;
    let mut adam = AdamState::for_model(&model);
    let train_labels: Vec<u8> = splits.train.iter().map(|w| w.label).collect();
    let weights = if train_cfg.class_weighting {
        class_weights(&train_labels)
    } else {
        (1.0, 1.0)
    };
    let val_labels: Vec<u8> = splits.val.iter().map(|w| w.label).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(train_cfg.seed, 0xE70C));

    let mut logs = Vec::with_capacity(train_cfg.epochs);
    let mut best: Option<(CnnBiLstmModel, f64, f64)> = None; // (model, tau, f1)
    for epoch in 1..=train_cfg.epochs {
        let train_loss = train_epoch(
            &mut model,
            &mut adam,
            &splits.train,
            weights,
            train_cfg,
            &mut rng,
        )?;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let val_scores = model.predict_proba(&splits.val)?;
        let (tau, val_f1) =
            tune_threshold(&val_scores, &val_labels, train_cfg.threshold_grid_step)?;
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_f1,
            threshold: tau,
        });
        if best.as_ref().map(|(_, _, f1)| val_f1 > *f1).unwrap_or(true) {
            best = Some((model.clone(), tau, val_f1));
        }
    }
    let (best_model, best_tau, _) = best.expect("epochs >= 1 guarantees a best epoch");
    Ok((
        Checkpoint::new(
            best_model,
            encoder.clone(),
            schema.clone(),
            stride,
            best_tau,
        ),
        logs,
    ))
}

/// Score the test windows with the checkpoint's model and threshold.
pub fn evaluate(checkpoint: &Checkpoint, windows: &[SequenceWindow]) -> Result<MetricsReport> {
    if windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scores = checkpoint.model.predict_proba(windows)?;
    let labels: Vec<u8> = windows.iter().map(|w| w.label).collect();
    compute_metrics(&scores, &labels, checkpoint.threshold)
}
