//! Batching, the fused loss/gradient computation, Adam, and the training
//! loop.
//!
//! Training is deterministic: shuffle order, dropout masks, and parameter
//! updates are all derived from the training seed. Per-item forward/backward
//! work inside a batch may fan out over threads, but per-item results are
//! collected in item order and reduced sequentially, so the outcome is
//! byte-identical regardless of thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledUtterance;
use crate::error::{Error, Result};
use crate::util::mix_seed;

use super::loss::{log_sum_exp, nll};
use super::net::{backward, forward_full, DropoutMode, NetView};
use super::TaggerModel;

/// Label marker for positions that must not contribute to loss or metrics.
pub const IGNORE_LABEL: u32 = u32::MAX;

/// A padded batch of encoded utterances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBatch {
    pub n: usize,
    pub max_len: usize,
    /// `n * max_len` token ids, PAD beyond each true length.
    pub token_ids: Vec<u32>,
    /// `n * max_len` gold class indices, `IGNORE_LABEL` on PAD positions.
    pub labels: Vec<u32>,
    pub lengths: Vec<usize>,
    /// Number of non-ignored positions.
    pub effective_tokens: usize,
}

impl TrainingBatch {
    /// Encodes labeled utterances against a vocabulary. Utterances longer
    /// than `max_len` are truncated; the second return value counts them.
    pub fn from_utterances(
        utterances: &[&LabeledUtterance],
        vocab: &crate::corpus::Vocabulary,
        max_len: usize,
    ) -> Result<(TrainingBatch, usize)> {
        if utterances.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let n = utterances.len();
        let mut token_ids = vec![crate::corpus::PAD_ID; n * max_len];
        let mut labels = vec![IGNORE_LABEL; n * max_len];
        let mut lengths = Vec::with_capacity(n);
        let mut effective = 0usize;
        let mut truncated = 0usize;
        for (i, utt) in utterances.iter().enumerate() {
            utt.validate()?;
            let tags = utt.tags.as_ref().ok_or_else(|| {
                Error::Validation(format!("utterance {:?} has no tags for training", utt.id))
            })?;
            if utt.tokens.len() > max_len {
                truncated += 1;
            }
            let len = utt.tokens.len().min(max_len);
            lengths.push(len);
            for t in 0..len {
                token_ids[i * max_len + t] = vocab.id(&utt.tokens[t]);
                labels[i * max_len + t] = tags[t].index() as u32;
                effective += 1;
            }
        }
        Ok((
            TrainingBatch { n, max_len, token_ids, labels, lengths, effective_tokens: effective },
            truncated,
        ))
    }

    fn item_ids(&self, item: usize) -> &[u32] {
        let start = item * self.max_len;
        &self.token_ids[start..start + self.lengths[item]]
    }

    fn item_labels(&self, item: usize) -> &[u32] {
        let start = item * self.max_len;
        &self.labels[start..start + self.lengths[item]]
    }
}

/// Class logits for a batch, `(n, max_len, n_classes)`, zero on PAD
/// positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub n: usize,
    pub max_len: usize,
    pub n_classes: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn position(&self, item: usize, t: usize) -> &[f64] {
        let start = (item * self.max_len + t) * self.n_classes;
        &self.data[start..start + self.n_classes]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Optimization hyperparameters. Adam with fixed betas, no weight decay, no
/// schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Teacher fine-tuning defaults: batch 2, learning rate 5e-5, 3 epochs.
    pub fn teacher(seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            learning_rate: 5e-5,
            epochs: 3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed,
        }
    }

    /// Student defaults: batch 32, learning rate 5e-5, 5 epochs. Both student
    /// stages use the same settings.
    pub fn student(seed: u64) -> TrainConfig {
        TrainConfig { batch_size: 32, epochs: 5, ..TrainConfig::teacher(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must be in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean loss (token-weighted) plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_mean_loss: Vec<f64>,
    pub truncated_utterances: usize,
}

impl TrainLog {
    /// CSV rendering: `epoch,mean_loss`, epochs numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, loss) in self.epoch_mean_loss.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, loss));
        }
        out
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(n: usize) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, tc: &TrainConfig, params: &mut [f32], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - tc.beta1.powi(self.t as i32);
        let bc2 = 1.0 - tc.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = tc.beta1 * self.m[i] + (1.0 - tc.beta1) * g;
            self.v[i] = tc.beta2 * self.v[i] + (1.0 - tc.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let p = params[i] as f64 - tc.learning_rate * m_hat / (v_hat.sqrt() + tc.epsilon);
            params[i] = p as f32;
        }
    }
}

impl TaggerModel {
    /// Batch forward pass. PAD positions get zero logits and never enter
    /// attention; logits at real positions equal the unpadded forward pass.
    pub fn forward_batch(&self, batch: &TrainingBatch, mode: DropoutMode) -> Result<Logits> {
        self.check_batch(batch)?;
        let view = self.view();
        let c = self.config.n_classes;
        let rows: Vec<Vec<f64>> = (0..batch.n)
            .into_par_iter()
            .map(|item| {
                let ids = batch.item_ids(item);
                let item_mode = per_item_mode(mode, item);
                let (logits, _) = forward_full(view, ids, item_mode);
                logits.data
            })
            .collect();
        let mut data = vec![0.0; batch.n * batch.max_len * c];
        for (item, row) in rows.into_iter().enumerate() {
            let start = item * batch.max_len * c;
            data[start..start + row.len()].copy_from_slice(&row);
        }
        Ok(Logits { n: batch.n, max_len: batch.max_len, n_classes: c, data })
    }

    /// Fused forward/backward over a batch: returns the mean cross entropy
    /// over effective positions and the flat gradient (parameter layout).
    pub fn loss_and_grad(&self, batch: &TrainingBatch, mode: DropoutMode) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        if batch.effective_tokens == 0 {
            return Err(Error::Validation("all batch positions are ignored".into()));
        }
        let view = self.view();
        let n_eff = batch.effective_tokens as f64;
        let c = self.config.n_classes;

        let per_item: Vec<(f64, Vec<f64>)> = (0..batch.n)
            .into_par_iter()
            .map(|item| {
                let ids = batch.item_ids(item);
                let labels = batch.item_labels(item);
                let item_mode = per_item_mode(mode, item);
                let (logits, tape) = forward_full(view, ids, item_mode);
                let mut dlogits = crate::tagger::linalg::Mat::zeros(ids.len(), c);
                let mut loss_sum = 0.0;
                for (t, &label) in labels.iter().enumerate() {
                    if label == IGNORE_LABEL {
                        continue;
                    }
                    let row = logits.row(t);
                    loss_sum += nll(row, label as usize);
                    let lse = log_sum_exp(row);
                    let drow = dlogits.row_mut(t);
                    for (cls, dv) in drow.iter_mut().enumerate() {
                        let p = (row[cls] - lse).exp();
                        let delta = if cls == label as usize { 1.0 } else { 0.0 };
                        *dv = (p - delta) / n_eff;
                    }
                }
                let mut grads = vec![0.0f64; view.layout.total];
                backward(view, &tape, &dlogits, &mut grads);
                (loss_sum, grads)
            })
            .collect();

        let mut grads = vec![0.0f64; self.layout.total];
        let mut loss = 0.0;
        for (item_loss, item_grads) in per_item {
            loss += item_loss;
            for (g, ig) in grads.iter_mut().zip(item_grads) {
                *g += ig;
            }
        }
        Ok((loss / n_eff, grads))
    }

    fn check_batch(&self, batch: &TrainingBatch) -> Result<()> {
        for &id in &batch.token_ids {
            if id as usize >= self.config.vocab_size {
                return Err(Error::Validation(format!(
                    "token id {id} out of range for vocab of {}",
                    self.config.vocab_size
                )));
            }
        }
        if batch.max_len > self.config.max_len {
            return Err(Error::Validation(format!(
                "batch max_len {} exceeds model max_len {}",
                batch.max_len, self.config.max_len
            )));
        }
        for (&len, item) in batch.lengths.iter().zip(0..) {
            if len == 0 {
                return Err(Error::Validation(format!("batch item {item} is empty")));
            }
        }
        Ok(())
    }
}

fn per_item_mode(mode: DropoutMode, item: usize) -> DropoutMode {
    match mode {
        DropoutMode::Eval => DropoutMode::Eval,
        DropoutMode::Train { seed } => DropoutMode::Train { seed: mix_seed(seed, item as u64 + 1) },
    }
}

/// Trains a model in place and returns it with the per-epoch loss log.
///
/// Deterministic for a fixed `(model seed, data, train config)`: epoch
/// shuffles and dropout streams are derived from `tc.seed`. `epochs = 0`
/// returns the model unchanged.
pub fn train(
    mut model: TaggerModel,
    data: &[LabeledUtterance],
    tc: &TrainConfig,
) -> Result<(TaggerModel, TrainLog)> {
    tc.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training data is empty".into()));
    }
    for utt in data {
        utt.validate()?;
        if !utt.is_labeled() {
            return Err(Error::Validation(format!("utterance {:?} has no tags", utt.id)));
        }
    }

    let mut log = TrainLog { epoch_mean_loss: Vec::new(), truncated_utterances: 0 };
    let mut adam = Adam::new(model.layout.total);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tc.seed, epoch as u64 + 1));
        order.shuffle(&mut rng);
        let mut loss_weighted = 0.0;
        let mut tokens = 0usize;
        for (step, chunk) in order.chunks(tc.batch_size).enumerate() {
            let refs: Vec<&LabeledUtterance> = chunk.iter().map(|&i| &data[i]).collect();
            let (batch, truncated) =
                TrainingBatch::from_utterances(&refs, &model.vocab, model.config.max_len)?;
            log.truncated_utterances += truncated;
            if truncated > 0 {
                log::warn!("truncated {truncated} over-length utterances to max_len");
            }
            let dropout_seed = mix_seed(mix_seed(tc.seed, 0xd0d0 + epoch as u64), step as u64);
            let (loss, grads) =
                model.loss_and_grad(&batch, DropoutMode::Train { seed: dropout_seed })?;
            if !loss.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite loss at epoch {epoch} step {step}"
                )));
            }
            adam.step(tc, &mut model.params, &grads);
            loss_weighted += loss * batch.effective_tokens as f64;
            tokens += batch.effective_tokens;
        }
        if model.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite parameters after epoch {epoch}")));
        }
        log.epoch_mean_loss.push(loss_weighted / tokens as f64);
    }
    Ok((model, log))
}
