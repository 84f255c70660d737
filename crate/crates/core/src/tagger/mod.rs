//! Transformer-encoder token classifier: two size presets (teacher, student),
//! deterministic training with exact gradients, and versioned binary
//! checkpoints.

mod checkpoint;
pub(crate) mod linalg;
mod loss;
mod net;
mod params;
mod train;

pub use checkpoint::CHECKPOINT_FORMAT_VERSION;
pub use loss::cross_entropy;
pub use net::DropoutMode;
pub use params::ParamLayout;
pub use train::{train, Logits, TrainConfig, TrainLog, TrainingBatch, IGNORE_LABEL};

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledUtterance, Tag, Vocabulary};
use crate::error::{Error, Result};

use net::NetView;

/// Architecture hyperparameters. The parameter count is a deterministic
/// function of this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

/// Width/depth of one preset, without the data-dependent fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDims {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
}

impl ArchDims {
    /// Teacher preset: 4 layers, width 128, 4 heads, feed-forward 512.
    pub fn teacher() -> ArchDims {
        ArchDims { d_model: 128, n_layers: 4, n_heads: 4, d_ff: 512 }
    }

    /// Student preset: 2 layers, width 48, 2 heads, feed-forward 192; sized
    /// so the teacher/student parameter ratio lands near seven at typical
    /// vocabulary sizes.
    pub fn student() -> ArchDims {
        ArchDims { d_model: 48, n_layers: 2, n_heads: 2, d_ff: 192 }
    }

    pub fn into_config(self, vocab_size: usize, max_len: usize, seed: u64) -> TaggerConfig {
        TaggerConfig {
            vocab_size,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_len,
            n_classes: Tag::COUNT,
            dropout_rate: 0.1,
            seed,
        }
    }
}

impl TaggerConfig {
    pub fn teacher(vocab_size: usize, max_len: usize, seed: u64) -> TaggerConfig {
        ArchDims::teacher().into_config(vocab_size, max_len, seed)
    }

    pub fn student(vocab_size: usize, max_len: usize, seed: u64) -> TaggerConfig {
        ArchDims::student().into_config(vocab_size, max_len, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.d_ff == 0 || self.max_len == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must include PAD and UNK".into()));
        }
        if self.n_classes != Tag::COUNT {
            return Err(Error::Config(format!(
                "n_classes must be {}, got {}",
                Tag::COUNT,
                self.n_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// A token classifier: configuration, vocabulary, and one flat `f32`
/// parameter vector. Immutable once trained; prediction is safe for
/// concurrent callers.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub config: TaggerConfig,
    pub vocab: Vocabulary,
    pub(crate) params: Vec<f32>,
    pub(crate) layout: ParamLayout,
}

impl TaggerModel {
    /// Deterministically initializes parameters from `config.seed`.
    pub fn init(config: TaggerConfig, vocab: Vocabulary) -> Result<TaggerModel> {
        config.validate()?;
        if vocab.size() != config.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary size {} does not match config vocab_size {}",
                vocab.size(),
                config.vocab_size
            )));
        }
        let layout = ParamLayout::from_config(&config);
        let params = params::init_params(&config, &layout);
        Ok(TaggerModel { config, vocab, params, layout })
    }

    pub(crate) fn view(&self) -> NetView<'_> {
        NetView { cfg: &self.config, layout: &self.layout, params: &self.params }
    }

    /// Exact number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    /// Tags one token sequence: per-position argmax over class logits, ties
    /// broken toward the lowest class index. Inputs longer than `max_len` are
    /// truncated and the overflow is tagged `O`.
    ///
    /// Strictly single-threaded; eval mode (no dropout), so the output is
    /// deterministic.
    pub fn predict(&self, tokens: &[String]) -> Result<Vec<Tag>> {
        if tokens.is_empty() {
            return Err(Error::Validation("cannot predict on an empty token sequence".into()));
        }
        let mut ids = self.vocab.encode(tokens);
        ids.truncate(self.config.max_len);
        let logits = net::infer_logits(self.view(), &ids);
        let mut tags = Vec::with_capacity(tokens.len());
        for t in 0..ids.len() {
            let row = logits.row(t);
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            tags.push(Tag::from_index(best).expect("argmax within class count"));
        }
        tags.resize(tokens.len(), Tag::Outside);
        Ok(tags)
    }

    /// Convenience wrapper over [`TaggerModel::predict`].
    pub fn predict_utterance(&self, utterance: &LabeledUtterance) -> Result<Vec<Tag>> {
        self.predict(&utterance.tokens)
    }
}

#[cfg(test)]
mod tests;
