//! Labeled-utterance data model, BIO codec, noise simulator, synthetic corpus
//! generator, and JSONL persistence.
//!
//! All operations here are pure functions of their inputs and explicit seeds;
//! they are safe to call concurrently.

pub(crate) mod bio;
mod generate;
mod jsonl;
mod noise;
mod vocab;

pub use bio::{bio_decode, bio_encode, is_bio_valid, EntitySpan, EntityType, Tag};
pub use generate::{
    default_gazetteers, default_templates, generate_corpus, generate_utterances, Gazetteers,
};
pub use jsonl::{read_gazetteer_file, read_jsonl, write_jsonl};
pub use noise::{noisify, NoiseConfig};
pub use vocab::{Vocabulary, PAD_ID, UNK_ID};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One utterance: whitespace tokens plus optional per-token BIO tags.
///
/// This is the unit of training, prediction, and evaluation. `tags` is absent
/// for unlabeled pool utterances. Model-predicted tag sequences may be
/// BIO-invalid; gold data produced by the generator is always valid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledUtterance {
    pub id: String,
    pub tokens: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<Tag>>,
}

impl LabeledUtterance {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, tags: Option<Vec<Tag>>) -> Self {
        LabeledUtterance { id: id.into(), tokens, tags }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.tags.is_some()
    }

    /// Decoded entity spans, or an error when the utterance is unlabeled.
    pub fn spans(&self) -> Result<Vec<EntitySpan>> {
        let tags = self
            .tags
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("utterance {:?} has no tags", self.id)))?;
        Ok(bio_decode(tags))
    }

    /// Structural checks: at least one token, no empty or whitespace-bearing
    /// tokens, and tag length matching token length when tags are present.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Validation(format!("utterance {:?} has no tokens", self.id)));
        }
        for token in &self.tokens {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::Validation(format!(
                    "utterance {:?} has invalid token {token:?}",
                    self.id
                )));
            }
        }
        if let Some(tags) = &self.tags {
            if tags.len() != self.tokens.len() {
                return Err(Error::Validation(format!(
                    "utterance {:?}: {} tags for {} tokens",
                    self.id,
                    tags.len(),
                    self.tokens.len()
                )));
            }
        }
        Ok(())
    }

    /// [`LabeledUtterance::validate`] plus BIO validity; gold data must pass.
    pub fn validate_gold(&self) -> Result<()> {
        self.validate()?;
        match &self.tags {
            Some(tags) if is_bio_valid(tags) => Ok(()),
            Some(_) => Err(Error::Validation(format!(
                "utterance {:?} has a BIO-invalid tag sequence",
                self.id
            ))),
            None => Err(Error::Validation(format!("utterance {:?} is unlabeled", self.id))),
        }
    }
}

/// Train/dev/test partition of a gold corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledUtterance>,
    pub dev: Vec<LabeledUtterance>,
    pub test: Vec<LabeledUtterance>,
}

impl DatasetSplit {
    /// Checks id uniqueness across splits and that no token-identical
    /// utterance appears in more than one split.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for utt in self.iter_all() {
            utt.validate()?;
            if !ids.insert(utt.id.as_str()) {
                return Err(Error::Validation(format!("duplicate utterance id {:?}", utt.id)));
            }
        }
        let mut seen: BTreeMap<Vec<&str>, u8> = BTreeMap::new();
        for (split_idx, part) in [&self.train, &self.dev, &self.test].into_iter().enumerate() {
            for utt in part {
                let key: Vec<&str> = utt.tokens.iter().map(String::as_str).collect();
                if let Some(prev) = seen.insert(key, split_idx as u8) {
                    if prev != split_idx as u8 {
                        return Err(Error::Validation(format!(
                            "token sequence of {:?} appears in more than one split",
                            utt.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &LabeledUtterance> {
        self.train.iter().chain(self.dev.iter()).chain(self.test.iter())
    }
}

/// Utterance-level class distribution of a tagged collection, in the shape of
/// the distillation-data tables: positive/negative utterance counts plus the
/// number of utterances containing each entity type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
    pub by_type: BTreeMap<EntityType, usize>,
}

impl CorpusStats {
    /// Plain-text rendering, one row per statistic.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("total utterances     {}\n", self.total));
        out.push_str(&format!("positive utterances  {}\n", self.positive));
        out.push_str(&format!("negative utterances  {}\n", self.negative));
        for ty in EntityType::ALL {
            out.push_str(&format!(
                "containing {:<9} {}\n",
                ty.name(),
                self.by_type.get(&ty).copied().unwrap_or(0)
            ));
        }
        out
    }
}

/// Counts positive/negative utterances and per-type presence.
///
/// Every utterance must be tagged; an untagged one is a validation error.
/// Counts are per utterance, not per mention: an utterance with two PERSON
/// spans contributes one to the PERSON row.
pub fn corpus_stats(data: &[LabeledUtterance]) -> Result<CorpusStats> {
    let mut stats = CorpusStats {
        total: data.len(),
        positive: 0,
        negative: 0,
        by_type: EntityType::ALL.iter().map(|t| (*t, 0)).collect(),
    };
    for utt in data {
        let spans = utt.spans()?;
        if spans.is_empty() {
            stats.negative += 1;
        } else {
            stats.positive += 1;
        }
        let mut present: Vec<EntityType> = spans.iter().map(|s| s.entity_type).collect();
        present.sort();
        present.dedup();
        for ty in present {
            *stats.by_type.get_mut(&ty).expect("all types present") += 1;
        }
    }
    Ok(stats)
}
