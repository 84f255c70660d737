//! Entity-level exact-span scoring.
//!
//! A predicted span is a true positive only when its (type, start, end) all
//! match a gold span. Metrics are micro-averaged over exact matches in the
//! CoNLL style; per-type rows and a macro F1 are reported alongside. Token
//! accuracy is logged for diagnostics but plays no part in acceptance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{bio_decode, EntityType, LabeledUtterance, Tag};
use crate::error::{Error, Result};

/// Exact-match counts for one entity type (or the micro total).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl MatchCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    fn add(&mut self, other: &MatchCounts) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Precision/recall/F1 per type and micro-averaged, plus raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub utterances: usize,
    pub micro: MatchCounts,
    pub per_type: BTreeMap<EntityType, MatchCounts>,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub token_accuracy: f64,
}

/// One model's predicted tags for one gold utterance, matched by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub tags: Vec<Tag>,
}

/// Scores predictions against gold annotations.
///
/// The collections must be parallel: same length, pairwise-equal ids, and
/// per-utterance tag length matching token length. Predicted tags are
/// span-decoded (with repair) before matching; each gold span can match at
/// most one predicted span because spans within an utterance are unique.
pub fn score(gold: &[LabeledUtterance], predictions: &[Prediction]) -> Result<EvalResult> {
    if gold.len() != predictions.len() {
        return Err(Error::Validation(format!(
            "{} gold utterances but {} predictions",
            gold.len(),
            predictions.len()
        )));
    }
    let mut per_type: BTreeMap<EntityType, MatchCounts> =
        EntityType::ALL.iter().map(|t| (*t, MatchCounts::default())).collect();
    let mut correct_tokens = 0usize;
    let mut total_tokens = 0usize;

    for (g, p) in gold.iter().zip(predictions) {
        if g.id != p.id {
            return Err(Error::Validation(format!(
                "prediction id {:?} does not match gold id {:?}",
                p.id, g.id
            )));
        }
        let gold_tags = g
            .tags
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("gold utterance {:?} is unlabeled", g.id)))?;
        if p.tags.len() != g.tokens.len() {
            return Err(Error::Validation(format!(
                "utterance {:?}: {} predicted tags for {} tokens",
                g.id,
                p.tags.len(),
                g.tokens.len()
            )));
        }

        let gold_spans: BTreeSet<_> = bio_decode(gold_tags).into_iter().collect();
        let pred_spans: BTreeSet<_> = bio_decode(&p.tags).into_iter().collect();
        for span in pred_spans.iter() {
            let counts = per_type.get_mut(&span.entity_type).expect("all types");
            if gold_spans.contains(span) {
                counts.true_positives += 1;
            } else {
                counts.false_positives += 1;
            }
        }
        for span in gold_spans.iter() {
            if !pred_spans.contains(span) {
                per_type.get_mut(&span.entity_type).expect("all types").false_negatives += 1;
            }
        }

        for (gt, pt) in gold_tags.iter().zip(&p.tags) {
            if gt == pt {
                correct_tokens += 1;
            }
            total_tokens += 1;
        }
    }

    let mut micro = MatchCounts::default();
    for counts in per_type.values() {
        micro.add(counts);
    }
    let macro_f1 = per_type.values().map(MatchCounts::f1).sum::<f64>() / per_type.len() as f64;
    Ok(EvalResult {
        utterances: gold.len(),
        micro_precision: micro.precision(),
        micro_recall: micro.recall(),
        micro_f1: micro.f1(),
        macro_f1,
        token_accuracy: ratio(correct_tokens, total_tokens),
        micro,
        per_type,
    })
}

/// Scores a model over a gold collection.
pub fn score_model(
    model: &crate::tagger::TaggerModel,
    gold: &[LabeledUtterance],
) -> Result<EvalResult> {
    let predictions = gold
        .iter()
        .map(|utt| Ok(Prediction { id: utt.id.clone(), tags: model.predict(&utt.tokens)? }))
        .collect::<Result<Vec<_>>>()?;
    score(gold, &predictions)
}

mod compare;
pub use compare::{compare, ComparisonRow, ComparisonTable, LatencySummary};
