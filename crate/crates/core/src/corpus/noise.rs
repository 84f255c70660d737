//! ASR-transcript noise simulator.
//!
//! Models the surface properties of speech-recognizer output: punctuation is
//! dropped, casing survives only partially, and dysfluencies (filled pauses,
//! false-start repeats) are injected. Gold entity annotations are never
//! damaged: tokens inside a span keep their identity up to casing, and
//! insertions never land inside a span.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{is_bio_valid, LabeledUtterance, Tag};
use crate::error::{Error, Result};

/// Noise process parameters. All rates are probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Remove tokens that consist entirely of punctuation (only outside
    /// entity spans).
    pub strip_punctuation: bool,
    /// Per-token probability of lowercasing; what remains is the "partial
    /// casing" signal.
    pub lowercase_probability: f64,
    /// Probability of inserting a filled pause after a token.
    pub dysfluency_rate: f64,
    /// Filler vocabulary; multi-word entries are inserted as several tokens.
    pub filler_lexicon: Vec<String>,
    /// Probability of duplicating a non-entity token (false start).
    pub repeat_rate: f64,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            strip_punctuation: true,
            lowercase_probability: 0.65,
            dysfluency_rate: 0.08,
            filler_lexicon: vec!["uh".into(), "um".into(), "you know".into(), "like".into()],
            repeat_rate: 0.04,
            rng_seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("lowercase_probability", self.lowercase_probability),
            ("dysfluency_rate", self.dysfluency_rate),
            ("repeat_rate", self.repeat_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {rate}")));
            }
        }
        if self.dysfluency_rate > 0.0 && self.filler_lexicon.is_empty() {
            return Err(Error::Config("dysfluency_rate > 0 requires a filler lexicon".into()));
        }
        for filler in &self.filler_lexicon {
            if filler.split_whitespace().next().is_none() {
                return Err(Error::Config("empty filler lexicon entry".into()));
            }
        }
        Ok(())
    }

    /// Same settings, different seed. Used to give every generated utterance
    /// its own noise stream.
    pub fn with_seed(&self, seed: u64) -> NoiseConfig {
        NoiseConfig { rng_seed: seed, ..self.clone() }
    }
}

fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_punctuation())
}

/// Applies the noise process to a gold-tagged utterance.
///
/// Steps, in order: strip punctuation tokens tagged `O`, randomize casing per
/// token, then a single left-to-right dysfluency pass (repeat of `O` tokens,
/// filler insertion in gaps that are not inside a span). Deterministic for a
/// fixed `rng_seed`; the output is BIO-valid and the entity content is
/// unchanged up to casing.
pub fn noisify(utterance: &LabeledUtterance, config: &NoiseConfig) -> Result<LabeledUtterance> {
    config.validate()?;
    utterance.validate_gold()?;
    let tags = utterance.tags.as_ref().expect("validated above");
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut pairs: Vec<(String, Tag)> = utterance
        .tokens
        .iter()
        .cloned()
        .zip(tags.iter().copied())
        .collect();

    // Removing an O token cannot split a span: inside a valid sequence the
    // tokens of one entity are contiguous B/I tags.
    if config.strip_punctuation {
        pairs.retain(|(token, tag)| !(*tag == Tag::Outside && is_punctuation_token(token)));
    }

    for (token, _) in pairs.iter_mut() {
        if rng.random::<f64>() < config.lowercase_probability {
            *token = token.to_lowercase();
        }
    }

    let mut out: Vec<(String, Tag)> = Vec::with_capacity(pairs.len() + 4);
    for i in 0..pairs.len() {
        out.push(pairs[i].clone());
        // A gap is inside a span exactly when the next tag continues one.
        let continues = matches!(pairs.get(i + 1).map(|p| p.1), Some(Tag::Inside(_)));
        if continues {
            continue;
        }
        if pairs[i].1 == Tag::Outside && rng.random::<f64>() < config.repeat_rate {
            out.push(pairs[i].clone());
        }
        if rng.random::<f64>() < config.dysfluency_rate {
            let filler = &config.filler_lexicon[rng.random_range(0..config.filler_lexicon.len())];
            for word in filler.split_whitespace() {
                out.push((word.to_string(), Tag::Outside));
            }
        }
    }

    if out.is_empty() {
        // Everything was strippable punctuation; keep the original tokens so
        // the output stays a valid utterance.
        out = pairs;
        if out.is_empty() {
            return Err(Error::Validation(format!(
                "utterance {:?} is empty after noise",
                utterance.id
            )));
        }
    }

    let (tokens, tags): (Vec<String>, Vec<Tag>) = out.into_iter().unzip();
    debug_assert!(is_bio_valid(&tags));
    Ok(LabeledUtterance::new(utterance.id.clone(), tokens, Some(tags)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{bio_encode, EntitySpan, EntityType};
    use std::collections::BTreeMap;

    fn gold(text: &str, spans: &[EntitySpan]) -> LabeledUtterance {
        let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
        let tags = bio_encode(spans, tokens.len()).unwrap();
        LabeledUtterance::new("u", tokens, Some(tags))
    }

    fn quiet(seed: u64) -> NoiseConfig {
        NoiseConfig {
            strip_punctuation: true,
            lowercase_probability: 0.0,
            dysfluency_rate: 0.0,
            repeat_rate: 0.0,
            rng_seed: seed,
            ..NoiseConfig::default()
        }
    }

    #[test]
    fn strips_punctuation_and_reindexes_spans() {
        let utt = gold("Hello , John", &[EntitySpan::new(EntityType::Person, 2, 3)]);
        let noised = noisify(&utt, &quiet(0)).unwrap();
        assert_eq!(noised.tokens, vec!["Hello", "John"]);
        assert_eq!(noised.spans().unwrap(), vec![EntitySpan::new(EntityType::Person, 1, 2)]);
    }

    #[test]
    fn identity_when_all_rates_zero_and_no_strip() {
        let utt = gold("Hello , John", &[EntitySpan::new(EntityType::Person, 2, 3)]);
        let mut cfg = quiet(3);
        cfg.strip_punctuation = false;
        assert_eq!(noisify(&utt, &cfg).unwrap(), utt);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let utt = gold("Well I called Acme Corp yesterday , yes", &[EntitySpan::new(
            EntityType::ProdOrg,
            3,
            5,
        )]);
        let cfg = NoiseConfig { rng_seed: 7, ..NoiseConfig::default() };
        let a = noisify(&utt, &cfg).unwrap();
        let b = noisify(&utt, &cfg).unwrap();
        assert_eq!(a, b);
        let c = noisify(&utt, &cfg.with_seed(8)).unwrap();
        // Different seeds are allowed to agree, but not on this fixture.
        assert_ne!(a, c);
    }

    /// Multiset of (type, lowercased span text), the content that noise must
    /// never change.
    fn entity_content(utt: &LabeledUtterance) -> BTreeMap<(EntityType, String), usize> {
        let mut content = BTreeMap::new();
        for span in utt.spans().unwrap() {
            let text = utt.tokens[span.start..span.end]
                .iter()
                .map(|t| t.to_lowercase())
                .collect::<Vec<_>>()
                .join(" ");
            *content.entry((span.entity_type, text)).or_insert(0) += 1;
        }
        content
    }

    #[test]
    fn noise_preserves_entity_content() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let utt = gold(
            "hi , this is Mary Price calling from Acme Corp in Lisbon .",
            &[
                EntitySpan::new(EntityType::Person, 3, 5),
                EntitySpan::new(EntityType::ProdOrg, 8, 10),
                EntitySpan::new(EntityType::Location, 11, 12),
            ],
        );
        let want = entity_content(&utt);
        for _ in 0..300 {
            let cfg = NoiseConfig {
                strip_punctuation: rng.random::<f64>() < 0.8,
                lowercase_probability: rng.random::<f64>(),
                dysfluency_rate: rng.random::<f64>() * 0.5,
                repeat_rate: rng.random::<f64>() * 0.5,
                rng_seed: rng.random(),
                ..NoiseConfig::default()
            };
            let noised = noisify(&utt, &cfg).unwrap();
            assert!(is_bio_valid(noised.tags.as_ref().unwrap()));
            assert_eq!(entity_content(&noised), want);
            noised.validate_gold().unwrap();
        }
    }

    #[test]
    fn rejects_bad_rates_and_untagged_input() {
        let utt = gold("hello", &[]);
        let cfg = NoiseConfig { lowercase_probability: 1.5, ..NoiseConfig::default() };
        assert!(noisify(&utt, &cfg).is_err());
        let unlabeled = LabeledUtterance::new("u", vec!["hello".into()], None);
        assert!(noisify(&unlabeled, &NoiseConfig::default()).is_err());
    }
}
