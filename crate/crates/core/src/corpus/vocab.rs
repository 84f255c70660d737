//! Token vocabulary. Case-sensitive by design: surviving uppercase is a
//! strong entity cue in partially cased transcripts, so the vocabulary never
//! folds case.

use std::collections::HashMap;

use super::LabeledUtterance;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Dense token-to-id map with reserved PAD (0) and UNK (1) slots. Unseen
/// tokens map to UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    map: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary in first-seen token order.
    pub fn build<'a>(utterances: impl IntoIterator<Item = &'a LabeledUtterance>) -> Vocabulary {
        let mut vocab = Vocabulary { map: HashMap::new(), tokens: Vec::new() };
        for utt in utterances {
            for token in &utt.tokens {
                vocab.intern(token);
            }
        }
        vocab
    }

    /// Restores a vocabulary from its token list (id order, specials
    /// excluded), e.g. from a checkpoint.
    pub fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let map = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 2))
            .collect();
        Vocabulary { map, tokens }
    }

    fn intern(&mut self, token: &str) {
        if !self.map.contains_key(token) {
            let id = self.tokens.len() as u32 + 2;
            self.map.insert(token.to_string(), id);
            self.tokens.push(token.to_string());
        }
    }

    pub fn id(&self, token: &str) -> u32 {
        self.map.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Total id count, including PAD and UNK.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    /// Tokens in id order, specials excluded (id = index + 2).
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}
