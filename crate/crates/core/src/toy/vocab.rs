use std::collections::HashMap;

use crate::error::{Error, Result};

pub const BOS_SRC: &str = "<s>";
pub const NOT_YET: &str = "<wait>";
pub const EOS_SRC: &str = "</s>";
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

pub(crate) const SRC_SPECIALS: [&str; 5] = [BOS_SRC, NOT_YET, EOS_SRC, PAD, UNK];
pub(crate) const TGT_SPECIALS: [&str; 2] = [BOS, EOS];

/// String-to-id table with specials occupying the first ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry '{w}'")));
            }
        }
        Ok(Self { words, index })
    }

    pub(crate) fn with_specials(specials: &[&str], words: impl IntoIterator<Item = String>) -> Result<Self> {
        Self::new(specials.iter().map(|s| s.to_string()).chain(words).collect())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn id(&self, word: &str) -> Result<usize> {
        self.get(word)
            .ok_or_else(|| Error::Validation(format!("'{word}' is not in the vocabulary")))
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Source and target tables of a toy model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabs {
    pub source: Vocab,
    pub target: Vocab,
}

impl Vocabs {
    pub fn new(source_words: Vec<String>, target_words: Vec<String>) -> Result<Self> {
        Ok(Self {
            source: Vocab::with_specials(&SRC_SPECIALS, source_words)?,
            target: Vocab::with_specials(&TGT_SPECIALS, target_words)?,
        })
    }

    /// Source ids; out-of-vocabulary words map to [`UNK`].
    pub fn encode_source(&self, words: &[String]) -> Vec<usize> {
        let unk = self.source.get(UNK).expect("specials present");
        words.iter().map(|w| self.source.get(w).unwrap_or(unk)).collect()
    }

    pub fn encode_target(&self, words: &[String]) -> Result<Vec<usize>> {
        words.iter().map(|w| self.target.id(w)).collect()
    }

    pub fn bos(&self) -> usize {
        0
    }

    pub fn eos(&self) -> usize {
        1
    }

    pub(crate) fn src_special(&self, name: &str) -> usize {
        self.source.get(name).expect("specials present")
    }
}
