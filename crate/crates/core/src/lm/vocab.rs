use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{DetoxError, Result};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Word-level vocabulary. The three special tokens always occupy ids 0, 1, 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub const BOS_ID: u32 = 0;
    pub const EOS_ID: u32 = 1;
    pub const UNK_ID: u32 = 2;

    /// Builds a vocabulary from an explicit word list. Words get ids in list
    /// order, after the specials. Duplicates are ignored.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab::specials_only();
        for w in words {
            vocab.push(w.as_ref());
        }
        vocab
    }

    /// Builds a vocabulary from raw texts: words with at least `min_count`
    /// occurrences, most frequent first, ties broken lexicographically.
    pub fn build<I, S>(texts: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for word in split_words(text.as_ref()) {
                *counts.entry(word).or_insert(0) += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Vocab::from_words(words.into_iter().map(|(w, _)| w))
    }

    /// Reconstructs a vocabulary from a full token list (specials included),
    /// as stored on disk.
    pub fn from_token_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != BOS || tokens[1] != EOS || tokens[2] != UNK {
            return Err(DetoxError::format("vocabulary must start with <bos>, <eos>, <unk>"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(DetoxError::format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    fn specials_only() -> Self {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in [BOS, EOS, UNK] {
            vocab.push(s);
        }
        vocab
    }

    fn push(&mut self, word: &str) {
        if !self.index.contains_key(word) {
            self.index.insert(word.to_string(), self.tokens.len() as u32);
            self.tokens.push(word.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(id: u32) -> bool {
        id <= Self::UNK_ID
    }

    /// Tokenizes `text`, wrapping it in BOS/EOS.
    pub fn encode(&self, text: &str, language: &str) -> TokenSequence {
        tokenize(text, language, self)
    }

    /// Joins non-special tokens with single spaces.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| !Self::is_special(id))
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A tokenized text tagged with its language.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub language: String,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, language: impl Into<String>) -> Self {
        TokenSequence {
            ids,
            language: language.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The sequence without its trailing EOS, if present. Used as a
    /// generation context.
    pub fn without_eos(&self) -> &[u32] {
        match self.ids.last() {
            Some(&Vocab::EOS_ID) => &self.ids[..self.ids.len() - 1],
            _ => &self.ids,
        }
    }
}

/// Lowercases and splits text into word tokens. Runs of alphanumerics and
/// `_` form words; every other non-whitespace character is its own token.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            cur.extend(c.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_lowercase().collect());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn tokenize(text: &str, language: &str, vocab: &Vocab) -> TokenSequence {
    let words = split_words(text);
    let mut ids = Vec::with_capacity(words.len() + 2);
    ids.push(Vocab::BOS_ID);
    ids.extend(words.iter().map(|w| vocab.lookup(w)));
    ids.push(Vocab::EOS_ID);
    TokenSequence::new(ids, language)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Vocab {
        Vocab::from_words(["a", "b"])
    }

    #[test]
    fn empty_text_is_bos_eos() {
        assert_eq!(tokenize("", "en", &ab()).ids, vec![0, 1]);
    }

    #[test]
    fn direct_lookup() {
        let v = ab();
        assert_eq!(v.id("a"), Some(3));
        assert_eq!(v.id("b"), Some(4));
        assert_eq!(tokenize("a b a", "en", &v).ids, vec![0, 3, 4, 3, 1]);
    }

    #[test]
    fn unknown_maps_to_unk() {
        assert_eq!(
            tokenize("a zz b", "en", &ab()).ids,
            vec![Vocab::BOS_ID, 3, Vocab::UNK_ID, 4, Vocab::EOS_ID]
        );
    }

    #[test]
    fn punctuation_splits() {
        assert_eq!(split_words("Hello, World!"), vec!["hello", ",", "world", "!"]);
        assert_eq!(split_words("  xa_w1\txa_w2 "), vec!["xa_w1", "xa_w2"]);
    }

    #[test]
    fn build_orders_by_frequency() {
        let v = Vocab::build(["b a b", "c b a"], 1);
        assert_eq!(&v.tokens()[3..], &["b", "a", "c"]);
        let v2 = Vocab::build(["b a b", "c b a"], 2);
        assert_eq!(v2.len(), 5);
    }

    #[test]
    fn ids_are_dense_and_consistent() {
        let v = Vocab::build(["the cat sat on the mat ."], 1);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i as u32));
        }
    }

    #[test]
    fn token_list_round_trip() {
        let v = ab();
        let back = Vocab::from_token_list(v.tokens().to_vec()).unwrap();
        assert_eq!(v, back);
        assert!(Vocab::from_token_list(vec!["a".into()]).is_err());
    }

    #[test]
    fn decode_skips_specials() {
        let v = ab();
        assert_eq!(v.decode(&[0, 3, 2, 4, 1]), "a b");
    }
}
