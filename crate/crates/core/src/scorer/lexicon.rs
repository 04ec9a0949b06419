use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{ToxicityScore, ToxicityScorer};
use crate::error::{DetoxError, Result};
use crate::lm::split_words;

/// Offline scorer: per-language token weights combined by noisy-OR,
/// `1 - Π(1 - w)` over every matched token occurrence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexiconScorer {
    id: String,
    weights: HashMap<String, HashMap<String, f64>>,
}

impl LexiconScorer {
    pub fn new(weights: HashMap<String, HashMap<String, f64>>) -> Result<Self> {
        for (lang, map) in &weights {
            if let Some((tok, w)) = map.iter().find(|(_, w)| !(0.0..=1.0).contains(*w)) {
                return Err(DetoxError::config(format!(
                    "lexicon weight for {tok:?} ({lang}) is {w}, outside [0, 1]"
                )));
            }
        }
        Ok(LexiconScorer {
            id: "lexicon".into(),
            weights,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Reads a JSON object `{lang: {token: weight}}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let weights = serde_json::from_slice(&fs::read(path)?)?;
        LexiconScorer::new(weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let sorted: std::collections::BTreeMap<_, std::collections::BTreeMap<_, _>> = self
            .weights
            .iter()
            .map(|(l, m)| (l.clone(), m.iter().map(|(t, w)| (t.clone(), *w)).collect()))
            .collect();
        fs::write(path, serde_json::to_vec_pretty(&sorted)?)?;
        Ok(())
    }

    pub fn weights(&self) -> &HashMap<String, HashMap<String, f64>> {
        &self.weights
    }

    pub fn value(&self, text: &str, language: &str) -> f64 {
        let Some(map) = self.weights.get(language) else {
            return 0.0;
        };
        let keep: f64 = split_words(text)
            .iter()
            .filter_map(|t| map.get(t))
            .map(|w| 1.0 - w)
            .product();
        1.0 - keep
    }
}

impl ToxicityScorer for LexiconScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, text: &str, language: &str) -> Result<ToxicityScore> {
        Ok(ToxicityScore {
            value: self.value(text, language),
            scorer_id: self.id.clone(),
            language: language.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn lex() -> LexiconScorer {
        let mut en = HashMap::new();
        en.insert("vile".to_string(), 0.8);
        en.insert("bad".to_string(), 0.5);
        en.insert("mean".to_string(), 0.5);
        let mut w = HashMap::new();
        w.insert("en".to_string(), en);
        LexiconScorer::new(w).unwrap()
    }

    #[test]
    fn no_match_scores_zero() {
        assert_eq!(lex().value("a fine day", "en"), 0.0);
        assert_eq!(lex().value("vile", "fr"), 0.0);
    }

    #[test]
    fn single_match() {
        assert!((lex().value("so vile", "en") - 0.8).abs() < 1e-15);
    }

    #[test]
    fn two_halves() {
        assert!((lex().value("bad and mean", "en") - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_weights() {
        let mut m = HashMap::new();
        m.insert("en".to_string(), HashMap::from([("x".to_string(), 1.5)]));
        assert!(LexiconScorer::new(m).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.json");
        lex().save(&p).unwrap();
        assert_eq!(LexiconScorer::load(&p).unwrap(), lex());
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(words in proptest::collection::vec(prop::sample::select(vec!["vile", "bad", "mean", "ok", "day"]), 0..12), extra in prop::sample::select(vec!["vile", "bad", "mean"])) {
            let l = lex();
            let text = words.join(" ");
            let s = l.value(&text, "en");
            let more = l.value(&format!("{text} {extra}"), "en");
            prop_assert!(more >= s);
            let max_w = words.iter().filter_map(|w| l.weights()["en"].get(*w)).fold(0.0f64, |a, &b| a.max(b));
            prop_assert!(s >= max_w - 1e-12 && s <= 1.0);
        }
    }
}
