//! Synthetic multilingual toy world for offline runs and acceptance tests.
//!
//! Every language owns a disjoint token space (`<code>_n<i>` neutral words,
//! `<code>_t<i>` toxic words). Sentences follow a sparse Markov chain over
//! neutral words; toxic sentences additionally insert toxic words right
//! after a few "trigger" words. Sentences may end only after one of a few
//! "terminal" words. The lexicon scorer knows the toxic words.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dictionary, Label, LabeledSample};
use crate::decoder::Prompt;
use crate::error::{DetoxError, Result};
use crate::lm::Vocab;
use crate::rng;
use crate::scorer::LexiconScorer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub languages: Vec<String>,
    pub neutral_words: usize,
    pub toxic_words: usize,
    pub triggers: usize,
    pub successors: usize,
    /// Words after which a sentence may end, taken from the end of the
    /// neutral list.
    pub terminals: usize,
    pub stop_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
    /// Chance of a toxic insertion after each trigger in a toxic sentence.
    pub insert_prob: f64,
    /// The same chance in a non-toxic sentence: non-toxic comments are
    /// those below the labeling threshold, not ones free of toxic words.
    pub nontoxic_insert_prob: f64,
    pub prompt_min: usize,
    pub prompt_max: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            languages: vec!["xa".into(), "xb".into(), "xc".into()],
            neutral_words: 40,
            toxic_words: 10,
            triggers: 5,
            successors: 5,
            terminals: 6,
            stop_prob: 0.5,
            min_len: 4,
            max_len: 16,
            insert_prob: 0.6,
            nontoxic_insert_prob: 0.02,
            prompt_min: 4,
            prompt_max: 6,
            seed: 2024,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(DetoxError::config("toy world needs at least one language"));
        }
        if self.neutral_words < 2 || self.toxic_words == 0 {
            return Err(DetoxError::config("toy world needs at least 2 neutral and 1 toxic word"));
        }
        if self.triggers == 0 || self.triggers > self.neutral_words {
            return Err(DetoxError::config("triggers must be in 1..=neutral_words"));
        }
        if self.terminals == 0 || self.triggers + self.terminals > self.neutral_words {
            return Err(DetoxError::config("need 1 <= terminals and triggers + terminals <= neutral_words"));
        }
        if self.successors == 0 || self.successors > self.neutral_words {
            return Err(DetoxError::config("successors must be in 1..=neutral_words"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(DetoxError::config("need 1 <= min_len <= max_len"));
        }
        if self.prompt_min == 0 || self.prompt_min > self.prompt_max {
            return Err(DetoxError::config("need 1 <= prompt_min <= prompt_max"));
        }
        if [self.insert_prob, self.nontoxic_insert_prob, self.stop_prob]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(DetoxError::config("insert_prob, nontoxic_insert_prob and stop_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ToyLanguage {
    pub code: String,
    pub neutral: Vec<String>,
    pub toxic: Vec<String>,
    pub toxic_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Word {
    Neutral(usize),
    Toxic(usize),
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub config: ToyConfig,
    pub languages: Vec<ToyLanguage>,
    successors: Vec<Vec<usize>>,
    vocab: Arc<Vocab>,
}

impl ToyWorld {
    pub fn new(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        // one chain shared by all languages, so languages are relabelings of
        // each other and word-for-word translation is exact
        let mut r = rng::stream(&[config.seed, 0x5e7]);
        let ids: Vec<usize> = (0..config.neutral_words).collect();
        let successors: Vec<Vec<usize>> = (0..config.neutral_words)
            .map(|_| ids.choose_multiple(&mut r, config.successors).copied().collect())
            .collect();
        let mut languages = Vec::new();
        for code in &config.languages {
            let neutral: Vec<String> = (0..config.neutral_words).map(|i| format!("{code}_n{i}")).collect();
            let toxic: Vec<String> = (0..config.toxic_words).map(|i| format!("{code}_t{i}")).collect();
            // weights spread over [0.5, 0.95]
            let toxic_weights = (0..config.toxic_words)
                .map(|i| 0.5 + 0.45 * i as f64 / (config.toxic_words.max(2) - 1) as f64)
                .collect();
            languages.push(ToyLanguage {
                code: code.clone(),
                neutral,
                toxic,
                toxic_weights,
            });
        }
        let words = languages
            .iter()
            .flat_map(|l| l.neutral.iter().chain(&l.toxic).cloned())
            .collect::<Vec<_>>();
        Ok(ToyWorld {
            config,
            languages,
            successors,
            vocab: Arc::new(Vocab::from_words(words)),
        })
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn codes(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.code.clone()).collect()
    }

    fn language(&self, code: &str) -> Result<&ToyLanguage> {
        self.languages
            .iter()
            .find(|l| l.code == code)
            .ok_or_else(|| DetoxError::config(format!("unknown toy language {code:?}")))
    }

    /// A chain walk of `min_len..=max_len` words. Past `min_len` the walk
    /// stops after a terminal word with probability `stop_prob`.
    fn walk(&self, min_len: usize, max_len: usize, insert_prob: f64, r: &mut ChaCha8Rng) -> Vec<Word> {
        let cfg = &self.config;
        let mut out = Vec::with_capacity(max_len + 2);
        let mut w = r.random_range(0..cfg.neutral_words);
        loop {
            out.push(Word::Neutral(w));
            if insert_prob > 0.0 && w < cfg.triggers && r.random::<f64>() < insert_prob {
                out.push(Word::Toxic(r.random_range(0..cfg.toxic_words)));
            }
            let terminal = w >= cfg.neutral_words - cfg.terminals;
            if out.len() >= max_len || (out.len() >= min_len && terminal && r.random::<f64>() < cfg.stop_prob) {
                return out;
            }
            w = *self.successors[w].choose(r).expect("successors non-empty");
        }
    }

    /// Toxic walks are redrawn until they contain a toxic word.
    fn sentence_words(&self, label: Label, r: &mut ChaCha8Rng) -> Vec<Word> {
        loop {
            let insert = match label {
                Label::Toxic => self.config.insert_prob,
                Label::Nontoxic => self.config.nontoxic_insert_prob,
            };
            let words = self.walk(self.config.min_len, self.config.max_len, insert, r);
            if label == Label::Nontoxic || words.iter().any(|w| matches!(w, Word::Toxic(_))) {
                return words;
            }
        }
    }

    fn render(lang: &ToyLanguage, words: &[Word]) -> String {
        words
            .iter()
            .map(|w| match *w {
                Word::Neutral(i) => lang.neutral[i].as_str(),
                Word::Toxic(i) => lang.toxic[i].as_str(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One sentence; toxic sentences contain at least one toxic word.
    pub fn sentence(&self, code: &str, label: Label, r: &mut ChaCha8Rng) -> Result<String> {
        let lang = self.language(code)?;
        Ok(Self::render(lang, &self.sentence_words(label, r)))
    }

    /// `n` samples of one language and label. `stream` separates
    /// independent draws; source ids are `<code>-<label>-<stream>-<i>`.
    pub fn samples(&self, code: &str, label: Label, n: usize, stream: u64) -> Result<Vec<LabeledSample>> {
        let tag = match label {
            Label::Toxic => 1,
            Label::Nontoxic => 2,
        };
        let mut r = rng::stream(&[self.config.seed, rng::hash_str(code), tag, stream]);
        (0..n)
            .map(|i| {
                Ok(LabeledSample::new(
                    self.sentence(code, label, &mut r)?,
                    code,
                    label,
                    format!("{code}-{label}-{stream}-{i}"),
                ))
            })
            .collect()
    }

    /// A labeled pool per language: `toxic` + `nontoxic` samples each.
    pub fn pool(&self, toxic: usize, nontoxic: usize, stream: u64) -> Result<Vec<LabeledSample>> {
        let mut out = Vec::new();
        for l in &self.languages {
            out.extend(self.samples(&l.code, Label::Toxic, toxic, stream)?);
            out.extend(self.samples(&l.code, Label::Nontoxic, nontoxic, stream)?);
        }
        Ok(out)
    }

    /// Parallel pool: `toxic` + `nontoxic` source sentences, each rendered
    /// in every language with a shared `parallel_group` and source id. The
    /// first language counts as in-language, the others as translations.
    pub fn parallel_pool(&self, toxic: usize, nontoxic: usize, stream: u64) -> Vec<LabeledSample> {
        let mut r = rng::stream(&[self.config.seed, 0x9a1, stream]);
        let mut out = Vec::with_capacity((toxic + nontoxic) * self.languages.len());
        let labels = std::iter::repeat_n(Label::Toxic, toxic).chain(std::iter::repeat_n(Label::Nontoxic, nontoxic));
        for (g, label) in labels.enumerate() {
            let words = self.sentence_words(label, &mut r);
            for (li, lang) in self.languages.iter().enumerate() {
                let mut s = LabeledSample::new(Self::render(lang, &words), lang.code.clone(), label, format!("p{stream}-{g}"))
                    .with_group(g as i64);
                if li > 0 {
                    s.origin = crate::corpus::Origin::Translated;
                }
                out.push(s);
            }
        }
        out
    }

    /// Base-model training text: per language, `sentences` sentences of which
    /// a `toxic_fraction` share is toxic.
    pub fn base_corpus(&self, sentences: usize, toxic_fraction: f64, stream: u64) -> Result<Vec<LabeledSample>> {
        let n_toxic = (sentences as f64 * toxic_fraction).round() as usize;
        self.pool(n_toxic, sentences - n_toxic.min(sentences), stream)
    }

    pub fn lexicon(&self) -> LexiconScorer {
        let weights = self
            .languages
            .iter()
            .map(|l| {
                let m: HashMap<String, f64> = l.toxic.iter().cloned().zip(l.toxic_weights.iter().copied()).collect();
                (l.code.clone(), m)
            })
            .collect();
        LexiconScorer::new(weights).expect("toy weights lie in [0, 1]")
    }

    /// Word-for-word tables between every pair of toy languages
    /// (`xa_n3` <-> `xb_n3`).
    pub fn dictionary(&self) -> Dictionary {
        let mut d = Dictionary::new();
        for a in &self.languages {
            for b in &self.languages {
                if a.code == b.code {
                    continue;
                }
                for (x, y) in a.neutral.iter().zip(&b.neutral).chain(a.toxic.iter().zip(&b.toxic)) {
                    d.insert(&a.code, &b.code, x, y);
                }
            }
        }
        d
    }

    /// Template prompts cycling through the languages: a neutral chain walk
    /// of `prompt_min..=prompt_max` words.
    pub fn prompts(&self, n: usize, seed: u64) -> Vec<Prompt> {
        let mut r = rng::stream(&[self.config.seed, 0x9e0, seed]);
        (0..n)
            .map(|i| {
                let lang = &self.languages[i % self.languages.len()];
                let len = r.random_range(self.config.prompt_min..=self.config.prompt_max);
                Prompt::new(Self::render(lang, &self.walk(len, len, 0.0, &mut r)), lang.code.clone())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::split_words;

    fn world() -> ToyWorld {
        ToyWorld::new(ToyConfig::default()).unwrap()
    }

    #[test]
    fn lexicon_covers_thirty_tokens() {
        let w = world();
        let n: usize = w.lexicon().weights().values().map(HashMap::len).sum();
        assert_eq!(n, 30);
        assert_eq!(w.vocab().len(), 3 + 3 * 50);
    }

    #[test]
    fn labels_hold() {
        let w = world();
        let lex = w.lexicon();
        for s in w.samples("xb", Label::Toxic, 50, 0).unwrap() {
            assert!(lex.value(&s.text, "xb") > 0.0);
            assert!(split_words(&s.text).iter().all(|t| t.starts_with("xb_")));
        }
        let leaked = w
            .samples("xb", Label::Nontoxic, 500, 0)
            .unwrap()
            .iter()
            .filter(|s| lex.value(&s.text, "xb") > 0.0)
            .count();
        assert!(leaked > 0 && leaked < 50, "{leaked}");
        let clean = ToyWorld::new(ToyConfig {
            nontoxic_insert_prob: 0.0,
            ..ToyConfig::default()
        })
        .unwrap();
        for s in clean.samples("xb", Label::Nontoxic, 50, 0).unwrap() {
            assert_eq!(lex.value(&s.text, "xb"), 0.0);
        }
    }

    #[test]
    fn deterministic() {
        let w = world();
        assert_eq!(w.pool(3, 3, 1).unwrap(), world().pool(3, 3, 1).unwrap());
        assert_ne!(w.pool(3, 3, 1).unwrap(), w.pool(3, 3, 2).unwrap());
        assert_eq!(w.prompts(600, 0).len(), 600);
    }

    #[test]
    fn parallel_pool_is_aligned() {
        let w = world();
        let p = w.parallel_pool(2, 3, 0);
        assert_eq!(p.len(), 15);
        let d = w.dictionary();
        for chunk in p.chunks(3) {
            assert!(chunk.iter().all(|s| s.parallel_group == chunk[0].parallel_group && s.label == chunk[0].label));
            let translated: Vec<String> = split_words(&chunk[0].text)
                .iter()
                .map(|t| d.translate_word("xa", "xb", t).to_string())
                .collect();
            assert_eq!(translated.join(" "), chunk[1].text);
        }
    }

    #[test]
    fn dictionary_round_trips() {
        let d = world().dictionary();
        assert_eq!(d.translate_word("xa", "xc", "xa_t4"), "xc_t4");
        assert_eq!(d.translate_word("xc", "xa", "xc_t4"), "xa_t4");
    }
}
