//! chrF++: character n-gram F-score extended with word n-grams.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{DetoxError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfConfig {
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig {
            char_order: 6,
            word_order: 2,
            beta: 2.0,
        }
    }
}

fn ngram_counts<T: Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut out = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *out.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    out
}

/// (hypothesis n-grams, reference n-grams, clipped matches) for one order.
fn order_stats<T: Hash + Eq + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (h.values().sum(), r.values().sum(), matches)
}

/// Whitespace-separated words with one leading or trailing punctuation
/// character split off into its own token.
pub fn chrf_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > 1 && chars[chars.len() - 1].is_ascii_punctuation() {
            out.push(chars[..chars.len() - 1].iter().collect());
            out.push(chars[chars.len() - 1].to_string());
        } else if chars.len() > 1 && chars[0].is_ascii_punctuation() {
            out.push(chars[0].to_string());
            out.push(chars[1..].iter().collect());
        } else {
            out.push(word.to_string());
        }
    }
    out
}

/// chrF++ in [0, 100]. Per-order F-beta scores are averaged over the orders
/// for which both strings have n-grams. Character n-grams ignore whitespace.
pub fn chrf_pp(hypothesis: &str, reference: &str, cfg: &ChrfConfig) -> Result<f64> {
    if reference.trim().is_empty() {
        return Err(DetoxError::config("chrF++ reference is empty"));
    }
    if hypothesis.trim().is_empty() {
        return Ok(0.0);
    }
    let hyp_chars: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let ref_chars: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hyp_words = chrf_words(hypothesis);
    let ref_words = chrf_words(reference);

    let mut stats = Vec::with_capacity(cfg.char_order + cfg.word_order);
    for n in 1..=cfg.char_order {
        stats.push(order_stats(&hyp_chars, &ref_chars, n));
    }
    for n in 1..=cfg.word_order {
        stats.push(order_stats(&hyp_words, &ref_words, n));
    }

    let b2 = cfg.beta * cfg.beta;
    let mut total = 0.0;
    let mut effective = 0usize;
    for (h, r, m) in stats {
        if h == 0 || r == 0 {
            continue;
        }
        effective += 1;
        if m == 0 {
            continue;
        }
        let p = m as f64 / h as f64;
        let rec = m as f64 / r as f64;
        total += (1.0 + b2) * p * rec / (b2 * p + rec);
    }
    if effective == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * total / effective as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_100() {
        let c = ChrfConfig::default();
        assert!((chrf_pp("the cat sat.", "the cat sat.", &c).unwrap() - 100.0).abs() < 1e-12);
        assert!((chrf_pp("ab", "ab", &c).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(chrf_pp("abc", "xyz", &ChrfConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn empty_inputs() {
        let c = ChrfConfig::default();
        assert_eq!(chrf_pp("", "abc", &c).unwrap(), 0.0);
        assert!(chrf_pp("abc", "  ", &c).is_err());
    }

    #[test]
    fn single_substitution_by_hand() {
        // char orders 1-4: F = 3/4, 2/3, 1/2, 0; word order 1: 0
        let v = chrf_pp("abcd", "abce", &ChrfConfig::default()).unwrap();
        let want = 100.0 * (0.75 + 2.0 / 3.0 + 0.5 + 0.0 + 0.0) / 5.0;
        assert!((v - want).abs() < 1e-9);
    }

    #[test]
    fn punctuation_split() {
        assert_eq!(chrf_words("hi, there ,x"), vec!["hi", ",", "there", ",", "x"]);
    }
}
