use std::collections::HashSet;
use std::hash::Hash;

use crate::decoder::GenerationRecord;
use crate::error::{DetoxError, Result};
use crate::lm::{split_words, NgramLm};

/// distinct-n: for each prompt, unique n-grams across its continuations
/// divided by the total number of generated tokens; then averaged over
/// prompts. Prompts where no continuation has `n` tokens are skipped.
pub fn distinct_n<T: Hash + Eq>(per_prompt: &[Vec<Vec<T>>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(DetoxError::config("n-gram order must be >= 1"));
    }
    let mut values = Vec::with_capacity(per_prompt.len());
    for continuations in per_prompt {
        if !continuations.iter().any(|c| c.len() >= n) {
            continue;
        }
        let total: usize = continuations.iter().map(Vec::len).sum();
        let unique: HashSet<&[T]> = continuations
            .iter()
            .filter(|c| c.len() >= n)
            .flat_map(|c| c.windows(n))
            .collect();
        values.push(unique.len() as f64 / total as f64);
    }
    if values.is_empty() {
        return Err(DetoxError::config(format!("no continuation has at least {n} tokens")));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Continuation word tokens, grouped by prompt.
pub fn continuation_words(records: &[GenerationRecord]) -> Vec<Vec<Vec<String>>> {
    records
        .iter()
        .map(|r| r.continuations.iter().map(|c| split_words(c)).collect())
        .collect()
}

/// Mean perplexity of every continuation under the base model, each scored
/// as a standalone sequence (BOS, tokens, EOS).
pub fn fluency(records: &[GenerationRecord], base: &NgramLm) -> Result<f64> {
    let vocab = base.vocab();
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in records {
        for c in &r.continuations {
            let seq = vocab.encode(c, &r.lang);
            sum += base.perplexity(&seq.ids)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(DetoxError::config("no continuations to score for fluency"));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::decoder::{BackendKind, EnsembleConfig, GenerationConfig};
    use crate::lm::Vocab;

    fn toks(s: &str) -> Vec<String> {
        split_words(s)
    }

    #[test]
    fn repeated_unigram() {
        assert_eq!(distinct_n(&[vec![toks("x x x x")]], 1).unwrap(), 0.25);
    }

    #[test]
    fn all_distinct() {
        assert_eq!(distinct_n(&[vec![toks("a b c d e")]], 1).unwrap(), 1.0);
    }

    #[test]
    fn alternating_bigrams() {
        assert_eq!(distinct_n(&[vec![toks("a b a b")]], 2).unwrap(), 0.5);
    }

    #[test]
    fn pooled_within_prompt_averaged_across() {
        // prompt 1: {a, b} over 4 tokens; prompt 2: {c} over 1 token
        let v = distinct_n(&[vec![toks("a b"), toks("b a")], vec![toks("c")]], 1).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
    }

    #[test]
    fn too_short() {
        assert!(distinct_n(&[vec![toks("a"), toks("")]], 2).is_err());
    }

    fn record(continuations: &[&str]) -> GenerationRecord {
        GenerationRecord {
            prompt_index: 0,
            prompt: String::new(),
            lang: "x".into(),
            continuations: continuations.iter().map(|s| s.to_string()).collect(),
            token_counts: continuations.iter().map(|s| split_words(s).len()).collect(),
            backend: BackendKind::BaseOnly,
            ensemble: EnsembleConfig::default(),
            generation: GenerationConfig::default(),
        }
    }

    #[test]
    fn uniform_model_fluency_is_vocab_size() {
        let vocab = Arc::new(Vocab::from_words(["a", "b", "c"]));
        let lm = NgramLm::uniform(vocab);
        let f = fluency(&[record(&["a b", "c", ""])], &lm).unwrap();
        assert!((f - 6.0).abs() < 1e-12);
    }

    #[test]
    fn fluency_is_arithmetic_mean() {
        // unigram over {a, b, EOS} observed as a a a b EOS ... choose counts so
        // that perplexities are easy: p(a)=1/2, p(b)=1/4, p(EOS)=1/4
        let vocab = Arc::new(Vocab::from_words(["a", "b"]));
        let seq = vocab.encode("a b", "x");
        let seq2 = vocab.encode("a", "x");
        let lm = NgramLm::train(&[seq, seq2], 1, crate::lm::SmoothingConfig::unsmoothed(1), vocab.clone()).unwrap();
        let p1 = lm.perplexity(&vocab.encode("a", "x").ids).unwrap();
        let p2 = lm.perplexity(&vocab.encode("b b", "x").ids).unwrap();
        let f = fluency(&[record(&["a", "b b"])], &lm).unwrap();
        assert!((f - (p1 + p2) / 2.0).abs() < 1e-12);
    }
}
