use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::logits::{LogitVector, MIN_LOGIT};
use super::vocab::{TokenSequence, Vocab};
use crate::error::{DetoxError, Result};

/// Interpolation weights (one per order, lowest order first) and an add-k
/// constant applied inside every order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub lambdas: Vec<f64>,
    pub add_k: f64,
}

impl SmoothingConfig {
    /// Maximum-likelihood estimate of the highest order only.
    pub fn unsmoothed(order: usize) -> Self {
        let mut lambdas = vec![0.0; order];
        lambdas[order - 1] = 1.0;
        SmoothingConfig { lambdas, add_k: 0.0 }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.lambdas.len() != order {
            return Err(DetoxError::config(format!(
                "expected {order} interpolation weights, got {}",
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(DetoxError::config("interpolation weights must be non-negative"));
        }
        let sum: f64 = self.lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DetoxError::config(format!(
                "interpolation weights must sum to 1 (got {sum})"
            )));
        }
        if !self.add_k.is_finite() || self.add_k < 0.0 {
            return Err(DetoxError::config("add-k must be non-negative"));
        }
        Ok(())
    }
}

/// Next-token counts observed after one context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ContextCounts {
    pub(crate) total: u64,
    /// Sorted by token id.
    pub(crate) next: Vec<(u32, u32)>,
}

impl ContextCounts {
    pub(crate) fn from_map(map: HashMap<u32, u32>) -> Self {
        let mut next: Vec<(u32, u32)> = map.into_iter().collect();
        next.sort_unstable();
        let total = next.iter().map(|&(_, c)| c as u64).sum();
        ContextCounts { total, next }
    }

    fn count(&self, token: u32) -> u32 {
        self.next
            .binary_search_by_key(&token, |&(t, _)| t)
            .map(|i| self.next[i].1)
            .unwrap_or(0)
    }
}

/// Count tables for one order: context (of length `order - 1`) → counts.
pub(crate) type OrderTable = HashMap<Vec<u32>, ContextCounts>;

/// Interpolated add-k n-gram language model.
///
/// Contexts are left-padded with BOS to `order - 1` tokens, both when
/// counting and when querying, so every position has a full-length context.
/// An order whose context was never observed drops out of the interpolation
/// and the remaining weights are renormalized. If every observed order has
/// zero weight, the longest observed order is used alone.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm {
    vocab: Arc<Vocab>,
    order: usize,
    smoothing: SmoothingConfig,
    /// `tables[j]` holds contexts of length `j`.
    tables: Vec<OrderTable>,
}

impl NgramLm {
    pub fn train(
        corpus: &[TokenSequence],
        order: usize,
        smoothing: SmoothingConfig,
        vocab: Arc<Vocab>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(DetoxError::config("n-gram order must be at least 1"));
        }
        smoothing.validate(order)?;
        if corpus.iter().all(|s| s.ids.len() < 2) {
            return Err(DetoxError::EmptyCorpus);
        }
        let v = vocab.len() as u32;
        let mut raw: Vec<HashMap<Vec<u32>, HashMap<u32, u32>>> = vec![HashMap::new(); order];
        for seq in corpus {
            if let Some(&bad) = seq.ids.iter().find(|&&id| id >= v) {
                return Err(DetoxError::config(format!("token id {bad} outside vocabulary")));
            }
            let padded = pad_left(&seq.ids, order - 1);
            // padded[pad..] is the original sequence; its first element is the
            // context start and is never itself a target.
            let pad = padded.len() - seq.ids.len();
            for pos in (pad + 1)..padded.len() {
                let target = padded[pos];
                for (ctx_len, table) in raw.iter_mut().enumerate() {
                    let ctx = padded[pos - ctx_len..pos].to_vec();
                    *table.entry(ctx).or_default().entry(target).or_insert(0) += 1;
                }
            }
        }
        let tables = raw
            .into_iter()
            .map(|t| {
                t.into_iter()
                    .map(|(ctx, m)| (ctx, ContextCounts::from_map(m)))
                    .collect()
            })
            .collect();
        Ok(NgramLm {
            vocab,
            order,
            smoothing,
            tables,
        })
    }

    /// An untrained unigram model with add-one smoothing: uniform over the
    /// vocabulary.
    pub fn uniform(vocab: Arc<Vocab>) -> Self {
        NgramLm {
            vocab,
            order: 1,
            smoothing: SmoothingConfig {
                lambdas: vec![1.0],
                add_k: 1.0,
            },
            tables: vec![HashMap::new()],
        }
    }

    pub(crate) fn from_parts(
        vocab: Arc<Vocab>,
        order: usize,
        smoothing: SmoothingConfig,
        tables: Vec<OrderTable>,
    ) -> Result<Self> {
        smoothing.validate(order)?;
        if tables.len() != order {
            return Err(DetoxError::format("table count does not match order"));
        }
        Ok(NgramLm {
            vocab,
            order,
            smoothing,
            tables,
        })
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> &SmoothingConfig {
        &self.smoothing
    }

    pub(crate) fn tables(&self) -> &[OrderTable] {
        &self.tables
    }

    /// Per-order (weight, counts) pairs that take part in the interpolation
    /// for this context. Weights sum to 1. Empty means "uniform".
    fn active_orders(&self, context: &[u32]) -> Vec<(f64, &ContextCounts)> {
        let ctx = pad_left_tail(context, self.order - 1);
        let mut seen: Vec<(usize, &ContextCounts)> = Vec::with_capacity(self.order);
        for (j, table) in self.tables.iter().enumerate() {
            let key = &ctx[ctx.len() - j..];
            if let Some(counts) = table.get(key) {
                if counts.total > 0 {
                    seen.push((j, counts));
                }
            }
        }
        let weight: f64 = seen.iter().map(|(j, _)| self.smoothing.lambdas[*j]).sum();
        if seen.is_empty() {
            return Vec::new();
        }
        if weight <= 0.0 {
            let (_, counts) = *seen.last().unwrap();
            return vec![(1.0, counts)];
        }
        seen.into_iter()
            .filter(|(j, _)| self.smoothing.lambdas[*j] > 0.0)
            .map(|(j, c)| (self.smoothing.lambdas[j] / weight, c))
            .collect()
    }

    /// Smoothed conditional distribution over the vocabulary.
    pub fn distribution(&self, context: &[u32]) -> Vec<f64> {
        let v = self.vocab.len();
        let active = self.active_orders(context);
        if active.is_empty() {
            return vec![1.0 / v as f64; v];
        }
        let k = self.smoothing.add_k;
        let base: f64 = active
            .iter()
            .map(|(w, c)| w * k / (c.total as f64 + k * v as f64))
            .sum();
        let mut probs = vec![base; v];
        for (w, c) in &active {
            let denom = c.total as f64 + k * v as f64;
            for &(t, n) in &c.next {
                probs[t as usize] += w * n as f64 / denom;
            }
        }
        probs
    }

    /// Probability of one token; agrees with `distribution(context)[token]`.
    pub fn prob(&self, context: &[u32], token: u32) -> f64 {
        let v = self.vocab.len() as f64;
        let active = self.active_orders(context);
        if active.is_empty() {
            return 1.0 / v;
        }
        let k = self.smoothing.add_k;
        let base: f64 = active
            .iter()
            .map(|(w, c)| w * k / (c.total as f64 + k * v))
            .sum();
        active.iter().fold(base, |acc, (w, c)| {
            acc + w * c.count(token) as f64 / (c.total as f64 + k * v)
        })
    }

    /// Log-probabilities as logits. Zero-probability tokens get `MIN_LOGIT`.
    pub fn next_logits(&self, context: &[u32]) -> LogitVector {
        LogitVector::from_probs(&self.distribution(context))
    }

    /// exp of the mean negative log-likelihood over every token after the
    /// leading BOS (EOS included).
    pub fn perplexity(&self, seq: &[u32]) -> Result<f64> {
        if seq.len() < 2 {
            return Err(DetoxError::config("perplexity needs at least one scored token"));
        }
        let mut nll = 0.0;
        for pos in 1..seq.len() {
            let p = self.prob(&seq[..pos], seq[pos]);
            if p <= 0.0 {
                return Err(DetoxError::InfinitePerplexity {
                    token: seq[pos],
                    position: pos,
                });
            }
            nll -= p.ln();
        }
        Ok((nll / (seq.len() - 1) as f64).exp())
    }
}

/// Natural-log logit of a probability, floored at `MIN_LOGIT`.
pub(crate) fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(MIN_LOGIT)
    } else {
        MIN_LOGIT
    }
}

fn pad_left(ids: &[u32], pad: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len() + pad);
    out.extend(std::iter::repeat_n(Vocab::BOS_ID, pad));
    out.extend_from_slice(ids);
    out
}

/// The last `len` ids of `ids`, left-padded with BOS when too short.
pub(crate) fn pad_left_tail(ids: &[u32], len: usize) -> Vec<u32> {
    if ids.len() >= len {
        ids[ids.len() - len..].to_vec()
    } else {
        pad_left(ids, len - ids.len())
    }
}
