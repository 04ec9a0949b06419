use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ngram::pad_left_tail;
use crate::error::{DetoxError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextKeyConfig {
    pub dim: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for ContextKeyConfig {
    fn default() -> Self {
        ContextKeyConfig {
            dim: 64,
            window: 4,
            seed: 0x6b6e_6e6c_6d00,
        }
    }
}

impl ContextKeyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 {
            return Err(DetoxError::config("context key dim and window must be >= 1"));
        }
        Ok(())
    }
}

/// Maps contexts to unit-norm key vectors: the normalized mean of fixed
/// Gaussian random embeddings of the last `window` token ids.
///
/// Ids are summed in sorted order, so two windows holding the same multiset
/// of tokens produce bit-identical keys.
#[derive(Debug, Clone)]
pub struct ContextKeyer {
    cfg: ContextKeyConfig,
    table: Vec<f32>,
    vocab_size: usize,
}

impl ContextKeyer {
    pub fn new(cfg: ContextKeyConfig, vocab_size: usize) -> Result<Self> {
        cfg.validate()?;
        let mut table = Vec::with_capacity(vocab_size * cfg.dim);
        for id in 0..vocab_size as u64 {
            table.extend(token_embedding(&cfg, id));
        }
        Ok(ContextKeyer {
            cfg,
            table,
            vocab_size,
        })
    }

    pub fn config(&self) -> &ContextKeyConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// The sorted window of ids a context's key depends on.
    pub fn window_of(&self, context: &[u32]) -> Vec<u32> {
        let mut w = pad_left_tail(context, self.cfg.window);
        w.sort_unstable();
        w
    }

    pub fn key(&self, context: &[u32]) -> Vec<f32> {
        self.key_of_window(&self.window_of(context))
    }

    fn key_of_window(&self, window: &[u32]) -> Vec<f32> {
        let d = self.cfg.dim;
        let mut acc = vec![0f32; d];
        for &id in window {
            let row = &self.table[id as usize * d..(id as usize + 1) * d];
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r;
            }
        }
        let m = window.len() as f32;
        for a in acc.iter_mut() {
            *a /= m;
        }
        let norm = acc.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for a in acc.iter_mut() {
                *a /= norm;
            }
        }
        acc
    }
}

fn token_embedding(cfg: &ContextKeyConfig, id: u64) -> Vec<f32> {
    let mut rng = rng::stream(&[cfg.seed, id]);
    (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Convenience wrapper: builds a keyer for `vocab_size` and keys one context.
pub fn context_key(context: &[u32], cfg: &ContextKeyConfig, vocab_size: usize) -> Result<Vec<f32>> {
    Ok(ContextKeyer::new(*cfg, vocab_size)?.key(context))
}
