use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ToxicityScorer;
use crate::decoder::GenerationRecord;
use crate::error::{DetoxError, Result};
use crate::metrics::ScoreMatrix;
use crate::pool::bounded_map;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchOptions {
    pub max_in_flight: usize,
    /// The batch fails when more than this fraction of items is unscored.
    pub max_unscored_fraction: f64,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            max_in_flight: 4,
            max_unscored_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub prompt: usize,
    pub continuation: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBatch {
    pub scorer_id: String,
    /// prompts x continuations; `None` where scoring failed.
    pub matrix: ScoreMatrix,
    pub failures: Vec<ItemFailure>,
}

/// Scores every continuation of every record with at most
/// `max_in_flight` concurrent calls. Result placement depends only on
/// (prompt, continuation) position, never on completion order.
pub fn score_batch(records: &[GenerationRecord], scorer: &dyn ToxicityScorer, opts: &BatchOptions) -> Result<ScoredBatch> {
    if records.is_empty() {
        return Err(DetoxError::config("no generation records to score"));
    }
    let items: Vec<(usize, usize, &str, &str)> = records
        .iter()
        .enumerate()
        .flat_map(|(p, r)| {
            r.continuations
                .iter()
                .enumerate()
                .map(move |(c, text)| (p, c, text.as_str(), r.lang.as_str()))
        })
        .collect();
    // identical (text, language) pairs are scored once
    let mut unique: Vec<(&str, &str)> = Vec::new();
    let mut slot_of: HashMap<(&str, &str), usize> = HashMap::new();
    let slots: Vec<usize> = items
        .iter()
        .map(|&(_, _, text, lang)| {
            *slot_of.entry((text, lang)).or_insert_with(|| {
                unique.push((text, lang));
                unique.len() - 1
            })
        })
        .collect();
    let results: Vec<std::result::Result<f64, String>> = bounded_map(&unique, opts.max_in_flight, |&(text, lang)| {
        scorer.score(text, lang).map(|s| s.value).map_err(|e| e.to_string())
    });

    let mut matrix: ScoreMatrix = records.iter().map(|r| vec![None; r.continuations.len()]).collect();
    let mut failures = Vec::new();
    for (&(p, c, _, _), &slot) in items.iter().zip(&slots) {
        match &results[slot] {
            Ok(v) => matrix[p][c] = Some(*v),
            Err(e) => {
                log::warn!("prompt {p} continuation {c} unscored: {e}");
                failures.push(ItemFailure {
                    prompt: p,
                    continuation: c,
                    error: e.clone(),
                });
            }
        }
    }
    if !items.is_empty() && failures.len() as f64 > opts.max_unscored_fraction * items.len() as f64 {
        return Err(DetoxError::TooManyFailures {
            failed: failures.len(),
            total: items.len(),
        });
    }
    Ok(ScoredBatch {
        scorer_id: scorer.id().to_string(),
        matrix,
        failures,
    })
}
