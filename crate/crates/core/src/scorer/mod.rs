//! Toxicity scoring: an offline lexicon scorer, a Perspective-compatible
//! HTTP client, a persistent score cache and concurrent batch scoring.

mod batch;
mod cache;
mod lexicon;
mod perspective;

pub use batch::{score_batch, BatchOptions, ItemFailure, ScoredBatch};
pub use cache::{text_hash, CachedScorer, ScoreCache};
pub use lexicon::LexiconScorer;
pub use perspective::{parse_toxicity, perspective_mock_handler, PerspectiveScorer, API_KEY_VAR, DEFAULT_ENDPOINT};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityScore {
    pub value: f64,
    pub scorer_id: String,
    pub language: String,
}

pub trait ToxicityScorer: Send + Sync {
    fn id(&self) -> &str;
    fn score(&self, text: &str, language: &str) -> Result<ToxicityScore>;
}

impl<T: ToxicityScorer + ?Sized> ToxicityScorer for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, text: &str, language: &str) -> Result<ToxicityScore> {
        (**self).score(text, language)
    }
}

impl<T: ToxicityScorer + ?Sized> ToxicityScorer for std::sync::Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn score(&self, text: &str, language: &str) -> Result<ToxicityScore> {
        (**self).score(text, language)
    }
}
