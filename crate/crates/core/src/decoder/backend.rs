use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::ensemble::{ensemble, ensemble_masked, nucleus_mask, top_p_filter};
use crate::datastore::{Datastore, DatastoreConfig, SparseKnn};
use crate::error::{DetoxError, Result};
use crate::experts::ExpertPair;
use crate::lm::{ContextKeyer, Distribution, LogitVector, NgramLm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Retrieval,
    Experts,
    BaseOnly,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Retrieval => "retrieval",
            BackendKind::Experts => "experts",
            BackendKind::BaseOnly => "base_only",
        })
    }
}

impl std::str::FromStr for BackendKind {
    type Err = DetoxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrieval" => Ok(BackendKind::Retrieval),
            "experts" => Ok(BackendKind::Experts),
            "base_only" | "base" => Ok(BackendKind::BaseOnly),
            other => Err(DetoxError::config(format!("unknown backend {other:?}"))),
        }
    }
}

/// Where nucleus filtering happens relative to the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStage {
    /// Filter the base distribution, then ensemble over the surviving tokens.
    BeforeEnsemble,
    /// Ensemble first, then filter the combined distribution.
    AfterEnsemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub backend: BackendKind,
    pub alpha: f64,
    pub top_p: f64,
    /// `None` picks the backend default: after the ensemble for retrieval,
    /// before it for experts.
    #[serde(default)]
    pub filter_stage: Option<FilterStage>,
}

impl EnsembleConfig {
    pub fn new(backend: BackendKind) -> Self {
        EnsembleConfig {
            backend,
            alpha: 2.0,
            top_p: 0.9,
            filter_stage: None,
        }
    }

    pub fn stage(&self) -> FilterStage {
        self.filter_stage.unwrap_or(match self.backend {
            BackendKind::Experts => FilterStage::BeforeEnsemble,
            BackendKind::Retrieval | BackendKind::BaseOnly => FilterStage::AfterEnsemble,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(DetoxError::config("alpha must be finite"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(DetoxError::config("top_p must lie in (0, 1]"));
        }
        Ok(())
    }
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig::new(BackendKind::BaseOnly)
    }
}

/// A toxic / non-toxic datastore pair with its query settings.
///
/// kNN results depend only on the sorted key window of a context, so they
/// are memoized per window.
pub struct RetrievalResources {
    pub toxic: Datastore,
    pub nontoxic: Datastore,
    pub keyer: ContextKeyer,
    pub config: DatastoreConfig,
    cache: Mutex<HashMap<Vec<u32>, Arc<(SparseKnn, SparseKnn)>>>,
}

impl RetrievalResources {
    pub fn new(toxic: Datastore, nontoxic: Datastore, keyer: ContextKeyer, config: DatastoreConfig) -> Result<Self> {
        config.validate()?;
        for ds in [&toxic, &nontoxic] {
            if ds.key_config() != keyer.config() {
                return Err(DetoxError::config("datastore was built with a different key configuration"));
            }
            if ds.is_empty() {
                return Err(DetoxError::EmptyDatastore);
            }
        }
        Ok(RetrievalResources {
            toxic,
            nontoxic,
            keyer,
            config,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// `(z_plus, z_minus)` from the non-toxic and toxic stores.
    pub fn logits(&self, context: &[u32]) -> Result<(LogitVector, LogitVector)> {
        let window = self.keyer.window_of(context);
        let cached = self.cache.lock().unwrap().get(&window).cloned();
        let pair = match cached {
            Some(p) => p,
            None => {
                let key = self.keyer.key(context);
                let pair = Arc::new((
                    self.nontoxic.knn_sparse(&key, &self.config)?,
                    self.toxic.knn_sparse(&key, &self.config)?,
                ));
                self.cache.lock().unwrap().insert(window, pair.clone());
                pair
            }
        };
        let v = self.keyer.vocab_size();
        Ok((pair.0.to_logits(v), pair.1.to_logits(v)))
    }
}

impl fmt::Debug for RetrievalResources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RetrievalResources")
            .field("toxic_entries", &self.toxic.len())
            .field("nontoxic_entries", &self.nontoxic.len())
            .field("config", &self.config)
            .finish()
    }
}

/// Everything the decoder may draw on besides the base model.
#[derive(Debug, Default)]
pub struct BackendResources {
    pub retrieval: Option<RetrievalResources>,
    pub experts: Option<ExpertPair>,
}

/// Base model plus the resources for the configured backend.
#[derive(Debug)]
pub struct Decoder {
    base: Arc<NgramLm>,
    resources: BackendResources,
    config: EnsembleConfig,
}

impl Decoder {
    pub fn new(base: Arc<NgramLm>, resources: BackendResources, config: EnsembleConfig) -> Result<Self> {
        config.validate()?;
        let present = match config.backend {
            BackendKind::Retrieval => resources.retrieval.is_some(),
            BackendKind::Experts => resources.experts.is_some(),
            BackendKind::BaseOnly => true,
        };
        if !present {
            return Err(DetoxError::MissingBackend(config.backend.to_string()));
        }
        Ok(Decoder {
            base,
            resources,
            config,
        })
    }

    pub fn base_only(base: Arc<NgramLm>, top_p: f64) -> Result<Self> {
        let mut cfg = EnsembleConfig::new(BackendKind::BaseOnly);
        cfg.top_p = top_p;
        Decoder::new(base, BackendResources::default(), cfg)
    }

    pub fn base(&self) -> &Arc<NgramLm> {
        &self.base
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn resources(&self) -> &BackendResources {
        &self.resources
    }

    fn expert_logits(&self, context: &[u32]) -> Result<(LogitVector, LogitVector)> {
        match self.config.backend {
            BackendKind::Retrieval => self
                .resources
                .retrieval
                .as_ref()
                .ok_or_else(|| DetoxError::MissingBackend("retrieval".into()))?
                .logits(context),
            BackendKind::Experts => Ok(self
                .resources
                .experts
                .as_ref()
                .ok_or_else(|| DetoxError::MissingBackend("experts".into()))?
                .logits(context)),
            BackendKind::BaseOnly => unreachable!("base_only has no expert logits"),
        }
    }

    /// The unfiltered ensemble `softmax(z + alpha (z_plus - z_minus))`.
    pub fn ensembled(&self, context: &[u32]) -> Result<Distribution> {
        let z = self.base.next_logits(context);
        if self.config.backend == BackendKind::BaseOnly {
            return Ok(z.softmax());
        }
        let (zp, zm) = self.expert_logits(context)?;
        ensemble(&z, &zp, &zm, self.config.alpha)
    }

    /// Sampling distribution for the next token.
    pub fn next_token_distribution(&self, context: &[u32]) -> Result<Distribution> {
        let z = self.base.next_logits(context);
        let top_p = self.config.top_p;
        if self.config.backend == BackendKind::BaseOnly {
            return top_p_filter(&z.softmax(), top_p);
        }
        let (zp, zm) = self.expert_logits(context)?;
        match self.config.stage() {
            FilterStage::AfterEnsemble => top_p_filter(&ensemble(&z, &zp, &zm, self.config.alpha)?, top_p),
            FilterStage::BeforeEnsemble => {
                let keep = nucleus_mask(&z.softmax(), top_p)?;
                ensemble_masked(&z, &zp, &zm, self.config.alpha, &keep)
            }
        }
    }
}
