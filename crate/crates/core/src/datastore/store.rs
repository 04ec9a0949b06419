use serde::{Deserialize, Serialize};

use super::index::{flat_search, GroupedIndex, Neighbor};
use crate::corpus::{Label, LabeledSample};
use crate::error::{DetoxError, Result};
use crate::lm::{ContextKeyConfig, ContextKeyer, LogitVector, Vocab};

/// Retrieval hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatastoreConfig {
    pub neighbors: usize,
    pub temperature: f64,
    /// Probability floor for tokens absent from the retrieved set.
    pub floor: f64,
}

impl Default for DatastoreConfig {
    fn default() -> Self {
        DatastoreConfig {
            neighbors: 1024,
            temperature: 200.0,
            floor: 1e-10,
        }
    }
}

impl DatastoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbors == 0 {
            return Err(DetoxError::config("neighbors must be >= 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DetoxError::config("knn temperature must be positive"));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(DetoxError::config("probability floor must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Per-language contribution to a datastore.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub language: String,
    pub samples: usize,
    pub entries: usize,
}

/// Append-only store of (context key, next token) pairs of one polarity.
#[derive(Debug, Clone)]
pub struct Datastore {
    polarity: Label,
    key_config: ContextKeyConfig,
    vocab_size: usize,
    keys: Vec<f32>,
    values: Vec<u32>,
    provenance: Vec<Provenance>,
    index: GroupedIndex,
}

impl Datastore {
    pub fn empty(polarity: Label, keyer: &ContextKeyer) -> Self {
        Datastore {
            polarity,
            key_config: *keyer.config(),
            vocab_size: keyer.vocab_size(),
            keys: Vec::new(),
            values: Vec::new(),
            provenance: Vec::new(),
            index: GroupedIndex::new(keyer.dim()),
        }
    }

    /// Builds a datastore with one entry per (prefix, next token) position of
    /// every tokenized sample.
    pub fn build(samples: &[LabeledSample], vocab: &Vocab, keyer: &ContextKeyer, polarity: Label) -> Result<Self> {
        if samples.is_empty() {
            return Err(DetoxError::EmptyDatastoreSource);
        }
        Datastore::empty(polarity, keyer).append(samples, vocab, keyer)
    }

    /// Returns a new version with `samples` appended. Existing entries keep
    /// their positions and values.
    pub fn append(&self, samples: &[LabeledSample], vocab: &Vocab, keyer: &ContextKeyer) -> Result<Self> {
        if keyer.config() != &self.key_config || keyer.vocab_size() != self.vocab_size {
            return Err(DetoxError::config("context key configuration differs from the datastore's"));
        }
        if let Some(bad) = samples.iter().find(|s| s.label != self.polarity) {
            return Err(DetoxError::config(format!(
                "sample {} is labeled {} but the datastore is {}",
                bad.source_id, bad.label, self.polarity
            )));
        }
        let mut next = self.clone();
        for sample in samples {
            let seq = vocab.encode(&sample.text, &sample.lang);
            let before = next.values.len();
            for pos in 1..seq.ids.len() {
                let key = keyer.key(&seq.ids[..pos]);
                next.index.insert(&key, next.values.len());
                next.keys.extend_from_slice(&key);
                next.values.push(seq.ids[pos]);
            }
            let added = next.values.len() - before;
            match next.provenance.iter_mut().find(|p| p.language == sample.lang) {
                Some(p) => {
                    p.samples += 1;
                    p.entries += added;
                }
                None => next.provenance.push(Provenance {
                    language: sample.lang.clone(),
                    samples: 1,
                    entries: added,
                }),
            }
        }
        Ok(next)
    }

    pub(crate) fn from_parts(
        polarity: Label,
        key_config: ContextKeyConfig,
        vocab_size: usize,
        keys: Vec<f32>,
        values: Vec<u32>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        let dim = key_config.dim;
        if keys.len() != values.len() * dim {
            return Err(DetoxError::format("key block size does not match entry count"));
        }
        if values.iter().any(|&v| v as usize >= vocab_size) {
            return Err(DetoxError::format("entry value outside vocabulary"));
        }
        let index = GroupedIndex::build(&keys, dim);
        Ok(Datastore {
            polarity,
            key_config,
            vocab_size,
            keys,
            values,
            provenance,
            index,
        })
    }

    pub fn polarity(&self) -> Label {
        self.polarity
    }

    pub fn key_config(&self) -> &ContextKeyConfig {
        &self.key_config
    }

    pub fn dim(&self) -> usize {
        self.key_config.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn key(&self, i: usize) -> &[f32] {
        &self.keys[i * self.dim()..(i + 1) * self.dim()]
    }

    pub fn keys(&self) -> &[f32] {
        &self.keys
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn distinct_keys(&self) -> usize {
        self.index.group_count()
    }

    fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim() {
            return Err(DetoxError::DimensionMismatch {
                expected: self.dim(),
                got: query.len(),
            });
        }
        if self.is_empty() {
            return Err(DetoxError::EmptyDatastore);
        }
        Ok(())
    }

    /// The `k` entries nearest to `query` by squared L2, ascending, ties
    /// broken by insertion order.
    pub fn knn_search(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        self.check_query(query)?;
        Ok(self.index.search(&self.values, query, k))
    }

    /// Same contract as `knn_search`, scanning every entry.
    pub fn knn_search_flat(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        self.check_query(query)?;
        Ok(flat_search(&self.keys, &self.values, self.dim(), query, k))
    }

    /// Next-token distribution from the retrieved neighbors, as logits.
    pub fn knn_logits(&self, query: &[f32], cfg: &DatastoreConfig) -> Result<LogitVector> {
        Ok(self.knn_sparse(query, cfg)?.to_logits(self.vocab_size))
    }

    pub fn knn_sparse(&self, query: &[f32], cfg: &DatastoreConfig) -> Result<SparseKnn> {
        let neighbors = self.knn_search(query, cfg.neighbors)?;
        Ok(SparseKnn::from_neighbors(&neighbors, self.vocab_size, cfg))
    }
}

/// Retrieved next-token distribution in sparse form: every token not in
/// `retrieved` has probability `floor_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseKnn {
    /// (token, probability), token ascending.
    pub retrieved: Vec<(u32, f64)>,
    pub floor_prob: f64,
}

impl SparseKnn {
    /// `p(w) ∝ Σ exp(-d/T)` over neighbors with value `w`; then every token
    /// is floored at `cfg.floor` and the vector renormalized.
    pub fn from_neighbors(neighbors: &[Neighbor], vocab_size: usize, cfg: &DatastoreConfig) -> Self {
        let mut weights: Vec<(u32, f64)> = Vec::new();
        if let Some(nearest) = neighbors.first() {
            // shift by the nearest distance; normalization cancels it
            let d0 = nearest.distance;
            let mut sorted: Vec<(u32, f64)> = neighbors
                .iter()
                .map(|n| (n.value, (-(n.distance - d0) / cfg.temperature).exp()))
                .collect();
            sorted.sort_by_key(|&(v, _)| v);
            for (v, w) in sorted {
                match weights.last_mut() {
                    Some((last, acc)) if *last == v => *acc += w,
                    _ => weights.push((v, w)),
                }
            }
        }
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let floored: Vec<(u32, f64)> = weights
            .into_iter()
            .map(|(v, w)| (v, (w / total).max(cfg.floor)))
            .collect();
        let unretrieved = vocab_size - floored.len();
        let z = floored.iter().map(|(_, p)| p).sum::<f64>() + unretrieved as f64 * cfg.floor;
        SparseKnn {
            retrieved: floored.into_iter().map(|(v, p)| (v, p / z)).collect(),
            floor_prob: cfg.floor / z,
        }
    }

    pub fn to_dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut out = vec![self.floor_prob; vocab_size];
        for &(v, p) in &self.retrieved {
            out[v as usize] = p;
        }
        out
    }

    pub fn to_logits(&self, vocab_size: usize) -> LogitVector {
        LogitVector::from_probs(&self.to_dense(vocab_size))
    }
}

pub fn neighbor_distribution(neighbors: &[Neighbor], vocab_size: usize, cfg: &DatastoreConfig) -> Vec<f64> {
    SparseKnn::from_neighbors(neighbors, vocab_size, cfg).to_dense(vocab_size)
}

pub fn neighbor_logits(neighbors: &[Neighbor], vocab_size: usize, cfg: &DatastoreConfig) -> LogitVector {
    SparseKnn::from_neighbors(neighbors, vocab_size, cfg).to_logits(vocab_size)
}
