use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{LabeledSample, Origin};
use crate::error::{DetoxError, Result};
use crate::http::mock::{MockRequest, MockResponse};
use crate::http::{ClientConfig, JsonClient};
use crate::lm::split_words;
use crate::pool::bounded_map;
use crate::rng;

pub trait MtProvider: Send + Sync {
    fn id(&self) -> &str;
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String>;
}

impl<T: MtProvider + ?Sized> MtProvider for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        (**self).translate(text, source, target)
    }
}

impl<T: MtProvider + ?Sized> MtProvider for Arc<T> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        (**self).translate(text, source, target)
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl MtProvider for IdentityProvider {
    fn id(&self) -> &str {
        "identity"
    }

    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Word-for-word translation tables per (source, target) pair. Words
/// without an entry pass through unchanged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dictionary {
    pairs: HashMap<(String, String), HashMap<String, String>>,
}

impl Dictionary {
    pub fn new() -> Self {
        Dictionary::default()
    }

    pub fn insert(&mut self, source: &str, target: &str, word: &str, translation: &str) {
        self.pairs
            .entry((source.to_string(), target.to_string()))
            .or_default()
            .insert(word.to_string(), translation.to_string());
    }

    pub fn translate_word<'a>(&'a self, source: &str, target: &str, word: &'a str) -> &'a str {
        self.pairs
            .get(&(source.to_string(), target.to_string()))
            .and_then(|m| m.get(word))
            .map_or(word, String::as_str)
    }
}

/// Mock translator that drops each word with probability `deletion_rate`.
/// The deletion pattern is a function of (seed, text, language pair), so
/// repeated calls agree.
#[derive(Debug, Clone)]
pub struct LossyProvider {
    id: String,
    seed: u64,
    deletion_rate: f64,
    dictionary: Option<Arc<Dictionary>>,
}

impl LossyProvider {
    pub fn new(seed: u64, deletion_rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&deletion_rate) {
            return Err(DetoxError::config(format!("deletion rate {deletion_rate} outside [0, 1]")));
        }
        Ok(LossyProvider {
            id: format!("lossy-{deletion_rate}"),
            seed,
            deletion_rate,
            dictionary: None,
        })
    }

    pub fn with_dictionary(mut self, dictionary: Arc<Dictionary>) -> Self {
        self.dictionary = Some(dictionary);
        self
    }

    pub fn deletion_rate(&self) -> f64 {
        self.deletion_rate
    }
}

impl MtProvider for LossyProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        let mut r = rng::stream(&[self.seed, rng::hash_str(source), rng::hash_str(target), rng::hash_str(text)]);
        let words = split_words(text);
        let kept: Vec<&str> = words
            .iter()
            .filter(|_| r.random::<f64>() >= self.deletion_rate)
            .map(|w| match &self.dictionary {
                Some(d) => d.translate_word(source, target, w),
                None => w.as_str(),
            })
            .collect();
        Ok(kept.join(" "))
    }
}

/// Client for a LibreTranslate-compatible endpoint:
/// `POST {endpoint}/translate` with `{"q", "source", "target", "format"}`,
/// answer `{"translatedText"}`.
#[derive(Debug)]
pub struct RemoteMtProvider {
    endpoint: String,
    api_key: Option<String>,
    client: JsonClient,
}

impl RemoteMtProvider {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, cfg: &ClientConfig) -> Self {
        RemoteMtProvider {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key,
            client: JsonClient::new(cfg),
        }
    }

    pub fn requests_sent(&self) -> usize {
        self.client.requests_sent()
    }
}

impl MtProvider for RemoteMtProvider {
    fn id(&self) -> &str {
        "remote"
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        let mut body = json!({"q": text, "source": source, "target": target, "format": "text"});
        if let Some(k) = &self.api_key {
            body["api_key"] = json!(k);
        }
        let resp = self.client.post_json(&format!("{}/translate", self.endpoint), &body)?;
        resp.get("translatedText")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| DetoxError::Unparseable("missing translatedText".into()))
    }
}

/// Handler imitating the translate endpoint with `translate_fn`.
pub fn mt_mock_handler<F>(translate_fn: F) -> impl Fn(&MockRequest) -> MockResponse + Send + Sync
where
    F: Fn(&str, &str, &str) -> String + Send + Sync,
{
    move |req: &MockRequest| {
        let Ok(body) = serde_json::from_str::<Value>(&req.body) else {
            return MockResponse::json(400, r#"{"error":"bad json"}"#);
        };
        let field = |k: &str| body.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let out = translate_fn(&field("q"), &field("source"), &field("target"));
        MockResponse::json(200, json!({ "translatedText": out }).to_string())
    }
}

/// Memoizes another provider so each (text, pair) is translated once per run.
pub struct CachedProvider<P> {
    inner: P,
    cache: Mutex<HashMap<(String, String, String), String>>,
}

impl<P: MtProvider> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        CachedProvider {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: MtProvider> MtProvider for CachedProvider<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        let key = (text.to_string(), source.to_string(), target.to_string());
        if let Some(t) = self.cache.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let t = self.inner.translate(text, source, target)?;
        self.cache.lock().unwrap().insert(key, t.clone());
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslateOptions {
    pub max_in_flight: usize,
    pub max_failure_fraction: f64,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        TranslateOptions {
            max_in_flight: 4,
            max_failure_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationFailure {
    pub index: usize,
    pub source_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TranslatedBatch {
    pub samples: Vec<LabeledSample>,
    pub failures: Vec<TranslationFailure>,
}

/// Translates every sample into `target`. Labels, source ids and parallel
/// groups carry over; origin becomes `translated`. Failed items are listed
/// instead of returned, and the batch fails when they exceed
/// `max_failure_fraction`.
pub fn translate_batch(
    samples: &[LabeledSample],
    provider: &dyn MtProvider,
    target: &str,
    opts: &TranslateOptions,
) -> Result<TranslatedBatch> {
    let results = bounded_map(samples, opts.max_in_flight, |s| provider.translate(&s.text, &s.lang, target));
    let mut out = TranslatedBatch::default();
    for (i, (s, r)) in samples.iter().zip(results).enumerate() {
        match r {
            Ok(text) => out.samples.push(LabeledSample {
                text,
                lang: target.to_string(),
                label: s.label,
                source_id: s.source_id.clone(),
                parallel_group: s.parallel_group,
                origin: Origin::Translated,
            }),
            Err(e) => {
                log::warn!("translation of {} into {target} failed: {e}", s.source_id);
                out.failures.push(TranslationFailure {
                    index: i,
                    source_id: s.source_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    if out.failures.len() as f64 > opts.max_failure_fraction * samples.len() as f64 {
        return Err(DetoxError::TooManyFailures {
            failed: out.failures.len(),
            total: samples.len(),
        });
    }
    Ok(out)
}
