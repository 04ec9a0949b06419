use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ToxicityScore, ToxicityScorer};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    scorer: String,
    lang: String,
    hash: String,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    scorer: String,
    lang: String,
    hash: String,
    value: f64,
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Score cache keyed by (scorer id, language, SHA-256 of text), optionally
/// backed by an append-only JSONL log.
#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: Mutex<HashMap<CacheKey, f64>>,
    log: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        ScoreCache::default()
    }

    /// Opens (or creates) a log file and loads every line already in it.
    /// Later lines win on duplicate keys.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(l) => {
                        entries.insert(
                            CacheKey {
                                scorer: l.scorer,
                                lang: l.lang,
                                hash: l.hash,
                            },
                            l.value,
                        );
                    }
                    Err(e) => log::warn!("{}:{}: skipping bad cache line: {e}", path.display(), i + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(ScoreCache {
            entries: Mutex::new(entries),
            log: Some(Mutex::new(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, scorer: &str, lang: &str, text: &str) -> Option<f64> {
        let key = CacheKey {
            scorer: scorer.into(),
            lang: lang.into(),
            hash: text_hash(text),
        };
        self.entries.lock().unwrap().get(&key).copied()
    }

    pub fn put(&self, scorer: &str, lang: &str, text: &str, value: f64) -> Result<()> {
        let hash = text_hash(text);
        let key = CacheKey {
            scorer: scorer.into(),
            lang: lang.into(),
            hash: hash.clone(),
        };
        let mut entries = self.entries.lock().unwrap();
        if entries.insert(key, value).is_none() {
            if let Some(log) = &self.log {
                let line = serde_json::to_string(&CacheLine {
                    scorer: scorer.into(),
                    lang: lang.into(),
                    hash,
                    value,
                })?;
                let mut f = log.lock().unwrap();
                writeln!(f, "{line}")?;
                f.flush()?;
            }
        }
        Ok(())
    }
}

/// Wraps a scorer so that each (text, language) is scored at most once.
pub struct CachedScorer<S> {
    inner: S,
    cache: ScoreCache,
}

impl<S: ToxicityScorer> CachedScorer<S> {
    pub fn new(inner: S, cache: ScoreCache) -> Self {
        CachedScorer { inner, cache }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn cache(&self) -> &ScoreCache {
        &self.cache
    }
}

impl<S: ToxicityScorer> ToxicityScorer for CachedScorer<S> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn score(&self, text: &str, language: &str) -> Result<ToxicityScore> {
        let id = self.inner.id();
        if let Some(value) = self.cache.get(id, language, text) {
            return Ok(ToxicityScore {
                value,
                scorer_id: id.to_string(),
                language: language.to_string(),
            });
        }
        let score = self.inner.score(text, language)?;
        self.cache.put(id, language, text, score.value)?;
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    struct Counting(AtomicUsize);

    impl ToxicityScorer for Counting {
        fn id(&self) -> &str {
            "counting"
        }
        fn score(&self, text: &str, language: &str) -> Result<ToxicityScore> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(ToxicityScore {
                value: text.len() as f64 / 100.0,
                scorer_id: "counting".into(),
                language: language.into(),
            })
        }
    }

    #[test]
    fn second_lookup_hits_cache() {
        let s = CachedScorer::new(Counting(AtomicUsize::new(0)), ScoreCache::in_memory());
        let a = s.score("hello", "en").unwrap();
        let b = s.score("hello", "en").unwrap();
        let _ = s.score("hello", "fr").unwrap();
        assert_eq!(a, b);
        assert_eq!(s.inner().0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn log_persists_across_opens() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let c = ScoreCache::open(&path).unwrap();
            c.put("x", "en", "some text", 0.25).unwrap();
            c.put("x", "en", "some text", 0.25).unwrap();
        }
        let lines = std::fs::read_to_string(&path).unwrap();
        assert_eq!(lines.lines().count(), 1);
        let c = ScoreCache::open(&path).unwrap();
        assert_eq!(c.get("x", "en", "some text"), Some(0.25));
        assert_eq!(c.get("y", "en", "some text"), None);
    }
}
