use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::data::ExperimentData;
use crate::corpus::{Label, LabeledSample};
use crate::datastore::{write_datastore, Datastore};
use crate::decoder::{generate_all, BackendKind, BackendResources, Decoder, EnsembleConfig, GenerationRecord, RetrievalResources};
use crate::error::{DetoxError, Result, StageExt};
use crate::experts::ExpertPair;
use crate::lm::{write_lm, ContextKeyer};
use crate::metrics::{continuation_words, distinct_n, fluency, relative_emt, EmtResult, ScoreMatrix};
use crate::scorer::{score_batch, ToxicityScorer};

/// SHA-256 and size of one artifact; `saved` is false for artifacts that
/// were hashed in memory but not written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub sha256: String,
    pub bytes: u64,
    pub saved: bool,
}

pub type Artifacts = BTreeMap<String, ArtifactRecord>;

struct HashWriter {
    hasher: Sha256,
    bytes: u64,
    file: Option<BufWriter<File>>,
}

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if let Some(f) = &mut self.file {
            f.write_all(buf)?;
        }
        self.hasher.update(buf);
        self.bytes += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        match &mut self.file {
            Some(f) => f.flush(),
            None => Ok(()),
        }
    }
}

/// Writes (or only hashes) artifacts under a run's output directory.
#[derive(Debug, Clone)]
pub struct ArtifactSink {
    root: PathBuf,
}

impl ArtifactSink {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ArtifactSink { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `name` is relative to the root and becomes the artifact's key.
    pub fn record<F>(&self, into: &mut Artifacts, name: &str, save: bool, write: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let file = if save {
            let path = self.root.join(name);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)?;
            }
            Some(BufWriter::new(File::create(path)?))
        } else {
            None
        };
        let mut w = HashWriter {
            hasher: Sha256::new(),
            bytes: 0,
            file,
        };
        write(&mut w)?;
        w.flush()?;
        into.insert(
            name.to_string(),
            ArtifactRecord {
                sha256: hex::encode(w.hasher.finalize()),
                bytes: w.bytes,
                saved: save,
            },
        );
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
        Ok(())
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".detox.lock";

impl OutputLock {
    pub fn claim(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(DetoxError::config(format!(
                "{} is in use by another run (delete {} if that run is gone)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryCounts {
    pub toxic: usize,
    pub nontoxic: usize,
}

pub struct BuiltBackend {
    pub resources: BackendResources,
    pub entries: Option<EntryCounts>,
}

fn split_labels(samples: &[LabeledSample]) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    samples.iter().cloned().partition(|s| s.label == Label::Toxic)
}

/// Builds the datastores or experts for `backend` from `samples`, recording
/// artifact hashes under `prefix`.
pub fn build_backend(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    backend: BackendKind,
    samples: &[LabeledSample],
    sink: &ArtifactSink,
    prefix: &str,
    artifacts: &mut Artifacts,
) -> Result<BuiltBackend> {
    let (toxic, nontoxic) = split_labels(samples);
    let name = |f: &str| format!("{prefix}{f}");
    match backend {
        BackendKind::BaseOnly => Ok(BuiltBackend {
            resources: BackendResources::default(),
            entries: None,
        }),
        BackendKind::Retrieval => {
            let keyer = ContextKeyer::new(cfg.key, data.vocab.len())?;
            let save = cfg.artifacts.save_datastores;
            let tox = Datastore::build(&toxic, &data.vocab, &keyer, Label::Toxic)?;
            sink.record(artifacts, &name("toxic.dtkd"), save, |w| write_datastore(&tox, w))?;
            let non = Datastore::build(&nontoxic, &data.vocab, &keyer, Label::Nontoxic)?;
            sink.record(artifacts, &name("nontoxic.dtkd"), save, |w| write_datastore(&non, w))?;
            let entries = EntryCounts {
                toxic: tox.len(),
                nontoxic: non.len(),
            };
            Ok(BuiltBackend {
                resources: BackendResources {
                    retrieval: Some(RetrievalResources::new(tox, non, keyer, cfg.datastore)?),
                    experts: None,
                },
                entries: Some(entries),
            })
        }
        BackendKind::Experts => {
            let pair = ExpertPair::train(&toxic, &nontoxic, data.base.clone(), &cfg.experts)?;
            let save = cfg.artifacts.save_experts;
            if save {
                pair.save(sink.root().join(name("experts")))?;
            }
            sink.record(artifacts, &name("experts/expert.dtk"), save, |w| write_lm(pair.expert.own(), w))?;
            sink.record(artifacts, &name("experts/anti_expert.dtk"), save, |w| {
                write_lm(pair.anti_expert.own(), w)
            })?;
            Ok(BuiltBackend {
                resources: BackendResources {
                    retrieval: None,
                    experts: Some(pair),
                },
                entries: None,
            })
        }
    }
}

/// Metrics for one backend over the full prompt set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendEval {
    pub ensemble: EnsembleConfig,
    pub emt: EmtResult,
    /// Mean base-model perplexity of the continuations.
    pub fluency: f64,
    /// `distinct-n` for each configured order.
    pub distinct: BTreeMap<String, f64>,
    pub continuations: usize,
    pub unscored: usize,
    pub mean_tokens: f64,
}

impl BackendEval {
    pub fn distinct(&self, n: usize) -> Option<f64> {
        self.distinct.get(&format!("distinct-{n}")).copied()
    }
}

/// Generates, scores and measures one decoder. Generations are recorded as
/// `{prefix}generations.jsonl`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    decoder: &Decoder,
    scorer: &dyn ToxicityScorer,
    sink: &ArtifactSink,
    prefix: &str,
    artifacts: &mut Artifacts,
    warnings: &mut Vec<String>,
) -> Result<BackendEval> {
    let records = generate_all(decoder, &data.prompts, &cfg.generation).stage("generate")?;
    sink.record(
        artifacts,
        &format!("{prefix}generations.jsonl"),
        cfg.artifacts.save_generations,
        |w| write_records(&records, w),
    )?;
    let scored = score_batch(&records, scorer, &cfg.scorer.batch).stage("score")?;
    for f in &scored.failures {
        warnings.push(format!(
            "{prefix}prompt {} continuation {} unscored: {}",
            f.prompt, f.continuation, f.error
        ));
    }
    let mut by_language: BTreeMap<String, ScoreMatrix> = BTreeMap::new();
    for (r, row) in records.iter().zip(&scored.matrix) {
        by_language.entry(r.lang.clone()).or_default().push(row.clone());
    }
    let emt = EmtResult::from_matrices(&by_language).stage("metrics")?;
    let fl = fluency(&records, &data.base).stage("metrics")?;
    let words = continuation_words(&records);
    let mut distinct = BTreeMap::new();
    for &n in &cfg.metrics.distinct_orders {
        match distinct_n(&words, n) {
            Ok(v) => {
                distinct.insert(format!("distinct-{n}"), v);
            }
            Err(e) => warnings.push(format!("{prefix}distinct-{n} undefined: {e}")),
        }
    }
    let continuations: usize = records.iter().map(|r| r.continuations.len()).sum();
    let tokens: usize = records.iter().flat_map(|r| &r.token_counts).sum();
    Ok(BackendEval {
        ensemble: *decoder.config(),
        emt,
        fluency: fl,
        distinct,
        continuations,
        unscored: scored.failures.len(),
        mean_tokens: tokens as f64 / continuations.max(1) as f64,
    })
}

fn write_records(records: &[GenerationRecord], w: &mut dyn Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// `(mitigated - base) / base`; `None` where the base EMT is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEmtReport {
    pub overall: Option<f64>,
    pub per_language: BTreeMap<String, Option<f64>>,
}

impl RelativeEmtReport {
    pub fn new(mitigated: &EmtResult, base: &EmtResult) -> Self {
        let rel = |m: f64, b: f64| relative_emt(m, b).ok();
        RelativeEmtReport {
            overall: rel(mitigated.overall, base.overall),
            per_language: mitigated
                .per_language
                .iter()
                .map(|(l, &m)| (l.clone(), base.per_language.get(l).and_then(|&b| rel(m, b))))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_and_saved_artifacts_agree() {
        let dir = tempfile::tempdir().unwrap();
        let sink = ArtifactSink::new(dir.path());
        let mut a = Artifacts::new();
        sink.record(&mut a, "x/one.bin", true, |w| Ok(w.write_all(b"hello")?)).unwrap();
        sink.record(&mut a, "two.bin", false, |w| Ok(w.write_all(b"hello")?)).unwrap();
        assert_eq!(a["x/one.bin"].sha256, a["two.bin"].sha256);
        assert_eq!(
            a["two.bin"].sha256,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        assert_eq!(fs::read(dir.path().join("x/one.bin")).unwrap(), b"hello");
        assert!(!dir.path().join("two.bin").exists());
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::claim(dir.path()).unwrap();
        assert!(OutputLock::claim(dir.path()).is_err());
        drop(lock);
        OutputLock::claim(dir.path()).unwrap();
    }

    #[test]
    fn relative_skips_zero_base() {
        let mk = |a: f64, b: f64| EmtResult {
            per_language: BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]),
            overall: (a + b) / 2.0,
            prompts: 2,
            coverage: 1.0,
        };
        let r = RelativeEmtReport::new(&mk(0.1, 0.0), &mk(0.2, 0.0));
        assert_eq!(r.per_language["a"], Some(-0.5));
        assert_eq!(r.per_language["b"], None);
        assert_eq!(r.overall, Some(-0.5));
    }
}
