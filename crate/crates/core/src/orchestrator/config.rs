use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DataRegime, SamplingPlan, TranslateOptions};
use crate::datastore::DatastoreConfig;
use crate::decoder::{BackendKind, EnsembleConfig, FilterStage, GenerationConfig};
use crate::error::{DetoxError, Result};
use crate::experts::ExpertTrainingConfig;
use crate::http::ClientConfig;
use crate::lm::{ContextKeyConfig, SmoothingConfig};
use crate::metrics::MetricConfig;
use crate::scorer::{BatchOptions, DEFAULT_ENDPOINT};
use crate::synth::ToyConfig;

pub const CONFIG_VERSION: u32 = 1;

/// One experiment, read from a TOML file. Every section except `backend`,
/// `languages`, `output_dir` and `data` has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub backend: BackendKind,
    /// Ordered language sequence; continual runs add them in this order.
    pub languages: Vec<String>,
    #[serde(default)]
    pub regime: DataRegime,
    /// Seeds data selection. Sampling during generation uses
    /// `generation.seed`.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub translation: Option<TranslationConfig>,
    #[serde(default)]
    pub lm: LmConfig,
    #[serde(default)]
    pub key: ContextKeyConfig,
    #[serde(default)]
    pub datastore: DatastoreConfig,
    #[serde(default)]
    pub experts: ExpertTrainingConfig,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub artifacts: ArtifactPolicy,
    #[serde(default)]
    pub ablation: AblationConfig,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default)]
    pub toy: ToyData,
    #[serde(default)]
    pub files: Option<FileData>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generated in memory by the synthetic toy world.
    Toy,
    /// JSONL files on disk.
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyData {
    pub world: ToyConfig,
    /// Base-model sentences per language.
    pub base_sentences: usize,
    pub base_toxic_fraction: f64,
    pub prompts: usize,
    pub prompt_seed: u64,
}

impl Default for ToyData {
    fn default() -> Self {
        ToyData {
            world: ToyConfig::default(),
            base_sentences: 2000,
            base_toxic_fraction: 0.05,
            prompts: 600,
            prompt_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileData {
    /// Labeled JSONL the base model is trained on.
    pub base_corpus: PathBuf,
    /// Labeled JSONL the per-language training data is drawn from.
    pub pool: PathBuf,
    /// Prompt JSONL, `{"text": ..., "lang": ...}` per line.
    pub prompts: PathBuf,
    #[serde(default = "one")]
    pub vocab_min_count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub default: SamplingPlan,
    pub per_language: BTreeMap<String, SamplingPlan>,
}

impl SamplingConfig {
    pub fn plan(&self, lang: &str) -> SamplingPlan {
        self.per_language.get(lang).copied().unwrap_or(self.default)
    }
}

/// Produce every language except `source` by machine-translating the
/// source language's selection instead of drawing in-language data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationConfig {
    pub source: String,
    pub provider: MtKind,
    #[serde(default)]
    pub deletion_rate: f64,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the remote provider's key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub options: TranslateOptions,
    #[serde(default)]
    pub client: ClientConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtKind {
    Identity,
    /// Word dropout plus the toy dictionary when the data source is toy.
    Lossy,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub order: usize,
    pub smoothing: SmoothingConfig,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 3,
            smoothing: SmoothingConfig {
                lambdas: vec![0.1, 0.3, 0.6],
                add_k: 0.01,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSettings {
    pub alpha: f64,
    pub top_p: f64,
    pub filter_stage: Option<FilterStage>,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        EnsembleSettings {
            alpha: e.alpha,
            top_p: e.top_p,
            filter_stage: e.filter_stage,
        }
    }
}

impl EnsembleSettings {
    pub fn for_backend(&self, backend: BackendKind) -> EnsembleConfig {
        EnsembleConfig {
            backend,
            alpha: self.alpha,
            top_p: self.top_p,
            filter_stage: self.filter_stage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Lexicon,
    Perspective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// `{lang: {token: weight}}` JSON; the toy source supplies its own.
    pub lexicon: Option<PathBuf>,
    pub endpoint: String,
    /// Append-only score cache shared across runs.
    pub cache: Option<PathBuf>,
    pub batch: BatchOptions,
    pub client: ClientConfig,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            kind: ScorerKind::Lexicon,
            lexicon: None,
            endpoint: DEFAULT_ENDPOINT.into(),
            cache: None,
            batch: BatchOptions::default(),
            client: ClientConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactPolicy {
    /// Datastores are large; by default only their hashes are recorded.
    pub save_datastores: bool,
    pub save_generations: bool,
    pub save_experts: bool,
}

impl Default for ArtifactPolicy {
    fn default() -> Self {
        ArtifactPolicy {
            save_datastores: false,
            save_generations: true,
            save_experts: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    AlphaGrid,
    DatastoreSize,
    TranslationQualityProxy,
    DataSize,
}

impl std::fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationAxis::AlphaGrid => "alpha_grid",
            AblationAxis::DatastoreSize => "datastore_size",
            AblationAxis::TranslationQualityProxy => "translation_quality_proxy",
            AblationAxis::DataSize => "data_size",
        })
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = DetoxError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "alpha_grid" | "alpha" => Ok(AblationAxis::AlphaGrid),
            "datastore_size" => Ok(AblationAxis::DatastoreSize),
            "translation_quality_proxy" | "translation" => Ok(AblationAxis::TranslationQualityProxy),
            "data_size" => Ok(AblationAxis::DataSize),
            other => Err(DetoxError::config(format!("unknown ablation axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizePoint {
    pub toxic: usize,
    pub nontoxic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub axis: Option<AblationAxis>,
    pub alpha_grid: Vec<f64>,
    /// Per-language (toxic, non-toxic) sample counts.
    pub datastore_sizes: Vec<SizePoint>,
    pub deletion_rates: Vec<f64>,
    /// Per-language non-toxic counts with the toxic count held fixed.
    pub nontoxic_sizes: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            axis: None,
            alpha_grid: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            datastore_sizes: vec![
                SizePoint { toxic: 1000, nontoxic: 3000 },
                SizePoint { toxic: 2000, nontoxic: 6000 },
                SizePoint { toxic: 3000, nontoxic: 10000 },
            ],
            deletion_rates: vec![0.0, 0.2, 0.4, 0.6],
            nontoxic_sizes: vec![2500, 5000, 10000],
        }
    }
}

impl ExperimentConfig {
    /// The toy benchmark setup: three synthetic languages, 3000 toxic and
    /// 10000 non-toxic samples per language, 100 prompts, lexicon scorer.
    pub fn toy(output_dir: impl Into<PathBuf>, backend: BackendKind) -> Self {
        let world = ToyConfig::default();
        ExperimentConfig {
            version: CONFIG_VERSION,
            name: "toy".into(),
            backend,
            languages: world.languages.clone(),
            regime: DataRegime::Unparallel,
            seed: 0,
            output_dir: output_dir.into(),
            data: DataConfig {
                source: DataSource::Toy,
                toy: ToyData {
                    world,
                    prompts: 100,
                    ..ToyData::default()
                },
                files: None,
            },
            sampling: SamplingConfig::default(),
            translation: None,
            lm: LmConfig::default(),
            // Toy sentences come from a first-order chain, so two words of
            // context identify the state; wider windows only split it.
            key: ContextKeyConfig {
                window: 2,
                ..ContextKeyConfig::default()
            },
            datastore: DatastoreConfig::default(),
            experts: ExpertTrainingConfig::default(),
            ensemble: EnsembleSettings::default(),
            generation: GenerationConfig {
                max_new_tokens: 12,
                ..GenerationConfig::default()
            },
            scorer: ScorerConfig::default(),
            metrics: MetricConfig::default(),
            artifacts: ArtifactPolicy::default(),
            ablation: AblationConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| DetoxError::config(format!("bad experiment config: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| DetoxError::config(format!("cannot serialize config: {e}")))
    }

    /// Reads a TOML config, or the `config` object embedded in a report
    /// when the file ends in `.json`. Relative paths are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let inner = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(inner)?
        } else {
            Self::from_toml_str(&text)?
        };
        // absolute, so a report written from this config stays loadable
        // from its own directory
        let dir = std::path::absolute(path)?.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(f) = &mut self.data.files {
            fix(&mut f.base_corpus);
            fix(&mut f.pool);
            fix(&mut f.prompts);
        }
        if let Some(p) = &mut self.scorer.lexicon {
            fix(p);
        }
        if let Some(p) = &mut self.scorer.cache {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(DetoxError::config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.languages.is_empty() {
            return Err(DetoxError::config("no languages configured"));
        }
        let unique: BTreeSet<&String> = self.languages.iter().collect();
        if unique.len() != self.languages.len() {
            return Err(DetoxError::config("languages must be unique"));
        }
        for lang in self.sampling.per_language.keys() {
            if !unique.contains(lang) {
                return Err(DetoxError::config(format!("sampling plan for unconfigured language {lang:?}")));
            }
        }
        for lang in &self.languages {
            self.sampling.plan(lang).validate()?;
        }
        match self.data.source {
            DataSource::Toy => {
                self.data.toy.world.validate()?;
                for lang in &self.languages {
                    if !self.data.toy.world.languages.contains(lang) {
                        return Err(DetoxError::config(format!("toy world has no language {lang:?}")));
                    }
                }
                if !(0.0..=1.0).contains(&self.data.toy.base_toxic_fraction) {
                    return Err(DetoxError::config("base_toxic_fraction must lie in [0, 1]"));
                }
                if self.data.toy.prompts == 0 {
                    return Err(DetoxError::config("toy prompt count must be >= 1"));
                }
            }
            DataSource::Files => {
                let f = self
                    .data
                    .files
                    .as_ref()
                    .ok_or_else(|| DetoxError::config("data.source = \"files\" needs a [data.files] section"))?;
                for p in [&f.base_corpus, &f.pool, &f.prompts] {
                    if !p.is_file() {
                        return Err(DetoxError::config(format!("{} does not exist", p.display())));
                    }
                }
            }
        }
        if let Some(t) = &self.translation {
            if !unique.contains(&t.source) {
                return Err(DetoxError::config(format!("translation source {:?} is not configured", t.source)));
            }
            if !(0.0..=1.0).contains(&t.deletion_rate) {
                return Err(DetoxError::config("deletion_rate must lie in [0, 1]"));
            }
            if t.provider == MtKind::Remote && t.endpoint.is_none() {
                return Err(DetoxError::config("remote translation needs an endpoint"));
            }
        }
        if self.scorer.kind == ScorerKind::Lexicon && self.data.source == DataSource::Files {
            match &self.scorer.lexicon {
                Some(p) if p.is_file() => {}
                Some(p) => return Err(DetoxError::config(format!("{} does not exist", p.display()))),
                None => return Err(DetoxError::config("the lexicon scorer needs scorer.lexicon for file data")),
            }
        }
        if self.lm.order == 0 {
            return Err(DetoxError::config("lm.order must be >= 1"));
        }
        self.lm.smoothing.validate(self.lm.order)?;
        self.key.validate()?;
        self.datastore.validate()?;
        self.experts.validate()?;
        self.ensemble.for_backend(self.backend).validate()?;
        self.generation.validate()?;
        Ok(())
    }
}
