//! Experiment configuration and the static, continual and ablation
//! runners that turn a config into reports.

mod ablation;
mod config;
mod data;
mod eval;
mod runs;

pub use ablation::{run_ablation, AblationPoint, AblationReport};
pub use config::{
    AblationAxis, AblationConfig, ArtifactPolicy, DataConfig, DataSource, EnsembleSettings, ExperimentConfig, FileData,
    LmConfig, MtKind, SamplingConfig, ScorerConfig, ScorerKind, SizePoint, ToyData, TranslationConfig, CONFIG_VERSION,
};
pub use data::ExperimentData;
pub use eval::{
    build_backend, evaluate, ArtifactRecord, ArtifactSink, Artifacts, BackendEval, BuiltBackend, EntryCounts,
    OutputLock, RelativeEmtReport, LOCK_FILE,
};
pub use runs::{
    run_continual, run_static, ContinualReport, ContinualStep, DataSummary, EvalReport, LanguageData, REPORT_FORMAT,
};
