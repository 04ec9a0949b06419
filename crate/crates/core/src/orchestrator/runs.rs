use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::ExperimentData;
use super::eval::{
    build_backend, evaluate, ArtifactSink, Artifacts, BackendEval, EntryCounts, OutputLock, RelativeEmtReport,
};
use crate::corpus::Label;
use crate::decoder::{BackendKind, Decoder};
use crate::error::{DetoxError, Result, StageExt};
use crate::lm::write_lm;
use crate::metrics::{write_clme_csv, ClmeRow, EmtMatrix};
use crate::scorer::ToxicityScorer;

pub const REPORT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageData {
    pub toxic: usize,
    pub nontoxic: usize,
    pub toxic_tokens: usize,
    pub nontoxic_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub base_sentences: usize,
    pub prompts: usize,
    pub per_language: BTreeMap<String, LanguageData>,
}

impl DataSummary {
    pub fn of(data: &ExperimentData) -> Self {
        let tokens = data.token_counts();
        DataSummary {
            base_sentences: data.base_sentences,
            prompts: data.prompts.len(),
            per_language: data
                .by_language
                .iter()
                .map(|(l, v)| {
                    let t = tokens[l];
                    let toxic = v.iter().filter(|s| s.label == Label::Toxic).count();
                    (
                        l.clone(),
                        LanguageData {
                            toxic,
                            nontoxic: v.len() - toxic,
                            toxic_tokens: t.toxic,
                            nontoxic_tokens: t.nontoxic,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Result of a static run: the configured backend against a base-only run
/// over the same prompts, seeds and scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: String,
    pub format: u32,
    pub scorer: String,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub baseline: BackendEval,
    pub mitigated: BackendEval,
    pub relative_emt: RelativeEmtReport,
    pub entries: Option<EntryCounts>,
    pub artifacts: Artifacts,
    pub warnings: Vec<String>,
}

/// Shared by every run kind: the base model artifact and the base-only
/// evaluation that relative EMT is measured against.
pub(crate) struct Baseline {
    pub eval: BackendEval,
    pub artifacts: Artifacts,
    pub warnings: Vec<String>,
}

pub(crate) fn baseline(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    scorer: &dyn ToxicityScorer,
    sink: &ArtifactSink,
) -> Result<Baseline> {
    let mut artifacts = Artifacts::new();
    let mut warnings = data.warnings.clone();
    sink.record(&mut artifacts, "base.dtk", true, |w| write_lm(&data.base, w))?;
    let decoder = Decoder::new(
        data.base.clone(),
        Default::default(),
        cfg.ensemble.for_backend(BackendKind::BaseOnly),
    )?;
    let eval = evaluate(cfg, data, &decoder, scorer, sink, "base_only/", &mut artifacts, &mut warnings)
        .stage("baseline")?;
    Ok(Baseline {
        eval,
        artifacts,
        warnings,
    })
}

/// Builds on the union of every configured language and evaluates.
/// Artifacts go under `prefix`.
pub(crate) fn static_eval(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    scorer: &dyn ToxicityScorer,
    base: &Baseline,
    sink: &ArtifactSink,
    prefix: &str,
) -> Result<EvalReport> {
    let mut artifacts = base.artifacts.clone();
    let mut warnings = base.warnings.clone();
    let (mitigated, entries) = if cfg.backend == BackendKind::BaseOnly {
        (base.eval.clone(), None)
    } else {
        let samples = data.union(&cfg.languages);
        let built = build_backend(cfg, data, cfg.backend, &samples, sink, prefix, &mut artifacts).stage("build")?;
        let decoder = Decoder::new(data.base.clone(), built.resources, cfg.ensemble.for_backend(cfg.backend))?;
        let eval = evaluate(
            cfg,
            data,
            &decoder,
            scorer,
            sink,
            &format!("{prefix}{}/", cfg.backend),
            &mut artifacts,
            &mut warnings,
        )?;
        (eval, built.entries)
    };
    Ok(EvalReport {
        kind: "static".into(),
        format: REPORT_FORMAT,
        scorer: scorer.id().to_string(),
        config: cfg.clone(),
        data: DataSummary::of(data),
        relative_emt: RelativeEmtReport::new(&mitigated.emt, &base.eval.emt),
        baseline: base.eval.clone(),
        mitigated,
        entries,
        artifacts,
        warnings,
    })
}

/// Static setting: all languages' data available at once.
/// Writes `report.json` and `emt.csv` to the output directory.
pub fn run_static(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let _lock = OutputLock::claim(&cfg.output_dir)?;
    let sink = ArtifactSink::new(&cfg.output_dir);
    let data = ExperimentData::prepare(cfg).stage("prepare")?;
    let scorer = data.scorer(cfg).stage("scorer")?;
    let base = baseline(cfg, &data, scorer.as_ref(), &sink)?;
    let report = static_eval(cfg, &data, scorer.as_ref(), &base, &sink, "")?;
    write_static_outputs(&report, &sink).stage("write")?;
    Ok(report)
}

pub(crate) fn write_static_outputs(report: &EvalReport, sink: &ArtifactSink) -> Result<()> {
    sink.write_json("report.json", report)?;
    let langs = &report.config.languages;
    let mut wtr = csv::Writer::from_path(sink.root().join("emt.csv"))?;
    let mut header = vec!["run".to_string(), "backend".into(), "overall".into()];
    header.extend(langs.iter().cloned());
    wtr.write_record(&header)?;
    for (run, eval) in [("baseline", &report.baseline), ("mitigated", &report.mitigated)] {
        let mut row = vec![run.to_string(), eval.ensemble.backend.to_string(), eval.emt.overall.to_string()];
        row.extend(langs.iter().map(|l| cell(eval.emt.per_language.get(l).copied())));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualStep {
    pub step: usize,
    pub added: String,
    /// Languages whose data the step was built on, in the order added.
    pub languages: Vec<String>,
    pub dir: String,
    pub samples: usize,
    pub entries: Option<EntryCounts>,
    pub eval: BackendEval,
    pub artifacts: Artifacts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualReport {
    pub kind: String,
    pub format: u32,
    pub scorer: String,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub baseline: BackendEval,
    pub steps: Vec<ContinualStep>,
    pub emt_matrix: EmtMatrix,
    pub clme: Vec<ClmeRow>,
    pub artifacts: Artifacts,
    pub warnings: Vec<String>,
}

/// Continual setting: languages are added one per step in configured
/// order; each step rebuilds the backend from scratch on the cumulative
/// data and evaluates every configured language. Generation seeds depend
/// only on (seed, prompt, continuation), so they repeat across steps.
pub fn run_continual(cfg: &ExperimentConfig) -> Result<ContinualReport> {
    cfg.validate()?;
    if cfg.languages.len() < 2 {
        return Err(DetoxError::config("a continual run needs at least two languages"));
    }
    if cfg.backend == BackendKind::BaseOnly {
        return Err(DetoxError::config("a continual run needs a retrieval or experts backend"));
    }
    let _lock = OutputLock::claim(&cfg.output_dir)?;
    let sink = ArtifactSink::new(&cfg.output_dir);
    let data = ExperimentData::prepare(cfg).stage("prepare")?;
    let scorer = data.scorer(cfg).stage("scorer")?;
    let base = baseline(cfg, &data, scorer.as_ref(), &sink)?;
    let langs = &cfg.languages;
    let row_of = |eval: &BackendEval, what: &str| -> Result<Vec<f64>> {
        langs
            .iter()
            .map(|l| {
                eval.emt.per_language.get(l).copied().ok_or_else(|| {
                    DetoxError::config(format!("{what}: language {l} has no scoreable continuations"))
                })
            })
            .collect()
    };
    let mut matrix = EmtMatrix::new(langs.clone(), row_of(&base.eval, "baseline")?)?;
    write_emt_matrix(&matrix, &[], &sink)?;
    let mut warnings = base.warnings.clone();
    let mut steps = Vec::new();
    for (i, added) in langs.iter().enumerate() {
        let tag = format!("step {i} ({added})");
        let dir = format!("step-{i}-{added}");
        let cumulative = langs[..=i].to_vec();
        let samples = data.union(&cumulative);
        let mut artifacts = Artifacts::new();
        let prefix = format!("{dir}/");
        let built = build_backend(cfg, &data, cfg.backend, &samples, &sink, &prefix, &mut artifacts)
            .stage("build")
            .stage(&tag)?;
        let decoder = Decoder::new(data.base.clone(), built.resources, cfg.ensemble.for_backend(cfg.backend))?;
        let eval = evaluate(cfg, &data, &decoder, scorer.as_ref(), &sink, &prefix, &mut artifacts, &mut warnings)
            .stage(&tag)?;
        matrix.push_row(row_of(&eval, &tag)?)?;
        let step = ContinualStep {
            step: i,
            added: added.clone(),
            languages: cumulative,
            dir: dir.clone(),
            samples: samples.len(),
            entries: built.entries,
            eval,
            artifacts,
        };
        sink.write_json(&format!("{dir}/step.json"), &step).stage("write")?;
        steps.push(step);
        write_emt_matrix(&matrix, &langs[..=i], &sink).stage("write")?;
    }
    let clme = matrix.clme_table(langs)?;
    let mut f = std::fs::File::create(sink.root().join("clme.csv"))?;
    write_clme_csv(&clme, &mut f)?;
    f.flush()?;
    let report = ContinualReport {
        kind: "continual".into(),
        format: REPORT_FORMAT,
        scorer: scorer.id().to_string(),
        config: cfg.clone(),
        data: DataSummary::of(&data),
        baseline: base.eval,
        steps,
        emt_matrix: matrix,
        clme,
        artifacts: base.artifacts,
        warnings,
    };
    sink.write_json("report.json", &report).stage("write")?;
    Ok(report)
}

/// `step,added,<languages...>`; the base model is step -1.
fn write_emt_matrix(m: &EmtMatrix, added: &[String], sink: &ArtifactSink) -> Result<()> {
    let mut wtr = csv::Writer::from_path(sink.root().join("emt.csv"))?;
    let mut header = vec!["step".to_string(), "added".into()];
    header.extend(m.languages.iter().cloned());
    wtr.write_record(&header)?;
    let mut base = vec!["-1".to_string(), "base".into()];
    base.extend(m.baseline.iter().map(f64::to_string));
    wtr.write_record(&base)?;
    for (i, (row, lang)) in m.rows.iter().zip(added).enumerate() {
        let mut r = vec![i.to_string(), lang.clone()];
        r.extend(row.iter().map(f64::to_string));
        wtr.write_record(&r)?;
    }
    wtr.flush()?;
    Ok(())
}
