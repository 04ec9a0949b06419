use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{AblationAxis, ExperimentConfig, MtKind, TranslationConfig};
use super::data::ExperimentData;
use super::eval::{ArtifactSink, BackendEval, EntryCounts, OutputLock};
use super::runs::{baseline, static_eval, write_static_outputs, REPORT_FORMAT};
use crate::corpus::{LabeledSample, SamplingPlan};
use crate::error::{DetoxError, Result, StageExt};
use crate::metrics::{chrf_pp, ChrfConfig};

/// One grid point. `error` is set, and the metrics left empty, when the
/// point failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub index: usize,
    pub label: String,
    pub value: f64,
    pub dir: String,
    pub toxic_samples: Option<usize>,
    pub nontoxic_samples: Option<usize>,
    pub entries: Option<EntryCounts>,
    /// Mean chrF++ of the lossy translations against clean ones.
    pub chrf: Option<f64>,
    pub eval: Option<BackendEval>,
    pub relative_emt: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub kind: String,
    pub format: u32,
    pub axis: AblationAxis,
    pub scorer: String,
    pub config: ExperimentConfig,
    pub baseline: BackendEval,
    pub points: Vec<AblationPoint>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    axis: String,
    index: usize,
    label: &'a str,
    value: f64,
    emt: Option<f64>,
    relative_emt: Option<f64>,
    fluency: Option<f64>,
    distinct_1: Option<f64>,
    distinct_2: Option<f64>,
    distinct_3: Option<f64>,
    toxic_samples: Option<usize>,
    nontoxic_samples: Option<usize>,
    toxic_entries: Option<usize>,
    nontoxic_entries: Option<usize>,
    chrf: Option<f64>,
    error: Option<&'a str>,
}

/// The translation settings the quality axis varies: the configured ones,
/// or lossy translation out of the first language.
fn translation_base(cfg: &ExperimentConfig) -> TranslationConfig {
    let mut t = cfg.translation.clone().unwrap_or(TranslationConfig {
        source: cfg.languages[0].clone(),
        provider: MtKind::Lossy,
        deletion_rate: 0.0,
        endpoint: None,
        api_key_env: None,
        options: Default::default(),
        client: Default::default(),
    });
    t.provider = MtKind::Lossy;
    t
}

/// Config variants for each grid point, with labels and axis values.
fn grid(cfg: &ExperimentConfig, axis: AblationAxis) -> Result<Vec<(String, f64, ExperimentConfig)>> {
    let a = &cfg.ablation;
    let mut out = Vec::new();
    let mut point = |label: String, value: f64, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = cfg.clone();
        c.ablation.axis = None;
        f(&mut c);
        out.push((label, value, c));
    };
    let sized = |c: &mut ExperimentConfig, toxic: usize, nontoxic: usize| {
        let seed = c.sampling.default.seed;
        c.sampling.default = SamplingPlan::new(toxic, nontoxic, seed);
        c.sampling.per_language.clear();
    };
    match axis {
        AblationAxis::AlphaGrid => {
            for &alpha in &a.alpha_grid {
                point(format!("alpha={alpha}"), alpha, &|c| c.ensemble.alpha = alpha);
            }
        }
        AblationAxis::DatastoreSize => {
            for s in &a.datastore_sizes {
                let (t, n) = (s.toxic, s.nontoxic);
                point(format!("toxic={t},nontoxic={n}"), (t + n) as f64, &|c| sized(c, t, n));
            }
        }
        AblationAxis::DataSize => {
            let toxic = cfg.sampling.default.toxic;
            for &n in &a.nontoxic_sizes {
                point(format!("nontoxic={n}"), n as f64, &|c| sized(c, toxic, n));
            }
        }
        AblationAxis::TranslationQualityProxy => {
            if cfg.languages.len() < 2 {
                return Err(DetoxError::config("the translation axis needs at least two languages"));
            }
            let base = translation_base(cfg);
            for &rate in &a.deletion_rates {
                let mut t = base.clone();
                t.deletion_rate = rate;
                point(format!("deletion_rate={rate}"), rate, &|c| c.translation = Some(t.clone()));
            }
        }
    }
    if out.is_empty() {
        return Err(DetoxError::config(format!("ablation axis {axis} has no grid values")));
    }
    Ok(out)
}

/// Mean chrF++ over translated samples, matched to references by source id
/// and language. Samples whose reference is blank are skipped.
fn translation_chrf(
    hyp: &BTreeMap<String, Vec<LabeledSample>>,
    reference: &BTreeMap<String, Vec<LabeledSample>>,
    source: &str,
    cfg: &ChrfConfig,
) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (lang, samples) in hyp {
        if lang == source {
            continue;
        }
        let refs: BTreeMap<&str, &str> = reference
            .get(lang)
            .map(|v| v.iter().map(|s| (s.source_id.as_str(), s.text.as_str())).collect())
            .unwrap_or_default();
        for s in samples {
            if let Some(r) = refs.get(s.source_id.as_str()).filter(|r| !r.trim().is_empty()) {
                sum += chrf_pp(&s.text, r, cfg)?;
                n += 1;
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Runs one static evaluation per grid point of `axis` against a shared
/// base-only baseline. Each point writes `point-<i>/report.json`; a point
/// that fails is recorded and the grid continues. The combined results go
/// to `ablation.csv` and `report.json`.
pub fn run_ablation(cfg: &ExperimentConfig, axis: AblationAxis) -> Result<AblationReport> {
    cfg.validate()?;
    let points = grid(cfg, axis)?;
    let _lock = OutputLock::claim(&cfg.output_dir)?;
    let sink = ArtifactSink::new(&cfg.output_dir);
    let data = ExperimentData::prepare(cfg).stage("prepare")?;
    let scorer = data.scorer(cfg).stage("scorer")?;
    let base = baseline(cfg, &data, scorer.as_ref(), &sink)?;

    let reference = if axis == AblationAxis::TranslationQualityProxy {
        let mut c = cfg.clone();
        let mut t = translation_base(cfg);
        t.deletion_rate = 0.0;
        c.translation = Some(t);
        Some(ExperimentData::prepare(&c).stage("reference translation")?)
    } else {
        None
    };

    let mut out = Vec::new();
    let mut warnings = base.warnings.clone();
    for (index, (label, value, mut point_cfg)) in points.into_iter().enumerate() {
        let dir = format!("point-{index}");
        point_cfg.output_dir = cfg.output_dir.join(&dir);
        let point_sink = ArtifactSink::new(&point_cfg.output_dir);
        let mut p = AblationPoint {
            index,
            label: label.clone(),
            value,
            dir: dir.clone(),
            toxic_samples: None,
            nontoxic_samples: None,
            entries: None,
            chrf: None,
            eval: None,
            relative_emt: None,
            error: None,
        };
        let result = (|| -> Result<()> {
            let point_data = ExperimentData::prepare(&point_cfg).stage("prepare")?;
            if let (Some(r), Some(t)) = (&reference, &point_cfg.translation) {
                p.chrf = translation_chrf(&point_data.by_language, &r.by_language, &t.source, &cfg.metrics.chrf)?;
            }
            let report = static_eval(&point_cfg, &point_data, scorer.as_ref(), &base, &point_sink, "")?;
            write_static_outputs(&report, &point_sink).stage("write")?;
            let counts = |f: fn(&super::runs::LanguageData) -> usize| report.data.per_language.values().map(f).sum();
            p.toxic_samples = Some(counts(|d| d.toxic));
            p.nontoxic_samples = Some(counts(|d| d.nontoxic));
            p.entries = report.entries;
            p.relative_emt = report.relative_emt.overall;
            p.eval = Some(report.mitigated);
            Ok(())
        })();
        if let Err(e) = result {
            log::warn!("ablation point {label} failed: {e}");
            warnings.push(format!("{label}: {e}"));
            p.error = Some(e.to_string());
        }
        out.push(p);
    }

    let report = AblationReport {
        kind: "ablation".into(),
        format: REPORT_FORMAT,
        axis,
        scorer: scorer.id().to_string(),
        config: cfg.clone(),
        baseline: base.eval,
        points: out,
        warnings,
    };
    write_ablation_csv(&report, &sink).stage("write")?;
    sink.write_json("report.json", &report).stage("write")?;
    Ok(report)
}

fn write_ablation_csv(report: &AblationReport, sink: &ArtifactSink) -> Result<()> {
    let mut wtr = csv::Writer::from_path(sink.root().join("ablation.csv"))?;
    for p in &report.points {
        let e = p.eval.as_ref();
        wtr.serialize(CsvRow {
            axis: report.axis.to_string(),
            index: p.index,
            label: &p.label,
            value: p.value,
            emt: e.map(|e| e.emt.overall),
            relative_emt: p.relative_emt,
            fluency: e.map(|e| e.fluency),
            distinct_1: e.and_then(|e| e.distinct(1)),
            distinct_2: e.and_then(|e| e.distinct(2)),
            distinct_3: e.and_then(|e| e.distinct(3)),
            toxic_samples: p.toxic_samples,
            nontoxic_samples: p.nontoxic_samples,
            toxic_entries: p.entries.map(|c| c.toxic),
            nontoxic_entries: p.entries.map(|c| c.nontoxic),
            chrf: p.chrf,
            error: p.error.as_deref(),
        })?;
    }
    wtr.flush()?;
    Ok(())
}
