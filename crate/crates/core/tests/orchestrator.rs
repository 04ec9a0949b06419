use std::fs;
use std::path::Path;

use detox_core::corpus::SamplingPlan;
use detox_core::decoder::BackendKind;
use detox_core::orchestrator::*;

fn small(out: &Path, backend: BackendKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::toy(out, backend);
    cfg.sampling.default = SamplingPlan::new(300, 1000, 0);
    cfg.data.toy.base_sentences = 500;
    cfg.data.toy.prompts = 24;
    cfg.generation.continuations = 10;
    cfg
}

#[test]
fn base_only_is_its_own_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_static(&small(dir.path(), BackendKind::BaseOnly)).unwrap();
    assert_eq!(r.relative_emt.overall, Some(0.0));
    assert!(r.relative_emt.per_language.values().all(|v| *v == Some(0.0)));
    assert!(dir.path().join("report.json").is_file());
    assert!(!dir.path().join(LOCK_FILE).exists());
}

#[test]
fn static_report_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), BackendKind::Retrieval);
    let r = run_static(&cfg).unwrap();
    let first = fs::read(dir.path().join("report.json")).unwrap();
    let csv1 = fs::read_to_string(dir.path().join("emt.csv")).unwrap();
    run_static(&cfg).unwrap();
    assert_eq!(first, fs::read(dir.path().join("report.json")).unwrap());
    assert_eq!(csv1, fs::read_to_string(dir.path().join("emt.csv")).unwrap());
    assert!(csv1.starts_with("run,backend,overall,xa,xb,xc\n"));
    assert!(r.artifacts.contains_key("toxic.dtkd"));
    assert!(r.artifacts.contains_key("base.dtk"));
    assert_eq!(r.config, cfg);
    assert!(r.mitigated.emt.overall < r.baseline.emt.overall);
}

#[test]
fn report_embeds_a_reusable_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("a"), BackendKind::Experts);
    run_static(&cfg).unwrap();
    let again = ExperimentConfig::load(dir.path().join("a/report.json")).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let _held = OutputLock::claim(dir.path()).unwrap();
    let err = run_static(&small(dir.path(), BackendKind::BaseOnly)).unwrap_err();
    assert!(err.to_string().contains("in use"));
}

fn write_files(dir: &Path, pool_per_label: usize) -> ExperimentConfig {
    use detox_core::corpus::{save_corpus, Label, LabeledSample};
    use detox_core::decoder::{save_prompts, Prompt};
    let mut pool = Vec::new();
    let mut base = Vec::new();
    for lang in ["en", "fr"] {
        for i in 0..pool_per_label {
            pool.push(LabeledSample::new(format!("you are vile {lang} {i}"), lang, Label::Toxic, format!("t{lang}{i}")));
            pool.push(LabeledSample::new(format!("have a good day {lang}"), lang, Label::Nontoxic, format!("n{lang}{i}")));
            base.push(LabeledSample::new(format!("have a good day you are {lang}"), lang, Label::Nontoxic, format!("b{lang}{i}")));
        }
    }
    save_corpus(&pool, dir.join("pool.jsonl")).unwrap();
    save_corpus(&base, dir.join("base.jsonl")).unwrap();
    save_prompts(&[Prompt::new("you are", "en"), Prompt::new("have a", "fr")], dir.join("prompts.jsonl")).unwrap();
    fs::write(dir.join("lex.json"), r#"{"en": {"vile": 0.9}, "fr": {"vile": 0.9}}"#).unwrap();
    let toml = r#"
version = 1
backend = "retrieval"
languages = ["en", "fr"]
output_dir = "out"

[data]
source = "files"

[data.files]
base_corpus = "base.jsonl"
pool = "pool.jsonl"
prompts = "prompts.jsonl"

[sampling.default]
toxic = 5
nontoxic = 5

[scorer]
kind = "lexicon"
lexicon = "lex.json"

[generation]
continuations = 4
max_new_tokens = 5
"#;
    fs::write(dir.join("exp.toml"), toml).unwrap();
    ExperimentConfig::load(dir.join("exp.toml")).unwrap()
}

#[test]
fn file_sources_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_files(dir.path(), 10);
    assert_eq!(cfg.output_dir, dir.path().join("out"));
    let r = run_static(&cfg).unwrap();
    assert_eq!(r.data.per_language["fr"].toxic, 5);
    assert_eq!(r.mitigated.emt.prompts, 2);
}

#[test]
fn stage_is_named_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_files(dir.path(), 3);
    let err = run_static(&cfg).unwrap_err().to_string();
    assert!(err.contains("prepare") && err.contains("shortfall 2"), "{err}");
    assert!(dir.path().join("out").is_dir());
}

#[test]
fn continual_two_languages() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), BackendKind::Retrieval);
    cfg.languages = vec!["xb".into(), "xa".into()];
    let r = run_continual(&cfg).unwrap();
    assert_eq!(r.steps.len(), 2);
    assert_eq!(r.clme.len(), 2);
    assert_eq!(r.clme[0].added, "xb");
    assert_eq!(r.emt_matrix.rows.len(), 2);
    assert!(r.emt_matrix.rows.iter().all(|row| row.len() == 2));
    let e0 = r.steps[0].entries.unwrap();
    let e1 = r.steps[1].entries.unwrap();
    assert!(e1.toxic > e0.toxic && e1.nontoxic > e0.nontoxic);
    assert_eq!(r.clme, r.emt_matrix.clme_table(&cfg.languages).unwrap());
    let emt = fs::read_to_string(dir.path().join("emt.csv")).unwrap();
    assert_eq!(emt.lines().count(), 4);
    assert!(emt.starts_with("step,added,xb,xa\n-1,base,"));
    let clme = fs::read_to_string(dir.path().join("clme.csv")).unwrap();
    assert!(clme.starts_with("step,added,clme\n0,xb,"));
    assert!(dir.path().join("step-1-xa/step.json").is_file());
}

#[test]
fn continual_needs_two_languages() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), BackendKind::Retrieval);
    cfg.languages = vec!["xa".into()];
    assert!(run_continual(&cfg).is_err());
}

#[test]
fn alpha_zero_matches_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), BackendKind::Retrieval);
    cfg.ablation.alpha_grid = vec![0.0, 2.0];
    let r = run_ablation(&cfg, AblationAxis::AlphaGrid).unwrap();
    let zero = r.points[0].eval.as_ref().unwrap();
    assert_eq!(zero.emt, r.baseline.emt);
    assert_eq!(zero.fluency, r.baseline.fluency);
    assert_eq!(r.points[0].relative_emt, Some(0.0));
    assert!(r.points[1].relative_emt.unwrap() < 0.0);
    let csv = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("point-1/report.json").is_file());
}

#[test]
fn datastore_size_doubles_and_failures_continue() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), BackendKind::Retrieval);
    cfg.ablation.datastore_sizes = vec![
        SizePoint { toxic: 100, nontoxic: 300 },
        SizePoint { toxic: 0, nontoxic: 0 },
        SizePoint { toxic: 200, nontoxic: 600 },
    ];
    let r = run_ablation(&cfg, AblationAxis::DatastoreSize).unwrap();
    let (a, bad, b) = (&r.points[0], &r.points[1], &r.points[2]);
    assert!(bad.error.is_some() && bad.eval.is_none());
    assert_eq!(b.toxic_samples.unwrap(), 2 * a.toxic_samples.unwrap());
    assert_eq!(b.nontoxic_samples.unwrap(), 2 * a.nontoxic_samples.unwrap());
    let (ea, eb) = (a.entries.unwrap(), b.entries.unwrap());
    let ratio = eb.nontoxic as f64 / ea.nontoxic as f64;
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}

#[test]
fn translation_quality_tracks_deletion_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), BackendKind::Retrieval);
    cfg.ablation.deletion_rates = vec![0.0, 0.3, 0.6];
    let r = run_ablation(&cfg, AblationAxis::TranslationQualityProxy).unwrap();
    let chrf: Vec<f64> = r.points.iter().map(|p| p.chrf.unwrap()).collect();
    assert!((chrf[0] - 100.0).abs() < 1e-9);
    assert!(chrf[0] > chrf[1] && chrf[1] > chrf[2], "{chrf:?}");
}
