use std::collections::BTreeMap;
use std::sync::Arc;

use super::config::{DataSource, ExperimentConfig, MtKind, ScorerKind, TranslationConfig};
use crate::corpus::{
    count_tokens, load_corpus, partition_unparallel, select_languages, select_parallel, translate_batch, DataRegime,
    Dictionary, IdentityProvider, Label, LabeledSample, LossyProvider, MtProvider, RemoteMtProvider, SamplingPlan,
    TokenCounts,
};
use crate::decoder::{load_prompts, Prompt};
use crate::error::{DetoxError, Result, StageExt};
use crate::lm::{NgramLm, Vocab};
use crate::scorer::{CachedScorer, LexiconScorer, PerspectiveScorer, ScoreCache, ToxicityScorer};
use crate::synth::ToyWorld;

/// Everything a run needs before any backend is built.
#[derive(Debug)]
pub struct ExperimentData {
    pub vocab: Arc<Vocab>,
    pub base: Arc<NgramLm>,
    pub base_sentences: usize,
    /// Training data per configured language.
    pub by_language: BTreeMap<String, Vec<LabeledSample>>,
    pub prompts: Vec<Prompt>,
    /// Toy lexicon, when the data comes from the toy world.
    pub lexicon: Option<LexiconScorer>,
    pub dictionary: Option<Arc<Dictionary>>,
    pub warnings: Vec<String>,
}

impl ExperimentData {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let mut warnings = Vec::new();
        let plans: BTreeMap<String, SamplingPlan> =
            cfg.languages.iter().map(|l| (l.clone(), cfg.sampling.plan(l))).collect();
        let (vocab, base_corpus, pool, prompts, lexicon, dictionary) = match cfg.data.source {
            DataSource::Toy => {
                let toy = &cfg.data.toy;
                let world = ToyWorld::new(toy.world.clone())?;
                let (t, n) = toy_pool_size(&plans, cfg.regime, cfg.translation.is_some());
                let pool = world.parallel_pool(t, n, 1);
                let base_corpus = world.base_corpus(toy.base_sentences, toy.base_toxic_fraction, 0)?;
                let prompts: Vec<Prompt> = world
                    .prompts(toy.prompts, toy.prompt_seed)
                    .into_iter()
                    .filter(|p| cfg.languages.contains(&p.lang))
                    .collect();
                (
                    world.vocab().clone(),
                    base_corpus,
                    pool,
                    prompts,
                    Some(world.lexicon()),
                    Some(Arc::new(world.dictionary())),
                )
            }
            DataSource::Files => {
                let f = cfg.data.files.as_ref().expect("validated");
                let base_corpus = load_corpus(&f.base_corpus)?;
                let pool = load_corpus(&f.pool)?;
                let prompts: Vec<Prompt> = load_prompts(&f.prompts)?;
                let texts = base_corpus.iter().chain(&pool).map(|s| s.text.as_str());
                let vocab = Arc::new(Vocab::build(texts.chain(prompts.iter().map(|p| p.text.as_str())), f.vocab_min_count));
                let prompts: Vec<Prompt> = prompts.into_iter().filter(|p| cfg.languages.contains(&p.lang)).collect();
                (vocab, base_corpus, pool, prompts, None, None)
            }
        };
        if prompts.is_empty() {
            return Err(DetoxError::config("no prompts in the configured languages"));
        }
        if base_corpus.is_empty() {
            return Err(DetoxError::EmptyCorpus);
        }
        let seqs: Vec<_> = base_corpus.iter().map(|s| vocab.encode(&s.text, &s.lang)).collect();
        let base = Arc::new(NgramLm::train(&seqs, cfg.lm.order, cfg.lm.smoothing.clone(), vocab.clone()).stage("base lm")?);

        let by_language = match &cfg.translation {
            None => select_languages(&pool, &plans, cfg.regime, cfg.seed)?,
            Some(t) => translated_selection(cfg, t, &pool, &plans, dictionary.clone(), &mut warnings)?,
        };
        Ok(ExperimentData {
            vocab,
            base,
            base_sentences: base_corpus.len(),
            by_language,
            prompts,
            lexicon,
            dictionary,
            warnings,
        })
    }

    /// Concatenated data of `languages`, in the given order.
    pub fn union(&self, languages: &[String]) -> Vec<LabeledSample> {
        languages
            .iter()
            .filter_map(|l| self.by_language.get(l))
            .flat_map(|v| v.iter().cloned())
            .collect()
    }

    pub fn token_counts(&self) -> BTreeMap<String, TokenCounts> {
        self.by_language
            .iter()
            .map(|(l, v)| (l.clone(), count_tokens(v, &self.vocab, 1024)))
            .collect()
    }

    pub fn scorer(&self, cfg: &ExperimentConfig) -> Result<Box<dyn ToxicityScorer>> {
        match cfg.scorer.kind {
            ScorerKind::Lexicon => {
                let lex = match (&cfg.scorer.lexicon, &self.lexicon) {
                    (Some(path), _) => LexiconScorer::load(path)?,
                    (None, Some(lex)) => lex.clone(),
                    (None, None) => return Err(DetoxError::config("no lexicon available for the lexicon scorer")),
                };
                Ok(Box::new(lex))
            }
            ScorerKind::Perspective => {
                let remote = PerspectiveScorer::from_env(&cfg.scorer.endpoint, &cfg.scorer.client)?;
                let cache = match &cfg.scorer.cache {
                    Some(p) => ScoreCache::open(p)?,
                    None => ScoreCache::in_memory(),
                };
                Ok(Box::new(CachedScorer::new(remote, cache)))
            }
        }
    }
}

/// Source groups the toy pool must hold for the plans to be satisfiable.
fn toy_pool_size(plans: &BTreeMap<String, SamplingPlan>, regime: DataRegime, translated: bool) -> (usize, usize) {
    let sum = |label| plans.values().map(|p| p.count(label)).sum::<usize>();
    let max = |label| plans.values().map(|p| p.count(label)).max().unwrap_or(0);
    match regime {
        DataRegime::Parallel if !translated => (max(Label::Toxic), max(Label::Nontoxic)),
        _ => (sum(Label::Toxic), sum(Label::Nontoxic)),
    }
}

pub(crate) fn mt_provider(
    t: &TranslationConfig,
    seed: u64,
    dictionary: Option<Arc<Dictionary>>,
) -> Result<Box<dyn MtProvider>> {
    Ok(match t.provider {
        MtKind::Identity => Box::new(IdentityProvider),
        MtKind::Lossy => {
            let p = LossyProvider::new(seed, t.deletion_rate)?;
            Box::new(match dictionary {
                Some(d) => p.with_dictionary(d),
                None => p,
            })
        }
        MtKind::Remote => {
            let key = match &t.api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| DetoxError::config(format!("{var} is not set")))?),
                None => None,
            };
            Box::new(RemoteMtProvider::new(
                t.endpoint.clone().expect("validated"),
                key,
                &t.client,
            ))
        }
    })
}

/// The source language's own pool is selected as usual; every other
/// language receives a machine translation of source samples.
fn translated_selection(
    cfg: &ExperimentConfig,
    t: &TranslationConfig,
    pool: &[LabeledSample],
    plans: &BTreeMap<String, SamplingPlan>,
    dictionary: Option<Arc<Dictionary>>,
    warnings: &mut Vec<String>,
) -> Result<BTreeMap<String, Vec<LabeledSample>>> {
    let source_pool: Vec<LabeledSample> = pool.iter().filter(|s| s.lang == t.source).cloned().collect();
    let provider = mt_provider(t, cfg.seed, dictionary)?;
    let mut selected: BTreeMap<String, Vec<LabeledSample>> = match cfg.regime {
        DataRegime::Parallel => {
            let mut plan = plans[&t.source];
            plan.seed = cfg.seed;
            let chosen = select_parallel(&source_pool, &plan)?;
            plans.keys().map(|l| (l.clone(), chosen.clone())).collect()
        }
        DataRegime::Unparallel => {
            let ordered: Vec<(String, SamplingPlan)> = plans.iter().map(|(l, p)| (l.clone(), *p)).collect();
            partition_unparallel(&source_pool, &ordered, cfg.seed)?
        }
    };
    for (lang, samples) in selected.iter_mut() {
        if *lang == t.source {
            continue;
        }
        let batch = translate_batch(samples, provider.as_ref(), lang, &t.options).stage("translate")?;
        for f in &batch.failures {
            warnings.push(format!("translation of {} into {lang} failed: {}", f.source_id, f.error));
        }
        *samples = batch.samples;
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::BackendKind;
    use crate::orchestrator::config::TranslationConfig;

    fn small(regime: DataRegime) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::toy("unused", BackendKind::Retrieval);
        cfg.regime = regime;
        cfg.sampling.default = SamplingPlan::new(20, 40, 0);
        cfg.data.toy.base_sentences = 200;
        cfg.data.toy.prompts = 12;
        cfg
    }

    #[test]
    fn toy_selection_sizes() {
        for regime in [DataRegime::Parallel, DataRegime::Unparallel] {
            let d = ExperimentData::prepare(&small(regime)).unwrap();
            assert_eq!(d.by_language.len(), 3);
            for (lang, v) in &d.by_language {
                assert_eq!(v.len(), 60);
                assert!(v.iter().all(|s| &s.lang == lang));
                assert_eq!(v.iter().filter(|s| s.label == Label::Toxic).count(), 20);
            }
            assert_eq!(d.prompts.len(), 12);
        }
    }

    #[test]
    fn lossy_translation_fills_other_languages() {
        let mut cfg = small(DataRegime::Parallel);
        cfg.translation = Some(TranslationConfig {
            source: "xa".into(),
            provider: MtKind::Lossy,
            deletion_rate: 0.0,
            endpoint: None,
            api_key_env: None,
            options: Default::default(),
            client: Default::default(),
        });
        let d = ExperimentData::prepare(&cfg).unwrap();
        let xa = &d.by_language["xa"];
        let xb = &d.by_language["xb"];
        assert_eq!(xa.len(), xb.len());
        for (a, b) in xa.iter().zip(xb) {
            assert_eq!(a.source_id, b.source_id);
            assert_eq!(a.text.replace("xa_", "xb_"), b.text);
        }
    }

    #[test]
    fn subset_of_languages_filters_prompts() {
        let mut cfg = small(DataRegime::Unparallel);
        cfg.languages = vec!["xb".into()];
        let d = ExperimentData::prepare(&cfg).unwrap();
        assert!(d.prompts.iter().all(|p| p.lang == "xb"));
        assert_eq!(d.by_language.keys().collect::<Vec<_>>(), vec!["xb"]);
    }
}
