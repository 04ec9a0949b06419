//! Expert / anti-expert language models.
//!
//! Each side is an n-gram model counted on its own corpus and then mixed
//! with the base model at weight `base_weight`, which plays the role of
//! starting from the base model's parameters: the experts keep base-model
//! mass on languages their corpus never covered.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledSample};
use crate::error::{DetoxError, Result};
use crate::lm::{load_lm, save_lm, LogitVector, NgramLm, SmoothingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertTrainingConfig {
    pub order: usize,
    pub smoothing: SmoothingConfig,
    /// Weight of the base model in each expert, in [0, 1].
    pub base_weight: f64,
    /// Reserved for a gradient-trained backend; the count backend ignores it.
    pub learning_rate: f64,
}

impl Default for ExpertTrainingConfig {
    fn default() -> Self {
        ExpertTrainingConfig {
            order: 3,
            smoothing: SmoothingConfig {
                lambdas: vec![0.1, 0.3, 0.6],
                add_k: 0.01,
            },
            base_weight: 0.3,
            learning_rate: 5e-6,
        }
    }
}

impl ExpertTrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.base_weight) {
            return Err(DetoxError::config("expert base weight must lie in [0, 1]"));
        }
        self.smoothing.validate(self.order)
    }
}

/// A corpus-trained model mixed with the shared base model.
#[derive(Debug, Clone)]
pub struct InterpolatedLm {
    own: NgramLm,
    base: Arc<NgramLm>,
    base_weight: f64,
}

impl InterpolatedLm {
    pub fn new(own: NgramLm, base: Arc<NgramLm>, base_weight: f64) -> Result<Self> {
        if own.vocab() != base.vocab() {
            return Err(DetoxError::config("expert and base model vocabularies differ"));
        }
        Ok(InterpolatedLm { own, base, base_weight })
    }

    pub fn own(&self) -> &NgramLm {
        &self.own
    }

    pub fn base_weight(&self) -> f64 {
        self.base_weight
    }

    pub fn distribution(&self, context: &[u32]) -> Vec<f64> {
        let b = self.base_weight;
        let base = self.base.distribution(context);
        if b == 1.0 {
            return base;
        }
        let own = self.own.distribution(context);
        base.iter().zip(&own).map(|(p, q)| b * p + (1.0 - b) * q).collect()
    }

    pub fn next_logits(&self, context: &[u32]) -> LogitVector {
        LogitVector::from_probs(&self.distribution(context))
    }
}

/// Samples per language on each side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertProvenance {
    pub toxic: BTreeMap<String, usize>,
    pub nontoxic: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct ExpertPair {
    pub expert: InterpolatedLm,
    pub anti_expert: InterpolatedLm,
    pub provenance: ExpertProvenance,
}

fn language_counts(samples: &[LabeledSample]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in samples {
        *out.entry(s.lang.clone()).or_insert(0) += 1;
    }
    out
}

fn train_side(
    samples: &[LabeledSample],
    side: &'static str,
    label: Label,
    base: &Arc<NgramLm>,
    cfg: &ExpertTrainingConfig,
) -> Result<InterpolatedLm> {
    if samples.is_empty() {
        return Err(DetoxError::EmptyExpertSide(side));
    }
    if let Some(bad) = samples.iter().find(|s| s.label != label) {
        return Err(DetoxError::config(format!(
            "{side} corpus contains sample {} labeled {}",
            bad.source_id, bad.label
        )));
    }
    let vocab = base.vocab().clone();
    let corpus: Vec<_> = samples.iter().map(|s| vocab.encode(&s.text, &s.lang)).collect();
    let own = NgramLm::train(&corpus, cfg.order, cfg.smoothing.clone(), vocab)?;
    InterpolatedLm::new(own, base.clone(), cfg.base_weight)
}

impl ExpertPair {
    pub fn train(
        toxic: &[LabeledSample],
        nontoxic: &[LabeledSample],
        base: Arc<NgramLm>,
        cfg: &ExpertTrainingConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let anti_expert = train_side(toxic, "toxic", Label::Toxic, &base, cfg)?;
        let expert = train_side(nontoxic, "nontoxic", Label::Nontoxic, &base, cfg)?;
        Ok(ExpertPair {
            expert,
            anti_expert,
            provenance: ExpertProvenance {
                toxic: language_counts(toxic),
                nontoxic: language_counts(nontoxic),
            },
        })
    }

    /// `(z_plus, z_minus)`: expert and anti-expert log-probabilities.
    pub fn logits(&self, context: &[u32]) -> (LogitVector, LogitVector) {
        (self.expert.next_logits(context), self.anti_expert.next_logits(context))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        save_lm(&self.expert.own, dir.join(EXPERT_FILE))?;
        save_lm(&self.anti_expert.own, dir.join(ANTI_EXPERT_FILE))?;
        let manifest = PairManifest {
            version: 1,
            expert: EXPERT_FILE.into(),
            anti_expert: ANTI_EXPERT_FILE.into(),
            base_weight: self.expert.base_weight,
            provenance: self.provenance.clone(),
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, base: Arc<NgramLm>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: PairManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        if manifest.version != 1 {
            return Err(DetoxError::format(format!("unsupported expert manifest version {}", manifest.version)));
        }
        let own_expert = load_lm(dir.join(&manifest.expert))?;
        let own_anti = load_lm(dir.join(&manifest.anti_expert))?;
        Ok(ExpertPair {
            expert: InterpolatedLm::new(own_expert, base.clone(), manifest.base_weight)?,
            anti_expert: InterpolatedLm::new(own_anti, base, manifest.base_weight)?,
            provenance: manifest.provenance,
        })
    }
}

const EXPERT_FILE: &str = "expert.dtk";
const ANTI_EXPERT_FILE: &str = "anti_expert.dtk";
const MANIFEST_FILE: &str = "experts.json";

#[derive(Serialize, Deserialize)]
struct PairManifest {
    version: u32,
    expert: String,
    anti_expert: String,
    base_weight: f64,
    provenance: ExpertProvenance,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{softmax, Vocab};

    fn sample(text: &str, label: Label) -> LabeledSample {
        LabeledSample::new(text, "en", label, text)
    }

    fn base(vocab: &Arc<Vocab>) -> Arc<NgramLm> {
        let corpus: Vec<_> = ["good day", "bad day", "good bad"]
            .iter()
            .map(|t| vocab.encode(t, "en"))
            .collect();
        let smoothing = SmoothingConfig { lambdas: vec![0.5, 0.5], add_k: 0.1 };
        Arc::new(NgramLm::train(&corpus, 2, smoothing, vocab.clone()).unwrap())
    }

    fn cfg(beta: f64) -> ExpertTrainingConfig {
        ExpertTrainingConfig {
            order: 2,
            smoothing: SmoothingConfig { lambdas: vec![0.0, 1.0], add_k: 0.0 },
            base_weight: beta,
            learning_rate: 5e-6,
        }
    }

    #[test]
    fn full_base_weight_reproduces_base() {
        let vocab = Arc::new(Vocab::from_words(["good", "bad", "day"]));
        let base = base(&vocab);
        let pair = ExpertPair::train(
            &[sample("bad bad", Label::Toxic)],
            &[sample("good day", Label::Nontoxic)],
            base.clone(),
            &cfg(1.0),
        )
        .unwrap();
        for ctx in [&[0u32][..], &[0, 3], &[0, 4, 4]] {
            let (zp, zm) = pair.logits(ctx);
            assert_eq!(zp, base.next_logits(ctx));
            assert_eq!(zm, base.next_logits(ctx));
        }
    }

    #[test]
    fn zero_base_weight_is_pure_counts() {
        let vocab = Arc::new(Vocab::from_words(["good", "bad", "day"]));
        let pair = ExpertPair::train(
            &[sample("bad bad", Label::Toxic)],
            &[sample("good day", Label::Nontoxic)],
            base(&vocab),
            &cfg(0.0),
        )
        .unwrap();
        let bad = vocab.id("bad").unwrap();
        // bigrams: bad→bad, bad→EOS
        assert_eq!(pair.anti_expert.distribution(&[0, bad])[bad as usize], 0.5);
    }

    #[test]
    fn disjoint_corpora_favor_nontoxic_tokens() {
        let vocab = Arc::new(Vocab::from_words(["good", "kind", "bad", "vile", "the"]));
        let base = base(&vocab);
        let mut c = cfg(0.0);
        c.smoothing.add_k = 0.05;
        let pair = ExpertPair::train(
            &[sample("the bad vile", Label::Toxic), sample("the vile", Label::Toxic)],
            &[sample("the good kind", Label::Nontoxic), sample("the kind", Label::Nontoxic)],
            base,
            &c,
        )
        .unwrap();
        let the = vocab.id("the").unwrap();
        let ctx = [0, the];
        let pe = pair.expert.distribution(&ctx);
        let pa = pair.anti_expert.distribution(&ctx);
        for w in ["good", "kind"] {
            let id = vocab.id(w).unwrap() as usize;
            assert!(pe[id] > pa[id], "{w}");
        }
        let (zp, zm) = pair.logits(&ctx);
        let diff: Vec<f64> = zp.as_slice().iter().zip(zm.as_slice()).map(|(a, b)| a - b).collect();
        let best = crate::lm::argmax(&diff) as u32;
        assert!(["good", "kind"].contains(&vocab.token(best).unwrap()));
    }

    #[test]
    fn swapping_corpora_swaps_logits() {
        let vocab = Arc::new(Vocab::from_words(["good", "bad", "day"]));
        let base = base(&vocab);
        let tox = [sample("bad bad day", Label::Toxic)];
        let non = [sample("good day", Label::Nontoxic)];
        let relabel = |s: &[LabeledSample], l: Label| -> Vec<LabeledSample> {
            s.iter().cloned().map(|mut x| { x.label = l; x }).collect()
        };
        let c = ExpertTrainingConfig::default();
        let c = ExpertTrainingConfig { order: 2, smoothing: SmoothingConfig { lambdas: vec![0.3, 0.7], add_k: 0.01 }, ..c };
        let a = ExpertPair::train(&tox, &non, base.clone(), &c).unwrap();
        let b = ExpertPair::train(&relabel(&non, Label::Toxic), &relabel(&tox, Label::Nontoxic), base, &c).unwrap();
        for ctx in [&[0u32][..], &[0, 4], &[0, 4, 5]] {
            let (ap, am) = a.logits(ctx);
            let (bp, bm) = b.logits(ctx);
            assert_eq!(ap, bm);
            assert_eq!(am, bp);
        }
    }

    #[test]
    fn outputs_are_normalized() {
        let vocab = Arc::new(Vocab::from_words(["good", "bad", "day"]));
        let pair = ExpertPair::train(
            &[sample("bad day", Label::Toxic)],
            &[sample("good day", Label::Nontoxic)],
            base(&vocab),
            &ExpertTrainingConfig { order: 2, smoothing: SmoothingConfig { lambdas: vec![0.5, 0.5], add_k: 0.0 }, ..Default::default() },
        )
        .unwrap();
        let (zp, zm) = pair.logits(&[0, 3]);
        for z in [zp, zm] {
            assert!((softmax(z.as_slice()).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_side_is_named() {
        let vocab = Arc::new(Vocab::from_words(["good"]));
        let err = ExpertPair::train(&[], &[sample("good", Label::Nontoxic)], base(&vocab), &cfg(0.3)).unwrap_err();
        assert_eq!(err.to_string(), "empty toxic corpus");
        let err = ExpertPair::train(&[sample("good", Label::Toxic)], &[], base(&vocab), &cfg(0.3)).unwrap_err();
        assert_eq!(err.to_string(), "empty nontoxic corpus");
    }

    #[test]
    fn save_and_load() {
        let vocab = Arc::new(Vocab::from_words(["good", "bad", "day"]));
        let base = base(&vocab);
        let pair = ExpertPair::train(
            &[sample("bad day", Label::Toxic)],
            &[sample("good day", Label::Nontoxic)],
            base.clone(),
            &ExpertTrainingConfig { order: 2, smoothing: SmoothingConfig { lambdas: vec![0.5, 0.5], add_k: 0.01 }, ..Default::default() },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        pair.save(dir.path()).unwrap();
        let back = ExpertPair::load(dir.path(), base).unwrap();
        assert_eq!(back.logits(&[0, 4]), pair.logits(&[0, 4]));
        assert_eq!(back.provenance, pair.provenance);
    }
}
