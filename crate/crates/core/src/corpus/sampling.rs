use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Label, LabeledSample};
use crate::error::{DetoxError, Result};
use crate::lm::Vocab;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPlan {
    pub toxic: usize,
    pub nontoxic: usize,
    pub seed: u64,
    /// Must stay false; sampling is always without replacement.
    pub replacement: bool,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            toxic: 3000,
            nontoxic: 10000,
            seed: 0,
            replacement: false,
        }
    }
}

impl SamplingPlan {
    pub fn new(toxic: usize, nontoxic: usize, seed: u64) -> Self {
        SamplingPlan {
            toxic,
            nontoxic,
            seed,
            replacement: false,
        }
    }

    pub fn count(&self, label: Label) -> usize {
        match label {
            Label::Toxic => self.toxic,
            Label::Nontoxic => self.nontoxic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replacement {
            return Err(DetoxError::config("sampling with replacement is not supported"));
        }
        if self.toxic + self.nontoxic == 0 {
            return Err(DetoxError::config("sampling plan selects nothing"));
        }
        Ok(())
    }
}

fn label_tag(label: Label) -> u64 {
    match label {
        Label::Toxic => 1,
        Label::Nontoxic => 2,
    }
}

/// Pool members of one label in a seeded random order.
fn shuffled<'a>(pool: &'a [LabeledSample], label: Label, seed: u64) -> Vec<&'a LabeledSample> {
    let mut v: Vec<&LabeledSample> = pool.iter().filter(|s| s.label == label).collect();
    v.shuffle(&mut rng::stream(&[seed, label_tag(label)]));
    v
}

fn check_pool(label: Label, available: usize, wanted: usize) -> Result<()> {
    if available < wanted {
        return Err(DetoxError::Shortfall {
            label: label.to_string(),
            shortfall: wanted - available,
        });
    }
    Ok(())
}

/// Seeded sample without replacement: `plan.toxic` toxic samples followed
/// by `plan.nontoxic` non-toxic ones.
pub fn sample_plan(pool: &[LabeledSample], plan: &SamplingPlan) -> Result<Vec<LabeledSample>> {
    plan.validate()?;
    let mut out = Vec::with_capacity(plan.toxic + plan.nontoxic);
    for label in [Label::Toxic, Label::Nontoxic] {
        let want = plan.count(label);
        let order = shuffled(pool, label, plan.seed);
        check_pool(label, order.len(), want)?;
        out.extend(order.into_iter().take(want).cloned());
    }
    Ok(out)
}

/// Non-parallel regime: each language receives its own slice of one
/// shuffled pool, so selections are pairwise disjoint.
pub fn partition_unparallel(
    pool: &[LabeledSample],
    plans: &[(String, SamplingPlan)],
    seed: u64,
) -> Result<BTreeMap<String, Vec<LabeledSample>>> {
    let mut out: BTreeMap<String, Vec<LabeledSample>> = plans.iter().map(|(l, _)| (l.clone(), Vec::new())).collect();
    if out.len() != plans.len() {
        return Err(DetoxError::config("duplicate language in partition plan"));
    }
    for label in [Label::Toxic, Label::Nontoxic] {
        let order = shuffled(pool, label, seed);
        let wanted: usize = plans.iter().map(|(_, p)| p.count(label)).sum();
        check_pool(label, order.len(), wanted)?;
        let mut cursor = 0;
        for (lang, plan) in plans {
            let n = plan.count(label);
            out.get_mut(lang)
                .expect("language inserted above")
                .extend(order[cursor..cursor + n].iter().map(|s| (*s).clone()));
            cursor += n;
        }
    }
    Ok(out)
}

/// Parallel regime: one sample shared by every language. Samples without a
/// parallel group get their position in the selection as group id.
pub fn select_parallel(pool: &[LabeledSample], plan: &SamplingPlan) -> Result<Vec<LabeledSample>> {
    let mut out = sample_plan(pool, plan)?;
    for (i, s) in out.iter_mut().enumerate() {
        s.parallel_group.get_or_insert(i as i64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub nontoxic: usize,
    pub toxic: usize,
    pub nontoxic_blocks: usize,
    pub toxic_blocks: usize,
}

impl TokenCounts {
    pub fn pair(&self) -> (usize, usize) {
        (self.nontoxic, self.toxic)
    }
}

/// Word-token totals per label. Each sample is chunked into blocks of
/// `block_size` tokens; chunking changes block counts, not token totals.
/// Words outside the vocabulary still count, as `<unk>`.
pub fn count_tokens(samples: &[LabeledSample], vocab: &Vocab, block_size: usize) -> TokenCounts {
    let block_size = block_size.max(1);
    let mut c = TokenCounts::default();
    for s in samples {
        let n = vocab.encode(&s.text, &s.lang).len() - 2;
        let blocks = n.div_ceil(block_size);
        match s.label {
            Label::Toxic => {
                c.toxic += n;
                c.toxic_blocks += blocks;
            }
            Label::Nontoxic => {
                c.nontoxic += n;
                c.nontoxic_blocks += blocks;
            }
        }
    }
    c
}
