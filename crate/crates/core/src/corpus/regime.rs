use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Label, LabeledSample, SamplingPlan};
use crate::error::{DetoxError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRegime {
    /// Every language sees translations of the same source comments.
    Parallel,
    /// No parallel group is used by more than one language.
    #[default]
    Unparallel,
}

impl std::fmt::Display for DataRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DataRegime::Parallel => "parallel",
            DataRegime::Unparallel => "unparallel",
        })
    }
}

fn tag(label: Label) -> u64 {
    match label {
        Label::Toxic => 1,
        Label::Nontoxic => 2,
    }
}

/// Picks each language's training data from a multilingual pool.
///
/// Parallel: the candidate groups are those present (with the same label)
/// in every requested language; one seeded order of them is shared, and each
/// language takes its prefix. Unparallel: languages are visited in sorted
/// order and draw from their own samples, skipping groups an earlier
/// language already took. Samples without a group never conflict.
///
/// Both rules depend only on the set of languages, not on their order, so
/// any ordering of the same languages selects the same data.
pub fn select_languages(
    pool: &[LabeledSample],
    plans: &BTreeMap<String, SamplingPlan>,
    regime: DataRegime,
    seed: u64,
) -> Result<BTreeMap<String, Vec<LabeledSample>>> {
    for plan in plans.values() {
        plan.validate()?;
    }
    let mut out: BTreeMap<String, Vec<LabeledSample>> = plans.keys().map(|l| (l.clone(), Vec::new())).collect();
    for label in [Label::Toxic, Label::Nontoxic] {
        match regime {
            DataRegime::Parallel => parallel(pool, plans, label, seed, &mut out)?,
            DataRegime::Unparallel => unparallel(pool, plans, label, seed, &mut out)?,
        }
    }
    Ok(out)
}

fn parallel(
    pool: &[LabeledSample],
    plans: &BTreeMap<String, SamplingPlan>,
    label: Label,
    seed: u64,
    out: &mut BTreeMap<String, Vec<LabeledSample>>,
) -> Result<()> {
    // first sample per (language, group)
    let mut by_lang: BTreeMap<&str, BTreeMap<i64, &LabeledSample>> = BTreeMap::new();
    for s in pool.iter().filter(|s| s.label == label) {
        if let (Some(g), true) = (s.parallel_group, plans.contains_key(&s.lang)) {
            by_lang.entry(s.lang.as_str()).or_default().entry(g).or_insert(s);
        }
    }
    let mut shared: Option<BTreeSet<i64>> = None;
    for lang in plans.keys() {
        let groups: BTreeSet<i64> = by_lang.get(lang.as_str()).map(|m| m.keys().copied().collect()).unwrap_or_default();
        shared = Some(match shared {
            None => groups,
            Some(acc) => acc.intersection(&groups).copied().collect(),
        });
    }
    let mut order: Vec<i64> = shared.unwrap_or_default().into_iter().collect();
    order.shuffle(&mut rng::stream(&[seed, 0x9a7, tag(label)]));
    for (lang, plan) in plans {
        let want = plan.count(label);
        if order.len() < want {
            return Err(DetoxError::Shortfall {
                label: label.to_string(),
                shortfall: want - order.len(),
            });
        }
        let samples = &by_lang[lang.as_str()];
        out.get_mut(lang)
            .expect("every planned language has an entry")
            .extend(order[..want].iter().map(|g| samples[g].clone()));
    }
    Ok(())
}

fn unparallel(
    pool: &[LabeledSample],
    plans: &BTreeMap<String, SamplingPlan>,
    label: Label,
    seed: u64,
    out: &mut BTreeMap<String, Vec<LabeledSample>>,
) -> Result<()> {
    let mut used: HashSet<i64> = HashSet::new();
    for (lang, plan) in plans {
        let want = plan.count(label);
        let mut seen_here = HashSet::new();
        let mut candidates: Vec<&LabeledSample> = pool
            .iter()
            .filter(|s| s.label == label && &s.lang == lang)
            .filter(|s| match s.parallel_group {
                Some(g) => !used.contains(&g) && seen_here.insert(g),
                None => true,
            })
            .collect();
        if candidates.len() < want {
            return Err(DetoxError::Shortfall {
                label: format!("{lang} {label}"),
                shortfall: want - candidates.len(),
            });
        }
        candidates.shuffle(&mut rng::stream(&[seed, 0x0a7, tag(label), rng::hash_str(lang)]));
        candidates.truncate(want);
        used.extend(candidates.iter().filter_map(|s| s.parallel_group));
        out.get_mut(lang)
            .expect("every planned language has an entry")
            .extend(candidates.into_iter().cloned());
    }
    Ok(())
}
