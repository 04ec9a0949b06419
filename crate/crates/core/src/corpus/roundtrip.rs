use serde::{Deserialize, Serialize};

use super::{LabeledSample, MtProvider};
use crate::error::{DetoxError, Result};
use crate::pool::bounded_map;
use crate::scorer::ToxicityScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundtripStage {
    Original,
    Translated,
    Backtranslated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripTriple {
    pub source_id: String,
    pub original: String,
    pub translated: String,
    pub backtranslated: String,
    /// Toxicity at each stage, in stage order.
    pub scores: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: RoundtripStage,
    pub mean: f64,
    pub q10: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripStudy {
    pub target: String,
    pub provider: String,
    pub scorer: String,
    pub triples: Vec<RoundtripTriple>,
    pub summary: Vec<StageSummary>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(stage: RoundtripStage, values: impl Iterator<Item = f64>) -> StageSummary {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    StageSummary {
        stage,
        mean: v.iter().sum::<f64>() / v.len() as f64,
        q10: quantile(&v, 0.10),
        q25: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q75: quantile(&v, 0.75),
        q90: quantile(&v, 0.90),
    }
}

/// Translates each sample into `target` and back into its own language,
/// scoring the text at all three stages.
pub fn roundtrip_study(
    samples: &[LabeledSample],
    provider: &dyn MtProvider,
    target: &str,
    scorer: &dyn ToxicityScorer,
    max_in_flight: usize,
) -> Result<RoundtripStudy> {
    if samples.is_empty() {
        return Err(DetoxError::config("round-trip study needs at least one sample"));
    }
    let triples = bounded_map(samples, max_in_flight, |s| -> Result<RoundtripTriple> {
        let translated = provider.translate(&s.text, &s.lang, target)?;
        let back = provider.translate(&translated, target, &s.lang)?;
        Ok(RoundtripTriple {
            source_id: s.source_id.clone(),
            scores: [
                scorer.score(&s.text, &s.lang)?.value,
                scorer.score(&translated, target)?.value,
                scorer.score(&back, &s.lang)?.value,
            ],
            original: s.text.clone(),
            translated,
            backtranslated: back,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let stages = [RoundtripStage::Original, RoundtripStage::Translated, RoundtripStage::Backtranslated];
    let summary = stages
        .iter()
        .enumerate()
        .map(|(i, &st)| summarize(st, triples.iter().map(|t| t.scores[i])))
        .collect();
    Ok(RoundtripStudy {
        target: target.to_string(),
        provider: provider.id().to_string(),
        scorer: scorer.id().to_string(),
        triples,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::corpus::{IdentityProvider, Label};
    use crate::scorer::LexiconScorer;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&v, 0.1), 1.4);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn identity_changes_nothing() {
        let w = HashMap::from([("bad".to_string(), 0.7)]);
        let lex = LexiconScorer::new(HashMap::from([("en".to_string(), w.clone()), ("fr".to_string(), w)])).unwrap();
        let s: Vec<_> = (0..10)
            .map(|i| LabeledSample::new(if i % 2 == 0 { "so bad" } else { "fine" }, "en", Label::Toxic, i.to_string()))
            .collect();
        let st = roundtrip_study(&s, &IdentityProvider, "fr", &lex, 2).unwrap();
        assert_eq!(st.triples.len(), 10);
        assert_eq!(st.summary[0], StageSummary { stage: RoundtripStage::Original, ..st.summary[1].clone() });
        assert_eq!(st.summary[0], StageSummary { stage: RoundtripStage::Original, ..st.summary[2].clone() });
        assert!((st.summary[0].mean - 0.35).abs() < 1e-12);
    }
}
