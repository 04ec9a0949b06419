use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{DetoxError, Result};

/// EMT per (step, language) for a continual run, plus the base model's
/// per-language EMT, which serves as the row before step 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmtMatrix {
    pub languages: Vec<String>,
    pub baseline: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl EmtMatrix {
    pub fn new(languages: Vec<String>, baseline: Vec<f64>) -> Result<Self> {
        if baseline.len() != languages.len() {
            return Err(DetoxError::LengthMismatch {
                expected: languages.len(),
                got: baseline.len(),
            });
        }
        Ok(EmtMatrix {
            languages,
            baseline,
            rows: Vec::new(),
        })
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.languages.len() {
            return Err(DetoxError::LengthMismatch {
                expected: self.languages.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    fn language_index(&self, lang: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .ok_or_else(|| DetoxError::config(format!("language {lang:?} not in the evaluated set")))
    }

    /// The EMT row preceding `step`; the baseline for step 0.
    pub fn previous_row(&self, step: usize) -> &[f64] {
        if step == 0 {
            &self.baseline
        } else {
            &self.rows[step - 1]
        }
    }

    /// Cross-lingual mitigation effect of adding `added` at `step`: the
    /// summed EMT drop from the previous step over every other language.
    pub fn clme(&self, step: usize, added: &str) -> Result<f64> {
        let j = self.language_index(added)?;
        let current = self
            .rows
            .get(step)
            .ok_or_else(|| DetoxError::config(format!("no EMT row for step {step}")))?;
        let previous = self.previous_row(step);
        Ok((0..self.languages.len())
            .filter(|&k| k != j)
            .map(|k| previous[k] - current[k])
            .sum())
    }

    /// One CLME row per step; `sequence[i]` is the language added at step `i`.
    pub fn clme_table(&self, sequence: &[String]) -> Result<Vec<ClmeRow>> {
        if sequence.len() != self.rows.len() {
            return Err(DetoxError::LengthMismatch {
                expected: self.rows.len(),
                got: sequence.len(),
            });
        }
        sequence
            .iter()
            .enumerate()
            .map(|(step, lang)| {
                Ok(ClmeRow {
                    step,
                    added: lang.clone(),
                    clme: self.clme(step, lang)?,
                })
            })
            .collect()
    }
}

/// Free-function form over a bare matrix: `rows[step]` against
/// `rows[step - 1]` or `baseline`.
pub fn clme(baseline: &[f64], rows: &[Vec<f64>], languages: &[String], step: usize, added: &str) -> Result<f64> {
    let m = EmtMatrix {
        languages: languages.to_vec(),
        baseline: baseline.to_vec(),
        rows: rows.to_vec(),
    };
    m.clme(step, added)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClmeRow {
    pub step: usize,
    pub added: String,
    pub clme: f64,
}

/// Writes rows as CSV with header `step,added,clme`.
pub fn write_clme_csv<W: Write>(rows: &[ClmeRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_clme_csv<R: Read>(r: R) -> Result<Vec<ClmeRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<ClmeRow>, _>>()?;
    for (i, row) in rows.iter().enumerate() {
        if row.step != i {
            return Err(DetoxError::format(format!("CLME row {i} has step {}", row.step)));
        }
    }
    Ok(rows)
}
