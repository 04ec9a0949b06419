use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{Label, LabeledSample, Origin};
use crate::error::{DetoxError, Result};

/// Share of malformed lines above which loading fails outright.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

#[derive(Deserialize)]
struct RawSample {
    text: Option<String>,
    lang: Option<String>,
    label: Option<Label>,
    source_id: Option<String>,
    #[serde(default)]
    parallel_group: Option<i64>,
    #[serde(default)]
    origin: Origin,
}

fn validate(raw: RawSample, line_no: usize) -> std::result::Result<LabeledSample, String> {
    let text = raw.text.ok_or("missing \"text\"")?;
    if text.trim().is_empty() {
        return Err("empty \"text\"".into());
    }
    let lang = raw.lang.ok_or("missing \"lang\"")?;
    if lang.is_empty() {
        return Err("empty \"lang\"".into());
    }
    let label = raw.label.ok_or("missing \"label\"")?;
    Ok(LabeledSample {
        text,
        lang,
        label,
        source_id: raw.source_id.unwrap_or_else(|| format!("line-{line_no}")),
        parallel_group: raw.parallel_group,
        origin: raw.origin,
    })
}

/// Reads a JSONL corpus. Malformed lines are skipped with a warning naming
/// the line; more than 1% malformed is an error. A missing `source_id`
/// defaults to `line-<n>`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    let mut malformed = Vec::new();
    let mut total = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let line_no = i + 1;
        let parsed = serde_json::from_str::<RawSample>(&line)
            .map_err(|e| e.to_string())
            .and_then(|raw| validate(raw, line_no));
        match parsed {
            Ok(s) => samples.push(s),
            Err(e) => malformed.push((line_no, e)),
        }
    }
    if total == 0 {
        log::warn!("{}: corpus is empty", path.display());
        return Ok(samples);
    }
    for (line_no, e) in &malformed {
        log::warn!("{}:{line_no}: skipping malformed line: {e}", path.display());
    }
    if malformed.len() as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(DetoxError::MalformedCorpus {
            path: path.display().to_string(),
            malformed: malformed.len(),
            total,
        });
    }
    Ok(samples)
}

pub fn write_corpus<W: Write>(samples: &[LabeledSample], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_corpus(samples: &[LabeledSample], path: impl AsRef<Path>) -> Result<()> {
    write_corpus(samples, File::create(path)?)
}

/// Converts a Jigsaw / Civil Comments style CSV export. A row is toxic when
/// its `label_column` parses to a number at or above `threshold`.
pub fn import_csv(
    path: impl AsRef<Path>,
    text_column: &str,
    label_column: &str,
    id_column: Option<&str>,
    lang: &str,
    threshold: f64,
) -> Result<Vec<LabeledSample>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DetoxError::format(format!("CSV has no column {name:?}")))
    };
    let text_i = col(text_column)?;
    let label_i = col(label_column)?;
    let id_i = id_column.map(col).transpose()?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let text = rec.get(text_i).unwrap_or_default().trim();
        if text.is_empty() {
            continue;
        }
        let raw = rec.get(label_i).unwrap_or_default();
        let score: f64 = raw
            .trim()
            .parse()
            .map_err(|_| DetoxError::format(format!("row {}: label {raw:?} is not numeric", row + 1)))?;
        let label = if score >= threshold { Label::Toxic } else { Label::Nontoxic };
        let id = match id_i {
            Some(i) => rec.get(i).unwrap_or_default().to_string(),
            None => format!("row-{}", row + 1),
        };
        out.push(LabeledSample::new(text, lang, label, id));
    }
    Ok(out)
}
