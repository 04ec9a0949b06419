use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::{BackendKind, Decoder, EnsembleConfig};
use crate::error::{DetoxError, Result};
use crate::lm::{Distribution, Vocab};
use crate::rng;

/// A generation prompt: `{"text": ..., "lang": ...}` in JSONL files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub lang: String,
}

impl Prompt {
    pub fn new(text: impl Into<String>, lang: impl Into<String>) -> Self {
        Prompt {
            text: text.into(),
            lang: lang.into(),
        }
    }
}

/// Reads prompt JSONL. Blank lines are skipped; any bad line is an error
/// naming its line number.
pub fn load_prompts(path: impl AsRef<Path>) -> Result<Vec<Prompt>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prompt = serde_json::from_str(&line)
            .map_err(|e| DetoxError::format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(DetoxError::format(format!("{} holds no prompts", path.display())));
    }
    Ok(out)
}

pub fn save_prompts(prompts: &[Prompt], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in prompts {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub continuations: usize,
    pub max_new_tokens: usize,
    pub seed: u64,
    pub temperature: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            continuations: 25,
            max_new_tokens: 20,
            seed: 7,
            temperature: 1.0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.continuations == 0 || self.max_new_tokens == 0 {
            return Err(DetoxError::config("continuations and max_new_tokens must be >= 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DetoxError::config("sampling temperature must be positive"));
        }
        Ok(())
    }
}

/// All continuations sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt_index: usize,
    pub prompt: String,
    pub lang: String,
    pub continuations: Vec<String>,
    pub token_counts: Vec<usize>,
    pub backend: BackendKind,
    pub ensemble: EnsembleConfig,
    pub generation: GenerationConfig,
}

/// Draws a token id from `dist`. BOS and UNK are never emitted; if they
/// carry all the mass, EOS is returned.
pub fn sample_token(dist: &Distribution, temperature: f64, rng: &mut ChaCha8Rng) -> u32 {
    let probs = dist.as_slice();
    let weight = |i: usize| -> f64 {
        if i as u32 == Vocab::BOS_ID || i as u32 == Vocab::UNK_ID {
            0.0
        } else if temperature == 1.0 {
            probs[i]
        } else {
            probs[i].powf(1.0 / temperature)
        }
    };
    let total: f64 = (0..probs.len()).map(weight).sum();
    if total <= 0.0 {
        return Vocab::EOS_ID;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = Vocab::EOS_ID;
    for i in 0..probs.len() {
        let w = weight(i);
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i as u32;
        if u < acc {
            return last;
        }
    }
    last
}

/// Samples one continuation: stops at EOS or after `max_new_tokens`.
/// The returned ids exclude EOS.
pub fn sample_continuation(
    decoder: &Decoder,
    prompt_ids: &[u32],
    gen: &GenerationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u32>> {
    let mut context = prompt_ids.to_vec();
    let start = context.len();
    for _ in 0..gen.max_new_tokens {
        let dist = decoder.next_token_distribution(&context)?;
        let token = sample_token(&dist, gen.temperature, rng);
        if token == Vocab::EOS_ID {
            break;
        }
        context.push(token);
    }
    Ok(context.split_off(start))
}

/// Generates `gen.continuations` samples for one prompt. Continuation `c`
/// of prompt `i` draws from its own stream seeded by `(seed, i, c)`.
pub fn generate(decoder: &Decoder, prompt: &Prompt, prompt_index: usize, gen: &GenerationConfig) -> Result<GenerationRecord> {
    gen.validate()?;
    let vocab = decoder.base().vocab().clone();
    let seq = vocab.encode(&prompt.text, &prompt.lang);
    let prompt_ids = seq.without_eos();
    let samples: Vec<Vec<u32>> = (0..gen.continuations)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(&[gen.seed, prompt_index as u64, c as u64]);
            sample_continuation(decoder, prompt_ids, gen, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(GenerationRecord {
        prompt_index,
        prompt: prompt.text.clone(),
        lang: prompt.lang.clone(),
        token_counts: samples.iter().map(Vec::len).collect(),
        continuations: samples.iter().map(|ids| vocab.decode(ids)).collect(),
        backend: decoder.config().backend,
        ensemble: *decoder.config(),
        generation: *gen,
    })
}

/// Generates for every prompt; prompt `i` uses index `i`.
pub fn generate_all(decoder: &Decoder, prompts: &[Prompt], gen: &GenerationConfig) -> Result<Vec<GenerationRecord>> {
    prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| generate(decoder, p, i, gen))
        .collect()
}
