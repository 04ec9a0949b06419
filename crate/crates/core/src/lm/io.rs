//! `DTK1` binary format for a vocabulary plus n-gram model.
//!
//! All integers little-endian:
//!
//! ```text
//! "DTK1"
//! u32 vocab_len, then per token: u32 byte_len, utf-8 bytes
//! u32 order
//! f64 x order   interpolation weights, lowest order first
//! f64           add-k
//! per order j in 0..order:
//!   u64 context_count
//!   per context (sorted): u32 x j context ids, u32 entry_count, (u32 id, u32 count) x entry_count
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::ngram::{ContextCounts, NgramLm, SmoothingConfig};
use super::vocab::Vocab;
use crate::error::{DetoxError, Result};

pub const LM_MAGIC: &[u8; 4] = b"DTK1";

pub fn write_lm<W: Write>(lm: &NgramLm, mut w: W) -> Result<()> {
    w.write_all(LM_MAGIC)?;
    let vocab = lm.vocab();
    w.write_u32::<LE>(vocab.len() as u32)?;
    for t in vocab.tokens() {
        w.write_u32::<LE>(t.len() as u32)?;
        w.write_all(t.as_bytes())?;
    }
    w.write_u32::<LE>(lm.order() as u32)?;
    for &l in &lm.smoothing().lambdas {
        w.write_f64::<LE>(l)?;
    }
    w.write_f64::<LE>(lm.smoothing().add_k)?;
    for table in lm.tables() {
        let mut contexts: Vec<(&Vec<u32>, &ContextCounts)> = table.iter().collect();
        contexts.sort_unstable_by(|a, b| a.0.cmp(b.0));
        w.write_u64::<LE>(contexts.len() as u64)?;
        for (ctx, counts) in contexts {
            for &id in ctx {
                w.write_u32::<LE>(id)?;
            }
            w.write_u32::<LE>(counts.next.len() as u32)?;
            for &(t, c) in &counts.next {
                w.write_u32::<LE>(t)?;
                w.write_u32::<LE>(c)?;
            }
        }
    }
    Ok(())
}

pub fn read_lm<R: Read>(mut r: R) -> Result<NgramLm> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != LM_MAGIC {
        return Err(DetoxError::format("not a DTK1 model file"));
    }
    let vocab_len = r.read_u32::<LE>()? as usize;
    let mut tokens = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        tokens.push(String::from_utf8(buf).map_err(|_| DetoxError::format("token is not utf-8"))?);
    }
    let vocab = Arc::new(Vocab::from_token_list(tokens)?);
    let order = r.read_u32::<LE>()? as usize;
    if order == 0 {
        return Err(DetoxError::format("order 0"));
    }
    let mut lambdas = Vec::with_capacity(order);
    for _ in 0..order {
        lambdas.push(r.read_f64::<LE>()?);
    }
    let add_k = r.read_f64::<LE>()?;
    let mut tables = Vec::with_capacity(order);
    for j in 0..order {
        let n = r.read_u64::<LE>()? as usize;
        let mut table = HashMap::with_capacity(n);
        for _ in 0..n {
            let mut ctx = Vec::with_capacity(j);
            for _ in 0..j {
                ctx.push(r.read_u32::<LE>()?);
            }
            let entries = r.read_u32::<LE>()? as usize;
            let mut next = Vec::with_capacity(entries);
            let mut total = 0u64;
            for _ in 0..entries {
                let t = r.read_u32::<LE>()?;
                let c = r.read_u32::<LE>()?;
                if t as usize >= vocab_len {
                    return Err(DetoxError::format(format!("token id {t} outside vocabulary")));
                }
                total += c as u64;
                next.push((t, c));
            }
            table.insert(ctx, ContextCounts { total, next });
        }
        tables.push(table);
    }
    NgramLm::from_parts(vocab, order, SmoothingConfig { lambdas, add_k }, tables)
}

pub fn save_lm(lm: &NgramLm, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_lm(lm, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_lm(path: impl AsRef<Path>) -> Result<NgramLm> {
    read_lm(BufReader::new(File::open(path)?))
}
