//! `DTKD` flat datastore file.
//!
//! ```text
//! "DTKD"
//! u32 version (1), u32 dim, u32 vocab_size, u64 entry_count
//! entry_count x (f32 x dim key, u32 value)
//! u64 trailer_len, trailer_len bytes of JSON: polarity, key config, provenance
//! ```
//! Integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::store::{Datastore, Provenance};
use crate::corpus::Label;
use crate::error::{DetoxError, Result};
use crate::lm::ContextKeyConfig;

pub const DATASTORE_MAGIC: &[u8; 4] = b"DTKD";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Trailer {
    polarity: Label,
    key_config: ContextKeyConfig,
    provenance: Vec<Provenance>,
}

pub fn write_datastore<W: Write>(ds: &Datastore, mut w: W) -> Result<()> {
    w.write_all(DATASTORE_MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u32::<LE>(ds.dim() as u32)?;
    w.write_u32::<LE>(ds.vocab_size() as u32)?;
    w.write_u64::<LE>(ds.len() as u64)?;
    for (i, &value) in ds.values().iter().enumerate() {
        for &x in ds.key(i) {
            w.write_f32::<LE>(x)?;
        }
        w.write_u32::<LE>(value)?;
    }
    let trailer = serde_json::to_vec(&Trailer {
        polarity: ds.polarity(),
        key_config: *ds.key_config(),
        provenance: ds.provenance().to_vec(),
    })?;
    w.write_u64::<LE>(trailer.len() as u64)?;
    w.write_all(&trailer)?;
    Ok(())
}

pub fn read_datastore<R: Read>(mut r: R) -> Result<Datastore> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASTORE_MAGIC {
        return Err(DetoxError::format("not a DTKD datastore file"));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(DetoxError::format(format!("unsupported datastore version {version}")));
    }
    let dim = r.read_u32::<LE>()? as usize;
    let vocab_size = r.read_u32::<LE>()? as usize;
    let n = r.read_u64::<LE>()? as usize;
    let mut keys = Vec::with_capacity(n * dim);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..dim {
            keys.push(r.read_f32::<LE>()?);
        }
        values.push(r.read_u32::<LE>()?);
    }
    let len = r.read_u64::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    let trailer: Trailer = serde_json::from_slice(&buf)?;
    if trailer.key_config.dim != dim {
        return Err(DetoxError::format("trailer key dim disagrees with header"));
    }
    Datastore::from_parts(trailer.polarity, trailer.key_config, vocab_size, keys, values, trailer.provenance)
}

pub fn save_datastore(ds: &Datastore, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_datastore(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_datastore(path: impl AsRef<Path>) -> Result<Datastore> {
    read_datastore(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledSample;
    use crate::lm::{ContextKeyer, Vocab};

    #[test]
    fn round_trip_bit_exact() {
        let vocab = Vocab::from_words(["a", "b", "c"]);
        let keyer = ContextKeyer::new(ContextKeyConfig { dim: 8, window: 2, seed: 3 }, vocab.len()).unwrap();
        let samples = vec![
            LabeledSample::new("a b c", "en", Label::Nontoxic, "1"),
            LabeledSample::new("c a", "fr", Label::Nontoxic, "2"),
        ];
        let ds = Datastore::build(&samples, &vocab, &keyer, Label::Nontoxic).unwrap();
        let mut buf = Vec::new();
        write_datastore(&ds, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"DTKD");
        let back = read_datastore(buf.as_slice()).unwrap();
        assert_eq!(back.values(), ds.values());
        let bits = |k: &[f32]| k.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.keys()), bits(ds.keys()));
        assert_eq!(back.provenance(), ds.provenance());
        assert_eq!(back.polarity(), Label::Nontoxic);
        assert_eq!(back.distinct_keys(), ds.distinct_keys());
    }
}
