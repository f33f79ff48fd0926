//! Versioned binary checkpoints with embedded vocabularies.
//!
//! Layout (little endian): magic, `u32` version, `u32` hidden size,
//! source and target vocabularies as `u32` count then `u32`-length-prefixed
//! UTF-8 words, `u64` parameter count, `f64` parameters.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::model::ToyModel;
use super::vocab::{Vocab, Vocabs, SRC_SPECIALS, TGT_SPECIALS};

const MAGIC: &[u8; 8] = b"SIMULPL\0";
const VERSION: u32 = 1;
const MAX_WORD_BYTES: u32 = 1 << 16;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_vocab(out: &mut Vec<u8>, v: &Vocab) {
    put_u32(out, v.len() as u32);
    for w in v.words() {
        put_u32(out, w.len() as u32);
        out.extend_from_slice(w.as_bytes());
    }
}

pub fn write_checkpoint<W: Write>(mut out: W, model: &ToyModel) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(64 + model.param_count() * 8);
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, model.hidden() as u32);
    put_vocab(&mut buf, &model.vocabs.source);
    put_vocab(&mut buf, &model.vocabs.target);
    buf.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    out.write_all(&buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn vocab(&mut self, specials: &[&str]) -> Result<Vocab> {
        let count = self.u32()? as usize;
        let mut words = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = self.u32()?;
            if len > MAX_WORD_BYTES {
                return Err(Error::Checkpoint(format!("word of {len} bytes")));
            }
            let w = std::str::from_utf8(self.take(len as usize)?)
                .map_err(|_| Error::Checkpoint("vocabulary word is not UTF-8".into()))?;
            words.push(w.to_string());
        }
        if words.len() < specials.len() || words.iter().zip(specials).any(|(w, s)| w != s) {
            return Err(Error::Checkpoint("vocabulary lacks the reserved entries".into()));
        }
        Vocab::new(words).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ToyModel> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("not a simulpl checkpoint".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hidden = c.u32()? as usize;
    let source = c.vocab(&SRC_SPECIALS)?;
    let target = c.vocab(&TGT_SPECIALS)?;
    let count = c.u64()? as usize;
    if count.checked_mul(8) != Some(bytes.len() - c.pos) {
        return Err(Error::Checkpoint(format!(
            "{count} parameters declared, {} bytes remain",
            bytes.len() - c.pos
        )));
    }
    let params = c
        .take(count * 8)?
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    ToyModel::from_params(Vocabs { source, target }, hidden, params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ToyModel) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(file), model).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ToyModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
