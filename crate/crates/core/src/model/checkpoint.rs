//! Binary checkpoint format.
//!
//! ```text
//! magic        8 bytes  "ATTNVAR1"
//! config       u64 length + UTF-8 `key=value` lines (model config echo)
//! vocab        u64 count, then per token u32 length + UTF-8 bytes
//! blocks       u64 count, then per block:
//!                u32 name length + name, u32 rank, rank x u64 dims,
//!                u64 value count, values as f64 little-endian
//! ```
//! All integers are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::params::{ModelConfig, ModelParams, Param};

pub const MAGIC: &[u8; 8] = b"ATTNVAR1";

/// Upper bound on any single length field, to fail fast on corrupt input.
const MAX_LEN: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Vocabulary,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str32(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<()> {
    let mut out = Vec::with_capacity(ck.params.num_values() * 8 + 4096);
    out.extend_from_slice(MAGIC);
    let echo = ck.params.config.echo();
    put_u64(&mut out, echo.len() as u64);
    out.extend_from_slice(echo.as_bytes());
    put_u64(&mut out, ck.vocab.len() as u64);
    for t in ck.vocab.tokens() {
        put_str32(&mut out, t);
    }
    put_u64(&mut out, Param::ALL.len() as u64);
    for (&p, t) in Param::ALL.iter().zip(ck.params.tensors()) {
        put_str32(&mut out, p.name());
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u64(&mut out, d as u64);
        }
        put_u64(&mut out, t.len() as u64);
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("unexpected end of file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len64(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > MAX_LEN {
            return Err(corrupt(format!("length {n} out of range")));
        }
        Ok(n as usize)
    }

    fn utf8(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let n = c.len64()?;
    let config = ModelConfig::parse_echo(&c.utf8(n)?)?;

    let count = c.len64()?;
    let mut tokens = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let n = c.u32()? as usize;
        tokens.push(c.utf8(n)?);
    }
    let vocab = Vocabulary::from_tokens(tokens)?;
    if vocab.len() != config.vocab_size {
        return Err(Error::VocabMismatch(format!(
            "checkpoint vocabulary has {} tokens, config says {}",
            vocab.len(),
            config.vocab_size
        )));
    }

    let blocks = c.len64()?;
    if blocks != Param::ALL.len() {
        return Err(corrupt(format!("expected {} blocks, found {blocks}", Param::ALL.len())));
    }
    let mut tensors = Vec::with_capacity(blocks);
    for &p in Param::ALL {
        let n = c.u32()? as usize;
        let name = c.utf8(n)?;
        if name != p.name() {
            return Err(corrupt(format!("expected block {:?}, found {name:?}", p.name())));
        }
        let rank = c.u32()? as usize;
        if rank == 0 || rank > 2 {
            return Err(corrupt(format!("block {name}: rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| c.len64()).collect::<Result<_>>()?;
        let len = c.len64()?;
        let raw = c.take(len.checked_mul(8).ok_or_else(|| corrupt("overflow"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| corrupt(format!("block {name}: {e}")))?);
    }
    if c.pos != buf.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(Checkpoint {
        params: ModelParams::from_tensors(config, tensors)?,
        vocab,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ck)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(fs::File::open(path)?)
}
