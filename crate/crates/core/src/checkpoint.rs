//! Self-describing binary container for model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "SELMASK\0"
//! version  u32
//! header   u32 byte length, then UTF-8 "key=value\n" lines
//! vocab    u32 count, then per token: u32 byte length + UTF-8 bytes
//! tensors  u32 count, then per tensor:
//!            u32 name length + name, u32 ndim, ndim x u64 dims,
//!            product(dims) x f32 values
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::nn::ParamSet;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SELMASK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub header: BTreeMap<String, String>,
    pub vocab: Vec<String>,
    pub params: ParamSet,
}

impl Container {
    pub fn header_value(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(format!("checkpoint header lacks '{key}'")))
    }

    pub fn header_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.header_value(key)?;
        raw.parse()
            .map_err(|_| Error::format(format!("checkpoint header '{key}={raw}' is malformed")))
    }
}

pub fn to_bytes(c: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let mut header = String::new();
    for (k, v) in &c.header {
        header.push_str(k);
        header.push('=');
        header.push_str(v);
        header.push('\n');
    }
    put_bytes(&mut out, header.as_bytes());
    out.extend_from_slice(&(c.vocab.len() as u32).to_le_bytes());
    for tok in &c.vocab {
        put_bytes(&mut out, tok.as_bytes());
    }
    out.extend_from_slice(&(c.params.len() as u32).to_le_bytes());
    for t in c.params.tensors() {
        put_bytes(&mut out, t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(format!(
                "checkpoint truncated: needed {n} bytes at offset {}, {} remain",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("checkpoint string is not UTF-8"))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Container> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::format("not a checkpoint file (bad magic bytes)"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "checkpoint format version {version} is not supported (this build reads version {FORMAT_VERSION})"
        )));
    }
    let mut header = BTreeMap::new();
    for line in r.string()?.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("malformed checkpoint header line '{line}'")))?;
        header.insert(k.to_string(), v.to_string());
    }
    let n_vocab = r.u32()? as usize;
    let mut vocab = Vec::with_capacity(n_vocab.min(1 << 20));
    for _ in 0..n_vocab {
        vocab.push(r.string()?);
    }
    let n_tensors = r.u32()? as usize;
    let mut params = ParamSet::default();
    for _ in 0..n_tensors {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::format("tensor size overflow"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        params.push(name, shape, data);
    }
    if r.pos != buf.len() {
        return Err(Error::format(format!(
            "checkpoint has {} trailing bytes",
            buf.len() - r.pos
        )));
    }
    Ok(Container { header, vocab, params })
}

pub fn write(path: &Path, c: &Container) -> Result<()> {
    fs::write(path, to_bytes(c)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Container> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Format { message, .. } => Error::Format {
            path: Some(path.to_path_buf()),
            line: None,
            message,
        },
        other => other,
    })
}

/// Checks that `params` has exactly the names and shapes of `expected`.
pub fn check_layout(expected: &ParamSet, params: &ParamSet) -> Result<()> {
    if expected.len() != params.len() {
        return Err(Error::format(format!(
            "checkpoint has {} tensors, model expects {}",
            params.len(),
            expected.len()
        )));
    }
    for (e, p) in expected.tensors().iter().zip(params.tensors()) {
        if e.name != p.name || e.shape != p.shape {
            return Err(Error::format(format!(
                "tensor mismatch: checkpoint has {} {:?}, model expects {} {:?}",
                p.name, p.shape, e.name, e.shape
            )));
        }
    }
    Ok(())
}
