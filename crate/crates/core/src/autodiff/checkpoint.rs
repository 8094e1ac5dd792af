//! Flat parameter checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "HSVTCKP1"
//! count    u32       number of entries
//! entry*   name_len u32, name (UTF-8), ndim u32, extents u64 × ndim,
//!          values f64 × product(extents)
//! ```
//!
//! Entries appear in the module's parameter visiting order, so saving the
//! same model twice yields identical bytes.

use std::io::{Read, Write};
use std::path::Path;

use super::param::{Module, Parameter};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HSVTCKP1";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode(params: &[&Parameter]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        let v = p.value();
        out.extend_from_slice(&(p.name().len() as u32).to_le_bytes());
        out.extend_from_slice(p.name().as_bytes());
        out.extend_from_slice(&(v.ndim() as u32).to_le_bytes());
        for &d in v.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in v.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::parse(format!("checkpoint byte {}", self.pos), "truncated"));
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
}

pub fn decode(bytes: &[u8]) -> Result<Vec<CheckpointEntry>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::parse("checkpoint byte 0", "bad magic"));
    }
    let count = c.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let at = c.pos;
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::parse(format!("checkpoint byte {at}"), "name is not UTF-8"))?
            .to_string();
        let ndim = c.u32()? as usize;
        let shape: Vec<usize> = (0..ndim).map(|_| c.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        entries.push(CheckpointEntry { name, shape, data });
    }
    if c.pos != bytes.len() {
        return Err(Error::parse(format!("checkpoint byte {}", c.pos), "trailing bytes"));
    }
    Ok(entries)
}

/// Copy checkpoint values into the module; every parameter must be present
/// with a matching shape.
pub fn apply(module: &dyn Module, entries: &[CheckpointEntry]) -> Result<()> {
    let by_name: std::collections::HashMap<&str, &CheckpointEntry> =
        entries.iter().map(|e| (e.name.as_str(), e)).collect();
    for p in module.param_list() {
        let e = by_name
            .get(p.name())
            .ok_or_else(|| Error::invalid("checkpoint", format!("missing parameter {}", p.name())))?;
        if e.shape != p.shape() {
            return Err(Error::invalid(
                "checkpoint",
                format!("{}: stored shape {:?}, model expects {:?}", p.name(), e.shape, p.shape()),
            ));
        }
        p.set_data(e.data.clone())?;
    }
    Ok(())
}

pub fn save(module: &dyn Module, path: &Path) -> Result<()> {
    let bytes = encode(&module.param_list());
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(module: &dyn Module, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    apply(module, &decode(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Two(Parameter, Parameter);
    impl Module for Two {
        fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
            out.push(&self.0);
            out.push(&self.1);
        }
    }

    #[test]
    fn roundtrip_restores_values() {
        let a = Two(
            Parameter::new("l.w", &[2, 2], vec![1.0, -2.5, 3.25, 1e-300]).unwrap(),
            Parameter::buffer("l.running_var", &[2], vec![0.5, 7.0]).unwrap(),
        );
        let bytes = encode(&a.param_list());
        let b = Two(Parameter::zeros("l.w", &[2, 2]), Parameter::zeros("l.running_var", &[2]));
        apply(&b, &decode(&bytes).unwrap()).unwrap();
        assert_eq!(encode(&b.param_list()), bytes);
    }

    #[test]
    fn truncated_is_rejected() {
        let a = Two(Parameter::zeros("x", &[3]), Parameter::zeros("y", &[1]));
        let bytes = encode(&a.param_list());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Two(Parameter::zeros("x", &[3]), Parameter::zeros("y", &[1]));
        let b = Two(Parameter::zeros("x", &[4]), Parameter::zeros("y", &[1]));
        assert!(apply(&b, &decode(&encode(&a.param_list())).unwrap()).is_err());
    }
}
