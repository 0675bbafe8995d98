//! Self-describing binary container for networks and raw parameter blocks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "DSRLCKPT" | version u32 | entry count u32 | entries...
//! entry: name_len u16 | name utf-8 | kind u8 | payload
//!   kind 0 (mlp):  n_widths u32 | widths u32* | activation u8 | ln flags u8* (one per layer)
//!                  | n_params u64 | params f64*
//!   kind 1 (f64):  len u64 | values f64*
//!   kind 2 (u64):  value u64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::{Activation, Mlp, NumericsError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSRLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Mlp(Mlp),
    F64(Vec<f64>),
    U64(u64),
}

/// Ordered collection of named entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Entry)>,
}

fn err(msg: impl Into<String>) -> NumericsError {
    NumericsError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, name: impl Into<String>, entry: Entry) {
        let name = name.into();
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = entry;
        } else {
            self.entries.push((name, entry));
        }
    }

    pub fn put_mlp(&mut self, name: impl Into<String>, net: &Mlp) {
        self.put(name, Entry::Mlp(net.clone()));
    }

    pub fn put_f64(&mut self, name: impl Into<String>, values: &[f64]) {
        self.put(name, Entry::F64(values.to_vec()));
    }

    pub fn put_u64(&mut self, name: impl Into<String>, value: u64) {
        self.put(name, Entry::U64(value));
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn mlp(&self, name: &str) -> Result<&Mlp> {
        match self.get(name) {
            Some(Entry::Mlp(m)) => Ok(m),
            _ => Err(err(format!("missing network entry `{name}`"))),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match self.get(name) {
            Some(Entry::F64(v)) => Ok(v),
            _ => Err(err(format!("missing f64 entry `{name}`"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<u64> {
        match self.get(name) {
            Some(Entry::U64(v)) => Ok(*v),
            _ => Err(err(format!("missing u64 entry `{name}`"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::Mlp(net) => {
                    out.push(0);
                    out.extend_from_slice(&(net.widths().len() as u32).to_le_bytes());
                    for w in net.widths() {
                        out.extend_from_slice(&(*w as u32).to_le_bytes());
                    }
                    out.push(net.activation().code());
                    out.extend(net.layer_norm_flags().iter().map(|&f| f as u8));
                    write_f64s(&mut out, net.params());
                }
                Entry::F64(v) => {
                    out.push(1);
                    write_f64s(&mut out, v);
                }
                Entry::U64(v) => {
                    out.push(2);
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(err("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut ck = Checkpoint::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| err("entry name is not utf-8"))?
                .to_string();
            let entry = match r.take(1)?[0] {
                0 => {
                    let n = r.u32()? as usize;
                    if !(2..=1024).contains(&n) {
                        return Err(err(format!("bad layer count {n}")));
                    }
                    let widths = (0..n)
                        .map(|_| r.u32().map(|w| w as usize))
                        .collect::<Result<Vec<_>>>()?;
                    let act = Activation::from_code(r.take(1)?[0])
                        .ok_or_else(|| err("unknown activation"))?;
                    let flags: Vec<bool> = r.take(n - 1)?.iter().map(|&b| b != 0).collect();
                    let params = r.f64s()?;
                    Entry::Mlp(Mlp::from_parts(&widths, act, &flags, params)?)
                }
                1 => Entry::F64(r.f64s()?),
                2 => Entry::U64(r.u64()?),
                k => return Err(err(format!("unknown entry kind {k}"))),
            };
            ck.put(name, entry);
        }
        if r.pos != bytes.len() {
            return Err(err("trailing bytes"));
        }
        Ok(ck)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn write_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(err("truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(err("truncated checkpoint"));
        }
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
