//! Flat named-tensor checkpoints.
//!
//! Layout: magic `FDGAN1`, one version byte, then for each tensor until end of
//! stream: name length (`u32` LE), UTF-8 name, rank (`u32` LE), dims
//! (`u32` LE each), values (`f32` LE).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"FDGAN1";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<F: Scalar>(&mut self, name: impl Into<String>, tensor: &Tensor<F>) {
        let name = name.into();
        let t = tensor.cast::<f32>();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = t,
            None => self.tensors.push((name, t)),
        }
    }

    pub fn get<F: Scalar>(&self, name: &str) -> Option<Tensor<F>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t.cast())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Tensors whose names start with `prefix.`, with the prefix stripped.
    pub fn scoped(&self, prefix: &str) -> Checkpoint {
        let p = format!("{prefix}.");
        Checkpoint {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(&p).map(|s| (s.to_string(), t.clone())))
                .collect(),
        }
    }

    pub fn extend_scoped(&mut self, prefix: &str, other: &Checkpoint) {
        for (n, t) in &other.tensors {
            self.insert(format!("{prefix}.{n}"), t);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<checkpoint stream>", e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&[VERSION]).map_err(io)?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(name.as_bytes()).map_err(io)?;
            w.write_all(&(t.rank() as u32).to_le_bytes()).map_err(io)?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
            }
            let mut buf = Vec::with_capacity(t.len() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut header = [0u8; 7];
        r.read_exact(&mut header).map_err(|_| Error::Format("truncated checkpoint header".into()))?;
        if &header[..6] != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        if header[6] != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", header[6])));
        }
        let mut tensors = Vec::new();
        while !r.is_empty() {
            let name_len = read_u32(&mut r)? as usize;
            let name = take(&mut r, name_len)?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<_>>()?;
            let n: usize = dims.iter().product();
            let raw = take(&mut r, n * 4)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor::from_vec(dims, data)?));
        }
        Ok(Checkpoint { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized form, hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r, 4)?.try_into().unwrap()))
}
