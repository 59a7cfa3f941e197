//! Named parameter collections and their binary container format.
//!
//! A container is laid out as:
//!
//! ```text
//! "HREC" | u32 version (=1) | u64 header_len | header JSON
//!        | f32 payloads, little-endian, in header order
//!        | [u64 trailer_len | trailer JSON]        (optional)
//! ```
//!
//! The header lists `{path, shape, count}` per tensor.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HREC";
pub const FORMAT_VERSION: u32 = 1;

/// Map from dot-separated parameter path to tensor, iterated in
/// lexicographic path order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    entries: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Tensor<T>) -> Option<Tensor<T>> {
        self.entries.insert(path.into(), value)
    }

    pub fn get(&self, path: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(path)
            .ok_or_else(|| Error::UnknownParam(path.to_string()))
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.entries.iter_mut()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn extend(&mut self, other: ParamSet<T>) {
        self.entries.extend(other.entries);
    }

    /// Entries whose path starts with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> ParamSet<T> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> ParamSet<T> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Shape of every entry, keyed by path.
    pub fn shapes(&self) -> BTreeMap<String, Vec<usize>> {
        self.entries
            .iter()
            .map(|(k, v)| (k.clone(), v.shape().to_vec()))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }
}

/// Gradient per parameter path, shape-identical to the parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradStore<T> {
    grads: ParamSet<T>,
}

impl<T: Real> GradStore<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        Self {
            grads: params.zeros_like(),
        }
    }

    pub fn empty() -> Self {
        Self {
            grads: ParamSet::new(),
        }
    }

    pub fn get(&self, path: &str) -> Option<&Tensor<T>> {
        self.grads.entries.get(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Adds `scale * grad` into the entry for `path`, creating it if absent.
    pub fn accumulate(&mut self, path: &str, grad: &Tensor<T>, scale: T) -> Result<()> {
        match self.grads.entries.get_mut(path) {
            Some(acc) => {
                if acc.shape() != grad.shape() {
                    return Err(Error::shape("gradient accumulation", acc.shape(), grad.shape()));
                }
                if scale == T::one() {
                    acc.add_assign(grad);
                } else {
                    acc.scaled_add_assign(grad, scale);
                }
            }
            None => {
                let value = if scale == T::one() {
                    grad.clone()
                } else {
                    grad.map(|g| g * scale)
                };
                self.grads.insert(path, value);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &GradStore<T>, scale: T) -> Result<()> {
        for (path, g) in other.iter() {
            self.accumulate(path, g, scale)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.grads.is_finite()
    }

    pub fn as_params(&self) -> &ParamSet<T> {
        &self.grads
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    tensors: Vec<HeaderEntry>,
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    path: String,
    shape: Vec<usize>,
    count: usize,
}

fn write_err(e: std::io::Error) -> Error {
    Error::Format(format!("write failed: {e}"))
}

/// Serializes `params` (and an optional JSON trailer) into the container format.
pub fn write_params<W: Write>(
    mut w: W,
    params: &ParamSet<f32>,
    trailer: Option<&[u8]>,
) -> Result<()> {
    let header = Header {
        tensors: params
            .iter()
            .map(|(path, t)| HeaderEntry {
                path: path.clone(),
                shape: t.shape().to_vec(),
                count: t.len(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    w.write_all(MAGIC).map_err(write_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(write_err)?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())
        .map_err(write_err)?;
    w.write_all(&header_bytes).map_err(write_err)?;
    let mut buf = Vec::with_capacity(params.num_scalars() * 4);
    for (_, t) in params.iter() {
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(write_err)?;
    if let Some(trailer) = trailer {
        w.write_all(&(trailer.len() as u64).to_le_bytes())
            .map_err(write_err)?;
        w.write_all(trailer).map_err(write_err)?;
    }
    Ok(())
}

pub fn params_to_bytes(params: &ParamSet<f32>, trailer: Option<&[u8]>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_params(&mut out, params, trailer)?;
    Ok(out)
}

/// Parses a container; returns the parameters and the trailer bytes if present.
pub fn read_params<R: Read>(mut r: R) -> Result<(ParamSet<f32>, Option<Vec<u8>>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    params_from_bytes(&bytes)
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<(ParamSet<f32>, Option<Vec<u8>>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected HREC".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(cur.take(header_len)?)?;
    let mut params = ParamSet::new();
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        if n != entry.count {
            return Err(Error::Format(format!(
                "tensor `{}`: shape {:?} disagrees with count {}",
                entry.path, entry.shape, entry.count
            )));
        }
        let raw = cur.take(n * 4).map_err(|_| Error::PayloadSize {
            what: entry.path.clone(),
            expected: n * 4,
            actual: bytes.len().saturating_sub(cur.pos),
        })?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(entry.shape, data)?;
        if params.insert(entry.path.clone(), t).is_some() {
            return Err(Error::Format(format!("duplicate path `{}`", entry.path)));
        }
    }
    let trailer = if cur.pos == bytes.len() {
        None
    } else {
        let len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
        let t = cur.take(len)?.to_vec();
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after trailer".into()));
        }
        Some(t)
    };
    Ok((params, trailer))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "unexpected end of data: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            ))),
        }
    }
}
