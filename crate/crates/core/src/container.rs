//! HEDT: a minimal little-endian tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "HEDT"
//! version      u16      = 1
//! entry_count  u32
//! entry_count × {
//!     name_len u16, name (UTF-8, name_len bytes)
//!     dtype    u8       0 = f32, 1 = f64
//!     rank     u8
//!     dims     rank × u32
//!     data     product(dims) × dtype size bytes, row-major
//! }
//! ```
//!
//! The file ends exactly after the last data block; trailing bytes are an error.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{ContainerError, Error, Result};

pub const MAGIC: [u8; 4] = *b"HEDT";
pub const VERSION: u16 = 1;

/// Element type of a stored tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }
}

/// Tensor payload; the variant fixes the dtype.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

/// One named tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<u32>,
    pub data: TensorData,
}

impl Entry {
    pub fn new(name: impl Into<String>, shape: Vec<u32>, data: TensorData) -> Result<Self> {
        let name = name.into();
        let expected: usize = shape.iter().map(|&d| d as usize).product();
        if expected != data.len() {
            return Err(ContainerError::ShapeMismatch {
                entry: name,
                shape,
                len: data.len(),
            }
            .into());
        }
        Ok(Entry { name, shape, data })
    }

    pub fn f32(name: impl Into<String>, shape: Vec<u32>, values: Vec<f32>) -> Result<Self> {
        Self::new(name, shape, TensorData::F32(values))
    }

    pub fn f64(name: impl Into<String>, shape: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        Self::new(name, shape, TensorData::F64(values))
    }
}

/// An ordered collection of uniquely named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorContainer {
    pub version: u16,
    entries: Vec<Entry>,
}

impl TensorContainer {
    pub fn new() -> Self {
        TensorContainer {
            version: VERSION,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: Entry) -> Result<()> {
        if self.get(&entry.name).is_some() {
            return Err(ContainerError::DuplicateName(entry.name).into());
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Entry> {
        self.get(name)
            .ok_or_else(|| ContainerError::MissingEntry(name.to_string()).into())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self
            .entries
            .iter()
            .map(|e| e.name.len() + 4 + 4 * e.shape.len() + e.data.len() * e.data.dtype().size())
            .sum();
        let mut out = Vec::with_capacity(10 + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.data.dtype().code());
            out.push(e.shape.len() as u8);
            for d in &e.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match &e.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take("", "magic", 4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(ContainerError::BadMagic(magic));
        }
        let version = r.u16("", "version")?;
        if version != VERSION {
            return Err(ContainerError::VersionMismatch {
                found: version,
                supported: VERSION,
            });
        }
        let count = r.u32("", "entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        let mut seen = HashSet::new();
        for index in 0..count {
            let placeholder = format!("#{index}");
            let name_len = r.u16(&placeholder, "name length")? as usize;
            let name = std::str::from_utf8(r.take(&placeholder, "name", name_len)?)
                .map_err(|_| ContainerError::BadName { index })?
                .to_string();
            let code = r.u8(&name, "dtype")?;
            let dtype = match code {
                0 => DType::F32,
                1 => DType::F64,
                _ => return Err(ContainerError::UnknownDtype { entry: name, code }),
            };
            let rank = r.u8(&name, "rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32(&name, "shape")?);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .ok_or_else(|| ContainerError::BadEntry {
                    entry: name.clone(),
                    message: "shape product overflows".into(),
                })?;
            let nbytes = len
                .checked_mul(dtype.size())
                .ok_or_else(|| ContainerError::BadEntry {
                    entry: name.clone(),
                    message: "data size overflows".into(),
                })?;
            let block = r.take(&name, "data", nbytes)?;
            let data = match dtype {
                DType::F32 => TensorData::F32(
                    block
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                ),
                DType::F64 => TensorData::F64(
                    block
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
            };
            if !seen.insert(name.clone()) {
                return Err(ContainerError::DuplicateName(name));
            }
            entries.push(Entry { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(ContainerError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(TensorContainer { version, entries })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, entry: &str, what: &'static str, n: usize) -> Result<&'a [u8], ContainerError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ContainerError::Truncated {
                entry: entry.to_string(),
                what,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, entry: &str, what: &'static str) -> Result<u8, ContainerError> {
        Ok(self.take(entry, what, 1)?[0])
    }

    fn u16(&mut self, entry: &str, what: &'static str) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(
            self.take(entry, what, 2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self, entry: &str, what: &'static str) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(
            self.take(entry, what, 4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn read_container(path: impl AsRef<Path>) -> Result<TensorContainer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(TensorContainer::from_bytes(&bytes)?)
}

pub fn write_container(container: &TensorContainer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, container.to_bytes()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
