//! Self-describing binary container for named arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic       4 bytes  "NLLC"
//! version     u32      currently 1
//! header_len  u64      byte length of the JSON header
//! header      JSON     {"kind": str, "meta": object, "arrays": [{"name", "dtype", "shape"}]}
//! payload              arrays in header order, row-major, dtype f32 | f64 | u32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NLLC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
}

impl ArrayData {
    fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "f32",
            ArrayData::F64(_) => "f64",
            ArrayData::U32(_) => "u32",
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::U32(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<ArrayHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: ArrayData) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("array {name}: shape {shape:?} holds {} values", data.len())));
        }
        self.arrays.push(NamedArray { name, shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("missing array {name}")))
    }

    pub fn f32s(&self, name: &str) -> Result<(&[usize], &[f32])> {
        match self.get(name)? {
            NamedArray { shape, data: ArrayData::F32(v), .. } => Ok((shape, v)),
            _ => format_err(format!("array {name} is not f32")),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.get(name)? {
            NamedArray { shape, data: ArrayData::F64(v), .. } => Ok((shape, v)),
            _ => format_err(format!("array {name} is not f64")),
        }
    }

    pub fn u32s(&self, name: &str) -> Result<(&[usize], &[u32])> {
        match self.get(name)? {
            NamedArray { shape, data: ArrayData::U32(v), .. } => Ok((shape, v)),
            _ => format_err(format!("array {name} is not u32")),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayHeader {
                    name: a.name.clone(),
                    dtype: a.data.dtype().to_string(),
                    shape: a.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for a in &self.arrays {
            match &a.data {
                ArrayData::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                ArrayData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                ArrayData::U32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return format_err("not a container file (bad magic)");
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return format_err(format!("unsupported container version {version}"));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for ah in header.arrays {
            let n: usize = ah.shape.iter().product();
            let data = match ah.dtype.as_str() {
                "f32" => ArrayData::F32(read_words(&mut r, n, f32::from_le_bytes)?),
                "f64" => ArrayData::F64(read_words(&mut r, n, f64::from_le_bytes)?),
                "u32" => ArrayData::U32(read_words(&mut r, n, u32::from_le_bytes)?),
                other => return format_err(format!("unknown dtype {other}")),
            };
            arrays.push(NamedArray {
                name: ah.name,
                shape: ah.shape,
                data,
            });
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_words<R: Read, T, const N: usize>(r: &mut R, n: usize, conv: fn([u8; N]) -> T) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; N];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(conv(buf));
    }
    Ok(out)
}
