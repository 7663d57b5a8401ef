//! Named-array container used for checkpoints, latent files and feature dumps.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "PSER"
//! version    u32
//! count      u32      number of entries
//! entry*     name_len u32 | name (UTF-8) | tag u8 (0 = f32, 1 = f64, 2 = u8)
//!            | rank u32 | dims u64 * rank | raw element data
//! crc32      u32      IEEE CRC-32 of every preceding byte
//! ```
//!
//! Entries are written in lexicographic name order, so a save -> load -> save
//! cycle reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PSER";
pub const FORMAT_VERSION: u32 = 1;

const TAG_F32: u8 = 0;
const TAG_F64: u8 = 1;
const TAG_U8: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tag(&self) -> u8 {
        match self {
            ArrayData::F32(_) => TAG_F32,
            ArrayData::F64(_) => TAG_F64,
            ArrayData::U8(_) => TAG_U8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub dims: Vec<usize>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn new(dims: Vec<usize>, data: ArrayData) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {:?} imply {} elements, data has {}",
                dims,
                expected,
                data.len()
            )));
        }
        Ok(NamedArray { dims, data })
    }

    /// Elements widened to f64 (u8 and f32 convert exactly).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            ArrayData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            ArrayData::F64(v) => v.clone(),
            ArrayData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// An ordered collection of named arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArrayStore {
    entries: BTreeMap<String, NamedArray>,
}

impl ArrayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, array: NamedArray) {
        self.entries.insert(name.into(), array);
    }

    pub fn insert_f64(&mut self, name: impl Into<String>, dims: &[usize], data: Vec<f64>) -> Result<()> {
        let arr = NamedArray::new(dims.to_vec(), ArrayData::F64(data))?;
        self.insert(name, arr);
        Ok(())
    }

    pub fn insert_u8(&mut self, name: impl Into<String>, dims: &[usize], data: Vec<u8>) -> Result<()> {
        let arr = NamedArray::new(dims.to_vec(), ArrayData::U8(data))?;
        self.insert(name, arr);
        Ok(())
    }

    pub fn insert_array(&mut self, name: impl Into<String>, array: &ArrayD<f64>) {
        let data: Vec<f64> = array.iter().copied().collect();
        self.insert(
            name,
            NamedArray {
                dims: array.shape().to_vec(),
                data: ArrayData::F64(data),
            },
        );
    }

    /// Stores UTF-8 text as a rank-1 u8 array.
    pub fn insert_text(&mut self, name: impl Into<String>, text: &str) {
        let bytes = text.as_bytes().to_vec();
        self.insert(
            name,
            NamedArray {
                dims: vec![bytes.len()],
                data: ArrayData::U8(bytes),
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.entries.get(name)
    }

    fn require(&self, name: &str) -> Result<&NamedArray> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing array `{name}`")))
    }

    pub fn get_array(&self, name: &str) -> Result<ArrayD<f64>> {
        let entry = self.require(name)?;
        ArrayD::from_shape_vec(IxDyn(&entry.dims), entry.to_f64_vec())
            .map_err(|e| Error::Format(format!("array `{name}`: {e}")))
    }

    pub fn get_text(&self, name: &str) -> Result<String> {
        match &self.require(name)?.data {
            ArrayData::U8(bytes) => String::from_utf8(bytes.clone())
                .map_err(|_| Error::Format(format!("array `{name}` is not UTF-8"))),
            _ => Err(Error::Format(format!("array `{name}` is not a text (u8) array"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, arr) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(arr.data.tag());
            out.extend_from_slice(&(arr.dims.len() as u32).to_le_bytes());
            for &d in &arr.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &arr.data {
                ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::U8(v) => out.extend_from_slice(v),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::CorruptFile(format!("{} bytes is too short", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::CorruptFile("bad magic".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::CorruptFile("checksum mismatch".into()));
        }
        let mut rd = Reader { buf: body, pos: 4 };
        let version = rd.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let count = rd.u32()? as usize;
        let mut store = ArrayStore::new();
        for _ in 0..count {
            let name_len = rd.u32()? as usize;
            let name = std::str::from_utf8(rd.take(name_len)?)
                .map_err(|_| Error::CorruptFile("entry name is not UTF-8".into()))?
                .to_string();
            let tag = rd.take(1)?[0];
            let rank = rd.u32()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(rd.u64()? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::CorruptFile(format!("`{name}` dims overflow")))?;
            let data = match tag {
                TAG_F32 => ArrayData::F32(
                    rd.take(n.checked_mul(4).ok_or_else(overflow)?)?
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                TAG_F64 => ArrayData::F64(
                    rd.take(n.checked_mul(8).ok_or_else(overflow)?)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                TAG_U8 => ArrayData::U8(rd.take(n)?.to_vec()),
                other => return Err(Error::CorruptFile(format!("unknown element tag {other}"))),
            };
            store.insert(name, NamedArray { dims, data });
        }
        if rd.pos != body.len() {
            return Err(Error::CorruptFile("trailing bytes after last entry".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

fn overflow() -> Error {
    Error::CorruptFile("entry size overflow".into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptFile("unexpected end of data".into()))?;
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
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ArrayStore {
        let mut s = ArrayStore::new();
        s.insert_f64("b.weights", &[2, 3], vec![1.0, -2.5, 3.25, f64::MIN_POSITIVE, 0.0, -0.0])
            .unwrap();
        s.insert_u8("a.mask", &[4], vec![1, 1, 0, 0]).unwrap();
        s.insert("c.half", NamedArray::new(vec![2], ArrayData::F32(vec![0.5, 1e-3])).unwrap());
        s.insert_text("meta", "stage=1\n");
        s
    }

    #[test]
    fn header_layout() {
        let bytes = sample_store().to_bytes();
        assert_eq!(&bytes[..4], b"PSER");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        // first entry is the lexicographically smallest name
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 6);
        assert_eq!(&bytes[16..22], b"a.mask");
        assert_eq!(bytes[22], TAG_U8);
    }

    #[test]
    fn round_trip_is_exact() {
        let store = sample_store();
        let bytes = store.to_bytes();
        let back = ArrayStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.get_text("meta").unwrap(), "stage=1\n");
        let w = back.get_array("b.weights").unwrap();
        assert_eq!(w.shape(), &[2, 3]);
        assert_eq!(w[[0, 2]].to_bits(), 3.25f64.to_bits());
        assert_eq!(w[[1, 2]].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn truncation_and_bitflips_are_detected() {
        let bytes = sample_store().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() / 2, 10] {
            assert!(matches!(ArrayStore::from_bytes(&bytes[..cut]), Err(Error::CorruptFile(_))));
        }
        let mut flipped = bytes.clone();
        flipped[30] ^= 0x01;
        assert!(matches!(ArrayStore::from_bytes(&flipped), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn version_is_checked() {
        let mut bytes = sample_store().to_bytes();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            ArrayStore::from_bytes(&bytes),
            Err(Error::VersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn missing_file() {
        let err = ArrayStore::load("/nonexistent/definitely/missing.pser").unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));
    }

    #[test]
    fn dims_must_match_data() {
        assert!(NamedArray::new(vec![2, 2], ArrayData::F64(vec![1.0; 3])).is_err());
    }
}
