//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "M2BN" | version u32 | count u32 |
//!   count × { name_len u16 | name | rank u8 | dims u32 × rank | dtype u8 | values }
//! ```
//!
//! dtype is 0 = f32, 1 = f64, 2 = u8 (opaque bytes such as a text header).

use std::path::Path;

use crate::{DType, Element, Result, Tensor, TensorError};

pub const MAGIC: &[u8; 4] = b"M2BN";
pub const VERSION: u32 = 1;

const MAX_RANK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U8(_) => DType::U8,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

fn format_err(msg: impl Into<String>) -> TensorError {
    TensorError::Format(msg.into())
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
            .ok_or_else(|| format_err(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_tensor<T: Element>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        let values: Vec<f64> = t.data().iter().map(|v| v.as_f64()).collect();
        let data = match T::DTYPE {
            DType::F32 => TensorData::F32(values.iter().map(|&v| v as f32).collect()),
            _ => TensorData::F64(values),
        };
        self.entries.push(Entry {
            name: name.into(),
            dims: t.shape().to_vec(),
            data,
        });
    }

    pub fn push_bytes(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.entries.push(Entry {
            name: name.into(),
            dims: vec![bytes.len()],
            data: TensorData::U8(bytes.to_vec()),
        });
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Loads a stored tensor, converting floating-point storage to `T`.
    pub fn tensor<T: Element>(&self, name: &str) -> Result<Tensor<T>> {
        let entry = self
            .get(name)
            .ok_or_else(|| format_err(format!("missing tensor `{name}`")))?;
        let data: Vec<T> = match &entry.data {
            TensorData::F32(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::from_f64(x)).collect(),
            TensorData::U8(_) => return Err(format_err(format!("`{name}` holds bytes, not reals"))),
        };
        Tensor::new(&entry.dims, data)
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8]> {
        match self.get(name).map(|e| &e.data) {
            Some(TensorData::U8(b)) => Ok(b),
            Some(_) => Err(format_err(format!("`{name}` is not a byte block"))),
            None => Err(format_err(format!("missing block `{name}`"))),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.entries.len()).map_err(|_| format_err("too many entries"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for e in &self.entries {
            let name_len = u16::try_from(e.name.len()).map_err(|_| format_err("name too long"))?;
            if e.dims.is_empty() || e.dims.len() > MAX_RANK {
                return Err(format_err(format!("`{}` has rank {}", e.name, e.dims.len())));
            }
            if e.dims.iter().product::<usize>() != e.data.len() {
                return Err(format_err(format!("`{}` dims disagree with data", e.name)));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dims.len() as u8);
            for &d in &e.dims {
                let d = u32::try_from(d).map_err(|_| format_err("dimension exceeds u32"))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            out.push(e.data.dtype() as u8);
            match &e.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::U8(v) => out.extend_from_slice(v),
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint; never panics on malformed input.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(r.remaining() / 8));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| format_err("entry name is not UTF-8"))?
                .to_owned();
            let rank = r.u8()? as usize;
            if rank == 0 || rank > MAX_RANK {
                return Err(format_err(format!("`{name}` has rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| format_err("element count overflows"))?;
            let dtype = DType::from_code(r.u8()?).ok_or_else(|| format_err("unknown dtype"))?;
            let nbytes = numel
                .checked_mul(dtype.size())
                .ok_or_else(|| format_err("byte count overflows"))?;
            let raw = r.take(nbytes)?;
            let data = match dtype {
                DType::F32 => TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                DType::F64 => TensorData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                DType::U8 => TensorData::U8(raw.to_vec()),
            };
            entries.push(Entry { name, dims, data });
        }
        if r.remaining() != 0 {
            return Err(format_err(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Checkpoint { entries })
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout_of_single_entry() {
        let mut ck = Checkpoint::new();
        ck.push_tensor("w", &Tensor::new(&[2], vec![1.0f32, -2.0]).unwrap());
        let bytes = ck.to_bytes().unwrap();
        let mut expected = b"M2BN".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.push(b'w');
        expected.push(1);
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.push(0);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let mut ck = Checkpoint::new();
        ck.push_tensor("a", &Tensor::new(&[1, 2, 1, 1], vec![1.0f64, 2.0]).unwrap());
        ck.push_bytes("meta", b"k=v\n");
        let bytes = ck.to_bytes().unwrap();
        for cut in 0..bytes.len() {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        assert!(Checkpoint::from_bytes(b"XXXX\x01\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn huge_declared_sizes_fail_cleanly() {
        let mut bytes = b"M2BN".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        bytes.push(4);
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        bytes.push(1);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(values in proptest::collection::vec(-1e6f64..1e6, 1..64), name in "[a-z._0-9]{1,20}") {
            let mut ck = Checkpoint::new();
            ck.push_tensor(name.clone(), &Tensor::new(&[values.len()], values.clone()).unwrap());
            ck.push_tensor("f32", &Tensor::new(&[values.len()], values.iter().map(|&v| v as f32).collect()).unwrap());
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(&back, &ck);
            let restored = back.tensor::<f64>(&name).unwrap();
            prop_assert_eq!(restored.data(), &values[..]);
        }
    }
}
