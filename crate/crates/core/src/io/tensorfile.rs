//! Binary tensor container.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "DSEG"
//! 4       2           version (u16 LE), currently 1
//! 6       1           dtype tag: 0 = f32, 1 = f64, 2 = u16, 3 = u8
//! 7       1           ndim
//! 8       4 · ndim    dims, u32 LE each
//! ...                 payload, row-major, little-endian
//! ```
//!
//! The payload length is `product(dims) · sizeof(dtype)`; zero dims denote a
//! scalar holding one element.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DSEG";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U16(Vec<u16>),
    U8(Vec<u8>),
}

impl TensorData {
    fn tag(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
            TensorData::U16(_) => 2,
            TensorData::U8(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U16(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn element_size(tag: u8) -> Option<usize> {
        match tag {
            0 => Some(4),
            1 => Some(8),
            2 => Some(2),
            3 => Some(1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl TensorFile {
    pub fn new(dims: Vec<u32>, data: TensorData) -> Result<Self> {
        let expected: usize = dims.iter().map(|&d| d as usize).product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{dims:?} = {expected} elements"),
                found: format!("{} elements", data.len()),
            });
        }
        if dims.len() > u8::MAX as usize {
            return Err(Error::InvalidInput(format!("too many dimensions: {}", dims.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn f64(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        Self::new(dims.iter().map(|&d| d as u32).collect(), TensorData::F64(values))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.data.tag());
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 8 || &bytes[0..4] != MAGIC {
            return Err("not a DSEG tensor file".into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let tag = bytes[6];
        let size = TensorData::element_size(tag).ok_or_else(|| format!("unknown dtype tag {tag}"))?;
        let ndim = bytes[7] as usize;
        let header = 8 + 4 * ndim;
        if bytes.len() < header {
            return Err("truncated header".into());
        }
        let dims: Vec<u32> =
            bytes[8..header].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let count =
            dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize)).ok_or("dimension product overflows")?;
        let payload = &bytes[header..];
        if Some(payload.len()) != count.checked_mul(size) {
            return Err(format!("payload is {} bytes, expected {} elements of {size} bytes", payload.len(), count));
        }
        let data = match tag {
            0 => TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            1 => TensorData::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            2 => TensorData::U16(payload.chunks_exact(2).map(|c| u16::from_le_bytes(c.try_into().unwrap())).collect()),
            _ => TensorData::U8(payload.to_vec()),
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }

    /// The payload as `f64`, for any floating dtype.
    pub fn to_f64(&self) -> Option<Vec<f64>> {
        match &self.data {
            TensorData::F64(v) => Some(v.clone()),
            TensorData::F32(v) => Some(v.iter().map(|&x| x as f64).collect()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = TensorFile::new(vec![2, 1], TensorData::U16(vec![0x0102, 0xfffe])).unwrap();
        assert_eq!(
            t.to_bytes(),
            vec![b'D', b'S', b'E', b'G', 1, 0, 2, 2, 2, 0, 0, 0, 1, 0, 0, 0, 0x02, 0x01, 0xfe, 0xff]
        );
    }

    #[test]
    fn scalar_has_one_element() {
        let t = TensorFile::new(vec![], TensorData::F64(vec![3.5])).unwrap();
        assert_eq!(TensorFile::from_bytes(&t.to_bytes()).unwrap(), t);
        assert!(TensorFile::new(vec![], TensorData::F64(vec![])).is_err());
    }

    #[test]
    fn rejects_corrupt_input() {
        let good = TensorFile::new(vec![3], TensorData::U8(vec![1, 2, 3])).unwrap().to_bytes();
        assert!(TensorFile::from_bytes(&good[..good.len() - 1]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(TensorFile::from_bytes(&bad_magic).is_err());
        let mut bad_tag = good.clone();
        bad_tag[6] = 9;
        assert!(TensorFile::from_bytes(&bad_tag).is_err());
        let mut bad_version = good;
        bad_version[4] = 2;
        assert!(TensorFile::from_bytes(&bad_version).is_err());
    }

    fn dims_and_len() -> impl Strategy<Value = Vec<u32>> {
        prop::collection::vec(0u32..5, 0..4)
    }

    proptest! {
        #[test]
        fn lossless_round_trip(dims in dims_and_len(), seed in any::<u64>(), tag in 0u8..4) {
            let n: usize = dims.iter().map(|&d| d as usize).product();
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); s };
            let data = match tag {
                0 => TensorData::F32((0..n).map(|_| f32::from_bits(next() as u32)).filter(|x| !x.is_nan()).chain(std::iter::repeat(0.5)).take(n).collect()),
                1 => TensorData::F64((0..n).map(|_| f64::from_bits(next())).filter(|x| !x.is_nan()).chain(std::iter::repeat(0.5)).take(n).collect()),
                2 => TensorData::U16((0..n).map(|_| next() as u16).collect()),
                _ => TensorData::U8((0..n).map(|_| next() as u8).collect()),
            };
            let t = TensorFile::new(dims, data).unwrap();
            prop_assert_eq!(TensorFile::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
