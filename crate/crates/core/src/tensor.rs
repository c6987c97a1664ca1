//! CFT1 tensor files.
//!
//! Layout: the four magic bytes `CFT1`, a little-endian `u32` rank, one
//! little-endian `u32` per dimension, then the row-major payload as
//! little-endian IEEE-754 `f32`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid2D};

pub const MAGIC: &[u8; 4] = b"CFT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn vector(data: &[f64]) -> Self {
        Self {
            shape: vec![data.len()],
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    /// Grids are stored as `[height, width]`.
    pub fn from_grid(g: &Grid2D) -> Self {
        Self {
            shape: vec![g.height(), g.width()],
            data: g.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_grid(&self) -> Result<Grid2D> {
        match self.shape.as_slice() {
            &[h, w] => Grid2D::new(w, h, self.to_f64()),
            other => Err(Error::Dimension(format!("expected a rank-2 tensor, got shape {other:?}"))),
        }
    }

    pub fn to_mask(&self) -> Result<BinaryMask> {
        BinaryMask::from_grid(&self.to_grid()?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let fail = |msg: &str| Error::format(origin, msg);
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(fail("missing CFT1 magic"));
        }
        let word = |i: usize| -> Option<u32> {
            bytes
                .get(i..i + 4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        let rank = word(4).ok_or_else(|| fail("truncated header"))? as usize;
        let header = 8 + 4 * rank;
        if bytes.len() < header {
            return Err(fail("truncated shape"));
        }
        let shape: Vec<usize> = (0..rank).map(|k| word(8 + 4 * k).unwrap() as usize).collect();
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail("shape overflows"))?;
        let payload = &bytes[header..];
        if payload.len() != 4 * n {
            return Err(fail(&format!(
                "payload is {} bytes, shape {shape:?} needs {}",
                payload.len(),
                4 * n
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { shape, data })
    }
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes, path)
}

pub fn write_grid(path: &Path, g: &Grid2D) -> Result<()> {
    write_tensor(path, &Tensor::from_grid(g))
}

pub fn read_grid(path: &Path) -> Result<Grid2D> {
    read_tensor(path)?.to_grid()
}

pub fn write_mask(path: &Path, m: &BinaryMask) -> Result<()> {
    write_grid(path, &m.to_grid())
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    read_tensor(path)?.to_mask().map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"CFT1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &2u32.to_le_bytes());
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&b[20..24], &(-2.5f32).to_le_bytes());
        assert_eq!(b.len(), 24);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let p = Path::new("x");
        assert!(Tensor::from_bytes(b"CFT2\0\0\0\0", p).is_err());
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = t.to_bytes();
        assert!(Tensor::from_bytes(&b[..b.len() - 1], p).is_err());
        assert!(Tensor::from_bytes(&b[..10], p).is_err());
    }

    #[test]
    fn rank_zero_is_a_scalar() {
        let t = Tensor::new(vec![], vec![4.0]).unwrap();
        let back = Tensor::from_bytes(&t.to_bytes(), Path::new("s")).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(shape in prop::collection::vec(0usize..5, 0..4), seed in any::<u32>()) {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = (0..n).map(|i| f32::from_bits(seed.wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff)).collect();
            let t = Tensor::new(shape, data).unwrap();
            let bytes = t.to_bytes();
            let back = Tensor::from_bytes(&bytes, Path::new("p")).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
