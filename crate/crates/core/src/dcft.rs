//! DCFT tensor file format.
//!
//! Layout: magic `DCFT`, u8 rank, rank little-endian u32 dims, then the
//! f32 little-endian row-major payload. The reader validates the declared
//! size against the actual payload.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DCFT";

/// A rank-checked tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if dims.is_empty() || dims.len() > 8 {
            return Err(Error::Format(format!("unsupported tensor rank {}", dims.len())));
        }
        if expect != data.len() {
            return Err(Error::Format(format!(
                "tensor dims {:?} declare {} elements but {} were provided",
                dims,
                expect,
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_array2(a: &Array2<f64>) -> Tensor {
        let (r, c) = a.dim();
        Tensor {
            dims: vec![r, c],
            data: a.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_array3(a: &Array3<f64>) -> Tensor {
        let (x, y, z) = a.dim();
        Tensor {
            dims: vec![x, y, z],
            data: a.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Widens to f64; exact, since every f32 is representable.
    pub fn to_array2(&self) -> Result<Array2<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::Format(format!("expected rank 2, got {}", self.dims.len())));
        }
        Array2::from_shape_vec(
            (self.dims[0], self.dims[1]),
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_array3(&self) -> Result<Array3<f64>> {
        if self.dims.len() != 3 {
            return Err(Error::Format(format!("expected rank 3, got {}", self.dims.len())));
        }
        Array3::from_shape_vec(
            (self.dims[0], self.dims[1], self.dims[2]),
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&[t.dims.len() as u8])?;
    for &d in &t.dims {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        f.write_all(&d.to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(t.data.len() * 4);
    for &v in &t.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Tensor> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let mut rank = [0u8; 1];
    f.read_exact(&mut rank)?;
    let rank = rank[0] as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::Format(format!("{}: unsupported rank {rank}", path.display())));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        f.read_exact(&mut b)?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let expect: usize = dims.iter().product();
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    if payload.len() != expect * 4 {
        return Err(Error::Format(format!(
            "{}: dims {:?} declare {} payload bytes but file holds {}",
            path.display(),
            dims,
            expect * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor { dims, data })
}
