//! `EGRID v1` grid tensor dumps and PGM previews.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "EGRD" | u32 version=1 | u32 height | u32 width | u32 channels
//!        | u64 frame_index | f64 timestamp | f32 data[channels][height][width]
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::evidential::{pignistic, EvidentialGrid};

pub const MAGIC: &[u8; 4] = b"EGRD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 * 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum EgridError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported EGRID version {0}")]
    UnsupportedVersion(u32),
    #[error("payload has {got} bytes, header implies {expected}")]
    Truncated { expected: usize, got: usize },
    #[error("data length {got} does not match {channels}x{height}x{width}")]
    Shape {
        channels: usize,
        height: usize,
        width: usize,
        got: usize,
    },
    #[error("unexpected grid layout: {0}")]
    Layout(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Stream(#[from] io::Error),
}

/// A channel-major `f32` tensor with frame metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Egrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub frame_index: u64,
    pub timestamp: f64,
    pub data: Vec<f32>,
}

impl Egrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        frame_index: u64,
        timestamp: f64,
        data: Vec<f32>,
    ) -> Result<Self, EgridError> {
        if data.len() != channels * height * width {
            return Err(EgridError::Shape {
                channels,
                height,
                width,
                got: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            frame_index,
            timestamp,
            data,
        })
    }

    /// Builds a tensor from per-channel `f64` planes.
    pub fn from_planes(
        height: usize,
        width: usize,
        frame_index: u64,
        timestamp: f64,
        planes: &[&[f64]],
    ) -> Result<Self, EgridError> {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for plane in planes {
            data.extend(plane.iter().map(|&v| v as f32));
        }
        Self::new(height, width, planes.len(), frame_index, timestamp, data)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        w.write_all(&self.frame_index.to_le_bytes())?;
        w.write_all(&self.timestamp.to_le_bytes())?;
        let mut buf = Vec::with_capacity(4 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EgridError> {
        if bytes.len() < HEADER_LEN {
            return Err(EgridError::Truncated {
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(EgridError::BadMagic(magic));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(EgridError::UnsupportedVersion(version));
        }
        let height = u32_at(8) as usize;
        let width = u32_at(12) as usize;
        let channels = u32_at(16) as usize;
        let frame_index = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let timestamp = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        let count = channels * height * width;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != 4 * count {
            return Err(EgridError::Truncated {
                expected: HEADER_LEN + 4 * count,
                got: bytes.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            height,
            width,
            channels,
            frame_index,
            timestamp,
            data,
        })
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, EgridError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), EgridError> {
        fs::write(path, self.to_bytes()).map_err(|source| EgridError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EgridError> {
        let bytes = fs::read(path).map_err(|source| EgridError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

impl From<&EvidentialGrid> for Egrid {
    /// Channels `[m_occ, m_free]`.
    fn from(grid: &EvidentialGrid) -> Self {
        let n = grid.spec.cells_per_side;
        let mut data = Vec::with_capacity(2 * n * n);
        data.extend(grid.cells.iter().map(|c| c.m_occ as f32));
        data.extend(grid.cells.iter().map(|c| c.m_free as f32));
        Self {
            height: n,
            width: n,
            channels: 2,
            frame_index: grid.frame_index,
            timestamp: grid.timestamp,
            data,
        }
    }
}

/// Binary (`P5`) 8-bit PGM of occupancy probabilities in `[0, 1]`.
pub fn pgm_bytes(height: usize, width: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).floor().min(255.0) as u8),
    );
    out
}

/// PGM preview of the pignistic occupancy probability: 0 free, 255 occupied,
/// 127 unknown.
pub fn pignistic_pgm(grid: &EvidentialGrid) -> Vec<u8> {
    let n = grid.spec.cells_per_side;
    let p: Vec<f64> = grid.cells.iter().map(|c| pignistic(*c)).collect();
    pgm_bytes(n, n, &p)
}
