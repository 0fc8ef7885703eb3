//! Binary array container.
//!
//! Layout (little-endian): magic `JSFT`, version `u16`, dtype `u8`
//! (1 = f32, 2 = u8), rank `u8`, `rank` dims as `u64`, frame hop seconds
//! `f64`, sample rate `u32`, then the row-major payload.

use std::path::Path;

use ndarray::{Array2, Array3};

use super::{FeatureTensor, LabelMatrix};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"JSFT";
const VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;
const DTYPE_U8: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub dims: Vec<usize>,
    pub frame_hop_s: f64,
    pub sample_rate: u32,
    pub payload: Payload,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.payload {
            Payload::F32(_) => DTYPE_F32,
            Payload::U8(_) => DTYPE_U8,
        });
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.frame_hop_s.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        match &self.payload {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a feature container".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let dtype = r.take(1)?[0];
        let rank = r.take(1)?[0] as usize;
        let dims: Vec<usize> = (0..rank)
            .map(|_| Ok(u64::from_le_bytes(r.array()?) as usize))
            .collect::<Result<_>>()?;
        let frame_hop_s = f64::from_le_bytes(r.array()?);
        let sample_rate = u32::from_le_bytes(r.array()?);
        let n: usize = dims.iter().product();
        let payload = match dtype {
            DTYPE_F32 => Payload::F32(
                r.take(n * 4)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DTYPE_U8 => Payload::U8(r.take(n)?.to_vec()),
            other => return Err(Error::Format(format!("unknown dtype {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        Ok(Self {
            dims,
            frame_hop_s,
            sample_rate,
            payload,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated container".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

pub fn write_features(path: impl AsRef<Path>, t: &FeatureTensor, sample_rate: u32) -> Result<()> {
    let (a, b, c) = t.values.dim();
    Container {
        dims: vec![a, b, c],
        frame_hop_s: t.frame_hop_s,
        sample_rate,
        payload: Payload::F32(t.values.iter().copied().collect()),
    }
    .write(path)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<(FeatureTensor, u32)> {
    let c = Container::read(path)?;
    match (c.dims.as_slice(), c.payload) {
        (&[a, b, ch], Payload::F32(v)) => {
            let values = Array3::from_shape_vec((a, b, ch), v).map_err(|e| Error::Format(e.to_string()))?;
            Ok((
                FeatureTensor {
                    values,
                    frame_hop_s: c.frame_hop_s,
                },
                c.sample_rate,
            ))
        }
        _ => Err(Error::Format("expected a rank-3 f32 feature container".into())),
    }
}

pub fn write_labels(path: impl AsRef<Path>, m: &LabelMatrix, frame_hop_s: f64, sample_rate: u32) -> Result<()> {
    Container {
        dims: vec![m.frames(), m.width()],
        frame_hop_s,
        sample_rate,
        payload: Payload::U8(m.values.iter().copied().collect()),
    }
    .write(path)
}

/// Reads a label container; the column split comes from `n_scenes`.
pub fn read_labels(path: impl AsRef<Path>, n_scenes: usize) -> Result<LabelMatrix> {
    let c = Container::read(path)?;
    match (c.dims.as_slice(), c.payload) {
        (&[frames, width], Payload::U8(v)) if width > n_scenes => Ok(LabelMatrix {
            values: Array2::from_shape_vec((frames, width), v).map_err(|e| Error::Format(e.to_string()))?,
            n_scenes,
            n_events: width - n_scenes - 1,
        }),
        _ => Err(Error::Format("expected a rank-2 u8 label container".into())),
    }
}
