//! Checkpoint container.
//!
//! Layout (little-endian): magic `JSCK`, version `u32`, dtype `u8` (4 or
//! 8 bytes per value), network config JSON and its sha256 as
//! length-prefixed strings, RNG seed (32 bytes), stream `u64`, word
//! position `u128`, tensor count `u32`, then per tensor: name, rank `u8`,
//! dims as `u64`, values.

use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::network::{Crnn, NetworkConfig};
use super::Scalar;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"JSCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dtype: u8,
    pub config_json: String,
    pub config_hash: String,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
    pub tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn from_network<S: Scalar>(net: &Crnn<S>, rng: &ChaCha8Rng) -> Self {
        let config_json = net.config.to_json();
        Self {
            dtype: S::DTYPE,
            config_hash: sha256_hex(config_json.as_bytes()),
            config_json,
            rng_seed: rng.get_seed(),
            rng_stream: rng.get_stream(),
            rng_word_pos: rng.get_word_pos(),
            tensors: net
                .params()
                .iter()
                .map(|p| (p.name.clone(), p.value.shape().to_vec(), p.value.iter().map(|v| v.as_f64()).collect()))
                .collect(),
        }
    }

    pub fn config(&self) -> Result<NetworkConfig> {
        if sha256_hex(self.config_json.as_bytes()) != self.config_hash {
            return Err(Error::Format("checkpoint config hash mismatch".into()));
        }
        serde_json::from_str(&self.config_json).map_err(Error::from)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_stream(self.rng_stream);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }

    /// Copies every tensor into `net`, checking names and shapes.
    pub fn load_into<S: Scalar>(&self, net: &mut Crnn<S>) -> Result<()> {
        if net.config.hash() != self.config_hash {
            return Err(Error::Format("checkpoint was written for a different network".into()));
        }
        let mut params = net.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Format("checkpoint tensor count mismatch".into()));
        }
        for (p, (name, dims, values)) in params.iter_mut().zip(&self.tensors) {
            if &p.name != name || p.value.shape() != dims.as_slice() {
                return Err(Error::Format(format!("checkpoint tensor `{name}` does not match `{}`", p.name)));
            }
            p.value = ArrayD::from_shape_vec(IxDyn(dims), values.iter().map(|&v| S::of(v)).collect())
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(())
    }

    /// Rebuilds the network the checkpoint was written from.
    pub fn to_network<S: Scalar>(&self) -> Result<Crnn<S>> {
        let mut net = Crnn::new(self.config()?, 0)?;
        self.load_into(&mut net)?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype);
        put_str(&mut out, &self.config_json);
        put_str(&mut out, &self.config_hash);
        out.extend_from_slice(&self.rng_seed);
        out.extend_from_slice(&self.rng_stream.to_le_bytes());
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, dims, values) in &self.tensors {
            put_str(&mut out, name);
            out.push(dims.len() as u8);
            for &d in dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in values {
                if self.dtype == 4 {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                } else {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint".into()));
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let dtype = r.take(1)?[0];
        if dtype != 4 && dtype != 8 {
            return Err(Error::Format(format!("unknown checkpoint dtype {dtype}")));
        }
        let config_json = r.string()?;
        let config_hash = r.string()?;
        let rng_seed = r.array()?;
        let rng_stream = u64::from_le_bytes(r.array()?);
        let rng_word_pos = u128::from_le_bytes(r.array()?);
        let n = u32::from_le_bytes(r.array()?) as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.take(1)?[0] as usize;
            let dims: Vec<usize> = (0..rank)
                .map(|_| Ok(u64::from_le_bytes(r.array()?) as usize))
                .collect::<Result<_>>()?;
            let count: usize = dims.iter().product();
            let values = if dtype == 4 {
                r.take(count * 4)?
                    .chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                    .collect()
            } else {
                r.take(count * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            };
            tensors.push((name, dims, values));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        Ok(Self {
            dtype,
            config_json,
            config_hash,
            rng_seed,
            rng_stream,
            rng_word_pos,
            tensors,
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

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn string(&mut self) -> Result<String> {
        let n = u32::from_le_bytes(self.array()?) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::PoolingMode;
    use rand::RngCore;

    fn config() -> NetworkConfig {
        let mut c = NetworkConfig::desk(3);
        c.n_mels = 8;
        c.conv_blocks.truncate(1);
        c.conv_blocks[0].filters = 2;
        c.lstm_units = 3;
        c.dense_units = 3;
        c.pooling = PoolingMode::Frequency;
        c
    }

    #[test]
    fn round_trip_restores_network_and_rng() {
        let net = Crnn::<f32>::new(config(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        rng.next_u64();
        let ck = Checkpoint::from_network(&net, &rng);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let rebuilt: Crnn<f32> = back.to_network().unwrap();
        assert_eq!(rebuilt.snapshot(), net.snapshot());
        assert_eq!(back.rng().next_u64(), rng.next_u64());
    }

    #[test]
    fn mismatched_network_rejected() {
        let net = Crnn::<f64>::new(config(), 4).unwrap();
        let ck = Checkpoint::from_network(&net, &ChaCha8Rng::seed_from_u64(0));
        let mut other_cfg = config();
        other_cfg.lstm_units = 4;
        let mut other = Crnn::<f64>::new(other_cfg, 4).unwrap();
        assert!(ck.load_into(&mut other).is_err());
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
