use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::FeatureTensor;
use crate::error::{Error, Result};

/// Bands whose training standard deviation falls below this use 1 instead.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel, per-band mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// `channels x bands`
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub frames_seen: usize,
}

impl Standardizer {
    /// Two-pass fit over all frames of all training tensors, visited in the
    /// given order.
    pub fn fit<'a>(training: impl IntoIterator<Item = &'a FeatureTensor>) -> Result<Self> {
        let items: Vec<&FeatureTensor> = training.into_iter().collect();
        let first = items.first().ok_or_else(|| Error::InvalidArgument("no training features".into()))?;
        let (_, bands, channels) = first.values.dim();
        let mut sum = Array2::<f64>::zeros((channels, bands));
        let mut n = 0usize;
        for t in &items {
            let (_, b, c) = t.values.dim();
            if (b, c) != (bands, channels) {
                return Err(Error::Shape(format!("feature bands/channels {b}x{c}, expected {bands}x{channels}")));
            }
            for frame in t.values.axis_iter(Axis(0)) {
                for ((bi, ci), v) in frame.indexed_iter() {
                    sum[[ci, bi]] += f64::from(*v);
                }
            }
            n += t.frames();
        }
        let mean = sum / n as f64;
        let mut sq = Array2::<f64>::zeros((channels, bands));
        for t in &items {
            for frame in t.values.axis_iter(Axis(0)) {
                for ((bi, ci), v) in frame.indexed_iter() {
                    let d = f64::from(*v) - mean[[ci, bi]];
                    sq[[ci, bi]] += d * d;
                }
            }
        }
        let std = (sq / n as f64).mapv(|v| {
            let s = v.sqrt();
            if s < STD_FLOOR {
                1.0
            } else {
                s
            }
        });
        Ok(Self {
            mean: mean.outer_iter().map(|r| r.to_vec()).collect(),
            std: std.outer_iter().map(|r| r.to_vec()).collect(),
            frames_seen: n,
        })
    }

    pub fn apply(&self, t: &FeatureTensor) -> Result<FeatureTensor> {
        let (_, bands, channels) = t.values.dim();
        if channels != self.mean.len() || bands != self.mean[0].len() {
            return Err(Error::Shape("standardizer does not match feature dims".into()));
        }
        let mut values = t.values.clone();
        for ((_, b, c), v) in values.indexed_iter_mut() {
            *v = ((f64::from(*v) - self.mean[c][b]) / self.std[c][b]) as f32;
        }
        Ok(FeatureTensor {
            values,
            frame_hop_s: t.frame_hop_s,
        })
    }
}
