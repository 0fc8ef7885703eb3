use ndarray::ArrayD;

use super::Scalar;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` inside the loss.
pub const CLAMP: f64 = 1e-7;

pub fn sigmoid<S: Scalar>(z: &ArrayD<S>) -> ArrayD<S> {
    z.mapv(|v| S::one() / (S::one() + (-v).exp()))
}

/// Mean binary cross-entropy of probabilities `p` against binary targets.
pub fn bce_loss<S: Scalar>(p: &ArrayD<S>, y: &ArrayD<S>) -> Result<S> {
    if p.shape() != y.shape() {
        return Err(Error::Shape(format!("bce: {:?} vs {:?}", p.shape(), y.shape())));
    }
    if p.is_empty() {
        return Err(Error::Shape("bce: empty input".into()));
    }
    let (lo, hi) = (S::of(CLAMP), S::of(1.0 - CLAMP));
    let total: S = p
        .iter()
        .zip(y.iter())
        .map(|(&p, &y)| {
            let p = p.max(lo).min(hi);
            -(y * p.ln() + (S::one() - y) * (S::one() - p).ln())
        })
        .sum();
    Ok(total / S::of(p.len() as f64))
}

/// Sigmoid output layer fused with the mean BCE loss; works on logits.
pub struct SigmoidBce;

impl SigmoidBce {
    /// Loss and its gradient w.r.t. the logits. Entries whose probability
    /// sits outside the clamp range get zero gradient.
    pub fn loss_and_grad<S: Scalar>(logits: &ArrayD<S>, y: &ArrayD<S>) -> Result<(S, ArrayD<S>)> {
        let p = sigmoid(logits);
        let loss = bce_loss(&p, y)?;
        let n = S::of(p.len() as f64);
        let (lo, hi) = (S::of(CLAMP), S::of(1.0 - CLAMP));
        let mut grad = p;
        grad.zip_mut_with(y, |g, &t| {
            *g = if *g < lo || *g > hi { S::zero() } else { (*g - t) / n };
        });
        Ok((loss, grad))
    }
}
