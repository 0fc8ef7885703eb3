use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, Array3, ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::network::Crnn;
use super::{ForwardCtx, Scalar};
use crate::error::{invalid, Error, Result};

/// One recording: `(frames, mels, channels)` features and `(frames,
/// outputs)` targets.
#[derive(Debug, Clone)]
pub struct Sample<S> {
    pub id: String,
    pub features: Array3<S>,
    pub targets: Array2<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Epochs without validation improvement that count as converged.
    pub patience: usize,
    /// Stop once converged instead of running every epoch.
    pub early_stopping: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 8,
            adam: AdamConfig::default(),
            seed: 0,
            patience: 10,
            early_stopping: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,wall_time_s\n");
        for r in &self.records {
            writeln!(out, "{},{:.9},{:.9},{:.3}", r.epoch, r.train_loss, r.val_loss, r.wall_time_s).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: History,
    /// 1-based epoch with the lowest validation loss; its parameters are
    /// restored into the network.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Best epoch at the first point validation loss had not improved for
    /// `patience` epochs; the number of epochs run if that never happened.
    pub epochs_to_converge: usize,
    pub stopped_early: bool,
    /// Dropout RNG after the last update.
    pub rng: ChaCha8Rng,
}

/// Stacks samples into `(B, T, F, C)` inputs and `(B, T, K)` targets.
pub fn make_batch<S: Scalar>(samples: &[&Sample<S>]) -> Result<(ArrayD<S>, ArrayD<S>)> {
    let first = samples.first().ok_or_else(|| invalid("empty batch"))?;
    let (t, f, c) = first.features.dim();
    let k = first.targets.ncols();
    let mut x = ArrayD::zeros(IxDyn(&[samples.len(), t, f, c]));
    let mut y = ArrayD::zeros(IxDyn(&[samples.len(), t, k]));
    for (i, s) in samples.iter().enumerate() {
        if s.features.dim() != (t, f, c) || s.targets.dim() != (t, k) {
            return Err(Error::Shape(format!(
                "sample `{}` has shape {:?}/{:?}, batch expects ({t}, {f}, {c})/({t}, {k})",
                s.id,
                s.features.dim(),
                s.targets.dim()
            )));
        }
        x.slice_mut(s![i, .., .., ..]).assign(&s.features);
        y.slice_mut(s![i, .., ..]).assign(&s.targets);
    }
    Ok((x, y))
}

/// Mean evaluation-mode loss over `samples`, weighted by batch size.
pub fn evaluate_loss<S: Scalar>(net: &mut Crnn<S>, samples: &[Sample<S>], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut ctx = ForwardCtx::eval();
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample<S>> = chunk.iter().collect();
        let (x, y) = make_batch(&refs)?;
        total += net.loss(&x, &y, &mut ctx)?.as_f64() * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch Adam training with per-epoch reshuffling.
///
/// Validation loss falls back to the training loss when `val` is empty.
/// `on_epoch` sees each record as it is produced.
pub fn train<S: Scalar>(
    net: &mut Crnn<S>,
    train_set: &[Sample<S>],
    val: &[Sample<S>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(invalid("no training samples"));
    }
    if config.batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);
    let mut ctx = ForwardCtx::train(dropout_rng);
    let mut adam = Adam::new(config.adam);
    let mut history = History::default();
    let mut best = (f64::INFINITY, 0usize, net.snapshot());
    let mut converged_at = None;
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&Sample<S>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (x, y) = make_batch(&refs)?;
            let loss = net.loss_and_backward(&x, &y, &mut ctx)?.as_f64();
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "loss {loss} at epoch {epoch} on batch starting with `{}`",
                    refs[0].id
                )));
            }
            total += loss * chunk.len() as f64;
            adam.step(net.params_mut());
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            evaluate_loss(net, val, config.batch_size)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Divergence(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.records.push(record);
        if val_loss < best.0 {
            best = (val_loss, epoch, net.snapshot());
        }
        if converged_at.is_none() && epoch - best.1 >= config.patience {
            converged_at = Some(best.1);
            if config.early_stopping {
                break;
            }
        }
    }
    let stopped_early = history.len() < config.epochs;
    net.restore(&best.2)?;
    Ok(TrainOutcome {
        epochs_to_converge: converged_at.unwrap_or(history.len()),
        best_epoch: best.1,
        best_val_loss: best.0,
        history,
        stopped_early,
        rng: ctx.rng,
    })
}
