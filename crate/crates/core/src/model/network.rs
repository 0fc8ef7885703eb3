use ndarray::{s, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, BatchNorm, Conv2d, Dense, Dropout, Flatten, MaxPool2d};
use super::loss::{sigmoid, SigmoidBce};
use super::lstm::Lstm;
use super::{ForwardCtx, Layer, Param, Scalar};
use crate::digest::sha256_hex;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: [usize; 2],
    pub pool: [usize; 2],
    pub batch_norm: bool,
}

/// How the pooling stages treat the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    /// Pool frequency only (time kernel 1, stride 1); one output per frame.
    Frequency,
    /// Pool both axes with stride 2; outputs are repeated along time to
    /// recover the input frame count.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub n_mels: usize,
    pub input_channels: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub conv_activation: Activation,
    pub conv_dropout: f64,
    pub pooling: PoolingMode,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub hidden_dropout: f64,
    pub hidden_batch_norm: bool,
    pub output_units: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl NetworkConfig {
    /// Full-size stack: 64/128/256 filters, LSTM 256, dense 256, 43 outputs.
    pub fn paper() -> Self {
        Self {
            n_mels: 128,
            input_channels: 2,
            conv_blocks: vec![
                ConvBlock {
                    filters: 64,
                    kernel: [3, 3],
                    pool: [3, 3],
                    batch_norm: true,
                },
                ConvBlock {
                    filters: 128,
                    kernel: [3, 3],
                    pool: [3, 3],
                    batch_norm: false,
                },
                ConvBlock {
                    filters: 256,
                    kernel: [2, 2],
                    pool: [2, 2],
                    batch_norm: true,
                },
            ],
            conv_activation: Activation::Relu,
            conv_dropout: 0.25,
            pooling: PoolingMode::Frequency,
            lstm_units: 256,
            dense_units: 256,
            hidden_dropout: 0.5,
            hidden_batch_norm: true,
            output_units: 43,
            bn_momentum: 0.99,
            bn_epsilon: 1e-3,
        }
    }

    /// Same topology at 16/32/64 filters, LSTM 64, dense 64, 32 mel bands.
    pub fn desk(output_units: usize) -> Self {
        let mut c = Self::paper();
        for (block, filters) in c.conv_blocks.iter_mut().zip([16, 32, 64]) {
            block.filters = filters;
        }
        c.n_mels = 32;
        c.lstm_units = 64;
        c.dense_units = 64;
        c.output_units = output_units;
        c.bn_momentum = 0.9;
        c
    }

    /// Frequency bins left after every pooling stage.
    pub fn pooled_bins(&self) -> usize {
        self.conv_blocks
            .iter()
            .fold(self.n_mels, |f, b| MaxPool2d::axis_geometry(f, b.pool[1], 2).0)
    }

    /// Frames merged into one recurrent step.
    pub fn time_factor(&self) -> usize {
        match self.pooling {
            PoolingMode::Frequency => 1,
            PoolingMode::Both => 1 << self.conv_blocks.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_blocks.is_empty() || self.n_mels == 0 || self.input_channels == 0 || self.output_units == 0 {
            return Err(Error::Config("network needs conv blocks, mel bands, channels and outputs".into()));
        }
        if self.conv_blocks.iter().any(|b| b.filters == 0 || b.kernel.contains(&0) || b.pool.contains(&0)) {
            return Err(Error::Config("conv blocks need positive filters, kernels and pools".into()));
        }
        for p in [self.conv_dropout, self.hidden_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

/// The convolutional-recurrent network producing per-frame logits.
pub struct Crnn<S: Scalar> {
    pub config: NetworkConfig,
    layers: Vec<Box<dyn Layer<S>>>,
    frames: usize,
    pooled_frames: usize,
}

impl<S: Scalar> Crnn<S> {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers: Vec<Box<dyn Layer<S>>> = Vec::new();
        let mut channels = config.input_channels;
        for (i, b) in config.conv_blocks.iter().enumerate() {
            let n = i + 1;
            layers.push(Box::new(Conv2d::new(
                format!("conv{n}"),
                (b.kernel[0], b.kernel[1]),
                channels,
                b.filters,
                config.conv_activation,
                &mut rng,
            )));
            let (kernel, stride) = match config.pooling {
                PoolingMode::Frequency => ((1, b.pool[1]), (1, 2)),
                PoolingMode::Both => ((b.pool[0], b.pool[1]), (2, 2)),
            };
            layers.push(Box::new(MaxPool2d::new(format!("pool{n}"), kernel, stride)));
            if b.batch_norm {
                layers.push(Box::new(BatchNorm::new(
                    format!("bn{n}"),
                    b.filters,
                    config.bn_momentum,
                    config.bn_epsilon,
                )));
            }
            layers.push(Box::new(Dropout::new(format!("drop{n}"), config.conv_dropout)));
            channels = b.filters;
        }
        layers.push(Box::new(Flatten::new("flatten")));
        let lstm_in = channels * config.pooled_bins();
        layers.push(Box::new(Lstm::new("lstm", lstm_in, config.lstm_units, &mut rng)));
        layers.push(Box::new(Dense::new(
            "dense",
            config.lstm_units,
            config.dense_units,
            Activation::Relu,
            &mut rng,
        )));
        layers.push(Box::new(Dropout::new("drop_hidden", config.hidden_dropout)));
        if config.hidden_batch_norm {
            layers.push(Box::new(BatchNorm::new(
                "bn_hidden",
                config.dense_units,
                config.bn_momentum,
                config.bn_epsilon,
            )));
        }
        layers.push(Box::new(Dense::new(
            "output",
            config.dense_units,
            config.output_units,
            Activation::None,
            &mut rng,
        )));
        Ok(Self {
            config,
            layers,
            frames: 0,
            pooled_frames: 0,
        })
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name()).collect()
    }

    /// `(batch, frames, mels, channels)` to per-frame logits
    /// `(batch, frames, outputs)`.
    pub fn forward(&mut self, x: &ArrayD<S>, ctx: &mut ForwardCtx) -> Result<ArrayD<S>> {
        let d = x.shape();
        if d.len() != 4 || d[2] != self.config.n_mels || d[3] != self.config.input_channels {
            return Err(Error::Shape(format!(
                "network input must be (B, T, {}, {}), got {d:?}",
                self.config.n_mels, self.config.input_channels
            )));
        }
        if d[1] == 0 || d[0] == 0 {
            return Err(invalid("empty network input"));
        }
        self.frames = d[1];
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, ctx)?;
        }
        self.pooled_frames = h.shape()[1];
        Ok(self.upsample(&h))
    }

    fn upsample(&self, z: &ArrayD<S>) -> ArrayD<S> {
        let factor = self.config.time_factor();
        if factor == 1 {
            return z.clone();
        }
        let (b, tp, k) = (z.shape()[0], z.shape()[1], z.shape()[2]);
        let mut out = ArrayD::zeros(IxDyn(&[b, self.frames, k]));
        for t in 0..self.frames {
            let src = (t / factor).min(tp - 1);
            out.slice_mut(s![.., t, ..]).assign(&z.slice(s![.., src, ..]));
        }
        out
    }

    fn upsample_backward(&self, dy: &ArrayD<S>) -> ArrayD<S> {
        let factor = self.config.time_factor();
        if factor == 1 {
            return dy.clone();
        }
        let (b, k) = (dy.shape()[0], dy.shape()[2]);
        let mut dz = ArrayD::zeros(IxDyn(&[b, self.pooled_frames, k]));
        for t in 0..self.frames {
            let src = (t / factor).min(self.pooled_frames - 1);
            let mut row = dz.slice_mut(s![.., src, ..]);
            row += &dy.slice(s![.., t, ..]);
        }
        dz
    }

    /// Backpropagates the gradient w.r.t. the logits of the last forward.
    pub fn backward(&mut self, dlogits: &ArrayD<S>) -> Result<ArrayD<S>> {
        let mut g = self.upsample_backward(dlogits);
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Per-frame probabilities in evaluation mode.
    pub fn predict(&mut self, x: &ArrayD<S>) -> Result<ArrayD<S>> {
        Ok(sigmoid(&self.forward(x, &mut ForwardCtx::eval())?))
    }

    /// Zeroes gradients, runs forward and backward, and returns the loss.
    pub fn loss_and_backward(&mut self, x: &ArrayD<S>, y: &ArrayD<S>, ctx: &mut ForwardCtx) -> Result<S> {
        self.zero_grad();
        let logits = self.forward(x, ctx)?;
        let (loss, grad) = SigmoidBce::loss_and_grad(&logits, y)?;
        self.backward(&grad)?;
        Ok(loss)
    }

    pub fn loss(&mut self, x: &ArrayD<S>, y: &ArrayD<S>, ctx: &mut ForwardCtx) -> Result<S> {
        let logits = self.forward(x, ctx)?;
        Ok(SigmoidBce::loss_and_grad(&logits, y)?.0)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Every tensor, including batch-norm running statistics, in layer order.
    pub fn params(&self) -> Vec<&Param<S>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn snapshot(&self) -> Vec<ArrayD<S>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[ArrayD<S>]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::Shape("snapshot does not match network".into()));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Shape(format!("snapshot shape mismatch for {}", p.name)));
            }
            p.value.assign(v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(pooling: PoolingMode) -> NetworkConfig {
        let mut c = NetworkConfig::desk(5);
        c.n_mels = 16;
        c.conv_blocks.truncate(2);
        c.conv_blocks[0].filters = 3;
        c.conv_blocks[1].filters = 4;
        c.lstm_units = 6;
        c.dense_units = 5;
        c.pooling = pooling;
        c
    }

    fn input(b: usize, t: usize, f: usize) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        ArrayD::from_shape_simple_fn(IxDyn(&[b, t, f, 2]), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn paper_network_outputs_43_per_frame() {
        let mut c = NetworkConfig::paper();
        assert_eq!(c.pooled_bins(), 16);
        // Keep the paper topology but shrink widths so the test is quick.
        for b in &mut c.conv_blocks {
            b.filters = 4;
        }
        c.lstm_units = 4;
        c.dense_units = 4;
        let mut net = Crnn::<f32>::new(c, 1).unwrap();
        let x = ArrayD::zeros(IxDyn(&[1, 1292, 128, 2]));
        let p = net.predict(&x).unwrap();
        assert_eq!(p.shape(), &[1, 1292, 43]);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut net = Crnn::<f64>::new(tiny(PoolingMode::Frequency), 3).unwrap();
        let x = input(2, 9, 16);
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0 && v.is_finite()));
    }

    #[test]
    fn time_pooling_restores_frame_count() {
        let mut net = Crnn::<f64>::new(tiny(PoolingMode::Both), 3).unwrap();
        let p = net.predict(&input(1, 13, 16)).unwrap();
        assert_eq!(p.shape(), &[1, 13, 5]);
        // Nearest upsampling repeats each pooled step over four frames.
        assert_eq!(p.slice(s![0, 0, ..]), p.slice(s![0, 3, ..]));
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let mut net = Crnn::<f64>::new(tiny(PoolingMode::Frequency), 3).unwrap();
        assert!(net.predict(&input(1, 4, 8)).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Crnn::<f32>::new(tiny(PoolingMode::Frequency), 11).unwrap().snapshot();
        let b = Crnn::<f32>::new(tiny(PoolingMode::Frequency), 11).unwrap().snapshot();
        assert_eq!(a, b);
    }
}
