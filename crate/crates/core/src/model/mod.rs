//! A from-scratch convolutional-recurrent network.
//!
//! Tensors are row-major `ArrayD` values. Convolutional stages use
//! `(batch, time, freq, channels)`, the recurrent stage `(batch, time,
//! features)`. Every layer caches what its backward pass needs during
//! `forward` and accumulates parameter gradients in `backward`.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod lstm;
mod network;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use gradcheck::{check_layer, check_network, check_network_with, GradCheckReport, GroupReport};
pub use layers::{Activation, BatchNorm, Conv2d, Dense, Dropout, Flatten, MaxPool2d};
pub use loss::{bce_loss, sigmoid, SigmoidBce};
pub use lstm::Lstm;
pub use network::{ConvBlock, Crnn, NetworkConfig, PoolingMode};
pub use train::{evaluate_loss, make_batch, train, EpochRecord, History, Sample, TrainConfig, TrainOutcome};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array, ArrayD, Dimension, IxDyn, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Row-major copy of `a`, or `a` itself when it already is. Matrix products
/// with a unit dimension may come back column-major, which breaks reshapes.
pub(crate) fn standard<S: Clone, D: Dimension>(a: Array<S, D>) -> Array<S, D> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Floating-point element type of a network: `f64` for gradient checks,
/// `f32` for training.
pub trait Scalar:
    LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Tag stored in checkpoints.
    const DTYPE: u8;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }
}

impl Scalar for f32 {
    const DTYPE: u8 = 4;
}

impl Scalar for f64 {
    const DTYPE: u8 = 8;
}

/// A named tensor with its gradient. Non-trainable tensors (batch-norm
/// running statistics) are saved in checkpoints but skipped by the
/// optimizer.
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub value: ArrayD<S>,
    pub grad: ArrayD<S>,
    pub trainable: bool,
}

impl<S: Scalar> Param<S> {
    pub fn new(name: impl Into<String>, value: ArrayD<S>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, value: ArrayD<S>) -> Self {
        Self {
            trainable: false,
            ..Self::new(name, value)
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, ArrayD::zeros(IxDyn(shape)))
    }

    /// Glorot-uniform initialization with the given fans.
    pub fn glorot(name: impl Into<String>, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = ArrayD::from_shape_simple_fn(IxDyn(shape), || S::of(rng.gen_range(-limit..=limit)));
        Self::new(name, value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }
}

/// Per-call forward state: mode flag and the dropout RNG.
pub struct ForwardCtx {
    pub train: bool,
    pub rng: ChaCha8Rng,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            train: false,
            rng: rand::SeedableRng::seed_from_u64(0),
        }
    }

    pub fn train(rng: ChaCha8Rng) -> Self {
        Self { train: true, rng }
    }
}

pub trait Layer<S: Scalar>: Send {
    fn name(&self) -> &str;

    fn forward(&mut self, x: &ArrayD<S>, ctx: &mut ForwardCtx) -> Result<ArrayD<S>>;

    /// Gradient of the loss w.r.t. the last forward input, given the
    /// gradient w.r.t. its output. Parameter gradients are accumulated.
    fn backward(&mut self, dy: &ArrayD<S>) -> Result<ArrayD<S>>;

    fn params(&self) -> Vec<&Param<S>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        Vec::new()
    }
}
