use ndarray::{Array2, ArrayD, Axis, Ix2, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{standard, ForwardCtx, Layer, Param, Scalar};
use crate::error::{Error, Result};

fn shape_err(layer: &str, expected: &str, got: &[usize]) -> Error {
    Error::Shape(format!("{layer}: expected {expected}, got {got:?}"))
}

fn no_forward(layer: &str) -> Error {
    Error::Shape(format!("{layer}: backward called before forward"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<S: Scalar>(self, x: &mut ArrayD<S>) {
        match self {
            Activation::None => {}
            Activation::Relu => x.mapv_inplace(|v| v.max(S::zero())),
            Activation::Sigmoid => x.mapv_inplace(|v| S::one() / (S::one() + (-v).exp())),
        }
    }

    /// Multiplies `dy` by the derivative, expressed through the output `y`.
    fn backprop<S: Scalar>(self, y: &ArrayD<S>, dy: &ArrayD<S>) -> ArrayD<S> {
        match self {
            Activation::None => dy.clone(),
            Activation::Relu => {
                let mut d = dy.clone();
                d.zip_mut_with(y, |g, &v| {
                    if v <= S::zero() {
                        *g = S::zero()
                    }
                });
                d
            }
            Activation::Sigmoid => {
                let mut d = dy.clone();
                d.zip_mut_with(y, |g, &v| *g *= v * (S::one() - v));
                d
            }
        }
    }
}

fn same_padding(k: usize) -> (usize, usize) {
    let before = (k - 1) / 2;
    (before, k - 1 - before)
}

/// 2-D convolution over `(batch, time, freq, in)` with stride 1 and same
/// padding. Even kernels pad one extra element after.
pub struct Conv2d<S: Scalar> {
    name: String,
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    /// `(kt * kf * in, out)`
    pub weight: Param<S>,
    pub bias: Param<S>,
    cols: Option<Array2<S>>,
    input_dim: Vec<usize>,
    output: Option<ArrayD<S>>,
}

impl<S: Scalar> Conv2d<S> {
    pub fn new(
        name: impl Into<String>,
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let name = name.into();
        let taps = kernel.0 * kernel.1;
        Self {
            weight: Param::glorot(
                format!("{name}.weight"),
                &[taps * in_channels, out_channels],
                taps * in_channels,
                taps * out_channels,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            name,
            kernel,
            in_channels,
            out_channels,
            activation,
            cols: None,
            input_dim: Vec::new(),
            output: None,
        }
    }

    fn im2col(&self, x: &[S], b: usize, t: usize, f: usize) -> Array2<S> {
        let (kt, kf) = self.kernel;
        let c = self.in_channels;
        let (pt, _) = same_padding(kt);
        let (pf, _) = same_padding(kf);
        let width = kt * kf * c;
        let mut cols = vec![S::zero(); b * t * f * width];
        for bi in 0..b {
            for ti in 0..t {
                for fi in 0..f {
                    let row = ((bi * t + ti) * f + fi) * width;
                    for dt in 0..kt {
                        let st = ti as isize + dt as isize - pt as isize;
                        if st < 0 || st >= t as isize {
                            continue;
                        }
                        for df in 0..kf {
                            let sf = fi as isize + df as isize - pf as isize;
                            if sf < 0 || sf >= f as isize {
                                continue;
                            }
                            let src = ((bi * t + st as usize) * f + sf as usize) * c;
                            let dst = row + (dt * kf + df) * c;
                            cols[dst..dst + c].copy_from_slice(&x[src..src + c]);
                        }
                    }
                }
            }
        }
        Array2::from_shape_vec((b * t * f, width), cols).expect("im2col shape")
    }

    fn col2im(&self, dcols: &Array2<S>, b: usize, t: usize, f: usize) -> ArrayD<S> {
        let (kt, kf) = self.kernel;
        let c = self.in_channels;
        let (pt, _) = same_padding(kt);
        let (pf, _) = same_padding(kf);
        let width = kt * kf * c;
        let src = dcols.as_slice().expect("standard layout");
        let mut dx = vec![S::zero(); b * t * f * c];
        for bi in 0..b {
            for ti in 0..t {
                for fi in 0..f {
                    let row = ((bi * t + ti) * f + fi) * width;
                    for dt in 0..kt {
                        let st = ti as isize + dt as isize - pt as isize;
                        if st < 0 || st >= t as isize {
                            continue;
                        }
                        for df in 0..kf {
                            let sf = fi as isize + df as isize - pf as isize;
                            if sf < 0 || sf >= f as isize {
                                continue;
                            }
                            let dst = ((bi * t + st as usize) * f + sf as usize) * c;
                            let from = row + (dt * kf + df) * c;
                            for k in 0..c {
                                dx[dst + k] += src[from + k];
                            }
                        }
                    }
                }
            }
        }
        ArrayD::from_shape_vec(IxDyn(&[b, t, f, c]), dx).expect("col2im shape")
    }
}

impl<S: Scalar> Layer<S> for Conv2d<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &ArrayD<S>, _ctx: &mut ForwardCtx) -> Result<ArrayD<S>> {
        let d = x.shape();
        if d.len() != 4 || d[3] != self.in_channels {
            return Err(shape_err(&self.name, &format!("(B, T, F, {})", self.in_channels), d));
        }
        let (b, t, f) = (d[0], d[1], d[2]);
        let x = x.as_standard_layout();
        let cols = self.im2col(x.as_slice().expect("standard layout"), b, t, f);
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("rank-2 weight");
        let mut y = standard(cols.dot(&w));
        y += &self.bias.value.view().into_dimensionality::<ndarray::Ix1>().expect("rank-1 bias");
        let mut y = y.into_shape_with_order(IxDyn(&[b, t, f, self.out_channels])).expect("conv output shape");
        self.activation.apply(&mut y);
        self.cols = Some(cols);
        self.input_dim = vec![b, t, f];
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &ArrayD<S>) -> Result<ArrayD<S>> {
        let y = self.output.as_ref().ok_or_else(|| no_forward(&self.name))?;
        if dy.shape() != y.shape() {
            return Err(shape_err(&self.name, &format!("{:?}", y.shape()), dy.shape()));
        }
        let dz = self.activation.backprop(y, dy);
        let n = dz.len() / self.out_channels;
        let dz = dz
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, self.out_channels))
            .expect("flatten conv grad");
        let cols = self.cols.as_ref().expect("cached columns");
        let dw = cols.t().dot(&dz);
        self.weight.grad += &dw.into_dyn();
        self.bias.grad += &dz.sum_axis(Axis(0)).into_dyn();
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("rank-2 weight");
        let dcols = standard(dz.dot(&w.t()));
        let (b, t, f) = (self.input_dim[0], self.input_dim[1], self.input_dim[2]);
        Ok(self.col2im(&dcols, b, t, f))
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Max pooling over `(batch, time, freq, channels)` with same padding:
/// each pooled axis has `ceil(n / stride)` outputs. Ties go to the first
/// maximum in time-major scan order.
pub struct MaxPool2d {
    name: String,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    argmax: Vec<usize>,
    input_dim: Vec<usize>,
    output_dim: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(name: impl Into<String>, kernel: (usize, usize), stride: (usize, usize)) -> Self {
        Self {
            name: name.into(),
            kernel,
            stride,
            argmax: Vec::new(),
            input_dim: Vec::new(),
            output_dim: Vec::new(),
        }
    }

    /// Output length and leading pad for one axis.
    pub fn axis_geometry(n: usize, k: usize, s: usize) -> (usize, usize) {
        let out = n.div_ceil(s);
        let total = ((out - 1) * s + k).saturating_sub(n);
        (out, total / 2)
    }
}

impl<S: Scalar> Layer<S> for MaxPool2d {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &ArrayD<S>, _ctx: &mut ForwardCtx) -> Result<ArrayD<S>> {
        let d = x.shape();
        if d.len() != 4 {
            return Err(shape_err(&self.name, "(B, T, F, C)", d));
        }
        let (b, t, f, c) = (d[0], d[1], d[2], d[3]);
        let (ot, pt) = Self::axis_geometry(t, self.kernel.0, self.stride.0);
        let (of, pf) = Self::axis_geometry(f, self.kernel.1, self.stride.1);
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![S::zero(); b * ot * of * c];
        let mut argmax = vec![0usize; out.len()];
        for bi in 0..b {
            for oti in 0..ot {
                let t0 = (oti * self.stride.0) as isize - pt as isize;
                for ofi in 0..of {
                    let f0 = (ofi * self.stride.1) as isize - pf as isize;
                    for ci in 0..c {
                        let mut best = S::neg_infinity();
                        let mut best_idx = usize::MAX;
                        for dt in 0..self.kernel.0 as isize {
                            let st = t0 + dt;
                            if st < 0 || st >= t as isize {
                                continue;
                            }
                            for df in 0..self.kernel.1 as isize {
                                let sf = f0 + df;
                                if sf < 0 || sf >= f as isize {
                                    continue;
                                }
                                let idx = ((bi * t + st as usize) * f + sf as usize) * c + ci;
                                if best_idx == usize::MAX || xs[idx] > best {
                                    best = xs[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = ((bi * ot + oti) * of + ofi) * c + ci;
                        out[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
        }
        self.argmax = argmax;
        self.input_dim = vec![b, t, f, c];
        self.output_dim = vec![b, ot, of, c];
        Ok(ArrayD::from_shape_vec(IxDyn(&self.output_dim), out).expect("pool shape"))
    }

    fn backward(&mut self, dy: &ArrayD<S>) -> Result<ArrayD<S>> {
        if self.output_dim.is_empty() {
            return Err(no_forward(&self.name));
        }
        if dy.shape() != self.output_dim.as_slice() {
            return Err(shape_err(&self.name, &format!("{:?}", self.output_dim), dy.shape()));
        }
        let mut dx = vec![S::zero(); self.input_dim.iter().product()];
        for (g, &i) in dy.iter().zip(&self.argmax) {
            dx[i] += *g;
        }
        Ok(ArrayD::from_shape_vec(IxDyn(&self.input_dim), dx).expect("pool grad shape"))
    }
}

/// Batch normalization over the last axis.
pub struct BatchNorm<S: Scalar> {
    name: String,
    pub momentum: f64,
    pub epsilon: f64,
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Param<S>,
    pub running_var: Param<S>,
    xhat: Option<Array2<S>>,
    inv_std: Vec<S>,
    input_dim: Vec<usize>,
    train_mode: bool,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(name: impl Into<String>, channels: usize, momentum: f64, epsilon: f64) -> Self {
        let name = name.into();
        Self {
            gamma: Param::new(format!("{name}.gamma"), ArrayD::ones(IxDyn(&[channels]))),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            running_mean: Param::buffer(format!("{name}.running_mean"), ArrayD::zeros(IxDyn(&[channels]))),
            running_var: Param::buffer(format!("{name}.running_var"), ArrayD::ones(IxDyn(&[channels]))),
            name,
            momentum,
            epsilon,
            xhat: None,
            inv_std: Vec::new(),
            input_dim: Vec::new(),
            train_mode: false,
        }
    }
}

impl<S: Scalar> Layer<S> for BatchNorm<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &ArrayD<S>, ctx: &mut ForwardCtx) -> Result<ArrayD<S>> {
        let c = self.gamma.value.len();
        if x.shape().last() != Some(&c) {
            return Err(shape_err(&self.name, &format!("(..., {c})"), x.shape()));
        }
        let n = x.len() / c;
        let x2 = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, c))
            .expect("flatten");
        let eps = S::of(self.epsilon);
        let (mean, var) = if ctx.train {
            let nn = S::of(n as f64);
            let mean = x2.sum_axis(Axis(0)) / nn;
            let mut var = ndarray::Array1::zeros(c);
            for row in x2.rows() {
                for k in 0..c {
                    let d = row[k] - mean[k];
                    var[k] += d * d;
                }
            }
            let var = var / nn;
            let m = S::of(self.momentum);
            let rm = &mut self.running_mean.value;
            let rv = &mut self.running_var.value;
            for k in 0..c {
                rm[k] = m * rm[k] + (S::one() - m) * mean[k];
                rv[k] = m * rv[k] + (S::one() - m) * var[k];
            }
            (mean.to_vec(), var.to_vec())
        } else {
            (self.running_mean.value.iter().copied().collect(), self.running_var.value.iter().copied().collect())
        };
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let mut xhat = x2;
        for mut row in xhat.rows_mut() {
            for k in 0..c {
                row[k] = (row[k] - mean[k]) * inv_std[k];
            }
        }
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            for k in 0..c {
                row[k] = row[k] * self.gamma.value[k] + self.beta.value[k];
            }
        }
        self.xhat = Some(xhat);
        self.inv_std = inv_std;
        self.input_dim = x.shape().to_vec();
        self.train_mode = ctx.train;
        Ok(y.into_shape_with_order(IxDyn(x.shape())).expect("bn shape"))
    }

    fn backward(&mut self, dy: &ArrayD<S>) -> Result<ArrayD<S>> {
        let xhat = self.xhat.as_ref().ok_or_else(|| no_forward(&self.name))?;
        if dy.shape() != self.input_dim.as_slice() {
            return Err(shape_err(&self.name, &format!("{:?}", self.input_dim), dy.shape()));
        }
        let (n, c) = xhat.dim();
        let dy2 = dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, c))
            .expect("flatten");
        let mut sum_dy = vec![S::zero(); c];
        let mut sum_dy_xhat = vec![S::zero(); c];
        for (g, xh) in dy2.rows().into_iter().zip(xhat.rows()) {
            for k in 0..c {
                sum_dy[k] += g[k];
                sum_dy_xhat[k] += g[k] * xh[k];
            }
        }
        for k in 0..c {
            self.gamma.grad[k] += sum_dy_xhat[k];
            self.beta.grad[k] += sum_dy[k];
        }
        let mut dx = dy2;
        if self.train_mode {
            let nn = S::of(n as f64);
            for (mut g, xh) in dx.rows_mut().into_iter().zip(xhat.rows()) {
                for k in 0..c {
                    let gamma = self.gamma.value[k];
                    g[k] = gamma * self.inv_std[k] / nn
                        * (nn * g[k] - sum_dy[k] - xh[k] * sum_dy_xhat[k]);
                }
            }
        } else {
            for mut g in dx.rows_mut() {
                for k in 0..c {
                    g[k] = g[k] * self.gamma.value[k] * self.inv_std[k];
                }
            }
        }
        Ok(dx.into_shape_with_order(IxDyn(&self.input_dim)).expect("bn grad shape"))
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - p)` in training,
/// identity in evaluation.
pub struct Dropout<S> {
    name: String,
    pub p: f64,
    mask: Option<ArrayD<S>>,
}

impl<S: Scalar> Dropout<S> {
    pub fn new(name: impl Into<String>, p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
        Self {
            name: name.into(),
            p,
            mask: None,
        }
    }

    fn draw_mask(&self, shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<S> {
        let keep = S::of(1.0 / (1.0 - self.p));
        ArrayD::from_shape_simple_fn(IxDyn(shape), || {
            if rng.gen::<f64>() < self.p {
                S::zero()
            } else {
                keep
            }
        })
    }
}

impl<S: Scalar> Layer<S> for Dropout<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &ArrayD<S>, ctx: &mut ForwardCtx) -> Result<ArrayD<S>> {
        if !ctx.train || self.p == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let mask = self.draw_mask(x.shape(), &mut ctx.rng);
        let y = x * &mask;
        self.mask = Some(mask);
        Ok(y)
    }

    fn backward(&mut self, dy: &ArrayD<S>) -> Result<ArrayD<S>> {
        Ok(match &self.mask {
            Some(m) => dy * m,
            None => dy.clone(),
        })
    }
}

/// `(batch, time, freq, channels)` to `(batch, time, freq * channels)`.
pub struct Flatten {
    name: String,
    input_dim: Vec<usize>,
}

impl Flatten {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            input_dim: Vec::new(),
        }
    }
}

impl<S: Scalar> Layer<S> for Flatten {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &ArrayD<S>, _ctx: &mut ForwardCtx) -> Result<ArrayD<S>> {
        let d = x.shape();
        if d.len() != 4 {
            return Err(shape_err(&self.name, "(B, T, F, C)", d));
        }
        self.input_dim = d.to_vec();
        Ok(x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(&[d[0], d[1], d[2] * d[3]]))
            .expect("flatten"))
    }

    fn backward(&mut self, dy: &ArrayD<S>) -> Result<ArrayD<S>> {
        Ok(dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(&self.input_dim))
            .map_err(|e| Error::Shape(e.to_string()))?)
    }
}

/// Affine map over the last axis, followed by an activation.
pub struct Dense<S: Scalar> {
    name: String,
    pub activation: Activation,
    /// `(in, out)`
    pub weight: Param<S>,
    pub bias: Param<S>,
    input: Option<Array2<S>>,
    input_dim: Vec<usize>,
    output: Option<ArrayD<S>>,
}

impl<S: Scalar> Dense<S> {
    pub fn new(name: impl Into<String>, inputs: usize, outputs: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let name = name.into();
        Self {
            weight: Param::glorot(format!("{name}.weight"), &[inputs, outputs], inputs, outputs, rng),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
            name,
            activation,
            input: None,
            input_dim: Vec::new(),
            output: None,
        }
    }

    fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }
}

impl<S: Scalar> Layer<S> for Dense<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &ArrayD<S>, _ctx: &mut ForwardCtx) -> Result<ArrayD<S>> {
        let d = x.shape();
        if d.last() != Some(&self.inputs()) {
            return Err(shape_err(&self.name, &format!("(..., {})", self.inputs()), d));
        }
        let n = x.len() / self.inputs();
        let x2 = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, self.inputs()))
            .expect("flatten");
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("rank-2 weight");
        let mut y = standard(x2.dot(&w));
        y += &self.bias.value.view().into_dimensionality::<ndarray::Ix1>().expect("rank-1 bias");
        let mut out_dim = d.to_vec();
        *out_dim.last_mut().unwrap() = self.outputs();
        let mut y = y.into_shape_with_order(IxDyn(&out_dim)).expect("dense shape");
        self.activation.apply(&mut y);
        self.input = Some(x2);
        self.input_dim = d.to_vec();
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &ArrayD<S>) -> Result<ArrayD<S>> {
        let y = self.output.as_ref().ok_or_else(|| no_forward(&self.name))?;
        if dy.shape() != y.shape() {
            return Err(shape_err(&self.name, &format!("{:?}", y.shape()), dy.shape()));
        }
        let dz = self.activation.backprop(y, dy);
        let n = dz.len() / self.outputs();
        let dz = dz
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, self.outputs()))
            .expect("flatten");
        let x = self.input.as_ref().expect("cached input");
        self.weight.grad += &x.t().dot(&dz).into_dyn();
        self.bias.grad += &dz.sum_axis(Axis(0)).into_dyn();
        let w = self.weight.value.view().into_dimensionality::<Ix2>().expect("rank-2 weight");
        let dx = standard(dz.dot(&w.t()));
        Ok(dx.into_shape_with_order(IxDyn(&self.input_dim)).expect("dense grad shape"))
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn identity_kernel_copies_input() {
        let mut conv = Conv2d::<f64>::new("c", (1, 1), 1, 1, Activation::None, &mut rng());
        conv.weight.value.fill(1.0);
        let x = ArrayD::from_shape_fn(IxDyn(&[1, 4, 5, 1]), |d| (d[1] * 5 + d[2]) as f64 - 7.0);
        assert_eq!(conv.forward(&x, &mut ForwardCtx::eval()).unwrap(), x);
    }

    #[test]
    fn ones_kernel_sums_window() {
        let mut conv = Conv2d::<f64>::new("c", (3, 3), 1, 1, Activation::None, &mut rng());
        conv.weight.value.fill(1.0);
        let x = ArrayD::ones(IxDyn(&[1, 5, 5, 1]));
        let y = conv.forward(&x, &mut ForwardCtx::eval()).unwrap();
        assert_eq!(y.shape(), &[1, 5, 5, 1]);
        assert_eq!(y[[0, 2, 2, 0]], 9.0);
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
        assert_eq!(y[[0, 0, 2, 0]], 6.0);
    }

    #[test]
    fn even_kernel_pads_after() {
        let mut conv = Conv2d::<f64>::new("c", (2, 2), 1, 1, Activation::None, &mut rng());
        conv.weight.value.fill(1.0);
        let x = ArrayD::ones(IxDyn(&[1, 3, 3, 1]));
        let y = conv.forward(&x, &mut ForwardCtx::eval()).unwrap();
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
        assert_eq!(y[[0, 2, 2, 0]], 1.0);
        assert_eq!(y[[0, 2, 0, 0]], 2.0);
    }

    #[test]
    fn pooling_geometry_and_ties() {
        assert_eq!(MaxPool2d::axis_geometry(7, 3, 2), (4, 1));
        assert_eq!(MaxPool2d::axis_geometry(8, 2, 2), (4, 0));
        assert_eq!(MaxPool2d::axis_geometry(5, 1, 1), (5, 0));
        let mut pool = MaxPool2d::new("p", (1, 3), (1, 2));
        let x = ArrayD::from_shape_fn(IxDyn(&[1, 1, 8, 1]), |d| d[2] as f64);
        let y = Layer::<f64>::forward(&mut pool, &x, &mut ForwardCtx::eval()).unwrap();
        // Windows [0..=2], [2..=4], [4..=6], [6..=7]: the odd pad goes after.
        assert_eq!(y.iter().copied().collect::<Vec<_>>(), [2.0, 4.0, 6.0, 7.0]);
        let c = ArrayD::from_elem(IxDyn(&[1, 2, 6, 1]), 3.0);
        let mut pool = MaxPool2d::new("p", (3, 3), (2, 2));
        let y = Layer::<f64>::forward(&mut pool, &c, &mut ForwardCtx::eval()).unwrap();
        assert!(y.iter().all(|&v| v == 3.0));
        let g = Layer::<f64>::backward(&mut pool, &ArrayD::ones(y.raw_dim())).unwrap();
        // Each window routes to its first maximum.
        assert_eq!(g.sum(), y.len() as f64);
        assert_eq!(g[[0, 0, 0, 0]], 1.0);
    }

    #[test]
    fn batchnorm_on_standardized_batch_is_near_identity() {
        let mut bn = BatchNorm::<f64>::new("bn", 1, 0.99, 1e-3);
        let x = ArrayD::from_shape_vec(IxDyn(&[4, 1]), vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let y = bn.forward(&x, &mut ForwardCtx::train(rng())).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn batchnorm_running_stats_converge() {
        let mut bn = BatchNorm::<f64>::new("bn", 2, 0.9, 1e-3);
        let mut r = rng();
        let mut ctx = ForwardCtx::train(rng());
        let make = |r: &mut ChaCha8Rng| {
            ArrayD::from_shape_fn(IxDyn(&[256, 2]), |d| 3.0 + (d[1] as f64 + 1.0) * r.gen_range(-1.0..1.0))
        };
        for _ in 0..200 {
            bn.forward(&make(&mut r), &mut ctx).unwrap();
        }
        let x = make(&mut r);
        let train = bn.forward(&x, &mut ctx).unwrap();
        let eval = bn.forward(&x, &mut ForwardCtx::eval()).unwrap();
        let diff = (&train - &eval).mapv(f64::abs);
        assert!(diff.iter().sum::<f64>() / (diff.len() as f64) < 0.05);
    }

    #[test]
    fn dropout_modes() {
        let x = ArrayD::from_elem(IxDyn(&[10_000]), 2.0);
        let mut d = Dropout::<f64>::new("d", 0.0);
        assert_eq!(d.forward(&x, &mut ForwardCtx::train(rng())).unwrap(), x);
        let mut d = Dropout::<f64>::new("d", 0.5);
        assert_eq!(d.forward(&x, &mut ForwardCtx::eval()).unwrap(), x);
        let y = d.forward(&x, &mut ForwardCtx::train(rng())).unwrap();
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "{mean}");
        assert!(y.iter().all(|&v| v == 0.0 || v == 4.0));
    }

    #[test]
    fn dense_zero_weights() {
        let mut dense = Dense::<f64>::new("d", 3, 2, Activation::Relu, &mut rng());
        dense.weight.value.fill(0.0);
        let x = ArrayD::from_elem(IxDyn(&[4, 3]), 1.5);
        assert!(dense.forward(&x, &mut ForwardCtx::eval()).unwrap().iter().all(|&v| v == 0.0));
        dense.activation = Activation::Sigmoid;
        assert!(dense.forward(&x, &mut ForwardCtx::eval()).unwrap().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn flatten_round_trips() {
        let mut fl = Flatten::new("f");
        let x = ArrayD::from_shape_fn(IxDyn(&[2, 3, 4, 5]), |d| (d[0] * 60 + d[1] * 20 + d[2] * 5 + d[3]) as f64);
        let y = Layer::<f64>::forward(&mut fl, &x, &mut ForwardCtx::eval()).unwrap();
        assert_eq!(y.shape(), &[2, 3, 20]);
        assert_eq!(y[[1, 2, 7]], x[[1, 2, 1, 2]]);
        assert_eq!(Layer::<f64>::backward(&mut fl, &y).unwrap(), x);
    }
}
