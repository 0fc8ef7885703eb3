use ndarray::{s, Array2, Array3, ArrayD, Axis, Ix2, IxDyn};
use rand_chacha::ChaCha8Rng;

use super::{standard, ForwardCtx, Layer, Param, Scalar};
use crate::error::{Error, Result};

/// Unidirectional LSTM over `(batch, time, features)` returning every
/// hidden state. Gates are packed as `[input, forget, cell, output]`; the
/// initial hidden and cell states are zero.
pub struct Lstm<S: Scalar> {
    name: String,
    pub hidden: usize,
    /// `(in, 4H)`
    pub w_input: Param<S>,
    /// `(H, 4H)`
    pub w_hidden: Param<S>,
    pub bias: Param<S>,
    cache: Option<Cache<S>>,
}

struct Cache<S> {
    x: Array2<S>,
    /// `(B, T, 4H)` post-activation gates.
    gates: Array3<S>,
    /// `(B, T, H)`
    cell: Array3<S>,
    tanh_cell: Array3<S>,
    hidden: Array3<S>,
    dims: (usize, usize, usize),
}

fn sigmoid<S: Scalar>(v: S) -> S {
    S::one() / (S::one() + (-v).exp())
}

impl<S: Scalar> Lstm<S> {
    pub fn new(name: impl Into<String>, inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let name = name.into();
        Self {
            w_input: Param::glorot(format!("{name}.w_input"), &[inputs, 4 * hidden], inputs, 4 * hidden, rng),
            w_hidden: Param::glorot(format!("{name}.w_hidden"), &[hidden, 4 * hidden], hidden, 4 * hidden, rng),
            bias: Param::zeros(format!("{name}.bias"), &[4 * hidden]),
            name,
            hidden,
            cache: None,
        }
    }

    fn inputs(&self) -> usize {
        self.w_input.value.shape()[0]
    }
}

impl<S: Scalar> Layer<S> for Lstm<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &ArrayD<S>, _ctx: &mut ForwardCtx) -> Result<ArrayD<S>> {
        let d = x.shape();
        if d.len() != 3 || d[2] != self.inputs() {
            return Err(Error::Shape(format!(
                "{}: expected (B, T, {}), got {d:?}",
                self.name,
                self.inputs()
            )));
        }
        let (b, t, din) = (d[0], d[1], d[2]);
        let h = self.hidden;
        let x2 = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b * t, din))
            .expect("flatten");
        let wx = self.w_input.value.view().into_dimensionality::<Ix2>().expect("rank 2");
        let wh = self.w_hidden.value.view().into_dimensionality::<Ix2>().expect("rank 2");
        let bias = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().expect("rank 1");
        let xw = standard(x2.dot(&wx)).into_shape_with_order((b, t, 4 * h)).expect("gate shape");

        let mut gates = Array3::zeros((b, t, 4 * h));
        let mut cell = Array3::zeros((b, t, h));
        let mut tanh_cell = Array3::zeros((b, t, h));
        let mut hidden = Array3::zeros((b, t, h));
        let mut h_prev = Array2::<S>::zeros((b, h));
        let mut c_prev = Array2::<S>::zeros((b, h));
        for ti in 0..t {
            let mut z = h_prev.dot(&wh);
            z += &xw.slice(s![.., ti, ..]);
            z += &bias;
            for bi in 0..b {
                for k in 0..h {
                    let i = sigmoid(z[[bi, k]]);
                    let f = sigmoid(z[[bi, h + k]]);
                    let g = z[[bi, 2 * h + k]].tanh();
                    let o = sigmoid(z[[bi, 3 * h + k]]);
                    let c = f * c_prev[[bi, k]] + i * g;
                    let tc = c.tanh();
                    gates[[bi, ti, k]] = i;
                    gates[[bi, ti, h + k]] = f;
                    gates[[bi, ti, 2 * h + k]] = g;
                    gates[[bi, ti, 3 * h + k]] = o;
                    cell[[bi, ti, k]] = c;
                    tanh_cell[[bi, ti, k]] = tc;
                    hidden[[bi, ti, k]] = o * tc;
                }
            }
            h_prev.assign(&hidden.slice(s![.., ti, ..]));
            c_prev.assign(&cell.slice(s![.., ti, ..]));
        }
        let out = hidden.clone().into_dyn();
        self.cache = Some(Cache {
            x: x2,
            gates,
            cell,
            tanh_cell,
            hidden,
            dims: (b, t, din),
        });
        Ok(out)
    }

    fn backward(&mut self, dy: &ArrayD<S>) -> Result<ArrayD<S>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Shape(format!("{}: backward called before forward", self.name)))?;
        let (b, t, din) = cache.dims;
        let h = self.hidden;
        if dy.shape() != [b, t, h] {
            return Err(Error::Shape(format!("{}: gradient shape {:?}", self.name, dy.shape())));
        }
        let dy = dy.view().into_dimensionality::<ndarray::Ix3>().expect("rank 3");
        let wh = self.w_hidden.value.view().into_dimensionality::<Ix2>().expect("rank 2");
        let mut dz_all = Array3::<S>::zeros((b, t, 4 * h));
        let mut dh_next = Array2::<S>::zeros((b, h));
        let mut dc_next = Array2::<S>::zeros((b, h));
        let mut dwh = Array2::<S>::zeros((h, 4 * h));
        let one = S::one();
        for ti in (0..t).rev() {
            let mut dz = Array2::<S>::zeros((b, 4 * h));
            for bi in 0..b {
                for k in 0..h {
                    let i = cache.gates[[bi, ti, k]];
                    let f = cache.gates[[bi, ti, h + k]];
                    let g = cache.gates[[bi, ti, 2 * h + k]];
                    let o = cache.gates[[bi, ti, 3 * h + k]];
                    let tc = cache.tanh_cell[[bi, ti, k]];
                    let c_prev = if ti > 0 { cache.cell[[bi, ti - 1, k]] } else { S::zero() };
                    let dh = dy[[bi, ti, k]] + dh_next[[bi, k]];
                    let dc = dh * o * (one - tc * tc) + dc_next[[bi, k]];
                    dz[[bi, k]] = dc * g * i * (one - i);
                    dz[[bi, h + k]] = dc * c_prev * f * (one - f);
                    dz[[bi, 2 * h + k]] = dc * i * (one - g * g);
                    dz[[bi, 3 * h + k]] = dh * tc * o * (one - o);
                    dc_next[[bi, k]] = dc * f;
                }
            }
            if ti > 0 {
                let h_prev = cache.hidden.slice(s![.., ti - 1, ..]);
                dwh += &h_prev.t().dot(&dz);
            }
            dh_next = dz.dot(&wh.t());
            dz_all.slice_mut(s![.., ti, ..]).assign(&dz);
        }
        let dz2 = dz_all.into_shape_with_order((b * t, 4 * h)).expect("flatten");
        self.w_input.grad += &cache.x.t().dot(&dz2).into_dyn();
        self.w_hidden.grad += &dwh.into_dyn();
        self.bias.grad += &dz2.sum_axis(Axis(0)).into_dyn();
        let wx = self.w_input.value.view().into_dimensionality::<Ix2>().expect("rank 2");
        let dx = standard(dz2.dot(&wx.t()));
        Ok(dx.into_shape_with_order(IxDyn(&[b, t, din])).expect("lstm grad shape"))
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_and_input_give_zero() {
        let mut lstm = Lstm::<f64>::new("l", 3, 4, &mut ChaCha8Rng::seed_from_u64(1));
        lstm.w_input.value.fill(0.0);
        lstm.w_hidden.value.fill(0.0);
        let y = lstm.forward(&ArrayD::zeros(IxDyn(&[2, 5, 3])), &mut ForwardCtx::eval()).unwrap();
        assert_eq!(y.shape(), &[2, 5, 4]);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_arithmetic() {
        let mut lstm = Lstm::<f64>::new("l", 1, 2, &mut ChaCha8Rng::seed_from_u64(1));
        // w_input columns: i0 i1 f0 f1 g0 g1 o0 o1
        let w = [0.5, -0.5, 1.0, 0.0, 2.0, -1.0, 0.25, 1.5];
        for (k, v) in w.iter().enumerate() {
            lstm.w_input.value[[0, k]] = *v;
        }
        lstm.bias.value[1] = 0.3;
        let y = lstm
            .forward(&ArrayD::from_elem(IxDyn(&[1, 1, 1]), 2.0), &mut ForwardCtx::eval())
            .unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        // Unit 0: z_i = 1, z_g = 4, z_o = 0.5; forget gate multiplies c0 = 0.
        let h0 = sig(0.5) * (sig(1.0) * 4f64.tanh()).tanh();
        // Unit 1: z_i = -1 + 0.3, z_g = -2, z_o = 3.
        let h1 = sig(3.0) * (sig(-0.7) * (-2f64).tanh()).tanh();
        assert!((y[[0, 0, 0]] - h0).abs() < 1e-12);
        assert!((y[[0, 0, 1]] - h1).abs() < 1e-12);
    }
}
