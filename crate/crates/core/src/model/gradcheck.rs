use ndarray::ArrayD;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::Crnn;
use super::{ForwardCtx, Layer};
use crate::error::Result;

/// Denominator floor for relative errors, so exact-zero gradients compare
/// on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn pick(len: usize, max: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        let mut v = sample(rng, len, max).into_vec();
        v.sort_unstable();
        v
    }
}

/// Central-difference check of one layer under the scalar loss
/// `sum(forward(x) * r)` with a fixed random `r`. The dropout RNG is
/// re-seeded for every evaluation so masks stay fixed. At most
/// `max_entries` entries per tensor are probed.
pub fn check_layer(
    layer: &mut dyn Layer<f64>,
    x: &ArrayD<f64>,
    train: bool,
    epsilon: f64,
    max_entries: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let ctx = || {
        let mut c = ForwardCtx::train(ChaCha8Rng::seed_from_u64(seed));
        c.train = train;
        c
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let y = layer.forward(x, &mut ctx())?;
    let r = y.mapv(|_| rng.gen_range(-1.0..1.0));
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&r)?;
    let analytic_params: Vec<(String, ArrayD<f64>, bool)> = layer
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.clone(), p.trainable))
        .collect();

    let loss = |layer: &mut dyn Layer<f64>, x: &ArrayD<f64>| -> Result<f64> {
        Ok((layer.forward(x, &mut ctx())? * &r).sum())
    };

    let dx = dx.as_standard_layout().into_owned();
    let mut groups = Vec::new();
    let mut xp = x.as_standard_layout().into_owned();
    let mut worst = 0.0f64;
    let idx = pick(x.len(), max_entries, &mut rng);
    for &i in &idx {
        let orig = xp.as_slice().unwrap()[i];
        xp.as_slice_mut().unwrap()[i] = orig + epsilon;
        let up = loss(layer, &xp)?;
        xp.as_slice_mut().unwrap()[i] = orig - epsilon;
        let down = loss(layer, &xp)?;
        xp.as_slice_mut().unwrap()[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max(relative_error(dx.as_slice().unwrap()[i], numeric));
    }
    groups.push(GroupReport {
        name: "input".into(),
        checked: idx.len(),
        max_rel_error: worst,
    });

    for (g, (name, analytic, trainable)) in analytic_params.iter().enumerate() {
        if !trainable {
            continue;
        }
        let idx = pick(analytic.len(), max_entries, &mut rng);
        let mut worst = 0.0f64;
        for &i in &idx {
            let orig = layer.params()[g].value.as_slice().unwrap()[i];
            layer.params_mut()[g].value.as_slice_mut().unwrap()[i] = orig + epsilon;
            let up = loss(layer, x)?;
            layer.params_mut()[g].value.as_slice_mut().unwrap()[i] = orig - epsilon;
            let down = loss(layer, x)?;
            layer.params_mut()[g].value.as_slice_mut().unwrap()[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic.as_slice().unwrap()[i], numeric));
        }
        groups.push(GroupReport {
            name: name.clone(),
            checked: idx.len(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport { epsilon, groups })
}

/// Central-difference check of the whole network under the fused
/// sigmoid + BCE loss, in training mode with re-seeded dropout masks.
pub fn check_network(
    net: &mut Crnn<f64>,
    x: &ArrayD<f64>,
    y: &ArrayD<f64>,
    epsilon: f64,
    max_entries: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    check_network_with(net, x, y, epsilon, max_entries, seed, |_, _| {})
}

/// As [`check_network`], with a hook that may alter each analytic gradient
/// before comparison.
pub fn check_network_with(
    net: &mut Crnn<f64>,
    x: &ArrayD<f64>,
    y: &ArrayD<f64>,
    epsilon: f64,
    max_entries: usize,
    seed: u64,
    mut alter: impl FnMut(&str, &mut ArrayD<f64>),
) -> Result<GradCheckReport> {
    let ctx = || ForwardCtx::train(ChaCha8Rng::seed_from_u64(seed));
    net.loss_and_backward(x, y, &mut ctx())?;
    let analytic: Vec<(String, ArrayD<f64>, bool)> = net
        .params()
        .iter()
        .map(|p| {
            let mut g = p.grad.clone();
            alter(&p.name, &mut g);
            (p.name.clone(), g, p.trainable)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut groups = Vec::new();
    for (g, (name, grad, trainable)) in analytic.iter().enumerate() {
        if !trainable {
            continue;
        }
        let idx = pick(grad.len(), max_entries, &mut rng);
        let mut worst = 0.0f64;
        for &i in &idx {
            let orig = net.params()[g].value.as_slice().unwrap()[i];
            net.params_mut()[g].value.as_slice_mut().unwrap()[i] = orig + epsilon;
            let up = net.loss(x, y, &mut ctx())?;
            net.params_mut()[g].value.as_slice_mut().unwrap()[i] = orig - epsilon;
            let down = net.loss(x, y, &mut ctx())?;
            net.params_mut()[g].value.as_slice_mut().unwrap()[i] = orig;
            worst = worst.max(relative_error(grad.as_slice().unwrap()[i], (up - down) / (2.0 * epsilon)));
        }
        groups.push(GroupReport {
            name: name.clone(),
            checked: idx.len(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport { epsilon, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::layers::{Activation, BatchNorm, Conv2d, Dense, Dropout, MaxPool2d};
    use crate::model::lstm::Lstm;
    use crate::model::network::{NetworkConfig, PoolingMode};
    use ndarray::IxDyn;

    const TOL: f64 = 1e-4;

    fn rand_array(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<f64> {
        ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-1.0..1.0))
    }

    fn assert_pass(r: &GradCheckReport, what: &str) {
        assert!(r.passed(TOL), "{what}: {:#?}", r.groups);
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (kernel, act) in [((3, 3), Activation::None), ((2, 2), Activation::Sigmoid), ((1, 3), Activation::None)] {
            let mut conv = Conv2d::<f64>::new("c", kernel, 2, 3, act, &mut rng);
            conv.bias.value.mapv_inplace(|_| 0.1);
            let x = rand_array(&[2, 4, 5, 2], &mut rng);
            assert_pass(&check_layer(&mut conv, &x, true, 1e-6, 200, 4).unwrap(), "conv");
        }
    }

    #[test]
    fn lstm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lstm = Lstm::<f64>::new("l", 4, 3, &mut rng);
        let x = rand_array(&[2, 5, 4], &mut rng);
        assert_pass(&check_layer(&mut lstm, &x, true, 1e-6, 500, 1).unwrap(), "lstm");
    }

    #[test]
    fn pool_bn_dropout_dense_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Distinct values keep the pooling argmax away from ties.
        let mut vals: Vec<f64> = (0..2 * 3 * 7 * 2).map(|i| i as f64 * 0.01).collect();
        rand::seq::SliceRandom::shuffle(vals.as_mut_slice(), &mut rng);
        let x = ArrayD::from_shape_vec(IxDyn(&[2, 3, 7, 2]), vals).unwrap();
        let mut pool = MaxPool2d::new("p", (3, 3), (2, 2));
        assert_pass(&check_layer(&mut pool, &x, true, 1e-6, 500, 1).unwrap(), "pool");

        let mut bn = BatchNorm::<f64>::new("bn", 3, 0.9, 1e-3);
        let x = rand_array(&[4, 5, 3], &mut rng);
        assert_pass(&check_layer(&mut bn, &x, true, 1e-6, 500, 1).unwrap(), "bn train");
        assert_pass(&check_layer(&mut bn, &x, false, 1e-6, 500, 1).unwrap(), "bn eval");

        let mut drop = Dropout::<f64>::new("d", 0.4);
        assert_pass(&check_layer(&mut drop, &x, true, 1e-6, 500, 1).unwrap(), "dropout");

        let mut dense = Dense::<f64>::new("d", 3, 4, Activation::Sigmoid, &mut rng);
        assert_pass(&check_layer(&mut dense, &x, true, 1e-6, 500, 1).unwrap(), "dense");
    }

    fn reduced_net() -> (Crnn<f64>, ArrayD<f64>, ArrayD<f64>) {
        let mut c = NetworkConfig::desk(4);
        c.n_mels = 16;
        c.conv_blocks.truncate(2);
        c.conv_blocks[0].filters = 3;
        c.conv_blocks[1].filters = 4;
        c.lstm_units = 5;
        c.dense_units = 6;
        c.pooling = PoolingMode::Frequency;
        let net = Crnn::<f64>::new(c, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_array(&[2, 16, 16, 2], &mut rng);
        let y = ArrayD::from_shape_simple_fn(IxDyn(&[2, 16, 4]), || f64::from(rng.gen_bool(0.3) as u8));
        (net, x, y)
    }

    #[test]
    fn reduced_network_passes_and_corruption_fails() {
        let (mut net, x, y) = reduced_net();
        assert_pass(&check_network(&mut net, &x, &y, 1e-6, 12, 1).unwrap(), "network");
        let r = check_network_with(&mut net, &x, &y, 1e-6, 12, 1, |name, g| {
            if name == "lstm.w_hidden" {
                g.mapv_inplace(|v| v * 1.01);
            }
        })
        .unwrap();
        assert!(!r.passed(TOL));
    }
}
