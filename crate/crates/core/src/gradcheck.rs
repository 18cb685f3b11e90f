//! Central finite-difference gradient checks.
//!
//! Every check runs in double precision, perturbs one coordinate at a time
//! by `eps` (default 1e-3), and compares `(f(x+eps) - f(x-eps)) / (2 eps)`
//! against the analytic backward pass, per parameter and per input element.
//! The scalar objective is a fixed random projection of the layer output,
//! which exercises all output coordinates at once.
//!
//! Relative error uses `|a - n| / max(|a|, |n|, 1e-3)`: components smaller
//! than the floor are effectively compared absolutely at 1e-3 scale.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::{
    batchnorm1d_backward, batchnorm1d_train, conv1d_backward, conv1d_forward, dense_backward,
    dense_forward, global_avg_pool, global_avg_pool_backward, maxpool1d, maxpool1d_backward, relu,
    relu_backward, softmax_cross_entropy, BatchNormSpec, ConvSpec, DenseSpec, PoolSpec,
};
use crate::model::{build_epilnet, BasicBlock, EpilNet, TensorKind};
use crate::tensor::SignalTensor;

/// Default probe step for central differences.
pub const DEFAULT_EPS: f64 = 1e-3;

const REL_ERR_FLOOR: f64 = 1e-3;

/// Numerical gradient of a scalar function by central differences.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let original = probe[i];
            probe[i] = original + eps;
            let plus = f(&probe);
            probe[i] = original - eps;
            let minus = f(&probe);
            probe[i] = original;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Worst relative disagreement between analytic and numeric gradients.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERR_FLOOR))
        .fold(0.0, f64::max)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect()
}

fn projection(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    uniform(rng, n, 1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Convolution: checks d/dx, d/dw, d/db. Returns the worst relative error.
#[allow(clippy::too_many_arguments)]
pub fn check_conv1d(
    batch: usize,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    length: usize,
    seed: u64,
    eps: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ConvSpec::<f64>::zeros(in_channels, out_channels, kernel, stride, padding)
        .expect("valid conv spec");
    spec.weights = uniform(&mut rng, spec.weights.len(), 1.0);
    spec.bias = uniform(&mut rng, spec.bias.len(), 0.5);
    let x_values = uniform(&mut rng, batch * in_channels * length, 1.0);
    let x = SignalTensor::from_values(batch, in_channels, length, x_values.clone()).unwrap();

    let out_len = spec.output_length(length).expect("output fits");
    let r = projection(&mut rng, batch * out_channels * out_len);
    let objective = |x: &SignalTensor<f64>, spec: &ConvSpec<f64>| {
        dot(conv1d_forward(x, spec).unwrap().values(), &r)
    };

    let upstream = SignalTensor::from_values(batch, out_channels, out_len, r.clone()).unwrap();
    let analytic = conv1d_backward(&x, &spec, &upstream).unwrap();

    let num_x = numeric_gradient(
        |v| {
            let xt = SignalTensor::from_values(batch, in_channels, length, v.to_vec()).unwrap();
            objective(&xt, &spec)
        },
        &x_values,
        eps,
    );
    let num_w = numeric_gradient(
        |v| {
            let mut s = spec.clone();
            s.weights = v.to_vec();
            objective(&x, &s)
        },
        &spec.weights,
        eps,
    );
    let num_b = numeric_gradient(
        |v| {
            let mut s = spec.clone();
            s.bias = v.to_vec();
            objective(&x, &s)
        },
        &spec.bias,
        eps,
    );

    max_rel_error(analytic.input.values(), &num_x)
        .max(max_rel_error(&analytic.weights, &num_w))
        .max(max_rel_error(&analytic.bias, &num_b))
}

/// Train-mode batch norm: checks d/dx, d/dgamma, d/dbeta.
pub fn check_batchnorm(batch: usize, channels: usize, length: usize, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = BatchNormSpec::<f64>::identity(channels);
    spec.gamma = uniform(&mut rng, channels, 1.0);
    spec.beta = uniform(&mut rng, channels, 0.5);
    let x_values = uniform(&mut rng, batch * channels * length, 2.0);
    let x = SignalTensor::from_values(batch, channels, length, x_values.clone()).unwrap();
    let r = projection(&mut rng, x.len());

    // Train-mode forward mutates running statistics, so every objective
    // evaluation works on its own clone of the layer parameters.
    let objective = |x: &SignalTensor<f64>, spec: &BatchNormSpec<f64>| {
        let mut s = spec.clone();
        dot(batchnorm1d_train(x, &mut s).unwrap().0.values(), &r)
    };

    let mut train_spec = spec.clone();
    let (_, cache) = batchnorm1d_train(&x, &mut train_spec).unwrap();
    let upstream = SignalTensor::from_values(batch, channels, length, r.clone()).unwrap();
    let analytic = batchnorm1d_backward(&cache, &spec, &upstream).unwrap();

    let num_x = numeric_gradient(
        |v| {
            let xt = SignalTensor::from_values(batch, channels, length, v.to_vec()).unwrap();
            objective(&xt, &spec)
        },
        &x_values,
        eps,
    );
    let num_gamma = numeric_gradient(
        |v| {
            let mut s = spec.clone();
            s.gamma = v.to_vec();
            objective(&x, &s)
        },
        &spec.gamma,
        eps,
    );
    let num_beta = numeric_gradient(
        |v| {
            let mut s = spec.clone();
            s.beta = v.to_vec();
            objective(&x, &s)
        },
        &spec.beta,
        eps,
    );

    max_rel_error(analytic.input.values(), &num_x)
        .max(max_rel_error(&analytic.gamma, &num_gamma))
        .max(max_rel_error(&analytic.beta, &num_beta))
}

/// ReLU, probed away from the kink (all |x| > 10*eps).
pub fn check_relu(count: usize, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 10.0 * eps;
    let x_values: Vec<f64> = (0..count)
        .map(|_| {
            let magnitude = margin + rng.random::<f64>();
            if rng.random::<f64>() < 0.5 {
                -magnitude
            } else {
                magnitude
            }
        })
        .collect();
    let x = SignalTensor::from_values(1, 1, count, x_values.clone()).unwrap();
    let r = projection(&mut rng, count);

    let upstream = SignalTensor::from_values(1, 1, count, r.clone()).unwrap();
    let analytic = relu_backward(&x, &upstream);

    let num = numeric_gradient(
        |v| {
            let xt = SignalTensor::from_values(1, 1, count, v.to_vec()).unwrap();
            dot(relu(&xt).values(), &r)
        },
        &x_values,
        eps,
    );
    max_rel_error(analytic.values(), &num)
}

/// Max pool. Input values are well separated so the probe step cannot flip
/// any argmax.
pub fn check_maxpool(batch: usize, channels: usize, length: usize, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Distinct multiples of 0.5 in random order: min gap 0.5 >> 2*eps.
    let mut x_values: Vec<f64> = (0..batch * channels * length)
        .map(|i| i as f64 * 0.5)
        .collect();
    for i in (1..x_values.len()).rev() {
        let j = rng.random_range(0..=i);
        x_values.swap(i, j);
    }
    let spec = PoolSpec::default();
    let x = SignalTensor::from_values(batch, channels, length, x_values.clone()).unwrap();
    let out = maxpool1d(&x, spec).unwrap();
    let r = projection(&mut rng, out.output.len());

    let (ob, oc, ol) = out.output.shape();
    let upstream = SignalTensor::from_values(ob, oc, ol, r.clone()).unwrap();
    let analytic = maxpool1d_backward(x.shape(), &out.argmax, &upstream).unwrap();

    let num = numeric_gradient(
        |v| {
            let xt = SignalTensor::from_values(batch, channels, length, v.to_vec()).unwrap();
            dot(maxpool1d(&xt, spec).unwrap().output.values(), &r)
        },
        &x_values,
        eps,
    );
    max_rel_error(analytic.values(), &num)
}

/// Global average pool (linear, so central differences are near-exact).
pub fn check_global_avg_pool(
    batch: usize,
    channels: usize,
    length: usize,
    seed: u64,
    eps: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_values = uniform(&mut rng, batch * channels * length, 2.0);
    let x = SignalTensor::from_values(batch, channels, length, x_values.clone()).unwrap();
    let r = projection(&mut rng, batch * channels);

    let upstream = SignalTensor::from_values(batch, channels, 1, r.clone()).unwrap();
    let analytic = global_avg_pool_backward(x.shape(), &upstream).unwrap();

    let num = numeric_gradient(
        |v| {
            let xt = SignalTensor::from_values(batch, channels, length, v.to_vec()).unwrap();
            dot(global_avg_pool(&xt).unwrap().values(), &r)
        },
        &x_values,
        eps,
    );
    max_rel_error(analytic.values(), &num)
}

/// Dense layer: checks d/dx, d/dw, d/db.
pub fn check_dense(batch: usize, in_features: usize, out_features: usize, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = DenseSpec::<f64>::zeros(in_features, out_features);
    spec.weights = uniform(&mut rng, spec.weights.len(), 1.0);
    spec.bias = uniform(&mut rng, spec.bias.len(), 0.5);
    let x_values = uniform(&mut rng, batch * in_features, 1.0);
    let x = SignalTensor::from_values(batch, in_features, 1, x_values.clone()).unwrap();
    let r = projection(&mut rng, batch * out_features);

    let upstream = SignalTensor::from_values(batch, out_features, 1, r.clone()).unwrap();
    let analytic = dense_backward(&x, &spec, &upstream).unwrap();

    let objective = |x: &SignalTensor<f64>, spec: &DenseSpec<f64>| {
        dot(dense_forward(x, spec).unwrap().values(), &r)
    };
    let num_x = numeric_gradient(
        |v| {
            let xt = SignalTensor::from_values(batch, in_features, 1, v.to_vec()).unwrap();
            objective(&xt, &spec)
        },
        &x_values,
        eps,
    );
    let num_w = numeric_gradient(
        |v| {
            let mut s = spec.clone();
            s.weights = v.to_vec();
            objective(&x, &s)
        },
        &spec.weights,
        eps,
    );
    let num_b = numeric_gradient(
        |v| {
            let mut s = spec.clone();
            s.bias = v.to_vec();
            objective(&x, &s)
        },
        &spec.bias,
        eps,
    );

    max_rel_error(analytic.input.values(), &num_x)
        .max(max_rel_error(&analytic.weights, &num_w))
        .max(max_rel_error(&analytic.bias, &num_b))
}

/// Softmax cross-entropy: the loss itself is the scalar objective and the
/// returned `grad_logits` is the analytic gradient.
pub fn check_softmax_cross_entropy(classes: usize, label: usize, seed: u64, eps: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = uniform(&mut rng, classes, 3.0);
    let analytic = softmax_cross_entropy(&logits, label).unwrap().grad_logits;
    let num = numeric_gradient(
        |v| softmax_cross_entropy(v, label).unwrap().loss,
        &logits,
        eps,
    );
    max_rel_error(&analytic, &num)
}

/// One full basic block end to end: every parameter tensor and the input.
pub fn check_basic_block(
    batch: usize,
    in_channels: usize,
    out_channels: usize,
    stride: usize,
    length: usize,
    seed: u64,
    eps: f64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = BasicBlock::<f64>::init(in_channels, out_channels, stride, &mut rng);
    let x_values = uniform(&mut rng, batch * in_channels * length, 1.0);
    let x = SignalTensor::from_values(batch, in_channels, length, x_values.clone()).unwrap();

    let out_len = block.conv1.output_length(length).expect("output fits");
    let r = projection(&mut rng, batch * out_channels * out_len);

    // Forward mutates running stats; clone per evaluation.
    let objective = |block: &BasicBlock<f64>, x: &SignalTensor<f64>| {
        let mut b = block.clone();
        dot(b.forward_train(x.clone()).unwrap().0.values(), &r)
    };

    let mut fwd_block = block.clone();
    let (out, tape) = fwd_block.forward_train(x.clone()).unwrap();
    let upstream =
        SignalTensor::from_values(out.batch(), out.channels(), out.length(), r.clone()).unwrap();
    let mut grads = block.zeroed_clone();
    let d_x = block.backward(&tape, &upstream, &mut grads).unwrap();

    let mut worst = max_rel_error(
        d_x.values(),
        &numeric_gradient(
            |v| {
                let xt =
                    SignalTensor::from_values(batch, in_channels, length, v.to_vec()).unwrap();
                objective(&block, &xt)
            },
            &x_values,
            eps,
        ),
    );

    // Each parameter tensor, via the shared traversal.
    let analytic_slots: Vec<(String, Vec<f64>)> = grads
        .param_slots()
        .into_iter()
        .map(|slot| (slot.name, slot.values.to_vec()))
        .collect();
    for (slot_idx, (name, analytic_values)) in analytic_slots.iter().enumerate() {
        let current = block.param_slots()[slot_idx].values.to_vec();
        let num = numeric_gradient(
            |v| {
                let mut b = block.clone();
                *b.param_slots_mut()[slot_idx].values = v.to_vec();
                objective(&b, &x)
            },
            &current,
            eps,
        );
        let err = max_rel_error(analytic_values, &num);
        assert!(
            err.is_finite(),
            "non-finite gradient disagreement in block tensor {name}"
        );
        worst = worst.max(err);
    }
    worst
}

/// Sample a handful of trainable parameters of the whole model and check
/// the loss gradient against central differences.
///
/// A deep ReLU composition is only piecewise smooth: a probe step of `eps`
/// sometimes crosses an activation kink, where central differences measure
/// the average of two different linearizations instead of the gradient.
/// Sampled coordinates whose two one-sided differences disagree by more
/// than 0.1% (a kink signature; smooth curvature contributes only O(eps))
/// are resampled, so the check keeps full strength on smooth coordinates.
pub fn check_model_parameter_sample(
    class_count: usize,
    width_multiplier: f64,
    batch: usize,
    sample_count: usize,
    seed: u64,
    eps: f64,
) -> f64 {
    let model = build_epilnet::<f64>(class_count, width_multiplier, seed).expect("buildable");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);

    let x_values = uniform(&mut rng, batch * crate::model::INPUT_LENGTH, 1.0);
    let x = SignalTensor::from_values(batch, 1, crate::model::INPUT_LENGTH, x_values).unwrap();
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..class_count)).collect();

    let mean_loss = |model: &EpilNet<f64>| {
        let mut m = model.clone();
        let (logits, _) = m.forward_train(x.clone()).unwrap();
        let mut total = 0.0;
        for (b, &label) in labels.iter().enumerate() {
            let row: Vec<f64> = (0..class_count).map(|c| logits.at(b, c, 0)).collect();
            total += softmax_cross_entropy(&row, label).unwrap().loss;
        }
        total / batch as f64
    };

    // Analytic gradient for the same mean loss.
    let mut fwd = model.clone();
    let (logits, tape) = fwd.forward_train(x.clone()).unwrap();
    let mut d_logits = SignalTensor::zeros(batch, class_count, 1);
    for (b, &label) in labels.iter().enumerate() {
        let row: Vec<f64> = (0..class_count).map(|c| logits.at(b, c, 0)).collect();
        let sce = softmax_cross_entropy(&row, label).unwrap();
        for c in 0..class_count {
            *d_logits.at_mut(b, c, 0) = sce.grad_logits[c] / batch as f64;
        }
    }
    let mut grads = model.zeros_like();
    fwd.backward(&tape, &d_logits, &mut grads).unwrap();

    // Flatten trainable gradients in traversal order.
    let flat_grads: Vec<f64> = grads
        .tensor_slots()
        .into_iter()
        .filter(|s| s.kind == TensorKind::Param)
        .flat_map(|s| s.values.to_vec())
        .collect();
    let trainable_total = flat_grads.len();

    let center = mean_loss(&model);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < sample_count && attempts < sample_count * 20 {
        attempts += 1;
        let flat_idx = rng.random_range(0..trainable_total);
        let analytic = flat_grads[flat_idx];
        let plus = {
            let mut m = model.clone();
            perturb_trainable(&mut m, flat_idx, eps);
            mean_loss(&m)
        };
        let minus = {
            let mut m = model.clone();
            perturb_trainable(&mut m, flat_idx, -eps);
            mean_loss(&m)
        };
        let forward_slope = (plus - center) / eps;
        let backward_slope = (center - minus) / eps;
        let slope_scale = forward_slope.abs().max(backward_slope.abs()).max(REL_ERR_FLOOR);
        if (forward_slope - backward_slope).abs() / slope_scale > 1e-3 {
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(max_rel_error(&[analytic], &[numeric]));
        checked += 1;
    }
    assert!(
        checked == sample_count,
        "could not find {sample_count} kink-free coordinates in {attempts} attempts"
    );
    worst
}

fn perturb_trainable(model: &mut EpilNet<f64>, flat_idx: usize, delta: f64) {
    let mut offset = 0;
    for slot in model.tensor_slots_mut() {
        if slot.kind != TensorKind::Param {
            continue;
        }
        let n = slot.values.len();
        if flat_idx < offset + n {
            slot.values[flat_idx - offset] += delta;
            return;
        }
        offset += n;
    }
    panic!("trainable index {flat_idx} out of range");
}
