//! Central-difference gradient verification for every layer kernel.
//!
//! Each check builds a scalar loss — a fixed random weighting of the layer
//! output — evaluates the analytic backward pass once, then perturbs every
//! coordinate of one argument by ±`FD_STEP` and compares slopes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Mask, Tensor};

use super::{
    batchnorm_backward, batchnorm_forward, conv1d_backward, conv1d_forward, dense_backward,
    dense_forward, dropout, dropout_backward, kmax_pool, kmax_pool_backward, relu, relu_backward,
    softmax_cross_entropy, softmax_cross_entropy_backward, ConvLayerParams, DropoutPlan, Mode,
};

/// Perturbation used for the central differences.
pub const FD_STEP: f64 = 1e-5;
/// Maximum relative error accepted from any coordinate of any layer.
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// `|analytic − numeric|` scaled by the larger magnitude, floored at 1e−2 so
/// coordinates whose true gradient is near zero are judged on absolute error
/// instead of amplified rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

/// Outcome of checking one argument of one layer.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub label: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

/// Compares `analytic` against central differences of `loss` around `point`,
/// coordinate by coordinate, and returns the worst relative error.
pub fn finite_difference_check<F>(point: &Tensor, analytic: &Tensor, mut loss: F) -> f64
where
    F: FnMut(&Tensor) -> f64,
{
    assert_eq!(
        point.shape(),
        analytic.shape(),
        "analytic gradient shape must match the checked argument"
    );
    let mut x = point.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + FD_STEP;
        let up = loss(&x);
        x.data_mut()[i] = orig - FD_STEP;
        let down = loss(&x);
        x.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    worst
}

fn random_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn weighted(out: &Tensor, weights: &Tensor) -> f64 {
    out.data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b)
        .sum()
}

fn conv_reports(window: usize, rng: &mut ChaCha8Rng) -> Vec<GradCheckReport> {
    let (batch, c_in, c_out, len) = (2, 3, 2, window + 4);
    let input = random_tensor(&[batch, c_in, len], rng);
    let mut params = ConvLayerParams::zeros(c_out, c_in, window);
    params.kernel = random_tensor(&[c_out, c_in, window], rng);
    params.bias = random_tensor(&[c_out], rng);
    let mask = Mask::from_lengths(&[len, len / 2], len);
    let weights = random_tensor(&[batch, c_out, len], rng);

    let grads = conv1d_backward(&input, &params, &mask, &weights).unwrap();
    let arg = |suffix: &str| format!("conv1d(w={window})/{suffix}");

    let e_in = finite_difference_check(&input, &grads.input, |x| {
        weighted(&conv1d_forward(x, &params, &mask).unwrap(), &weights)
    });
    let e_k = finite_difference_check(&params.kernel, &grads.kernel, |k| {
        let mut p = params.clone();
        p.kernel = k.clone();
        weighted(&conv1d_forward(&input, &p, &mask).unwrap(), &weights)
    });
    let e_b = finite_difference_check(&params.bias, &grads.bias, |b| {
        let mut p = params.clone();
        p.bias = b.clone();
        weighted(&conv1d_forward(&input, &p, &mask).unwrap(), &weights)
    });
    vec![
        GradCheckReport { label: arg("input"), coordinates: input.len(), max_rel_error: e_in },
        GradCheckReport { label: arg("kernel"), coordinates: params.kernel.len(), max_rel_error: e_k },
        GradCheckReport { label: arg("bias"), coordinates: params.bias.len(), max_rel_error: e_b },
    ]
}

fn batchnorm_reports(rng: &mut ChaCha8Rng) -> Vec<GradCheckReport> {
    let (batch, channels, len) = (2, 3, 7);
    let input = random_tensor(&[batch, channels, len], rng);
    let mut params = ConvLayerParams::zeros(channels, 1, 1);
    params.gamma = random_tensor(&[channels], rng);
    params.beta = random_tensor(&[channels], rng);
    let mask = Mask::from_lengths(&[len, 4], len);
    let weights = random_tensor(&[batch, channels, len], rng);

    let (_, cache) = batchnorm_forward(&input, &params, &mask, Mode::Train).unwrap();
    let cache = cache.unwrap();
    let grads = batchnorm_backward(&input, &params, &mask, Some(&cache), &weights).unwrap();

    // Each loss evaluation recomputes batch statistics from its perturbed
    // argument, so the check differentiates through the statistics
    // themselves.
    let e_in = finite_difference_check(&input, &grads.input, |x| {
        let (out, _) = batchnorm_forward(x, &params, &mask, Mode::Train).unwrap();
        weighted(&out, &weights)
    });
    let e_g = finite_difference_check(&params.gamma, &grads.gamma, |g| {
        let mut p = params.clone();
        p.gamma = g.clone();
        let (out, _) = batchnorm_forward(&input, &p, &mask, Mode::Train).unwrap();
        weighted(&out, &weights)
    });
    let e_b = finite_difference_check(&params.beta, &grads.beta, |b| {
        let mut p = params.clone();
        p.beta = b.clone();
        let (out, _) = batchnorm_forward(&input, &p, &mask, Mode::Train).unwrap();
        weighted(&out, &weights)
    });
    vec![
        GradCheckReport { label: "batchnorm/input".into(), coordinates: input.len(), max_rel_error: e_in },
        GradCheckReport { label: "batchnorm/gamma".into(), coordinates: params.gamma.len(), max_rel_error: e_g },
        GradCheckReport { label: "batchnorm/beta".into(), coordinates: params.beta.len(), max_rel_error: e_b },
    ]
}

fn relu_report(rng: &mut ChaCha8Rng) -> GradCheckReport {
    // Values are kept away from the kink at 0 so finite differences see a
    // locally linear function.
    let shape = [2usize, 3, 5];
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len)
        .map(|_| {
            let mag = rng.random_range(0.1..1.0);
            if rng.random::<bool>() { mag } else { -mag }
        })
        .collect();
    let input = Tensor::from_vec(&shape, data);
    let weights = random_tensor(&shape, rng);
    let analytic = relu_backward(&input, &weights);
    let err = finite_difference_check(&input, &analytic, |x| weighted(&relu(x), &weights));
    GradCheckReport { label: "relu/input".into(), coordinates: input.len(), max_rel_error: err }
}

fn kmax_report(rng: &mut ChaCha8Rng) -> GradCheckReport {
    // Well-separated values (gap 0.3 ≫ FD_STEP) so no rank flips during
    // perturbation.
    let (batch, channels, len, k) = (2, 2, 11, 4);
    let mut values: Vec<f64> = (0..batch * channels * len)
        .map(|i| i as f64 * 0.3 - 6.0)
        .collect();
    values.shuffle(rng);
    let input = Tensor::from_vec(&[batch, channels, len], values);
    let mask = Mask::from_lengths(&[len, 6], len);
    let weights = random_tensor(&[batch, channels, k], rng);

    let (_, cache) = kmax_pool(&input, &mask, k).unwrap();
    let analytic = kmax_pool_backward(&cache, &weights).unwrap();
    let err = finite_difference_check(&input, &analytic, |x| {
        let (out, _) = kmax_pool(x, &mask, k).unwrap();
        weighted(&out, &weights)
    });
    GradCheckReport { label: "kmax_pool/input".into(), coordinates: input.len(), max_rel_error: err }
}

fn dense_reports(rng: &mut ChaCha8Rng) -> Vec<GradCheckReport> {
    let (batch, n_in, n_out) = (2, 5, 4);
    let input = random_tensor(&[batch, n_in], rng);
    let weight = random_tensor(&[n_in, n_out], rng);
    let bias = random_tensor(&[n_out], rng);
    let weights = random_tensor(&[batch, n_out], rng);

    let grads = dense_backward(&input, &weight, &bias, &weights).unwrap();
    let e_in = finite_difference_check(&input, &grads.input, |x| {
        weighted(&dense_forward(x, &weight, &bias).unwrap(), &weights)
    });
    let e_w = finite_difference_check(&weight, &grads.weight, |w| {
        weighted(&dense_forward(&input, w, &bias).unwrap(), &weights)
    });
    let e_b = finite_difference_check(&bias, &grads.bias, |b| {
        weighted(&dense_forward(&input, &weight, b).unwrap(), &weights)
    });
    vec![
        GradCheckReport { label: "dense/input".into(), coordinates: input.len(), max_rel_error: e_in },
        GradCheckReport { label: "dense/weight".into(), coordinates: weight.len(), max_rel_error: e_w },
        GradCheckReport { label: "dense/bias".into(), coordinates: bias.len(), max_rel_error: e_b },
    ]
}

fn dropout_report(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let shape = [2usize, 6];
    let input = random_tensor(&shape, rng);
    let plan = DropoutPlan::sample(input.len(), 0.3, rng).unwrap();
    let weights = random_tensor(&shape, rng);
    let analytic = dropout_backward(&plan, &weights).unwrap();
    let err = finite_difference_check(&input, &analytic, |x| {
        weighted(&dropout(x, &plan).unwrap(), &weights)
    });
    GradCheckReport { label: "dropout/input".into(), coordinates: input.len(), max_rel_error: err }
}

fn softmax_report(rng: &mut ChaCha8Rng) -> GradCheckReport {
    let (batch, classes) = (3, 5);
    let logits = random_tensor(&[batch, classes], rng);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let (probs, _) = softmax_cross_entropy(&logits, &labels).unwrap();
    let analytic = softmax_cross_entropy_backward(&probs, &labels);
    let err = finite_difference_check(&logits, &analytic, |x| {
        softmax_cross_entropy(x, &labels).unwrap().1
    });
    GradCheckReport {
        label: "softmax_cross_entropy/logits".into(),
        coordinates: logits.len(),
        max_rel_error: err,
    }
}

/// Runs the finite-difference check on every layer kernel (both convolution
/// window sizes, masked batchnorm in train mode, relu, k-max pooling, dense,
/// dropout, fused softmax cross-entropy) with randomized inputs and masks.
pub fn check_layer_gradients(seed: u64) -> Vec<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    reports.extend(conv_reports(6, &mut rng));
    reports.extend(conv_reports(10, &mut rng));
    reports.extend(batchnorm_reports(&mut rng));
    reports.push(relu_report(&mut rng));
    reports.push(kmax_report(&mut rng));
    reports.extend(dense_reports(&mut rng));
    reports.push(dropout_report(&mut rng));
    reports.push(softmax_report(&mut rng));
    reports
}
