//! Central finite-difference verification of [`Network::backward`].

use rand_distr::{Distribution, StandardNormal};

use super::loss::{mse_grad, mse_loss, row_sum_squared_grad, row_sum_squared_loss};
use super::matrix::Matrix;
use super::network::{DropoutMasks, Layer, Mode, Network};
use crate::error::{Error, Result};
use crate::seeding::SeedKey;

pub const MAX_CHECK_PARAMS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckLoss {
    /// Mean squared error over all output elements.
    Mse,
    /// Squared error summed over columns, averaged over rows.
    RowSumSquared,
}

impl CheckLoss {
    fn value(self, pred: &Matrix, target: &Matrix) -> Result<f64> {
        match self {
            CheckLoss::Mse => mse_loss(pred.as_slice(), target.as_slice()),
            CheckLoss::RowSumSquared => row_sum_squared_loss(pred, target),
        }
    }

    fn grad(self, pred: &Matrix, target: &Matrix) -> Result<Matrix> {
        match self {
            CheckLoss::Mse => Matrix::from_vec(
                pred.rows(),
                pred.cols(),
                mse_grad(pred.as_slice(), target.as_slice())?,
            ),
            CheckLoss::RowSumSquared => row_sum_squared_grad(pred, target),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Re-runs with a jittered input when a ReLU kink is crossed.
    pub max_retries: usize,
    pub jitter: f64,
    /// Seeds the frozen dropout masks and the jitter.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            max_retries: 3,
            jitter: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Entries whose ±step perturbation flipped a ReLU input sign.
    pub kinks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Kinked entries found on the first attempt, as (tensor name, index).
    pub kinks_flagged: Vec<(String, usize)>,
    pub retries: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn relu_signature(net: &Network, x: &Matrix, mode: Mode<'_>) -> Result<Vec<bool>> {
    let cache = net.forward(x, mode)?;
    let mut sig = Vec::new();
    for (i, l) in net.layers().iter().enumerate() {
        if matches!(l, Layer::Relu) {
            let input = if i == 0 {
                x
            } else {
                cache.layer_output(i - 1).expect("evaluated")
            };
            sig.extend(input.as_slice().iter().map(|v| *v > 0.0));
        }
    }
    Ok(sig)
}

fn check_once(
    net: &Network,
    x: &Matrix,
    target: &Matrix,
    loss: CheckLoss,
    masks: &DropoutMasks,
    opts: &GradCheckOptions,
) -> Result<Vec<ParamCheck>> {
    let mode = Mode::Train(masks);
    let cache = net.forward(x, mode)?;
    let g = loss.grad(cache.output(), target)?;
    let analytic = net.backward(&cache, Some(&g), &[])?.grads;
    let analytic = analytic.slices();
    let names = net.param_names();

    let mut probe = net.clone();
    let mut out = Vec::with_capacity(names.len());
    for (k, name) in names.into_iter().enumerate() {
        let mut check = ParamCheck {
            name,
            max_rel_error: 0.0,
            worst_index: 0,
            kinks: Vec::new(),
        };
        for i in 0..analytic[k].len() {
            let original = probe.param_slices()[k][i];
            probe.param_slices_mut()[k][i] = original + opts.step;
            let plus = loss.value(probe.forward(x, mode)?.output(), target)?;
            let sig_plus = relu_signature(&probe, x, mode)?;
            probe.param_slices_mut()[k][i] = original - opts.step;
            let minus = loss.value(probe.forward(x, mode)?.output(), target)?;
            let sig_minus = relu_signature(&probe, x, mode)?;
            probe.param_slices_mut()[k][i] = original;

            if sig_plus != sig_minus {
                check.kinks.push(i);
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let rel = relative_error(analytic[k][i], numeric);
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_index = i;
            }
        }
        out.push(check);
    }
    Ok(out)
}

/// Compares analytic gradients with central differences on every parameter.
///
/// Dropout layers use one mask set sampled from `opts.seed` (or `masks`)
/// for every evaluation. When a perturbation crosses a ReLU kink the check is
/// repeated on a jittered copy of the input, up to `opts.max_retries` times.
pub fn gradient_check(
    net: &Network,
    batch: &Matrix,
    target: &Matrix,
    loss: CheckLoss,
    masks: Option<&DropoutMasks>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if net.param_count() > MAX_CHECK_PARAMS {
        return Err(Error::Argument(format!(
            "gradient check limited to {MAX_CHECK_PARAMS} parameters, network has {}",
            net.param_count()
        )));
    }
    let key = SeedKey::new(opts.seed).with_str("gradcheck");
    let frozen;
    let masks = match masks {
        Some(m) => m,
        None => {
            frozen = net.sample_masks(batch.rows(), &mut key.with_str("masks").rng());
            &frozen
        }
    };

    let mut x = batch.clone();
    let mut params = check_once(net, &x, target, loss, masks, opts)?;
    let kinks_flagged: Vec<(String, usize)> = params
        .iter()
        .flat_map(|p| p.kinks.iter().map(move |i| (p.name.clone(), *i)))
        .collect();
    let mut retries = 0;
    let mut jitter_rng = key.with_str("jitter").rng();
    while retries < opts.max_retries && params.iter().any(|p| !p.kinks.is_empty()) {
        retries += 1;
        x = batch.clone();
        for v in x.as_mut_slice() {
            let z: f64 = StandardNormal.sample(&mut jitter_rng);
            *v += opts.jitter * z;
        }
        params = check_once(net, &x, target, loss, masks, opts)?;
    }

    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        pass: max_rel_error <= opts.tolerance,
        params,
        max_rel_error,
        tolerance: opts.tolerance,
        kinks_flagged,
        retries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn linear_net_quadratic_loss_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Network::new(6);
        net.push_dense(3, &mut rng);
        net.push_dense(2, &mut rng);
        let x = batch(5, 6, 1);
        let y = batch(5, 2, 2);
        let r = gradient_check(&net, &x, &y, CheckLoss::Mse, None, &Default::default()).unwrap();
        assert!(r.pass);
        assert!(r.max_rel_error < 1e-7, "{}", r.max_rel_error);
        assert!(r.kinks_flagged.is_empty());
    }

    #[test]
    fn relu_kink_is_flagged_and_retried() {
        // Zero input and zero bias put every hidden pre-activation exactly on
        // the ReLU kink.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Network::new(3);
        let mut d = Dense::glorot(3, 4, &mut rng);
        d.bias = vec![0.0; 4];
        net.push(Layer::Dense(d)).unwrap();
        net.push_relu();
        net.push_dense(1, &mut rng);
        let x = Matrix::zeros(2, 3);
        let y = Matrix::filled(2, 1, 1.0);
        let r = gradient_check(&net, &x, &y, CheckLoss::Mse, None, &Default::default()).unwrap();
        assert!(r.kinks_flagged.iter().any(|(n, _)| n == "layer0.bias"));
        assert!(r.retries >= 1);
        assert!(r.pass, "{}", r.max_rel_error);
    }

    #[test]
    fn frozen_dropout_mask_makes_check_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Network::new(8);
        net.push_dense(10, &mut rng);
        net.push_relu();
        net.push_dropout(0.5).unwrap();
        net.push_dense(3, &mut rng);
        let x = batch(4, 8, 3);
        let y = batch(4, 3, 4);
        let r = gradient_check(
            &net,
            &x,
            &y,
            CheckLoss::RowSumSquared,
            None,
            &Default::default(),
        )
        .unwrap();
        assert!(r.pass, "{}", r.max_rel_error);
    }

    #[test]
    fn oversized_network_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Network::new(200);
        net.push_dense(60, &mut rng);
        let x = batch(1, 200, 1);
        let y = batch(1, 60, 1);
        assert!(gradient_check(&net, &x, &y, CheckLoss::Mse, None, &Default::default()).is_err());
    }
}
