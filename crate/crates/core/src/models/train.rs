use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use super::arch::{build_autoencoder, build_head, build_mlp};
use super::log::{EpochLog, TrainLog};
use super::{AeSpec, DaeSpec, MlpSpec, ModelKind, NeuralModel};
use crate::error::{Error, Result};
use crate::features::{Sample, FEATURE_WIDTH};
use crate::nn::{
    mse_grad, mse_loss, row_sum_squared_grad, row_sum_squared_loss, DropoutMasks, Gradients,
    Matrix, Mode, Network, OptimizerConfig, OptimizerState,
};
use crate::seeding::SeedKey;

/// Column means beyond this magnitude suggest the scaler was not applied.
const STANDARDIZED_MEAN_LIMIT: f64 = 3.0;

pub fn feature_matrix(samples: &[Sample]) -> Matrix {
    let mut m = Matrix::zeros(samples.len(), FEATURE_WIDTH);
    for (i, s) in samples.iter().enumerate() {
        m.row_mut(i).copy_from_slice(s.features.values());
    }
    m
}

pub fn target_matrix(samples: &[Sample]) -> Matrix {
    Matrix::from_vec(samples.len(), 1, samples.iter().map(|s| s.target).collect())
        .expect("one column per sample")
}

fn warn_if_unstandardized(x: &Matrix, what: &str) {
    let n = x.rows() as f64;
    let mut sums = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (s, v) in sums.iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    let worst = sums.iter().map(|s| (s / n).abs()).fold(0.0, f64::max);
    if worst > STANDARDIZED_MEAN_LIMIT {
        log::warn!(
            "{what}: training features look unstandardized (largest |column mean| {worst:.3})"
        );
    }
}

/// Starts the scalar output at the mean training target so that early epochs
/// fit the variation rather than the offset.
fn init_output_bias(net: &mut Network, y: &Matrix) -> Result<()> {
    let mean = y.as_slice().iter().sum::<f64>() / y.rows().max(1) as f64;
    match net.output_layer_mut() {
        Some(d) if d.output_width() == 1 => {
            d.bias[0] = mean;
            Ok(())
        }
        _ => Err(Error::shape(
            "regression network must end in a 1-wide dense layer",
        )),
    }
}

fn check_train(samples: &[Sample], what: &str) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::data(format!("{what}: no training samples")));
    }
    Ok(())
}

fn check_finite(value: f64, what: &str, stage: &str, epoch: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Training(format!(
            "{what}: {stage} loss became non-finite in epoch {epoch}"
        )));
    }
    Ok(())
}

fn scaled(mut m: Matrix, w: f64) -> Matrix {
    if w != 1.0 {
        m.map_inplace(|v| v * w);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    /// Mean squared error against the target column.
    Nrr,
    /// Reconstruction of the input itself.
    Rec,
}

struct Fit<'a> {
    what: &'a str,
    stage: &'a str,
    objective: Objective,
    optimizer: OptimizerConfig,
    batch_size: usize,
    epochs: usize,
}

fn objective_loss(obj: Objective, pred: &Matrix, x: &Matrix, y: &Matrix) -> Result<f64> {
    match obj {
        Objective::Nrr => mse_loss(pred.as_slice(), y.as_slice()),
        Objective::Rec => row_sum_squared_loss(pred, x),
    }
}

/// Minibatch training of a single network; appends one log entry per epoch.
fn fit(
    net: &mut Network,
    fit: &Fit<'_>,
    (x, y): (&Matrix, &Matrix),
    val: Option<(&Matrix, &Matrix)>,
    key: SeedKey,
    log: &mut Vec<EpochLog>,
) -> Result<()> {
    let mut opt = OptimizerState::for_params(fit.optimizer, &net.param_slices());
    let mut shuffle_rng = key.with_str("shuffle").rng();
    let mut dropout_rng = key.with_str("dropout").rng();
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for epoch in 1..=fit.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for idx in order.chunks(fit.batch_size) {
            let xb = x.select_rows(idx);
            let yb = y.select_rows(idx);
            let masks = net.sample_masks(idx.len(), &mut dropout_rng);
            let cache = net.forward(&xb, Mode::Train(&masks))?;
            let pred = cache.output();
            let loss = objective_loss(fit.objective, pred, &xb, &yb)?;
            check_finite(loss, fit.what, fit.stage, epoch)?;
            let g = match fit.objective {
                Objective::Nrr => {
                    Matrix::from_vec(pred.rows(), 1, mse_grad(pred.as_slice(), yb.as_slice())?)?
                }
                Objective::Rec => row_sum_squared_grad(pred, &xb)?,
            };
            let grads = net.backward(&cache, Some(&g), &[])?.grads;
            opt.step(&mut net.param_slices_mut(), &grads.slices())?;
            weighted += loss * idx.len() as f64;
        }
        let train = weighted / x.rows() as f64;
        check_finite(train, fit.what, fit.stage, epoch)?;
        let val_loss = match val {
            Some((vx, vy)) if vx.rows() > 0 => {
                Some(objective_loss(fit.objective, &net.predict(vx)?, vx, vy)?)
            }
            _ => None,
        };
        let (train_nrr, train_rec, val_nrr, val_rec) = match fit.objective {
            Objective::Nrr => (Some(train), None, val_loss, None),
            Objective::Rec => (None, Some(train), None, val_loss),
        };
        log.push(EpochLog {
            stage: fit.stage.to_string(),
            epoch,
            train_nrr,
            train_rec,
            train_total: train,
            val_nrr,
            val_rec,
            val_total: val_loss,
        });
    }
    Ok(())
}

fn finish(started: Instant, seed: u64, epochs: Vec<EpochLog>) -> TrainLog {
    TrainLog {
        seed,
        epochs,
        wall_time: started.elapsed(),
    }
}

/// Trains the plain MLP on the NRR loss and returns the final-epoch model.
pub fn train_mlp(
    spec: &MlpSpec,
    train: &[Sample],
    validation: &[Sample],
    seed: u64,
) -> Result<(NeuralModel, TrainLog)> {
    spec.validate()?;
    check_train(train, "mlp")?;
    let started = Instant::now();
    let key = SeedKey::new(seed).with_str("mlp");
    let (x, y) = (feature_matrix(train), target_matrix(train));
    let (vx, vy) = (feature_matrix(validation), target_matrix(validation));
    warn_if_unstandardized(&x, "mlp");

    let mut net = build_mlp(
        FEATURE_WIDTH,
        &spec.hidden,
        spec.dropout,
        &mut key.with_str("init").rng(),
    )?;
    init_output_bias(&mut net, &y)?;
    let mut epochs = Vec::with_capacity(spec.epochs);
    let cfg = Fit {
        what: "mlp",
        stage: "mlp",
        objective: Objective::Nrr,
        optimizer: spec.optimizer,
        batch_size: spec.batch_size,
        epochs: spec.epochs,
    };
    fit(
        &mut net,
        &cfg,
        (&x, &y),
        Some((&vx, &vy)),
        key.with_str("fit"),
        &mut epochs,
    )?;
    let model = NeuralModel {
        kind: ModelKind::Mlp,
        body: net,
        head: None,
        tap: None,
    };
    Ok((model, finish(started, seed, epochs)))
}

/// Stage 1 trains the autoencoder on reconstruction; stage 2 trains a fresh
/// head on the bottleneck with every autoencoder parameter held fixed.
pub fn train_ae_two_stage(
    spec: &AeSpec,
    train: &[Sample],
    validation: &[Sample],
    seed: u64,
) -> Result<(NeuralModel, TrainLog)> {
    spec.validate()?;
    check_train(train, "ae")?;
    let started = Instant::now();
    let key = SeedKey::new(seed).with_str("ae");
    let (x, y) = (feature_matrix(train), target_matrix(train));
    let (vx, vy) = (feature_matrix(validation), target_matrix(validation));
    warn_if_unstandardized(&x, "ae");

    let mut init = key.with_str("init").rng();
    let ae = build_autoencoder(FEATURE_WIDTH, &spec.encoder, spec.dropout, &mut init)?;
    let mut body = ae.net;
    let tap = ae.bottleneck;
    let mut epochs = Vec::with_capacity(spec.ae_epochs + spec.head_epochs);
    let stage1 = Fit {
        what: "ae",
        stage: "ae",
        objective: Objective::Rec,
        optimizer: spec.optimizer,
        batch_size: spec.batch_size,
        epochs: spec.ae_epochs,
    };
    fit(
        &mut body,
        &stage1,
        (&x, &x),
        Some((&vx, &vx)),
        key.with_str("stage1"),
        &mut epochs,
    )?;

    // Eval mode: the frozen encoder runs without dropout.
    let z = body.predict_prefix(&x, tap + 1)?;
    let vz = if vx.rows() > 0 {
        body.predict_prefix(&vx, tap + 1)?
    } else {
        Matrix::zeros(0, z.cols())
    };
    let mut head = build_head(z.cols(), &spec.head_hidden, spec.dropout, &mut init)?;
    init_output_bias(&mut head, &y)?;
    let stage2 = Fit {
        what: "ae",
        stage: "head",
        objective: Objective::Nrr,
        optimizer: spec.optimizer,
        batch_size: spec.batch_size,
        epochs: spec.head_epochs,
    };
    fit(
        &mut head,
        &stage2,
        (&z, &y),
        Some((&vz, &vy)),
        key.with_str("stage2"),
        &mut epochs,
    )?;
    let model = NeuralModel {
        kind: ModelKind::Ae,
        body,
        head: Some(head),
        tap: Some(tap),
    };
    Ok((model, finish(started, seed, epochs)))
}

/// Losses and gradients of one dual-head step.
#[derive(Debug, Clone)]
pub struct DaeStep {
    pub nrr: f64,
    pub rec: f64,
    pub body: Gradients,
    pub head: Gradients,
}

/// Gradients of `w_nrr * L_nrr + w_rec * L_rec` for a body/head pair, with the
/// head attached to body layer `tap`. The returned losses are unweighted.
#[allow(clippy::too_many_arguments)]
pub fn dae_loss_and_grads(
    body: &Network,
    head: &Network,
    tap: usize,
    x: &Matrix,
    y: &Matrix,
    body_masks: &DropoutMasks,
    head_masks: &DropoutMasks,
    (w_nrr, w_rec): (f64, f64),
) -> Result<DaeStep> {
    let cb = body.forward(x, Mode::Train(body_masks))?;
    let z = cb
        .layer_output(tap)
        .ok_or_else(|| Error::shape(format!("tap {tap} outside the body")))?;
    let ch = head.forward(z, Mode::Train(head_masks))?;
    let pred = ch.output();
    let rec_out = cb.output();
    let nrr = mse_loss(pred.as_slice(), y.as_slice())?;
    let rec = row_sum_squared_loss(rec_out, x)?;
    let g_nrr = Matrix::from_vec(pred.rows(), 1, mse_grad(pred.as_slice(), y.as_slice())?)?;
    let hb = head.backward(&ch, Some(&scaled(g_nrr, w_nrr)), &[])?;
    let g_rec = scaled(row_sum_squared_grad(rec_out, x)?, w_rec);
    let bb = body.backward(&cb, Some(&g_rec), &[(tap, &hb.input_grad)])?;
    Ok(DaeStep {
        nrr,
        rec,
        body: bb.grads,
        head: hb.grads,
    })
}

/// Joint training of autoencoder and bottleneck head on `L_nrr + L_rec`.
pub fn train_dae(
    spec: &DaeSpec,
    train: &[Sample],
    validation: &[Sample],
    seed: u64,
) -> Result<(NeuralModel, TrainLog)> {
    spec.validate()?;
    check_train(train, "dae")?;
    let started = Instant::now();
    let key = SeedKey::new(seed).with_str("dae");
    let (x, y) = (feature_matrix(train), target_matrix(train));
    let (vx, vy) = (feature_matrix(validation), target_matrix(validation));
    warn_if_unstandardized(&x, "dae");

    let mut init = key.with_str("init").rng();
    let ae = build_autoencoder(FEATURE_WIDTH, &spec.encoder, spec.dropout, &mut init)?;
    let tap = ae.bottleneck;
    let mut head = build_head(
        ae.net.widths()[tap],
        &spec.head_hidden,
        spec.dropout,
        &mut init,
    )?;
    init_output_bias(&mut head, &y)?;
    let mut model = NeuralModel {
        kind: ModelKind::Dae,
        head: Some(head),
        body: ae.net,
        tap: Some(tap),
    };
    let shapes: Vec<usize> = {
        let head = model.head.as_ref().expect("built above");
        model
            .body
            .param_slices()
            .iter()
            .chain(&head.param_slices())
            .map(|p| p.len())
            .collect()
    };
    let mut opt = OptimizerState::new(spec.optimizer, &shapes);
    let mut shuffle_rng: ChaCha8Rng = key.with_str("shuffle").rng();
    let mut dropout_rng = key.with_str("dropout").rng();
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut epochs = Vec::with_capacity(spec.epochs);
    for epoch in 1..=spec.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut sum_nrr, mut sum_rec) = (0.0, 0.0);
        for idx in order.chunks(spec.batch_size) {
            let xb = x.select_rows(idx);
            let yb = y.select_rows(idx);
            let head = model.head.as_mut().expect("built above");
            let bm = model.body.sample_masks(idx.len(), &mut dropout_rng);
            let hm = head.sample_masks(idx.len(), &mut dropout_rng);
            let step = dae_loss_and_grads(&model.body, head, tap, &xb, &yb, &bm, &hm, (1.0, 1.0))?;
            check_finite(step.nrr + step.rec, "dae", "dae", epoch)?;
            let mut params = model.body.param_slices_mut();
            params.extend(head.param_slices_mut());
            let mut grads = step.body.slices();
            grads.extend(step.head.slices());
            opt.step(&mut params, &grads)?;
            sum_nrr += step.nrr * idx.len() as f64;
            sum_rec += step.rec * idx.len() as f64;
        }
        let n = x.rows() as f64;
        let (nrr, rec) = (sum_nrr / n, sum_rec / n);
        check_finite(nrr + rec, "dae", "dae", epoch)?;
        let (val_nrr, val_rec) = if vx.rows() > 0 {
            let pred = model.predict(&vx)?;
            let recon = model.body.predict(&vx)?;
            (
                Some(mse_loss(&pred, vy.as_slice())?),
                Some(row_sum_squared_loss(&recon, &vx)?),
            )
        } else {
            (None, None)
        };
        epochs.push(EpochLog {
            stage: "dae".into(),
            epoch,
            train_nrr: Some(nrr),
            train_rec: Some(rec),
            train_total: nrr + rec,
            val_nrr,
            val_rec,
            val_total: val_nrr.zip(val_rec).map(|(a, b)| a + b),
        });
    }
    Ok((model, finish(started, seed, epochs)))
}
