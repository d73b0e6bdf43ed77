//! Training loop and the trained model handle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, HeightMap, MeasurementSet, OutdoorMask, PredictedField, SignalField};
use crate::nn::ops::softplus_scalar;
use crate::nn::{AdamConfig, AdamState, Scalar, Tape, Tensor, Var};
use crate::predictor::input::build_input;
use crate::predictor::loss::{loss_eq1_tape, loss_ls_tape};
use crate::predictor::unet::UNet;
use crate::predictor::{NetConfig, Normalization, TrainConfig, Variant};
use crate::seeds::derive_seed;

/// One training example: measurements plus the full ground truth.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub measurements: MeasurementSet,
    pub heights: HeightMap,
    pub field: SignalField,
    pub mask: OutdoorMask,
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// A trained (or freshly initialized) predictor.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub grid: Grid,
    pub cfg: NetConfig,
    pub norm: Normalization,
    pub mean_net: UNet<T>,
    pub var_net: Option<UNet<T>>,
}

/// Gradient accumulation runs over this many fixed chunks regardless of
/// the thread count, so training trajectories are bit-reproducible on any
/// machine (per precision).
const GRAD_CHUNKS: usize = 8;

impl<T: Scalar> Model<T> {
    /// Initialize a model. The mean network's seed stream is independent of
    /// whether a variance network exists, so `proposed` and `ls_only` share
    /// identical mean initializations for the same seed.
    pub fn init(grid: Grid, cfg: NetConfig, norm: Normalization, seed: u64) -> Result<Self> {
        norm.validate()?;
        let spec = cfg.plan_for(&grid)?;
        let mean_net = UNet::init(spec, derive_seed(seed, "init_mean", &[]));
        let var_net = cfg
            .variant
            .predicts_variance()
            .then(|| UNet::init(spec, derive_seed(seed, "init_var", &[])));
        Ok(Self { grid, cfg, norm, mean_net, var_net })
    }

    pub fn parameter_count(&self) -> usize {
        self.mean_net.parameter_count()
            + self.var_net.as_ref().map_or(0, UNet::parameter_count)
    }

    /// Predict the field for one measurement set. Pure function of the
    /// parameters and inputs.
    pub fn predict(&self, meas: &MeasurementSet, heights: &HeightMap) -> Result<PredictedField> {
        if heights.grid() != &self.grid {
            return Err(Error::Config(format!(
                "prediction grid has {} cells/side, model was built for {}",
                heights.grid().cells_per_side(),
                self.grid.cells_per_side()
            )));
        }
        let input64 = build_input(meas, heights, &self.grid, &self.norm, self.cfg.variant)?;
        let input = Tensor::<T>::from_f64_slice(input64.shape(), &input64.to_f64_vec())?;

        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let (mean_raw, _) = self.mean_net.forward_on(&mut tape, x, false)?;
        let mean: Vec<f64> = tape
            .value(mean_raw)
            .data()
            .iter()
            .map(|v| self.norm.denormalize_signal(v.as_f64()))
            .collect();

        let variance = match &self.var_net {
            None => None,
            Some(vnet) => {
                let mut vtape = Tape::new();
                let vx = vtape.constant(input);
                let (var_raw, _) = vnet.forward_on(&mut vtape, vx, false)?;
                Some(
                    vtape
                        .value(var_raw)
                        .data()
                        .iter()
                        .map(|v| softplus_scalar(v.as_f64()) + self.cfg.var_floor)
                        .collect(),
                )
            }
        };
        PredictedField::new(self.grid, mean, variance)
    }

    fn all_params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut refs: Vec<&mut Tensor<T>> = self.mean_net.tensors_mut().iter_mut().collect();
        if let Some(v) = &mut self.var_net {
            refs.extend(v.tensors_mut().iter_mut());
        }
        refs
    }

    fn all_params(&self) -> Vec<Tensor<T>> {
        let mut out = self.mean_net.tensors().to_vec();
        if let Some(v) = &self.var_net {
            out.extend_from_slice(v.tensors());
        }
        out
    }
}

/// Forward/backward pass for one sample; returns the loss contribution and
/// the gradients over all trainable tensors (mean net, then variance net).
fn sample_pass<T: Scalar>(
    model: &Model<T>,
    input: &Tensor<T>,
    sample: &TrainSample,
    batch_n: usize,
) -> Result<(f64, Vec<Tensor<T>>)> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let (mean_raw, mean_vars) = model.mean_net.forward_on(&mut tape, x, true)?;
    let mean_dbm = tape.affine(mean_raw, model.norm.signal_scale(), model.norm.signal_mid());

    let (loss, vars): (Var, Vec<Var>) = match &model.var_net {
        None => {
            let l = loss_ls_tape(&mut tape, mean_dbm, &sample.field, &sample.mask, batch_n)?;
            (l, mean_vars)
        }
        Some(vnet) => {
            let (var_raw, var_vars) = vnet.forward_on(&mut tape, x, true)?;
            let sp = tape.softplus(var_raw);
            let var = tape.affine(sp, 1.0, model.cfg.var_floor);
            let l = loss_eq1_tape(&mut tape, mean_dbm, var, &sample.field, &sample.mask, batch_n)?;
            let mut all = mean_vars;
            all.extend(var_vars);
            (l, all)
        }
    };
    let loss_val = tape.value(loss).data()[0].as_f64();
    let grads = tape.gradients(loss, &vars)?;
    Ok((loss_val, grads))
}

/// Mini-batch Adam over the configured loss. Deterministic per seed: the
/// shuffle order is seeded and gradient reduction runs over fixed chunks in
/// index order.
pub fn train<T: Scalar>(
    dataset: &[TrainSample],
    net_cfg: &NetConfig,
    train_cfg: &TrainConfig,
    norm: &Normalization,
) -> Result<(Model<T>, TrainReport)> {
    train_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("training dataset is empty".into()));
    }
    let grid = *dataset[0].heights.grid();
    for (i, s) in dataset.iter().enumerate() {
        if s.heights.grid() != &grid || s.field.grid() != &grid || s.mask.grid() != &grid {
            return Err(Error::ShapeMismatch(format!("sample {i} grid differs from sample 0")));
        }
    }

    let mut model = Model::<T>::init(grid, net_cfg.clone(), *norm, train_cfg.seed)?;

    // rasterize and normalize every sample once
    let inputs: Vec<Tensor<T>> = dataset
        .iter()
        .map(|s| {
            let raw = build_input(&s.measurements, &s.heights, &grid, norm, net_cfg.variant)?;
            Tensor::<T>::from_f64_slice(raw.shape(), &raw.to_f64_vec())
        })
        .collect::<Result<_>>()?;

    let params0 = model.all_params();
    let mut adam = AdamState::for_params(AdamConfig::new(train_cfg.lr), &params0);
    drop(params0);

    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..train_cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(train_cfg.seed, "shuffle", &[epoch as u64]));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, batch) in order.chunks(train_cfg.batch).enumerate() {
            let batch_n = batch.len();
            let chunk_len = batch_n.div_ceil(GRAD_CHUNKS);
            let chunks: Vec<&[usize]> = batch.chunks(chunk_len).collect();
            let partials: Vec<Result<(f64, Option<Vec<Tensor<T>>>)>> = chunks
                .par_iter()
                .map(|chunk| {
                    let mut loss_sum = 0.0;
                    let mut grad_sum: Option<Vec<Tensor<T>>> = None;
                    for &idx in *chunk {
                        let (loss, grads) =
                            sample_pass(&model, &inputs[idx], &dataset[idx], batch_n)?;
                        loss_sum += loss;
                        match &mut grad_sum {
                            None => grad_sum = Some(grads),
                            Some(acc) => {
                                for (a, g) in acc.iter_mut().zip(&grads) {
                                    a.add_assign(g)?;
                                }
                            }
                        }
                    }
                    Ok((loss_sum, grad_sum))
                })
                .collect();

            let mut batch_loss = 0.0;
            let mut total_grads: Option<Vec<Tensor<T>>> = None;
            for partial in partials {
                let (loss_sum, grad_sum) = partial?;
                batch_loss += loss_sum;
                if let Some(gs) = grad_sum {
                    match &mut total_grads {
                        None => total_grads = Some(gs),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&gs) {
                                a.add_assign(g)?;
                            }
                        }
                    }
                }
            }
            let grads = total_grads.expect("batch is nonempty");

            if !batch_loss.is_finite() {
                let norm_sq: f64 = model.all_params().iter().map(Tensor::squared_norm).sum();
                return Err(Error::Numerical(format!(
                    "non-finite loss {batch_loss} in epoch {epoch} batch {batch_idx}; \
                     parameter norm {:.3e}",
                    norm_sq.sqrt()
                )));
            }

            let mut params = model.all_params_mut();
            let mut owned: Vec<Tensor<T>> = params.iter().map(|p| (**p).clone()).collect();
            adam.step(&mut owned, &grads)?;
            for (slot, value) in params.iter_mut().zip(owned) {
                **slot = value;
            }

            epoch_loss += batch_loss;
            batches += 1;
        }
        report.epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok((model, report))
}
