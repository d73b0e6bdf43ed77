//! Training losses: the masked Gaussian negative log-likelihood and the
//! least-squares benchmark loss.

use crate::error::{Error, Result};
use crate::grid::{OutdoorMask, PredictedField, SignalField};
use crate::nn::{Scalar, Tape, Tensor, Var};

/// Masked Gaussian loss of one prediction:
/// `(1 / 2N) * sum_outdoor[ (mu - y)^2 / var + ln var ]`,
/// where `N` is the batch size the sample belongs to. Indoor cells are
/// excluded entirely; the all-indoor case yields zero.
pub fn loss_eq1(pred: &PredictedField, truth: &SignalField, mask: &OutdoorMask, batch_n: usize) -> Result<f64> {
    if pred.grid() != truth.grid() || truth.grid() != mask.grid() {
        return Err(Error::ShapeMismatch("prediction, truth and mask grids differ".into()));
    }
    if batch_n == 0 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    let var = pred
        .variance()
        .ok_or_else(|| Error::Contract("loss_eq1 needs a variance prediction".into()))?;
    if var.iter().any(|v| *v <= 0.0) {
        return Err(Error::Contract("loss_eq1 needs strictly positive variances".into()));
    }
    let mut acc = 0.0;
    for ((m, y), (mu, v)) in mask
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .zip(pred.mean().iter().zip(var))
    {
        if *m {
            let delta = mu - y;
            acc += delta * delta / v + v.ln();
        }
    }
    Ok(acc / (2.0 * batch_n as f64))
}

/// Least-squares benchmark loss: `(1 / N) * sum_outdoor (mu - y)^2`.
pub fn loss_ls(pred_mean: &[f64], truth: &SignalField, mask: &OutdoorMask, batch_n: usize) -> Result<f64> {
    if truth.grid() != mask.grid() || pred_mean.len() != truth.as_slice().len() {
        return Err(Error::ShapeMismatch("prediction, truth and mask shapes differ".into()));
    }
    if batch_n == 0 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    let mut acc = 0.0;
    for ((m, y), mu) in mask.as_slice().iter().zip(truth.as_slice()).zip(pred_mean) {
        if *m {
            let delta = mu - y;
            acc += delta * delta;
        }
    }
    Ok(acc / batch_n as f64)
}

/// Constants shared by the tape losses: the mask as 0/1 values and the
/// truth with indoor sentinels replaced by zero (they are annihilated by
/// the mask before any arithmetic can see them).
pub(crate) fn masked_target<T: Scalar>(truth: &SignalField, mask: &OutdoorMask) -> (Tensor<T>, Tensor<T>) {
    let len = truth.as_slice().len();
    let mut z = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    for (v, m) in truth.as_slice().iter().zip(mask.as_slice()) {
        z.push(if *m { T::one() } else { T::zero() });
        y.push(if *m { T::from_f64(*v) } else { T::zero() });
    }
    (
        Tensor::from_vec(&[len], z).expect("sized above"),
        Tensor::from_vec(&[len], y).expect("sized above"),
    )
}

/// Tape version of [`loss_eq1`] over flat `[n*n]` mean/variance nodes.
pub(crate) fn loss_eq1_tape<T: Scalar>(
    tape: &mut Tape<T>,
    mean_dbm: Var,
    var_db2: Var,
    truth: &SignalField,
    mask: &OutdoorMask,
    batch_n: usize,
) -> Result<Var> {
    let (z, y) = masked_target::<T>(truth, mask);
    let zc = tape.constant(z);
    let yc = tape.constant(y);
    let delta = tape.sub(mean_dbm, yc)?;
    let sq = tape.mul(delta, delta)?;
    let masked_sq = tape.mul(sq, zc)?;
    let quad = tape.div(masked_sq, var_db2)?;
    let logv = tape.ln(var_db2);
    let masked_log = tape.mul(logv, zc)?;
    let quad_sum = tape.sum_all(quad);
    let log_sum = tape.sum_all(masked_log);
    let total = tape.add(quad_sum, log_sum)?;
    Ok(tape.scale(total, 1.0 / (2.0 * batch_n as f64)))
}

/// Tape version of [`loss_ls`].
pub(crate) fn loss_ls_tape<T: Scalar>(
    tape: &mut Tape<T>,
    mean_dbm: Var,
    truth: &SignalField,
    mask: &OutdoorMask,
    batch_n: usize,
) -> Result<Var> {
    let (z, y) = masked_target::<T>(truth, mask);
    let zc = tape.constant(z);
    let yc = tape.constant(y);
    let delta = tape.sub(mean_dbm, yc)?;
    let sq = tape.mul(delta, delta)?;
    let masked = tape.mul(sq, zc)?;
    let total = tape.sum_all(masked);
    Ok(tape.scale(total, 1.0 / batch_n as f64))
}
