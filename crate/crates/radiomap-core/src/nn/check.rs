//! Finite-difference gradient checking utilities.
//!
//! The checks are intentionally independent of the tape: they re-evaluate a
//! closure that maps parameter tensors to a scalar loss.

use crate::nn::tensor::Tensor;

/// Perturbation used by the gradient checks.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Central finite differences of `f` with respect to every element of
/// every parameter tensor.
pub fn numerical_gradients<F>(params: &[Tensor<f64>], mut f: F, eps: f64) -> Vec<Tensor<f64>>
where
    F: FnMut(&[Tensor<f64>]) -> f64,
{
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut g = Tensor::zeros(params[pi].shape());
        for i in 0..params[pi].len() {
            let orig = work[pi].data()[i];
            work[pi].data_mut()[i] = orig + eps;
            let plus = f(&work);
            work[pi].data_mut()[i] = orig - eps;
            let minus = f(&work);
            work[pi].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
        grads.push(g);
    }
    grads
}

/// Largest relative error between analytic and numeric gradients, with the
/// denominator floored so near-zero pairs compare absolutely.
pub fn max_relative_error(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (av, nv) in a.data().iter().zip(n.data()) {
            let denom = av.abs().max(nv.abs()).max(1e-6);
            worst = worst.max((av - nv).abs() / denom);
        }
    }
    worst
}
