//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

/// Hyperparameters; the non-rate values follow the common framework
/// defaults (beta1 0.9, beta2 0.999, eps 1e-7).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-7 }
    }
}

/// Optimizer state: step counter plus first/second moment estimates, one
/// tensor per parameter.
pub struct AdamState<T> {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(cfg: AdamConfig, shapes: &[&[usize]]) -> Self {
        Self {
            cfg,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_params(cfg: AdamConfig, params: &[Tensor<T>]) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(cfg, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// One update over all parameters.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), (m, v)) in params.iter().zip(grads).zip(self.m.iter().zip(&self.v)) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "adam moment shape {:?} vs param {:?} / grad {:?}",
                    m.shape(),
                    p.shape(),
                    g.shape()
                )));
            }
            let _ = v;
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.cfg.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.cfg.beta2);
        let inv_corr1 = T::from_f64(1.0 / (1.0 - self.cfg.beta1.powi(t)));
        let inv_corr2 = T::from_f64(1.0 / (1.0 - self.cfg.beta2.powi(t)));
        let lr = T::from_f64(self.cfg.lr);
        let eps = T::from_f64(self.cfg.eps);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (pd, gd, md, vd) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = gd[i];
                md[i] = b1 * md[i] + one_m_b1 * gi;
                vd[i] = b2 * vd[i] + one_m_b2 * gi * gi;
                let m_hat = md[i] * inv_corr1;
                let v_hat = vd[i] * inv_corr2;
                pd[i] = pd[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = vec![Tensor::<f64>::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap()];
        let before = params[0].clone();
        let grads = vec![Tensor::<f64>::zeros(&[3])];
        let mut adam = AdamState::for_params(AdamConfig::new(0.01), &params);
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params[0], before);
    }

    #[test]
    fn first_step_magnitude_is_almost_lr() {
        // closed form: with constant gradient g, m_hat = g and v_hat = g^2,
        // so the update is lr * g / (|g| + eps)
        let lr = 0.01;
        for g in [3.0, -0.2, 1.0] {
            let mut params = vec![Tensor::<f64>::from_vec(&[1], vec![0.0]).unwrap()];
            let grads = vec![Tensor::<f64>::from_vec(&[1], vec![g]).unwrap()];
            let mut adam = AdamState::for_params(AdamConfig::new(lr), &params);
            adam.step(&mut params, &grads).unwrap();
            let update = -params[0].data()[0] * g.signum();
            let expected = lr * g.abs() / (g.abs() + 1e-7);
            assert!(
                (update - expected).abs() < 1e-15 && (update / lr - 1.0).abs() < 1e-6,
                "g = {g}: update {update} vs lr {lr}"
            );
        }
    }

    #[test]
    fn identical_inputs_give_identical_results() {
        let params0 = vec![Tensor::<f64>::from_vec(&[2], vec![0.3, -0.7]).unwrap()];
        let grads = vec![Tensor::<f64>::from_vec(&[2], vec![0.11, -0.05]).unwrap()];

        let mut pa = params0.clone();
        let mut sa = AdamState::for_params(AdamConfig::new(1e-3), &pa);
        let mut pb = params0.clone();
        let mut sb = AdamState::for_params(AdamConfig::new(1e-3), &pb);
        for _ in 0..5 {
            sa.step(&mut pa, &grads).unwrap();
            sb.step(&mut pb, &grads).unwrap();
        }
        assert_eq!(pa, pb);
        assert_eq!(sa.step_count(), sb.step_count());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::<f64>::zeros(&[2])];
        let grads = vec![Tensor::<f64>::zeros(&[3])];
        let mut adam = AdamState::for_params(AdamConfig::new(0.01), &params);
        assert!(adam.step(&mut params, &grads).is_err());
    }
}
