use serde::{Deserialize, Serialize};

use super::DenseNet;
use crate::error::{Error, Result};

/// Adam optimizer state over a flattened parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(param_count: usize, lr: f64) -> Result<Self> {
        Self::with_hyperparameters(param_count, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(
        param_count: usize,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate {lr}")));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::InvalidParameter(format!(
                "betas must lie in [0, 1), got {beta1}, {beta2}"
            )));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon {eps}")));
        }
        Ok(AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub(crate) fn apply(&mut self, net: &mut DenseNet, grad: &[f64]) -> Result<()> {
        if grad.len() != self.m.len() || net.param_count() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got gradient of {} for a net of {}",
                self.m.len(),
                grad.len(),
                net.param_count()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if net.params_mut().any(|p| !p.is_finite()) {
            return Err(Error::numeric(
                Some(self.step as usize),
                "parameters became non-finite after the update",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(AdamState::new(3, -1.0).is_err());
        assert!(AdamState::new(3, f64::NAN).is_err());
        assert!(AdamState::with_hyperparameters(3, 0.1, 1.0, 0.999, 1e-8).is_err());
        assert!(AdamState::with_hyperparameters(3, 0.1, 0.9, 0.999, 0.0).is_err());
        assert!(AdamState::new(3, 0.0).is_ok());
    }
}
