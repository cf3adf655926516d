//! First-order optimizers for the outer loop.

use metarkhs_core::net::ParamVector;

use crate::config::OptimizerKind;

/// SGD or Adam (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, dim: usize) -> Self {
        Self { kind, lr, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// Set the learning rate for subsequent steps (schedules).
    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, theta: &mut ParamVector, grad: &[f64]) {
        assert_eq!(theta.len(), grad.len(), "optimizer dim mismatch");
        match self.kind {
            OptimizerKind::Sgd => theta.add_scaled(-self.lr, grad),
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - BETA1.powi(self.t as i32);
                let bc2 = 1.0 - BETA2.powi(self.t as i32);
                let params = theta.as_mut_slice();
                for i in 0..grad.len() {
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_is_plain_descent() {
        let mut theta = ParamVector::from_vec(vec![1.0, -2.0]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 2);
        opt.step(&mut theta, &[2.0, -4.0]);
        assert_eq!(theta.as_slice(), &[0.8, -1.6]);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // minimize ½(θ − 3)²
        let mut theta = ParamVector::from_vec(vec![0.0]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.05, 1);
        for _ in 0..2000 {
            let g = theta.as_slice()[0] - 3.0;
            opt.step(&mut theta, &[g]);
        }
        assert!((theta.as_slice()[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // Bias correction makes the very first Adam step ≈ lr·sign(g).
        let mut theta = ParamVector::from_vec(vec![0.0]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, 1);
        opt.step(&mut theta, &[123.0]);
        assert!((theta.as_slice()[0] + 0.01).abs() < 1e-6);
    }
}
