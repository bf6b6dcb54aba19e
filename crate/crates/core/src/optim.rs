//! Plain SGD and an Adam-style optimizer over a growable parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sgd,
    AdamLike,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::AdamLike => "adam-like",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Algorithm::Sgd),
            "adam-like" | "adam" => Some(Algorithm::AdamLike),
            _ => None,
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            Algorithm::Sgd => 0.1,
            Algorithm::AdamLike => 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub steps: u64,
    pub batch_prompts: usize,
    pub rollout_n: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Sgd,
            learning_rate: Algorithm::Sgd.default_learning_rate(),
            steps: 100,
            batch_prompts: 32,
            rollout_n: 4,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be positive".into()));
        }
        if self.batch_prompts == 0 {
            return Err(Error::InvalidConfig("batch_prompts must be positive".into()));
        }
        if self.rollout_n == 0 {
            return Err(Error::InvalidConfig("rollout_n must be positive".into()));
        }
        Ok(())
    }
}

/// Optimizer state. Moment vectors grow with the parameter vector when a
/// tabular student adds contexts; new entries start at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    /// Number of updates applied so far (Adam bias correction).
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn new(algorithm: Algorithm, learning_rate: f64) -> Self {
        Optimizer {
            algorithm,
            learning_rate,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn from_config(cfg: &OptimizerConfig) -> Self {
        Optimizer::new(cfg.algorithm, cfg.learning_rate)
    }

    /// Descent step `θ ← θ − update(g)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if grad.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient of length {} for {} parameters",
                grad.len(),
                params.len()
            )));
        }
        let lr = self.learning_rate;
        match self.algorithm {
            Algorithm::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Algorithm::AdamLike => {
                self.m.resize(params.len(), 0.0);
                self.v.resize(params.len(), 0.0);
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powf(self.t as f64);
                let bc2 = 1.0 - ADAM_BETA2.powf(self.t as f64);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::new(Algorithm::Sgd, 0.5);
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[2.0, -4.0]).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut opt = Optimizer::new(Algorithm::AdamLike, 0.01);
        let mut p = vec![0.0, 0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.2, 0.0]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert!((p[1] - 0.01).abs() < 1e-9);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn moments_grow_with_params() {
        let mut opt = Optimizer::new(Algorithm::AdamLike, 0.01);
        let mut p = vec![0.0; 2];
        opt.step(&mut p, &[1.0, 1.0]).unwrap();
        p.extend([0.0, 0.0]);
        opt.step(&mut p, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(opt.m.len(), 4);
        assert!(opt.step(&mut p, &[1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let zero_lr = OptimizerConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(zero_lr.validate().is_ok());
        let bad = OptimizerConfig {
            learning_rate: f64::NAN,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let no_steps = OptimizerConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(no_steps.validate().is_err());
    }
}
