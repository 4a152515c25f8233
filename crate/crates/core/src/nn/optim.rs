use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Gradients, Network, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
        #[serde(default)]
        weight_decay: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Sgd { lr: 0.02, momentum: 0.9, weight_decay: 1e-4 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { lr, momentum, weight_decay } => {
                lr >= 0.0 && (0.0..1.0).contains(&momentum) && weight_decay >= 0.0
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps, weight_decay } => {
                lr >= 0.0
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && eps > 0.0
                    && weight_decay >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("optimizer hyperparameters out of range: {self:?}")))
        }
    }
}

/// Optimizer with per-parameter state, created lazily on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer { config, first: Vec::new(), second: Vec::new(), steps: 0 }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update and folds the batch statistics into the
    /// batchnorm running averages.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let mut params = net.trainable_mut();
        if params.len() != grads.tensors.len() {
            return Err(Error::ShapeMismatch { expected: vec![params.len()], got: vec![grads.tensors.len()] });
        }
        for ((_, p), g) in params.iter().zip(&grads.tensors) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch { expected: p.shape().to_vec(), got: g.shape().to_vec() });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|(_, p)| Tensor::zeros(p.shape())).collect();
            if matches!(self.config, OptimizerConfig::Adam { .. }) {
                self.second = self.first.clone();
            }
        }
        self.steps += 1;
        match self.config {
            OptimizerConfig::Sgd { lr, momentum, weight_decay } => {
                for (((_, p), g), v) in params.iter_mut().zip(&grads.tensors).zip(&mut self.first) {
                    for ((w, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                        *vi = momentum * *vi + gi + weight_decay * *w;
                        *w -= lr * *vi;
                    }
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps, weight_decay } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let iter = params.iter_mut().zip(&grads.tensors).zip(&mut self.first).zip(&mut self.second);
                for ((((_, p), g), m), v) in iter {
                    let (m, v) = (m.data_mut(), v.data_mut());
                    for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        let gi = gi + weight_decay * *w;
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        drop(params);
        net.apply_bn_stats(grads);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Network {
        let cfg = NetworkConfig { c_state: 1, c_action: 1, hidden_channels: 1, blocks: 1, layers_per_block: 1, value_channels: 1 };
        Network::new(cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    fn grads_for(net: &Network, value: f64) -> Gradients {
        Gradients {
            loss: 0.0,
            tensors: net.trainable().iter().map(|(_, t)| Tensor::filled(t.shape(), value)).collect(),
            bn_stats: Vec::new(),
            bn_count: 1,
        }
    }

    #[test]
    fn sgd_single_step() {
        let mut net = tiny();
        let before = net.value_fc.bias.data()[0];
        let g = grads_for(&net, 2.0);
        Optimizer::new(OptimizerConfig::Sgd { lr: 0.1, momentum: 0.9, weight_decay: 0.0 }).step(&mut net, &g).unwrap();
        assert!((net.value_fc.bias.data()[0] - (before - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_identity() {
        for config in [
            OptimizerConfig::Sgd { lr: 0.0, momentum: 0.9, weight_decay: 0.1 },
            OptimizerConfig::Adam { lr: 0.0, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 },
        ] {
            let mut net = tiny();
            let before = net.clone();
            let g = grads_for(&net, 1.5);
            Optimizer::new(config).step(&mut net, &g).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut net = tiny();
        let mut g = grads_for(&net, 1.0);
        g.tensors.pop();
        assert!(Optimizer::new(OptimizerConfig::default()).step(&mut net, &g).is_err());
    }

    #[test]
    fn config_serde() {
        let c: OptimizerConfig = serde_json::from_str(r#"{"kind":"adam","lr":0.001}"#).unwrap();
        assert!(matches!(c, OptimizerConfig::Adam { beta2, .. } if beta2 == 0.999));
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"kind":"sgd","lr":0.1,"nesterov":true}"#).is_err());
    }
}
