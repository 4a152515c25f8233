use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{ActionTensorSpec, StateTensorSpec};
use crate::error::{Error, Result};

use super::layers::{self, BatchNorm2d, BnCache, BnStats, Conv2d, ConvCache, Linear};
use super::loss::{loss_and_grad, TrainingExample};
use super::Tensor;

/// Layer graph identifier written into checkpoint metadata.
pub const ARCHITECTURE: &str = "res-conv-conv-logit-pool/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub c_state: usize,
    pub c_action: usize,
    pub hidden_channels: usize,
    pub blocks: usize,
    pub layers_per_block: usize,
    pub value_channels: usize,
}

impl NetworkConfig {
    /// Hidden width `2 * c_state`, two blocks of two layers, 4 value channels.
    pub fn new(c_state: usize, c_action: usize) -> Self {
        NetworkConfig { c_state, c_action, hidden_channels: 2 * c_state, blocks: 2, layers_per_block: 2, value_channels: 4 }
    }

    pub fn for_specs(state: &StateTensorSpec, action: &ActionTensorSpec) -> Self {
        Self::new(state.num_channels(), action.num_channels())
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("c_state", self.c_state),
            ("c_action", self.c_action),
            ("hidden_channels", self.hidden_channels),
            ("blocks", self.blocks),
            ("layers_per_block", self.layers_per_block),
            ("value_channels", self.value_channels),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("network {name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in every batchnorm.
    Train,
    /// Running statistics in every batchnorm.
    Eval,
}

/// Gradient of the mean batch loss for every trainable tensor, in
/// [`Network::trainable`] order, plus the batchnorm statistics observed.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub tensors: Vec<Tensor>,
    pub bn_stats: Vec<BnStats>,
    /// Elements per channel that fed each batchnorm (`N * H * W`).
    pub bn_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    pub stem: ConvBn,
    pub blocks: Vec<Vec<ConvBn>>,
    pub policy_hidden: Conv2d,
    pub policy_logits: Conv2d,
    pub value_conv: Conv2d,
    pub value_fc: Linear,
}

struct LayerTrace {
    conv: ConvCache,
    bn: BnCache,
    out: Tensor,
}

struct Trace {
    stem_conv: ConvCache,
    stem_bn: BnCache,
    blocks: Vec<Vec<LayerTrace>>,
    policy_hidden: ConvCache,
    policy_hidden_out: Tensor,
    policy_logits: ConvCache,
    value_conv: ConvCache,
    value_shape: [usize; 4],
    argmax: Vec<usize>,
    pooled: Tensor,
    stats: Vec<BnStats>,
}

impl Network {
    /// Fan-in uniform initialisation drawn from `rng`.
    pub fn new(config: NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        net.for_each_conv_mut(|c| c.reinit(rng));
        net.value_fc.reinit(rng);
        Ok(net)
    }

    /// Every weight and bias zero; batchnorms at identity.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_channels;
        let conv_bn = |ci| ConvBn { conv: Conv2d::zeros(ci, h, 3), bn: BatchNorm2d::new(h) };
        Ok(Network {
            config,
            stem: conv_bn(config.c_state),
            blocks: (0..config.blocks).map(|_| (0..config.layers_per_block).map(|_| conv_bn(h)).collect()).collect(),
            policy_hidden: Conv2d::zeros(h, h, 3),
            policy_logits: Conv2d::zeros(h, config.c_action, 3),
            value_conv: Conv2d::zeros(h, config.value_channels, 1),
            value_fc: Linear::zeros(2 * config.value_channels, 1),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Replaces the recorded config after the caller has reshaped the
    /// stem input or policy output to match it.
    pub(crate) fn set_config(&mut self, config: NetworkConfig) {
        self.config = config;
    }

    fn for_each_conv_mut(&mut self, mut f: impl FnMut(&mut Conv2d)) {
        f(&mut self.stem.conv);
        for layer in self.blocks.iter_mut().flatten() {
            f(&mut layer.conv);
        }
        f(&mut self.policy_hidden);
        f(&mut self.policy_logits);
        f(&mut self.value_conv);
    }

    /// All named tensors in checkpoint order, including running statistics.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        fn conv_bn<'a>(prefix: String, l: &'a ConvBn, out: &mut Vec<(String, &'a Tensor)>) {
            out.push((format!("{prefix}.conv.weight"), &l.conv.weight));
            out.push((format!("{prefix}.conv.bias"), &l.conv.bias));
            out.push((format!("{prefix}.bn.gamma"), &l.bn.gamma));
            out.push((format!("{prefix}.bn.beta"), &l.bn.beta));
            out.push((format!("{prefix}.bn.running_mean"), &l.bn.running_mean));
            out.push((format!("{prefix}.bn.running_var"), &l.bn.running_var));
        }
        conv_bn("stem".into(), &self.stem, &mut out);
        for (b, block) in self.blocks.iter().enumerate() {
            for (l, layer) in block.iter().enumerate() {
                conv_bn(format!("blocks.{b}.{l}"), layer, &mut out);
            }
        }
        out.push(("policy.conv1.weight".into(), &self.policy_hidden.weight));
        out.push(("policy.conv1.bias".into(), &self.policy_hidden.bias));
        out.push(("policy.conv2.weight".into(), &self.policy_logits.weight));
        out.push(("policy.conv2.bias".into(), &self.policy_logits.bias));
        out.push(("value.conv.weight".into(), &self.value_conv.weight));
        out.push(("value.conv.bias".into(), &self.value_conv.bias));
        out.push(("value.fc.weight".into(), &self.value_fc.weight));
        out.push(("value.fc.bias".into(), &self.value_fc.bias));
        out
    }

    /// Mutable view of [`Network::named_tensors`], same order.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        fn conv_bn<'a>(prefix: String, l: &'a mut ConvBn, out: &mut Vec<(String, &'a mut Tensor)>) {
            out.push((format!("{prefix}.conv.weight"), &mut l.conv.weight));
            out.push((format!("{prefix}.conv.bias"), &mut l.conv.bias));
            out.push((format!("{prefix}.bn.gamma"), &mut l.bn.gamma));
            out.push((format!("{prefix}.bn.beta"), &mut l.bn.beta));
            out.push((format!("{prefix}.bn.running_mean"), &mut l.bn.running_mean));
            out.push((format!("{prefix}.bn.running_var"), &mut l.bn.running_var));
        }
        conv_bn("stem".into(), &mut self.stem, &mut out);
        for (b, block) in self.blocks.iter_mut().enumerate() {
            for (l, layer) in block.iter_mut().enumerate() {
                conv_bn(format!("blocks.{b}.{l}"), layer, &mut out);
            }
        }
        out.push(("policy.conv1.weight".into(), &mut self.policy_hidden.weight));
        out.push(("policy.conv1.bias".into(), &mut self.policy_hidden.bias));
        out.push(("policy.conv2.weight".into(), &mut self.policy_logits.weight));
        out.push(("policy.conv2.bias".into(), &mut self.policy_logits.bias));
        out.push(("value.conv.weight".into(), &mut self.value_conv.weight));
        out.push(("value.conv.bias".into(), &mut self.value_conv.bias));
        out.push(("value.fc.weight".into(), &mut self.value_fc.weight));
        out.push(("value.fc.bias".into(), &mut self.value_fc.bias));
        out
    }

    pub fn is_trainable(name: &str) -> bool {
        !name.ends_with("running_mean") && !name.ends_with("running_var")
    }

    /// Trainable tensors in gradient order.
    pub fn trainable(&self) -> Vec<(String, &Tensor)> {
        self.named_tensors().into_iter().filter(|(n, _)| Self::is_trainable(n)).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.named_tensors_mut().into_iter().filter(|(n, _)| Self::is_trainable(n)).collect()
    }

    fn batchnorms_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        let mut out = vec![&mut self.stem.bn];
        out.extend(self.blocks.iter_mut().flatten().map(|l| &mut l.bn));
        out
    }

    /// Folds the batch statistics of a training step into the running averages.
    pub fn apply_bn_stats(&mut self, grads: &Gradients) {
        let count = grads.bn_count;
        for (bn, stats) in self.batchnorms_mut().into_iter().zip(&grads.bn_stats) {
            bn.update_running(stats, count);
        }
    }

    /// Single position: `(cState, H, W) -> (logits (cAction, H, W), value)`.
    pub fn forward(&self, state: &Tensor, mode: Mode) -> Result<(Tensor, f64)> {
        let s = state.shape();
        if s.len() != 3 {
            return Err(Error::ShapeMismatch { expected: vec![self.config.c_state, 0, 0], got: s.to_vec() });
        }
        let batch = state.clone().reshape(&[1, s[0], s[1], s[2]])?;
        let (logits, values) = self.forward_batch(&batch, mode)?;
        let a = self.config.c_action;
        Ok((logits.reshape(&[a, s[1], s[2]])?, values[0]))
    }

    /// `(N, cState, H, W) -> (logits (N, cAction, H, W), values)`.
    pub fn forward_batch(&self, batch: &Tensor, mode: Mode) -> Result<(Tensor, Vec<f64>)> {
        let (logits, pre, _) = self.run(batch, mode)?;
        Ok((logits, pre.into_iter().map(f64::tanh).collect()))
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        let s = batch.shape();
        if s.len() != 4 || s[1] != self.config.c_state || s[0] == 0 || s[2] == 0 || s[3] == 0 {
            return Err(Error::ShapeMismatch { expected: vec![s.first().copied().unwrap_or(1), self.config.c_state, 0, 0], got: s.to_vec() });
        }
        batch.check_finite("network input")
    }

    /// Returns logits, pre-tanh values and the trace (train mode only).
    fn run(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Vec<f64>, Option<Trace>)> {
        self.check_input(x)?;
        let train = mode == Mode::Train;
        let mut stats = Vec::new();
        let bn = |bn: &BatchNorm2d, x: &Tensor, stats: &mut Vec<BnStats>| -> (Tensor, Option<BnCache>) {
            if train {
                let (y, cache, s) = bn.forward_train(x);
                stats.push(s);
                (y, Some(cache))
            } else {
                (bn.forward_eval(x), None)
            }
        };

        let (c, stem_conv) = self.stem.conv.forward(x);
        let (mut h, stem_bn) = bn(&self.stem.bn, &c, &mut stats);
        let mut block_traces = Vec::new();
        for block in &self.blocks {
            let skip = h.clone();
            let mut traces = Vec::new();
            for layer in block {
                let (c, conv) = layer.conv.forward(&h);
                let (b, bn_cache) = bn(&layer.bn, &c, &mut stats);
                h = layers::relu(&b);
                if train {
                    traces.push(LayerTrace { conv, bn: bn_cache.unwrap(), out: h.clone() });
                }
            }
            h.data_mut().iter_mut().zip(skip.data()).for_each(|(a, b)| *a += b);
            block_traces.push(traces);
        }

        let (p, policy_hidden) = self.policy_hidden.forward(&h);
        let p = layers::relu(&p);
        let (logits, policy_logits) = self.policy_logits.forward(&p);

        let (v, value_conv) = self.value_conv.forward(&h);
        let value_shape = layers::dims4(&v);
        let (pooled, argmax) = layers::global_pool(&v);
        let pre = self.value_fc.forward(&pooled).into_data();

        logits.check_finite("policy logits")?;
        if pre.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("value"));
        }
        let trace = train.then(|| Trace {
            stem_conv,
            stem_bn: stem_bn.unwrap(),
            blocks: block_traces,
            policy_hidden,
            policy_hidden_out: p,
            policy_logits,
            value_conv,
            value_shape,
            argmax,
            pooled,
            stats,
        });
        Ok((logits, pre, trace))
    }

    /// Mean loss over `batch` (train-mode batchnorm).
    pub fn batch_loss(&self, batch: &[TrainingExample]) -> Result<f64> {
        let x = self.stack_states(batch)?;
        let (logits, pre, _) = self.run(&x, Mode::Train)?;
        let mut total = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            total += super::loss::loss(logits.outer(i), pre[i].tanh(), ex)?;
        }
        Ok(total / batch.len() as f64)
    }

    fn stack_states(&self, batch: &[TrainingExample]) -> Result<Tensor> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty training batch".into()));
        }
        Tensor::stack(&batch.iter().map(|e| &e.state).collect::<Vec<_>>())
    }

    /// Exact gradients of the mean batch loss with train-mode batchnorm.
    pub fn backward(&self, batch: &[TrainingExample]) -> Result<Gradients> {
        let x = self.stack_states(batch)?;
        let (logits, pre, trace) = self.run(&x, Mode::Train)?;
        let t = trace.expect("train mode records a trace");
        let n = batch.len();
        let inv_n = 1.0 / n as f64;

        let mut dlogits = Tensor::zeros(logits.shape());
        let mut dpre = Tensor::zeros(&[n, 1]);
        let mut total = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            let v = pre[i].tanh();
            let (l, g, dv) = loss_and_grad(logits.outer(i), v, ex)?;
            total += l;
            dlogits.outer_mut(i).iter_mut().zip(g).for_each(|(d, g)| *d = g * inv_n);
            dpre.data_mut()[i] = dv * (1.0 - v * v) * inv_n;
        }

        // Value head.
        let (dpooled, d_fc_w, d_fc_b) = self.value_fc.backward(&t.pooled, &dpre);
        let dv = layers::global_pool_backward(&t.argmax, &dpooled, t.value_shape);
        let (mut dh, d_vconv_w, d_vconv_b) = self.value_conv.backward(&t.value_conv, &dv);

        // Policy head.
        let (dp, d_pl_w, d_pl_b) = self.policy_logits.backward(&t.policy_logits, &dlogits);
        let dp = layers::relu_backward(&t.policy_hidden_out, &dp);
        let (dh_p, d_ph_w, d_ph_b) = self.policy_hidden.backward(&t.policy_hidden, &dp);
        dh.data_mut().iter_mut().zip(dh_p.data()).for_each(|(a, b)| *a += b);

        // Residual trunk, last block first.
        let mut block_grads: Vec<Vec<[Tensor; 4]>> = Vec::with_capacity(self.blocks.len());
        for (block, traces) in self.blocks.iter().zip(&t.blocks).rev() {
            let skip = dh.clone();
            let mut grads = Vec::with_capacity(block.len());
            for (layer, lt) in block.iter().zip(traces).rev() {
                let d = layers::relu_backward(&lt.out, &dh);
                let (d, dg, db) = layer.bn.backward(&lt.bn, &d);
                let (d, dw, dcb) = layer.conv.backward(&lt.conv, &d);
                grads.push([dw, dcb, dg, db]);
                dh = d;
            }
            grads.reverse();
            dh.data_mut().iter_mut().zip(skip.data()).for_each(|(a, b)| *a += b);
            block_grads.push(grads);
        }
        block_grads.reverse();

        let (d, d_sg, d_sb) = self.stem.bn.backward(&t.stem_bn, &dh);
        let (_, d_sw, d_scb) = self.stem.conv.backward(&t.stem_conv, &d);

        let mut tensors = vec![d_sw, d_scb, d_sg, d_sb];
        for g in block_grads.into_iter().flatten() {
            tensors.extend(g);
        }
        tensors.extend([d_ph_w, d_ph_b, d_pl_w, d_pl_b, d_vconv_w, d_vconv_b, d_fc_w, d_fc_b]);
        let s = x.shape();
        Ok(Gradients { loss: total * inv_n, tensors, bn_stats: t.stats, bn_count: n * s[2] * s[3] })
    }
}
