use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{ActionTensorSpec, StateTensorSpec};
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkConfig, Tensor};

use super::{match_action_channels, match_state_channels, ActionChannelMapping, StateChannelMapping};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Unmatched slices are zero.
    ZeroShot,
    /// Unmatched slices take the standard fresh initialisation.
    FinetuneInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferMode {
    kind: InitKind,
    reinit_final_layers: bool,
}

impl TransferMode {
    pub const ZERO_SHOT: TransferMode = TransferMode { kind: InitKind::ZeroShot, reinit_final_layers: false };

    pub fn new(kind: InitKind, reinit_final_layers: bool) -> Result<Self> {
        if reinit_final_layers && kind == InitKind::ZeroShot {
            return Err(Error::InvalidTransferMode("re-initialising final layers requires fine-tune initialisation".into()));
        }
        Ok(TransferMode { kind, reinit_final_layers })
    }

    pub fn kind(&self) -> InitKind {
        self.kind
    }

    pub fn reinit_final_layers(&self) -> bool {
        self.reinit_final_layers
    }
}

/// Source and target encodings of one domain pair.
#[derive(Debug, Clone, Copy)]
pub struct SpecPair<'a> {
    pub state: &'a StateTensorSpec,
    pub action: &'a ActionTensorSpec,
}

#[derive(Debug, Clone)]
pub struct Transplant {
    pub network: Network,
    pub state_mapping: StateChannelMapping,
    pub action_mapping: ActionChannelMapping,
}

/// Builds a target-domain network from `src`. Only the stem's input slices
/// and the policy logit conv's output slices depend on the mappings; every
/// other parameter is copied whole. `rng` is drawn from only in fine-tune
/// mode.
pub fn transplant(src: &Network, from: SpecPair<'_>, to: SpecPair<'_>, mode: TransferMode, rng: &mut impl Rng) -> Result<Transplant> {
    let sc = src.config();
    if sc.c_state != from.state.num_channels() || sc.c_action != from.action.num_channels() {
        return Err(Error::Mismatch(format!(
            "source network has {}/{} channels, source specs {}/{}",
            sc.c_state,
            sc.c_action,
            from.state.num_channels(),
            from.action.num_channels()
        )));
    }
    let state_mapping = match_state_channels(from.state, to.state);
    let action_mapping = match_action_channels(from.action, to.action);
    let cfg = NetworkConfig { c_state: to.state.num_channels(), c_action: to.action.num_channels(), ..*sc };

    let fresh = match mode.kind {
        InitKind::ZeroShot => Network::zeros(cfg)?,
        InitKind::FinetuneInit => Network::new(cfg, rng)?,
    };
    let mut net = src.clone();
    net.set_config(cfg);

    // Stem: input-channel slices (k, j, :, :) <- (k, i, :, :).
    let k2 = 9;
    let hidden = sc.hidden_channels;
    let mut w = fresh.stem.conv.weight.clone();
    for (j, m) in state_mapping.targets.iter().enumerate() {
        if let Some(m) = m {
            for k in 0..hidden {
                let dst = (k * cfg.c_state + j) * k2;
                let srcoff = (k * sc.c_state + m.source) * k2;
                w.data_mut()[dst..dst + k2].copy_from_slice(&src.stem.conv.weight.data()[srcoff..srcoff + k2]);
            }
        }
    }
    net.stem.conv.weight = w;

    // Policy logits: output-channel slices (c', :, :, :) <- (c, :, :, :).
    let per_out = hidden * k2;
    let mut pw = fresh.policy_logits.weight.clone();
    let mut pb = fresh.policy_logits.bias.clone();
    for (c_t, m) in action_mapping.targets.iter().enumerate() {
        if let Some(c_s) = *m {
            pw.data_mut()[c_t * per_out..(c_t + 1) * per_out]
                .copy_from_slice(&src.policy_logits.weight.data()[c_s * per_out..(c_s + 1) * per_out]);
            pb.data_mut()[c_t] = src.policy_logits.bias.data()[c_s];
        }
    }
    net.policy_logits.weight = pw;
    net.policy_logits.bias = pb;

    if mode.reinit_final_layers {
        reinit_final_layers(&mut net, rng);
    }
    debug_assert_eq!(net.stem.conv.weight.shape(), &[hidden, cfg.c_state, 3, 3][..]);
    Ok(Transplant { network: net, state_mapping, action_mapping })
}

/// Fresh parameters for the last conv of each head: the policy logit conv
/// and the value head's 1x1 conv.
pub fn reinit_final_layers(net: &mut Network, rng: &mut impl Rng) {
    net.policy_logits.reinit(rng);
    net.value_conv.reinit(rng);
}

/// `x` in the target layout, rebuilt from a source-layout tensor: mapped
/// channels copied, the rest zero.
pub fn remap_state_tensor(x: &Tensor, mapping: &StateChannelMapping) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::ShapeMismatch { expected: vec![0, 0, 0], got: s.to_vec() });
    }
    let plane = s[1] * s[2];
    let mut out = Tensor::zeros(&[mapping.targets.len(), s[1], s[2]]);
    for (j, m) in mapping.targets.iter().enumerate() {
        if let Some(m) = m {
            out.data_mut()[j * plane..(j + 1) * plane].copy_from_slice(&x.data()[m.source * plane..(m.source + 1) * plane]);
        }
    }
    Ok(out)
}
