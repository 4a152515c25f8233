use crate::codec::{ActionTensorSpec, AliasGroup};
use crate::error::{Error, Result};
use crate::game::MoveRecord;

use super::Tensor;

/// One training position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// `(cState, H, W)`
    pub state: Tensor,
    /// `(cAction, H, W)`, summing to one over `legal`.
    pub policy: Tensor,
    /// Distinct flat policy indices of the legal alias groups.
    pub legal: Vec<usize>,
    /// Final outcome from the perspective of the player to move.
    pub z: f64,
}

/// Softmax over the logits at `legal`, each distinct position counted once.
/// Output is aligned with `legal`.
pub fn masked_softmax(logits: &[f64], legal: &[usize]) -> Result<Vec<f64>> {
    if legal.is_empty() {
        return Err(Error::NoLegalActions);
    }
    let mut seen = std::collections::HashSet::with_capacity(legal.len());
    let mut max = f64::NEG_INFINITY;
    for &i in legal {
        if i >= logits.len() {
            return Err(Error::ShapeMismatch { expected: vec![logits.len()], got: vec![i] });
        }
        if !seen.insert(i) {
            return Err(Error::Mismatch(format!("legal index {i} listed twice")));
        }
        max = max.max(logits[i]);
    }
    if !max.is_finite() {
        return Err(Error::NonFinite("policy logits"));
    }
    let mut probs: Vec<f64> = legal.iter().map(|&i| (logits[i] - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(probs)
}

/// Prior for every legal move: the probability of its alias group.
pub fn move_priors(logits: &[f64], groups: &[AliasGroup], spec: &ActionTensorSpec) -> Result<Vec<(MoveRecord, f64)>> {
    let legal: Vec<usize> = groups.iter().map(|g| g.index.flat(spec)).collect();
    let probs = masked_softmax(logits, &legal)?;
    Ok(groups
        .iter()
        .zip(probs)
        .flat_map(|(g, p)| g.moves.iter().map(move |m| (*m, p)))
        .collect())
}

/// `-sum_g t_g log p_g + (v - z)^2` together with its gradient with respect
/// to the logits (dense, same length as `logits`) and to `v`.
pub fn loss_and_grad(logits: &[f64], value: f64, example: &TrainingExample) -> Result<(f64, Vec<f64>, f64)> {
    let target = example.policy.data();
    if target.len() != logits.len() {
        return Err(Error::ShapeMismatch { expected: vec![logits.len()], got: vec![target.len()] });
    }
    let probs = masked_softmax(logits, &example.legal)?;
    let legal_mass: f64 = example.legal.iter().map(|&i| target[i]).sum();
    let off = target.iter().sum::<f64>() - legal_mass;
    if off.abs() > 1e-9 {
        return Err(Error::IllegalTargetMass(off));
    }
    let mut grad = vec![0.0; logits.len()];
    let mut policy_loss = 0.0;
    for (&i, &p) in example.legal.iter().zip(&probs) {
        if target[i] > 0.0 {
            policy_loss -= target[i] * p.ln();
        }
        grad[i] = legal_mass * p - target[i];
    }
    let diff = value - example.z;
    Ok((policy_loss + diff * diff, grad, 2.0 * diff))
}

/// Scalar loss only.
pub fn loss(logits: &[f64], value: f64, example: &TrainingExample) -> Result<f64> {
    loss_and_grad(logits, value, example).map(|(l, _, _)| l)
}
