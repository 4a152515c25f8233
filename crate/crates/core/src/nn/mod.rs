//! Fully convolutional policy-value network with hand-written backprop.

mod checkpoint;
pub mod layers;
mod loss;
mod network;
mod optim;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta};
pub use loss::{loss, loss_and_grad, masked_softmax, move_priors, TrainingExample};
pub use network::{ConvBn, Gradients, Mode, Network, NetworkConfig, ARCHITECTURE};
pub use optim::{Optimizer, OptimizerConfig};
pub use tensor::Tensor;
