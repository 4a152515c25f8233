//! Self-play training of fully convolutional policy-value networks on a small
//! family of board games, and transfer of trained parameters between games by
//! matching state and action channel semantics.

pub mod codec;
pub mod config;
pub mod error;
pub mod eval;
pub mod game;
pub mod mcts;
pub mod nn;
pub mod rules;
pub mod selfplay;
pub mod transfer;

pub use error::{Error, Result};
pub use game::{BoardShape, Cell, GameOutcome, Geometry, MoveKind, MoveRecord, PlayerId};
pub use rules::{GameConfig, GameFamily, GameState};
