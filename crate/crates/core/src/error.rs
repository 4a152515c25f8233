use std::path::PathBuf;

use thiserror::Error;

use crate::game::{Cell, MoveRecord};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid player id {0}; players are 1 and 2")]
    InvalidPlayer(u8),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("cell {0} is not a playable position")]
    NotPlayable(Cell),

    #[error("game is already over")]
    GameOver,

    #[error("illegal move {mv}: {reason}")]
    IllegalMove { mv: MoveRecord, reason: String },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no legal actions")]
    NoLegalActions,

    #[error("policy target puts mass {0} on illegal cells")]
    IllegalTargetMass(f64),

    #[error("visit counts sum to zero")]
    ZeroVisits,

    #[error("move {0} cannot be represented in this action spec")]
    UnrepresentableMove(MoveRecord),

    #[error("search root is terminal")]
    TerminalRoot,

    #[error("invalid transfer mode: {0}")]
    InvalidTransferMode(String),

    #[error("checkpoint {field}: {detail}")]
    Checkpoint { field: &'static str, detail: String },

    #[error("network/game mismatch: {0}")]
    Mismatch(String),

    #[error("malformed results file {path}: {detail}")]
    MalformedResults { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
