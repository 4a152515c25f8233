//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{ActionTensorSpec, StateTensorSpec};
use crate::error::{Error, Result};
use crate::mcts::SearchConfig;
use crate::nn::NetworkConfig;
use crate::rules::GameConfig;
use crate::selfplay::TrainConfig;

/// Network shape independent of the game's channel counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkShape {
    /// Hidden width as a multiple of the state channel count.
    pub hidden_multiplier: usize,
    /// Explicit hidden width; overrides the multiplier.
    pub hidden_channels: Option<usize>,
    pub blocks: usize,
    pub layers_per_block: usize,
    pub value_channels: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        NetworkShape { hidden_multiplier: 2, hidden_channels: None, blocks: 2, layers_per_block: 2, value_channels: 4 }
    }
}

impl NetworkShape {
    pub fn for_game(&self, game: &GameConfig) -> NetworkConfig {
        let c_state = StateTensorSpec::build(game).num_channels();
        let c_action = ActionTensorSpec::build(game).num_channels();
        NetworkConfig {
            c_state,
            c_action,
            hidden_channels: self.hidden_channels.unwrap_or(self.hidden_multiplier * c_state),
            blocks: self.blocks,
            layers_per_block: self.layers_per_block,
            value_channels: self.value_channels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub games: usize,
    /// Search for agent A; agent B uses the same unless
    /// `opponent_iterations` is set.
    pub search: SearchConfig,
    pub opponent_iterations: Option<u32>,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { games: 100, search: SearchConfig::evaluation(100, 2), opponent_iterations: None, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameConfig,
    #[serde(default)]
    pub network: NetworkShape,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn new(game: GameConfig) -> Self {
        ExperimentConfig {
            game,
            network: NetworkShape::default(),
            training: TrainConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
            out: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.for_game(&self.game).validate()?;
        self.training.validate()?;
        self.eval.search.validate()?;
        if self.eval.games == 0 || self.eval.workers == 0 {
            return Err(Error::InvalidConfig("eval games and workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn network_config(&self) -> NetworkConfig {
        self.network.for_game(&self.game)
    }
}
