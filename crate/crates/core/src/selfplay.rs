//! Self-play episode generation, replay buffer and the training loop.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_state, StateTensorSpec};
use crate::error::{Error, Result};
use crate::game::GameOutcome;
use crate::mcts::{run_search, select_move, Evaluator, NetEvaluator, SearchConfig};
use crate::nn::{Network, Optimizer, OptimizerConfig, Tensor};
use crate::rules::{GameConfig, GameState};

pub use crate::nn::TrainingExample;

/// Independent generator for one `(purpose, a, b)` slot of a master seed.
/// Streams never overlap, so results do not depend on scheduling.
pub fn derive_rng(seed: u64, purpose: u8, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(purpose) << 56) ^ (a << 28) ^ b);
    rng
}

pub const STREAM_SELFPLAY: u8 = 1;
pub const STREAM_TRAIN: u8 = 2;
pub const STREAM_INIT: u8 = 3;
pub const STREAM_EVAL: u8 = 4;

/// FIFO ring of training examples.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<TrainingExample>,
    capacity: usize,
    warmup: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, warmup: usize) -> Result<Self> {
        if capacity == 0 || warmup > capacity {
            return Err(Error::InvalidConfig(format!("buffer capacity {capacity} must be ≥ 1 and ≥ warmup {warmup}")));
        }
        Ok(ReplayBuffer { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity, warmup })
    }

    pub fn push(&mut self, ex: TrainingExample) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(ex);
    }

    pub fn extend(&mut self, examples: impl IntoIterator<Item = TrainingExample>) {
        for ex in examples {
            self.push(ex);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_ready(&self) -> bool {
        self.items.len() >= self.warmup.max(1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingExample> {
        self.items.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<TrainingExample>> {
        if !self.is_ready() {
            return Err(Error::InvalidConfig(format!(
                "replay buffer holds {} examples, warmup is {}",
                self.items.len(),
                self.warmup
            )));
        }
        Ok((0..n).map(|_| self.items[rng.gen_range(0..self.items.len())].clone()).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub examples: Vec<TrainingExample>,
    pub outcome: GameOutcome,
}

/// Plays one game with the search on both sides and labels every position
/// with the final result from its mover's point of view.
pub fn self_play_episode(
    game: &Arc<GameConfig>,
    evaluator: &dyn Evaluator,
    search: &SearchConfig,
    rng: &mut dyn RngCore,
) -> Result<Episode> {
    let state_spec = StateTensorSpec::build(game);
    let action_spec = evaluator.action_spec().clone();
    let mut state = GameState::initial(Arc::clone(game));
    let mut pending: Vec<(Tensor, Tensor, Vec<usize>, _)> = Vec::new();
    while !state.is_terminal() {
        let result = run_search(&state, evaluator, search, rng)?;
        let total = f64::from(result.total_visits());
        let mut policy = Tensor::zeros(&action_spec.shape());
        for g in &result.groups {
            policy.data_mut()[g.flat] = f64::from(g.visits) / total;
        }
        let legal = result.groups.iter().map(|g| g.flat).collect();
        pending.push((encode_state(&state, &state_spec)?, policy, legal, state.to_move()));
        let mv = select_move(&result, state.ply(), search.temperature_moves, rng)?;
        state = state.apply_unchecked(&mv);
    }
    let outcome = state.outcome();
    let examples = pending
        .into_iter()
        .map(|(state, policy, legal, mover)| TrainingExample { state, policy, legal, z: outcome.reward_for(mover) })
        .collect();
    Ok(Episode { examples, outcome })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub optimizer: OptimizerConfig,
    pub search: SearchConfig,
    /// Self-play threads. Episode seeds do not depend on it.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            episodes_per_epoch: 50,
            steps_per_epoch: 40,
            batch_size: 128,
            buffer_capacity: 20_000,
            warmup: 1_000,
            optimizer: OptimizerConfig::default(),
            search: SearchConfig { iterations: 100, ..SearchConfig::default() },
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if self.buffer_capacity == 0 || self.warmup > self.buffer_capacity {
            return Err(Error::InvalidConfig("warmup must not exceed a non-zero buffer capacity".into()));
        }
        self.optimizer.validate()?;
        self.search.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub episodes: usize,
    pub examples: usize,
    pub buffer_size: usize,
    pub steps: u64,
    pub mean_loss: Option<f64>,
    pub p1_wins: usize,
    pub p2_wins: usize,
    pub draws: usize,
}

/// Self-play trainer: owns the network, the optimizer and the buffer.
pub struct Trainer {
    game: Arc<GameConfig>,
    net: Network,
    optimizer: Optimizer,
    buffer: ReplayBuffer,
    config: TrainConfig,
    seed: u64,
    epoch: usize,
    episodes: usize,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(game: Arc<GameConfig>, net: Network, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        NetEvaluator::new(&net, &game)?;
        let pool = if config.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Trainer {
            buffer: ReplayBuffer::new(config.buffer_capacity, config.warmup)?,
            optimizer: Optimizer::new(config.optimizer),
            game,
            net,
            config,
            seed,
            epoch: 0,
            episodes: 0,
            pool,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn into_network(self) -> Network {
        self.net
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.optimizer.steps()
    }

    fn generate(&self, first: usize, count: usize) -> Result<Vec<Episode>> {
        let eval = NetEvaluator::new(&self.net, &self.game)?;
        let play = |i: usize| {
            let mut rng = derive_rng(self.seed, STREAM_SELFPLAY, self.epoch as u64, i as u64);
            self_play_episode(&self.game, &eval, &self.config.search, &mut rng)
        };
        match &self.pool {
            Some(pool) => pool.install(|| (first..first + count).into_par_iter().map(play).collect()),
            None => (first..first + count).map(play).collect(),
        }
    }

    /// One epoch: self-play with a frozen snapshot (topped up until the
    /// buffer reaches warmup), then `steps_per_epoch` optimizer steps.
    pub fn run_epoch(&mut self) -> Result<EpochReport> {
        let mut report = EpochReport {
            epoch: self.epoch + 1,
            episodes: 0,
            examples: 0,
            buffer_size: 0,
            steps: 0,
            mean_loss: None,
            p1_wins: 0,
            p2_wins: 0,
            draws: 0,
        };
        let mut played = 0;
        let mut want = self.config.episodes_per_epoch;
        loop {
            for ep in self.generate(played, want)? {
                match ep.outcome {
                    GameOutcome::Win(p) if p.id() == 1 => report.p1_wins += 1,
                    GameOutcome::Win(_) => report.p2_wins += 1,
                    _ => report.draws += 1,
                }
                report.examples += ep.examples.len();
                self.buffer.extend(ep.examples);
            }
            played += want;
            if self.buffer.is_ready() {
                break;
            }
            want = self.config.episodes_per_epoch.max(1);
        }
        self.episodes += played;
        let mut rng = derive_rng(self.seed, STREAM_TRAIN, self.epoch as u64, 0);
        let mut losses = Vec::with_capacity(self.config.steps_per_epoch);
        for _ in 0..self.config.steps_per_epoch {
            let batch = self.buffer.sample(self.config.batch_size, &mut rng)?;
            let grads = self.net.backward(&batch)?;
            losses.push(grads.loss);
            self.optimizer.step(&mut self.net, &grads)?;
        }
        self.epoch += 1;
        report.episodes = self.episodes;
        report.buffer_size = self.buffer.len();
        report.steps = self.optimizer.steps();
        if !losses.is_empty() {
            report.mean_loss = Some(losses.iter().sum::<f64>() / losses.len() as f64);
        }
        Ok(report)
    }
}

/// Runs `config.epochs` epochs, handing every report and the updated network
/// to `on_epoch`.
pub fn train_loop(
    game: Arc<GameConfig>,
    net: Network,
    config: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochReport, &Network) -> Result<()>,
) -> Result<Network> {
    let mut trainer = Trainer::new(game, net, *config, seed)?;
    for _ in 0..config.epochs {
        let report = trainer.run_epoch()?;
        on_epoch(&report, trainer.network())?;
    }
    Ok(trainer.into_network())
}
