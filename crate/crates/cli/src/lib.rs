//! Subcommands of the `polyxfer` binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use polyxfer_core::codec::{ActionTensorSpec, StateTensorSpec};
use polyxfer_core::config::ExperimentConfig;
use polyxfer_core::eval::{self, Agent, ResultRow};
use polyxfer_core::nn::{load_checkpoint, save_checkpoint, CheckpointMeta, Network, NetworkConfig};
use polyxfer_core::selfplay::{derive_rng, train_loop, EpochReport, STREAM_INIT};
use polyxfer_core::transfer::{self, mapping_report, InitKind, SpecPair, TransferMode};
use polyxfer_core::{Error, GameConfig};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// Random stream slot for transfer-time initialisation.
const STREAM_TRANSFER: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "polyxfer", version, about = "Self-play training and cross-game transfer for board-game networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a network from scratch by self-play.
    Train(TrainArgs),
    /// Transplant a checkpoint into another game's encoding.
    Transfer(TransferArgs),
    /// Continue self-play training from a checkpoint.
    Finetune(FinetuneArgs),
    /// Play a match between two agents.
    Eval(EvalArgs),
    /// Summarise result files as win-percentage matrices.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Master seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (overrides the config).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    ZeroShot,
    Finetune,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    /// Source checkpoint.
    pub checkpoint: PathBuf,
    /// Experiment config whose game is the target domain.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "zero-shot")]
    pub mode: ModeArg,
    #[arg(long)]
    pub reinit_final_layers: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub reinit_final_layers: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint path, or one of `random`, `uct`, `untrained`.
    pub agent_a: String,
    /// Checkpoint path, or one of `random`, `uct`, `untrained`.
    pub agent_b: String,
    /// Experiment config; defaults to the game of the first checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub games: Option<usize>,
    /// Search iterations for agent A.
    #[arg(long)]
    pub iters: Option<u32>,
    /// Search iterations for agent B.
    #[arg(long)]
    pub iters_opponent: Option<u32>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory holding results.csv and games.jsonl.
    pub results: PathBuf,
    /// Where to write the report (defaults to the results directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Process exit code for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidConfig(_) | Error::InvalidTransferMode(_) => EXIT_CONFIG,
                _ => EXIT_DATA,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
    }
    EXIT_DATA
}

#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Transfer(a) => cmd_transfer(&a),
        Command::Finetune(a) => cmd_finetune(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn load_config(path: &Path, common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(config_error("--workers must be at least 1"));
        }
        cfg.training.workers = w;
        cfg.eval.workers = w;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:04}.ckpt")
}

/// Runs the training loop, writing one checkpoint per epoch, a final
/// checkpoint and a JSON-lines log into `out`.
fn train_into(
    out: &Path,
    game: &GameConfig,
    net: Network,
    cfg: &ExperimentConfig,
    mut meta: CheckpointMeta,
) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut log = BufWriter::new(File::create(out.join("train_log.jsonl"))?);
    let base_step = meta.training_step;
    let mut on_epoch = |r: &EpochReport, net: &Network| -> polyxfer_core::Result<()> {
        meta.training_step = base_step + r.steps;
        save_checkpoint(net, &meta, &out.join(checkpoint_name(r.epoch)))?;
        serde_json::to_writer(&mut log, r)?;
        log.write_all(b"\n")?;
        log.flush()?;
        eprintln!(
            "epoch {:>3}  episodes {:>5}  buffer {:>6}  loss {}",
            r.epoch,
            r.episodes,
            r.buffer_size,
            r.mean_loss.map_or("-".to_string(), |l| format!("{l:.4}"))
        );
        Ok(())
    };
    let net = train_loop(Arc::new(game.clone()), net, &cfg.training, cfg.seed, &mut on_epoch)?;
    let final_path = out.join("final.ckpt");
    save_checkpoint(&net, &meta, &final_path)?;
    Ok(final_path)
}

pub fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config, &a.common)?;
    let net_cfg = cfg.network_config();
    let net = Network::new(net_cfg, &mut derive_rng(cfg.seed, STREAM_INIT, 0, 0))?;
    let meta = CheckpointMeta::new(cfg.game.clone(), net_cfg, 0, cfg.seed);
    let path = train_into(&cfg.out, &cfg.game, net, &cfg, meta)?;
    println!("{}", path.display());
    Ok(())
}

fn specs(game: &GameConfig) -> (StateTensorSpec, ActionTensorSpec) {
    (StateTensorSpec::build(game), ActionTensorSpec::build(game))
}

pub fn cmd_transfer(a: &TransferArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config, &a.common)?;
    let kind = match a.mode {
        ModeArg::ZeroShot => InitKind::ZeroShot,
        ModeArg::Finetune => InitKind::FinetuneInit,
    };
    let mode = TransferMode::new(kind, a.reinit_final_layers)?;
    let (src, src_meta) =
        load_checkpoint(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let (ss, sa) = specs(&src_meta.game);
    let (ts, ta) = specs(&cfg.game);
    let mut rng = derive_rng(cfg.seed, STREAM_TRANSFER, 0, 0);
    let t = transfer::transplant(&src, SpecPair { state: &ss, action: &sa }, SpecPair { state: &ts, action: &ta }, mode, &mut rng)?;

    let mut meta = CheckpointMeta::new(cfg.game.clone(), *t.network.config(), src_meta.training_step, cfg.seed);
    meta.notes.insert("source_game".into(), src_meta.game.display_name());
    meta.notes.insert(
        "transfer_mode".into(),
        match kind {
            InitKind::ZeroShot => "zero-shot",
            InitKind::FinetuneInit => "finetune",
        }
        .into(),
    );
    if a.reinit_final_layers {
        meta.notes.insert("reinit_final_layers".into(), "true".into());
    }
    fs::create_dir_all(&cfg.out)?;
    let ckpt = cfg.out.join("transferred.ckpt");
    save_checkpoint(&t.network, &meta, &ckpt)?;
    let mut report = format!("{} -> {}\n", src_meta.game.display_name(), cfg.game.display_name());
    if src_meta.game.family() == cfg.game.family() && src_meta.game.misere() != cfg.game.misere() {
        report.push_str("note: the win-condition change is not visible in any channel\n");
    }
    let one_to_many = (0..ta.num_channels()).filter_map(|j| t.action_mapping.source_of(j)).count()
        > (0..ta.num_channels()).filter_map(|j| t.action_mapping.source_of(j)).collect::<std::collections::BTreeSet<_>>().len();
    if one_to_many {
        report.push_str("note: one source action channel feeds several target channels\n");
    }
    report.push('\n');
    report.push_str(&mapping_report(&ss, &ts, &t.state_mapping, &sa, &ta, &t.action_mapping));
    fs::write(cfg.out.join("mapping.txt"), &report)?;
    print!("{report}");
    println!("{}", ckpt.display());
    Ok(())
}

pub fn cmd_finetune(a: &FinetuneArgs) -> anyhow::Result<()> {
    let cfg = load_config(&a.config, &a.common)?;
    let (mut net, mut meta) =
        load_checkpoint(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let (s, act) = specs(&cfg.game);
    let nc = net.config();
    if nc.c_state != s.num_channels() || nc.c_action != act.num_channels() {
        return Err(Error::Mismatch(format!(
            "checkpoint has {}/{} state/action channels, {} needs {}/{}; run `transfer` first",
            nc.c_state,
            nc.c_action,
            cfg.game.display_name(),
            s.num_channels(),
            act.num_channels()
        ))
        .into());
    }
    if a.reinit_final_layers {
        transfer::reinit_final_layers(&mut net, &mut derive_rng(cfg.seed, STREAM_TRANSFER, 1, 0));
        meta.notes.insert("reinit_final_layers".into(), "true".into());
    }
    meta.game = cfg.game.clone();
    let path = train_into(&cfg.out, &cfg.game, net, &cfg, meta)?;
    println!("{}", path.display());
    Ok(())
}

enum AgentSource {
    Baseline(&'static str),
    Checkpoint(PathBuf, Box<Network>, CheckpointMeta),
}

fn parse_agent(s: &str) -> anyhow::Result<AgentSource> {
    Ok(match s {
        "random" => AgentSource::Baseline("random"),
        "uct" => AgentSource::Baseline("uct"),
        "untrained" => AgentSource::Baseline("untrained"),
        path => {
            let p = PathBuf::from(path);
            let (net, meta) = load_checkpoint(&p).with_context(|| format!("reading {path}"))?;
            AgentSource::Checkpoint(p, Box::new(net), meta)
        }
    })
}

fn untrained_config(game: &GameConfig, like: Option<&NetworkConfig>, cfg: Option<&ExperimentConfig>) -> NetworkConfig {
    let (s, a) = specs(game);
    let base = match (like, cfg) {
        (Some(n), _) => *n,
        (None, Some(c)) => c.network.for_game(game),
        (None, None) => NetworkConfig::new(s.num_channels(), a.num_channels()),
    };
    NetworkConfig { c_state: s.num_channels(), c_action: a.num_channels(), ..base }
}

pub fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let cfg = match &a.config {
        Some(p) => Some(load_config(p, &a.common)?),
        None => None,
    };
    let sources = [parse_agent(&a.agent_a)?, parse_agent(&a.agent_b)?];
    let ckpt_meta = sources.iter().find_map(|s| match s {
        AgentSource::Checkpoint(_, _, m) => Some(m),
        _ => None,
    });
    let game = match (&cfg, ckpt_meta) {
        (Some(c), _) => c.game.clone(),
        (None, Some(m)) => m.game.clone(),
        (None, None) => return Err(config_error("eval between two baselines needs --config for the game")),
    };
    let eval_cfg = cfg.as_ref().map(|c| c.eval).unwrap_or_default();
    let seed = a.common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let workers = a.common.workers.unwrap_or(eval_cfg.workers).max(1);
    let games = a.games.unwrap_or(eval_cfg.games);
    if games == 0 {
        return Err(config_error("--games must be at least 1"));
    }
    let iters_a = a.iters.unwrap_or(eval_cfg.search.iterations);
    let iters_b = a.iters_opponent.or(eval_cfg.opponent_iterations).unwrap_or(iters_a);
    if iters_a == 0 || iters_b == 0 {
        return Err(config_error("search iterations must be at least 1"));
    }
    let out = a.common.out.clone().or(cfg.as_ref().map(|c| c.out.clone())).unwrap_or_else(|| PathBuf::from("results"));

    let like = ckpt_meta.map(|m| m.network);
    let mut labels = Vec::new();
    let mut agents = Vec::new();
    for (slot, (src, iters)) in sources.into_iter().zip([iters_a, iters_b]).enumerate() {
        let search = polyxfer_core::mcts::SearchConfig { iterations: iters, ..eval_cfg.search };
        let (agent, label, kind, meta) = match src {
            AgentSource::Baseline("random") => (Agent::Random, "random".to_string(), "random", None),
            AgentSource::Baseline("uct") => (Agent::Uct { search }, format!("uct({iters})"), "uct", None),
            AgentSource::Baseline(_) => {
                let nc = untrained_config(&game, like.as_ref(), cfg.as_ref());
                let net = Network::new(nc, &mut derive_rng(seed, STREAM_INIT, 1 + slot as u64, 0))?;
                (Agent::Mcts { net: Box::new(net), search }, format!("untrained({iters})"), "untrained", None)
            }
            AgentSource::Checkpoint(path, net, meta) => {
                let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
                (Agent::Mcts { net, search }, format!("{name}({iters})"), "checkpoint", Some(meta))
            }
        };
        labels.push((label, kind, meta));
        agents.push(agent);
    }

    let existing = fs::read_to_string(out.join(eval::RESULTS_FILE)).map(|t| t.lines().count().saturating_sub(1)).unwrap_or(0);
    let match_id = format!("m{:04}", existing + 1);
    let result = eval::play_match(&Arc::new(game.clone()), &agents[0], &agents[1], games, seed, workers, &match_id)?;

    let (mode, source) = match &labels[0].2 {
        Some(m) => (
            m.notes.get("transfer_mode").cloned().unwrap_or_else(|| "trained".into()),
            m.notes.get("source_game").cloned().unwrap_or_else(|| m.game.display_name()),
        ),
        None => (labels[0].1.to_string(), "baseline".to_string()),
    };
    let row = ResultRow {
        match_id,
        family: format!("{mode} vs {}", labels[1].1),
        source,
        target: game.display_name(),
        agent_a: labels[0].0.clone(),
        agent_b: labels[1].0.clone(),
        games: result.games_played,
        wins_a: result.wins_a,
        wins_b: result.wins_b,
        draws: result.draws,
        win_pct_a: result.win_pct_a(),
    };
    eval::append_results(&out, &row, &result)?;
    println!(
        "{} vs {} on {}: {}-{}-{} ({:.2}% for A)",
        row.agent_a, row.agent_b, row.target, row.wins_a, row.wins_b, row.draws, row.win_pct_a
    );
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> anyhow::Result<()> {
    if !a.results.is_dir() {
        bail!(Error::MalformedResults { path: a.results.clone(), detail: "not a directory".into() });
    }
    let report = eval::build_report(&a.results)?;
    let out = a.out.clone().unwrap_or_else(|| a.results.clone());
    fs::create_dir_all(&out)?;
    fs::write(out.join("report.md"), &report.markdown)?;
    for (family, csv) in &report.matrices {
        fs::write(out.join(format!("matrix-{}.csv", eval::slug(family))), csv)?;
    }
    print!("{}", report.markdown);
    Ok(())
}
