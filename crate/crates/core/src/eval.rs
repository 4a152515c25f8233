//! Head-to-head matches, result files and win-percentage reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameOutcome;
use crate::mcts::{run_search, select_move, Evaluator, NetEvaluator, RolloutEvaluator, SearchConfig};
use crate::nn::Network;
use crate::rules::{GameConfig, GameState};
use crate::selfplay::{derive_rng, STREAM_EVAL};

pub const GAMES_FILE: &str = "games.jsonl";
pub const RESULTS_FILE: &str = "results.csv";

/// A player in a match.
pub enum Agent {
    /// Uniformly random legal moves.
    Random,
    /// Tree search with random-rollout leaf values and uniform priors.
    Uct { search: SearchConfig },
    /// Network-guided tree search.
    Mcts { net: Box<Network>, search: SearchConfig },
}

impl Agent {
    pub fn kind(&self) -> &'static str {
        match self {
            Agent::Random => "random",
            Agent::Uct { .. } => "uct",
            Agent::Mcts { .. } => "mcts",
        }
    }

    fn choose(&self, state: &GameState, rng: &mut dyn RngCore) -> Result<crate::game::MoveRecord> {
        let (eval, search): (Box<dyn Evaluator + '_>, &SearchConfig) = match self {
            Agent::Random => {
                let moves = state.legal_moves()?;
                return moves.choose(rng).copied().ok_or(Error::NoLegalActions);
            }
            Agent::Uct { search } => (Box::new(RolloutEvaluator::new(state.config())), search),
            Agent::Mcts { net, search } => (Box::new(NetEvaluator::new(net, state.config())?), search),
        };
        let result = run_search(state, eval.as_ref(), search, rng)?;
        select_move(&result, state.ply(), search.temperature_moves, rng)
    }

    fn check(&self, game: &GameConfig) -> Result<()> {
        if let Agent::Mcts { net, .. } = self {
            NetEvaluator::new(net, game)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
    Draw,
}

/// One finished game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub match_id: String,
    pub index: usize,
    /// Agent A moved first.
    pub a_first: bool,
    pub winner: Winner,
    pub plies: usize,
    pub moves: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub games_played: usize,
    pub wins_a: usize,
    pub wins_b: usize,
    pub draws: usize,
    pub games: Vec<GameRecord>,
}

/// Draws count as half a win.
pub fn win_percentage(wins: usize, draws: usize, games: usize) -> f64 {
    if games == 0 {
        return 0.0;
    }
    (wins as f64 + draws as f64 / 2.0) / games as f64 * 100.0
}

impl MatchResult {
    pub fn from_games(games: Vec<GameRecord>) -> Self {
        let count = |w| games.iter().filter(|g| g.winner == w).count();
        MatchResult {
            games_played: games.len(),
            wins_a: count(Winner::A),
            wins_b: count(Winner::B),
            draws: count(Winner::Draw),
            games,
        }
    }

    pub fn win_pct_a(&self) -> f64 {
        win_percentage(self.wins_a, self.draws, self.games_played)
    }
}

fn play_game(game: &Arc<GameConfig>, a: &Agent, b: &Agent, index: usize, seed: u64, match_id: &str) -> Result<GameRecord> {
    let mut rng = derive_rng(seed, STREAM_EVAL, 0, index as u64);
    let a_first = index.is_multiple_of(2);
    let mut state = GameState::initial(Arc::clone(game));
    let mut moves = Vec::new();
    while !state.is_terminal() {
        let a_to_move = (state.to_move().id() == 1) == a_first;
        let agent = if a_to_move { a } else { b };
        let mv = agent.choose(&state, &mut rng)?;
        moves.push(mv.to_string());
        state = state.apply_move(&mv)?;
    }
    let winner = match state.outcome() {
        GameOutcome::Win(p) if (p.id() == 1) == a_first => Winner::A,
        GameOutcome::Win(_) => Winner::B,
        _ => Winner::Draw,
    };
    Ok(GameRecord { match_id: match_id.to_string(), index, a_first, winner, plies: state.ply(), moves })
}

/// Plays `n` games; game `i` has A moving first iff `i` is even and its own
/// generator derived from `seed`, so results do not depend on `workers`.
pub fn play_match(
    game: &Arc<GameConfig>,
    a: &Agent,
    b: &Agent,
    n: usize,
    seed: u64,
    workers: usize,
    match_id: &str,
) -> Result<MatchResult> {
    a.check(game)?;
    b.check(game)?;
    let games: Result<Vec<GameRecord>> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(|i| play_game(game, a, b, i, seed, match_id)).collect())
    } else {
        (0..n).map(|i| play_game(game, a, b, i, seed, match_id)).collect()
    };
    Ok(MatchResult::from_games(games?))
}

/// One aggregate line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub match_id: String,
    pub family: String,
    pub source: String,
    pub target: String,
    pub agent_a: String,
    pub agent_b: String,
    pub games: usize,
    pub wins_a: usize,
    pub wins_b: usize,
    pub draws: usize,
    pub win_pct_a: f64,
}

/// Appends per-game records and the aggregate row under `dir`.
pub fn append_results(dir: &Path, row: &ResultRow, result: &MatchResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut games = OpenOptions::new().create(true).append(true).open(dir.join(GAMES_FILE))?;
    for g in &result.games {
        serde_json::to_writer(&mut games, g)?;
        games.write_all(b"\n")?;
    }
    let path = dir.join(RESULTS_FILE);
    let fresh = !path.exists();
    let file = OpenOptions::new().create(true).append(true).open(&path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(row).map_err(|e| csv_error(&path, e))?;
    w.flush()?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::MalformedResults { path: path.to_path_buf(), detail: e.to_string() }
}

fn read_rows(dir: &Path) -> Result<Vec<ResultRow>> {
    let path = dir.join(RESULTS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(&path).map_err(|e| csv_error(&path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(&path, e))).collect()
}

fn read_games(dir: &Path) -> Result<Vec<GameRecord>> {
    let path = dir.join(GAMES_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::MalformedResults {
                path: path.clone(),
                detail: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Rendered report: Markdown plus one CSV matrix per family.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub markdown: String,
    pub matrices: Vec<(String, String)>,
}

/// Builds matrices (rows = source, columns = target, `-` on the diagonal)
/// after checking every aggregate row against the per-game records.
pub fn build_report(dir: &Path) -> Result<Report> {
    let rows = read_rows(dir)?;
    let games = read_games(dir)?;
    let mut by_match: BTreeMap<&str, Vec<&GameRecord>> = BTreeMap::new();
    for g in &games {
        by_match.entry(g.match_id.as_str()).or_default().push(g);
    }
    let results_path = dir.join(RESULTS_FILE);
    for row in &rows {
        let recs = by_match.get(row.match_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let result = MatchResult::from_games(recs.iter().map(|g| (*g).clone()).collect());
        let pct = result.win_pct_a();
        if result.games_played != row.games
            || result.wins_a != row.wins_a
            || result.wins_b != row.wins_b
            || result.draws != row.draws
            || (pct - row.win_pct_a).abs() > 1e-9
        {
            return Err(Error::MalformedResults {
                path: results_path.clone(),
                detail: format!("row {} disagrees with {} per-game records", row.match_id, GAMES_FILE),
            });
        }
    }

    // family -> (source, target) -> (wins, draws, games)
    let mut cells: BTreeMap<&str, BTreeMap<(&str, &str), (usize, usize, usize)>> = BTreeMap::new();
    for row in &rows {
        let c = cells.entry(&row.family).or_default().entry((&row.source, &row.target)).or_default();
        c.0 += row.wins_a;
        c.1 += row.draws;
        c.2 += row.games;
    }

    let mut md = String::from("# Win percentages\n\n");
    md.push_str("Rows are source domains, columns are target domains. Each cell is the win percentage of agent A; draws count as half a win.\n");
    let mut matrices = Vec::new();
    for (family, table) in &cells {
        let domains: BTreeSet<&str> = table.keys().flat_map(|(s, t)| [*s, *t]).collect();
        let sources: Vec<&str> = domains.iter().copied().filter(|d| table.keys().any(|(s, _)| s == d)).collect();
        let targets: Vec<&str> = domains.iter().copied().filter(|d| table.keys().any(|(_, t)| t == d)).collect();
        let (rows_axis, cols_axis) = if sources.len() > 1 || targets.len() > 1 {
            (domains.iter().copied().collect::<Vec<_>>(), domains.iter().copied().collect::<Vec<_>>())
        } else {
            (sources, targets)
        };
        let cell = |s: &str, t: &str| -> String {
            if s == t {
                return "-".into();
            }
            match table.get(&(s, t)) {
                Some(&(w, d, g)) => format!("{:.2}", win_percentage(w, d, g)),
                None => String::new(),
            }
        };
        let _ = writeln!(md, "\n## {family}\n");
        let _ = writeln!(md, "| source \\ target | {} |", cols_axis.join(" | "));
        let _ = writeln!(md, "|---|{}", "---|".repeat(cols_axis.len()));
        let mut csv = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["source".to_string()];
        header.extend(cols_axis.iter().map(|s| s.to_string()));
        csv.write_record(&header).expect("in-memory csv");
        for s in &rows_axis {
            let vals: Vec<String> = cols_axis.iter().map(|t| cell(s, t)).collect();
            let _ = writeln!(md, "| {s} | {} |", vals.join(" | "));
            let mut rec = vec![s.to_string()];
            rec.extend(vals);
            csv.write_record(&rec).expect("in-memory csv");
        }
        let bytes = csv.into_inner().expect("in-memory csv");
        matrices.push((family.to_string(), String::from_utf8(bytes).expect("utf-8 csv")));
    }
    if cells.is_empty() {
        md.push_str("\nNo results.\n");
    }
    Ok(Report { markdown: md, matrices })
}

/// File-system safe version of a family name.
pub fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect()
}

/// Writes `report.md` and `matrix-<family>.csv` files into `dir`.
pub fn write_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let report = build_report(dir)?;
    let mut written = vec![dir.join("report.md")];
    fs::write(&written[0], &report.markdown)?;
    for (family, csv) in &report.matrices {
        let p = dir.join(format!("matrix-{}.csv", slug(family)));
        fs::write(&p, csv)?;
        written.push(p);
    }
    Ok(written)
}
