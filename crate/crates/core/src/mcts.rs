//! PUCT tree search over alias groups.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::codec::{alias_groups, encode_state, ActionTensorSpec, AliasGroup, PolicyIndex, StateTensorSpec};
use crate::error::{Error, Result};
use crate::game::MoveRecord;
use crate::nn::{masked_softmax, Mode, Network};
use crate::rules::{GameConfig, GameState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub iterations: u32,
    pub c_puct: f64,
    /// Root Dirichlet concentration; `None` disables noise.
    pub dirichlet_alpha: Option<f64>,
    pub noise_weight: f64,
    /// Plies sampled proportionally to visits before switching to argmax.
    pub temperature_moves: usize,
    /// Always follow an edge already known to win on the spot.
    pub solve_terminal_wins: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 400,
            c_puct: 1.5,
            dirichlet_alpha: Some(0.3),
            noise_weight: 0.25,
            temperature_moves: 8,
            solve_terminal_wins: true,
        }
    }
}

impl SearchConfig {
    /// No root noise, greedy after `temperature_moves` plies.
    pub fn evaluation(iterations: u32, temperature_moves: usize) -> Self {
        SearchConfig { iterations, dirichlet_alpha: None, temperature_moves, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("search iterations must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise_weight) {
            return Err(Error::InvalidConfig(format!("noise weight {} outside [0, 1)", self.noise_weight)));
        }
        if !(self.c_puct >= 0.0) {
            return Err(Error::InvalidConfig("c_puct must be non-negative".into()));
        }
        if let Some(a) = self.dirichlet_alpha {
            if !(a > 0.0) {
                return Err(Error::InvalidConfig("dirichlet alpha must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Leaf evaluator: priors over the legal alias groups and a value for the
/// player to move.
pub trait Evaluator {
    fn evaluate(&self, state: &GameState, groups: &[AliasGroup], rng: &mut dyn RngCore) -> Result<(Vec<f64>, f64)>;

    fn action_spec(&self) -> &ActionTensorSpec;
}

/// Network priors and value.
pub struct NetEvaluator<'a> {
    net: &'a Network,
    state_spec: StateTensorSpec,
    action_spec: ActionTensorSpec,
}

impl<'a> NetEvaluator<'a> {
    pub fn new(net: &'a Network, game: &GameConfig) -> Result<Self> {
        let state_spec = StateTensorSpec::build(game);
        let action_spec = ActionTensorSpec::build(game);
        let cfg = net.config();
        if cfg.c_state != state_spec.num_channels() || cfg.c_action != action_spec.num_channels() {
            return Err(Error::Mismatch(format!(
                "network expects {} state / {} action channels, {} has {} / {}",
                cfg.c_state,
                cfg.c_action,
                game.display_name(),
                state_spec.num_channels(),
                action_spec.num_channels()
            )));
        }
        Ok(NetEvaluator { net, state_spec, action_spec })
    }
}

impl Evaluator for NetEvaluator<'_> {
    fn evaluate(&self, state: &GameState, groups: &[AliasGroup], _: &mut dyn RngCore) -> Result<(Vec<f64>, f64)> {
        let x = encode_state(state, &self.state_spec)?;
        let (logits, value) = self.net.forward(&x, Mode::Eval)?;
        let legal: Vec<usize> = groups.iter().map(|g| g.index.flat(&self.action_spec)).collect();
        Ok((masked_softmax(logits.data(), &legal)?, value))
    }

    fn action_spec(&self) -> &ActionTensorSpec {
        &self.action_spec
    }
}

/// Uniform priors, value from one uniformly random playout. With PUCT this
/// is plain UCT with random rollouts.
pub struct RolloutEvaluator {
    action_spec: ActionTensorSpec,
}

impl RolloutEvaluator {
    pub fn new(game: &GameConfig) -> Self {
        RolloutEvaluator { action_spec: ActionTensorSpec::build(game) }
    }
}

impl Evaluator for RolloutEvaluator {
    fn evaluate(&self, state: &GameState, groups: &[AliasGroup], rng: &mut dyn RngCore) -> Result<(Vec<f64>, f64)> {
        let me = state.to_move();
        let mut s = state.clone();
        while !s.is_terminal() {
            let moves = s.legal_moves()?;
            let mv = moves.choose(rng).expect("ongoing state has moves");
            s = s.apply_unchecked(mv);
        }
        let p = 1.0 / groups.len() as f64;
        Ok((vec![p; groups.len()], s.outcome().reward_for(me)))
    }

    fn action_spec(&self) -> &ActionTensorSpec {
        &self.action_spec
    }
}

/// Uniform priors and zero value, the behaviour of an all-zero network.
pub struct UniformEvaluator {
    action_spec: ActionTensorSpec,
}

impl UniformEvaluator {
    pub fn new(game: &GameConfig) -> Self {
        UniformEvaluator { action_spec: ActionTensorSpec::build(game) }
    }
}

impl Evaluator for UniformEvaluator {
    fn evaluate(&self, _: &GameState, groups: &[AliasGroup], _: &mut dyn RngCore) -> Result<(Vec<f64>, f64)> {
        Ok((vec![1.0 / groups.len() as f64; groups.len()], 0.0))
    }

    fn action_spec(&self) -> &ActionTensorSpec {
        &self.action_spec
    }
}

/// Root statistics for one alias group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupVisits {
    pub index: PolicyIndex,
    pub flat: usize,
    pub moves: Vec<MoveRecord>,
    pub prior: f64,
    pub visits: u32,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// In increasing flat policy index.
    pub groups: Vec<GroupVisits>,
    /// Network (or rollout) value of the root for the player to move.
    pub root_value: f64,
}

impl SearchResult {
    pub fn total_visits(&self) -> u32 {
        self.groups.iter().map(|g| g.visits).sum()
    }
}

struct Edge {
    group: AliasGroup,
    prior: f64,
    n: u32,
    w: f64,
    /// One slot per concrete move in the group.
    children: Vec<Option<usize>>,
    /// Every move in the group ends the game in the mover's favour.
    wins: bool,
}

struct Node {
    state: GameState,
    n: u32,
    edges: Vec<Edge>,
    /// Outcome value for the player to move, when terminal.
    terminal: Option<f64>,
}

fn expand(state: GameState, evaluator: &dyn Evaluator, rng: &mut dyn RngCore) -> Result<(Node, f64)> {
    if state.is_terminal() {
        let v = state.outcome().reward_for(state.to_move());
        return Ok((Node { state, n: 1, edges: Vec::new(), terminal: Some(v) }, v));
    }
    let groups = alias_groups(&state.legal_moves()?, evaluator.action_spec())?;
    let (priors, value) = evaluator.evaluate(&state, &groups, rng)?;
    let edges = groups
        .into_iter()
        .zip(priors)
        .map(|(group, prior)| {
            let k = group.moves.len();
            Edge { group, prior, n: 0, w: 0.0, children: vec![None; k], wins: false }
        })
        .collect();
    Ok((Node { state, n: 1, edges, terminal: None }, value))
}

fn select(node: &Node, c_puct: f64, solve: bool) -> usize {
    if solve {
        if let Some(i) = node.edges.iter().position(|e| e.wins) {
            return i;
        }
    }
    let sqrt_n = f64::from(node.n.max(1)).sqrt();
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, e) in node.edges.iter().enumerate() {
        let q = if e.n == 0 { 0.0 } else { e.w / f64::from(e.n) };
        let score = q + c_puct * e.prior * sqrt_n / (1.0 + f64::from(e.n));
        if score > best.0 {
            best = (score, i);
        }
    }
    best.1
}

/// Runs `config.iterations` simulations from `root`. The root expansion is
/// not an iteration, so group visits sum to exactly `iterations`.
pub fn run_search(
    root: &GameState,
    evaluator: &dyn Evaluator,
    config: &SearchConfig,
    rng: &mut dyn RngCore,
) -> Result<SearchResult> {
    config.validate()?;
    if root.is_terminal() {
        return Err(Error::TerminalRoot);
    }
    let (mut root_node, root_value) = expand(root.clone(), evaluator, rng)?;
    if let (Some(alpha), true) = (config.dirichlet_alpha, root_node.edges.len() > 1) {
        let noise = Dirichlet::new_with_size(alpha, root_node.edges.len())
            .map_err(|e| Error::InvalidConfig(format!("dirichlet: {e}")))?
            .sample(rng);
        let eps = config.noise_weight;
        for (e, n) in root_node.edges.iter_mut().zip(noise) {
            e.prior = (1.0 - eps) * e.prior + eps * n;
        }
    }
    let mut nodes = vec![root_node];
    let mut path: Vec<(usize, usize)> = Vec::new();

    for _ in 0..config.iterations {
        path.clear();
        let mut at = 0;
        let leaf_value = loop {
            if let Some(v) = nodes[at].terminal {
                break v;
            }
            let ei = select(&nodes[at], config.c_puct, config.solve_terminal_wins);
            path.push((at, ei));
            let edge = &nodes[at].edges[ei];
            let k = if edge.children.len() == 1 { 0 } else { rng.gen_range(0..edge.children.len()) };
            match edge.children[k] {
                Some(child) => at = child,
                None => {
                    let mover = nodes[at].state.to_move();
                    let next = nodes[at].state.apply_unchecked(&edge.group.moves[k]);
                    let won = next.outcome().reward_for(mover) > 0.0;
                    let (child, v) = expand(next, evaluator, rng)?;
                    nodes.push(child);
                    let id = nodes.len() - 1;
                    let edge = &mut nodes[at].edges[ei];
                    edge.children[k] = Some(id);
                    if won && edge.children.len() == 1 {
                        edge.wins = true;
                    }
                    at = id;
                    break v;
                }
            }
        };
        // `value` is from the perspective of the player to move at `at`.
        let mut value = leaf_value;
        let mut below = nodes[at].state.to_move();
        for &(ni, ei) in path.iter().rev() {
            let node = &mut nodes[ni];
            if node.state.to_move() != below {
                value = -value;
            }
            below = node.state.to_move();
            node.n += 1;
            let e = &mut node.edges[ei];
            e.n += 1;
            e.w += value;
        }
    }

    let spec = evaluator.action_spec();
    let root = nodes.swap_remove(0);
    let groups = root
        .edges
        .into_iter()
        .map(|e| GroupVisits {
            index: e.group.index,
            flat: e.group.index.flat(spec),
            prior: e.prior,
            visits: e.n,
            q: if e.n == 0 { 0.0 } else { e.w / f64::from(e.n) },
            moves: e.group.moves,
        })
        .collect();
    Ok(SearchResult { groups, root_value })
}

/// Picks a group proportionally to visits while `ply < temperature_moves`,
/// otherwise the most visited (lowest policy index on ties); then a
/// concrete move uniformly within the group.
pub fn select_move(result: &SearchResult, ply: usize, temperature_moves: usize, rng: &mut dyn RngCore) -> Result<MoveRecord> {
    let groups = &result.groups;
    if groups.is_empty() {
        return Err(Error::NoLegalActions);
    }
    let total: u64 = groups.iter().map(|g| u64::from(g.visits)).sum();
    let chosen = if ply < temperature_moves && total > 0 {
        let mut r = rng.gen_range(0..total);
        let mut pick = 0;
        for (i, g) in groups.iter().enumerate() {
            if r < u64::from(g.visits) {
                pick = i;
                break;
            }
            r -= u64::from(g.visits);
        }
        pick
    } else {
        let mut best = 0;
        for (i, g) in groups.iter().enumerate() {
            if g.visits > groups[best].visits {
                best = i;
            }
        }
        best
    };
    let moves = &groups[chosen].moves;
    Ok(if moves.len() == 1 { moves[0] } else { moves[rng.gen_range(0..moves.len())] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Cell, Geometry, PlayerId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ttt() -> GameConfig {
        GameConfig::line_game(Geometry::square(3).unwrap(), 3, None, false, false).unwrap()
    }

    fn play(cfg: GameConfig, cells: &[(usize, usize)]) -> GameState {
        let mut s = GameState::initial(cfg);
        for &(r, c) in cells {
            s = s.apply_move(&MoveRecord::placement(s.to_move(), Cell::new(r, c))).unwrap();
        }
        s
    }

    fn result(visits: &[u32]) -> SearchResult {
        let spec = ActionTensorSpec::placement(1, visits.len());
        let groups = visits
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let index = PolicyIndex { channel: 0, row: 0, col: i };
                GroupVisits {
                    index,
                    flat: index.flat(&spec),
                    moves: vec![MoveRecord::placement(PlayerId::ONE, Cell::new(0, i))],
                    prior: 0.0,
                    visits: v,
                    q: 0.0,
                }
            })
            .collect();
        SearchResult { groups, root_value: 0.0 }
    }

    #[test]
    fn visits_sum_to_iterations() {
        let cfg = ttt();
        let eval = UniformEvaluator::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for it in [1, 7, 100] {
            let r = run_search(&GameState::initial(cfg.clone()), &eval, &SearchConfig { iterations: it, ..Default::default() }, &mut rng).unwrap();
            assert_eq!(r.total_visits(), it);
            assert!(r.groups.iter().all(|g| (-1.0..=1.0).contains(&g.q)));
        }
    }

    #[test]
    fn single_move_takes_everything() {
        // X O X / X O O / O X _ : one empty cell left.
        let s = play(ttt(), &[(0, 0), (0, 1), (0, 2), (1, 1), (1, 0), (1, 2), (2, 1), (2, 0)]);
        assert!(!s.is_terminal());
        let eval = UniformEvaluator::new(&ttt());
        let r = run_search(&s, &eval, &SearchConfig { iterations: 50, ..Default::default() }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].visits, 50);
    }

    #[test]
    fn terminal_root_rejected() {
        let s = play(ttt(), &[(0, 0), (1, 0), (0, 1), (1, 1), (0, 2)]);
        let eval = UniformEvaluator::new(&ttt());
        let err = run_search(&s, &eval, &SearchConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::TerminalRoot)));
    }

    #[test]
    fn finds_immediate_win_without_solver() {
        // X X _ / O O _ / _ _ _ with X to move.
        let s = play(ttt(), &[(0, 0), (1, 0), (0, 1), (1, 1)]);
        let eval = UniformEvaluator::new(&ttt());
        let cfg = SearchConfig { iterations: 400, dirichlet_alpha: None, solve_terminal_wins: false, ..Default::default() };
        let r = run_search(&s, &eval, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let best = r.groups.iter().max_by_key(|g| g.visits).unwrap();
        assert_eq!(best.moves[0].to(), Some(Cell::new(0, 2)));
        assert!(best.q > 0.99);
    }

    #[test]
    fn symmetric_board_spreads_visits() {
        // No line of three fits, so every value the search sees is zero.
        let cfg = GameConfig::line_game(Geometry::square(2).unwrap(), 3, None, false, false).unwrap();
        let eval = UniformEvaluator::new(&cfg);
        let search = SearchConfig { iterations: 200, dirichlet_alpha: None, ..Default::default() };
        for seed in 0..10 {
            let r = run_search(&GameState::initial(cfg.clone()), &eval, &search, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let v: Vec<f64> = r.groups.iter().map(|g| f64::from(g.visits)).collect();
            let mean = v.iter().sum::<f64>() / 4.0;
            assert!(v.iter().all(|x| (x - mean).abs() <= 0.2 * mean), "{v:?}");
        }
    }

    #[test]
    fn reproducible_with_seed() {
        let cfg = ttt();
        let eval = RolloutEvaluator::new(&cfg);
        let s = GameState::initial(cfg);
        let a = run_search(&s, &eval, &SearchConfig::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = run_search(&s, &eval, &SearchConfig::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn select_move_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = result(&[10, 0, 0]);
        for ply in [0, 3, 20] {
            assert_eq!(select_move(&r, ply, 8, &mut rng).unwrap().to(), Some(Cell::new(0, 0)));
        }
        let tie = result(&[3, 5, 5]);
        assert_eq!(select_move(&tie, 9, 8, &mut rng).unwrap().to(), Some(Cell::new(0, 1)));
        let r = result(&[75, 25]);
        let first = (0..1000).filter(|_| select_move(&r, 0, 8, &mut rng).unwrap().to() == Some(Cell::new(0, 0))).count();
        assert!((first as f64 / 1000.0 - 0.75).abs() < 0.05, "{first}");
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(SearchConfig { noise_weight: 1.0, ..Default::default() }.validate().is_err());
        let c: SearchConfig = serde_json::from_str(r#"{"iterations": 50, "dirichlet_alpha": null}"#).unwrap();
        assert_eq!(c.iterations, 50);
        assert_eq!(c.dirichlet_alpha, None);
        assert!(serde_json::from_str::<SearchConfig>(r#"{"iters": 5}"#).is_err());
    }
}
