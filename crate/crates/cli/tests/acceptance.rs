//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Tolerances are fixed constants below. Every oracle here is written
//! independently of the library code it checks.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use polyxfer_core::codec::{
    alias_groups, encode_state, move_to_policy_index, ActionTensorSpec, StateTensorSpec,
};
use polyxfer_core::eval::{play_match, Agent};
use polyxfer_core::mcts::{run_search, NetEvaluator, SearchConfig};
use polyxfer_core::nn::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, masked_softmax, move_priors, save_checkpoint,
    CheckpointMeta, Mode, Network, NetworkConfig, Tensor, TrainingExample,
};
use polyxfer_core::selfplay::{derive_rng, train_loop, TrainConfig, STREAM_INIT};
use polyxfer_core::transfer::{transplant, zhang_shasha_distance, RuleTree, SpecPair, TransferMode};
use polyxfer_core::{Cell, Error, GameConfig, GameState, Geometry, MoveRecord, PlayerId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const IDENTITY_TOL: f64 = 1e-9;
const GRAD_EPS: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_REL_FLOOR: f64 = 1e-6;
const SOFTMAX_TOL: f64 = 1e-12;
const SOFTMAX_SUM_TOL: f64 = 1e-9;
const WIN_VISIT_SHARE: f64 = 0.95;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn rng(tag: u64) -> ChaCha8Rng {
    derive_rng(0xacce, 9, tag, 0)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn line_game(side: usize, win: usize) -> GameConfig {
    GameConfig::line_game(Geometry::square(side).unwrap(), win, None, false, false).unwrap()
}

fn specs(g: &GameConfig) -> (StateTensorSpec, ActionTensorSpec) {
    (StateTensorSpec::build(g), ActionTensorSpec::build(g))
}

/// A random network whose batchnorm layers are far from the identity, so that
/// every parameter group shows up in the outputs.
fn random_net(cfg: NetworkConfig, r: &mut ChaCha8Rng) -> Network {
    let mut net = Network::new(cfg, r).unwrap();
    for (name, t) in net.named_tensors_mut() {
        if name.contains("running_var") {
            t.data_mut().iter_mut().for_each(|v| *v = r.gen_range(0.5..2.0));
        } else if name.contains("running_mean") || name.contains(".bn.") {
            t.data_mut().iter_mut().for_each(|v| *v += r.gen_range(-0.3..0.3));
        }
    }
    net
}

/// Non-terminal positions reached by uniformly random play.
fn random_states(game: &GameConfig, n: usize, r: &mut ChaCha8Rng) -> Vec<GameState> {
    let game = Arc::new(game.clone());
    let mut out = Vec::new();
    while out.len() < n {
        let mut s = GameState::initial(game.clone());
        let stop = r.gen_range(0..game.geometry().cells().count());
        while !s.is_terminal() && s.ply() < stop {
            let moves = s.legal_moves().unwrap();
            s = s.apply_move(moves.choose(r).unwrap()).unwrap();
        }
        if !s.is_terminal() {
            out.push(s);
        }
    }
    out
}

fn priors(net: &Network, s: &GameState, ss: &StateTensorSpec, sa: &ActionTensorSpec) -> (BTreeMap<MoveRecord, f64>, f64) {
    let (logits, v) = net.forward(&encode_state(s, ss).unwrap(), Mode::Eval).unwrap();
    let groups = alias_groups(&s.legal_moves().unwrap(), sa).unwrap();
    (move_priors(logits.data(), &groups, sa).unwrap().into_iter().collect(), v)
}

// 1 ----------------------------------------------------------------------

fn transfer_identity() -> Outcome {
    let game = line_game(5, 4);
    let (ss, sa) = specs(&game);
    let mut cfg = NetworkConfig::for_specs(&ss, &sa);
    cfg.blocks = 1;
    let net = Network::new(cfg, &mut derive_rng(1, STREAM_INIT, 0, 0)).unwrap();
    let train = TrainConfig {
        epochs: 1,
        episodes_per_epoch: 8,
        steps_per_epoch: 8,
        batch_size: 32,
        warmup: 32,
        search: SearchConfig { iterations: 24, ..SearchConfig::default() },
        ..TrainConfig::default()
    };
    let net = train_loop(Arc::new(game.clone()), net, &train, 1, |_, _| Ok(())).map_err(|e| e.to_string())?;

    let mut r = rng(1);
    let mut state_order: Vec<usize> = (0..ss.num_channels()).collect();
    let mut action_order: Vec<usize> = (0..sa.num_channels()).collect();
    while state_order.iter().enumerate().all(|(i, &j)| i == j) {
        state_order.shuffle(&mut r);
    }
    while action_order.iter().enumerate().all(|(i, &j)| i == j) {
        action_order.shuffle(&mut r);
    }
    let (ps, pa) = (ss.permuted(&state_order), sa.permuted(&action_order));
    let t = transplant(
        &net,
        SpecPair { state: &ss, action: &sa },
        SpecPair { state: &ps, action: &pa },
        TransferMode::ZERO_SHOT,
        &mut r,
    )
    .map_err(|e| e.to_string())?;

    let (mut dp, mut dv) = (0.0f64, 0.0f64);
    for s in random_states(&game, 100, &mut r) {
        let (p1, v1) = priors(&net, &s, &ss, &sa);
        let (p2, v2) = priors(&t.network, &s, &ps, &pa);
        check(p1.len() == p2.len(), || "move sets differ".into())?;
        for (m, p) in &p1 {
            dp = dp.max((p - p2[m]).abs());
        }
        dv = dv.max((v1 - v2).abs());
    }
    check(dp < IDENTITY_TOL && dv < IDENTITY_TOL, || format!("max |dp| {dp:.3e}, |dv| {dv:.3e}"))?;
    Ok(format!("state order {state_order:?}, action order {action_order:?}; max |dp| {dp:.1e}, |dv| {dv:.1e}"))
}

// 2, 3 -------------------------------------------------------------------

fn random_input(shape: [usize; 3], r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(&shape, (0..n).map(|_| f64::from(r.gen_range(0..2u8))).collect()).unwrap()
}

fn small_config(c_state: usize, c_action: usize) -> NetworkConfig {
    NetworkConfig { c_state, c_action, hidden_channels: 12, blocks: 1, layers_per_block: 2, value_channels: 3 }
}

fn placement_to_movement() -> Outcome {
    let (ss, sa) = specs(&line_game(5, 4));
    let ta = ActionTensorSpec::movement(5, 5);
    let mut r = rng(2);
    let net = random_net(small_config(ss.num_channels(), sa.num_channels()), &mut r);
    let t = transplant(&net, SpecPair { state: &ss, action: &sa }, SpecPair { state: &ss, action: &ta }, TransferMode::ZERO_SHOT, &mut r)
        .map_err(|e| e.to_string())?;
    let place = sa.placement_channel().unwrap();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for _ in 0..20 {
        let x = random_input(ss.shape(), &mut r);
        let (src, _) = net.forward(&x, Mode::Eval).unwrap();
        let (tgt, _) = t.network.forward(&x, Mode::Eval).unwrap();
        for dr in -3..=3i8 {
            for dc in -3..=3i8 {
                let ch = ta.movement_channel_index(dr, dc).unwrap();
                for row in 0..5 {
                    for col in 0..5 {
                        worst = worst.max((tgt.get(&[ch, row, col]) - src.get(&[place, row, col])).abs());
                        compared += 1;
                    }
                }
            }
        }
    }
    check(worst < IDENTITY_TOL, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("{compared} movement logits, max deviation {worst:.1e}"))
}

fn movement_to_placement() -> Outcome {
    let (ss, _) = specs(&line_game(5, 4));
    let sa = ActionTensorSpec::movement(5, 5);
    let ta = ActionTensorSpec::placement(5, 5);
    let mut r = rng(3);
    let net = random_net(small_config(ss.num_channels(), sa.num_channels()), &mut r);
    let t = transplant(&net, SpecPair { state: &ss, action: &sa }, SpecPair { state: &ss, action: &ta }, TransferMode::ZERO_SHOT, &mut r)
        .map_err(|e| e.to_string())?;
    let still = sa.movement_channel_index(0, 0).unwrap();
    let place = ta.placement_channel().unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = random_input(ss.shape(), &mut r);
        let (src, _) = net.forward(&x, Mode::Eval).unwrap();
        let (tgt, _) = t.network.forward(&x, Mode::Eval).unwrap();
        for row in 0..5 {
            for col in 0..5 {
                worst = worst.max((tgt.get(&[place, row, col]) - src.get(&[still, row, col])).abs());
            }
        }
    }
    check(worst < IDENTITY_TOL, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("placement vs (0,0) channel, max deviation {worst:.1e}"))
}

// 4 ----------------------------------------------------------------------

fn zero_init_contract() -> Outcome {
    let (ss, sa) = specs(&GameConfig::hex(5, false, false).unwrap());
    let (ts, ta) = specs(&GameConfig::hex(5, false, true).unwrap());
    check(ts.num_channels() == ss.num_channels() + 1 && ts.channels[..ss.num_channels()] == ss.channels[..], || {
        "target is not the source plus one trailing channel".into()
    })?;
    let mut r = rng(4);
    let net = random_net(small_config(ss.num_channels(), sa.num_channels()), &mut r);
    let t = transplant(&net, SpecPair { state: &ss, action: &sa }, SpecPair { state: &ts, action: &ta }, TransferMode::ZERO_SHOT, &mut r)
        .map_err(|e| e.to_string())?;
    let plane = 25;
    let (mut worst_pad, mut worst_any) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let x = random_input(ss.shape(), &mut r);
        let (lp, vp) = net.forward(&x, Mode::Eval).unwrap();
        for fill in [None, Some(())] {
            let mut data = x.data().to_vec();
            data.extend((0..plane).map(|_| if fill.is_some() { r.gen_range(-1.0..1.0) } else { 0.0 }));
            let (lt, vt) = t.network.forward(&Tensor::from_vec(&ts.shape(), data).unwrap(), Mode::Eval).unwrap();
            let d = lp.max_abs_diff(&lt).max((vp - vt).abs());
            if fill.is_none() {
                worst_pad = worst_pad.max(d);
            } else {
                worst_any = worst_any.max(d);
            }
        }
    }
    check(worst_pad < IDENTITY_TOL, || format!("zero-padded input deviates by {worst_pad:.3e}"))?;
    check(worst_any < IDENTITY_TOL, || format!("novel channel leaks into outputs: {worst_any:.3e}"))?;
    Ok(format!("zero padding {worst_pad:.1e}, arbitrary novel plane {worst_any:.1e}"))
}

// 5 ----------------------------------------------------------------------

fn random_example(cfg: &NetworkConfig, h: usize, w: usize, r: &mut ChaCha8Rng) -> TrainingExample {
    let state = random_input([cfg.c_state, h, w], r);
    let n = cfg.c_action * h * w;
    let mut legal: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.4)).collect();
    if legal.is_empty() {
        legal.push(r.gen_range(0..n));
    }
    let mut policy = Tensor::zeros(&[cfg.c_action, h, w]);
    let raw: Vec<f64> = legal.iter().map(|_| r.gen_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    for (&i, v) in legal.iter().zip(raw) {
        policy.data_mut()[i] = v / total;
    }
    TrainingExample { state, policy, legal, z: [-1.0, 0.0, 1.0][r.gen_range(0..3)] }
}

fn gradient_check() -> Outcome {
    let cfg = NetworkConfig { c_state: 4, c_action: 2, hidden_channels: 6, blocks: 1, layers_per_block: 2, value_channels: 3 };
    let mut r = rng(5);
    let mut net = random_net(cfg, &mut r);
    let batch: Vec<_> = (0..3).map(|_| random_example(&cfg, 4, 5, &mut r)).collect();
    let grads = net.backward(&batch).map_err(|e| e.to_string())?;
    let names: Vec<String> = net.trainable().into_iter().map(|(n, _)| n).collect();

    // Every trainable tensor once, then random picks up to 200.
    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (k, (_, t)) in net.trainable().iter().enumerate() {
        picks.push((k, r.gen_range(0..t.len())));
    }
    while picks.len() < 200 {
        let k = r.gen_range(0..names.len());
        let len = net.trainable()[k].1.len();
        picks.push((k, r.gen_range(0..len)));
    }
    let mut worst = (0.0f64, String::new());
    for &(k, i) in &picks {
        let orig = net.trainable()[k].1.data()[i];
        net.trainable_mut()[k].1.data_mut()[i] = orig + GRAD_EPS;
        let up = net.batch_loss(&batch).unwrap();
        net.trainable_mut()[k].1.data_mut()[i] = orig - GRAD_EPS;
        let down = net.batch_loss(&batch).unwrap();
        net.trainable_mut()[k].1.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_EPS);
        let analytic = grads.tensors[k].data()[i];
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(GRAD_REL_FLOOR);
        if rel > worst.0 {
            worst = (rel, format!("{}[{i}]", names[k]));
        }
    }
    let covered: BTreeSet<&str> = picks.iter().map(|&(k, _)| names[k].as_str()).collect();
    check(covered.iter().any(|n| n.contains("bn.gamma")) && covered.contains("value.fc.weight") && covered.contains("value.fc.bias"), || {
        "sample misses batchnorm or value-head affine parameters".into()
    })?;
    check(worst.0 < GRAD_REL_TOL, || format!("relative error {:.3e} at {}", worst.0, worst.1))?;
    Ok(format!("{} parameters over {} tensors, max relative error {:.1e}", picks.len(), covered.len(), worst.0))
}

// 6 ----------------------------------------------------------------------

fn aliased_softmax() -> Outcome {
    let mut r = rng(6);
    let (mut worst, mut worst_sum, mut aliased) = (0.0f64, 0.0f64, 0);
    for _ in 0..1000 {
        let side = r.gen_range(4..=9);
        let spec = ActionTensorSpec::movement(side, side);
        let logits: Vec<f64> = (0..spec.len()).map(|_| r.gen_range(-6.0..6.0)).collect();
        let mut moves = BTreeSet::new();
        for _ in 0..r.gen_range(1..80) {
            let from = Cell::new(r.gen_range(0..side), r.gen_range(0..side));
            let to = Cell::new(r.gen_range(0..side), r.gen_range(0..side));
            if from != to {
                moves.insert(MoveRecord::movement(PlayerId::ONE, from, to));
            }
        }
        if moves.is_empty() {
            continue;
        }
        let moves: Vec<MoveRecord> = moves.into_iter().collect();
        let groups = alias_groups(&moves, &spec).unwrap();
        let got = move_priors(&logits, &groups, &spec).unwrap();

        // Brute force: the distinct legal positions, each counted once.
        let index_of: HashMap<MoveRecord, usize> =
            moves.iter().map(|m| (*m, move_to_policy_index(m, &spec).unwrap().flat(&spec))).collect();
        let distinct: BTreeSet<usize> = index_of.values().copied().collect();
        if distinct.len() < moves.len() {
            aliased += 1;
        }
        let z: f64 = distinct.iter().map(|&i| logits[i].exp()).sum();
        for (m, p) in &got {
            worst = worst.max((p - logits[index_of[m]].exp() / z).abs());
        }
        let legal: Vec<usize> = distinct.iter().copied().collect();
        let total: f64 = masked_softmax(&logits, &legal).unwrap().iter().sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
    }
    check(aliased > 100, || format!("only {aliased} instances had aliasing"))?;
    check(worst < SOFTMAX_TOL, || format!("max deviation {worst:.3e}"))?;
    check(worst_sum < SOFTMAX_SUM_TOL, || format!("sum deviates by {worst_sum:.3e}"))?;
    Ok(format!("{aliased} aliased instances, max deviation {worst:.1e}, sum error {worst_sum:.1e}"))
}

// 7 ----------------------------------------------------------------------

/// Ordered forest in preorder as (depth, label) pairs.
type Forest = Vec<(u8, u8)>;

fn all_forests(max_nodes: usize, labels: u8) -> Vec<Forest> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_nodes {
        let mut next = Vec::new();
        for f in &frontier {
            let max_depth = f.last().map_or(0, |&(d, _): &(u8, u8)| d + 1);
            for d in 0..=max_depth {
                for l in 0..labels {
                    let mut g: Forest = f.clone();
                    g.push((d, l));
                    next.push(g);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Deleting node `i` lifts its descendants one level.
fn delete(f: &Forest, i: usize) -> Forest {
    let d = f[i].0;
    let end = (i + 1..f.len()).find(|&j| f[j].0 <= d).unwrap_or(f.len());
    let mut g = f[..i].to_vec();
    g.extend(f[i + 1..end].iter().map(|&(x, l)| (x - 1, l)));
    g.extend_from_slice(&f[end..]);
    g
}

/// Unit-cost edit distances between all forests of at most `max_nodes` nodes,
/// by breadth-first search over single edits. Insertion is the reverse of
/// deletion, so the edit graph is undirected.
fn edit_script_distances(max_nodes: usize, labels: u8) -> (Vec<Forest>, Vec<Vec<usize>>) {
    let forests = all_forests(max_nodes, labels);
    let id: HashMap<&Forest, usize> = forests.iter().enumerate().map(|(i, f)| (f, i)).collect();
    let mut adj = vec![Vec::new(); forests.len()];
    for (a, f) in forests.iter().enumerate() {
        for i in 0..f.len() {
            let b = id[&delete(f, i)];
            adj[a].push(b);
            adj[b].push(a);
            for l in 0..labels {
                if l != f[i].1 {
                    let mut g = f.clone();
                    g[i].1 = l;
                    adj[a].push(id[&g]);
                }
            }
        }
    }
    let dist = (0..forests.len())
        .map(|s| {
            let mut d = vec![usize::MAX; forests.len()];
            d[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if d[v] == usize::MAX {
                        d[v] = d[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            d
        })
        .collect();
    (forests, dist)
}

fn to_tree(f: &[(u8, u8)], names: &[&str]) -> RuleTree {
    fn build(f: &[(u8, u8)], i: &mut usize, names: &[&str]) -> RuleTree {
        let (d, l) = f[*i];
        *i += 1;
        let mut kids = Vec::new();
        while *i < f.len() && f[*i].0 > d {
            kids.push(build(f, i, names));
        }
        RuleTree::node(names[l as usize], kids)
    }
    build(f, &mut 0, names)
}

/// Minimum over edit scripts ordered as deletions, renames, insertions:
/// choose the surviving node sets on both sides; when the induced forests
/// have the same shape, the cost is the dropped nodes plus label changes.
fn kept_set_distance(a: &Forest, b: &Forest) -> usize {
    fn induced(f: &Forest, keep: u32) -> Vec<(usize, u8)> {
        let mut stack: Vec<(u8, Option<usize>)> = Vec::new();
        let mut out = Vec::new();
        for (i, &(d, l)) in f.iter().enumerate() {
            while stack.last().is_some_and(|&(sd, _)| sd >= d) {
                stack.pop();
            }
            let parent = stack.iter().rev().find_map(|&(_, k)| k);
            let depth = (keep >> i & 1 == 1).then(|| parent.map_or(0, |p| p + 1));
            if let Some(depth) = depth {
                out.push((depth, l));
            }
            stack.push((d, depth));
        }
        out
    }
    let mut best = a.len() + b.len();
    for ka in 0u32..1 << a.len() {
        let fa = induced(a, ka);
        for kb in 0u32..1 << b.len() {
            if kb.count_ones() as usize != fa.len() {
                continue;
            }
            let fb = induced(b, kb);
            if fa.iter().zip(&fb).all(|(x, y)| x.0 == y.0) {
                let renames = fa.iter().zip(&fb).filter(|(x, y)| x.1 != y.1).count();
                best = best.min(a.len() + b.len() - 2 * fa.len() + renames);
            }
        }
    }
    best
}

fn random_tree(max_nodes: usize, labels: u8, r: &mut ChaCha8Rng) -> Forest {
    let n = r.gen_range(1..=max_nodes);
    let mut f: Forest = vec![(0, r.gen_range(0..labels))];
    for _ in 1..n {
        let d = r.gen_range(1..=f.last().unwrap().0 + 1);
        f.push((d, r.gen_range(0..labels)));
    }
    f
}

fn zhang_shasha_oracle() -> Outcome {
    let names = ["a", "b", "c"];
    let (forests, dist) = edit_script_distances(4, 2);
    let trees: Vec<usize> = (0..forests.len()).filter(|&i| forests[i].first().is_some_and(|&(d, _)| d == 0) && forests[i][1..].iter().all(|&(d, _)| d > 0)).collect();
    let rule_trees: Vec<RuleTree> = trees.iter().map(|&i| to_tree(&forests[i], &names)).collect();
    let mut pairs = 0;
    for (x, &i) in trees.iter().enumerate() {
        for (y, &j) in trees.iter().enumerate() {
            let zs = zhang_shasha_distance(&rule_trees[x], &rule_trees[y]);
            let kept = kept_set_distance(&forests[i], &forests[j]);
            check(zs == dist[i][j] && kept == dist[i][j], || {
                format!("{} vs {}: zs {zs}, edit scripts {}, kept sets {kept}", rule_trees[x], rule_trees[y], dist[i][j])
            })?;
            pairs += 1;
        }
    }
    let mut r = rng(7);
    for _ in 0..500 {
        let (a, b) = (random_tree(6, 3, &mut r), random_tree(6, 3, &mut r));
        let (ta, tb) = (to_tree(&a, &names), to_tree(&b, &names));
        let zs = zhang_shasha_distance(&ta, &tb);
        let oracle = kept_set_distance(&a, &b);
        check(zs == oracle, || format!("{ta} vs {tb}: zs {zs}, oracle {oracle}"))?;
    }
    Ok(format!("{} trees ({pairs} pairs) against edit-script search, 500 random pairs against kept-set search", trees.len()))
}

// 8 ----------------------------------------------------------------------

/// Tic-tac-toe board: 0 empty, 1 or 2 for the owner.
type Board = [u8; 9];

const LINES: [[usize; 3]; 8] = [[0, 1, 2], [3, 4, 5], [6, 7, 8], [0, 3, 6], [1, 4, 7], [2, 5, 8], [0, 4, 8], [2, 4, 6]];

fn winner(b: &Board) -> Option<u8> {
    LINES.iter().find(|l| b[l[0]] != 0 && b[l[0]] == b[l[1]] && b[l[1]] == b[l[2]]).map(|l| b[l[0]])
}

/// Game value for `to_move`: 1 win, 0 draw, -1 loss.
fn minimax(b: &mut Board, to_move: u8) -> i8 {
    if let Some(w) = winner(b) {
        return if w == to_move { 1 } else { -1 };
    }
    let mut best = None;
    for i in 0..9 {
        if b[i] == 0 {
            b[i] = to_move;
            let v = -minimax(b, 3 - to_move);
            b[i] = 0;
            best = Some(best.map_or(v, |x: i8| x.max(v)));
        }
    }
    best.unwrap_or(0)
}

fn immediate_wins(b: &Board, to_move: u8) -> Vec<usize> {
    (0..9)
        .filter(|&i| {
            let mut c = *b;
            c[i] == 0 && {
                c[i] = to_move;
                winner(&c) == Some(to_move)
            }
        })
        .collect()
}

fn mcts_tactics() -> Outcome {
    let game = line_game(3, 3);
    let (ss, sa) = specs(&game);
    let net = Network::new(NetworkConfig::for_specs(&ss, &sa), &mut derive_rng(8, STREAM_INIT, 0, 0)).unwrap();
    let eval = NetEvaluator::new(&net, &game).map_err(|e| e.to_string())?;
    let search = SearchConfig { iterations: 400, ..SearchConfig::default() };
    let mut r = rng(8);
    let mut seen = BTreeSet::new();
    let mut worst = 1.0f64;
    while seen.len() < 50 {
        let s = random_states(&game, 1, &mut r).pop().unwrap();
        let mut b: Board = [0; 9];
        for cell in game.geometry().cells() {
            b[cell.row * 3 + cell.col] = s.owner(cell).map_or(0, |p| p.id());
        }
        let me = s.to_move().id();
        let wins = immediate_wins(&b, me);
        if wins.is_empty() || !seen.insert(b) {
            continue;
        }
        check(minimax(&mut b.clone(), me) == 1, || format!("oracle disagrees on {b:?}"))?;
        let result = run_search(&s, &eval, &search, &mut r).map_err(|e| e.to_string())?;
        let on_wins: u32 = result
            .groups
            .iter()
            .filter(|g| g.moves.iter().any(|m| m.to().is_some_and(|c| wins.contains(&(c.row * 3 + c.col)))))
            .map(|g| g.visits)
            .sum();
        worst = worst.min(f64::from(on_wins) / f64::from(result.total_visits()));
    }
    check(worst >= WIN_VISIT_SHARE, || format!("lowest share on winning moves {worst:.3}"))?;
    Ok(format!("50 positions, lowest visit share on a winning move {:.1}%", 100.0 * worst))
}

// 9, 10 ------------------------------------------------------------------

struct HexRun {
    game: Arc<GameConfig>,
    trained: Network,
    untrained: Network,
    train_time: Duration,
    episodes: usize,
}

fn hex_desk_config() -> (TrainConfig, NetworkConfig, Arc<GameConfig>) {
    let game = Arc::new(GameConfig::hex(5, false, false).unwrap());
    let (ss, sa) = specs(&game);
    let mut net = NetworkConfig::for_specs(&ss, &sa);
    net.hidden_channels = 4 * ss.num_channels();
    let train = TrainConfig {
        epochs: 10,
        episodes_per_epoch: 50,
        steps_per_epoch: 50,
        ..TrainConfig::default()
    };
    (train, net, game)
}

fn hex_training() -> Result<HexRun, String> {
    let (train, cfg, game) = hex_desk_config();
    let untrained = Network::new(cfg, &mut derive_rng(1, STREAM_INIT, 0, 0)).unwrap();
    let start = Instant::now();
    let mut episodes = 0;
    let trained = train_loop(game.clone(), untrained.clone(), &train, 1, |rep, _| {
        episodes = rep.episodes;
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    Ok(HexRun { game, trained, untrained, train_time: start.elapsed(), episodes })
}

fn eval_search() -> SearchConfig {
    SearchConfig::evaluation(100, 2)
}

fn training_sanity(run: &HexRun) -> Outcome {
    let me = Agent::Mcts { net: Box::new(run.trained.clone()), search: eval_search() };
    let vs_random = play_match(&run.game, &me, &Agent::Random, 100, 11, 1, "c9-random").map_err(|e| e.to_string())?;
    let other = Agent::Mcts { net: Box::new(run.untrained.clone()), search: eval_search() };
    let vs_untrained = play_match(&run.game, &me, &other, 100, 12, 1, "c9-untrained").map_err(|e| e.to_string())?;
    let msg = format!(
        "{} self-play games in {:.0}s; {}/100 vs random, {}/100 vs untrained MCTS(100)",
        run.episodes,
        run.train_time.as_secs_f64(),
        vs_random.wins_a,
        vs_untrained.wins_a
    );
    check(vs_random.wins_a >= 95 && vs_untrained.wins_a >= 65, || msg.clone())?;
    Ok(msg)
}

fn small_to_large(run: &HexRun) -> Outcome {
    let big = Arc::new(GameConfig::hex(7, false, false).unwrap());
    let (ss, sa) = specs(&run.game);
    let (ts, ta) = specs(&big);
    let t = transplant(&run.trained, SpecPair { state: &ss, action: &sa }, SpecPair { state: &ts, action: &ta }, TransferMode::ZERO_SHOT, &mut rng(10))
        .map_err(|e| e.to_string())?;
    let untrained = Network::new(*t.network.config(), &mut derive_rng(2, STREAM_INIT, 0, 0)).unwrap();
    let a = Agent::Mcts { net: Box::new(t.network), search: eval_search() };
    let b = Agent::Mcts { net: Box::new(untrained), search: eval_search() };
    let res = play_match(&big, &a, &b, 100, 13, 1, "c10").map_err(|e| e.to_string())?;
    let msg = format!("zero-shot 5x5 -> 7x7 wins {}/100 vs untrained MCTS(100)", res.wins_a);
    check(res.wins_a >= 60, || msg.clone())?;
    Ok(msg)
}

// 11 ---------------------------------------------------------------------

fn checkpoint_roundtrip() -> Outcome {
    let game = GameConfig::hex(5, false, true).unwrap();
    let (ss, sa) = specs(&game);
    let cfg = NetworkConfig::for_specs(&ss, &sa);
    let mut r = rng(11);
    let net = random_net(cfg, &mut r);
    let meta = CheckpointMeta::new(game, cfg, 17, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&net, &meta, &path).map_err(|e| e.to_string())?;
    let (loaded, meta2) = load_checkpoint(&path).map_err(|e| e.to_string())?;
    check(meta2 == meta, || "metadata changed".into())?;
    let mut values = 0;
    for ((n1, a), (n2, b)) in net.named_tensors().into_iter().zip(loaded.named_tensors()) {
        check(n1 == n2 && a.shape() == b.shape(), || format!("tensor {n1} vs {n2}"))?;
        for (x, y) in a.data().iter().zip(b.data()) {
            check((*x as f32).to_bits() == (*y as f32).to_bits(), || format!("{n1} differs at 32 bits"))?;
            values += 1;
        }
    }
    let bytes = fs::read(&path).unwrap();
    check(encode_checkpoint(&loaded, &meta2).unwrap() == bytes, || "re-encoding changed the bytes".into())?;

    let structured = |b: &[u8]| -> Result<(), String> {
        match decode_checkpoint(b) {
            Err(Error::Checkpoint { .. }) => Ok(()),
            Err(e) => Err(format!("unstructured error {e}")),
            Ok(_) => Err("corrupted file decoded".into()),
        }
    };
    for cut in 0..bytes.len() {
        structured(&bytes[..cut]).map_err(|e| format!("truncated at {cut}: {e}"))?;
    }
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count_at = 12 + meta_len;
    let mut cases: Vec<(&str, Vec<u8>)> = Vec::new();
    let mut edit = |name, at: usize, v: u8| {
        let mut b = bytes.clone();
        b[at] ^= v;
        cases.push((name, b));
    };
    edit("magic", 0, 0x20);
    edit("version", 4, 1);
    edit("metadata length", 8, 1);
    edit("metadata", 12, 0xff);
    edit("tensor count", count_at, 1);
    edit("name", count_at + 6, 1);
    edit("rank", count_at + 6 + "stem.conv.weight".len(), 1);
    edit("dims", count_at + 7 + "stem.conv.weight".len(), 1);
    let mut trailing = bytes.clone();
    trailing.push(0);
    cases.push(("trailing", trailing));
    let mut nan = bytes.clone();
    let end = nan.len();
    nan[end - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
    cases.push(("non-finite", nan));
    for (name, b) in &cases {
        structured(b).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{values} values bit-exact; {} truncations and {} corruptions rejected", bytes.len(), cases.len()))
}

// 12 ---------------------------------------------------------------------

const REPRO_SOURCE: &str = r#"{"game": {"family": "line_game", "board": {"shape": "square", "side": 4}, "win_len": 3},
 "network": {"hidden_channels": 8, "blocks": 1},
 "training": {"epochs": 2, "episodes_per_epoch": 4, "steps_per_epoch": 3, "batch_size": 16, "warmup": 20,
              "search": {"iterations": 16}},
 "eval": {"games": 6, "search": {"iterations": 16, "dirichlet_alpha": null, "temperature_moves": 2}},
 "seed": 2024}"#;

fn run_pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fs::write(dir.join("source.json"), REPRO_SOURCE).unwrap();
    fs::write(dir.join("target.json"), REPRO_SOURCE.replace(r#""side": 4"#, r#""side": 5"#)).unwrap();
    let steps: [&[&str]; 4] = [
        &["train", "--config", "source.json", "--workers", "1", "--out", "run"],
        &["transfer", "run/final.ckpt", "--config", "target.json", "--mode", "finetune", "--reinit-final-layers", "--out", "xfer"],
        &["eval", "xfer/transferred.ckpt", "untrained", "--config", "target.json", "--workers", "1", "--out", "results"],
        &["eval", "run/final.ckpt", "uct", "--config", "source.json", "--workers", "1", "--out", "results"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_polyxfer")).current_dir(dir).args(args).output().unwrap();
        check(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
    }
    let mut files = BTreeMap::new();
    for sub in ["run", "xfer", "results"] {
        for entry in fs::read_dir(dir.join(sub)).unwrap() {
            let p = entry.unwrap().path();
            files.insert(format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), fs::read(&p).unwrap());
        }
    }
    Ok(files)
}

fn reproducibility() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    check(first.keys().eq(second.keys()), || "different file sets".into())?;
    for (name, bytes) in &first {
        check(second[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    let ckpts = first.keys().filter(|k| k.ends_with(".ckpt")).count();
    Ok(format!("{} files identical across two runs ({ckpts} checkpoints)", first.len()))
}

// ------------------------------------------------------------------------

fn run(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(msg) => {
            println!("PASS {id:>2} {name}: {msg} [{secs:.1}s]");
            true
        }
        Err(msg) => {
            println!("FAIL {id:>2} {name}: {msg} [{secs:.1}s]");
            false
        }
    }
}

/// `cargo test --test acceptance -- 3 7` runs only criteria 3 and 7.
fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| only.is_empty() || only.contains(&id);
    let mut ok = true;
    let simple: [Criterion; 8] = [
        (1, "transfer identity", transfer_identity),
        (2, "placement to movement head", placement_to_movement),
        (3, "movement to placement head", movement_to_placement),
        (4, "zero-init contract", zero_init_contract),
        (5, "gradient check", gradient_check),
        (6, "aliased masked softmax", aliased_softmax),
        (7, "zhang-shasha oracle", zhang_shasha_oracle),
        (8, "mcts tactics", mcts_tactics),
    ];
    for (id, name, f) in simple {
        if wanted(id) {
            ok &= run(id, name, f);
        }
    }
    if wanted(9) || wanted(10) {
        let start = Instant::now();
        let hex = panic::catch_unwind(hex_training).unwrap_or_else(|_| Err("training panicked".into()));
        match &hex {
            Ok(h) => {
                if wanted(9) {
                    ok &= run(9, "hex 5x5 training", || training_sanity(h));
                }
                if wanted(10) {
                    ok &= run(10, "hex 5x5 -> 7x7 zero-shot", || small_to_large(h));
                }
            }
            Err(e) => {
                println!("FAIL  9 hex 5x5 training: {e} [{:.1}s]", start.elapsed().as_secs_f64());
                println!("FAIL 10 hex 5x5 -> 7x7 zero-shot: no trained network");
                ok = false;
            }
        }
    }
    if wanted(11) {
        ok &= run(11, "checkpoint round trip", checkpoint_roundtrip);
    }
    if wanted(12) {
        ok &= run(12, "end-to-end reproducibility", reproducibility);
    }
    if !ok {
        std::process::exit(1);
    }
}
