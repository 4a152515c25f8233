//! State and action tensor encodings with explicit per-channel semantics.
//!
//! A spec is an ordered list of channel descriptors. Encoding is driven by the
//! descriptors rather than by position, so a permuted spec produces the same
//! data in a permuted channel order. Transfer matches channels on these
//! descriptors only.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{MoveKind, MoveRecord, PlayerId};
use crate::nn::Tensor;
use crate::rules::{GameConfig, GameState};
use crate::transfer::{build_rule_tree, piece_type_name, RuleTree};

/// Meaning of one state channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChannelSemantic {
    PiecePresence { player: PlayerId, piece_type: String, rule_tree: RuleTree },
    ContainerExists { container: usize },
    IsCurrentPlayer { player: PlayerId },
    SwappedRoles,
    LastMoveFrom,
    LastMoveTo,
    SecondLastMoveFrom,
    SecondLastMoveTo,
    StackHeight,
    PieceCount,
    PlayerAmount { player: PlayerId },
    LocalState,
}

impl fmt::Display for ChannelSemantic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ChannelSemantic::*;
        match self {
            PiecePresence { player, piece_type, .. } => write!(f, "piece[{player},{piece_type}]"),
            ContainerExists { container } => write!(f, "container[{container}]"),
            IsCurrentPlayer { player } => write!(f, "current[{player}]"),
            SwappedRoles => write!(f, "swapped"),
            LastMoveFrom => write!(f, "last.from"),
            LastMoveTo => write!(f, "last.to"),
            SecondLastMoveFrom => write!(f, "last2.from"),
            SecondLastMoveTo => write!(f, "last2.to"),
            StackHeight => write!(f, "stack_height"),
            PieceCount => write!(f, "piece_count"),
            PlayerAmount { player } => write!(f, "amount[{player}]"),
            LocalState => write!(f, "local_state"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateTensorSpec {
    pub channels: Vec<ChannelSemantic>,
    pub height: usize,
    pub width: usize,
}

impl StateTensorSpec {
    /// Channel order: board container, player 1 pieces, player 2 pieces,
    /// current-player flags, the four last-move planes, and a swapped-roles
    /// plane when the swap rule is on.
    pub fn build(config: &GameConfig) -> Self {
        let g = config.geometry();
        let piece = piece_type_name(config);
        let tree = build_rule_tree(config, piece).expect("piece type of its own game");
        let mut channels = vec![ChannelSemantic::ContainerExists { container: 0 }];
        for p in PlayerId::both() {
            channels.push(ChannelSemantic::PiecePresence {
                player: p,
                piece_type: piece.to_string(),
                rule_tree: tree.clone(),
            });
        }
        for p in PlayerId::both() {
            channels.push(ChannelSemantic::IsCurrentPlayer { player: p });
        }
        channels.extend([
            ChannelSemantic::LastMoveFrom,
            ChannelSemantic::LastMoveTo,
            ChannelSemantic::SecondLastMoveFrom,
            ChannelSemantic::SecondLastMoveTo,
        ]);
        if config.swap_rule() {
            channels.push(ChannelSemantic::SwappedRoles);
        }
        StateTensorSpec { channels, height: g.height(), width: g.width() }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels.len(), self.height, self.width]
    }

    /// The same channels reordered so that new channel `k` is old channel
    /// `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        StateTensorSpec {
            channels: order.iter().map(|&i| self.channels[i].clone()).collect(),
            height: self.height,
            width: self.width,
        }
    }
}

/// Clamped coordinate difference in `{<=-3, -2, -1, 0, 1, 2, >=3}`.
pub fn movement_bucket(delta: isize) -> i8 {
    delta.clamp(-3, 3) as i8
}

/// Channel index of a movement bucket pair within the 49 movement channels.
pub fn movement_channel(row_bucket: i8, col_bucket: i8) -> usize {
    7 * (row_bucket + 3) as usize + (col_bucket + 3) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActionChannelSemantic {
    Pass,
    Swap,
    Placement,
    Movement { row_bucket: i8, col_bucket: i8 },
}

impl fmt::Display for ActionChannelSemantic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = |v: i8| match v {
            -3 => "<=-3".to_string(),
            3 => ">=3".to_string(),
            v => v.to_string(),
        };
        match self {
            ActionChannelSemantic::Pass => write!(f, "pass"),
            ActionChannelSemantic::Swap => write!(f, "swap"),
            ActionChannelSemantic::Placement => write!(f, "placement"),
            ActionChannelSemantic::Movement { row_bucket, col_bucket } => {
                write!(f, "move[{},{}]", b(*row_bucket), b(*col_bucket))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawActionSpec", into = "RawActionSpec")]
pub struct ActionTensorSpec {
    channels: Vec<ActionChannelSemantic>,
    height: usize,
    width: usize,
    placement: Option<usize>,
    pass: Option<usize>,
    swap: Option<usize>,
    movement: Option<[usize; 49]>,
}

#[derive(Serialize, Deserialize)]
struct RawActionSpec {
    channels: Vec<ActionChannelSemantic>,
    height: usize,
    width: usize,
}

impl TryFrom<RawActionSpec> for ActionTensorSpec {
    type Error = Error;

    fn try_from(r: RawActionSpec) -> Result<Self> {
        ActionTensorSpec::new(r.channels, r.height, r.width)
    }
}

impl From<ActionTensorSpec> for RawActionSpec {
    fn from(s: ActionTensorSpec) -> Self {
        RawActionSpec { channels: s.channels, height: s.height, width: s.width }
    }
}

impl ActionTensorSpec {
    /// Validates the channel list: one placement channel or all 49 movement
    /// channels (never both), plus at most one pass and one swap channel.
    pub fn new(channels: Vec<ActionChannelSemantic>, height: usize, width: usize) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("action spec: {m}")));
        let mut placement = None;
        let mut pass = None;
        let mut swap = None;
        let mut movement = [usize::MAX; 49];
        let mut n_moves = 0;
        for (i, c) in channels.iter().enumerate() {
            let slot = match *c {
                ActionChannelSemantic::Placement => &mut placement,
                ActionChannelSemantic::Pass => &mut pass,
                ActionChannelSemantic::Swap => &mut swap,
                ActionChannelSemantic::Movement { row_bucket, col_bucket } => {
                    if !(-3..=3).contains(&row_bucket) || !(-3..=3).contains(&col_bucket) {
                        return bad(format!("bucket out of range in {c}"));
                    }
                    let k = movement_channel(row_bucket, col_bucket);
                    if movement[k] != usize::MAX {
                        return bad(format!("duplicate channel {c}"));
                    }
                    movement[k] = i;
                    n_moves += 1;
                    continue;
                }
            };
            if slot.replace(i).is_some() {
                return bad(format!("duplicate channel {c}"));
            }
        }
        let movement = match (placement.is_some(), n_moves) {
            (true, 0) => None,
            (false, 49) => Some(movement),
            (true, _) => return bad("placement and movement channels are exclusive".into()),
            (false, n) => return bad(format!("expected one placement or 49 movement channels, got {n}")),
        };
        Ok(ActionTensorSpec { channels, height, width, placement, pass, swap, movement })
    }

    /// Placement games: `[placement, pass, swap]`. Movement games: the 49
    /// movement channels ordered by bucket index, then pass and swap.
    pub fn build(config: &GameConfig) -> Self {
        let g = config.geometry();
        if config.is_placement_game() {
            Self::placement(g.height(), g.width())
        } else {
            Self::movement(g.height(), g.width())
        }
    }

    pub fn placement(height: usize, width: usize) -> Self {
        use ActionChannelSemantic::*;
        Self::new(vec![Placement, Pass, Swap], height, width).expect("well-formed")
    }

    pub fn movement(height: usize, width: usize) -> Self {
        let mut channels: Vec<_> = (-3..=3)
            .flat_map(|r| (-3..=3).map(move |c| ActionChannelSemantic::Movement { row_bucket: r, col_bucket: c }))
            .collect();
        channels.push(ActionChannelSemantic::Pass);
        channels.push(ActionChannelSemantic::Swap);
        Self::new(channels, height, width).expect("well-formed")
    }

    pub fn channels(&self) -> &[ActionChannelSemantic] {
        &self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels.len(), self.height, self.width]
    }

    pub fn len(&self) -> usize {
        self.channels.len() * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_movement(&self) -> bool {
        self.movement.is_some()
    }

    pub fn placement_channel(&self) -> Option<usize> {
        self.placement
    }

    pub fn pass_channel(&self) -> Option<usize> {
        self.pass
    }

    pub fn swap_channel(&self) -> Option<usize> {
        self.swap
    }

    pub fn movement_channel_index(&self, row_bucket: i8, col_bucket: i8) -> Option<usize> {
        self.movement.map(|m| m[movement_channel(row_bucket, col_bucket)])
    }

    /// Same channels in a new order (`new[k] = old[order[k]]`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self::new(order.iter().map(|&i| self.channels[i]).collect(), self.height, self.width)
            .expect("a permutation keeps the spec valid")
    }

    /// Same channels at different spatial dimensions.
    pub fn with_dims(&self, height: usize, width: usize) -> Self {
        ActionTensorSpec { height, width, ..self.clone() }
    }
}

/// Position in a `(C_action, H, W)` policy tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PolicyIndex {
    pub channel: usize,
    pub row: usize,
    pub col: usize,
}

impl PolicyIndex {
    pub fn flat(&self, spec: &ActionTensorSpec) -> usize {
        (self.channel * spec.height + self.row) * spec.width + self.col
    }

    pub fn from_flat(flat: usize, spec: &ActionTensorSpec) -> Self {
        let plane = spec.height * spec.width;
        PolicyIndex { channel: flat / plane, row: flat % plane / spec.width, col: flat % spec.width }
    }
}

pub fn build_state_spec(config: &GameConfig) -> StateTensorSpec {
    StateTensorSpec::build(config)
}

pub fn build_action_spec(config: &GameConfig) -> ActionTensorSpec {
    ActionTensorSpec::build(config)
}

/// Encodes `state` as a `(C, H, W)` tensor following `spec`. Channel kinds
/// the game never produces stay zero.
pub fn encode_state(state: &GameState, spec: &StateTensorSpec) -> Result<Tensor> {
    let g = state.geometry();
    if (g.height(), g.width()) != (spec.height, spec.width) {
        return Err(Error::ShapeMismatch {
            expected: vec![spec.height, spec.width],
            got: vec![g.height(), g.width()],
        });
    }
    let plane = spec.height * spec.width;
    let mut t = Tensor::zeros(&spec.shape());
    let game_piece = piece_type_name(state.config());
    let mark = |out: &mut [f64], cell: Option<crate::game::Cell>| {
        if let Some(c) = cell {
            out[g.index(c)] = 1.0;
        }
    };
    for (k, ch) in spec.channels.iter().enumerate() {
        let out = &mut t.data_mut()[k * plane..(k + 1) * plane];
        match ch {
            ChannelSemantic::ContainerExists { container: 0 } => {
                for (o, &p) in out.iter_mut().zip(g.playable_mask()) {
                    *o = if p { 1.0 } else { 0.0 };
                }
            }
            ChannelSemantic::PiecePresence { player, piece_type, .. } if piece_type == game_piece => {
                for (o, &owner) in out.iter_mut().zip(state.board_slice()) {
                    if owner == Some(*player) {
                        *o = 1.0;
                    }
                }
            }
            ChannelSemantic::IsCurrentPlayer { player } => {
                if state.to_move() == *player {
                    out.fill(1.0);
                }
            }
            ChannelSemantic::SwappedRoles => {
                if state.swapped() {
                    out.fill(1.0);
                }
            }
            ChannelSemantic::LastMoveFrom => mark(out, state.last_move().and_then(|m| m.from())),
            ChannelSemantic::LastMoveTo => mark(out, state.last_move().and_then(|m| m.to())),
            ChannelSemantic::SecondLastMoveFrom => mark(out, state.second_last_move().and_then(|m| m.from())),
            ChannelSemantic::SecondLastMoveTo => mark(out, state.second_last_move().and_then(|m| m.to())),
            _ => {}
        }
    }
    Ok(t)
}

/// Where `mv` lands in the policy tensor. Placements and movements index the
/// destination cell; pass and swap sit at `(0, 0)` of their channel.
pub fn move_to_policy_index(mv: &MoveRecord, spec: &ActionTensorSpec) -> Result<PolicyIndex> {
    let missing = || Error::UnrepresentableMove(*mv);
    let at = |channel: usize, cell: crate::game::Cell| {
        if cell.row < spec.height && cell.col < spec.width {
            Ok(PolicyIndex { channel, row: cell.row, col: cell.col })
        } else {
            Err(missing())
        }
    };
    match mv.kind() {
        MoveKind::Placement => at(spec.placement.ok_or_else(missing)?, mv.to().ok_or_else(missing)?),
        MoveKind::Movement => {
            let (from, to) = (mv.from().ok_or_else(missing)?, mv.to().ok_or_else(missing)?);
            let dr = movement_bucket(to.row as isize - from.row as isize);
            let dc = movement_bucket(to.col as isize - from.col as isize);
            at(spec.movement_channel_index(dr, dc).ok_or_else(missing)?, to)
        }
        MoveKind::Pass => Ok(PolicyIndex { channel: spec.pass.ok_or_else(missing)?, row: 0, col: 0 }),
        MoveKind::Swap => Ok(PolicyIndex { channel: spec.swap.ok_or_else(missing)?, row: 0, col: 0 }),
    }
}

/// Legal moves sharing one policy position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasGroup {
    pub index: PolicyIndex,
    pub moves: Vec<MoveRecord>,
}

/// Partitions `moves` by policy position. Groups come out in increasing flat
/// policy index; moves keep their input order inside a group.
pub fn alias_groups(moves: &[MoveRecord], spec: &ActionTensorSpec) -> Result<Vec<AliasGroup>> {
    if moves.is_empty() {
        return Err(Error::NoLegalActions);
    }
    let mut by_index: BTreeMap<usize, AliasGroup> = BTreeMap::new();
    for mv in moves {
        let index = move_to_policy_index(mv, spec)?;
        by_index
            .entry(index.flat(spec))
            .or_insert_with(|| AliasGroup { index, moves: Vec::new() })
            .moves
            .push(*mv);
    }
    Ok(by_index.into_values().collect())
}

/// Legal moves that decode from one policy position.
pub fn moves_at(index: PolicyIndex, legal: &[MoveRecord], spec: &ActionTensorSpec) -> Vec<MoveRecord> {
    legal
        .iter()
        .filter(|m| move_to_policy_index(m, spec).ok() == Some(index))
        .copied()
        .collect()
}

/// Visit-count training target: each policy cell receives the summed visits
/// of the moves aliased there, normalised to sum to one.
pub fn policy_target_from_visits(visits: &[(MoveRecord, u32)], spec: &ActionTensorSpec) -> Result<Tensor> {
    let total: u64 = visits.iter().map(|&(_, n)| u64::from(n)).sum();
    if total == 0 {
        return Err(Error::ZeroVisits);
    }
    let mut t = Tensor::zeros(&spec.shape());
    for (mv, n) in visits {
        let i = move_to_policy_index(mv, spec)?.flat(spec);
        t.data_mut()[i] += f64::from(*n);
    }
    let total = total as f64;
    t.data_mut().iter_mut().for_each(|v| *v /= total);
    Ok(t)
}
