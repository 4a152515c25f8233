use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::{ActionChannelSemantic, ActionTensorSpec, ChannelSemantic, StateTensorSpec};

use super::zhang_shasha_distance;

/// How a target state channel found its source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "by")]
pub enum MatchKind {
    /// Identical descriptor.
    Exact,
    /// k-th container of the target to k-th container of the source.
    ContainerOrder,
    /// Same player and piece-type name.
    PieceName,
    /// Same player, closest rule tree.
    RuleTree { distance: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateMatch {
    pub source: usize,
    pub kind: MatchKind,
}

/// One entry per target state channel. Each target has at most one source
/// by construction; a source may feed several targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChannelMapping {
    pub targets: Vec<Option<StateMatch>>,
}

impl StateChannelMapping {
    pub fn source_of(&self, target: usize) -> Option<usize> {
        self.targets[target].map(|m| m.source)
    }

    pub fn unmatched(&self) -> Vec<usize> {
        (0..self.targets.len()).filter(|&j| self.targets[j].is_none()).collect()
    }
}

/// One entry per target action channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionChannelMapping {
    pub targets: Vec<Option<usize>>,
}

impl ActionChannelMapping {
    pub fn source_of(&self, target: usize) -> Option<usize> {
        self.targets[target]
    }

    pub fn unmatched(&self) -> Vec<usize> {
        (0..self.targets.len()).filter(|&j| self.targets[j].is_none()).collect()
    }
}

pub fn match_state_channels(src: &StateTensorSpec, tgt: &StateTensorSpec) -> StateChannelMapping {
    let src_containers: Vec<usize> = (0..src.channels.len())
        .filter(|&i| matches!(src.channels[i], ChannelSemantic::ContainerExists { .. }))
        .collect();
    let mut container_rank = 0;
    let targets = tgt
        .channels
        .iter()
        .map(|t| match t {
            ChannelSemantic::ContainerExists { .. } => {
                let m = src_containers.get(container_rank).map(|&source| StateMatch { source, kind: MatchKind::ContainerOrder });
                container_rank += 1;
                m
            }
            ChannelSemantic::PiecePresence { player, piece_type, rule_tree } => {
                let candidates = || {
                    src.channels.iter().enumerate().filter_map(move |(i, s)| match s {
                        ChannelSemantic::PiecePresence { player: sp, piece_type, rule_tree } if sp == player => {
                            Some((i, piece_type, rule_tree))
                        }
                        _ => None,
                    })
                };
                if let Some((i, _, _)) = candidates().find(|(_, name, _)| *name == piece_type) {
                    return Some(StateMatch { source: i, kind: MatchKind::PieceName });
                }
                // Strict `<` keeps the lowest source index on ties.
                let mut best: Option<(usize, usize)> = None;
                for (i, _, tree) in candidates() {
                    let d = zhang_shasha_distance(rule_tree, tree);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((i, d));
                    }
                }
                best.map(|(source, distance)| StateMatch { source, kind: MatchKind::RuleTree { distance } })
            }
            other => src
                .channels
                .iter()
                .position(|s| s == other)
                .map(|source| StateMatch { source, kind: MatchKind::Exact }),
        })
        .collect();
    StateChannelMapping { targets }
}

pub fn match_action_channels(src: &ActionTensorSpec, tgt: &ActionTensorSpec) -> ActionChannelMapping {
    let targets = tgt
        .channels()
        .iter()
        .map(|t| match *t {
            ActionChannelSemantic::Pass => src.pass_channel(),
            ActionChannelSemantic::Swap => src.swap_channel(),
            // A movement with equal source and destination is the only
            // movement that reads as a placement.
            ActionChannelSemantic::Placement => src.placement_channel().or_else(|| src.movement_channel_index(0, 0)),
            // A placement stands for every movement that ends on the cell.
            ActionChannelSemantic::Movement { row_bucket, col_bucket } => {
                src.movement_channel_index(row_bucket, col_bucket).or_else(|| src.placement_channel())
            }
        })
        .collect();
    ActionChannelMapping { targets }
}

/// Plain-text table: every target channel, where it comes from, and how.
pub fn mapping_report(
    src_state: &StateTensorSpec,
    tgt_state: &StateTensorSpec,
    state: &StateChannelMapping,
    src_action: &ActionTensorSpec,
    tgt_action: &ActionTensorSpec,
    action: &ActionChannelMapping,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "state channels ({} -> {})", src_state.num_channels(), tgt_state.num_channels());
    let _ = writeln!(out, "{:>4}  {:<24} {:<24} match", "tgt", "target", "source");
    for (j, (t, m)) in tgt_state.channels.iter().zip(&state.targets).enumerate() {
        let (src, how) = match m {
            None => ("UNMATCHED".to_string(), String::new()),
            Some(StateMatch { source, kind }) => {
                let how = match kind {
                    MatchKind::Exact => "exact".to_string(),
                    MatchKind::ContainerOrder => "container order".to_string(),
                    MatchKind::PieceName => "piece name".to_string(),
                    MatchKind::RuleTree { distance } => format!("rule tree, distance {distance}"),
                };
                (format!("{source}: {}", src_state.channels[*source]), how)
            }
        };
        let _ = writeln!(out, "{j:>4}  {:<24} {src:<24} {how}", t.to_string());
    }
    let _ = writeln!(out, "\naction channels ({} -> {})", src_action.num_channels(), tgt_action.num_channels());
    let _ = writeln!(out, "{:>4}  {:<24} source", "tgt", "target");
    for (j, (t, m)) in tgt_action.channels().iter().zip(&action.targets).enumerate() {
        let src = match m {
            None => "UNMATCHED".to_string(),
            Some(c) => format!("{c}: {}", src_action.channels()[*c]),
        };
        let _ = writeln!(out, "{j:>4}  {:<24} {src}", t.to_string());
    }
    out
}
