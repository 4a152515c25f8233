//! Channel matching between a source and a target domain, and the parameter
//! transplant it drives.

mod mapping;
mod transplant;
mod tree;

pub use mapping::{
    mapping_report, match_action_channels, match_state_channels, ActionChannelMapping, MatchKind, StateChannelMapping,
    StateMatch,
};
pub use transplant::{reinit_final_layers, remap_state_tensor, transplant, InitKind, SpecPair, TransferMode, Transplant};
pub use tree::{build_rule_tree, piece_type_name, zhang_shasha_distance, RuleTree};
