use crate::game::{Cell, GameOutcome, PlayerId};

use super::GameState;

/// Flood-fills the mover's group through `cell` and reports a connection
/// between the mover's two edges. Player 1 joins rows, player 2 columns.
pub(super) fn outcome(state: &GameState, cell: Cell, mover: PlayerId) -> GameOutcome {
    if !connects(state, cell, mover) {
        return GameOutcome::Ongoing;
    }
    if state.config().misere() {
        GameOutcome::Win(mover.opponent())
    } else {
        GameOutcome::Win(mover)
    }
}

pub(super) fn connects(state: &GameState, start: Cell, player: PlayerId) -> bool {
    let g = state.geometry();
    let n = g.side();
    let board = state.board_slice();
    let mut seen = vec![false; g.area()];
    let mut stack = vec![start];
    seen[g.index(start)] = true;
    let (mut low, mut high) = (false, false);
    while let Some(c) = stack.pop() {
        let coord = if player == PlayerId::ONE { c.row } else { c.col };
        low |= coord == 0;
        high |= coord == n - 1;
        if low && high {
            return true;
        }
        for nb in g.rhombus_neighbors_iter(c) {
            let i = g.index(nb);
            if !seen[i] && board[i] == Some(player) {
                seen[i] = true;
                stack.push(nb);
            }
        }
    }
    false
}
