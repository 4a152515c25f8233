use crate::game::{Cell, GameOutcome, PlayerId};

use super::GameState;

/// Length of the mover's run through `cell` along each allowed axis. A run of
/// at least `win_len` wins; otherwise a run of exactly `loss_len` loses.
pub(super) fn outcome(state: &GameState, cell: Cell, mover: PlayerId) -> GameOutcome {
    let cfg = state.config();
    let g = state.geometry();
    let mut loses = false;
    for d in g.line_directions(cfg.diagonal_only()) {
        let run = 1 + ray(state, cell, mover, d.dr, d.dc) + ray(state, cell, mover, -d.dr, -d.dc);
        if run >= cfg.win_len() {
            return GameOutcome::Win(mover);
        }
        loses |= cfg.loss_len() == Some(run);
    }
    if loses {
        GameOutcome::Win(mover.opponent())
    } else {
        GameOutcome::Ongoing
    }
}

fn ray(state: &GameState, start: Cell, player: PlayerId, dr: isize, dc: isize) -> usize {
    let g = state.geometry();
    let mut n = 0;
    let mut cur = start;
    while let Some(next) = g.step(cur, dr, dc) {
        if state.owner(next) != Some(player) {
            break;
        }
        n += 1;
        cur = next;
    }
    n
}
