use crate::game::{Cell, GameOutcome, MoveRecord, PlayerId};

use super::GameState;

fn forward(p: PlayerId) -> isize {
    if p == PlayerId::ONE {
        1
    } else {
        -1
    }
}

/// Rows of pawns per side: two, or one when two would leave no empty row
/// between the armies.
pub(super) fn home_ranks(side: usize) -> usize {
    2.min((side - 1) / 2)
}

/// Player 1 starts on rows 0-1 and advances to higher rows; player 2 the reverse.
pub(super) fn moves(state: &GameState) -> Vec<MoveRecord> {
    let p = state.to_move();
    let g = state.geometry();
    let f = forward(p);
    let mut out = Vec::new();
    for from in g.cells() {
        if state.owner(from) != Some(p) {
            continue;
        }
        for dc in [-1, 0, 1] {
            let Some(to) = g.step(from, f, dc) else { continue };
            let ok = match state.owner(to) {
                None => true,
                Some(o) => dc != 0 && o != p,
            };
            if ok {
                out.push(MoveRecord::movement(p, from, to));
            }
        }
    }
    out
}

pub(super) fn check(state: &GameState, mv: &MoveRecord) -> Result<(), String> {
    let (Some(from), Some(to)) = (mv.from(), mv.to()) else {
        return Err("movement needs source and destination".into());
    };
    let g = state.geometry();
    let p = state.to_move();
    if !g.is_playable(from) || state.owner(from) != Some(p) {
        return Err(format!("no {p} pawn on {from}"));
    }
    let dr = to.row as isize - from.row as isize;
    let dc = to.col as isize - from.col as isize;
    if !g.is_playable(to) || dr != forward(p) || dc.abs() > 1 {
        return Err(format!("{from}->{to} is not a forward step"));
    }
    match state.owner(to) {
        None => Ok(()),
        Some(o) if o != p && dc != 0 => Ok(()),
        Some(_) => Err(format!("{to} is blocked")),
    }
}

pub(super) fn outcome(state: &GameState, to: Cell, mover: PlayerId) -> GameOutcome {
    let n = state.geometry().side();
    let goal = if mover == PlayerId::ONE { n - 1 } else { 0 };
    if to.row == goal || state.piece_count(mover.opponent()) == 0 {
        GameOutcome::Win(mover)
    } else {
        GameOutcome::Ongoing
    }
}
