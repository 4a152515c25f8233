//! Game-independent building blocks: players, cells, moves, outcomes and
//! board geometry.

mod geometry;

pub use geometry::{BoardShape, Direction, Geometry};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// One of the two players. Player 1 always moves first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PlayerId(u8);

impl PlayerId {
    pub const ONE: PlayerId = PlayerId(1);
    pub const TWO: PlayerId = PlayerId(2);

    pub fn new(id: u8) -> Result<Self> {
        match id {
            1 | 2 => Ok(PlayerId(id)),
            _ => Err(Error::InvalidPlayer(id)),
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// Zero-based index, handy for per-player arrays.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn opponent(self) -> Self {
        PlayerId(3 - self.0)
    }

    pub fn both() -> [PlayerId; 2] {
        [PlayerId::ONE, PlayerId::TWO]
    }
}

impl TryFrom<u8> for PlayerId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        PlayerId::new(v)
    }
}

impl From<PlayerId> for u8 {
    fn from(p: PlayerId) -> u8 {
        p.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// A grid position. Bounds and playability are checked against a [`Geometry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// The cell displaced by `(dr, dc)`, or `None` if that leaves the
    /// non-negative quadrant.
    pub fn offset(self, dr: isize, dc: isize) -> Option<Cell> {
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        Some(Cell { row, col })
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Placement,
    Movement,
    Pass,
    Swap,
}

/// A concrete move. Constructors enforce which of `from`/`to` are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MoveRecord {
    kind: MoveKind,
    from: Option<Cell>,
    to: Option<Cell>,
    player: PlayerId,
}

impl MoveRecord {
    pub fn placement(player: PlayerId, to: Cell) -> Self {
        MoveRecord { kind: MoveKind::Placement, from: None, to: Some(to), player }
    }

    pub fn movement(player: PlayerId, from: Cell, to: Cell) -> Self {
        MoveRecord { kind: MoveKind::Movement, from: Some(from), to: Some(to), player }
    }

    pub fn pass(player: PlayerId) -> Self {
        MoveRecord { kind: MoveKind::Pass, from: None, to: None, player }
    }

    pub fn swap(player: PlayerId) -> Self {
        MoveRecord { kind: MoveKind::Swap, from: None, to: None, player }
    }

    pub fn kind(&self) -> MoveKind {
        self.kind
    }

    pub fn from(&self) -> Option<Cell> {
        self.from
    }

    pub fn to(&self) -> Option<Cell> {
        self.to
    }

    pub fn player(&self) -> PlayerId {
        self.player
    }
}

impl fmt::Display for MoveRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.from, self.to) {
            (MoveKind::Placement, _, Some(to)) => write!(f, "{} place {}", self.player, to),
            (MoveKind::Movement, Some(from), Some(to)) => {
                write!(f, "{} move {}->{}", self.player, from, to)
            }
            (MoveKind::Pass, ..) => write!(f, "{} pass", self.player),
            (MoveKind::Swap, ..) => write!(f, "{} swap", self.player),
            _ => write!(f, "{} ?", self.player),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameOutcome {
    Ongoing,
    Win(PlayerId),
    Draw,
}

impl GameOutcome {
    pub fn is_terminal(self) -> bool {
        !matches!(self, GameOutcome::Ongoing)
    }

    /// Terminal reward from `player`'s point of view: +1 win, -1 loss, 0 draw.
    /// Ongoing games score 0.
    pub fn reward_for(self, player: PlayerId) -> f64 {
        match self {
            GameOutcome::Win(p) if p == player => 1.0,
            GameOutcome::Win(_) => -1.0,
            _ => 0.0,
        }
    }
}
