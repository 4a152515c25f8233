use serde::{Deserialize, Serialize};

use super::Cell;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoardShape {
    Square,
    /// Hexagon of hexagons, embedded in doubled-column offset coordinates.
    Hexhex,
}

/// A line axis as a grid step. Only one half of each axis is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction {
    pub dr: isize,
    pub dc: isize,
}

impl Direction {
    const fn new(dr: isize, dc: isize) -> Self {
        Direction { dr, dc }
    }
}

const ORTHOGONAL: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
const DIAGONAL: [(isize, isize); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];
// Hex adjacency on a rhombus laid out in a square grid.
const RHOMBUS: [(isize, isize); 6] = [(-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0)];
// Hex adjacency in the doubled-column hex-hex embedding.
const HEXHEX: [(isize, isize); 6] = [(-1, -1), (-1, 1), (0, -2), (0, 2), (1, -1), (1, 1)];

/// Board layout: grid dimensions plus which grid positions are real cells.
///
/// Serialized as `{ "shape": ..., "side": ... }`; everything else is derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BoardDef", into = "BoardDef")]
pub struct Geometry {
    shape: BoardShape,
    side: usize,
    height: usize,
    width: usize,
    playable: Vec<bool>,
    playable_count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoardDef {
    shape: BoardShape,
    side: usize,
}

impl TryFrom<BoardDef> for Geometry {
    type Error = Error;

    fn try_from(def: BoardDef) -> Result<Self> {
        Geometry::new(def.shape, def.side)
    }
}

impl From<Geometry> for BoardDef {
    fn from(g: Geometry) -> Self {
        BoardDef { shape: g.shape, side: g.side }
    }
}

impl Geometry {
    pub fn new(shape: BoardShape, side: usize) -> Result<Self> {
        if side < 1 {
            return Err(Error::InvalidConfig(format!("board side must be at least 1, got {side}")));
        }
        let (height, width, playable) = match shape {
            BoardShape::Square => (side, side, vec![true; side * side]),
            BoardShape::Hexhex => {
                let h = 2 * side - 1;
                let w = 4 * side - 3;
                let mut playable = vec![false; h * w];
                for r in 0..h {
                    let offset = r.abs_diff(side - 1);
                    let row_len = h - offset;
                    for q in 0..row_len {
                        playable[r * w + 2 * q + offset] = true;
                    }
                }
                (h, w, playable)
            }
        };
        let playable_count = playable.iter().filter(|&&p| p).count();
        Ok(Geometry { shape, side, height, width, playable, playable_count })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(BoardShape::Square, side)
    }

    pub fn hexhex(side: usize) -> Result<Self> {
        Self::new(BoardShape::Hexhex, side)
    }

    pub fn shape(&self) -> BoardShape {
        self.shape
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn playable_count(&self) -> usize {
        self.playable_count
    }

    /// Row-major playable mask of length `height * width`.
    pub fn playable_mask(&self) -> &[bool] {
        &self.playable
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn is_playable(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.playable[self.index(cell)]
    }

    /// Row-major index. The cell must be in bounds.
    pub fn index(&self, cell: Cell) -> usize {
        debug_assert!(self.in_bounds(cell));
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    /// Playable cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.playable
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(i, _)| self.cell_at(i))
    }

    /// Step from `cell` by `(dr, dc)`, returning the target only if playable.
    pub fn step(&self, cell: Cell, dr: isize, dc: isize) -> Option<Cell> {
        cell.offset(dr, dc).filter(|&c| self.is_playable(c))
    }

    fn collect(&self, cell: Cell, offsets: &[(isize, isize)]) -> Result<Vec<Cell>> {
        if !self.is_playable(cell) {
            return Err(Error::NotPlayable(cell));
        }
        Ok(offsets.iter().filter_map(|&(dr, dc)| self.step(cell, dr, dc)).collect())
    }

    /// Adjacent cells: 4 orthogonal on square boards, 6 hex neighbours on
    /// hex-hex boards.
    pub fn neighbors(&self, cell: Cell) -> Result<Vec<Cell>> {
        match self.shape {
            BoardShape::Square => self.collect(cell, &ORTHOGONAL),
            BoardShape::Hexhex => self.collect(cell, &HEXHEX),
        }
    }

    /// The 4 diagonal neighbours of a square-board cell; hex-hex boards have
    /// none in this sense.
    pub fn diagonal_neighbors(&self, cell: Cell) -> Result<Vec<Cell>> {
        match self.shape {
            BoardShape::Square => self.collect(cell, &DIAGONAL),
            BoardShape::Hexhex => self.collect(cell, &[]),
        }
    }

    /// Hex adjacency on a square grid read as a rhombus, as used by the
    /// connection game. Only meaningful for square boards.
    pub fn rhombus_neighbors(&self, cell: Cell) -> Result<Vec<Cell>> {
        self.collect(cell, &RHOMBUS)
    }

    /// Iterator form of [`Self::rhombus_neighbors`] for hot paths; the cell
    /// must already be known to be playable.
    pub(crate) fn rhombus_neighbors_iter(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        RHOMBUS.iter().filter_map(move |&(dr, dc)| self.step(cell, dr, dc))
    }

    /// Line axes for line-completion rules, one half-axis per line.
    pub fn line_directions(&self, diagonal_only: bool) -> Vec<Direction> {
        let axes: &[(isize, isize)] = match (self.shape, diagonal_only) {
            (BoardShape::Square, false) => &[(0, 1), (1, 0), (1, 1), (1, -1)],
            (BoardShape::Square, true) => &[(1, 1), (1, -1)],
            (BoardShape::Hexhex, false) => &[(0, 2), (1, 1), (1, -1)],
            // Cells joined by an edge that touches exactly one vertex of each.
            (BoardShape::Hexhex, true) => &[(2, 0), (1, 3), (1, -3)],
        };
        axes.iter().map(|&(dr, dc)| Direction::new(dr, dc)).collect()
    }
}
