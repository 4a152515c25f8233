//! Rule implementations behind one state type: Hex (and misère Hex), the
//! line-completion family, and Breakthrough.

mod breakthrough;
mod hex;
mod line;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BoardShape, Cell, GameOutcome, Geometry, MoveKind, MoveRecord, PlayerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameFamily {
    Hex,
    LineGame,
    Breakthrough,
}

/// Rules and board of one game variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGameConfig", into = "RawGameConfig")]
pub struct GameConfig {
    name: Option<String>,
    family: GameFamily,
    board: Geometry,
    misere: bool,
    win_len: usize,
    loss_len: Option<usize>,
    diagonal_only: bool,
    swap_rule: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGameConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    family: GameFamily,
    board: Geometry,
    #[serde(default)]
    misere: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    win_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss_len: Option<usize>,
    #[serde(default)]
    diagonal_only: bool,
    #[serde(default)]
    swap_rule: bool,
}

impl TryFrom<RawGameConfig> for GameConfig {
    type Error = Error;

    fn try_from(raw: RawGameConfig) -> Result<Self> {
        let win_len = match (raw.family, raw.win_len) {
            (GameFamily::LineGame, Some(w)) => w,
            (GameFamily::LineGame, None) => {
                return Err(Error::InvalidConfig("line_game requires `win_len`".into()))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidConfig("`win_len` only applies to line_game".into()))
            }
            (_, None) => 0,
        };
        let cfg = GameConfig {
            name: raw.name,
            family: raw.family,
            board: raw.board,
            misere: raw.misere,
            win_len,
            loss_len: raw.loss_len,
            diagonal_only: raw.diagonal_only,
            swap_rule: raw.swap_rule,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<GameConfig> for RawGameConfig {
    fn from(c: GameConfig) -> Self {
        RawGameConfig {
            name: c.name,
            family: c.family,
            board: c.board,
            misere: c.misere,
            win_len: (c.family == GameFamily::LineGame).then_some(c.win_len),
            loss_len: c.loss_len,
            diagonal_only: c.diagonal_only,
            swap_rule: c.swap_rule,
        }
    }
}

impl GameConfig {
    /// Hex on an `side`×`side` rhombus. Player 1 joins top and bottom rows,
    /// player 2 joins left and right columns.
    pub fn hex(side: usize, misere: bool, swap_rule: bool) -> Result<Self> {
        let cfg = GameConfig {
            name: None,
            family: GameFamily::Hex,
            board: Geometry::square(side)?,
            misere,
            win_len: 0,
            loss_len: None,
            diagonal_only: false,
            swap_rule,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn line_game(
        board: Geometry,
        win_len: usize,
        loss_len: Option<usize>,
        diagonal_only: bool,
        swap_rule: bool,
    ) -> Result<Self> {
        let cfg = GameConfig {
            name: None,
            family: GameFamily::LineGame,
            board,
            misere: false,
            win_len,
            loss_len,
            diagonal_only,
            swap_rule,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn breakthrough(side: usize) -> Result<Self> {
        let cfg = GameConfig {
            name: None,
            family: GameFamily::Breakthrough,
            board: Geometry::square(side)?,
            misere: false,
            win_len: 0,
            loss_len: None,
            diagonal_only: false,
            swap_rule: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.misere && self.family != GameFamily::Hex {
            return bad("`misere` only applies to hex");
        }
        if self.diagonal_only && self.family != GameFamily::LineGame {
            return bad("`diagonal_only` only applies to line_game");
        }
        if self.loss_len.is_some() && self.family != GameFamily::LineGame {
            return bad("`loss_len` only applies to line_game");
        }
        match self.family {
            GameFamily::Hex => {
                if self.board.shape() != BoardShape::Square {
                    return bad("hex is played on a square (rhombus) board");
                }
            }
            GameFamily::LineGame => {
                if self.win_len < 1 {
                    return bad("`win_len` must be at least 1");
                }
                if let Some(l) = self.loss_len {
                    if l < 1 || l >= self.win_len {
                        return bad("`loss_len` must satisfy 1 <= loss_len < win_len");
                    }
                }
            }
            GameFamily::Breakthrough => {
                if self.board.shape() != BoardShape::Square || self.board.side() < 4 {
                    return bad("breakthrough requires a square board with side >= 4");
                }
                if self.swap_rule {
                    return bad("the swap rule only applies to placement games");
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> GameFamily {
        self.family
    }

    pub fn geometry(&self) -> &Geometry {
        &self.board
    }

    pub fn misere(&self) -> bool {
        self.misere
    }

    pub fn win_len(&self) -> usize {
        self.win_len
    }

    pub fn loss_len(&self) -> Option<usize> {
        self.loss_len
    }

    pub fn diagonal_only(&self) -> bool {
        self.diagonal_only
    }

    pub fn swap_rule(&self) -> bool {
        self.swap_rule
    }

    pub fn is_placement_game(&self) -> bool {
        self.family != GameFamily::Breakthrough
    }

    /// Upper bound on game length in plies.
    pub fn max_plies(&self) -> usize {
        let n = self.board.playable_count();
        match self.family {
            GameFamily::Breakthrough => 4 * n,
            _ => n + usize::from(self.swap_rule),
        }
    }

    /// The configured name, or a descriptive default.
    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let g = &self.board;
        let board = match g.shape() {
            BoardShape::Square => format!("{0}x{0}", g.side()),
            BoardShape::Hexhex => format!("hexhex{}", g.side()),
        };
        let swap = if self.swap_rule { "-swap" } else { "" };
        match self.family {
            GameFamily::Hex if self.misere => format!("misere-hex-{board}{swap}"),
            GameFamily::Hex => format!("hex-{board}{swap}"),
            GameFamily::LineGame => {
                let kind = if self.diagonal_only { "broken-line" } else { "line" };
                let loss = self.loss_len.map(|l| format!("-l{l}")).unwrap_or_default();
                format!("{kind}-{board}-w{}{loss}{swap}", self.win_len)
            }
            GameFamily::Breakthrough => format!("breakthrough-{board}"),
        }
    }
}

/// An immutable game position. Cloning is cheap apart from the board vector.
#[derive(Clone, PartialEq, Eq)]
pub struct GameState {
    config: Arc<GameConfig>,
    board: Vec<Option<PlayerId>>,
    pieces: [usize; 2],
    empty: usize,
    to_move: PlayerId,
    swapped: bool,
    last: Option<MoveRecord>,
    second_last: Option<MoveRecord>,
    ply: usize,
    outcome: GameOutcome,
}

impl fmt::Debug for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ply {} to move {} {:?}", self.config.display_name(), self.ply, self.to_move, self.outcome)?;
        let g = self.config.geometry();
        for r in 0..g.height() {
            for c in 0..g.width() {
                let cell = Cell::new(r, c);
                let ch = if !g.is_playable(cell) {
                    ' '
                } else {
                    match self.owner(cell) {
                        None => '.',
                        Some(PlayerId::ONE) => 'X',
                        Some(_) => 'O',
                    }
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl GameState {
    pub fn initial(config: impl Into<Arc<GameConfig>>) -> Self {
        let config = config.into();
        let g = config.geometry();
        let mut board = vec![None; g.area()];
        let mut pieces = [0, 0];
        if config.family() == GameFamily::Breakthrough {
            let n = g.side();
            for c in 0..n {
                for r in 0..breakthrough::home_ranks(n) {
                    board[g.index(Cell::new(r, c))] = Some(PlayerId::ONE);
                    board[g.index(Cell::new(n - 1 - r, c))] = Some(PlayerId::TWO);
                }
            }
            pieces = [breakthrough::home_ranks(n) * n; 2];
        }
        let empty = g.playable_count() - pieces[0] - pieces[1];
        GameState {
            config,
            board,
            pieces,
            empty,
            to_move: PlayerId::ONE,
            swapped: false,
            last: None,
            second_last: None,
            ply: 0,
            outcome: GameOutcome::Ongoing,
        }
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn shared_config(&self) -> &Arc<GameConfig> {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        self.config.geometry()
    }

    pub fn owner(&self, cell: Cell) -> Option<PlayerId> {
        let g = self.geometry();
        if !g.is_playable(cell) {
            return None;
        }
        self.board[g.index(cell)]
    }

    pub fn to_move(&self) -> PlayerId {
        self.to_move
    }

    pub fn swapped(&self) -> bool {
        self.swapped
    }

    pub fn last_move(&self) -> Option<&MoveRecord> {
        self.last.as_ref()
    }

    pub fn second_last_move(&self) -> Option<&MoveRecord> {
        self.second_last.as_ref()
    }

    pub fn ply(&self) -> usize {
        self.ply
    }

    pub fn piece_count(&self, player: PlayerId) -> usize {
        self.pieces[player.index()]
    }

    pub fn outcome(&self) -> GameOutcome {
        self.outcome
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome.is_terminal()
    }

    fn swap_available(&self) -> bool {
        self.config.swap_rule() && self.ply == 1 && !self.swapped && self.config.is_placement_game()
    }

    pub fn legal_moves(&self) -> Result<Vec<MoveRecord>> {
        if self.is_terminal() {
            return Err(Error::GameOver);
        }
        let p = self.to_move;
        let mut moves = match self.config.family() {
            GameFamily::Breakthrough => breakthrough::moves(self),
            _ => {
                let g = self.geometry();
                let mut v: Vec<MoveRecord> = g
                    .cells()
                    .filter(|&c| self.board[g.index(c)].is_none())
                    .map(|c| MoveRecord::placement(p, c))
                    .collect();
                if self.swap_available() {
                    v.push(MoveRecord::swap(p));
                }
                v
            }
        };
        if moves.is_empty() {
            moves.push(MoveRecord::pass(p));
        }
        Ok(moves)
    }

    pub fn is_legal(&self, mv: &MoveRecord) -> Result<(), String> {
        if self.is_terminal() {
            return Err("game is over".into());
        }
        if mv.player() != self.to_move {
            return Err(format!("{} is to move", self.to_move));
        }
        let g = self.geometry();
        match (self.config.family(), mv.kind()) {
            (GameFamily::Breakthrough, MoveKind::Movement) => breakthrough::check(self, mv),
            (GameFamily::Hex | GameFamily::LineGame, MoveKind::Placement) => {
                let to = mv.to().expect("placement has a destination");
                if !g.is_playable(to) {
                    return Err(format!("{to} is not playable"));
                }
                if self.board[g.index(to)].is_some() {
                    return Err(format!("{to} is occupied"));
                }
                Ok(())
            }
            (_, MoveKind::Swap) if self.swap_available() => Ok(()),
            (_, MoveKind::Pass) => match self.legal_moves() {
                Ok(ms) if ms.iter().any(|m| m.kind() == MoveKind::Pass) => Ok(()),
                _ => Err("passing is only allowed without other moves".into()),
            },
            (_, kind) => Err(format!("{kind:?} is not available here")),
        }
    }

    pub fn apply_move(&self, mv: &MoveRecord) -> Result<GameState> {
        self.is_legal(mv)
            .map_err(|reason| Error::IllegalMove { mv: *mv, reason })?;
        Ok(self.apply_unchecked(mv))
    }

    /// Applies a move already known to be legal (for instance one returned by
    /// [`Self::legal_moves`]).
    pub fn apply_unchecked(&self, mv: &MoveRecord) -> GameState {
        let mut next = self.clone();
        let p = self.to_move;
        let g = self.config.geometry();
        let mut touched = None;
        match mv.kind() {
            MoveKind::Placement => {
                let to = mv.to().expect("placement has a destination");
                next.board[g.index(to)] = Some(p);
                next.pieces[p.index()] += 1;
                next.empty -= 1;
                touched = Some(to);
            }
            MoveKind::Movement => {
                let from = mv.from().expect("movement has a source");
                let to = mv.to().expect("movement has a destination");
                let captured = next.board[g.index(to)];
                if let Some(victim) = captured {
                    next.pieces[victim.index()] -= 1;
                } else {
                    next.empty -= 1;
                }
                next.board[g.index(from)] = None;
                next.empty += 1;
                next.board[g.index(to)] = Some(p);
                touched = Some(to);
            }
            MoveKind::Swap => {
                // Pie rule: the opener's single stone changes colour.
                let opp = p.opponent();
                let idx = next
                    .board
                    .iter()
                    .position(|&o| o == Some(opp))
                    .expect("swap follows exactly one opening stone");
                next.board[idx] = Some(p);
                next.pieces[opp.index()] -= 1;
                next.pieces[p.index()] += 1;
                next.swapped = true;
                touched = Some(g.cell_at(idx));
            }
            MoveKind::Pass => {}
        }
        next.second_last = next.last.take();
        next.last = Some(*mv);
        next.ply += 1;
        next.to_move = p.opponent();
        next.outcome = match touched {
            Some(cell) => next.evaluate(cell, p),
            None => GameOutcome::Ongoing,
        };
        debug_assert!(next.ply <= self.config.max_plies() || next.is_terminal());
        next
    }

    /// Outcome after `mover` changed `cell`.
    fn evaluate(&self, cell: Cell, mover: PlayerId) -> GameOutcome {
        let outcome = match self.config.family() {
            GameFamily::Hex => hex::outcome(self, cell, mover),
            GameFamily::LineGame => line::outcome(self, cell, mover),
            GameFamily::Breakthrough => breakthrough::outcome(self, cell, mover),
        };
        if outcome == GameOutcome::Ongoing && self.empty == 0 && self.config.is_placement_game() {
            return GameOutcome::Draw;
        }
        outcome
    }

    pub(crate) fn board_slice(&self) -> &[Option<PlayerId>] {
        &self.board
    }
}
