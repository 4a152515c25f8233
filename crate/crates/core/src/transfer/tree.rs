//! Labelled ordered trees and the Zhang-Shasha edit distance between them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{GameConfig, GameFamily};

/// A labelled ordered tree describing the rules attached to a piece type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleTree {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<RuleTree>,
}

impl RuleTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        RuleTree { label: label.into(), children: Vec::new() }
    }

    pub fn node(label: impl Into<String>, children: Vec<RuleTree>) -> Self {
        RuleTree { label: label.into(), children }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(RuleTree::size).sum::<usize>()
    }

    /// Parses the compact form printed by `Display`, e.g. `a(b,c(d))`.
    pub fn parse(s: &str) -> Result<Self> {
        fn parse_at(b: &[u8], pos: &mut usize) -> Result<RuleTree> {
            let start = *pos;
            while *pos < b.len() && !matches!(b[*pos], b'(' | b')' | b',') {
                *pos += 1;
            }
            let label = std::str::from_utf8(&b[start..*pos]).unwrap_or_default().trim();
            if label.is_empty() {
                return Err(Error::InvalidConfig(format!("empty tree label at byte {start}")));
            }
            let mut children = Vec::new();
            if *pos < b.len() && b[*pos] == b'(' {
                *pos += 1;
                loop {
                    children.push(parse_at(b, pos)?);
                    match b.get(*pos) {
                        Some(b',') => *pos += 1,
                        Some(b')') => {
                            *pos += 1;
                            break;
                        }
                        _ => return Err(Error::InvalidConfig("unbalanced tree".into())),
                    }
                }
            }
            Ok(RuleTree::node(label, children))
        }
        let mut pos = 0;
        let t = parse_at(s.as_bytes(), &mut pos)?;
        if pos != s.len() {
            return Err(Error::InvalidConfig(format!("trailing input in tree {s:?}")));
        }
        Ok(t)
    }
}

impl fmt::Display for RuleTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)?;
        if !self.children.is_empty() {
            write!(f, "(")?;
            for (i, c) in self.children.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Name of the single piece type each player owns in `config`.
pub fn piece_type_name(config: &GameConfig) -> &'static str {
    match config.family() {
        GameFamily::Hex | GameFamily::LineGame => "Stone",
        GameFamily::Breakthrough => "Pawn",
    }
}

/// Rule tree for a piece type. The tree captures how the piece moves and
/// captures; end conditions such as line length are not piece rules.
pub fn build_rule_tree(config: &GameConfig, piece_type: &str) -> Result<RuleTree> {
    if piece_type != piece_type_name(config) {
        return Err(Error::InvalidConfig(format!(
            "unknown piece type {piece_type:?} for {}",
            config.display_name()
        )));
    }
    Ok(match config.family() {
        GameFamily::Hex | GameFamily::LineGame => RuleTree::node("piece", vec![RuleTree::leaf("place")]),
        GameFamily::Breakthrough => RuleTree::node(
            "piece",
            vec![
                RuleTree::leaf("forwardStep"),
                RuleTree::leaf("diagonalStep"),
                RuleTree::leaf("diagonalCapture"),
            ],
        ),
    })
}

/// Postorder view of a tree: labels, leftmost-leaf indices, keyroots.
struct Postorder<'a> {
    labels: Vec<&'a str>,
    leftmost: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> Postorder<'a> {
    fn new(tree: &'a RuleTree) -> Self {
        fn walk<'a>(t: &'a RuleTree, labels: &mut Vec<&'a str>, leftmost: &mut Vec<usize>) -> usize {
            let mut first = None;
            for c in &t.children {
                let l = walk(c, labels, leftmost);
                first.get_or_insert(l);
            }
            let idx = labels.len();
            labels.push(&t.label);
            let l = first.unwrap_or(idx);
            leftmost.push(l);
            l
        }
        let mut labels = Vec::new();
        let mut leftmost = Vec::new();
        walk(tree, &mut labels, &mut leftmost);
        // A keyroot is the highest node sharing its leftmost leaf.
        let n = labels.len();
        let mut seen = vec![false; n];
        let mut keyroots = Vec::new();
        for i in (0..n).rev() {
            if !seen[leftmost[i]] {
                seen[leftmost[i]] = true;
                keyroots.push(i);
            }
        }
        keyroots.reverse();
        Postorder { labels, leftmost, keyroots }
    }
}

/// Unit-cost ordered tree edit distance (insert, delete, rename) computed with
/// the keyroot / leftmost-leaf dynamic program.
pub fn zhang_shasha_distance(a: &RuleTree, b: &RuleTree) -> usize {
    let a = Postorder::new(a);
    let b = Postorder::new(b);
    let (n, m) = (a.labels.len(), b.labels.len());
    let mut td = vec![vec![0usize; m]; n];
    // Forest distances, offset by one so index 0 is the empty forest.
    let mut fd = vec![vec![0usize; m + 1]; n + 1];

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let li = a.leftmost[i];
            let lj = b.leftmost[j];
            fd[li][lj] = 0;
            for x in li..=i {
                fd[x + 1][lj] = fd[x][lj] + 1;
            }
            for y in lj..=j {
                fd[li][y + 1] = fd[li][y] + 1;
            }
            for x in li..=i {
                for y in lj..=j {
                    let delete = fd[x][y + 1] + 1;
                    let insert = fd[x + 1][y] + 1;
                    if a.leftmost[x] == li && b.leftmost[y] == lj {
                        let rename = fd[x][y] + usize::from(a.labels[x] != b.labels[y]);
                        fd[x + 1][y + 1] = delete.min(insert).min(rename);
                        td[x][y] = fd[x + 1][y + 1];
                    } else {
                        let subtree = fd[a.leftmost[x]][b.leftmost[y]] + td[x][y];
                        fd[x + 1][y + 1] = delete.min(insert).min(subtree);
                    }
                }
            }
        }
    }
    td[n - 1][m - 1]
}
