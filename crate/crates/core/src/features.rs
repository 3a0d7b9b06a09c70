//! Feature encodings of a query node.
//!
//! With `R` nonterminal rule types the layouts are:
//!
//! | mode                 | layout                                   | length   |
//! |----------------------|------------------------------------------|----------|
//! | `type`               | `[type_id]`                              | 1        |
//! | `children`           | child-type bits, index `R` = terminal    | R + 1    |
//! | `path`               | bits for types on node..=root            | R        |
//! | `type+children`      | `[type_id] ++ children`                  | R + 2    |
//! | `type+children+path` | `[type_id] ++ children ++ path`          | 2R + 2   |
//!
//! Bits are set-encoded: a type present several times still sets a single 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::syntax_tree::{NodeId, SyntaxTree, TreeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureMode {
    #[serde(rename = "type")]
    Type,
    #[serde(rename = "children")]
    Children,
    #[serde(rename = "path")]
    Path,
    #[serde(rename = "type+children")]
    TypeChildren,
    #[serde(rename = "type+children+path")]
    TypeChildrenPath,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 5] = [
        FeatureMode::Type,
        FeatureMode::Children,
        FeatureMode::Path,
        FeatureMode::TypeChildren,
        FeatureMode::TypeChildrenPath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Type => "type",
            FeatureMode::Children => "children",
            FeatureMode::Path => "path",
            FeatureMode::TypeChildren => "type+children",
            FeatureMode::TypeChildrenPath => "type+children+path",
        }
    }

    /// Vector length for a grammar with `rule_count` nonterminals.
    pub fn len(self, rule_count: usize) -> usize {
        match self {
            FeatureMode::Type => 1,
            FeatureMode::Children => rule_count + 1,
            FeatureMode::Path => rule_count,
            FeatureMode::TypeChildren => rule_count + 2,
            FeatureMode::TypeChildrenPath => 2 * rule_count + 2,
        }
    }

    fn has_type(self) -> bool {
        matches!(
            self,
            FeatureMode::Type | FeatureMode::TypeChildren | FeatureMode::TypeChildrenPath
        )
    }

    fn has_children(self) -> bool {
        matches!(
            self,
            FeatureMode::Children | FeatureMode::TypeChildren | FeatureMode::TypeChildrenPath
        )
    }

    fn has_path(self) -> bool {
        matches!(self, FeatureMode::Path | FeatureMode::TypeChildrenPath)
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            format!("unknown feature mode `{s}` (expected type, children, path, type+children or type+children+path)")
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mode: FeatureMode,
    pub values: Vec<u32>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Features of node `id` under `mode`.
///
/// For a terminal query node (only possible with grammars that quantify
/// terminals) the type id is the terminal id and the node itself contributes
/// nothing to the path bits.
pub fn extract(tree: &SyntaxTree, id: NodeId, mode: FeatureMode) -> Result<FeatureVector, TreeError> {
    let node = tree.node(id)?;
    let grammar = tree.grammar();
    let r = grammar.rule_count();
    let terminal = grammar.terminal_id();
    let mut values = Vec::with_capacity(mode.len(r));

    if mode.has_type() {
        values.push(node.rule);
    }
    if mode.has_children() {
        let base = values.len();
        values.resize(base + r + 1, 0);
        for child in node.children.iter().filter_map(|&c| tree.get(c)) {
            values[base + child.rule as usize] = 1;
        }
    }
    if mode.has_path() {
        let base = values.len();
        values.resize(base + r, 0);
        let on_path = std::iter::once(node).chain(tree.ancestors(id));
        for n in on_path.filter(|n| n.rule != terminal) {
            values[base + n.rule as usize] = 1;
        }
    }
    Ok(FeatureVector { mode, values })
}
