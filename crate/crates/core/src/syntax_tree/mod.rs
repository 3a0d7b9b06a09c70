//! Parse trees with token spans and grammar-derived removability.
//!
//! Trees are persistent values: [`SyntaxTree::remove`] returns a new tree and
//! leaves the receiver untouched. Node ids are assigned breadth-first at parse
//! time (root = 0) and stay stable across removals.

pub mod lexer;
mod parser;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Grammar, Quantifier, RuleId};
use lexer::{Token, TokenClass};

pub use parser::parse;

pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("lex error at line {line}, column {column}: {message}")]
    Lex {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("parse error at token {position} (`{found}`): expected {expected}")]
    Syntax {
        position: usize,
        found: String,
        expected: String,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not syntactically removable")]
    NotRemovable(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    /// Rule-type id, or the grammar's terminal id for leaves.
    pub rule: RuleId,
    /// Half-open token interval `[start, end)` into the tree's token list.
    pub start: usize,
    pub end: usize,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    /// Quantifier of the grammar symbol occurrence that produced this node.
    pub quantifier: Quantifier,
    /// Index of that symbol within its alternative; plus-list siblings share it.
    pub slot: u32,
}

impl Node {
    pub fn weight(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Clone, Debug)]
pub struct SyntaxTree {
    grammar: Arc<Grammar>,
    tokens: Vec<Token>,
    nodes: Vec<Option<Node>>,
    root: NodeId,
}

impl SyntaxTree {
    pub(crate) fn from_parts(
        grammar: Arc<Grammar>,
        tokens: Vec<Token>,
        nodes: Vec<Option<Node>>,
        root: NodeId,
    ) -> SyntaxTree {
        SyntaxTree {
            grammar,
            tokens,
            nodes,
            root,
        }
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.grammar
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id as usize).and_then(Option::as_ref)
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TreeError> {
        self.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.get(id).is_some()
    }

    /// Live nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().flatten()
    }

    pub fn node_count(&self) -> usize {
        self.nodes().count()
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        self.get(id).is_some_and(|n| n.rule == self.grammar.terminal_id())
    }

    /// Tokens covered by a node.
    pub fn node_tokens(&self, id: NodeId) -> &[Token] {
        match self.get(id) {
            Some(n) => &self.tokens[n.start..n.end],
            None => &[],
        }
    }

    /// Space-joined token text of a node.
    pub fn node_text(&self, id: NodeId) -> String {
        self.node_tokens(id)
            .iter()
            .map(|t| &*t.text)
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Whether the token with the given original index is still present.
    pub fn contains_origin(&self, origin: u32) -> bool {
        self.tokens.iter().any(|t| t.origin == origin)
    }

    /// Syntactic removability, derived from the producing quantifier:
    /// optional and star elements always, plus elements while a sibling from
    /// the same list remains, everything else never.
    pub fn is_removable(&self, id: NodeId) -> bool {
        let Some(node) = self.get(id) else {
            return false;
        };
        match node.quantifier {
            Quantifier::One => false,
            Quantifier::Opt | Quantifier::Star => node.parent.is_some(),
            Quantifier::Plus => match node.parent.and_then(|p| self.get(p)) {
                Some(parent) => {
                    parent
                        .children
                        .iter()
                        .filter(|&&c| self.get(c).is_some_and(|s| s.slot == node.slot))
                        .count()
                        >= 2
                }
                None => false,
            },
        }
    }

    /// Ancestors from the parent up to the root.
    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = &Node> {
        let mut next = self.get(id).and_then(|n| n.parent);
        std::iter::from_fn(move || {
            let node = self.get(next?)?;
            next = node.parent;
            Some(node)
        })
    }

    /// Persistent removal of `id` and its subtree.
    pub fn remove(&self, id: NodeId) -> Result<SyntaxTree, TreeError> {
        let node = self.node(id)?;
        if !self.is_removable(id) {
            return Err(TreeError::NotRemovable(id));
        }
        let (start, end) = (node.start, node.end);
        let width = end - start;
        let parent = node.parent.expect("removable nodes have a parent");

        let mut nodes = self.nodes.clone();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if let Some(dead) = nodes[n as usize].take() {
                stack.extend(dead.children);
            }
        }
        if let Some(p) = nodes[parent as usize].as_mut() {
            p.children.retain(|&c| c != id);
        }
        if width > 0 {
            for n in nodes.iter_mut().flatten() {
                if n.start >= end {
                    n.start -= width;
                    n.end -= width;
                } else if n.start <= start && n.end >= end {
                    n.end -= width;
                }
            }
        }

        let mut tokens = Vec::with_capacity(self.tokens.len() - width);
        tokens.extend_from_slice(&self.tokens[..start]);
        tokens.extend_from_slice(&self.tokens[end..]);

        Ok(SyntaxTree {
            grammar: Arc::clone(&self.grammar),
            tokens,
            nodes,
            root: self.root,
        })
    }

    /// Nearest removable nodes, breadth-first, starting at the given nodes
    /// themselves. The result is an anti-chain.
    pub fn removable_frontier(&self, start: &[NodeId]) -> Result<Vec<NodeId>, TreeError> {
        let mut queue = VecDeque::with_capacity(start.len());
        for &id in start {
            self.node(id)?;
            queue.push_back(id);
        }
        let mut frontier = Vec::new();
        while let Some(id) = queue.pop_front() {
            if self.is_removable(id) {
                frontier.push(id);
            } else if let Some(node) = self.get(id) {
                queue.extend(node.children.iter().copied());
            }
        }
        Ok(frontier)
    }

    /// Canonical layout: single spaces between tokens, line breaks after
    /// `;`, `{` and `}`, two-space indentation per brace level.
    pub fn print(&self) -> String {
        let mut out = String::new();
        let mut depth = 0usize;
        let mut line_start = true;
        for (i, tok) in self.tokens.iter().enumerate() {
            let text = &*tok.text;
            if text == "}" {
                depth = depth.saturating_sub(1);
                if !line_start {
                    out.push('\n');
                    line_start = true;
                }
            }
            if line_start {
                for _ in 0..depth {
                    out.push_str("  ");
                }
            } else if needs_space(&self.tokens[i - 1], tok) {
                out.push(' ');
            }
            out.push_str(text);
            line_start = false;

            let next = self.tokens.get(i + 1).map(|t| &*t.text);
            let newline = match text {
                "{" => {
                    depth += 1;
                    true
                }
                ";" => true,
                "}" => next != Some(";"),
                _ => false,
            };
            if newline {
                out.push('\n');
                line_start = true;
            }
        }
        if !line_start {
            out.push('\n');
        }
        out
    }

    /// Structural equality ignoring node ids: same rule types, spans, token
    /// texts and child shapes.
    pub fn shape_eq(&self, other: &SyntaxTree) -> bool {
        if self.tokens.len() != other.tokens.len()
            || self.tokens.iter().zip(&other.tokens).any(|(a, b)| a.text != b.text)
        {
            return false;
        }
        let mut stack = vec![(self.root, other.root)];
        while let Some((a, b)) = stack.pop() {
            let (Some(na), Some(nb)) = (self.get(a), other.get(b)) else {
                return false;
            };
            if na.rule != nb.rule
                || na.start != nb.start
                || na.end != nb.end
                || na.children.len() != nb.children.len()
                || self.is_removable(a) != other.is_removable(b)
            {
                return false;
            }
            stack.extend(na.children.iter().copied().zip(nb.children.iter().copied()));
        }
        true
    }

    /// Serializable view: `{"tokens", "nodes": [{"id","rule","span","children","removable"}], "root"}`.
    pub fn to_json(&self) -> TreeJson {
        TreeJson {
            tokens: self.tokens.iter().map(|t| t.text.to_string()).collect(),
            nodes: self
                .nodes()
                .map(|n| NodeJson {
                    id: n.id,
                    rule: n.rule,
                    span: [n.start, n.end],
                    children: n.children.clone(),
                    removable: self.is_removable(n.id),
                })
                .collect(),
            root: self.root,
        }
    }
}

fn needs_space(prev: &Token, cur: &Token) -> bool {
    let (p, c) = (&*prev.text, &*cur.text);
    if matches!(c, ";" | "," | ")" | ".") || matches!(p, "(" | ".") {
        return false;
    }
    !(c == "(" && prev.class == TokenClass::Ident)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeJson {
    pub tokens: Vec<String>,
    pub nodes: Vec<NodeJson>,
    pub root: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: NodeId,
    pub rule: RuleId,
    pub span: [usize; 2],
    pub children: Vec<NodeId>,
    pub removable: bool,
}
