//! Packrat parser driven by a [`Grammar`].
//!
//! Alternatives are ordered (first match wins) and quantifiers are greedy.
//! A rule whose matched alternative is a single `one` reference does not get
//! its own node; the referenced node takes its place. Nonterminals that
//! match no tokens are dropped, except for the root.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::rc::Rc;
use std::sync::Arc;

use crate::grammar::{Grammar, Item, Quantifier, RuleId, Symbol};

use super::lexer::{tokenize, Token};
use super::{Node, NodeId, ParseError, SyntaxTree};

struct PNode {
    rule: RuleId,
    start: usize,
    end: usize,
    children: Vec<PChild>,
}

struct PChild {
    node: Rc<PNode>,
    quantifier: Quantifier,
    slot: u32,
}

type Memo = HashMap<(RuleId, usize), Option<Rc<PNode>>>;

struct Parser<'a> {
    grammar: &'a Grammar,
    tokens: &'a [Token],
    memo: Memo,
    furthest: usize,
    expected: BTreeSet<String>,
}

/// Tokenizes and parses `source` from the grammar's start rule.
pub fn parse(grammar: &Arc<Grammar>, source: &str) -> Result<SyntaxTree, ParseError> {
    let tokens = tokenize(source, grammar.keywords())?;
    let mut parser = Parser {
        grammar,
        tokens: &tokens,
        memo: HashMap::new(),
        furthest: 0,
        expected: BTreeSet::new(),
    };
    let root = match parser.rule(grammar.start(), 0) {
        Some(root) if root.end == tokens.len() => root,
        Some(root) => {
            parser.fail(root.end, "end of input".to_string());
            return Err(parser.error());
        }
        None => return Err(parser.error()),
    };
    let nodes = flatten(&root);
    Ok(SyntaxTree::from_parts(Arc::clone(grammar), tokens, nodes, 0))
}

impl Parser<'_> {
    fn rule(&mut self, rule: RuleId, pos: usize) -> Option<Rc<PNode>> {
        if let Some(hit) = self.memo.get(&(rule, pos)) {
            return hit.clone();
        }
        let result = self.rule_uncached(rule, pos);
        self.memo.insert((rule, pos), result.clone());
        result
    }

    fn rule_uncached(&mut self, rule: RuleId, pos: usize) -> Option<Rc<PNode>> {
        let grammar = self.grammar;
        'alts: for alt in &grammar.rule(rule).alternatives {
            if let [Item {
                symbol: Symbol::Rule(inner),
                quantifier: Quantifier::One,
            }] = alt.as_slice()
            {
                match self.rule(*inner, pos) {
                    Some(node) => return Some(node),
                    None => continue 'alts,
                }
            }

            let mut cursor = pos;
            let mut children = Vec::new();
            for (slot, item) in alt.iter().enumerate() {
                let slot = slot as u32;
                let push = |children: &mut Vec<PChild>, node: Rc<PNode>| {
                    if node.end > node.start || node.rule == grammar.terminal_id() {
                        children.push(PChild {
                            node,
                            quantifier: item.quantifier,
                            slot,
                        });
                    }
                };
                match item.quantifier {
                    Quantifier::One => match self.symbol(&item.symbol, cursor) {
                        Some(node) => {
                            cursor = node.end;
                            push(&mut children, node);
                        }
                        None => continue 'alts,
                    },
                    Quantifier::Opt => {
                        if let Some(node) = self.symbol(&item.symbol, cursor) {
                            cursor = node.end;
                            push(&mut children, node);
                        }
                    }
                    Quantifier::Star | Quantifier::Plus => {
                        let mut count = 0;
                        while let Some(node) = self.symbol(&item.symbol, cursor) {
                            if node.end == cursor {
                                break;
                            }
                            cursor = node.end;
                            count += 1;
                            push(&mut children, node);
                        }
                        if item.quantifier == Quantifier::Plus && count == 0 {
                            continue 'alts;
                        }
                    }
                }
            }
            return Some(Rc::new(PNode {
                rule,
                start: pos,
                end: cursor,
                children,
            }));
        }
        None
    }

    fn symbol(&mut self, symbol: &Symbol, pos: usize) -> Option<Rc<PNode>> {
        match symbol {
            Symbol::Rule(rule) => self.rule(*rule, pos),
            Symbol::Literal(lit) => match self.tokens.get(pos) {
                Some(tok) if &*tok.text == lit.as_str() => Some(self.leaf(pos)),
                _ => {
                    self.fail(pos, format!("`{lit}`"));
                    None
                }
            },
            Symbol::Class(class) => match self.tokens.get(pos) {
                Some(tok) if tok.class == *class => Some(self.leaf(pos)),
                _ => {
                    self.fail(pos, format!("{class:?}").to_lowercase());
                    None
                }
            },
        }
    }

    fn leaf(&self, pos: usize) -> Rc<PNode> {
        Rc::new(PNode {
            rule: self.grammar.terminal_id(),
            start: pos,
            end: pos + 1,
            children: Vec::new(),
        })
    }

    fn fail(&mut self, pos: usize, expected: String) {
        if pos > self.furthest {
            self.furthest = pos;
            self.expected.clear();
        }
        if pos == self.furthest {
            self.expected.insert(expected);
        }
    }

    fn error(&self) -> ParseError {
        ParseError::Syntax {
            position: self.furthest,
            found: self
                .tokens
                .get(self.furthest)
                .map(|t| t.text.to_string())
                .unwrap_or_else(|| "end of input".to_string()),
            expected: self.expected.iter().cloned().collect::<Vec<_>>().join(", "),
        }
    }
}

/// Breadth-first id assignment.
fn flatten(root: &Rc<PNode>) -> Vec<Option<Node>> {
    let mut nodes: Vec<Option<Node>> = Vec::new();
    let mut queue: VecDeque<(Rc<PNode>, Option<NodeId>, Quantifier, u32)> = VecDeque::new();
    queue.push_back((Rc::clone(root), None, Quantifier::One, 0));
    while let Some((pnode, parent, quantifier, slot)) = queue.pop_front() {
        let id = nodes.len() as NodeId;
        if let Some(p) = parent {
            nodes[p as usize].as_mut().unwrap().children.push(id);
        }
        nodes.push(Some(Node {
            id,
            rule: pnode.rule,
            start: pnode.start,
            end: pnode.end,
            children: Vec::with_capacity(pnode.children.len()),
            parent,
            quantifier,
            slot,
        }));
        for child in &pnode.children {
            queue.push_back((Rc::clone(&child.node), Some(id), child.quantifier, child.slot));
        }
    }
    nodes
}
