//! Quantifier-annotated context-free grammars.
//!
//! Grammars are read from a small JSON format:
//!
//! ```json
//! {"start": "unit",
//!  "rules": [{"name": "unit", "alts": [[{"ref": "item", "q": "star"}]]},
//!            {"name": "item", "alts": [[{"class": "ident", "q": "one"}, {"lit": ";", "q": "one"}]]}]}
//! ```
//!
//! Rule-type identifiers are dense and follow file order: the first rule is 0,
//! the last is `R - 1`, and `R` itself is reserved for terminals.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::syntax_tree::lexer::TokenClass;

/// Dense rule-type identifier. Terminals share the single id `Grammar::terminal_id()`.
pub type RuleId = u32;

const BUNDLED_MINI_C: &str = include_str!("../grammars/mini_c.json");

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("grammar parse error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("rule `{rule}` references undefined rule `{missing}`")]
    UndefinedRule { rule: String, missing: String },
    #[error("duplicate rule name `{0}`")]
    DuplicateRule(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule `{rule}`: {message}")]
    InvalidSymbol { rule: String, message: String },
    #[error("rule `{0}` has no alternatives")]
    NoAlternatives(String),
    #[error("rule `{0}` is left-recursive")]
    LeftRecursive(String),
    #[error("grammar has no rules")]
    Empty,
    #[error("reading grammar {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantifier {
    One,
    Opt,
    Star,
    Plus,
}

impl Quantifier {
    pub fn is_repeated(self) -> bool {
        matches!(self, Quantifier::Star | Quantifier::Plus)
    }

    pub fn is_nullable(self) -> bool {
        matches!(self, Quantifier::Opt | Quantifier::Star)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Symbol {
    Rule(RuleId),
    Literal(String),
    Class(TokenClass),
}

/// One symbol occurrence inside an alternative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Item {
    pub symbol: Symbol,
    pub quantifier: Quantifier,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleDef {
    pub name: String,
    pub alternatives: Vec<Vec<Item>>,
}

#[derive(Clone, Debug)]
pub struct Grammar {
    rules: Vec<RuleDef>,
    start: RuleId,
    ids: HashMap<String, RuleId>,
    keywords: BTreeSet<String>,
    hash: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrammar {
    start: String,
    rules: Vec<RawRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    name: String,
    alts: Vec<Vec<RawItem>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    #[serde(rename = "ref")]
    reference: Option<String>,
    lit: Option<String>,
    class: Option<String>,
    q: Quantifier,
}

/// Reads and validates a grammar file.
pub fn load_grammar(path: impl AsRef<Path>) -> Result<Grammar, GrammarError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GrammarError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Grammar::from_json_str(&text)
}

impl Grammar {
    /// The bundled mini-C grammar.
    pub fn mini_c() -> Grammar {
        Grammar::from_json_str(BUNDLED_MINI_C).expect("bundled grammar is valid")
    }

    /// Raw JSON of the bundled mini-C grammar, for writing it to disk.
    pub fn mini_c_source() -> &'static str {
        BUNDLED_MINI_C
    }

    pub fn from_json_str(text: &str) -> Result<Grammar, GrammarError> {
        let raw: RawGrammar = serde_json::from_str(text).map_err(|e| GrammarError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if raw.rules.is_empty() {
            return Err(GrammarError::Empty);
        }

        let mut ids = HashMap::with_capacity(raw.rules.len());
        for (i, rule) in raw.rules.iter().enumerate() {
            if ids.insert(rule.name.clone(), i as RuleId).is_some() {
                return Err(GrammarError::DuplicateRule(rule.name.clone()));
            }
        }

        let mut keywords = BTreeSet::new();
        let mut rules = Vec::with_capacity(raw.rules.len());
        for rule in &raw.rules {
            if rule.alts.is_empty() {
                return Err(GrammarError::NoAlternatives(rule.name.clone()));
            }
            let mut alternatives = Vec::with_capacity(rule.alts.len());
            for alt in &rule.alts {
                let mut items = Vec::with_capacity(alt.len());
                for item in alt {
                    let symbol = match (&item.reference, &item.lit, &item.class) {
                        (Some(name), None, None) => match ids.get(name) {
                            Some(&id) => Symbol::Rule(id),
                            None => {
                                return Err(GrammarError::UndefinedRule {
                                    rule: rule.name.clone(),
                                    missing: name.clone(),
                                })
                            }
                        },
                        (None, Some(lit), None) => {
                            if lit.is_empty() {
                                return Err(GrammarError::InvalidSymbol {
                                    rule: rule.name.clone(),
                                    message: "empty literal".into(),
                                });
                            }
                            if is_word(lit) {
                                keywords.insert(lit.clone());
                            }
                            Symbol::Literal(lit.clone())
                        }
                        (None, None, Some(class)) => match TokenClass::from_grammar_name(class) {
                            Some(c) => Symbol::Class(c),
                            None => {
                                return Err(GrammarError::InvalidSymbol {
                                    rule: rule.name.clone(),
                                    message: format!("unknown terminal class `{class}`"),
                                })
                            }
                        },
                        _ => {
                            return Err(GrammarError::InvalidSymbol {
                                rule: rule.name.clone(),
                                message: "each symbol needs exactly one of ref, lit, class".into(),
                            })
                        }
                    };
                    items.push(Item {
                        symbol,
                        quantifier: item.q,
                    });
                }
                alternatives.push(items);
            }
            rules.push(RuleDef {
                name: rule.name.clone(),
                alternatives,
            });
        }

        let start = *ids
            .get(&raw.start)
            .ok_or_else(|| GrammarError::UnknownRule(raw.start.clone()))?;

        let grammar = Grammar {
            rules,
            start,
            ids,
            keywords,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        };
        grammar.check_left_recursion()?;
        Ok(grammar)
    }

    pub fn rules(&self) -> &[RuleDef] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> &RuleDef {
        &self.rules[id as usize]
    }

    pub fn start(&self) -> RuleId {
        self.start
    }

    /// Number of nonterminal rule types, `R`.
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// Reserved id for terminals; always equal to `rule_count()`.
    pub fn terminal_id(&self) -> RuleId {
        self.rules.len() as RuleId
    }

    pub fn rule_id(&self, name: &str) -> Result<RuleId, GrammarError> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| GrammarError::UnknownRule(name.to_string()))
    }

    /// Rule name for an id; the terminal id maps to `"terminal"`.
    pub fn rule_name(&self, id: RuleId) -> &str {
        self.rules
            .get(id as usize)
            .map(|r| r.name.as_str())
            .unwrap_or("terminal")
    }

    /// Identifier-shaped literals. The lexer classifies these as keywords.
    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    /// Hex SHA-256 of the grammar source text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn nullable_rules(&self) -> Vec<bool> {
        let mut nullable = vec![false; self.rules.len()];
        loop {
            let mut changed = false;
            for (i, rule) in self.rules.iter().enumerate() {
                if nullable[i] {
                    continue;
                }
                let any = rule
                    .alternatives
                    .iter()
                    .any(|alt| alt.iter().all(|item| item_nullable(item, &nullable)));
                if any {
                    nullable[i] = true;
                    changed = true;
                }
            }
            if !changed {
                return nullable;
            }
        }
    }

    fn check_left_recursion(&self) -> Result<(), GrammarError> {
        let nullable = self.nullable_rules();
        let n = self.rules.len();
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, rule) in self.rules.iter().enumerate() {
            for alt in &rule.alternatives {
                for item in alt {
                    if let Symbol::Rule(target) = item.symbol {
                        edges[i].push(target as usize);
                    }
                    if !item_nullable(item, &nullable) {
                        break;
                    }
                }
            }
        }

        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        for root in 0..n {
            if state[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            state[root] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&target) = edges[node].get(*next) {
                    *next += 1;
                    match state[target] {
                        0 => {
                            state[target] = 1;
                            stack.push((target, 0));
                        }
                        1 => return Err(GrammarError::LeftRecursive(self.rules[target].name.clone())),
                        _ => {}
                    }
                } else {
                    state[node] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }
}

fn item_nullable(item: &Item, nullable: &[bool]) -> bool {
    item.quantifier.is_nullable() || matches!(item.symbol, Symbol::Rule(id) if nullable[id as usize])
}

fn is_word(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Display for Quantifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantifier::One => "one",
            Quantifier::Opt => "opt",
            Quantifier::Star => "star",
            Quantifier::Plus => "plus",
        })
    }
}
