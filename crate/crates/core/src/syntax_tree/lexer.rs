//! C-like tokenizer shared by every grammar.
//!
//! Identifier-shaped words that appear as literals in the grammar are
//! classified as keywords, so the `ident` class never matches them.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ParseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenClass {
    Ident,
    Int,
    Str,
    Keyword,
    Punct,
}

impl TokenClass {
    /// Maps the `class` field of a grammar symbol.
    pub fn from_grammar_name(name: &str) -> Option<TokenClass> {
        match name {
            "ident" => Some(TokenClass::Ident),
            "int" => Some(TokenClass::Int),
            "string" => Some(TokenClass::Str),
            _ => None,
        }
    }
}

/// A token plus the index it had in the originally parsed source. The
/// origin survives removals, so it identifies "the same token" across
/// reduction steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: Arc<str>,
    pub class: TokenClass,
    pub origin: u32,
}

const PUNCT: &str = "{}()[];,.=+-*/%<>!&|^~?:";

pub fn tokenize(source: &str, keywords: &BTreeSet<String>) -> Result<Vec<Token>, ParseError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let (mut line, mut col) = (1usize, 1usize);

    macro_rules! advance {
        ($n:expr) => {{
            for &b in &bytes[i..i + $n] {
                if b == b'\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            i += $n;
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            advance!(1);
            continue;
        }
        if source[i..].starts_with("//") {
            let len = source[i..].find('\n').unwrap_or(bytes.len() - i);
            advance!(len);
            continue;
        }
        if source[i..].starts_with("/*") {
            match source[i + 2..].find("*/") {
                Some(end) => {
                    advance!(end + 4);
                    continue;
                }
                None => {
                    return Err(ParseError::Lex {
                        line,
                        column: col,
                        message: "unterminated block comment".into(),
                    })
                }
            }
        }

        let start = i;
        let class = if c.is_ascii_alphabetic() || c == b'_' {
            let len = bytes[i..]
                .iter()
                .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_')
                .count();
            advance!(len);
            if keywords.contains(&source[start..i]) {
                TokenClass::Keyword
            } else {
                TokenClass::Ident
            }
        } else if c.is_ascii_digit() {
            let len = bytes[i..].iter().take_while(|b| b.is_ascii_alphanumeric()).count();
            if !bytes[i..i + len].iter().all(u8::is_ascii_digit) {
                return Err(ParseError::Lex {
                    line,
                    column: col,
                    message: format!("malformed number `{}`", &source[i..i + len]),
                });
            }
            advance!(len);
            TokenClass::Int
        } else if c == b'"' {
            let mut j = i + 1;
            loop {
                match bytes.get(j) {
                    Some(b'\\') => j += 2,
                    Some(b'"') => break,
                    Some(b'\n') | None => {
                        return Err(ParseError::Lex {
                            line,
                            column: col,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some(_) => j += 1,
                }
            }
            advance!(j + 1 - i);
            TokenClass::Str
        } else if PUNCT.as_bytes().contains(&c) {
            advance!(1);
            TokenClass::Punct
        } else {
            let ch = source[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Lex {
                line,
                column: col,
                message: format!("unexpected character `{ch}`"),
            });
        };
        tokens.push(Token {
            text: Arc::from(&source[start..i]),
            class,
            origin: tokens.len() as u32,
        });
    }
    Ok(tokens)
}
