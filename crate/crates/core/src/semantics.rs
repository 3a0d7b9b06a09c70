//! Semantic checker for the bundled mini-C language.
//!
//! Reports a closed set of issue kinds (undeclared identifiers and struct
//! tags, empty declarations, excess call arguments, missing type
//! specifiers). An empty report means the program is semantically valid.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grammar::{Grammar, GrammarError, RuleId};
use crate::syntax_tree::lexer::TokenClass;
use crate::syntax_tree::{Node, NodeId, SyntaxTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IssueCode {
    UndeclaredIdentifier,
    UndeclaredType,
    EmptyDeclaration,
    TooManyArguments,
    MissingTypeSpecifier,
}

impl IssueCode {
    pub const ALL: [IssueCode; 5] = [
        IssueCode::UndeclaredIdentifier,
        IssueCode::UndeclaredType,
        IssueCode::EmptyDeclaration,
        IssueCode::TooManyArguments,
        IssueCode::MissingTypeSpecifier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::UndeclaredIdentifier => "UndeclaredIdentifier",
            IssueCode::UndeclaredType => "UndeclaredType",
            IssueCode::EmptyDeclaration => "EmptyDeclaration",
            IssueCode::TooManyArguments => "TooManyArguments",
            IssueCode::MissingTypeSpecifier => "MissingTypeSpecifier",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IssueCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IssueCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown issue code `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticIssue {
    pub code: IssueCode,
    pub subject: String,
    /// Token index in the checked tree.
    pub location: usize,
}

impl fmt::Display for SemanticIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} @{}", self.code, self.subject, self.location)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeclKind {
    Variable,
    Function { arity: usize },
}

#[derive(Default, Debug, Clone)]
struct Scope {
    names: HashMap<String, DeclKind>,
    /// Struct tag -> whether a body has been seen.
    tags: HashMap<String, bool>,
}

/// Lexical scopes, innermost last. Ordinary identifiers and struct tags live
/// in separate namespaces.
#[derive(Debug, Clone)]
pub struct ScopeTable {
    scopes: Vec<Scope>,
}

impl Default for ScopeTable {
    fn default() -> Self {
        ScopeTable {
            scopes: vec![Scope::default()],
        }
    }
}

impl ScopeTable {
    pub fn push(&mut self) {
        self.scopes.push(Scope::default());
    }

    pub fn pop(&mut self) {
        if self.scopes.len() > 1 {
            self.scopes.pop();
        }
    }

    pub fn depth(&self) -> usize {
        self.scopes.len()
    }

    pub fn declare(&mut self, name: &str, kind: DeclKind) {
        self.innermost().names.insert(name.to_string(), kind);
    }

    pub fn declare_tag(&mut self, name: &str, complete: bool) {
        let tags = &mut self.innermost().tags;
        let entry = tags.entry(name.to_string()).or_insert(false);
        *entry |= complete;
    }

    pub fn lookup(&self, name: &str) -> Option<DeclKind> {
        self.scopes.iter().rev().find_map(|s| s.names.get(name).copied())
    }

    /// `Some(complete)` for a visible tag.
    pub fn lookup_tag(&self, name: &str) -> Option<bool> {
        self.scopes.iter().rev().find_map(|s| s.tags.get(name).copied())
    }

    fn innermost(&mut self) -> &mut Scope {
        self.scopes.last_mut().expect("global scope is never popped")
    }
}

#[derive(Clone, Debug)]
struct Rules {
    function_definition: RuleId,
    function_declaration: RuleId,
    parameter_list: RuleId,
    parameter_tail: RuleId,
    parameter_declaration: RuleId,
    struct_declaration: RuleId,
    struct_body: RuleId,
    member_declaration: RuleId,
    declaration: RuleId,
    init_declarator_list: RuleId,
    init_declarator_tail: RuleId,
    init_declarator: RuleId,
    type_specifier: RuleId,
    struct_type: RuleId,
    compound_statement: RuleId,
    postfix_expression: RuleId,
    primary: RuleId,
    call_suffix: RuleId,
    argument_list: RuleId,
    argument_tail: RuleId,
}

/// Checker bound to the rule ids of a mini-C-shaped grammar.
#[derive(Clone, Debug)]
pub struct SemanticChecker {
    rules: Rules,
    /// Functions usable without a declaration; `None` arity means variadic.
    builtins: HashMap<String, Option<usize>>,
}

impl SemanticChecker {
    /// Fails if the grammar lacks any rule the checker relies on.
    pub fn new(grammar: &Grammar) -> Result<SemanticChecker, GrammarError> {
        let id = |name: &str| grammar.rule_id(name);
        let rules = Rules {
            function_definition: id("function_definition")?,
            function_declaration: id("function_declaration")?,
            parameter_list: id("parameter_list")?,
            parameter_tail: id("parameter_tail")?,
            parameter_declaration: id("parameter_declaration")?,
            struct_declaration: id("struct_declaration")?,
            struct_body: id("struct_body")?,
            member_declaration: id("member_declaration")?,
            declaration: id("declaration")?,
            init_declarator_list: id("init_declarator_list")?,
            init_declarator_tail: id("init_declarator_tail")?,
            init_declarator: id("init_declarator")?,
            type_specifier: id("type_specifier")?,
            struct_type: id("struct_type")?,
            compound_statement: id("compound_statement")?,
            postfix_expression: id("postfix_expression")?,
            primary: id("primary")?,
            call_suffix: id("call_suffix")?,
            argument_list: id("argument_list")?,
            argument_tail: id("argument_tail")?,
        };
        let mut builtins = HashMap::new();
        builtins.insert("printf".to_string(), None);
        Ok(SemanticChecker { rules, builtins })
    }

    /// Adds (or replaces) a function that may be called without a declaration.
    pub fn with_builtin(mut self, name: &str, arity: Option<usize>) -> Self {
        self.builtins.insert(name.to_string(), arity);
        self
    }

    /// All issues, ordered by token location.
    pub fn check(&self, tree: &SyntaxTree) -> Vec<SemanticIssue> {
        let mut walk = Walk {
            checker: self,
            tree,
            scopes: ScopeTable::default(),
            issues: Vec::new(),
        };
        walk.visit(tree.root());
        walk.issues.sort_by_key(|i| i.location);
        walk.issues
    }

    pub fn is_valid(&self, tree: &SyntaxTree) -> bool {
        self.check(tree).is_empty()
    }
}

struct Walk<'a> {
    checker: &'a SemanticChecker,
    tree: &'a SyntaxTree,
    scopes: ScopeTable,
    issues: Vec<SemanticIssue>,
}

impl<'a> Walk<'a> {
    fn rules(&self) -> &'a Rules {
        &self.checker.rules
    }

    fn node(&self, id: NodeId) -> &'a Node {
        self.tree.get(id).expect("live child")
    }

    fn children(&self, id: NodeId) -> impl Iterator<Item = &'a Node> + 'a {
        let tree = self.tree;
        tree.get(id)
            .into_iter()
            .flat_map(|n| n.children.iter())
            .filter_map(move |&c| tree.get(c))
    }

    fn child_with_rule(&self, id: NodeId, rule: RuleId) -> Option<&'a Node> {
        self.children(id).find(|c| c.rule == rule)
    }

    fn type_child(&self, id: NodeId) -> Option<&'a Node> {
        let r = self.rules();
        self.children(id)
            .find(|c| c.rule == r.type_specifier || c.rule == r.struct_type)
    }

    /// First identifier-class terminal among the direct children.
    fn ident_child(&self, id: NodeId) -> Option<(&'a str, usize)> {
        let terminal = self.tree.grammar().terminal_id();
        self.children(id).find_map(|c| {
            let tok = &self.tree.tokens()[c.start];
            (c.rule == terminal && tok.class == TokenClass::Ident).then(|| (&*tok.text, c.start))
        })
    }

    fn report(&mut self, code: IssueCode, subject: &str, location: usize) {
        self.issues.push(SemanticIssue {
            code,
            subject: subject.to_string(),
            location,
        });
    }

    fn visit_children(&mut self, id: NodeId) {
        for child in self.children(id) {
            self.visit(child.id);
        }
    }

    fn visit(&mut self, id: NodeId) {
        let rule = self.node(id).rule;
        let r = self.rules();
        if rule == r.function_definition {
            self.visit_function(id, true);
        } else if rule == r.function_declaration {
            self.visit_function(id, false);
        } else if rule == r.struct_declaration {
            self.visit_struct_declaration(id);
        } else if rule == r.declaration {
            self.visit_declaration(id);
        } else if rule == r.compound_statement {
            self.scopes.push();
            self.visit_children(id);
            self.scopes.pop();
        } else if rule == r.postfix_expression {
            self.visit_postfix(id);
        } else if rule == r.primary {
            self.visit_primary(id);
        } else {
            self.visit_children(id);
        }
    }

    fn check_type(&mut self, ty: &Node, require_complete: bool) {
        if ty.rule != self.rules().struct_type {
            return;
        }
        if let Some((tag, at)) = self.ident_child(ty.id) {
            match self.scopes.lookup_tag(tag) {
                Some(true) => {}
                Some(false) if !require_complete => {}
                _ => self.report(IssueCode::UndeclaredType, tag, at),
            }
        }
    }

    fn parameters(&self, function: NodeId) -> Vec<&'a Node> {
        let r = self.rules();
        let mut params = Vec::new();
        if let Some(list) = self.child_with_rule(function, r.parameter_list) {
            for child in self.children(list.id) {
                if child.rule == r.parameter_declaration {
                    params.push(child);
                } else if child.rule == r.parameter_tail {
                    params.extend(self.child_with_rule(child.id, r.parameter_declaration));
                }
            }
        }
        params
    }

    fn visit_function(&mut self, id: NodeId, is_definition: bool) {
        let node = self.node(id);
        let name = self.ident_child(id);
        match self.type_child(id) {
            Some(ty) => self.check_type(ty, false),
            None => {
                let subject = name.map(|(n, _)| n).unwrap_or("");
                self.report(IssueCode::MissingTypeSpecifier, subject, node.start);
            }
        }
        let params = self.parameters(id);
        if let Some((name, _)) = name {
            self.scopes.declare(name, DeclKind::Function { arity: params.len() });
        }

        self.scopes.push();
        for param in params {
            let pname = self.ident_child(param.id);
            match self.type_child(param.id) {
                Some(ty) => self.check_type(ty, is_definition),
                None => {
                    let subject = pname.map(|(n, _)| n).unwrap_or("");
                    self.report(IssueCode::MissingTypeSpecifier, subject, param.start);
                }
            }
            if let Some((pname, _)) = pname {
                self.scopes.declare(pname, DeclKind::Variable);
            }
        }
        if let Some(body) = self.child_with_rule(id, self.rules().compound_statement) {
            self.visit(body.id);
        }
        self.scopes.pop();
    }

    fn visit_struct_declaration(&mut self, id: NodeId) {
        let Some((tag, _)) = self.ident_child(id) else {
            return;
        };
        let r = self.rules();
        match self.child_with_rule(id, r.struct_body) {
            Some(body) => {
                for member in self.children(body.id).filter(|c| c.rule == r.member_declaration) {
                    match self.type_child(member.id) {
                        Some(ty) => self.check_type(ty, true),
                        None => {
                            let subject = self.ident_child(member.id).map(|(n, _)| n).unwrap_or("");
                            self.report(IssueCode::MissingTypeSpecifier, subject, member.start);
                        }
                    }
                }
                self.scopes.declare_tag(tag, true);
            }
            None => {
                if self.scopes.lookup_tag(tag).is_none() {
                    self.scopes.declare_tag(tag, false);
                }
            }
        }
    }

    fn declarators(&self, declaration: NodeId) -> Vec<&'a Node> {
        let r = self.rules();
        let mut out = Vec::new();
        if let Some(list) = self.child_with_rule(declaration, r.init_declarator_list) {
            for child in self.children(list.id) {
                if child.rule == r.init_declarator {
                    out.push(child);
                } else if child.rule == r.init_declarator_tail {
                    out.extend(self.child_with_rule(child.id, r.init_declarator));
                }
            }
        }
        out
    }

    fn visit_declaration(&mut self, id: NodeId) {
        let node = self.node(id);
        let declarators = self.declarators(id);
        let first_token = &*self.tree.tokens()[node.start].text;
        match (self.type_child(id), declarators.is_empty()) {
            (None, true) => self.report(IssueCode::EmptyDeclaration, first_token, node.start),
            (None, false) => {
                let subject = self.ident_child(declarators[0].id).map(|(n, _)| n).unwrap_or("");
                self.report(IssueCode::MissingTypeSpecifier, subject, node.start);
            }
            (Some(ty), true) if ty.rule == self.rules().struct_type => {
                // `struct S;` is a forward declaration of the tag.
                if let Some((tag, _)) = self.ident_child(ty.id) {
                    if self.scopes.lookup_tag(tag).is_none() {
                        self.scopes.declare_tag(tag, false);
                    }
                }
            }
            (Some(_), true) => self.report(IssueCode::EmptyDeclaration, first_token, node.start),
            (Some(ty), false) => self.check_type(ty, true),
        }
        for declarator in declarators {
            for child in self.children(declarator.id) {
                self.visit(child.id);
            }
            if let Some((name, _)) = self.ident_child(declarator.id) {
                self.scopes.declare(name, DeclKind::Variable);
            }
        }
    }

    fn argument_count(&self, call: NodeId) -> usize {
        let r = self.rules();
        match self.child_with_rule(call, r.argument_list) {
            Some(list) => 1 + self.children(list.id).filter(|c| c.rule == r.argument_tail).count(),
            None => 0,
        }
    }

    /// Identifier of a primary made of a single identifier token.
    fn primary_ident(&self, primary: &Node) -> Option<(&'a str, usize)> {
        if primary.rule != self.rules().primary || primary.weight() != 1 {
            return None;
        }
        self.ident_child(primary.id)
    }

    fn visit_postfix(&mut self, id: NodeId) {
        let children: Vec<&Node> = self.children(id).collect();
        let Some((&primary, suffixes)) = children.split_first() else {
            return;
        };
        let call = suffixes.first().filter(|s| s.rule == self.rules().call_suffix);
        match (self.primary_ident(primary), call) {
            (Some((name, at)), Some(call)) => {
                let args = self.argument_count(call.id);
                let arity = match self.scopes.lookup(name) {
                    Some(DeclKind::Function { arity }) => Some(Some(arity)),
                    Some(DeclKind::Variable) => Some(None),
                    None => self.checker.builtins.get(name).copied(),
                };
                match arity {
                    None => self.report(IssueCode::UndeclaredIdentifier, name, at),
                    Some(Some(arity)) if args > arity => self.report(IssueCode::TooManyArguments, name, at),
                    Some(_) => {}
                }
            }
            _ => self.visit(primary.id),
        }
        for suffix in suffixes {
            self.visit(suffix.id);
        }
    }

    fn visit_primary(&mut self, id: NodeId) {
        let node = self.node(id);
        match self.primary_ident(node) {
            Some((name, at)) => {
                if self.scopes.lookup(name).is_none() && !self.checker.builtins.contains_key(name) {
                    self.report(IssueCode::UndeclaredIdentifier, name, at);
                }
            }
            None => self.visit_children(id),
        }
    }
}
