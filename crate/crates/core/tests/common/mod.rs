#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semred_core::datagen::corpus::generate_corpus;
use semred_core::oracle::property;
use semred_core::{parse, CompositeOracle, Grammar, IssueCode, NodeId, SemanticChecker, SyntaxTree};

use IssueCode::*;

/// A struct, a function using it, a `printf` to keep and a return.
pub const SAMPLE: &str = r#"struct S {
 int member;
};
int main() {
 struct S s1;
 s1.member = 1;
 printf("Hello World!\n");
 return 0;
}
"#;

pub fn grammar() -> Arc<Grammar> {
    Arc::new(Grammar::mini_c())
}

pub fn checker() -> SemanticChecker {
    SemanticChecker::new(&Grammar::mini_c()).unwrap()
}

pub fn tree(src: &str) -> SyntaxTree {
    parse(&grammar(), src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

pub fn sample() -> SyntaxTree {
    tree(SAMPLE)
}

/// The unique live node of rule `rule` whose text is `text`.
pub fn find(tree: &SyntaxTree, rule: &str, text: &str) -> NodeId {
    let rule = tree.grammar().rule_id(rule).unwrap();
    let hits: Vec<NodeId> = tree
        .nodes()
        .filter(|n| n.rule == rule && tree.node_text(n.id) == text)
        .map(|n| n.id)
        .collect();
    assert_eq!(
        hits.len(),
        1,
        "expected one {rule} node with text {text:?}, found {hits:?}"
    );
    hits[0]
}

/// Named nodes of the sample program.
pub struct SampleNodes {
    pub unit: NodeId,
    pub struct_decl: NodeId,
    pub main: NodeId,
    pub body: NodeId,
    pub block_item: NodeId,
    pub declaration: NodeId,
    pub assignment: NodeId,
    pub print: NodeId,
    pub ret: NodeId,
}

pub fn sample_nodes(t: &SyntaxTree) -> SampleNodes {
    SampleNodes {
        unit: t.root(),
        struct_decl: find(t, "struct_declaration", "struct S { int member ; } ;"),
        main: t
            .nodes()
            .find(|n| t.grammar().rule_name(n.rule) == "function_definition")
            .unwrap()
            .id,
        body: t
            .nodes()
            .find(|n| t.grammar().rule_name(n.rule) == "compound_statement")
            .unwrap()
            .id,
        block_item: t
            .nodes()
            .find(|n| t.grammar().rule_name(n.rule) == "block_item")
            .unwrap()
            .id,
        declaration: find(t, "declaration", "struct S s1 ;"),
        assignment: find(t, "assignment_expression", "s1 . member = 1 ;"),
        print: find(t, "expression_statement", "printf ( \"Hello World!\\n\" ) ;"),
        ret: find(t, "jump_statement", "return 0 ;"),
    }
}

/// A generated program and the original token index its oracle must keep.
pub struct Case {
    pub name: String,
    pub tree: SyntaxTree,
    pub origin: u32,
}

impl Case {
    /// Semantically valid and the kept token still present.
    pub fn oracle(&self) -> CompositeOracle {
        CompositeOracle::new(checker(), property::keeps_origin(self.origin))
    }
}

pub fn cases(count: usize, seed: u64) -> Vec<Case> {
    let g = grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    generate_corpus(count, seed)
        .into_iter()
        .map(|f| {
            let tree = parse(&g, &f.source).unwrap();
            let origin = rng.gen_range(0..tree.token_count()) as u32;
            Case {
                name: f.name,
                tree,
                origin,
            }
        })
        .collect()
}

/// Hand-checked expectations; every code appears at least once.
pub const ISSUE_TABLE: &[(&str, &[(IssueCode, &str)])] = &[
    ("", &[]),
    (SAMPLE, &[]),
    ("int main() { x = 1; return 0; }", &[(UndeclaredIdentifier, "x")]),
    ("int main() { int; return 0; }", &[(EmptyDeclaration, "int")]),
    ("int;", &[(EmptyDeclaration, "int")]),
    (";", &[(EmptyDeclaration, ";")]),
    (
        "int f(int a) { return a; } int main() { f(1, 2); return 0; }",
        &[(TooManyArguments, "f")],
    ),
    ("int f(int a, int b) { return a; } int main() { return f(1); }", &[]),
    ("f() { return 0; }", &[(MissingTypeSpecifier, "f")]),
    ("int f(a) { return a; }", &[(MissingTypeSpecifier, "a")]),
    ("struct T { x; };", &[(MissingTypeSpecifier, "x")]),
    ("struct S s;", &[(UndeclaredType, "S")]),
    ("struct S; struct S s;", &[(UndeclaredType, "S")]),
    ("struct S; int f(struct S p);", &[]),
    ("struct S;", &[]),
    ("struct A { struct B b; };", &[(UndeclaredType, "B")]),
    (
        "int main() { { int a = 1; } a = 2; return 0; }",
        &[(UndeclaredIdentifier, "a")],
    ),
    ("int g; int main() { int g = g; return g; }", &[]),
    ("int main() { printf(\"%d %d\", 1, 2); return 0; }", &[]),
    ("int main() { g(1); return 0; }", &[(UndeclaredIdentifier, "g")]),
    (
        "int main() { f(); return 0; } int f() { return 1; }",
        &[(UndeclaredIdentifier, "f")],
    ),
    (
        "int f(int a); int main() { return f(1); } int f(int a) { return a; }",
        &[],
    ),
    ("int f(int n) { return f(n - 1); }", &[]),
    (
        "int main() { x = y; return z; }",
        &[
            (UndeclaredIdentifier, "x"),
            (UndeclaredIdentifier, "y"),
            (UndeclaredIdentifier, "z"),
        ],
    ),
    ("int main() { s.m = 1; return 0; }", &[(UndeclaredIdentifier, "s")]),
    ("char c = 1; int main() { return c; }", &[]),
    ("int a; int a;", &[]),
    ("int v; int main() { v(1); return 0; }", &[]),
    (
        "int f(int a) { return a; } g(b) { return f(b, q); }",
        &[
            (MissingTypeSpecifier, "g"),
            (MissingTypeSpecifier, "b"),
            (TooManyArguments, "f"),
            (UndeclaredIdentifier, "q"),
        ],
    ),
];
