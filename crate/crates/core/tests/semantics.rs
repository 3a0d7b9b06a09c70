mod common;

use common::*;
use semred_core::{IssueCode, SyntaxTree};

use IssueCode::*;

fn issues(t: &SyntaxTree) -> Vec<(IssueCode, String)> {
    checker().check(t).into_iter().map(|i| (i.code, i.subject)).collect()
}

fn expect(src: &str, expected: &[(IssueCode, &str)]) {
    let got = issues(&tree(src));
    let expected: Vec<(IssueCode, String)> = expected.iter().map(|(c, s)| (*c, s.to_string())).collect();
    assert_eq!(got, expected, "{src}");
}

#[test]
fn issue_table() {
    assert!(ISSUE_TABLE.len() >= 20);
    for code in IssueCode::ALL {
        assert!(
            ISSUE_TABLE.iter().any(|(_, e)| e.iter().any(|(c, _)| *c == code)),
            "{code} not covered"
        );
    }
    for (src, expected) in ISSUE_TABLE {
        expect(src, expected);
    }
}

#[test]
fn removing_the_declaration_before_its_use() {
    let t = sample();
    let s = sample_nodes(&t);
    assert_eq!(
        issues(&t.remove(s.declaration).unwrap()),
        vec![(UndeclaredIdentifier, "s1".to_string())]
    );
    // Once the use is gone too, the program is valid again.
    let t = t.remove(s.assignment).unwrap().remove(s.declaration).unwrap();
    assert!(checker().is_valid(&t));
}

#[test]
fn removing_the_struct_before_its_users() {
    let t = sample();
    let s = sample_nodes(&t);
    let without_struct = t.remove(s.struct_decl).unwrap();
    assert!(!checker().is_valid(&without_struct));
    assert_eq!(issues(&without_struct), vec![(UndeclaredType, "S".to_string())]);
    let chain = without_struct
        .remove(s.assignment)
        .unwrap()
        .remove(s.declaration)
        .unwrap();
    assert!(checker().is_valid(&chain));
}

#[test]
fn reduction_fragments() {
    let t = tree("int main() { int v = 1; int w; return v; }");
    let v_type = t
        .nodes()
        .find(|n| t.grammar().rule_name(n.rule) == "type_specifier" && n.start == 5)
        .unwrap()
        .id;
    assert_eq!(
        issues(&t.remove(v_type).unwrap()),
        vec![(MissingTypeSpecifier, "v".to_string())]
    );
    let w_list = find(&t, "init_declarator_list", "w");
    assert_eq!(
        issues(&t.remove(w_list).unwrap()),
        vec![(EmptyDeclaration, "int".to_string())]
    );
}

#[test]
fn issue_locations_are_token_indices() {
    let t = tree("int main() { x = y; return 0; }");
    let found = checker().check(&t);
    assert_eq!(found.iter().map(|i| i.location).collect::<Vec<_>>(), vec![5, 7]);
    assert_eq!(found[0].to_string(), "UndeclaredIdentifier x @5");
}

#[test]
fn builtins_are_configurable() {
    let t = tree("int main() { puts(1, 2); return 0; }");
    assert_eq!(issues(&t), vec![(UndeclaredIdentifier, "puts".to_string())]);
    let c = checker().with_builtin("puts", Some(1));
    let found: Vec<IssueCode> = c.check(&t).into_iter().map(|i| i.code).collect();
    assert_eq!(found, vec![TooManyArguments]);
}

#[test]
fn unused_declarations_never_cause_undeclared_identifiers() {
    // Removing a node whose names are not used elsewhere leaves no dangling use.
    let t = tree("int a; int b = 2; int main() { int c; return b; }");
    for name in ["a", "c"] {
        let decl = t
            .nodes()
            .find(|n| t.grammar().rule_name(n.rule) == "declaration" && t.node_text(n.id).contains(name))
            .unwrap()
            .id;
        assert!(!issues(&t.remove(decl).unwrap())
            .iter()
            .any(|(c, _)| *c == UndeclaredIdentifier));
    }
}

#[test]
fn checks_are_deterministic() {
    let t = tree("int main() { x = y; f(1); return z; }");
    assert_eq!(checker().check(&t), checker().check(&t));
}
