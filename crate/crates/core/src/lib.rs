//! Grammar-driven test-case reduction that learns to skip oracle queries
//! predicted to produce semantically invalid candidates.

pub mod datagen;
pub mod features;
pub mod forest;
pub mod grammar;
pub mod metrics;
pub mod oracle;
pub mod reducer;
pub mod semantics;
pub mod syntax_tree;

pub use datagen::{collect, split, Datapoint, LabelPolicy, SubOutcome};
pub use features::{extract, FeatureMode, FeatureVector};
pub use forest::{Forest, ForestError, ForestParams};
pub use grammar::{load_grammar, Grammar, GrammarError, Quantifier, RuleId};
pub use metrics::{confusion, precision_recall, summarize, Confusion, Report};
pub use oracle::{CompositeOracle, ExternalOracle, Oracle, OracleError, OracleOutcome, OutcomeKind};
pub use reducer::{reduce_baseline, reduce_guided, reduce_study, Reduction, RemovalModel, TrialRecord};
pub use semantics::{IssueCode, SemanticChecker, SemanticIssue};
pub use syntax_tree::{parse, Node, NodeId, ParseError, SyntaxTree, TreeError};
