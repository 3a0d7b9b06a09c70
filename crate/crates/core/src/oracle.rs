//! Oracles decide whether a candidate still has the property of interest.
//!
//! Two implementations are provided: [`CompositeOracle`] runs the semantic
//! checker and then a property predicate in-process, and [`ExternalOracle`]
//! runs a command on the printed candidate (exit status 0 = interesting).

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::semantics::SemanticChecker;
pub use crate::semantics::{IssueCode, SemanticIssue};
use crate::syntax_tree::SyntaxTree;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("failed to spawn `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing candidate file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    Passed,
    SemanticFail,
    NonSemanticFail,
}

/// Three-way oracle result. `issues` is non-empty exactly for `SemanticFail`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub kind: OutcomeKind,
    #[serde(default)]
    pub issues: Vec<SemanticIssue>,
    /// Seconds.
    pub duration: f64,
}

impl OracleOutcome {
    pub fn passed(duration: f64) -> Self {
        OracleOutcome {
            kind: OutcomeKind::Passed,
            issues: Vec::new(),
            duration,
        }
    }

    /// Panics if `issues` is empty.
    pub fn semantic_fail(issues: Vec<SemanticIssue>, duration: f64) -> Self {
        assert!(!issues.is_empty(), "semantic failure needs at least one issue");
        OracleOutcome {
            kind: OutcomeKind::SemanticFail,
            issues,
            duration,
        }
    }

    pub fn non_semantic_fail(duration: f64) -> Self {
        OracleOutcome {
            kind: OutcomeKind::NonSemanticFail,
            issues: Vec::new(),
            duration,
        }
    }

    pub fn is_pass(&self) -> bool {
        self.kind == OutcomeKind::Passed
    }

    /// Checks the issues/kind pairing, e.g. after deserialization.
    pub fn is_consistent(&self) -> bool {
        (self.kind == OutcomeKind::SemanticFail) == !self.issues.is_empty()
    }
}

pub trait Oracle {
    fn test(&mut self, candidate: &SyntaxTree) -> Result<OracleOutcome, OracleError>;
}

/// Property of interest checked after the semantic step.
pub type Property = Box<dyn Fn(&SyntaxTree) -> bool + Send + Sync>;

/// Semantic check, then property check. Well-definedness failures are not
/// modeled separately; they land in `NonSemanticFail` like property failures.
pub fn run_composite(
    checker: &SemanticChecker,
    property: &dyn Fn(&SyntaxTree) -> bool,
    candidate: &SyntaxTree,
) -> OracleOutcome {
    let started = Instant::now();
    let issues = checker.check(candidate);
    if !issues.is_empty() {
        return OracleOutcome::semantic_fail(issues, started.elapsed().as_secs_f64());
    }
    if property(candidate) {
        OracleOutcome::passed(started.elapsed().as_secs_f64())
    } else {
        OracleOutcome::non_semantic_fail(started.elapsed().as_secs_f64())
    }
}

pub struct CompositeOracle {
    checker: SemanticChecker,
    property: Property,
}

impl CompositeOracle {
    pub fn new(checker: SemanticChecker, property: Property) -> Self {
        CompositeOracle { checker, property }
    }

    pub fn checker(&self) -> &SemanticChecker {
        &self.checker
    }
}

impl Oracle for CompositeOracle {
    fn test(&mut self, candidate: &SyntaxTree) -> Result<OracleOutcome, OracleError> {
        Ok(run_composite(&self.checker, &*self.property, candidate))
    }
}

/// Common property predicates.
pub mod property {
    use super::Property;
    use crate::syntax_tree::SyntaxTree;

    pub fn always() -> Property {
        Box::new(|_: &SyntaxTree| true)
    }

    /// Some token has exactly this text.
    pub fn contains_token(text: &str) -> Property {
        let text = text.to_string();
        Box::new(move |t: &SyntaxTree| t.tokens().iter().any(|tok| *tok.text == text[..]))
    }

    /// The token with this original index survives.
    pub fn keeps_origin(origin: u32) -> Property {
        Box::new(move |t: &SyntaxTree| t.contains_origin(origin))
    }
}

/// Program plus fixed arguments; the candidate path is appended last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandSpec {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandSpec {
    pub fn new(program: impl Into<String>) -> Self {
        CommandSpec {
            program: program.into(),
            args: Vec::new(),
        }
    }

    pub fn arg(mut self, arg: impl Into<String>) -> Self {
        self.args.push(arg.into());
        self
    }

    /// Whitespace-separated command line, no shell quoting.
    pub fn parse(line: &str) -> Option<Self> {
        let mut words = line.split_whitespace().map(str::to_string);
        let program = words.next()?;
        Some(CommandSpec {
            program,
            args: words.collect(),
        })
    }
}

/// Writes `candidate` to a temporary file, runs the command on it, and
/// returns whether it exited with status 0. A timeout counts as `false`.
/// The temporary file is removed before returning.
pub fn run_external(cmd: &CommandSpec, candidate: &str, timeout: Duration, suffix: &str) -> Result<bool, OracleError> {
    let mut file = tempfile::Builder::new()
        .prefix("semred-candidate-")
        .suffix(suffix)
        .tempfile()?;
    file.write_all(candidate.as_bytes())?;
    file.flush()?;
    let path: PathBuf = file.path().to_path_buf();

    let mut child = Command::new(&cmd.program)
        .args(&cmd.args)
        .arg(&path)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|source| OracleError::Spawn {
            program: cmd.program.clone(),
            source,
        })?;

    let started = Instant::now();
    let mut pause = Duration::from_millis(1);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(status.success());
        }
        if started.elapsed() >= timeout {
            warn!(
                "oracle `{}` timed out after {:.1}s; treating as uninteresting",
                cmd.program,
                timeout.as_secs_f64()
            );
            let _ = child.kill();
            let _ = child.wait();
            return Ok(false);
        }
        std::thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(50));
    }
}

/// Oracle backed by an external script.
///
/// The script only yields a boolean. When a checker is attached, failures
/// that the checker explains are reported as `SemanticFail` so that study
/// traces can still be broken down; the pass/fail decision is the script's.
pub struct ExternalOracle {
    cmd: CommandSpec,
    timeout: Duration,
    suffix: String,
    classifier: Option<SemanticChecker>,
}

impl ExternalOracle {
    pub fn new(cmd: CommandSpec) -> Self {
        ExternalOracle {
            cmd,
            timeout: DEFAULT_TIMEOUT,
            suffix: ".c".to_string(),
            classifier: None,
        }
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn suffix(mut self, suffix: impl Into<String>) -> Self {
        self.suffix = suffix.into();
        self
    }

    pub fn classify_with(mut self, checker: SemanticChecker) -> Self {
        self.classifier = Some(checker);
        self
    }
}

impl Oracle for ExternalOracle {
    fn test(&mut self, candidate: &SyntaxTree) -> Result<OracleOutcome, OracleError> {
        let started = Instant::now();
        let ok = run_external(&self.cmd, &candidate.print(), self.timeout, &self.suffix)?;
        let duration = started.elapsed().as_secs_f64();
        if ok {
            return Ok(OracleOutcome::passed(duration));
        }
        let issues = self.classifier.as_ref().map(|c| c.check(candidate)).unwrap_or_default();
        Ok(if issues.is_empty() {
            OracleOutcome::non_semantic_fail(duration)
        } else {
            OracleOutcome::semantic_fail(issues, duration)
        })
    }
}
