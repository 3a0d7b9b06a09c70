//! Training-data collection.
//!
//! Each corpus file is reduced repeatedly under the oracle "semantically
//! valid and token `k` still present", where `k` is drawn uniformly from the
//! tokens of the current program that have not been picked yet. Every trial
//! becomes one labeled datapoint. A file is done once each of its surviving
//! tokens has been picked.

pub mod corpus;

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FeatureMode, FeatureVector};
use crate::grammar::{Grammar, GrammarError};
use crate::oracle::{run_composite, Oracle, OracleError, OracleOutcome, OutcomeKind};
use crate::reducer::{reduce, Engine, ReduceError, ReduceOptions};
use crate::semantics::SemanticChecker;
use crate::syntax_tree::{parse, SyntaxTree};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error("dataset i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset line {line}: label disagrees with sub_outcome")]
    LabelMismatch { line: usize },
    #[error("dataset line {line}: collected under grammar {found}, active grammar is {expected}")]
    GrammarMismatch {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("dataset line {line}: expected {expected} features, found {found}")]
    Layout {
        line: usize,
        expected: String,
        found: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubOutcome {
    SemValidTokenKept,
    SemValidTokenLost,
    SemInvalid,
}

impl SubOutcome {
    pub fn from_outcome(outcome: &OracleOutcome) -> SubOutcome {
        match outcome.kind {
            OutcomeKind::Passed => SubOutcome::SemValidTokenKept,
            OutcomeKind::NonSemanticFail => SubOutcome::SemValidTokenLost,
            OutcomeKind::SemanticFail => SubOutcome::SemInvalid,
        }
    }

    pub fn label(self) -> bool {
        self == SubOutcome::SemValidTokenKept
    }
}

/// `label == (sub_outcome == SemValidTokenKept)`.
///
/// Serialized as one flat JSON object: `features` is the bare value array
/// and `mode` sits next to it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "Row", from = "Row")]
pub struct Datapoint {
    pub features: FeatureVector,
    pub label: bool,
    pub sub_outcome: SubOutcome,
    pub source_file: String,
    pub trial_index: usize,
    pub grammar_hash: String,
}

#[derive(Serialize, Deserialize)]
struct Row {
    features: Vec<u32>,
    mode: FeatureMode,
    grammar_hash: String,
    label: bool,
    sub_outcome: SubOutcome,
    source_file: String,
    trial_index: usize,
}

impl From<Datapoint> for Row {
    fn from(d: Datapoint) -> Row {
        Row {
            features: d.features.values,
            mode: d.features.mode,
            grammar_hash: d.grammar_hash,
            label: d.label,
            sub_outcome: d.sub_outcome,
            source_file: d.source_file,
            trial_index: d.trial_index,
        }
    }
}

impl From<Row> for Datapoint {
    fn from(r: Row) -> Datapoint {
        Datapoint {
            features: FeatureVector {
                mode: r.mode,
                values: r.features,
            },
            label: r.label,
            sub_outcome: r.sub_outcome,
            source_file: r.source_file,
            trial_index: r.trial_index,
            grammar_hash: r.grammar_hash,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusFile {
    pub name: String,
    pub source: String,
}

/// Reads every `*.c` file of a directory, sorted by name.
pub fn load_corpus_dir(dir: impl AsRef<Path>) -> std::io::Result<Vec<CorpusFile>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "c") {
            files.push(CorpusFile {
                name: path.file_name().unwrap().to_string_lossy().into_owned(),
                source: std::fs::read_to_string(&path)?,
            });
        }
    }
    files.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(files)
}

/// Per-file seed: first eight bytes of `sha256(seed_le || name)`.
pub fn file_seed(seed: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

struct TokenOracle<'a> {
    checker: &'a SemanticChecker,
    origin: u32,
}

impl Oracle for TokenOracle<'_> {
    fn test(&mut self, candidate: &SyntaxTree) -> Result<OracleOutcome, OracleError> {
        let origin = self.origin;
        Ok(run_composite(
            self.checker,
            &|t: &SyntaxTree| t.contains_origin(origin),
            candidate,
        ))
    }
}

/// Datapoints of one file. A semantically invalid input yields none.
pub fn collect_tree(
    tree: &SyntaxTree,
    name: &str,
    checker: &SemanticChecker,
    mode: FeatureMode,
    seed: u64,
) -> Result<Vec<Datapoint>, ReduceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(file_seed(seed, name));
    let mut picked = HashSet::new();
    let mut current = tree.clone();
    let mut data = Vec::new();
    if !checker.is_valid(&current) {
        warn!("{name}: input is not semantically valid, skipping");
        return Ok(data);
    }
    let options = ReduceOptions {
        passes: 1,
        mode: Some(mode),
    };
    loop {
        let open: Vec<u32> = current
            .tokens()
            .iter()
            .map(|t| t.origin)
            .filter(|o| !picked.contains(o))
            .collect();
        let Some(&origin) = open.choose(&mut rng) else {
            break;
        };
        picked.insert(origin);
        let mut oracle = TokenOracle { checker, origin };
        let reduction = reduce(&current, &mut oracle, None, Engine::Baseline, options)?;
        for trial in reduction.trace {
            let outcome = trial.oracle_outcome.as_ref().expect("baseline runs every trial");
            let sub_outcome = SubOutcome::from_outcome(outcome);
            data.push(Datapoint {
                features: trial.features.expect("feature mode is set"),
                label: sub_outcome.label(),
                sub_outcome,
                source_file: name.to_string(),
                trial_index: data.len(),
                grammar_hash: current.grammar().hash().to_string(),
            });
        }
        current = reduction.tree;
    }
    Ok(data)
}

/// Collects every file in parallel; output is in corpus order and identical
/// for identical inputs. Files that fail to parse are logged and skipped.
pub fn collect(
    corpus: &[CorpusFile],
    grammar: &Arc<Grammar>,
    mode: FeatureMode,
    seed: u64,
) -> Result<Vec<Datapoint>, DatagenError> {
    let checker = SemanticChecker::new(grammar)?;
    let per_file: Vec<Result<Vec<Datapoint>, ReduceError>> = corpus
        .par_iter()
        .map(|file| match parse(grammar, &file.source) {
            Ok(tree) => collect_tree(&tree, &file.name, &checker, mode, seed),
            Err(e) => {
                warn!("{}: {e}, skipping", file.name);
                Ok(Vec::new())
            }
        })
        .collect();
    let mut data = Vec::new();
    for chunk in per_file {
        data.extend(chunk?);
    }
    Ok(data)
}

/// Seeded shuffle, then the first `round(train_fraction * n)` points train.
///
/// Panics unless `0 < train_fraction < 1`.
pub fn split<T: Clone>(data: &[T], train_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train fraction must lie strictly between 0 and 1"
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (train_fraction * data.len() as f64).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect();
    (pick(&order[..cut]), pick(&order[cut..]))
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<(), DatagenError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|source| DatagenError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, DatagenError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|source| DatagenError::Json { line: i + 1, source })?);
    }
    Ok(rows)
}

/// Reads a dataset and cross-checks every label against its sub-outcome.
/// With a grammar, the grammar hash and the feature lengths must match it.
pub fn read_dataset(path: impl AsRef<Path>, grammar: Option<&Grammar>) -> Result<Vec<Datapoint>, DatagenError> {
    let rows: Vec<Datapoint> = read_jsonl(path)?;
    for (i, row) in rows.iter().enumerate() {
        if row.label != row.sub_outcome.label() {
            return Err(DatagenError::LabelMismatch { line: i + 1 });
        }
        if let Some(g) = grammar {
            if row.grammar_hash != g.hash() {
                return Err(DatagenError::GrammarMismatch {
                    line: i + 1,
                    expected: g.hash().to_string(),
                    found: row.grammar_hash.clone(),
                });
            }
            let expected = row.features.mode.len(g.rule_count());
            if row.features.len() != expected {
                return Err(DatagenError::Layout {
                    line: i + 1,
                    expected: format!("{expected} {}", row.features.mode),
                    found: row.features.len().to_string(),
                });
            }
        }
    }
    Ok(rows)
}

/// Which target a model is trained on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelPolicy {
    /// The collection oracle's verdict: valid and the picked token kept.
    #[default]
    Oracle,
    /// Semantic validity alone; token-lost trials count as positives.
    Semantic,
}

impl LabelPolicy {
    pub fn target(self, point: &Datapoint) -> bool {
        match self {
            LabelPolicy::Oracle => point.label,
            LabelPolicy::Semantic => point.sub_outcome != SubOutcome::SemInvalid,
        }
    }
}

impl std::str::FromStr for LabelPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(LabelPolicy::Oracle),
            "semantic" => Ok(LabelPolicy::Semantic),
            _ => Err(format!("unknown label policy `{s}` (expected oracle or semantic)")),
        }
    }
}

/// `(features, target)` pairs for training.
pub fn training_pairs(data: &[Datapoint], policy: LabelPolicy) -> Vec<(FeatureVector, bool)> {
    data.iter().map(|d| (d.features.clone(), policy.target(d))).collect()
}
