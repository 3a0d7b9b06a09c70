//! Priority-queue syntax-guided reduction, with an optional removal model
//! consulted before each oracle query.
//!
//! The queue holds an anti-chain of live subtrees ordered by token weight
//! (largest first), then by leftmost token. A popped node is tried: on
//! success it is deleted, otherwise its removable frontier is enqueued. The
//! guided engine inserts the same frontier when the model predicts `false`
//! and the oracle is never run, so a skipped trial and a failed trial leave
//! the queue in the same state.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{extract, FeatureMode, FeatureVector};
use crate::forest::{Forest, ForestError};
use crate::oracle::{Oracle, OracleError, OracleOutcome};
use crate::syntax_tree::{NodeId, SyntaxTree, TreeError};

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("the oracle rejects the unreduced input")]
    InitialOracleFalse,
    #[error("model expects {model} features, reducer configured for {requested}")]
    ModeMismatch { model: FeatureMode, requested: FeatureMode },
    #[error("model needs features but no feature mode was given")]
    MissingFeatures,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Model(#[from] ForestError),
}

/// What a model sees for one trial: the current tree, the node about to be
/// removed, and its features when a mode is configured.
pub struct Query<'a> {
    pub tree: &'a SyntaxTree,
    pub node: NodeId,
    pub features: Option<&'a FeatureVector>,
}

/// Predicts whether removing a node yields a semantically valid program.
pub trait RemovalModel {
    /// Feature mode the model was trained on; `None` if it reads the tree directly.
    fn feature_mode(&self) -> Option<FeatureMode>;
    fn predict(&self, query: &Query<'_>) -> Result<bool, ReduceError>;
}

impl RemovalModel for Forest {
    fn feature_mode(&self) -> Option<FeatureMode> {
        Some(self.mode)
    }

    fn predict(&self, query: &Query<'_>) -> Result<bool, ReduceError> {
        let features = query.features.ok_or(ReduceError::MissingFeatures)?;
        Ok(Forest::predict(self, features)?)
    }
}

/// Models that need no training.
pub mod models {
    use super::{Query, ReduceError, RemovalModel};
    use crate::features::FeatureMode;
    use crate::semantics::SemanticChecker;

    /// Always answers the same.
    pub struct Constant(pub bool);

    impl RemovalModel for Constant {
        fn feature_mode(&self) -> Option<FeatureMode> {
            None
        }

        fn predict(&self, _: &Query<'_>) -> Result<bool, ReduceError> {
            Ok(self.0)
        }
    }

    /// Answers by actually checking the candidate.
    pub struct GroundTruth(pub SemanticChecker);

    impl RemovalModel for GroundTruth {
        fn feature_mode(&self) -> Option<FeatureMode> {
            None
        }

        fn predict(&self, query: &Query<'_>) -> Result<bool, ReduceError> {
            let candidate = query.tree.remove(query.node)?;
            Ok(self.0.is_valid(&candidate))
        }
    }

    /// Wraps a closure.
    pub struct FromFn<F>(pub F);

    impl<F> RemovalModel for FromFn<F>
    where
        F: Fn(&Query<'_>) -> bool,
    {
        fn feature_mode(&self) -> Option<FeatureMode> {
            None
        }

        fn predict(&self, query: &Query<'_>) -> Result<bool, ReduceError> {
            Ok((self.0)(query))
        }
    }
}

/// One attempted removal.
///
/// `executed` holds exactly when `oracle_outcome` is present. `tokens_after`
/// is the size of the current tree once the trial is resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub node: NodeId,
    #[serde(default)]
    pub features: Option<FeatureVector>,
    #[serde(default)]
    pub prediction: Option<bool>,
    #[serde(default)]
    pub oracle_outcome: Option<OracleOutcome>,
    pub executed: bool,
    pub tokens_before: usize,
    pub tokens_after: usize,
    /// Seconds.
    pub elapsed: f64,
}

impl TrialRecord {
    pub fn accepted(&self) -> bool {
        self.oracle_outcome.as_ref().is_some_and(OracleOutcome::is_pass)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// Every trial runs the oracle; the model, if any, is not consulted.
    Baseline,
    /// The oracle runs only when the model predicts `true`.
    Guided,
    /// Both run on every trial; the oracle decides.
    Study,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReduceOptions {
    /// Full queue passes; stops early once a pass removes nothing.
    pub passes: usize,
    /// Extract features of this mode for every trial.
    pub mode: Option<FeatureMode>,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { passes: 1, mode: None }
    }
}

#[derive(Clone, Debug)]
pub struct Reduction {
    pub tree: SyntaxTree,
    pub trace: Vec<TrialRecord>,
}

impl Reduction {
    pub fn oracle_queries(&self) -> usize {
        self.trace.iter().filter(|r| r.executed).count()
    }

    pub fn skipped(&self) -> usize {
        self.trace.len() - self.oracle_queries()
    }
}

pub fn reduce_baseline(tree: &SyntaxTree, oracle: &mut dyn Oracle) -> Result<Reduction, ReduceError> {
    reduce(tree, oracle, None, Engine::Baseline, ReduceOptions::default())
}

pub fn reduce_guided(
    tree: &SyntaxTree,
    oracle: &mut dyn Oracle,
    model: &dyn RemovalModel,
    mode: FeatureMode,
) -> Result<Reduction, ReduceError> {
    let options = ReduceOptions {
        mode: Some(mode),
        ..Default::default()
    };
    reduce(tree, oracle, Some(model), Engine::Guided, options)
}

pub fn reduce_study(
    tree: &SyntaxTree,
    oracle: &mut dyn Oracle,
    model: &dyn RemovalModel,
    mode: FeatureMode,
) -> Result<Reduction, ReduceError> {
    let options = ReduceOptions {
        mode: Some(mode),
        ..Default::default()
    };
    reduce(tree, oracle, Some(model), Engine::Study, options)
}

#[derive(PartialEq, Eq)]
struct Entry {
    weight: usize,
    origin: u32,
    node: NodeId,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.weight, Reverse(self.origin), Reverse(self.node)).cmp(&(
            other.weight,
            Reverse(other.origin),
            Reverse(other.node),
        ))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Max-heap by weight, then leftmost original token.
#[derive(Default)]
pub struct ReductionQueue {
    heap: BinaryHeap<Entry>,
}

impl ReductionQueue {
    pub fn push(&mut self, tree: &SyntaxTree, id: NodeId) {
        if let Some(node) = tree.get(id) {
            let origin = tree.tokens().get(node.start).map_or(u32::MAX, |t| t.origin);
            self.heap.push(Entry {
                weight: node.weight(),
                origin,
                node: id,
            });
        }
    }

    pub fn pop(&mut self) -> Option<NodeId> {
        self.heap.pop().map(|e| e.node)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Runs one of the engines. `model` is required for `Guided` and `Study`.
pub fn reduce(
    tree: &SyntaxTree,
    oracle: &mut dyn Oracle,
    model: Option<&dyn RemovalModel>,
    engine: Engine,
    options: ReduceOptions,
) -> Result<Reduction, ReduceError> {
    let model = match engine {
        Engine::Baseline => None,
        Engine::Guided | Engine::Study => model,
    };
    if let Some(m) = model {
        match (m.feature_mode(), options.mode) {
            (Some(model_mode), Some(requested)) if model_mode != requested => {
                return Err(ReduceError::ModeMismatch {
                    model: model_mode,
                    requested,
                })
            }
            (Some(_), None) => return Err(ReduceError::MissingFeatures),
            _ => {}
        }
    }
    if !oracle.test(tree)?.is_pass() {
        return Err(ReduceError::InitialOracleFalse);
    }

    let mut current = tree.clone();
    let mut trace = Vec::new();
    for pass in 0..options.passes.max(1) {
        let size_before = current.token_count();
        let mut queue = ReductionQueue::default();
        for id in current.removable_frontier(&[current.root()])? {
            queue.push(&current, id);
        }

        while let Some(id) = queue.pop() {
            let Some(node) = current.get(id) else {
                continue;
            };
            let children = node.children.clone();
            // A plus-list element whose siblings were removed: descend without a trial.
            if !current.is_removable(id) {
                for c in current.removable_frontier(&children)? {
                    queue.push(&current, c);
                }
                continue;
            }

            let started = Instant::now();
            let features = options.mode.map(|m| extract(&current, id, m)).transpose()?;
            let prediction = match model {
                Some(m) => Some(m.predict(&Query {
                    tree: &current,
                    node: id,
                    features: features.as_ref(),
                })?),
                None => None,
            };
            let candidate = current.remove(id)?;
            let run_oracle = engine != Engine::Guided || prediction == Some(true);
            let outcome = if run_oracle {
                Some(oracle.test(&candidate)?)
            } else {
                None
            };
            let tokens_before = current.token_count();
            if outcome.as_ref().is_some_and(OracleOutcome::is_pass) {
                current = candidate;
            } else {
                for c in current.removable_frontier(&children)? {
                    queue.push(&current, c);
                }
            }
            trace.push(TrialRecord {
                node: id,
                features,
                prediction,
                executed: outcome.is_some(),
                oracle_outcome: outcome,
                tokens_before,
                tokens_after: current.token_count(),
                elapsed: started.elapsed().as_secs_f64(),
            });
        }

        debug!(
            "pass {pass}: {} -> {} tokens, {} trials so far",
            size_before,
            current.token_count(),
            trace.len()
        );
        if current.token_count() == size_before {
            break;
        }
    }
    Ok(Reduction { tree: current, trace })
}
