//! Random-forest classifier: bagged CART trees with Gini splits and a
//! majority vote.
//!
//! Training is deterministic. Tree `i` draws all of its randomness from a
//! ChaCha stream keyed by `(seed, i)`, so parallel and sequential training
//! build the same trees.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMode, FeatureVector};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("sample {index} has {found} features, expected {expected}")]
    Ragged {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("feature mode mismatch: model uses {expected}, got {found}")]
    ModeMismatch { expected: FeatureMode, found: FeatureMode },
    #[error("feature vector has length {found}, model expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("model format error: {0}")]
    Format(#[from] serde_json::Error),
    #[error("model was trained for grammar {found}, active grammar is {expected}")]
    GrammarMismatch { expected: String, found: String },
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// `None` means `ceil(sqrt(F))`; resolved when training.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 16,
            min_samples_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        ForestParams {
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), ForestError> {
        let checks = [
            ("n_trees", self.n_trees),
            ("max_depth", self.max_depth),
            ("min_samples_leaf", self.min_samples_leaf),
            ("features_per_split", self.features_per_split.unwrap_or(1)),
        ];
        for (name, value) in checks {
            if value == 0 {
                return Err(ForestError::InvalidParams(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    fn resolved_features(&self, n_features: usize) -> usize {
        let default = (n_features as f64).sqrt().ceil() as usize;
        self.features_per_split.unwrap_or(default).clamp(1, n_features.max(1))
    }
}

/// Internal nodes send `x[feat] <= thr` left. Leaves hold `[n_false, n_true]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feat: usize,
        thr: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: [u32; 2],
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[u32]) -> bool {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split { feat, thr, left, right } => {
                    node = if f64::from(x[*feat]) <= *thr { left } else { right };
                }
                // leaf ties vote true, like forest ties
                TreeNode::Leaf { counts } => return counts[1] >= counts[0],
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    fn validate(&self, n_features: usize) -> Result<(), String> {
        match self {
            TreeNode::Split { feat, left, right, .. } => {
                if *feat >= n_features {
                    return Err(format!("split feature {feat} out of range (F = {n_features})"));
                }
                left.validate(n_features)?;
                right.validate(n_features)
            }
            TreeNode::Leaf { counts } => {
                if counts[0] + counts[1] == 0 {
                    Err("empty leaf".into())
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub mode: FeatureMode,
    pub grammar_hash: String,
    pub params: ForestParams,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    #[serde(flatten)]
    forest: Forest,
}

impl Forest {
    /// Trains trees in parallel.
    pub fn train(
        data: &[(FeatureVector, bool)],
        params: &ForestParams,
        grammar_hash: impl Into<String>,
    ) -> Result<Forest, ForestError> {
        Self::train_with(data, params, grammar_hash.into(), true)
    }

    /// Same result as [`Forest::train`], one tree at a time.
    pub fn train_sequential(
        data: &[(FeatureVector, bool)],
        params: &ForestParams,
        grammar_hash: impl Into<String>,
    ) -> Result<Forest, ForestError> {
        Self::train_with(data, params, grammar_hash.into(), false)
    }

    fn train_with(
        data: &[(FeatureVector, bool)],
        params: &ForestParams,
        grammar_hash: String,
        parallel: bool,
    ) -> Result<Forest, ForestError> {
        params.validate()?;
        let first = data.first().ok_or(ForestError::EmptyDataset)?;
        let mode = first.0.mode;
        let n_features = first.0.len();
        for (index, (x, _)) in data.iter().enumerate() {
            if x.mode != mode {
                return Err(ForestError::ModeMismatch {
                    expected: mode,
                    found: x.mode,
                });
            }
            if x.len() != n_features {
                return Err(ForestError::Ragged {
                    index,
                    expected: n_features,
                    found: x.len(),
                });
            }
        }

        let mut params = params.clone();
        params.features_per_split = Some(params.resolved_features(n_features));
        let samples = Samples::new(data);
        let grow = |i: usize| grow_tree(&samples, &params, i);
        let trees = if parallel {
            (0..params.n_trees).into_par_iter().map(grow).collect()
        } else {
            (0..params.n_trees).map(grow).collect()
        };

        Ok(Forest {
            mode,
            grammar_hash,
            params,
            n_features,
            trees,
        })
    }

    fn check_input(&self, x: &FeatureVector) -> Result<(), ForestError> {
        if x.mode != self.mode {
            return Err(ForestError::ModeMismatch {
                expected: self.mode,
                found: x.mode,
            });
        }
        if x.len() != self.n_features {
            return Err(ForestError::LengthMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Majority vote; an exact tie predicts `true`.
    pub fn predict(&self, x: &FeatureVector) -> Result<bool, ForestError> {
        self.check_input(x)?;
        let yes = self.trees.iter().filter(|t| t.predict(&x.values)).count();
        Ok(2 * yes >= self.trees.len())
    }

    /// Individual tree votes, in tree order.
    pub fn votes(&self, x: &FeatureVector) -> Result<Vec<bool>, ForestError> {
        self.check_input(x)?;
        Ok(self.trees.iter().map(|t| t.predict(&x.values)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFileRef {
            version: MODEL_VERSION,
            forest: self,
        })
        .expect("forest serializes")
    }

    /// Parses a model. With `expected_hash`, the model's grammar hash must match.
    pub fn from_json(text: &str, expected_hash: Option<&str>) -> Result<Forest, ForestError> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let value = serde_json::Value::deserialize(&mut de)?;
        de.end()?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| ForestError::Invalid("missing version".into()))?;
        if version != u64::from(MODEL_VERSION) {
            return Err(ForestError::Version(version as u32));
        }
        let file: ModelFile = serde_json::from_value(value)?;
        let forest = file.forest;
        if let Some(expected) = expected_hash {
            if forest.grammar_hash != expected {
                return Err(ForestError::GrammarMismatch {
                    expected: expected.to_string(),
                    found: forest.grammar_hash,
                });
            }
        }
        if forest.trees.is_empty() {
            return Err(ForestError::Invalid("no trees".into()));
        }
        if forest.n_features != forest.mode_len_hint().unwrap_or(forest.n_features) {
            return Err(ForestError::Invalid("feature count does not fit mode".into()));
        }
        for tree in &forest.trees {
            tree.validate(forest.n_features).map_err(ForestError::Invalid)?;
        }
        Ok(forest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForestError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, expected_hash: Option<&str>) -> Result<Forest, ForestError> {
        let text = std::fs::read_to_string(path)?;
        Forest::from_json(&text, expected_hash)
    }

    /// Type mode always has exactly one feature.
    fn mode_len_hint(&self) -> Option<usize> {
        (self.mode == FeatureMode::Type).then_some(1)
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    version: u32,
    #[serde(flatten)]
    forest: &'a Forest,
}

/// Column-major copy of the training data.
struct Samples {
    columns: Vec<Vec<u32>>,
    labels: Vec<bool>,
}

impl Samples {
    fn new(data: &[(FeatureVector, bool)]) -> Samples {
        let n_features = data[0].0.len();
        let columns = (0..n_features)
            .map(|f| data.iter().map(|(x, _)| x.values[f]).collect())
            .collect();
        Samples {
            columns,
            labels: data.iter().map(|(_, y)| *y).collect(),
        }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn n_features(&self) -> usize {
        self.columns.len()
    }
}

fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn grow_tree(samples: &Samples, params: &ForestParams, index: usize) -> TreeNode {
    let mut rng = tree_rng(params.seed, index);
    let n = samples.len();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut builder = Builder {
        samples,
        max_depth: params.max_depth,
        min_leaf: params.min_samples_leaf,
        features_per_split: params.resolved_features(samples.n_features()),
        rng,
    };
    builder.build(bootstrap, 0)
}

struct Builder<'a> {
    samples: &'a Samples,
    max_depth: usize,
    min_leaf: usize,
    features_per_split: usize,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy)]
struct Candidate {
    impurity: f64,
    feat: usize,
    thr: f64,
}

impl Candidate {
    fn better_than(&self, other: &Candidate) -> bool {
        (self.impurity, self.feat, self.thr) < (other.impurity, other.feat, other.thr)
    }
}

/// `n * gini` for a two-class count, kept unnormalized so that the weighted
/// child impurity is just the sum.
fn weighted_gini(neg: usize, pos: usize) -> f64 {
    let n = (neg + pos) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (neg as f64, pos as f64);
    n - (a * a + b * b) / n
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [u32; 2] {
        let pos = idx.iter().filter(|&&i| self.samples.labels[i]).count() as u32;
        [idx.len() as u32 - pos, pos]
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let counts = self.counts(&idx);
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return TreeNode::Leaf { counts };
        }
        let Some(best) = self.best_split(&idx) else {
            return TreeNode::Leaf { counts };
        };
        let column = &self.samples.columns[best.feat];
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| f64::from(column[i]) <= best.thr);
        TreeNode::Split {
            feat: best.feat,
            thr: best.thr,
            left: Box::new(self.build(left, depth + 1)),
            right: Box::new(self.build(right, depth + 1)),
        }
    }

    /// Visits features in a random order. Stops after `features_per_split`
    /// features once some valid split exists; constant features do not end
    /// the search early.
    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let mut order: Vec<usize> = (0..self.samples.n_features()).collect();
        order.shuffle(&mut self.rng);
        let mut best: Option<Candidate> = None;
        let mut pairs: Vec<(u32, bool)> = Vec::with_capacity(idx.len());
        for (visited, &feat) in order.iter().enumerate() {
            if visited >= self.features_per_split && best.is_some() {
                break;
            }
            let column = &self.samples.columns[feat];
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (column[i], self.samples.labels[i])));
            pairs.sort_unstable();

            let total_pos = pairs.iter().filter(|p| p.1).count();
            let n = pairs.len();
            let mut left_pos = 0;
            for i in 0..n - 1 {
                if pairs[i].1 {
                    left_pos += 1;
                }
                let left_n = i + 1;
                if pairs[i].0 == pairs[i + 1].0 || left_n < self.min_leaf || n - left_n < self.min_leaf {
                    continue;
                }
                let impurity = weighted_gini(left_n - left_pos, left_pos)
                    + weighted_gini(n - left_n - (total_pos - left_pos), total_pos - left_pos);
                let candidate = Candidate {
                    impurity,
                    feat,
                    thr: (f64::from(pairs[i].0) + f64::from(pairs[i + 1].0)) / 2.0,
                };
                if best.as_ref().is_none_or(|b| candidate.better_than(b)) {
                    best = Some(candidate);
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: Vec<u32>) -> FeatureVector {
        FeatureVector {
            mode: FeatureMode::Children,
            values,
        }
    }

    fn stump(vote: bool) -> TreeNode {
        TreeNode::Leaf {
            counts: if vote { [0, 1] } else { [1, 0] },
        }
    }

    fn forest_of(trees: Vec<TreeNode>) -> Forest {
        Forest {
            mode: FeatureMode::Children,
            grammar_hash: "h".into(),
            params: ForestParams::default(),
            n_features: 2,
            trees,
        }
    }

    #[test]
    fn majority_and_tie_rule() {
        let x = fv(vec![0, 0]);
        let f = forest_of(vec![stump(true), stump(true), stump(false)]);
        assert!(f.predict(&x).unwrap());
        let f = forest_of(vec![stump(true), stump(false)]);
        assert!(f.predict(&x).unwrap());
        let f = forest_of(vec![stump(false), stump(false), stump(true)]);
        assert!(!f.predict(&x).unwrap());
    }

    #[test]
    fn mode_and_length_checked() {
        let f = forest_of(vec![stump(true)]);
        let wrong_mode = FeatureVector {
            mode: FeatureMode::Path,
            values: vec![0, 0],
        };
        assert!(matches!(f.predict(&wrong_mode), Err(ForestError::ModeMismatch { .. })));
        assert!(matches!(
            f.predict(&fv(vec![1])),
            Err(ForestError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn training_errors() {
        let params = ForestParams::default();
        assert!(matches!(
            Forest::train(&[], &params, "h"),
            Err(ForestError::EmptyDataset)
        ));
        let ragged = vec![(fv(vec![1, 2]), true), (fv(vec![1]), false)];
        assert!(matches!(
            Forest::train(&ragged, &params, "h"),
            Err(ForestError::Ragged { index: 1, .. })
        ));
        let bad = ForestParams {
            n_trees: 0,
            ..Default::default()
        };
        assert!(matches!(
            Forest::train(&[(fv(vec![1, 2]), true)], &bad, "h"),
            Err(ForestError::InvalidParams(_))
        ));
    }

    #[test]
    fn all_true_labels_predict_true() {
        let data: Vec<_> = (0..20).map(|i| (fv(vec![i, i % 3]), true)).collect();
        let f = Forest::train(&data, &ForestParams::with_seed(3), "h").unwrap();
        for (x, _) in &data {
            assert!(f.predict(x).unwrap());
        }
        assert!(f.trees.iter().all(|t| t.depth() == 0));
    }

    #[test]
    fn single_tree_fits_consistent_data_exactly() {
        // XOR-like labels need depth 2 with zero-gain first splits.
        let data: Vec<_> = (0..64u32)
            .map(|i| (fv(vec![i % 2, (i / 2) % 2]), (i % 2) ^ ((i / 2) % 2) == 1))
            .collect();
        let samples = Samples::new(&data);
        let mut builder = Builder {
            samples: &samples,
            max_depth: usize::MAX,
            min_leaf: 1,
            features_per_split: 1,
            rng: tree_rng(9, 0),
        };
        let tree = builder.build((0..data.len()).collect(), 0);
        for (x, y) in &data {
            assert_eq!(tree.predict(&x.values), *y);
        }
    }

    #[test]
    fn thresholds_are_midpoints_and_ties_prefer_low_feature() {
        // Both features separate the classes perfectly; feature 0 must win.
        let data = vec![(fv(vec![1, 10]), false), (fv(vec![3, 20]), true)];
        let samples = Samples::new(&data);
        let mut builder = Builder {
            samples: &samples,
            max_depth: 4,
            min_leaf: 1,
            features_per_split: 2,
            rng: tree_rng(1, 0),
        };
        match builder.build(vec![0, 1], 0) {
            TreeNode::Split { feat, thr, .. } => {
                assert_eq!(feat, 0);
                assert_eq!(thr, 2.0);
            }
            leaf => panic!("expected split, got {leaf:?}"),
        }
    }

    #[test]
    fn version_and_hash_checked_on_load() {
        let f = forest_of(vec![stump(true)]);
        let json = f.to_json();
        assert_eq!(Forest::from_json(&json, Some("h")).unwrap(), f);
        assert!(matches!(
            Forest::from_json(&json, Some("other")),
            Err(ForestError::GrammarMismatch { .. })
        ));
        let v2 = json.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(Forest::from_json(&v2, None), Err(ForestError::Version(2))));
        assert!(Forest::from_json("{\"version\":1}", None).is_err());
    }
}
