//! From-scratch supervised learners over count-feature vectors: a C4.5-style
//! decision tree with pessimistic pruning, a random forest, and a gradient
//! boosting machine. All training is deterministic given a seed, regardless
//! of thread schedule.

mod boost;
mod dtree;
mod forest;
pub(crate) mod rng;

pub use boost::{train_boost, BoostModel, BoostParams};
pub(crate) use dtree::read_class_counts;
pub use dtree::{parse_rendered_tree, render_tree, train_tree, TreeModel, TreeParams};
pub use forest::{train_forest, ForestModel, ForestParams};

use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::MaintenanceClass;
use crate::Real;

/// Hyperparameter grid exposed for cross-validated selection.
pub const FOREST_MTRY_GRID: [usize; 3] = [2, 8, 34];
/// Hyperparameter grid exposed for cross-validated selection.
pub const BOOST_STAGE_GRID: [usize; 3] = [50, 100, 150];
/// Hyperparameter grid exposed for cross-validated selection.
pub const BOOST_DEPTH_GRID: [usize; 3] = [1, 2, 3];

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data has no rows")]
    Empty,
    #[error("row {row} has {found} features, expected {expected}")]
    WidthMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate feature name `{name}`")]
    DuplicateFeature { name: String },
    #[error("feature tuple has {found} features, model expects {expected}")]
    FeatureCount { expected: usize, found: usize },
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("non-finite score at boosting stage {stage}")]
    NonFinite { stage: usize },
    #[error("model text line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Feature rows plus class labels. Features are non-negative integer
/// counts; all rows share one width, matched by `feature_names`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingMatrix {
    rows: Vec<Vec<u32>>,
    labels: Vec<MaintenanceClass>,
    feature_names: Vec<String>,
}

impl TrainingMatrix {
    /// Validate widths and feature-name uniqueness. A single-class matrix
    /// is allowed: learners degrade to constant models rather than erroring.
    pub fn new(
        rows: Vec<(Vec<u32>, MaintenanceClass)>,
        feature_names: Vec<String>,
    ) -> Result<Self, LearnError> {
        if rows.is_empty() {
            return Err(LearnError::Empty);
        }
        let width = feature_names.len();
        let mut seen = std::collections::BTreeSet::new();
        for name in &feature_names {
            if !seen.insert(name.clone()) {
                return Err(LearnError::DuplicateFeature { name: name.clone() });
            }
        }
        let mut features = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (i, (x, y)) in rows.into_iter().enumerate() {
            if x.len() != width {
                return Err(LearnError::WidthMismatch {
                    row: i,
                    expected: width,
                    found: x.len(),
                });
            }
            features.push(x);
            labels.push(y);
        }
        Ok(TrainingMatrix {
            rows: features,
            labels,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn label(&self, i: usize) -> MaintenanceClass {
        self.labels[i]
    }

    /// Class counts in canonical order.
    pub fn class_counts(&self) -> [u32; 3] {
        let mut counts = [0u32; 3];
        for y in &self.labels {
            counts[y.index()] += 1;
        }
        counts
    }
}

/// A probability per class, in canonical class order; sums to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores<R: Real> {
    probs: [R; 3],
}

impl<R: Real> ClassScores<R> {
    /// Normalize a count distribution (must not be all zero).
    pub fn from_counts(counts: [u32; 3]) -> Self {
        let total: u32 = counts.iter().sum();
        debug_assert!(total > 0, "score distribution needs at least one count");
        let t = R::from_count(total as usize);
        ClassScores {
            probs: counts.map(|c| R::from_count(c as usize) / t),
        }
    }

    /// Normalize raw non-negative weights (must not be all zero).
    pub fn from_raw(raw: [R; 3]) -> Self {
        let total = raw[0] + raw[1] + raw[2];
        debug_assert!(total > R::zero(), "scores need positive mass");
        ClassScores {
            probs: raw.map(|v| v / total),
        }
    }

    pub fn get(&self, class: MaintenanceClass) -> R {
        self.probs[class.index()]
    }

    pub fn probabilities(&self) -> [R; 3] {
        self.probs
    }
}

/// Total argmax: highest score, ties broken by training-set class
/// frequency, then by the canonical class order.
pub(crate) fn argmax_class<R: Real>(scores: &[R; 3], class_freq: &[u32; 3]) -> MaintenanceClass {
    let mut best = 0usize;
    for i in 1..3 {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best] && class_freq[i] > class_freq[best]);
        if better {
            best = i;
        }
    }
    MaintenanceClass::ALL[best]
}

/// Classification tree node shared by the gain-ratio tree and the forest's
/// Gini trees. Leaves carry the training class distribution.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum SplitNode<R: Real> {
    Split {
        feature: usize,
        threshold: R,
        left: Box<SplitNode<R>>,
        right: Box<SplitNode<R>>,
    },
    Leaf {
        counts: [u32; 3],
    },
}

impl<R: Real> SplitNode<R> {
    pub(crate) fn leaf_for(&self, x: &[u32]) -> &[u32; 3] {
        match self {
            SplitNode::Leaf { counts } => counts,
            SplitNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if R::from_count(x[*feature] as usize) <= *threshold {
                    left.leaf_for(x)
                } else {
                    right.leaf_for(x)
                }
            }
        }
    }

    pub(crate) fn counts(&self) -> [u32; 3] {
        match self {
            SplitNode::Leaf { counts } => *counts,
            SplitNode::Split { left, right, .. } => {
                let (l, r) = (left.counts(), right.counts());
                [l[0] + r[0], l[1] + r[1], l[2] + r[2]]
            }
        }
    }

    pub(crate) fn depth(&self) -> usize {
        match self {
            SplitNode::Leaf { .. } => 0,
            SplitNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub(crate) fn write_text(&self, out: &mut String) {
        match self {
            SplitNode::Leaf { counts } => {
                writeln!(out, "L {} {} {}", counts[0], counts[1], counts[2])
                    .expect("write to string");
            }
            SplitNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                writeln!(out, "S {feature} {threshold}").expect("write to string");
                left.write_text(out);
                right.write_text(out);
            }
        }
    }

    pub(crate) fn read_text(cur: &mut LineCursor<'_>, width: usize) -> Result<Self, LearnError> {
        let line = cur.next()?;
        let lineno = cur.line;
        let bad = |message: String| LearnError::Format {
            line: lineno,
            message,
        };
        let mut parts = line.split(' ');
        match parts.next() {
            Some("L") => {
                let mut counts = [0u32; 3];
                for slot in &mut counts {
                    *slot = parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad(format!("bad leaf line `{line}`")))?;
                }
                if parts.next().is_some() {
                    return Err(bad(format!("trailing tokens in `{line}`")));
                }
                Ok(SplitNode::Leaf { counts })
            }
            Some("S") => {
                let feature: usize = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(format!("bad split line `{line}`")))?;
                if feature >= width {
                    return Err(bad(format!(
                        "feature index {feature} out of range (width {width})"
                    )));
                }
                let threshold = parts
                    .next()
                    .and_then(R::parse_text)
                    .ok_or_else(|| bad(format!("bad threshold in `{line}`")))?;
                if parts.next().is_some() {
                    return Err(bad(format!("trailing tokens in `{line}`")));
                }
                let left = Box::new(SplitNode::read_text(cur, width)?);
                let right = Box::new(SplitNode::read_text(cur, width)?);
                Ok(SplitNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                })
            }
            _ => Err(bad(format!("expected node line, found `{line}`"))),
        }
    }
}

/// Line-oriented reader for the model text codecs, tracking line numbers
/// for error reporting.
pub(crate) struct LineCursor<'a> {
    iter: std::str::Lines<'a>,
    pub(crate) line: usize,
}

impl<'a> LineCursor<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        LineCursor {
            iter: text.lines(),
            line: 0,
        }
    }

    pub(crate) fn next(&mut self) -> Result<&'a str, LearnError> {
        self.line += 1;
        self.iter.next().ok_or(LearnError::Format {
            line: self.line,
            message: "unexpected end of model text".to_string(),
        })
    }

    pub(crate) fn expect(&mut self, tag: &str) -> Result<(), LearnError> {
        let line = self.next()?;
        if line == tag {
            Ok(())
        } else {
            Err(LearnError::Format {
                line: self.line,
                message: format!("expected `{tag}`, found `{line}`"),
            })
        }
    }

    pub(crate) fn peek(&self) -> Option<&'a str> {
        self.iter.clone().next()
    }

    pub(crate) fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }
}

/// Parse a tagged line `tag v0 v1 …` into its value tokens.
pub(crate) fn tagged_values<'a>(
    cur: &mut LineCursor<'a>,
    tag: &str,
) -> Result<Vec<&'a str>, LearnError> {
    let line = cur.next()?;
    let mut parts = line.split(' ');
    if parts.next() != Some(tag) {
        return Err(LearnError::Format {
            line: cur.line,
            message: format!("expected `{tag} …`, found `{line}`"),
        });
    }
    Ok(parts.collect())
}

pub(crate) fn parse_reals<R: Real>(tokens: &[&str], line: usize) -> Result<Vec<R>, LearnError> {
    tokens
        .iter()
        .map(|t| {
            R::parse_text(t).ok_or(LearnError::Format {
                line,
                message: format!("bad numeric value `{t}`"),
            })
        })
        .collect()
}

/// Ranked feature importances: raw per-feature accumulations normalized to
/// sum 1 (all zeros when no split was ever made), descending, ties in
/// feature order.
pub(crate) fn ranked_importance<R: Real>(names: &[String], raw: &[R]) -> Vec<(String, R)> {
    let total: R = raw.iter().copied().fold(R::zero(), |a, b| a + b);
    let mut entries: Vec<(usize, R)> = raw
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            (
                i,
                if total > R::zero() {
                    v / total
                } else {
                    R::zero()
                },
            )
        })
        .collect();
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then(a.0.cmp(&b.0))
    });
    entries
        .into_iter()
        .map(|(i, v)| (names[i].clone(), v))
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A well-separated three-class fixture: feature `k` (k<3) is high for
    /// class `k`, low otherwise; feature 3 is uninformative noise.
    pub(crate) fn separable(n_per_class: usize, seed: u64) -> TrainingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for class in MaintenanceClass::ALL {
            for _ in 0..n_per_class {
                let mut x = vec![0u32; 4];
                for (f, slot) in x.iter_mut().enumerate().take(3) {
                    *slot = if f == class.index() {
                        rng.random_range(3..=5)
                    } else {
                        rng.random_range(0..=1)
                    };
                }
                x[3] = rng.random_range(0..=6);
                rows.push((x, class));
            }
        }
        TrainingMatrix::new(
            rows,
            ["alpha", "beta", "gamma", "noise"]
                .map(String::from)
                .to_vec(),
        )
        .unwrap()
    }

    pub(crate) fn training_accuracy<R: Real>(
        data: &TrainingMatrix,
        mut predict: impl FnMut(&[u32]) -> MaintenanceClass,
    ) -> R {
        let hits = (0..data.len())
            .filter(|&i| predict(data.row(i)) == data.label(i))
            .count();
        R::from_count(hits) / R::from_count(data.len())
    }
}
