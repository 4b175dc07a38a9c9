//! Change distilling: parse two file revisions into syntax trees, diff the
//! trees into an edit script, and classify each edit into a 48-type change
//! taxonomy.
//!
//! The built-in frontend ([`parse_source`]) understands a small curly-brace
//! object-oriented subset; full-language tooling can instead supply trees in
//! the JSON interchange form accepted by [`SourceTree::from_json`]. The
//! built-in classifier emits a 12-type subset of the taxonomy; externally
//! distilled datasets may use the full 48-coordinate space.

mod diff;
mod parser;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::{apply_script, diff_trees, EditOp, EditScript, NodePath};
pub use parser::parse_source;
pub use tree::{NodeKind, SourceTree, TreeNode};

use crate::corpus::RevisionPair;

/// Number of change-type coordinates.
pub const TAXONOMY_WIDTH: usize = 48;

/// Input alias accepted wherever taxonomy labels are parsed.
const STATEMENT_UPDATE_ALIAS: &str = "statement_updated";

/// Errors produced while parsing, diffing or classifying.
#[derive(Debug, Error)]
pub enum DistillError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u32, message: String },
    #[error("invalid tree JSON: {0}")]
    TreeJson(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),
    #[error("unknown change type `{0}`")]
    UnknownChangeType(String),
    #[error("cannot apply edit script: {0}")]
    Apply(String),
}

// Coordinate indices of the taxonomy entries used by the built-in classifier
// (and by fixtures); each is validated against the shipped taxonomy file in
// the tests below.
pub const IDX_ADDITIONAL_CLASS: usize = 3;
pub const IDX_ADDITIONAL_FUNCTIONALITY: usize = 4;
pub const IDX_CLASS_RENAMING: usize = 10;
pub const IDX_CONDITION_EXPRESSION_CHANGE: usize = 15;
pub const IDX_METHOD_RENAMING: usize = 21;
pub const IDX_PARAMETER_DELETE: usize = 22;
pub const IDX_PARAMETER_INSERT: usize = 23;
pub const IDX_REMOVED_CLASS: usize = 33;
pub const IDX_REMOVED_FUNCTIONALITY: usize = 34;
pub const IDX_STATEMENT_DELETE: usize = 42;
pub const IDX_STATEMENT_INSERT: usize = 43;
pub const IDX_STATEMENT_UPDATE: usize = 46;
pub const IDX_UNKNOWN: usize = 47;

/// The 48-entry change-type table. Coordinate order of [`ChangeVector`]
/// equals the entry index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Taxonomy {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Taxonomy {
    /// The taxonomy shipped with the crate (`data/change_taxonomy.txt`).
    pub fn builtin() -> &'static Taxonomy {
        static BUILTIN: OnceLock<Taxonomy> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Taxonomy::parse(include_str!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/data/change_taxonomy.txt"
            )))
            .expect("shipped taxonomy file is valid")
        })
    }

    /// Parse a taxonomy file: one label per non-comment line, exactly 48
    /// lines, index = position among the labels.
    pub fn parse(text: &str) -> Result<Taxonomy, DistillError> {
        let mut labels = Vec::new();
        let mut index = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !line
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                return Err(DistillError::Taxonomy(format!(
                    "line {}: label `{}` must be lowercase_snake_case",
                    lineno + 1,
                    line
                )));
            }
            if index.insert(line.to_string(), labels.len()).is_some() {
                return Err(DistillError::Taxonomy(format!(
                    "line {}: duplicate label `{}`",
                    lineno + 1,
                    line
                )));
            }
            labels.push(line.to_string());
        }
        if labels.len() != TAXONOMY_WIDTH {
            return Err(DistillError::Taxonomy(format!(
                "expected {} labels, found {}",
                TAXONOMY_WIDTH,
                labels.len()
            )));
        }
        Ok(Taxonomy { labels, index })
    }

    pub fn from_file(path: &Path) -> Result<Taxonomy, DistillError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DistillError::Taxonomy(format!("{}: {}", path.display(), e)))?;
        Taxonomy::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    /// Look up a label's coordinate, resolving the `statement_updated` alias.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied().or_else(|| {
            (label == STATEMENT_UPDATE_ALIAS)
                .then(|| self.index.get("statement_update").copied())
                .flatten()
        })
    }
}

/// Counts per change type; coordinate order = taxonomy index. Every
/// occurrence is counted — values are unbounded non-negative integers.
/// Serializes as a plain 48-element sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChangeVector(pub [u32; TAXONOMY_WIDTH]);

impl Serialize for ChangeVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for ChangeVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<u32>::deserialize(deserializer)?;
        let len = values.len();
        let array: [u32; TAXONOMY_WIDTH] = values
            .try_into()
            .map_err(|_| serde::de::Error::invalid_length(len, &"a sequence of 48 counts"))?;
        Ok(ChangeVector(array))
    }
}

impl Default for ChangeVector {
    fn default() -> Self {
        ChangeVector([0; TAXONOMY_WIDTH])
    }
}

impl ChangeVector {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn count(&self, idx: usize) -> u32 {
        self.0[idx]
    }

    pub fn increment(&mut self, idx: usize) {
        self.0[idx] += 1;
    }

    /// Sum of all coordinates.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).sum()
    }

    /// Non-zero coordinates as `(index, count)` pairs.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
    }

    /// Non-zero coordinates keyed by taxonomy label.
    pub fn to_map(&self, taxonomy: &Taxonomy) -> BTreeMap<String, u32> {
        self.nonzero()
            .map(|(i, c)| (taxonomy.label(i).to_string(), c))
            .collect()
    }

    /// Build a vector from label-keyed counts; missing labels are zero.
    pub fn from_map(
        map: &BTreeMap<String, u32>,
        taxonomy: &Taxonomy,
    ) -> Result<Self, DistillError> {
        let mut v = ChangeVector::zero();
        for (label, &count) in map {
            let idx = taxonomy
                .index_of(label)
                .ok_or_else(|| DistillError::UnknownChangeType(label.clone()))?;
            v.0[idx] += count;
        }
        Ok(v)
    }
}

impl std::ops::Add for ChangeVector {
    type Output = ChangeVector;
    fn add(mut self, rhs: ChangeVector) -> ChangeVector {
        self += rhs;
        self
    }
}

impl std::ops::AddAssign for ChangeVector {
    fn add_assign(&mut self, rhs: ChangeVector) {
        for (a, b) in self.0.iter_mut().zip(rhs.0.iter()) {
            *a += b;
        }
    }
}

impl fmt::Display for ChangeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let taxonomy = Taxonomy::builtin();
        let mut first = true;
        for (i, c) in self.nonzero() {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{}:{}", taxonomy.label(i), c)?;
            first = false;
        }
        if first {
            write!(f, "(empty)")?;
        }
        Ok(())
    }
}

/// Map one edit operation to a taxonomy label (built-in 12-type mapping).
fn change_label(op: &EditOp) -> &'static str {
    match op {
        EditOp::Insert { kind, .. } => match kind {
            NodeKind::Statement => "statement_insert",
            NodeKind::Method => "additional_functionality",
            NodeKind::Class => "additional_class",
            NodeKind::Comment | NodeKind::CompilationUnit => "unknown",
        },
        EditOp::Delete { kind, .. } => match kind {
            NodeKind::Statement => "statement_delete",
            NodeKind::Method => "removed_functionality",
            NodeKind::Class => "removed_class",
            NodeKind::Comment | NodeKind::CompilationUnit => "unknown",
        },
        EditOp::Update {
            kind,
            old_value,
            new_value,
            ..
        } => match kind {
            NodeKind::Statement => "statement_update",
            NodeKind::Class => "class_renaming",
            NodeKind::Method => {
                let (old_name, old_arity) = signature_parts(old_value);
                let (new_name, new_arity) = signature_parts(new_value);
                if old_name != new_name {
                    "method_renaming"
                } else if new_arity > old_arity {
                    "parameter_insert"
                } else if new_arity < old_arity {
                    "parameter_delete"
                } else {
                    "unknown"
                }
            }
            NodeKind::Comment | NodeKind::CompilationUnit => "unknown",
        },
        EditOp::Move { .. } => "unknown",
    }
}

/// Split a normalized method signature into (name, parameter count).
///
/// The name is the last token before the first `(`; parameters are counted
/// by top-level commas inside the outermost parentheses (angle brackets are
/// tracked so generic type arguments do not inflate the count).
fn signature_parts(signature: &str) -> (String, usize) {
    let open = match signature.find('(') {
        Some(p) => p,
        None => {
            let name = signature.split_whitespace().last().unwrap_or("");
            return (name.to_string(), 0);
        }
    };
    let name = signature[..open]
        .split_whitespace()
        .last()
        .unwrap_or("")
        .to_string();
    let mut depth = 0usize;
    let mut angle = 0usize;
    let mut end = signature.len();
    for (pos, ch) in signature.char_indices().skip(open) {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    end = pos;
                    break;
                }
            }
            _ => {}
        }
    }
    let params = &signature[open + 1..end.min(signature.len())];
    if params.trim().is_empty() {
        return (name, 0);
    }
    let mut arity = 1usize;
    let mut paren = 0usize;
    for ch in params.chars() {
        match ch {
            '(' => paren += 1,
            ')' => paren = paren.saturating_sub(1),
            '<' => angle += 1,
            '>' => angle = angle.saturating_sub(1),
            ',' if paren == 0 && angle == 0 => arity += 1,
            _ => {}
        }
    }
    (name, arity)
}

/// Classify an edit script against an explicit taxonomy.
///
/// Fails if the taxonomy lacks one of the labels the built-in mapping emits.
pub fn classify_edits_in(
    script: &[EditOp],
    taxonomy: &Taxonomy,
) -> Result<ChangeVector, DistillError> {
    let mut vector = ChangeVector::zero();
    for op in script {
        let label = change_label(op);
        let idx = taxonomy
            .index_of(label)
            .ok_or_else(|| DistillError::UnknownChangeType(label.to_string()))?;
        vector.increment(idx);
    }
    Ok(vector)
}

/// Classify an edit script against the built-in taxonomy. Each operation
/// maps to exactly one change type, so the vector total equals the script
/// length.
pub fn classify_edits(script: &[EditOp]) -> ChangeVector {
    classify_edits_in(script, Taxonomy::builtin())
        .expect("built-in taxonomy covers the built-in mapping")
}

/// A revision pair the distiller could not process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub path: String,
    pub revision: u32,
    pub reason: String,
}

/// Result of distilling one commit: the summed change vector plus
/// diagnostics for pairs that failed to parse.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DistillOutcome {
    pub vector: ChangeVector,
    pub skipped: Vec<SkippedPair>,
}

/// Distill all revision pairs of one commit: parse both sides, diff, classify
/// and sum. Pairs that fail to parse are skipped with a warning and recorded
/// in the outcome's diagnostics. Pairs are processed in parallel; the result
/// is independent of scheduling.
pub fn distill_commit(pairs: &[RevisionPair]) -> DistillOutcome {
    let results: Vec<Result<ChangeVector, SkippedPair>> = pairs
        .par_iter()
        .map(|pair| {
            let distill_one = || -> Result<ChangeVector, DistillError> {
                let before = parse_source(&pair.before)?;
                let after = parse_source(&pair.after)?;
                let script = diff_trees(&before, &after);
                Ok(classify_edits(&script))
            };
            distill_one().map_err(|e| SkippedPair {
                path: pair.path.clone(),
                revision: pair.revision,
                reason: e.to_string(),
            })
        })
        .collect();

    let mut outcome = DistillOutcome::default();
    for result in results {
        match result {
            Ok(vector) => outcome.vector += vector,
            Err(skip) => {
                log::warn!(
                    "skipping {} at revision {}: {}",
                    skip.path,
                    skip.revision,
                    skip.reason
                );
                outcome.skipped.push(skip);
            }
        }
    }
    outcome
}
