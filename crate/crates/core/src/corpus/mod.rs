//! Labeled commit datasets: ingest, validation, persistence, holdout
//! splitting, and patch-series replay into per-revision file pairs.

mod patch;
mod replay;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distill::{ChangeVector, Taxonomy};

pub use replay::{apply_series, replay_patches, PatchSeries, ReplayOptions, RevisionPair};

/// The three maintenance activities. The declaration order is the fixed
/// total order used for tie-breaking everywhere in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaintenanceClass {
    Corrective,
    Perfective,
    Adaptive,
}

impl MaintenanceClass {
    /// All classes in canonical (tie-breaking) order.
    pub const ALL: [MaintenanceClass; 3] = [
        MaintenanceClass::Corrective,
        MaintenanceClass::Perfective,
        MaintenanceClass::Adaptive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaintenanceClass::Corrective => "corrective",
            MaintenanceClass::Perfective => "perfective",
            MaintenanceClass::Adaptive => "adaptive",
        }
    }

    /// Position in [`MaintenanceClass::ALL`].
    pub fn index(self) -> usize {
        match self {
            MaintenanceClass::Corrective => 0,
            MaintenanceClass::Perfective => 1,
            MaintenanceClass::Adaptive => 2,
        }
    }
}

impl fmt::Display for MaintenanceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaintenanceClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "corrective" => Ok(MaintenanceClass::Corrective),
            "perfective" => Ok(MaintenanceClass::Perfective),
            "adaptive" => Ok(MaintenanceClass::Adaptive),
            other => Err(format!("unknown class `{other}`")),
        }
    }
}

/// One version-control commit: identifier, free-text message, change-type
/// counts and an optional class label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Commit {
    pub id: String,
    pub project: String,
    pub message: String,
    pub changes: ChangeVector,
    pub label: Option<MaintenanceClass>,
}

/// Errors from dataset and patch handling.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: malformed row: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}:{line}: unknown label `{label}`")]
    UnknownLabel {
        path: String,
        line: u64,
        label: String,
    },
    #[error("duplicate commit id `{id}`")]
    DuplicateId { id: String },
    #[error("{path}: no rows")]
    NoRows { path: String },
    #[error("missing required column `{column}`")]
    MissingColumn { column: String },
    #[error("commit `{id}` has no label")]
    Unlabeled { id: String },
    #[error("test fraction {fraction} outside (0, 1)")]
    InvalidFraction { fraction: f64 },
    #[error("class {class} has only {count} instance(s); at least {required} required")]
    ClassTooSmall {
        class: MaintenanceClass,
        count: usize,
        required: usize,
    },
    #[error("patch {index}: {message}")]
    Patch { index: usize, message: String },
    #[error("patch series: {0}")]
    Series(String),
}

/// An ordered collection of fully labeled commits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledDataset {
    commits: Vec<Commit>,
}

impl LabeledDataset {
    /// Validate and wrap commits: every commit labeled, ids non-empty and
    /// unique. An empty collection is permitted (splits may produce one).
    pub fn new(commits: Vec<Commit>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for commit in &commits {
            if commit.id.is_empty() {
                return Err(CorpusError::Row {
                    path: String::new(),
                    line: 0,
                    message: "empty commit id".to_string(),
                });
            }
            if !seen.insert(commit.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    id: commit.id.clone(),
                });
            }
            if commit.label.is_none() {
                return Err(CorpusError::Unlabeled {
                    id: commit.id.clone(),
                });
            }
        }
        Ok(LabeledDataset { commits })
    }

    pub fn commits(&self) -> &[Commit] {
        &self.commits
    }

    pub fn len(&self) -> usize {
        self.commits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commits.is_empty()
    }

    /// Per-class commit counts in canonical class order.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for commit in &self.commits {
            counts[commit.label.expect("dataset commits are labeled").index()] += 1;
        }
        counts
    }

    pub fn count_of(&self, class: MaintenanceClass) -> usize {
        self.class_counts()[class.index()]
    }

    /// Subset by row indices (must be unique and in range); original
    /// relative order of the selected rows is preserved.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let commits = indices
            .iter()
            .map(|&i| self.commits[i].clone())
            .collect::<Vec<_>>();
        debug_assert_eq!(
            indices.iter().collect::<BTreeSet<_>>().len(),
            indices.len(),
            "selection indices must be unique"
        );
        LabeledDataset { commits }
    }
}

/// On-disk dataset encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl FromStr for DataFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

fn io_error(path: &Path, e: impl fmt::Display) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Import a fully labeled dataset using the built-in taxonomy for change
/// columns. See [`import_dataset_with`].
pub fn import_dataset(path: &Path, format: DataFormat) -> Result<LabeledDataset, CorpusError> {
    import_dataset_with(path, format, Taxonomy::builtin())
}

/// Import a fully labeled dataset. Every row must carry a valid label;
/// malformed rows, unknown labels and duplicate ids are reported with their
/// line numbers. Unknown change-count columns are ignored with a warning.
pub fn import_dataset_with(
    path: &Path,
    format: DataFormat,
    taxonomy: &Taxonomy,
) -> Result<LabeledDataset, CorpusError> {
    let commits = load_commits(path, format, taxonomy, true)?;
    LabeledDataset::new(commits)
}

/// Import commits for classification: the label column/field is optional.
pub fn import_commits(
    path: &Path,
    format: DataFormat,
    taxonomy: &Taxonomy,
) -> Result<Vec<Commit>, CorpusError> {
    load_commits(path, format, taxonomy, false)
}

fn load_commits(
    path: &Path,
    format: DataFormat,
    taxonomy: &Taxonomy,
    require_label: bool,
) -> Result<Vec<Commit>, CorpusError> {
    let commits = match format {
        DataFormat::Csv => load_csv(path, taxonomy, require_label)?,
        DataFormat::Jsonl => load_jsonl(path, taxonomy, require_label)?,
    };
    if commits.is_empty() {
        return Err(CorpusError::NoRows {
            path: path.display().to_string(),
        });
    }
    let mut seen = BTreeSet::new();
    for commit in &commits {
        if !seen.insert(commit.id.clone()) {
            return Err(CorpusError::DuplicateId {
                id: commit.id.clone(),
            });
        }
    }
    Ok(commits)
}

enum Column {
    Id,
    Project,
    Message,
    Label,
    Change(usize),
    Ignored,
}

fn load_csv(
    path: &Path,
    taxonomy: &Taxonomy,
    require_label: bool,
) -> Result<Vec<Commit>, CorpusError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let headers = reader.headers().map_err(|e| io_error(path, e))?.clone();

    let mut columns = Vec::with_capacity(headers.len());
    let mut have = [false; 4];
    for header in headers.iter() {
        let column = match header {
            "id" => {
                have[0] = true;
                Column::Id
            }
            "project" => {
                have[1] = true;
                Column::Project
            }
            "message" => {
                have[2] = true;
                Column::Message
            }
            "label" => {
                have[3] = true;
                Column::Label
            }
            other => match taxonomy.index_of(other) {
                Some(idx) => Column::Change(idx),
                None => {
                    log::warn!("{display}: ignoring unknown column `{other}`");
                    Column::Ignored
                }
            },
        };
        columns.push(column);
    }
    for (i, name) in ["id", "project", "message"].iter().enumerate() {
        if !have[i] {
            return Err(CorpusError::MissingColumn {
                column: name.to_string(),
            });
        }
    }
    if require_label && !have[3] {
        return Err(CorpusError::MissingColumn {
            column: "label".to_string(),
        });
    }

    let mut commits = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CorpusError::Row {
            path: display.clone(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| CorpusError::Row {
            path: display.clone(),
            line,
            message,
        };
        if record.len() != columns.len() {
            return Err(row_err(format!(
                "expected {} fields, found {}",
                columns.len(),
                record.len()
            )));
        }
        let mut commit = Commit {
            id: String::new(),
            project: String::new(),
            message: String::new(),
            changes: ChangeVector::zero(),
            label: None,
        };
        for (column, field) in columns.iter().zip(record.iter()) {
            match column {
                Column::Id => commit.id = field.to_string(),
                Column::Project => commit.project = field.to_string(),
                Column::Message => commit.message = field.to_string(),
                Column::Label => {
                    if !field.is_empty() {
                        let label = field.parse().map_err(|_| CorpusError::UnknownLabel {
                            path: display.clone(),
                            line,
                            label: field.to_string(),
                        })?;
                        commit.label = Some(label);
                    }
                }
                Column::Change(idx) => {
                    let count: u32 = field
                        .parse()
                        .map_err(|_| row_err(format!("bad change count `{field}`")))?;
                    commit.changes.0[*idx] += count;
                }
                Column::Ignored => {}
            }
        }
        if commit.id.is_empty() {
            return Err(row_err("empty commit id".to_string()));
        }
        if require_label && commit.label.is_none() {
            return Err(row_err("missing label".to_string()));
        }
        commits.push(commit);
    }
    Ok(commits)
}

#[derive(Deserialize)]
struct JsonCommitIn {
    id: String,
    #[serde(default)]
    project: String,
    #[serde(default)]
    message: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    changes: BTreeMap<String, u32>,
}

#[derive(Serialize)]
struct JsonCommitOut<'c> {
    id: &'c str,
    project: &'c str,
    message: &'c str,
    label: &'c str,
    changes: BTreeMap<&'c str, u32>,
}

fn load_jsonl(
    path: &Path,
    taxonomy: &Taxonomy,
    require_label: bool,
) -> Result<Vec<Commit>, CorpusError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut commits = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = (idx + 1) as u64;
        if raw.trim().is_empty() {
            continue;
        }
        let row: JsonCommitIn = serde_json::from_str(raw).map_err(|e| CorpusError::Row {
            path: display.clone(),
            line,
            message: e.to_string(),
        })?;
        if row.id.is_empty() {
            return Err(CorpusError::Row {
                path: display.clone(),
                line,
                message: "empty commit id".to_string(),
            });
        }
        let label = match row.label.as_deref() {
            None | Some("") => None,
            Some(text) => Some(text.parse().map_err(|_| CorpusError::UnknownLabel {
                path: display.clone(),
                line,
                label: text.to_string(),
            })?),
        };
        if require_label && label.is_none() {
            return Err(CorpusError::Row {
                path: display.clone(),
                line,
                message: "missing label".to_string(),
            });
        }
        let mut changes = ChangeVector::zero();
        for (key, count) in &row.changes {
            match taxonomy.index_of(key) {
                Some(i) => changes.0[i] += count,
                None => log::warn!("{display}:{line}: ignoring unknown change type `{key}`"),
            }
        }
        commits.push(Commit {
            id: row.id,
            project: row.project,
            message: row.message,
            changes,
            label,
        });
    }
    Ok(commits)
}

/// Export a dataset in the canonical schema (all 48 change columns for CSV;
/// non-zero change counts for JSONL). `import(export(import(x)))` is
/// field-for-field identical to `import(x)`.
pub fn export_dataset(
    ds: &LabeledDataset,
    path: &Path,
    format: DataFormat,
) -> Result<(), CorpusError> {
    export_dataset_with(ds, path, format, Taxonomy::builtin())
}

pub fn export_dataset_with(
    ds: &LabeledDataset,
    path: &Path,
    format: DataFormat,
    taxonomy: &Taxonomy,
) -> Result<(), CorpusError> {
    let mut out = String::new();
    match format {
        DataFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["id", "project", "message", "label"];
            header.extend(taxonomy.labels().iter().map(String::as_str));
            writer
                .write_record(&header)
                .map_err(|e| io_error(path, e))?;
            for commit in ds.commits() {
                let mut record = vec![
                    commit.id.clone(),
                    commit.project.clone(),
                    commit.message.clone(),
                    commit.label.expect("labeled").name().to_string(),
                ];
                record.extend(commit.changes.0.iter().map(u32::to_string));
                writer
                    .write_record(&record)
                    .map_err(|e| io_error(path, e))?;
            }
            let bytes = writer.into_inner().map_err(|e| io_error(path, e))?;
            out = String::from_utf8(bytes).expect("csv output is UTF-8");
        }
        DataFormat::Jsonl => {
            for commit in ds.commits() {
                let row = JsonCommitOut {
                    id: &commit.id,
                    project: &commit.project,
                    message: &commit.message,
                    label: commit.label.expect("labeled").name(),
                    changes: commit
                        .changes
                        .nonzero()
                        .map(|(i, c)| (taxonomy.label(i), c))
                        .collect(),
                };
                out.push_str(&serde_json::to_string(&row).expect("serializable row"));
                out.push('\n');
            }
        }
    }
    std::fs::write(path, out).map_err(|e| io_error(path, e))
}

/// Per-class holdout size: `fraction × count`, floored, except that values
/// within 1e-9 of an integer round to it (guarding float error in products
/// like 0.15 × 500). This rounding mode makes the canonical 1151-commit
/// corpus (500/404/247 per class at 15%) yield a 172-commit test split.
fn holdout_count(fraction: f64, count: usize) -> usize {
    let x = fraction * count as f64;
    let rounded = x.round();
    let value = if (x - rounded).abs() < 1e-9 {
        rounded
    } else {
        x.floor()
    };
    (value as usize).min(count)
}

/// Stratified holdout split: per class, a seeded shuffle selects the test
/// rows; both halves preserve the original row order. Deterministic in
/// `seed`; train and test are disjoint and jointly exhaustive.
pub fn split_holdout(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), CorpusError> {
    if !test_fraction.is_finite() || test_fraction <= 0.0 || test_fraction >= 1.0 {
        return Err(CorpusError::InvalidFraction {
            fraction: test_fraction,
        });
    }
    let counts = ds.class_counts();
    for class in MaintenanceClass::ALL {
        if counts[class.index()] < 2 {
            return Err(CorpusError::ClassTooSmall {
                class,
                count: counts[class.index()],
                required: 2,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; ds.len()];
    for class in MaintenanceClass::ALL {
        let mut indices: Vec<usize> = ds
            .commits()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label == Some(class))
            .map(|(i, _)| i)
            .collect();
        indices.shuffle(&mut rng);
        let take = holdout_count(test_fraction, indices.len());
        for &i in indices.iter().take(take) {
            in_test[i] = true;
        }
    }
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for (i, &held_out) in in_test.iter().enumerate() {
        if held_out {
            test_idx.push(i);
        } else {
            train_idx.push(i);
        }
    }
    Ok((ds.select(&train_idx), ds.select(&test_idx)))
}
