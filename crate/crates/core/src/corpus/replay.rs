//! Replay a numbered series of unified-diff patches and surface every file
//! modification as a (before, after) revision pair for the distiller.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::patch::{apply_patch, parse_patch};
use super::CorpusError;

/// A directory of `NNNNNN.patch` files numbered contiguously from 1; the
/// number is the revision the patch produces.
#[derive(Clone, Debug)]
pub struct PatchSeries {
    dir: PathBuf,
    patches: Vec<PathBuf>,
}

impl PatchSeries {
    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let entries = std::fs::read_dir(dir).map_err(|e| CorpusError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| CorpusError::Io {
                path: dir.display().to_string(),
                message: e.to_string(),
            })?;
            let path = entry.path();
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".patch")) else {
                continue;
            };
            let number: u64 = stem.parse().map_err(|_| {
                CorpusError::Series(format!("non-numeric patch name `{}`", path.display()))
            })?;
            numbered.push((number, path));
        }
        if numbered.is_empty() {
            return Err(CorpusError::Series(format!(
                "no .patch files in {}",
                dir.display()
            )));
        }
        numbered.sort();
        for (i, (number, path)) in numbered.iter().enumerate() {
            let expected = (i + 1) as u64;
            if *number != expected {
                return Err(CorpusError::Series(format!(
                    "expected patch {expected}, found `{}`",
                    path.display()
                )));
            }
        }
        Ok(PatchSeries {
            dir: dir.to_path_buf(),
            patches: numbered.into_iter().map(|(_, p)| p).collect(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Filtering options for [`replay_patches`].
#[derive(Clone, Debug)]
pub struct ReplayOptions {
    /// Keep only files whose path ends with one of these suffixes. An
    /// empty list keeps everything.
    pub extensions: Vec<String>,
    /// When set, creations pair an empty before and deletions an empty
    /// after; by default both are suppressed (there is nothing to compare).
    pub pair_creations: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            extensions: vec![".java".to_string()],
            pair_creations: false,
        }
    }
}

/// One file changed by one revision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevisionPair {
    pub path: String,
    pub before: String,
    pub after: String,
    pub revision: u32,
}

fn keep_path(path: &str, opts: &ReplayOptions) -> bool {
    opts.extensions.is_empty() || opts.extensions.iter().any(|ext| path.ends_with(ext))
}

/// Apply the series in order, collecting a [`RevisionPair`] for every
/// modified file that passes the extension filter. Pairs are ordered by
/// revision, then path.
pub fn replay_patches(
    series: &PatchSeries,
    opts: &ReplayOptions,
) -> Result<Vec<RevisionPair>, CorpusError> {
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    let mut pairs = Vec::new();
    for (i, path) in series.patches.iter().enumerate() {
        let index = i + 1;
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let parsed = parse_patch(&text).map_err(|message| CorpusError::Patch { index, message })?;
        let before = files.clone();
        apply_patch(&mut files, &parsed)
            .map_err(|message| CorpusError::Patch { index, message })?;
        let touched: BTreeSet<&String> = before.keys().chain(files.keys()).collect();
        for path in touched {
            if !keep_path(path, opts) {
                continue;
            }
            let pair = match (before.get(path), files.get(path)) {
                (Some(b), Some(a)) if b != a => RevisionPair {
                    path: path.clone(),
                    before: b.clone(),
                    after: a.clone(),
                    revision: index as u32,
                },
                (None, Some(a)) if opts.pair_creations => RevisionPair {
                    path: path.clone(),
                    before: String::new(),
                    after: a.clone(),
                    revision: index as u32,
                },
                (Some(b), None) if opts.pair_creations => RevisionPair {
                    path: path.clone(),
                    before: b.clone(),
                    after: String::new(),
                    revision: index as u32,
                },
                _ => continue,
            };
            pairs.push(pair);
        }
    }
    Ok(pairs)
}

/// Apply the whole series and return the final file tree (useful for
/// checking a replay against a known end state).
pub fn apply_series(series: &PatchSeries) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut files = BTreeMap::new();
    for (i, path) in series.patches.iter().enumerate() {
        let index = i + 1;
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let parsed = parse_patch(&text).map_err(|message| CorpusError::Patch { index, message })?;
        apply_patch(&mut files, &parsed)
            .map_err(|message| CorpusError::Patch { index, message })?;
    }
    Ok(files)
}
