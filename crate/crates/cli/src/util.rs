//! Shared plumbing: format inference, taxonomy resolution, atomic output
//! and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use maintmine::corpus::{import_dataset_with, DataFormat, LabeledDataset};
use maintmine::distill::Taxonomy;

use crate::args::{DataArgs, FormatArg};

/// Environment variable naming a taxonomy file that overrides the built-in
/// change-type taxonomy.
pub const TAXONOMY_ENV: &str = "MAINTMINE_TAXONOMY";

/// The taxonomy in effect: the file named by `MAINTMINE_TAXONOMY` if set,
/// otherwise the built-in one.
pub fn effective_taxonomy() -> Result<Taxonomy> {
    match std::env::var_os(TAXONOMY_ENV) {
        Some(path) => {
            let path = PathBuf::from(path);
            Taxonomy::from_file(&path)
                .with_context(|| format!("loading taxonomy from {}", path.display()))
        }
        None => Ok(Taxonomy::builtin().clone()),
    }
}

/// Resolve the dataset encoding: an explicit flag wins, otherwise the file
/// extension decides.
pub fn resolve_format(path: &Path, flag: Option<FormatArg>) -> Result<DataFormat> {
    if let Some(f) = flag {
        return Ok(match f {
            FormatArg::Csv => DataFormat::Csv,
            FormatArg::Jsonl => DataFormat::Jsonl,
        });
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(DataFormat::Csv),
        Some("jsonl") | Some("ndjson") => Ok(DataFormat::Jsonl),
        _ => anyhow::bail!(
            "cannot infer the format of `{}`; pass --format csv|jsonl",
            path.display()
        ),
    }
}

/// Load a fully labeled dataset as named by the common dataset flags.
pub fn load_labeled(data: &DataArgs, taxonomy: &Taxonomy) -> Result<LabeledDataset> {
    let format = resolve_format(&data.dataset, data.format)?;
    let ds = import_dataset_with(&data.dataset, format, taxonomy)
        .with_context(|| format!("reading dataset {}", data.dataset.display()))?;
    Ok(ds)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Pretty-printed JSON with a trailing newline.
pub fn json_bytes(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Write a file atomically: the bytes land in a temporary file in the same
/// directory and are renamed into place, so readers never observe a partial
/// file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct FileStamp {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, O: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    options: &'a O,
    inputs: Vec<FileStamp>,
    outputs: Vec<FileStamp>,
}

/// Collects artifacts under one output directory, then finishes with a
/// `manifest.json` recording the command, its resolved options (seed
/// included) and content digests of all inputs and outputs — enough to
/// replay the run and check its results byte for byte. Contains nothing
/// time- or host-dependent, so identical runs produce identical manifests.
pub struct RunWriter {
    dir: PathBuf,
    outputs: Vec<FileStamp>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<RunWriter> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        atomic_write(&self.dir.join(name), bytes)?;
        self.outputs.push(FileStamp {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// For producers that write to a path themselves: they get a temporary
    /// path, and the finished file is hashed and renamed into place.
    pub fn write_via(
        &mut self,
        name: &str,
        produce: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<()> {
        let tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .with_context(|| format!("creating temporary file in {}", self.dir.display()))?;
        let tmp_path = tmp.into_temp_path();
        produce(&tmp_path)?;
        let bytes = fs::read(&tmp_path)?;
        let target = self.dir.join(name);
        tmp_path
            .persist(&target)
            .with_context(|| format!("writing {}", target.display()))?;
        self.outputs.push(FileStamp {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Write `manifest.json`. `inputs` may name files or directories; a
    /// directory contributes every regular file directly inside it, in name
    /// order.
    pub fn finish(
        mut self,
        command: &'static str,
        options: &impl Serialize,
        inputs: &[&Path],
    ) -> Result<()> {
        let mut stamps = Vec::new();
        for path in inputs {
            stamp_into(&mut stamps, path)?;
        }
        let manifest = Manifest {
            tool: "maintmine",
            version: env!("CARGO_PKG_VERSION"),
            command,
            options,
            inputs: stamps,
            outputs: std::mem::take(&mut self.outputs),
        };
        atomic_write(&self.dir.join("manifest.json"), &json_bytes(&manifest)?)
    }
}

fn stamp_into(stamps: &mut Vec<FileStamp>, path: &Path) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for entry in entries {
            stamp_into(stamps, &entry)?;
        }
        return Ok(());
    }
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    stamps.push(FileStamp {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    });
    Ok(())
}
