//! Minimal unified-diff parsing and application, sufficient to replay a
//! numbered patch series onto an in-memory file tree.

use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Context,
    Add,
    Del,
}

#[derive(Clone, Debug)]
struct HunkLine {
    tag: Tag,
    text: String,
    /// Set when a `\ No newline at end of file` marker follows this line.
    no_newline: bool,
}

#[derive(Clone, Debug)]
struct Hunk {
    old_start: u64,
    old_count: u64,
    lines: Vec<HunkLine>,
}

/// One file's worth of a patch. `None` paths stand for `/dev/null`
/// (creation when old, deletion when new).
#[derive(Clone, Debug)]
pub(crate) struct FilePatch {
    pub(crate) old_path: Option<String>,
    pub(crate) new_path: Option<String>,
    hunks: Vec<Hunk>,
}

fn parse_path(field: &str) -> Option<String> {
    // Strip an optional timestamp (tab-separated) and the a/ b/ prefixes.
    let field = field.split('\t').next().unwrap_or(field).trim();
    if field == "/dev/null" {
        return None;
    }
    let stripped = field
        .strip_prefix("a/")
        .or_else(|| field.strip_prefix("b/"))
        .unwrap_or(field);
    Some(stripped.to_string())
}

fn parse_hunk_header(line: &str) -> Result<(u64, u64, u64, u64), String> {
    // @@ -old_start[,old_count] +new_start[,new_count] @@ [section]
    let err = || format!("malformed hunk header `{line}`");
    let rest = line.strip_prefix("@@ ").ok_or_else(err)?;
    let end = rest.find(" @@").ok_or_else(err)?;
    let mut parts = rest[..end].split(' ');
    let old = parts.next().ok_or_else(err)?;
    let new = parts.next().ok_or_else(err)?;
    if parts.next().is_some() {
        return Err(err());
    }
    let parse_range = |spec: &str, sign: char| -> Result<(u64, u64), String> {
        let spec = spec.strip_prefix(sign).ok_or_else(err)?;
        match spec.split_once(',') {
            Some((start, count)) => Ok((
                start.parse().map_err(|_| err())?,
                count.parse().map_err(|_| err())?,
            )),
            None => Ok((spec.parse().map_err(|_| err())?, 1)),
        }
    };
    let (old_start, old_count) = parse_range(old, '-')?;
    let (new_start, new_count) = parse_range(new, '+')?;
    Ok((old_start, old_count, new_start, new_count))
}

/// Parse a unified diff possibly covering several files. Unrecognized
/// preamble lines (`diff --git`, `index`, mode changes, …) are skipped;
/// binary patches are rejected.
pub(crate) fn parse_patch(text: &str) -> Result<Vec<FilePatch>, String> {
    let mut patches: Vec<FilePatch> = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        let lineno = idx + 1;
        if line.starts_with("Binary files ") || line.starts_with("GIT binary patch") {
            return Err(format!("line {lineno}: binary patches are not supported"));
        }
        if let Some(old_field) = line.strip_prefix("--- ") {
            let (_, new_line) = lines
                .next()
                .ok_or_else(|| format!("line {lineno}: `---` without `+++`"))?;
            let new_field = new_line
                .strip_prefix("+++ ")
                .ok_or_else(|| format!("line {}: expected `+++` after `---`", lineno + 1))?;
            let old_path = parse_path(old_field);
            let new_path = parse_path(new_field);
            if old_path.is_none() && new_path.is_none() {
                return Err(format!("line {lineno}: both sides are /dev/null"));
            }
            patches.push(FilePatch {
                old_path,
                new_path,
                hunks: Vec::new(),
            });
            continue;
        }
        if line.starts_with("@@ ") {
            let current = patches
                .last_mut()
                .ok_or_else(|| format!("line {lineno}: hunk before any file header"))?;
            let (old_start, old_count, _new_start, new_count) =
                parse_hunk_header(line).map_err(|e| format!("line {lineno}: {e}"))?;
            let mut hunk = Hunk {
                old_start,
                old_count,
                lines: Vec::new(),
            };
            let (mut old_seen, mut new_seen) = (0u64, 0u64);
            while old_seen < old_count || new_seen < new_count {
                let (bidx, body) = lines
                    .next()
                    .ok_or_else(|| format!("line {lineno}: truncated hunk"))?;
                let (tag, text) = if let Some(rest) = body.strip_prefix('+') {
                    (Tag::Add, rest)
                } else if let Some(rest) = body.strip_prefix('-') {
                    (Tag::Del, rest)
                } else if let Some(rest) = body.strip_prefix(' ') {
                    (Tag::Context, rest)
                } else if body.is_empty() {
                    // Some tools emit context blank lines with the space
                    // trimmed away.
                    (Tag::Context, "")
                } else {
                    return Err(format!("line {}: unexpected hunk line `{body}`", bidx + 1));
                };
                match tag {
                    Tag::Context => {
                        old_seen += 1;
                        new_seen += 1;
                    }
                    Tag::Add => new_seen += 1,
                    Tag::Del => old_seen += 1,
                }
                hunk.lines.push(HunkLine {
                    tag,
                    text: text.to_string(),
                    no_newline: false,
                });
                if let Some((_, peeked)) = lines.peek() {
                    if peeked.starts_with('\\') {
                        lines.next();
                        hunk.lines.last_mut().expect("just pushed").no_newline = true;
                    }
                }
            }
            if old_seen != old_count || new_seen != new_count {
                return Err(format!("line {lineno}: hunk body does not match header"));
            }
            current.hunks.push(hunk);
            continue;
        }
        // Anything else (diff --git, index, mode lines, commit metadata) is
        // preamble; ignore it.
    }
    if patches.is_empty() {
        return Err("no file patches found".to_string());
    }
    Ok(patches)
}

/// Split into lines (without terminators) plus a flag for a trailing
/// newline on the final line.
fn split_lines(text: &str) -> (Vec<String>, bool) {
    if text.is_empty() {
        return (Vec::new(), true);
    }
    let final_newline = text.ends_with('\n');
    let lines = text.lines().map(str::to_string).collect();
    (lines, final_newline)
}

fn join_lines(lines: &[String], final_newline: bool) -> String {
    if lines.is_empty() {
        return String::new();
    }
    let mut out = lines.join("\n");
    if final_newline {
        out.push('\n');
    }
    out
}

/// Apply one file's hunks to its old content. Returns `None` when the
/// patch deletes the file. Context and deletion lines must match the old
/// content exactly; a mismatch reports the hunk and line involved.
fn apply_file_patch(fp: &FilePatch, old_text: &str) -> Result<Option<String>, String> {
    let (old_lines, old_final_newline) = split_lines(old_text);
    let mut new_lines: Vec<String> = Vec::new();
    let mut old_pos = 0usize; // next unconsumed old line (0-based)
                              // Newline state of the last line pushed to `new_lines`, when that line
                              // came from a hunk; `None` while the tail may still decide it.
    let mut last_pushed_no_newline = false;
    let mut tail_is_hunk = false;

    for (hi, hunk) in fp.hunks.iter().enumerate() {
        // old_start is 1-based; an old_count of 0 denotes a pure insertion
        // *after* line old_start.
        let target = if hunk.old_count == 0 {
            hunk.old_start as usize
        } else {
            (hunk.old_start as usize).saturating_sub(1)
        };
        if target < old_pos || target > old_lines.len() {
            return Err(format!(
                "hunk {} targets old line {} outside the remaining file",
                hi + 1,
                hunk.old_start
            ));
        }
        new_lines.extend_from_slice(&old_lines[old_pos..target]);
        old_pos = target;
        for hl in &hunk.lines {
            match hl.tag {
                Tag::Context | Tag::Del => {
                    let found = old_lines.get(old_pos).map(String::as_str);
                    if found != Some(hl.text.as_str()) {
                        return Err(format!(
                            "hunk {} (old line {}): expected `{}`, found `{}`",
                            hi + 1,
                            old_pos + 1,
                            hl.text,
                            found.unwrap_or("<end of file>"),
                        ));
                    }
                    old_pos += 1;
                    if hl.tag == Tag::Context {
                        new_lines.push(hl.text.clone());
                        last_pushed_no_newline = hl.no_newline;
                        tail_is_hunk = true;
                    }
                }
                Tag::Add => {
                    new_lines.push(hl.text.clone());
                    last_pushed_no_newline = hl.no_newline;
                    tail_is_hunk = true;
                }
            }
        }
    }
    let untouched_tail = old_pos < old_lines.len();
    new_lines.extend_from_slice(&old_lines[old_pos..]);
    let final_newline = if untouched_tail || !tail_is_hunk {
        old_final_newline
    } else {
        !last_pushed_no_newline
    };
    if fp.new_path.is_none() {
        if !new_lines.is_empty() {
            return Err("deletion patch leaves content behind".to_string());
        }
        return Ok(None);
    }
    Ok(Some(join_lines(&new_lines, final_newline)))
}

/// Apply a parsed multi-file patch to an in-memory file tree.
pub(crate) fn apply_patch(
    files: &mut BTreeMap<String, String>,
    patches: &[FilePatch],
) -> Result<(), String> {
    for fp in patches {
        let old_text = match &fp.old_path {
            Some(path) => Some(
                files
                    .get(path)
                    .ok_or_else(|| format!("patches nonexistent file `{path}`"))?,
            ),
            None => None,
        };
        if fp.old_path.is_none() {
            let new_path = fp.new_path.as_ref().expect("creation has a new path");
            if files.contains_key(new_path) {
                return Err(format!("creates already-existing file `{new_path}`"));
            }
        }
        let result = apply_file_patch(fp, old_text.map(String::as_str).unwrap_or("")).map_err(
            |e| match &fp.old_path {
                Some(p) => format!("{p}: {e}"),
                None => format!("{}: {e}", fp.new_path.as_deref().unwrap_or("?")),
            },
        )?;
        if let Some(old) = &fp.old_path {
            if fp.new_path.as_deref() != Some(old.as_str()) {
                files.remove(old);
            }
        }
        match (result, &fp.new_path) {
            (Some(content), Some(path)) => {
                files.insert(path.clone(), content);
            }
            (None, None) => {}
            (Some(_), None) => unreachable!("apply_file_patch returns None for deletions"),
            (None, Some(_)) => unreachable!("apply_file_patch returns Some for non-deletions"),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_file(text: &str) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("src/Main.java".to_string(), text.to_string());
        m
    }

    #[test]
    fn creation_modification_and_deletion() {
        let mut files = BTreeMap::new();
        let create = "--- /dev/null\n+++ b/src/Main.java\n@@ -0,0 +1,2 @@\n+class Main {\n+}\n";
        apply_patch(&mut files, &parse_patch(create).unwrap()).unwrap();
        assert_eq!(files["src/Main.java"], "class Main {\n}\n");

        let modify = "--- a/src/Main.java\n+++ b/src/Main.java\n@@ -1,2 +1,3 @@\n class Main {\n+    int x;\n }\n";
        apply_patch(&mut files, &parse_patch(modify).unwrap()).unwrap();
        assert_eq!(files["src/Main.java"], "class Main {\n    int x;\n}\n");

        let delete =
            "--- a/src/Main.java\n+++ /dev/null\n@@ -1,3 +0,0 @@\n-class Main {\n-    int x;\n-}\n";
        apply_patch(&mut files, &parse_patch(delete).unwrap()).unwrap();
        assert!(files.is_empty());
    }

    #[test]
    fn context_mismatch_is_an_error_with_hunk_detail() {
        let mut files = one_file("alpha\nbeta\n");
        let patch =
            "--- a/src/Main.java\n+++ b/src/Main.java\n@@ -1,2 +1,2 @@\n alpha\n-gamma\n+delta\n";
        let err = apply_patch(&mut files, &parse_patch(patch).unwrap()).unwrap_err();
        assert!(err.contains("hunk 1"), "{err}");
        assert!(err.contains("gamma"), "{err}");
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn multiple_hunks_and_files() {
        let mut files = one_file("a\nb\nc\nd\ne\nf\ng\nh\ni\nj\n");
        files.insert("src/Other.java".to_string(), "x\n".to_string());
        let patch = concat!(
            "diff --git a/src/Main.java b/src/Main.java\n",
            "index 000..111 100644\n",
            "--- a/src/Main.java\n",
            "+++ b/src/Main.java\n",
            "@@ -1,3 +1,3 @@\n a\n-b\n+B\n c\n",
            "@@ -8,3 +8,4 @@\n h\n i\n+I2\n j\n",
            "--- a/src/Other.java\n",
            "+++ b/src/Other.java\n",
            "@@ -1 +1 @@\n-x\n+y\n",
        );
        apply_patch(&mut files, &parse_patch(patch).unwrap()).unwrap();
        assert_eq!(files["src/Main.java"], "a\nB\nc\nd\ne\nf\ng\nh\ni\nI2\nj\n");
        assert_eq!(files["src/Other.java"], "y\n");
    }

    #[test]
    fn no_newline_markers_round_trip() {
        // Old file lacks a final newline; the patch appends one line that
        // also lacks it.
        let mut files = one_file("a\nb");
        let patch = "--- a/src/Main.java\n+++ b/src/Main.java\n@@ -1,2 +1,2 @@\n a\n-b\n\\ No newline at end of file\n+c\n\\ No newline at end of file\n";
        apply_patch(&mut files, &parse_patch(patch).unwrap()).unwrap();
        assert_eq!(files["src/Main.java"], "a\nc");

        // And the patch can restore the newline.
        let patch2 = "--- a/src/Main.java\n+++ b/src/Main.java\n@@ -2 +2 @@\n-c\n\\ No newline at end of file\n+c\n";
        apply_patch(&mut files, &parse_patch(patch2).unwrap()).unwrap();
        assert_eq!(files["src/Main.java"], "a\nc\n");
    }

    #[test]
    fn rename_moves_content() {
        let mut files = one_file("a\n");
        let patch = "--- a/src/Main.java\n+++ b/src/Renamed.java\n@@ -1 +1 @@\n-a\n+a2\n";
        apply_patch(&mut files, &parse_patch(patch).unwrap()).unwrap();
        assert!(!files.contains_key("src/Main.java"));
        assert_eq!(files["src/Renamed.java"], "a2\n");
    }

    #[test]
    fn malformed_patches_are_rejected() {
        assert!(parse_patch("").is_err());
        assert!(parse_patch("--- a/x\n").is_err());
        assert!(parse_patch("--- a/x\n+++ b/x\n@@ bogus @@\n").is_err());
        assert!(parse_patch("--- a/x\n+++ b/x\n@@ -1,2 +1,2 @@\n a\n").is_err());
        assert!(parse_patch("Binary files a/x and b/x differ\n").is_err());
        let mut files = BTreeMap::new();
        let missing = "--- a/ghost\n+++ b/ghost\n@@ -1 +1 @@\n-a\n+b\n";
        assert!(apply_patch(&mut files, &parse_patch(missing).unwrap())
            .unwrap_err()
            .contains("nonexistent"));
    }
}
