//! End-to-end tests of the `maintmine` binary: exit codes, stdout shapes,
//! artifact layout and run-to-run determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maintmine::corpus::synthetic::{synthetic_corpus, SYNTHETIC_SEED};
use maintmine::corpus::{export_dataset_with, DataFormat};
use maintmine::distill::Taxonomy;

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maintmine"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 150 commits spanning all six synthetic blocks, exported as CSV.
fn small_dataset(dir: &Path) -> PathBuf {
    let indices: Vec<usize> = (0..1200).step_by(8).collect();
    let ds = synthetic_corpus(SYNTHETIC_SEED).select(&indices);
    let path = dir.join("commits.csv");
    export_dataset_with(&ds, &path, DataFormat::Csv, Taxonomy::builtin()).unwrap();
    path
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let text = format!("{}{}", stdout(&out), stderr(&out));
    assert!(text.contains("Usage:"), "usage text missing: {text}");
}

#[test]
fn help_and_version_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    for flags in [
        &["--help"][..],
        &["--version"][..],
        &["train", "--help"][..],
    ] {
        let out = run_in(dir.path(), flags);
        assert_eq!(out.status.code(), Some(0), "{flags:?}");
    }
}

#[test]
fn bad_usage_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    for flags in [
        &["import"][..],                                         // missing --dataset
        &["import", "--dataset", "x.csv", "--bogus"][..],        // unknown flag
        &["evaluate", "--dataset", "x.csv", "--alg", "svm"][..], // bad enum
        &[
            "train",
            "--dataset",
            "x.csv",
            "--out",
            "o",
            "--spec",
            "keywords",
        ][..], // bad spec
        &["nonsense"][..],                                       // unknown subcommand
    ] {
        let out = run_in(dir.path(), flags);
        assert_eq!(out.status.code(), Some(1), "{flags:?}: {}", stderr(&out));
    }
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run_in(dir.path(), &["import", "--dataset", "no-such-file.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(
        stderr(&missing).starts_with("error:"),
        "{}",
        stderr(&missing)
    );

    fs::write(
        dir.path().join("garbage.csv"),
        "not,a,valid\nheader,at,all\n",
    )
    .unwrap();
    let garbage = run_in(dir.path(), &["import", "--dataset", "garbage.csv"]);
    assert_eq!(garbage.status.code(), Some(2));

    let unknown_ext = run_in(dir.path(), &["import", "--dataset", "no-such-file.dat"]);
    assert_eq!(unknown_ext.status.code(), Some(2));
    assert!(stderr(&unknown_ext).contains("--format"));
}

#[test]
fn import_reports_composition_and_exports_canonically() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let out = run_in(
        dir.path(),
        &["import", "--dataset", "commits.csv", "--out", "run"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("commits: 150"), "{text}");
    assert!(text.contains("corrective"), "{text}");
    assert!(text.contains("with keywords:"), "{text}");
    let exported = dir.path().join("run/dataset.csv");
    assert!(exported.is_file());
    assert!(dir.path().join("run/manifest.json").is_file());
    // Canonical re-export round-trips byte-identically.
    assert_eq!(
        fs::read(dir.path().join("commits.csv")).unwrap(),
        fs::read(&exported).unwrap()
    );
}

#[test]
fn train_is_deterministic_across_runs_and_directories() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let flags = [
        "train",
        "--dataset",
        "commits.csv",
        "--alg",
        "forest",
        "--trees",
        "15",
        "--seed",
        "7",
    ];
    for out_dir in ["a", "b"] {
        let mut args = flags.to_vec();
        args.extend(["--out", out_dir]);
        let out = run_in(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    for name in [
        "model.mmcm",
        "report.txt",
        "report.json",
        "importance_kw.txt",
        "importance_nokw.txt",
        "manifest.json",
    ] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let manifest = fs::read_to_string(dir.path().join("a/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 7"), "{manifest}");
    assert!(manifest.contains("\"sha256\""), "{manifest}");
}

#[test]
fn classify_emits_one_csv_row_per_commit() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let train = run_in(
        dir.path(),
        &[
            "train",
            "--dataset",
            "commits.csv",
            "--alg",
            "tree",
            "--out",
            "model",
        ],
    );
    assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));
    let out = run_in(
        dir.path(),
        &[
            "classify",
            "--model",
            "model/model.mmcm",
            "--dataset",
            "commits.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 151, "header + one row per commit");
    assert_eq!(
        lines[0],
        "id,label,predicted,branch,p_corrective,p_perfective,p_adaptive"
    );
    assert!(lines[1..]
        .iter()
        .all(|l| l.contains(",kw,") || l.contains(",nokw,")));

    let saved = run_in(
        dir.path(),
        &[
            "classify",
            "--model",
            "model/model.mmcm",
            "--dataset",
            "commits.csv",
            "--out",
            "preds",
        ],
    );
    assert_eq!(saved.status.code(), Some(0), "{}", stderr(&saved));
    let file = fs::read_to_string(dir.path().join("preds/predictions.csv")).unwrap();
    assert_eq!(file, text);
}

#[test]
fn evaluate_holdout_and_model_modes_agree_on_format() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let holdout = run_in(
        dir.path(),
        &[
            "evaluate",
            "--dataset",
            "commits.csv",
            "--alg",
            "naive",
            "--test-fraction",
            "0.2",
            "--seed",
            "3",
            "--out",
            "eval",
        ],
    );
    assert_eq!(holdout.status.code(), Some(0), "{}", stderr(&holdout));
    let text = stdout(&holdout);
    assert!(
        text.contains("test report (120 train / 30 test commits)"),
        "{text}"
    );
    assert!(text.contains("accuracy"), "{text}");
    assert!(text.contains("kappa"), "{text}");
    assert!(text.contains("no-information rate"), "{text}");
    let report = fs::read_to_string(dir.path().join("eval/report.txt")).unwrap();
    assert!(text.contains(&report), "stdout embeds report.txt verbatim");

    let model_mode = run_in(
        dir.path(),
        &[
            "evaluate",
            "--dataset",
            "commits.csv",
            "--model",
            "eval/model.mmcm",
        ],
    );
    assert_eq!(model_mode.status.code(), Some(0), "{}", stderr(&model_mode));
    assert!(stdout(&model_mode).contains("evaluation report (150 commits)"));
}

#[test]
fn render_tree_prints_splits_for_tree_models_only() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let train = run_in(
        dir.path(),
        &[
            "train",
            "--dataset",
            "commits.csv",
            "--alg",
            "tree",
            "--out",
            "model",
        ],
    );
    assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));
    let out = run_in(
        dir.path(),
        &[
            "render-tree",
            "--model",
            "model/model.mmcm",
            "--component",
            "nokw",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains(" <= "), "{}", stdout(&out));

    let forest = run_in(
        dir.path(),
        &[
            "train",
            "--dataset",
            "commits.csv",
            "--alg",
            "forest",
            "--trees",
            "5",
            "--out",
            "forest",
        ],
    );
    assert_eq!(forest.status.code(), Some(0), "{}", stderr(&forest));
    let refused = run_in(dir.path(), &["render-tree", "--model", "forest/model.mmcm"]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(
        stderr(&refused).contains("--alg tree"),
        "{}",
        stderr(&refused)
    );
}

#[test]
fn vocab_and_freq_summarize_the_corpus_text() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let vocab = run_in(
        dir.path(),
        &[
            "vocab",
            "--dataset",
            "commits.csv",
            "--per-class",
            "5",
            "--out",
            "v",
        ],
    );
    assert_eq!(vocab.status.code(), Some(0), "{}", stderr(&vocab));
    let words = stdout(&vocab);
    let listed: Vec<&str> = words
        .lines()
        .take_while(|l| !l.starts_with("wrote"))
        .collect();
    assert!(listed.len() >= 5, "{words}");
    assert!(
        listed
            .iter()
            .all(|w| w.chars().all(|c| c.is_ascii_lowercase())),
        "{words}"
    );
    let saved = fs::read_to_string(dir.path().join("v/vocabulary.txt")).unwrap();
    assert_eq!(saved.lines().collect::<Vec<_>>(), listed);

    let freq = run_in(
        dir.path(),
        &[
            "freq",
            "--dataset",
            "commits.csv",
            "--top",
            "3",
            "--out",
            "f",
        ],
    );
    assert_eq!(freq.status.code(), Some(0), "{}", stderr(&freq));
    let table = stdout(&freq);
    for class in ["corrective", "perfective", "adaptive"] {
        assert!(table.contains(&format!("# {class} (words)")), "{table}");
    }

    let changes = run_in(
        dir.path(),
        &[
            "freq",
            "--dataset",
            "commits.csv",
            "--kind",
            "changes",
            "--class",
            "corrective",
            "--top",
            "3",
        ],
    );
    assert_eq!(changes.status.code(), Some(0), "{}", stderr(&changes));
    assert!(
        stdout(&changes).contains("statement"),
        "{}",
        stdout(&changes)
    );
}

#[test]
fn cv_reports_the_resample_summary() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let out = run_in(
        dir.path(),
        &[
            "cv",
            "--dataset",
            "commits.csv",
            "--alg",
            "naive",
            "--repeats",
            "2",
            "--folds",
            "5",
            "--out",
            "cv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("resamples: 10"), "{text}");
    assert!(text.contains("accuracy"), "{text}");
    let resamples: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cv/resamples.json")).unwrap())
            .unwrap();
    assert_eq!(resamples.as_array().unwrap().len(), 10);
}

#[test]
fn taxonomy_env_var_overrides_the_builtin_taxonomy() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());

    // Same 48 labels with one renamed: the override flows through to the
    // canonical export's header.
    let mut labels: Vec<String> = Taxonomy::builtin().labels().to_vec();
    labels[0] = format!("renamed_{}", labels[0]);
    fs::write(dir.path().join("taxonomy.txt"), labels.join("\n") + "\n").unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_maintmine"))
        .current_dir(dir.path())
        .env("MAINTMINE_TAXONOMY", "taxonomy.txt")
        .args(["import", "--dataset", "commits.csv", "--out", "run"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let header = fs::read_to_string(dir.path().join("run/dataset.csv")).unwrap();
    assert!(
        header.lines().next().unwrap().contains("renamed_"),
        "{header}"
    );

    // A taxonomy file of the wrong shape is a data error.
    fs::write(dir.path().join("short.txt"), "only\nthree\nlabels\n").unwrap();
    let short = Command::new(env!("CARGO_BIN_EXE_maintmine"))
        .current_dir(dir.path())
        .env("MAINTMINE_TAXONOMY", "short.txt")
        .args(["import", "--dataset", "commits.csv"])
        .output()
        .expect("binary runs");
    assert_eq!(short.status.code(), Some(2), "{}", stderr(&short));
    assert!(stderr(&short).contains("taxonomy"), "{}", stderr(&short));

    let missing = Command::new(env!("CARGO_BIN_EXE_maintmine"))
        .current_dir(dir.path())
        .env("MAINTMINE_TAXONOMY", "no-such-taxonomy.txt")
        .args(["import", "--dataset", "commits.csv"])
        .output()
        .expect("binary runs");
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn jsonl_datasets_are_accepted_with_format_inference() {
    let dir = tempfile::tempdir().unwrap();
    let indices: Vec<usize> = (0..1200).step_by(20).collect();
    let ds = synthetic_corpus(SYNTHETIC_SEED).select(&indices);
    export_dataset_with(
        &ds,
        &dir.path().join("commits.jsonl"),
        DataFormat::Jsonl,
        Taxonomy::builtin(),
    )
    .unwrap();
    let out = run_in(dir.path(), &["import", "--dataset", "commits.jsonl"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("commits: 60"));
}

#[cfg(unix)]
#[test]
fn closing_the_output_pipe_early_does_not_panic() {
    use std::io::Read;
    use std::process::Stdio;

    let dir = tempfile::tempdir().unwrap();
    // Enough rows that the predictions overflow a 64 KiB pipe buffer, so the
    // child is still writing when the reader disappears.
    let ds = synthetic_corpus(SYNTHETIC_SEED);
    export_dataset_with(
        &ds,
        &dir.path().join("commits.csv"),
        DataFormat::Csv,
        Taxonomy::builtin(),
    )
    .unwrap();
    let trained = run_in(
        dir.path(),
        &[
            "train",
            "--dataset",
            "commits.csv",
            "--alg",
            "naive",
            "--out",
            "m",
        ],
    );
    assert_eq!(trained.status.code(), Some(0), "{}", stderr(&trained));

    let mut child = Command::new(env!("CARGO_BIN_EXE_maintmine"))
        .current_dir(dir.path())
        .args([
            "classify",
            "--model",
            "m/model.mmcm",
            "--dataset",
            "commits.csv",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary spawns");
    // Close the read end straight away: the conventional outcome is a quiet
    // SIGPIPE death (or a clean exit if the child already finished), never a
    // panic backtrace.
    drop(child.stdout.take());
    let status = child.wait().unwrap();
    let mut err = String::new();
    child
        .stderr
        .take()
        .unwrap()
        .read_to_string(&mut err)
        .unwrap();
    assert!(!err.contains("panicked"), "stderr:\n{err}");
    assert!(
        status.code().is_none() || status.code() == Some(0),
        "expected SIGPIPE death or success, got {status:?}; stderr:\n{err}"
    );
}
