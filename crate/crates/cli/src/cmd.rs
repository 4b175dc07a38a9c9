//! One handler per subcommand. Handlers print human-readable results to
//! stdout and, when `--out` is given, persist machine-readable artifacts
//! plus a replayable manifest through [`RunWriter`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use maintmine::compound::{
    classify_commit, deserialize_model, serialize_model, train_compound_with, Component,
    Path as Branch,
};
use maintmine::corpus::{
    export_dataset_with, import_commits, replay_patches, split_holdout, Commit, DataFormat,
    LabeledDataset, MaintenanceClass, PatchSeries, ReplayOptions, RevisionPair,
};
use maintmine::distill::{distill_commit, Taxonomy};
use maintmine::learners::render_tree;
use maintmine::metrics::{
    evaluate as evaluate_matrix, repeated_cv, summarize_resamples, ConfusionMatrix, CvOptions,
};
use maintmine::textnorm::{derive_vocabulary, frequency_table, StopwordConfig, Vocabulary};
use maintmine::{CompoundModel, EvaluationReport};

use crate::args::{
    ClassArg, ClassifyArgs, ComponentArg, CvArgs, DistillArgs, EvaluateArgs, FreqArgs, ImportArgs,
    KindArg, RenderTreeArgs, SpecArgs, TrainArgs, VocabArgs,
};
use crate::util::{effective_taxonomy, json_bytes, load_labeled, resolve_format, RunWriter};

fn confusion_of(model: &CompoundModel, commits: &[Commit]) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(commits.iter().map(|c| {
        let (predicted, _, _) = classify_commit(model, c);
        (predicted, c.label.expect("datasets are fully labeled"))
    }))
}

/// The vocabulary a spec asks for: derived from the given (training) data,
/// or the built-in list.
fn vocabulary_for(spec: &SpecArgs, train: &LabeledDataset) -> Result<Vocabulary> {
    if spec.derive_vocab {
        Ok(derive_vocabulary(
            train,
            spec.per_class,
            StopwordConfig::builtin(),
        )?)
    } else {
        Ok(Vocabulary::builtin().clone())
    }
}

pub fn import(args: &ImportArgs) -> Result<()> {
    let taxonomy = effective_taxonomy()?;
    let ds = load_labeled(&args.data, &taxonomy)?;
    let vocabulary = Vocabulary::builtin();
    let stopwords = StopwordConfig::builtin();
    let with_kw = ds
        .commits()
        .iter()
        .filter(|c| vocabulary.has_keywords(&c.message, stopwords))
        .count();
    let changes: u64 = ds.commits().iter().map(|c| c.changes.total()).sum();
    println!("commits: {}", ds.len());
    for class in MaintenanceClass::ALL {
        println!("  {:<11} {}", class.name(), ds.count_of(class));
    }
    println!(
        "with keywords: {} ({:.1}%)",
        with_kw,
        100.0 * with_kw as f64 / ds.len() as f64
    );
    println!("change operations: {changes}");
    if let Some(out) = &args.out {
        let mut w = RunWriter::create(out)?;
        w.write_via("dataset.csv", |p| {
            export_dataset_with(&ds, p, DataFormat::Csv, &taxonomy)?;
            Ok(())
        })?;
        w.finish("import", args, &[&args.data.dataset])?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

pub fn distill(args: &DistillArgs) -> Result<()> {
    let series = PatchSeries::load(&args.series)
        .with_context(|| format!("loading patch series {}", args.series.display()))?;
    let options = ReplayOptions {
        extensions: args.extensions.clone(),
        pair_creations: args.pair_creations,
    };
    let pairs = replay_patches(&series, &options)?;
    let mut by_revision: BTreeMap<u32, Vec<RevisionPair>> = BTreeMap::new();
    for pair in pairs {
        by_revision.entry(pair.revision).or_default().push(pair);
    }
    let taxonomy = Taxonomy::builtin();
    let mut rows = String::new();
    for (revision, pairs) in &by_revision {
        let outcome = distill_commit(pairs);
        let skipped = if outcome.skipped.is_empty() {
            String::new()
        } else {
            format!(", {} skipped", outcome.skipped.len())
        };
        println!(
            "revision {revision}: {} change(s) across {} file(s){skipped}",
            outcome.vector.total(),
            pairs.len()
        );
        for (idx, count) in outcome.vector.nonzero() {
            println!("  {:<30} {count}", taxonomy.label(idx));
        }
        let row = serde_json::json!({
            "revision": revision,
            "files": pairs.len(),
            "changes": outcome.vector.to_map(taxonomy),
            "skipped": outcome.skipped,
        });
        rows.push_str(&serde_json::to_string(&row)?);
        rows.push('\n');
    }
    if let Some(out) = &args.out {
        let mut w = RunWriter::create(out)?;
        w.write("changes.jsonl", rows.as_bytes())?;
        w.finish("distill", args, &[&args.series])?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

pub fn vocab(args: &VocabArgs) -> Result<()> {
    let taxonomy = effective_taxonomy()?;
    let ds = load_labeled(&args.data, &taxonomy)?;
    let vocabulary = derive_vocabulary(&ds, args.per_class, StopwordConfig::builtin())?;
    let mut text = String::new();
    for word in vocabulary.words() {
        text.push_str(word);
        text.push('\n');
    }
    print!("{text}");
    if let Some(out) = &args.out {
        let mut w = RunWriter::create(out)?;
        w.write("vocabulary.txt", text.as_bytes())?;
        w.finish("vocab", args, &[&args.data.dataset])?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn write_importance(w: &mut RunWriter, model: &CompoundModel) -> Result<()> {
    for (branch, name) in [
        (Branch::Kw, "importance_kw.txt"),
        (Branch::NoKw, "importance_nokw.txt"),
    ] {
        let ranked = match model.component(branch) {
            Component::Forest(m) => m.feature_importance(),
            Component::Boost(m) => m.feature_importance(),
            _ => continue,
        };
        let mut text = String::new();
        for (feature, value) in ranked {
            writeln!(text, "{feature} {value}").unwrap();
        }
        w.write(name, text.as_bytes())?;
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let taxonomy = effective_taxonomy()?;
    let ds = load_labeled(&args.data, &taxonomy)?;
    let vocabulary = vocabulary_for(&args.model, &ds)?;
    let spec = args.model.compound_spec();
    let model = train_compound_with(
        &ds,
        &spec,
        &vocabulary,
        StopwordConfig::builtin(),
        &taxonomy,
        args.model.partition_train,
    )?;
    let report: EvaluationReport = evaluate_matrix(&confusion_of(&model, ds.commits()))?;
    println!("training report ({} commits)", ds.len());
    println!("{}", report.render());
    let mut w = RunWriter::create(&args.out)?;
    w.write("model.mmcm", &serialize_model(&model))?;
    w.write("report.txt", report.render().as_bytes())?;
    w.write("report.json", &json_bytes(&report)?)?;
    write_importance(&mut w, &model)?;
    w.finish("train", args, &[&args.data.dataset])?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<CompoundModel> {
    let bytes = fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    let model =
        deserialize_model(&bytes).with_context(|| format!("parsing model {}", path.display()))?;
    Ok(model)
}

pub fn classify(args: &ClassifyArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let format = resolve_format(&args.data.dataset, args.data.format)?;
    let commits = import_commits(&args.data.dataset, format, model.taxonomy())
        .with_context(|| format!("reading dataset {}", args.data.dataset.display()))?;
    if commits.is_empty() {
        bail!(
            "dataset {} contains no commits",
            args.data.dataset.display()
        );
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "id",
        "label",
        "predicted",
        "branch",
        "p_corrective",
        "p_perfective",
        "p_adaptive",
    ])?;
    let mut predicted_counts = [0usize; 3];
    for commit in &commits {
        let (predicted, scores, branch) = classify_commit(&model, commit);
        predicted_counts[predicted.index()] += 1;
        let p = scores.probabilities();
        writer.write_record([
            commit.id.as_str(),
            commit.label.map(|c| c.name()).unwrap_or(""),
            predicted.name(),
            &branch.to_string(),
            &p[0].to_string(),
            &p[1].to_string(),
            &p[2].to_string(),
        ])?;
    }
    let data = writer.into_inner().context("finishing CSV output")?;
    match &args.out {
        Some(out) => {
            let mut w = RunWriter::create(out)?;
            w.write("predictions.csv", &data)?;
            w.finish("classify", args, &[&args.model, &args.data.dataset])?;
            println!("classified {} commits", commits.len());
            for class in MaintenanceClass::ALL {
                println!("  {:<11} {}", class.name(), predicted_counts[class.index()]);
            }
            println!("wrote {}", out.display());
        }
        None => print!("{}", String::from_utf8(data).expect("CSV output is UTF-8")),
    }
    Ok(())
}

fn write_report(
    out: &Path,
    command: &'static str,
    args: &impl serde::Serialize,
    inputs: &[&Path],
    report: &EvaluationReport,
    model: Option<&CompoundModel>,
) -> Result<()> {
    let mut w = RunWriter::create(out)?;
    if let Some(model) = model {
        w.write("model.mmcm", &serialize_model(model))?;
    }
    w.write("report.txt", report.render().as_bytes())?;
    w.write("report.json", &json_bytes(report)?)?;
    w.finish(command, args, inputs)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    match &args.model {
        Some(model_path) => {
            let model = load_model(model_path)?;
            let format = resolve_format(&args.data.dataset, args.data.format)?;
            let ds = maintmine::corpus::import_dataset_with(
                &args.data.dataset,
                format,
                model.taxonomy(),
            )
            .with_context(|| format!("reading dataset {}", args.data.dataset.display()))?;
            let report: EvaluationReport = evaluate_matrix(&confusion_of(&model, ds.commits()))?;
            println!("evaluation report ({} commits)", ds.len());
            println!("{}", report.render());
            if let Some(out) = &args.out {
                write_report(
                    out,
                    "evaluate",
                    args,
                    &[model_path.as_path(), &args.data.dataset],
                    &report,
                    None,
                )?;
            }
        }
        None => {
            let taxonomy = effective_taxonomy()?;
            let ds = load_labeled(&args.data, &taxonomy)?;
            let (train_ds, test_ds) = split_holdout(&ds, args.test_fraction, args.spec.seed)?;
            let vocabulary = vocabulary_for(&args.spec, &train_ds)?;
            let spec = args.spec.compound_spec();
            let model = train_compound_with(
                &train_ds,
                &spec,
                &vocabulary,
                StopwordConfig::builtin(),
                &taxonomy,
                args.spec.partition_train,
            )?;
            let report: EvaluationReport =
                evaluate_matrix(&confusion_of(&model, test_ds.commits()))?;
            println!(
                "test report ({} train / {} test commits)",
                train_ds.len(),
                test_ds.len()
            );
            println!("{}", report.render());
            if let Some(out) = &args.out {
                write_report(
                    out,
                    "evaluate",
                    args,
                    &[args.data.dataset.as_path()],
                    &report,
                    Some(&model),
                )?;
            }
        }
    }
    Ok(())
}

pub fn cv(args: &CvArgs) -> Result<()> {
    let taxonomy = effective_taxonomy()?;
    let ds = load_labeled(&args.data, &taxonomy)?;
    let vocabulary = vocabulary_for(&args.spec, &ds)?;
    let spec = args.spec.compound_spec();
    let options = CvOptions {
        repeats: args.repeats,
        folds: args.folds,
        seed: args.spec.seed,
        partition: args.spec.partition_train,
    };
    let resamples = repeated_cv(
        &ds,
        &spec,
        &vocabulary,
        StopwordConfig::builtin(),
        &taxonomy,
        &options,
    )?;
    let summary = summarize_resamples(&resamples)?;
    print!("{}", summary.render());
    if let Some(out) = &args.out {
        let mut w = RunWriter::create(out)?;
        w.write("resamples.json", &json_bytes(&resamples)?)?;
        w.write("summary.json", &json_bytes(&summary)?)?;
        w.write("summary.txt", summary.render().as_bytes())?;
        w.finish("cv", args, &[&args.data.dataset])?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

pub fn cmd_render_tree(args: &RenderTreeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let branch = match args.component {
        ComponentArg::Kw => Branch::Kw,
        ComponentArg::Nokw => Branch::NoKw,
    };
    let text = match model.component(branch) {
        Component::Tree(tree) => render_tree(tree),
        Component::Forest(_) => bail!(
            "the {branch} component is a forest; only a single decision tree renders as text (train with --alg tree)"
        ),
        Component::Boost(_) => bail!(
            "the {branch} component is a boosted ensemble; only a single decision tree renders as text (train with --alg tree)"
        ),
        Component::Naive(_) => bail!(
            "the {branch} component is the rule-based baseline; only a single decision tree renders as text (train with --alg tree)"
        ),
    };
    print!("{text}");
    if let Some(out) = &args.out {
        let mut w = RunWriter::create(out)?;
        w.write("tree.txt", text.as_bytes())?;
        w.finish("render-tree", args, &[&args.model])?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

struct FreqRow {
    class: MaintenanceClass,
    term: String,
    commits: u64,
    occurrences: u64,
}

fn freq_rows(ds: &LabeledDataset, kind: KindArg, class: MaintenanceClass) -> Vec<FreqRow> {
    match kind {
        KindArg::Words => frequency_table(ds, class, StopwordConfig::builtin())
            .into_iter()
            .map(|e| FreqRow {
                class,
                term: e.stem,
                commits: e.messages,
                occurrences: e.occurrences,
            })
            .collect(),
        KindArg::Changes => {
            let taxonomy = Taxonomy::builtin();
            let mut commits = vec![0u64; taxonomy.len()];
            let mut occurrences = vec![0u64; taxonomy.len()];
            for commit in ds.commits() {
                if commit.label != Some(class) {
                    continue;
                }
                for (idx, count) in commit.changes.nonzero() {
                    commits[idx] += 1;
                    occurrences[idx] += u64::from(count);
                }
            }
            let mut rows: Vec<FreqRow> = (0..taxonomy.len())
                .filter(|&idx| commits[idx] > 0)
                .map(|idx| FreqRow {
                    class,
                    term: taxonomy.label(idx).to_string(),
                    commits: commits[idx],
                    occurrences: occurrences[idx],
                })
                .collect();
            rows.sort_by(|a, b| b.commits.cmp(&a.commits).then_with(|| a.term.cmp(&b.term)));
            rows
        }
    }
}

pub fn freq(args: &FreqArgs) -> Result<()> {
    let taxonomy = effective_taxonomy()?;
    let ds = load_labeled(&args.data, &taxonomy)?;
    let classes: Vec<MaintenanceClass> = match args.class {
        ClassArg::Corrective => vec![MaintenanceClass::Corrective],
        ClassArg::Perfective => vec![MaintenanceClass::Perfective],
        ClassArg::Adaptive => vec![MaintenanceClass::Adaptive],
        ClassArg::All => MaintenanceClass::ALL.to_vec(),
    };
    let kind_name = match args.kind {
        KindArg::Words => "words",
        KindArg::Changes => "changes",
    };
    let mut all_rows: Vec<FreqRow> = Vec::new();
    for &class in &classes {
        let rows = freq_rows(&ds, args.kind, class);
        println!("# {} ({kind_name})", class.name());
        println!("{:<30} {:>8} {:>12}", "term", "commits", "occurrences");
        for row in rows.iter().take(args.top) {
            println!(
                "{:<30} {:>8} {:>12}",
                row.term, row.commits, row.occurrences
            );
        }
        println!();
        all_rows.extend(rows);
    }
    if let Some(out) = &args.out {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["class", "term", "commits", "occurrences"])?;
        for row in &all_rows {
            writer.write_record([
                row.class.name(),
                row.term.as_str(),
                &row.commits.to_string(),
                &row.occurrences.to_string(),
            ])?;
        }
        let data = writer.into_inner().context("finishing CSV output")?;
        let mut w = RunWriter::create(out)?;
        w.write("freq.csv", &data)?;
        w.finish("freq", args, &[&args.data.dataset])?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
