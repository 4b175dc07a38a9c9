//! Command-line argument definitions. Argument structs also serialize into
//! run manifests, so every field carries its resolved (defaulted) value.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use maintmine::compound::ModelType;
use maintmine::{Algorithm, BoostParams, CompoundSpec, ForestParams, TreeParams};

#[derive(Parser, Debug)]
#[command(
    name = "maintmine",
    version,
    about = "Classify version-control commits into maintenance activities",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a commit dataset and report its composition.
    Import(ImportArgs),
    /// Replay a patch series and distill per-revision change-type counts.
    Distill(DistillArgs),
    /// Derive a keyword vocabulary from a labeled dataset.
    Vocab(VocabArgs),
    /// Train a compound model and write it with a training report.
    Train(TrainArgs),
    /// Classify commits with a trained model.
    Classify(ClassifyArgs),
    /// Train on a holdout split and report test metrics, or evaluate an
    /// existing model.
    Evaluate(EvaluateArgs),
    /// Repeated stratified cross-validation of a model spec.
    Cv(CvArgs),
    /// Render a trained decision-tree component as text.
    RenderTree(RenderTreeArgs),
    /// Word or change-type frequency tables per maintenance activity.
    Freq(FreqArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgArg {
    Tree,
    Forest,
    Boost,
    Naive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassArg {
    Corrective,
    Perfective,
    Adaptive,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Words,
    Changes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentArg {
    Kw,
    Nokw,
}

/// The two feature views of a compound spec, written `<kw>+<nokw>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecArg {
    pub kw: ModelType,
    pub nokw: ModelType,
}

impl fmt::Display for SpecArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.kw, self.nokw)
    }
}

impl Serialize for SpecArg {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

pub fn parse_spec(s: &str) -> Result<SpecArg, String> {
    let (kw, nokw) = s
        .split_once('+')
        .ok_or_else(|| "expected `<kw>+<nokw>`, e.g. keywords+combined".to_string())?;
    Ok(SpecArg {
        kw: kw
            .parse()
            .map_err(|e: maintmine::compound::CompoundError| e.to_string())?,
        nokw: nokw
            .parse()
            .map_err(|e: maintmine::compound::CompoundError| e.to_string())?,
    })
}

/// Dataset input location and encoding.
#[derive(Args, Debug, Serialize)]
pub struct DataArgs {
    /// Input dataset file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Dataset encoding; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

/// Model configuration shared by train, evaluate and cv.
#[derive(Args, Debug, Serialize)]
pub struct SpecArgs {
    /// Feature views for the keyword and keyword-free dispatch branches,
    /// `<kw>+<nokw>` over keywords|changes|combined.
    #[arg(long, value_parser = parse_spec, default_value = "keywords+combined")]
    pub spec: SpecArg,
    /// Learning algorithm for both components.
    #[arg(long, value_enum, default_value_t = AlgArg::Forest)]
    pub alg: AlgArg,
    /// Master seed; every internal random stream derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train each component only on its own dispatch branch instead of
    /// the full training set.
    #[arg(long)]
    pub partition_train: bool,
    /// Derive the keyword vocabulary from the training data instead of
    /// using the built-in list.
    #[arg(long)]
    pub derive_vocab: bool,
    /// Words per class when deriving a vocabulary.
    #[arg(long, default_value_t = 10)]
    pub per_class: usize,
    /// Trees in a forest.
    #[arg(long, default_value_t = 500)]
    pub trees: usize,
    /// Features sampled per forest split (default: square root of the
    /// feature count).
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Grow forest trees on the training set itself instead of bootstrap
    /// resamples.
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Minimum rows on each side of a decision-tree split.
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    /// Decision-tree pruning confidence; smaller prunes harder.
    #[arg(long, default_value_t = 0.25)]
    pub cf: f64,
    /// Boosting stages.
    #[arg(long, default_value_t = 150)]
    pub stages: usize,
    /// Depth of each boosted regression tree.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Boosting learning rate.
    #[arg(long, default_value_t = 0.1)]
    pub shrinkage: f64,
}

impl SpecArgs {
    pub fn compound_spec(&self) -> CompoundSpec {
        let algorithm = match self.alg {
            AlgArg::Tree => Algorithm::Tree(TreeParams {
                min_leaf: self.min_leaf,
                cf: self.cf,
            }),
            AlgArg::Forest => Algorithm::Forest(ForestParams {
                trees: self.trees,
                mtry: self.mtry,
                seed: 0,
                bootstrap: !self.no_bootstrap,
            }),
            AlgArg::Boost => Algorithm::Boost(BoostParams {
                stages: self.stages,
                depth: self.depth,
                shrinkage: self.shrinkage,
                seed: 0,
            }),
            AlgArg::Naive => Algorithm::Naive,
        };
        CompoundSpec {
            model_kw: self.spec.kw,
            model_nokw: self.spec.nokw,
            algorithm,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct ImportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Re-export the validated dataset in canonical form, with a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DistillArgs {
    /// Directory of numbered unified-diff patch files.
    #[arg(long)]
    pub series: PathBuf,
    /// Comma-separated path suffixes to keep.
    #[arg(long, value_delimiter = ',', default_value = ".java")]
    pub extensions: Vec<String>,
    /// Also distill file creations and deletions, against empty content.
    #[arg(long)]
    pub pair_creations: bool,
    /// Output directory for per-revision change counts and a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct VocabArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Words per class.
    #[arg(long, default_value_t = 10)]
    pub per_class: usize,
    /// Output directory for the word list and a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: SpecArgs,
    /// Output directory for the model, reports and manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ClassifyArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Output directory for predictions and a manifest; prints CSV to
    /// stdout when omitted.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Evaluate this existing model on the whole dataset instead of
    /// training one here (the spec flags are then ignored).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: SpecArgs,
    /// Fraction of each class held out for testing.
    #[arg(long, default_value_t = 0.15)]
    pub test_fraction: f64,
    /// Output directory for the model, reports and manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: SpecArgs,
    /// Cross-validation repetitions.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Folds per repetition.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Output directory for resamples, summaries and manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct RenderTreeArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Which dispatch component to render.
    #[arg(long, value_enum, default_value_t = ComponentArg::Kw)]
    pub component: ComponentArg,
    /// Output directory for the rendering and a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct FreqArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// words: stem frequencies; changes: change-type frequencies.
    #[arg(long, value_enum, default_value_t = KindArg::Words)]
    pub kind: KindArg,
    /// Restrict to one class.
    #[arg(long, value_enum, default_value_t = ClassArg::All)]
    pub class: ClassArg,
    /// Rows printed per class; the full table is always written with --out.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Output directory for the full table and a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}
