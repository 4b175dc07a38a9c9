//! The compound classifier: each commit is dispatched on whether its
//! message contains vocabulary keywords, and routed to one of two component
//! models — each a keyword, change-count, or combined feature view over a
//! shared learner. A rule-based baseline is available as a fourth
//! pseudo-algorithm.

mod io;

pub use io::{deserialize_model, serialize_model};

use thiserror::Error;

use crate::corpus::{Commit, LabeledDataset, MaintenanceClass};
use crate::distill::{Taxonomy, TAXONOMY_WIDTH};
use crate::learners::rng::splitmix64;
use crate::learners::{
    train_boost, train_forest, train_tree, BoostModel, BoostParams, ClassScores, ForestModel,
    ForestParams, LearnError, TrainingMatrix, TreeModel, TreeParams,
};
use crate::textnorm::{StopwordConfig, Vocabulary};
use crate::Real;

#[derive(Debug, Error)]
pub enum CompoundError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("no commits on the {path} path; partitioned training needs both")]
    EmptyPartition { path: Path },
    #[error("unknown model type `{0}` (expected keywords, changes or combined)")]
    UnknownModelType(String),
    #[error("unknown algorithm `{0}` (expected tree, forest, boost or naive)")]
    UnknownAlgorithm(String),
    #[error("model file is not in MMCM format")]
    Magic,
    #[error(
        "model format version {found} is not supported (this build reads version {supported})"
    )]
    Version { found: String, supported: u32 },
    #[error("model file checksum missing or mismatched — file is corrupt or truncated")]
    Checksum,
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// The feature view a component model sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelType {
    /// Binary keyword indicators from the commit message.
    Keywords,
    /// Counts over the 48 change types.
    Changes,
    /// Keyword block first, then the 48 change counts.
    Combined,
}

impl ModelType {
    pub const ALL: [ModelType; 3] = [ModelType::Keywords, ModelType::Changes, ModelType::Combined];

    pub fn name(&self) -> &'static str {
        match self {
            ModelType::Keywords => "keywords",
            ModelType::Changes => "changes",
            ModelType::Combined => "combined",
        }
    }

    /// Feature width under a given vocabulary (20 / 48 / 68 for the
    /// built-in one).
    pub fn width(&self, vocabulary: &Vocabulary) -> usize {
        match self {
            ModelType::Keywords => vocabulary.len(),
            ModelType::Changes => TAXONOMY_WIDTH,
            ModelType::Combined => vocabulary.len() + TAXONOMY_WIDTH,
        }
    }
}

impl std::fmt::Display for ModelType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelType {
    type Err = CompoundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keywords" => Ok(ModelType::Keywords),
            "changes" => Ok(ModelType::Changes),
            "combined" => Ok(ModelType::Combined),
            other => Err(CompoundError::UnknownModelType(other.to_string())),
        }
    }
}

/// The learning algorithm shared by both components, with its parameters.
/// `Naive` is the rule-based baseline: per-class keyword groups with a
/// most-frequent-class fallback; it ignores the model types.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm<R: Real> {
    Tree(TreeParams<R>),
    Forest(ForestParams),
    Boost(BoostParams<R>),
    Naive,
}

impl<R: Real> Algorithm<R> {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Tree(_) => "tree",
            Algorithm::Forest(_) => "forest",
            Algorithm::Boost(_) => "boost",
            Algorithm::Naive => "naive",
        }
    }

    /// Canonical form: the seeds embedded in learner parameter structs are
    /// ignored during compound training (the spec's `seed` governs), so
    /// they are zeroed wherever a spec is stored or serialized.
    fn normalized(self) -> Self {
        match self {
            Algorithm::Forest(p) => Algorithm::Forest(ForestParams { seed: 0, ..p }),
            Algorithm::Boost(p) => Algorithm::Boost(BoostParams { seed: 0, ..p }),
            other => other,
        }
    }
}

/// A full compound-model request: the two component views, the shared
/// algorithm, and the training seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompoundSpec<R: Real> {
    pub model_kw: ModelType,
    pub model_nokw: ModelType,
    pub algorithm: Algorithm<R>,
    pub seed: u64,
}

impl<R: Real> CompoundSpec<R> {
    /// The best-performing configuration: a random forest dispatching
    /// between a keyword view and a combined view.
    pub fn champion(seed: u64) -> Self {
        CompoundSpec {
            model_kw: ModelType::Keywords,
            model_nokw: ModelType::Combined,
            algorithm: Algorithm::Forest(ForestParams::default()),
            seed,
        }
    }
}

/// Which dispatch branch classified a commit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Path {
    Kw,
    NoKw,
}

impl std::fmt::Display for Path {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Path::Kw => "kw",
            Path::NoKw => "nokw",
        })
    }
}

/// Per-class keyword groups for the rule-based baseline: the ten most
/// indicative stems per activity, in canonical class order. Their union is
/// exactly the built-in 20-word vocabulary.
pub const NAIVE_GROUPS: [[&str; 10]; 3] = [
    [
        "fix", "test", "issu", "use", "fail", "bug", "report", "set", "error", "npe",
    ],
    [
        "test", "remov", "use", "fix", "refactor", "method", "chang", "add", "improv", "new",
    ],
    [
        "support",
        "add",
        "implement",
        "new",
        "allow",
        "use",
        "method",
        "test",
        "set",
        "chang",
    ],
];

/// The rule-based baseline: count per-class keyword-group hits among the
/// normalized message stems; most hits wins. A commit with no hits falls
/// back to the most frequent training class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NaiveModel {
    class_counts: [u32; 3],
}

impl NaiveModel {
    pub fn train(data: &LabeledDataset) -> Self {
        let counts = data.class_counts();
        NaiveModel {
            class_counts: counts.map(|c| c as u32),
        }
    }

    pub fn class_counts(&self) -> [u32; 3] {
        self.class_counts
    }

    pub(crate) fn from_counts(class_counts: [u32; 3]) -> Self {
        NaiveModel { class_counts }
    }

    pub fn classify<R: Real>(
        &self,
        message: &str,
        stopwords: &StopwordConfig,
    ) -> (MaintenanceClass, ClassScores<R>) {
        let stems = crate::textnorm::normalize_message(message, stopwords);
        let mut hits = [0u32; 3];
        for (class, group) in hits.iter_mut().zip(&NAIVE_GROUPS) {
            *class = group.iter().filter(|w| stems.contains(**w)).count() as u32;
        }
        let scores = if hits.iter().any(|&h| h > 0) {
            ClassScores::from_counts(hits)
        } else {
            ClassScores::from_counts(self.class_counts)
        };
        let class = crate::learners::argmax_class(&scores.probabilities(), &self.class_counts);
        (class, scores)
    }
}

/// One trained component model.
#[derive(Clone, Debug, PartialEq)]
pub enum Component<R: Real> {
    Tree(TreeModel<R>),
    Forest(ForestModel<R>),
    Boost(BoostModel<R>),
    Naive(NaiveModel),
}

impl<R: Real> Component<R> {
    pub fn as_tree(&self) -> Option<&TreeModel<R>> {
        match self {
            Component::Tree(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_forest(&self) -> Option<&ForestModel<R>> {
        match self {
            Component::Forest(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_boost(&self) -> Option<&BoostModel<R>> {
        match self {
            Component::Boost(b) => Some(b),
            _ => None,
        }
    }
}

/// A trained compound model: immutable, and pure to classify with.
#[derive(Clone, Debug, PartialEq)]
pub struct CompoundModel<R: Real> {
    spec: CompoundSpec<R>,
    kw: Component<R>,
    nokw: Component<R>,
    vocabulary: Vocabulary,
    stopwords: StopwordConfig,
    taxonomy: Taxonomy,
}

impl<R: Real> CompoundModel<R> {
    /// The stored spec is canonical: embedded learner seeds are zeroed
    /// (see [`Algorithm`]); `spec.seed` is authoritative.
    pub fn spec(&self) -> &CompoundSpec<R> {
        &self.spec
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn stopwords(&self) -> &StopwordConfig {
        &self.stopwords
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn component(&self, path: Path) -> &Component<R> {
        match path {
            Path::Kw => &self.kw,
            Path::NoKw => &self.nokw,
        }
    }
}

/// Feature names for a view: keyword features are namespaced `kw:<word>`
/// so they can never collide with change-type names; change features use
/// the taxonomy labels directly.
pub fn view_feature_names(
    view: ModelType,
    vocabulary: &Vocabulary,
    taxonomy: &Taxonomy,
) -> Vec<String> {
    let mut names = Vec::with_capacity(view.width(vocabulary));
    if matches!(view, ModelType::Keywords | ModelType::Combined) {
        names.extend(vocabulary.words().iter().map(|w| format!("kw:{w}")));
    }
    if matches!(view, ModelType::Changes | ModelType::Combined) {
        names.extend(taxonomy.labels().iter().cloned());
    }
    names
}

/// Encode one commit under a feature view: binary keyword indicators
/// (each word counted at most once per message), raw change counts, or the
/// keyword block followed by the change block.
pub fn build_feature_vector(
    commit: &Commit,
    view: ModelType,
    vocabulary: &Vocabulary,
    stopwords: &StopwordConfig,
) -> Vec<u32> {
    let mut x = Vec::with_capacity(view.width(vocabulary));
    if matches!(view, ModelType::Keywords | ModelType::Combined) {
        x.extend(
            vocabulary
                .keyword_vector(&commit.message, stopwords)
                .into_iter()
                .map(u32::from),
        );
    }
    if matches!(view, ModelType::Changes | ModelType::Combined) {
        x.extend_from_slice(&commit.changes.0);
    }
    x
}

fn train_component<R: Real>(
    commits: &[&Commit],
    view: ModelType,
    algorithm: &Algorithm<R>,
    seed: u64,
    vocabulary: &Vocabulary,
    stopwords: &StopwordConfig,
    taxonomy: &Taxonomy,
) -> Result<Component<R>, CompoundError> {
    let rows: Vec<(Vec<u32>, MaintenanceClass)> = commits
        .iter()
        .map(|c| {
            let x = build_feature_vector(c, view, vocabulary, stopwords);
            let y = c.label.expect("labeled dataset invariant");
            (x, y)
        })
        .collect();
    let names = view_feature_names(view, vocabulary, taxonomy);
    let data = TrainingMatrix::new(rows, names)?;
    Ok(match algorithm {
        Algorithm::Tree(params) => Component::Tree(train_tree(&data, params)?),
        Algorithm::Forest(params) => {
            Component::Forest(train_forest(&data, &ForestParams { seed, ..*params })?)
        }
        Algorithm::Boost(params) => {
            Component::Boost(train_boost(&data, &BoostParams { seed, ..*params })?)
        }
        Algorithm::Naive => unreachable!("naive components are built without a matrix"),
    })
}

/// Train a compound model; both components see the full training set under
/// their own feature view. Deterministic given `spec.seed` (component
/// seeds are derived from it). When both views are equal, one component is
/// trained and shared, so the compound behaves exactly like that single
/// model.
pub fn train_compound<R: Real>(
    train: &LabeledDataset,
    spec: &CompoundSpec<R>,
    vocabulary: &Vocabulary,
    stopwords: &StopwordConfig,
    taxonomy: &Taxonomy,
) -> Result<CompoundModel<R>, CompoundError> {
    train_compound_with(train, spec, vocabulary, stopwords, taxonomy, false)
}

/// As [`train_compound`], but `partition` switches to the alternative
/// scheme where each component trains only on its own dispatch branch
/// (keyword commits vs. keyword-free commits). Both branches must be
/// non-empty. The rule-based baseline ignores the flag.
pub fn train_compound_with<R: Real>(
    train: &LabeledDataset,
    spec: &CompoundSpec<R>,
    vocabulary: &Vocabulary,
    stopwords: &StopwordConfig,
    taxonomy: &Taxonomy,
    partition: bool,
) -> Result<CompoundModel<R>, CompoundError> {
    let spec = CompoundSpec {
        algorithm: spec.algorithm.normalized(),
        ..*spec
    };
    let (kw, nokw) = if matches!(spec.algorithm, Algorithm::Naive) {
        let naive = Component::Naive(NaiveModel::train(train));
        (naive.clone(), naive)
    } else if partition {
        let (with, without): (Vec<&Commit>, Vec<&Commit>) = train
            .commits()
            .iter()
            .partition(|c| vocabulary.has_keywords(&c.message, stopwords));
        if with.is_empty() {
            return Err(CompoundError::EmptyPartition { path: Path::Kw });
        }
        if without.is_empty() {
            return Err(CompoundError::EmptyPartition { path: Path::NoKw });
        }
        let kw = train_component(
            &with,
            spec.model_kw,
            &spec.algorithm,
            splitmix64(spec.seed, 0),
            vocabulary,
            stopwords,
            taxonomy,
        )?;
        let nokw = train_component(
            &without,
            spec.model_nokw,
            &spec.algorithm,
            splitmix64(spec.seed, 1),
            vocabulary,
            stopwords,
            taxonomy,
        )?;
        (kw, nokw)
    } else {
        let all: Vec<&Commit> = train.commits().iter().collect();
        let kw = train_component(
            &all,
            spec.model_kw,
            &spec.algorithm,
            splitmix64(spec.seed, 0),
            vocabulary,
            stopwords,
            taxonomy,
        )?;
        let nokw = if spec.model_nokw == spec.model_kw {
            kw.clone()
        } else {
            train_component(
                &all,
                spec.model_nokw,
                &spec.algorithm,
                splitmix64(spec.seed, 1),
                vocabulary,
                stopwords,
                taxonomy,
            )?
        };
        (kw, nokw)
    };
    Ok(CompoundModel {
        spec,
        kw,
        nokw,
        vocabulary: vocabulary.clone(),
        stopwords: stopwords.clone(),
        taxonomy: taxonomy.clone(),
    })
}

/// Classify one commit: dispatch on whether the message contains any
/// vocabulary keyword, then score with that branch's component. Pure and
/// independent of any other commit.
pub fn classify_commit<R: Real>(
    model: &CompoundModel<R>,
    commit: &Commit,
) -> (MaintenanceClass, ClassScores<R>, Path) {
    let has = model
        .vocabulary
        .has_keywords(&commit.message, &model.stopwords);
    let (path, view) = if has {
        (Path::Kw, model.spec.model_kw)
    } else {
        (Path::NoKw, model.spec.model_nokw)
    };
    let component = model.component(path);
    let (class, scores) = match component {
        Component::Naive(naive) => naive.classify(&commit.message, &model.stopwords),
        learned => {
            let x = build_feature_vector(commit, view, &model.vocabulary, &model.stopwords);
            match learned {
                Component::Tree(m) => m.predict(&x),
                Component::Forest(m) => m.predict(&x),
                Component::Boost(m) => m.predict(&x),
                Component::Naive(_) => unreachable!("handled above"),
            }
            .expect("component width matches its view by construction")
        }
    };
    (class, scores, path)
}
