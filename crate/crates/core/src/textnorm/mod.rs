//! Commit-message normalization: tokenizing, stopword removal, stemming,
//! and keyword vocabularies (built-in or derived from a labeled corpus).

mod porter;

pub use porter::stem;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use thiserror::Error;

use crate::corpus::{LabeledDataset, MaintenanceClass};

/// The built-in 20-word keyword vocabulary, in its canonical order.
/// Entries are stemmed forms and are matched literally against normalized
/// message stems.
pub const BUILTIN_VOCABULARY: [&str; 20] = [
    "fix",
    "test",
    "issu",
    "use",
    "fail",
    "bug",
    "report",
    "set",
    "error",
    "npe",
    "remov",
    "refactor",
    "method",
    "chang",
    "add",
    "improv",
    "new",
    "support",
    "implement",
    "allow",
];

#[derive(Debug, Error)]
pub enum TextError {
    #[error("class {class} has no usable stems to rank")]
    EmptyClass { class: MaintenanceClass },
    #[error("invalid vocabulary word `{word}` (must be non-empty lowercase alphanumeric)")]
    InvalidWord { word: String },
    #[error("duplicate vocabulary word `{word}`")]
    DuplicateWord { word: String },
    #[error("vocabulary has no words")]
    EmptyVocabulary,
}

/// The two stopword lists used by normalization: English function words
/// (matched before stemming) and domain/author noise (matched after, so
/// entries are stored stemmed).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopwordConfig {
    english: BTreeSet<String>,
    custom: BTreeSet<String>,
}

impl StopwordConfig {
    pub fn new(english: BTreeSet<String>, custom: BTreeSet<String>) -> Self {
        StopwordConfig { english, custom }
    }

    /// The built-in lists shipped with the crate.
    pub fn builtin() -> &'static StopwordConfig {
        static BUILTIN: OnceLock<StopwordConfig> = OnceLock::new();
        BUILTIN.get_or_init(|| StopwordConfig {
            english: parse_word_list(include_str!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/data/english_stopwords.txt"
            ))),
            custom: parse_word_list(include_str!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/data/custom_stopwords.txt"
            ))),
        })
    }

    pub fn english(&self) -> &BTreeSet<String> {
        &self.english
    }

    pub fn custom(&self) -> &BTreeSet<String> {
        &self.custom
    }
}

/// Parse a word-per-line list; blank lines and `#` comments are skipped.
pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Normalize a message into its stream of stems, in order and with
/// repetitions: lowercase, split on every non-alphanumeric character, drop
/// single-character tokens, drop English stopwords (surface forms), stem,
/// then drop custom stopwords (stemmed forms).
pub fn normalize_tokens(text: &str, stopwords: &StopwordConfig) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for token in lower.split(|c: char| !c.is_alphanumeric()) {
        if token.chars().nth(1).is_none() {
            continue;
        }
        if stopwords.english.contains(token) {
            continue;
        }
        let stemmed = stem(token);
        if stopwords.custom.contains(&stemmed) {
            continue;
        }
        out.push(stemmed);
    }
    out
}

/// Normalize a message into its set of distinct stems.
pub fn normalize_message(text: &str, stopwords: &StopwordConfig) -> BTreeSet<String> {
    normalize_tokens(text, stopwords).into_iter().collect()
}

/// Where a vocabulary came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Builtin,
    Derived,
}

/// An ordered list of keyword stems. Matching is literal set membership
/// against normalized message stems. Note that entries are **not**
/// required to be stemmer fixed points: the built-in word `use` stems to
/// `us`, so occurrences of "use" in messages never match it; the list is
/// kept verbatim for compatibility with the published feature set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    set: BTreeSet<String>,
    provenance: Provenance,
}

impl Vocabulary {
    pub fn new(words: Vec<String>, provenance: Provenance) -> Result<Self, TextError> {
        if words.is_empty() {
            return Err(TextError::EmptyVocabulary);
        }
        let mut set = BTreeSet::new();
        for word in &words {
            let valid = !word.is_empty()
                && word
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
            if !valid {
                return Err(TextError::InvalidWord { word: word.clone() });
            }
            if !set.insert(word.clone()) {
                return Err(TextError::DuplicateWord { word: word.clone() });
            }
        }
        Ok(Vocabulary {
            words,
            set,
            provenance,
        })
    }

    /// The built-in 20-word vocabulary.
    pub fn builtin() -> &'static Vocabulary {
        static BUILTIN: OnceLock<Vocabulary> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Vocabulary::new(
                BUILTIN_VOCABULARY.iter().map(|w| w.to_string()).collect(),
                Provenance::Builtin,
            )
            .expect("built-in vocabulary is valid")
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, stem: &str) -> bool {
        self.set.contains(stem)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Binary indicator vector over the vocabulary, in vocabulary order.
    pub fn keyword_vector(&self, message: &str, stopwords: &StopwordConfig) -> Vec<u8> {
        let stems = normalize_message(message, stopwords);
        self.words
            .iter()
            .map(|w| u8::from(stems.contains(w)))
            .collect()
    }

    /// Does the message contain at least one vocabulary stem?
    pub fn has_keywords(&self, message: &str, stopwords: &StopwordConfig) -> bool {
        normalize_message(message, stopwords)
            .iter()
            .any(|stem| self.set.contains(stem))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct StemStats {
    /// Number of messages whose stem set contains the stem.
    messages: u64,
    /// Total occurrences across all tokens of the class.
    occurrences: u64,
}

fn class_stats(
    ds: &LabeledDataset,
    class: MaintenanceClass,
    stopwords: &StopwordConfig,
) -> BTreeMap<String, StemStats> {
    let mut stats: BTreeMap<String, StemStats> = BTreeMap::new();
    for commit in ds.commits() {
        if commit.label != Some(class) {
            continue;
        }
        let tokens = normalize_tokens(&commit.message, stopwords);
        let distinct: BTreeSet<&String> = tokens.iter().collect();
        for stem in distinct {
            stats.entry(stem.clone()).or_default().messages += 1;
        }
        for stem in &tokens {
            stats.entry(stem.clone()).or_default().occurrences += 1;
        }
    }
    stats
}

fn ranked_stems(stats: &BTreeMap<String, StemStats>) -> Vec<&String> {
    let mut stems: Vec<&String> = stats.keys().collect();
    stems.sort_by(|a, b| {
        let (sa, sb) = (stats[*a], stats[*b]);
        sb.messages
            .cmp(&sa.messages)
            .then(sb.occurrences.cmp(&sa.occurrences))
            .then(a.cmp(b))
    });
    stems
}

/// Derive a vocabulary from a labeled corpus: for each class (in canonical
/// order), rank stems by the number of messages containing them, breaking
/// ties by total occurrences and then alphabetically; take the top
/// `per_class`, then union the three lists preserving first appearance.
pub fn derive_vocabulary(
    ds: &LabeledDataset,
    per_class: usize,
    stopwords: &StopwordConfig,
) -> Result<Vocabulary, TextError> {
    let mut words: Vec<String> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for class in MaintenanceClass::ALL {
        let stats = class_stats(ds, class, stopwords);
        if stats.is_empty() {
            return Err(TextError::EmptyClass { class });
        }
        for stem in ranked_stems(&stats).into_iter().take(per_class) {
            if seen.insert(stem.clone()) {
                words.push(stem.clone());
            }
        }
    }
    Vocabulary::new(words, Provenance::Derived)
}

/// One row of a per-class stem frequency table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyEntry {
    pub stem: String,
    /// Messages of the class containing the stem.
    pub messages: u64,
    /// Total occurrences across the class's tokens.
    pub occurrences: u64,
}

/// Full stem frequency table for one class, sorted by message count
/// (descending) and then alphabetically. Unlike vocabulary derivation,
/// occurrence counts do not participate in the ordering; they are reported
/// for inspection only.
pub fn frequency_table(
    ds: &LabeledDataset,
    class: MaintenanceClass,
    stopwords: &StopwordConfig,
) -> Vec<FrequencyEntry> {
    let stats = class_stats(ds, class, stopwords);
    let mut entries: Vec<FrequencyEntry> = stats
        .into_iter()
        .map(|(stem, s)| FrequencyEntry {
            stem,
            messages: s.messages,
            occurrences: s.occurrences,
        })
        .collect();
    entries.sort_by(|a, b| b.messages.cmp(&a.messages).then(a.stem.cmp(&b.stem)));
    entries
}
