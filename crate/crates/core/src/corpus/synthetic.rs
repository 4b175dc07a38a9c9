//! Deterministic synthetic corpus for end-to-end exercises and the
//! compound-dispatch acceptance check. Half the commits carry one
//! class-typical keyword in their message; the other half are written
//! entirely from a keyword-free vocabulary, so only the change counts can
//! separate them.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Commit, LabeledDataset, MaintenanceClass};
use crate::distill::{
    ChangeVector, IDX_ADDITIONAL_CLASS, IDX_ADDITIONAL_FUNCTIONALITY,
    IDX_CONDITION_EXPRESSION_CHANGE, IDX_METHOD_RENAMING, IDX_PARAMETER_INSERT,
    IDX_REMOVED_FUNCTIONALITY, IDX_STATEMENT_DELETE, IDX_STATEMENT_INSERT, IDX_STATEMENT_UPDATE,
};

/// Default seed for the synthetic corpus used by tests and examples.
pub const SYNTHETIC_SEED: u64 = 20_170_401;

/// Words whose stems are neither stopwords nor members of the built-in
/// keyword vocabulary.
const FILLERS: &[&str] = &[
    "parser", "widget", "pipeline", "buffer", "layout", "registry", "kernel", "session", "handler",
    "socket", "matrix", "queue", "tracker", "console", "wrapper", "adapter", "iterator", "decoder",
    "monitor", "sandbox",
];

const CORRECTIVE_WORDS: &[&str] = &[
    "fix", "fixes", "fixed", "bug", "bugs", "error", "errors", "npe", "fails", "failing", "issue",
    "issues",
];
const PERFECTIVE_WORDS: &[&str] = &[
    "refactor",
    "refactored",
    "refactoring",
    "improve",
    "improved",
    "improves",
    "remove",
    "removed",
    "removes",
];
const ADAPTIVE_WORDS: &[&str] = &[
    "support",
    "supports",
    "supported",
    "implement",
    "implemented",
    "implements",
    "allow",
    "allows",
    "allowed",
];

fn class_words(class: MaintenanceClass) -> &'static [&'static str] {
    match class {
        MaintenanceClass::Corrective => CORRECTIVE_WORDS,
        MaintenanceClass::Perfective => PERFECTIVE_WORDS,
        MaintenanceClass::Adaptive => ADAPTIVE_WORDS,
    }
}

fn filler_words(rng: &mut ChaCha8Rng, count: usize) -> Vec<&'static str> {
    rand::seq::index::sample(rng, FILLERS.len(), count)
        .iter()
        .map(|i| FILLERS[i])
        .collect()
}

fn keyword_message(class: MaintenanceClass, rng: &mut ChaCha8Rng) -> String {
    let keyword = *class_words(class).choose(rng).expect("non-empty word list");
    let filler_count = rng.random_range(3..=5);
    let mut words = filler_words(rng, filler_count);
    let position = rng.random_range(0..=words.len());
    words.insert(position, keyword);
    words.join(" ")
}

fn plain_message(rng: &mut ChaCha8Rng) -> String {
    let filler_count = rng.random_range(4..=6);
    filler_words(rng, filler_count).join(" ")
}

fn change_profile(class: MaintenanceClass, rng: &mut ChaCha8Rng) -> ChangeVector {
    let mut v = ChangeVector::zero();
    match class {
        MaintenanceClass::Corrective => {
            v.0[IDX_STATEMENT_UPDATE] = rng.random_range(3..=8);
            v.0[IDX_CONDITION_EXPRESSION_CHANGE] = rng.random_range(1..=3);
            v.0[IDX_STATEMENT_INSERT] = rng.random_range(0..=1);
        }
        MaintenanceClass::Perfective => {
            v.0[IDX_REMOVED_FUNCTIONALITY] = rng.random_range(1..=3);
            v.0[IDX_STATEMENT_DELETE] = rng.random_range(3..=8);
            v.0[IDX_METHOD_RENAMING] = rng.random_range(0..=2);
        }
        MaintenanceClass::Adaptive => {
            v.0[IDX_ADDITIONAL_FUNCTIONALITY] = rng.random_range(2..=5);
            v.0[IDX_ADDITIONAL_CLASS] = rng.random_range(0..=2);
            v.0[IDX_STATEMENT_INSERT] = rng.random_range(3..=8);
            v.0[IDX_PARAMETER_INSERT] = rng.random_range(0..=2);
        }
    }
    v
}

fn other_class(class: MaintenanceClass, rng: &mut ChaCha8Rng) -> MaintenanceClass {
    let others: Vec<MaintenanceClass> = MaintenanceClass::ALL
        .into_iter()
        .filter(|&c| c != class)
        .collect();
    *others.choose(rng).expect("two alternatives")
}

/// Generate 1200 labeled commits: 600 with a class keyword in the message
/// (200 per class) followed by 600 keyword-free ones (200 per class).
/// Change counts follow class-conditional profiles, with a 10% chance of
/// borrowing another class's profile as label noise. Fully deterministic
/// in `seed`.
pub fn synthetic_corpus(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut commits = Vec::with_capacity(1200);
    let mut serial = 0u32;
    for keyworded in [true, false] {
        for class in MaintenanceClass::ALL {
            for _ in 0..200 {
                serial += 1;
                let message = if keyworded {
                    keyword_message(class, &mut rng)
                } else {
                    plain_message(&mut rng)
                };
                let profile_class = if rng.random_range(0..10) == 0 {
                    other_class(class, &mut rng)
                } else {
                    class
                };
                commits.push(Commit {
                    id: format!("syn-{serial:06}"),
                    project: "synthetic".to_string(),
                    message,
                    changes: change_profile(profile_class, &mut rng),
                    label: Some(class),
                });
            }
        }
    }
    LabeledDataset::new(commits).expect("synthetic corpus is valid")
}
