//! Versioned text serialization for compound models: magic `MMCM`, a
//! format version, named sections (spec, vocabulary, stopwords, taxonomy,
//! both components), and a trailing SHA-256 content checksum.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{
    Algorithm, Component, CompoundError, CompoundModel, CompoundSpec, ModelType, NaiveModel,
};
use crate::distill::Taxonomy;
use crate::learners::{
    read_class_counts, tagged_values, BoostModel, BoostParams, ForestModel, ForestParams,
    LearnError, LineCursor, TreeModel, TreeParams,
};
use crate::textnorm::{Provenance, StopwordConfig, Vocabulary};
use crate::Real;

const FORMAT_VERSION: u32 = 1;

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").expect("write to string");
    }
    hex
}

/// Lift codec errors into compound errors, keeping line information.
fn lift(e: LearnError) -> CompoundError {
    match e {
        LearnError::Format { line, message } => CompoundError::Format { line, message },
        other => CompoundError::Learn(other),
    }
}

fn write_algorithm<R: Real>(out: &mut String, algorithm: &Algorithm<R>) {
    match algorithm {
        Algorithm::Tree(p) => writeln!(out, "algorithm tree {} {}", p.min_leaf, p.cf),
        Algorithm::Forest(p) => writeln!(
            out,
            "algorithm forest {} {} {}",
            p.trees,
            p.mtry.map_or_else(|| "auto".to_string(), |m| m.to_string()),
            u8::from(p.bootstrap)
        ),
        Algorithm::Boost(p) => writeln!(
            out,
            "algorithm boost {} {} {}",
            p.stages, p.depth, p.shrinkage
        ),
        Algorithm::Naive => writeln!(out, "algorithm naive"),
    }
    .expect("write to string");
}

fn write_words<'a>(out: &mut String, tag: &str, words: impl Iterator<Item = &'a str>) {
    out.push_str(tag);
    for word in words {
        out.push(' ');
        out.push_str(word);
    }
    out.push('\n');
}

fn write_component<R: Real>(out: &mut String, component: &Component<R>) {
    match component {
        Component::Tree(m) => m.write_text(out),
        Component::Forest(m) => m.write_text(out),
        Component::Boost(m) => m.write_text(out),
        Component::Naive(m) => {
            out.push_str("naive\n");
            let c = m.class_counts();
            writeln!(out, "classes {} {} {}", c[0], c[1], c[2]).expect("write to string");
        }
    }
}

/// Serialize a compound model to its complete MMCM byte representation.
/// The output is deterministic: equal models produce identical bytes.
///
/// Stopword entries are stored space-separated; entries containing
/// whitespace (which can never match a token anyway) do not round-trip.
pub fn serialize_model<R: Real>(model: &CompoundModel<R>) -> Vec<u8> {
    let mut body = String::new();
    writeln!(body, "MMCM {FORMAT_VERSION}").expect("write to string");

    body.push_str("[spec]\n");
    writeln!(body, "model_kw {}", model.spec.model_kw).expect("write to string");
    writeln!(body, "model_nokw {}", model.spec.model_nokw).expect("write to string");
    write_algorithm(&mut body, &model.spec.algorithm);
    writeln!(body, "seed {}", model.spec.seed).expect("write to string");

    body.push_str("[vocabulary]\n");
    let provenance = match model.vocabulary.provenance() {
        Provenance::Builtin => "builtin",
        Provenance::Derived => "derived",
    };
    writeln!(body, "provenance {provenance}").expect("write to string");
    write_words(
        &mut body,
        "words",
        model.vocabulary.words().iter().map(String::as_str),
    );

    body.push_str("[stopwords_english]\n");
    write_words(
        &mut body,
        "words",
        model.stopwords.english().iter().map(String::as_str),
    );
    body.push_str("[stopwords_custom]\n");
    write_words(
        &mut body,
        "words",
        model.stopwords.custom().iter().map(String::as_str),
    );

    body.push_str("[taxonomy]\n");
    write_words(
        &mut body,
        "labels",
        model.taxonomy.labels().iter().map(String::as_str),
    );

    body.push_str("[component kw]\n");
    write_component(&mut body, &model.kw);
    body.push_str("[component nokw]\n");
    write_component(&mut body, &model.nokw);

    let checksum = sha256_hex(body.as_bytes());
    body.push_str("[checksum]\n");
    writeln!(body, "sha256 {checksum}").expect("write to string");
    body.into_bytes()
}

fn expect_section(cur: &mut LineCursor<'_>, name: &str) -> Result<(), CompoundError> {
    cur.expect(name).map_err(lift)
}

fn single_value<'a>(
    cur: &mut LineCursor<'a>,
    tag: &str,
) -> Result<(&'a str, usize), CompoundError> {
    let values = tagged_values(cur, tag).map_err(lift)?;
    let line = cur.line;
    if values.len() != 1 {
        return Err(CompoundError::Format {
            line,
            message: format!("expected `{tag} <value>`"),
        });
    }
    Ok((values[0], line))
}

fn parse_algorithm<R: Real>(tokens: &[&str], line: usize) -> Result<Algorithm<R>, CompoundError> {
    let bad = |message: String| CompoundError::Format { line, message };
    match tokens {
        ["tree", min_leaf, cf] => {
            let min_leaf = min_leaf
                .parse()
                .map_err(|_| bad(format!("bad min_leaf `{min_leaf}`")))?;
            let cf =
                R::parse_text(cf).ok_or_else(|| bad(format!("bad pruning confidence `{cf}`")))?;
            Ok(Algorithm::Tree(TreeParams { min_leaf, cf }))
        }
        ["forest", trees, mtry, bootstrap] => {
            let trees = trees
                .parse()
                .map_err(|_| bad(format!("bad tree count `{trees}`")))?;
            let mtry = if *mtry == "auto" {
                None
            } else {
                Some(
                    mtry.parse()
                        .map_err(|_| bad(format!("bad mtry `{mtry}`")))?,
                )
            };
            let bootstrap = match *bootstrap {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("bad bootstrap flag `{other}`"))),
            };
            Ok(Algorithm::Forest(ForestParams {
                trees,
                mtry,
                seed: 0,
                bootstrap,
            }))
        }
        ["boost", stages, depth, shrinkage] => {
            let stages = stages
                .parse()
                .map_err(|_| bad(format!("bad stage count `{stages}`")))?;
            let depth = depth
                .parse()
                .map_err(|_| bad(format!("bad depth `{depth}`")))?;
            let shrinkage = R::parse_text(shrinkage)
                .ok_or_else(|| bad(format!("bad shrinkage `{shrinkage}`")))?;
            Ok(Algorithm::Boost(BoostParams {
                stages,
                depth,
                shrinkage,
                seed: 0,
            }))
        }
        ["naive"] => Ok(Algorithm::Naive),
        other => Err(bad(format!(
            "unrecognized algorithm line `{}`",
            other.join(" ")
        ))),
    }
}

fn read_component<R: Real>(
    cur: &mut LineCursor<'_>,
    names: &[String],
) -> Result<Component<R>, CompoundError> {
    match cur.peek() {
        Some("tree") => Ok(Component::Tree(
            TreeModel::read_text(cur, names).map_err(lift)?,
        )),
        Some("forest") => Ok(Component::Forest(
            ForestModel::read_text(cur, names).map_err(lift)?,
        )),
        Some("boost") => Ok(Component::Boost(
            BoostModel::read_text(cur, names).map_err(lift)?,
        )),
        Some("naive") => {
            cur.expect("naive").map_err(lift)?;
            let counts = read_class_counts(cur).map_err(lift)?;
            Ok(Component::Naive(NaiveModel::from_counts(counts)))
        }
        other => Err(CompoundError::Format {
            line: cur.line + 1,
            message: format!(
                "expected a component model, found `{}`",
                other.unwrap_or("")
            ),
        }),
    }
}

/// Deserialize MMCM bytes. The version is checked first (so future formats
/// fail with a version error), then the checksum (so truncation or
/// corruption fails fast), then the body is parsed.
pub fn deserialize_model<R: Real>(bytes: &[u8]) -> Result<CompoundModel<R>, CompoundError> {
    let text = std::str::from_utf8(bytes).map_err(|_| CompoundError::Magic)?;
    let first = text.lines().next().ok_or(CompoundError::Magic)?;
    let version = first.strip_prefix("MMCM ").ok_or(CompoundError::Magic)?;
    if version != FORMAT_VERSION.to_string() {
        return Err(CompoundError::Version {
            found: version.to_string(),
            supported: FORMAT_VERSION,
        });
    }

    let marker = "\n[checksum]\n";
    let pos = text.find(marker).ok_or(CompoundError::Checksum)?;
    let body = &text[..pos + 1];
    let mut trailer = text[pos + 1..].lines();
    trailer.next(); // the [checksum] header itself
    let stated = trailer
        .next()
        .and_then(|l| l.strip_prefix("sha256 "))
        .ok_or(CompoundError::Checksum)?;
    if trailer.next().is_some() || sha256_hex(body.as_bytes()) != stated {
        return Err(CompoundError::Checksum);
    }

    let mut cur = LineCursor::new(body);
    cur.next().map_err(lift)?; // magic line, already validated

    expect_section(&mut cur, "[spec]")?;
    let (kw_name, line) = single_value(&mut cur, "model_kw")?;
    let model_kw: ModelType = kw_name.parse().map_err(|_| CompoundError::Format {
        line,
        message: format!("unknown model type `{kw_name}`"),
    })?;
    let (nokw_name, line) = single_value(&mut cur, "model_nokw")?;
    let model_nokw: ModelType = nokw_name.parse().map_err(|_| CompoundError::Format {
        line,
        message: format!("unknown model type `{nokw_name}`"),
    })?;
    let alg_tokens = tagged_values(&mut cur, "algorithm").map_err(lift)?;
    let algorithm = parse_algorithm::<R>(&alg_tokens, cur.line)?;
    let (seed_text, line) = single_value(&mut cur, "seed")?;
    let seed: u64 = seed_text.parse().map_err(|_| CompoundError::Format {
        line,
        message: format!("bad seed `{seed_text}`"),
    })?;
    let spec = CompoundSpec {
        model_kw,
        model_nokw,
        algorithm,
        seed,
    };

    expect_section(&mut cur, "[vocabulary]")?;
    let (prov_text, line) = single_value(&mut cur, "provenance")?;
    let provenance = match prov_text {
        "builtin" => Provenance::Builtin,
        "derived" => Provenance::Derived,
        other => {
            return Err(CompoundError::Format {
                line,
                message: format!("unknown provenance `{other}`"),
            })
        }
    };
    let word_tokens = tagged_values(&mut cur, "words").map_err(lift)?;
    let words_line = cur.line;
    let vocabulary = Vocabulary::new(
        word_tokens.iter().map(|w| w.to_string()).collect(),
        provenance,
    )
    .map_err(|e| CompoundError::Format {
        line: words_line,
        message: e.to_string(),
    })?;

    expect_section(&mut cur, "[stopwords_english]")?;
    let english: BTreeSet<String> = tagged_values(&mut cur, "words")
        .map_err(lift)?
        .iter()
        .map(|w| w.to_string())
        .collect();
    expect_section(&mut cur, "[stopwords_custom]")?;
    let custom: BTreeSet<String> = tagged_values(&mut cur, "words")
        .map_err(lift)?
        .iter()
        .map(|w| w.to_string())
        .collect();
    let stopwords = StopwordConfig::new(english, custom);

    expect_section(&mut cur, "[taxonomy]")?;
    let label_tokens = tagged_values(&mut cur, "labels").map_err(lift)?;
    let labels_line = cur.line;
    let taxonomy =
        Taxonomy::parse(&label_tokens.join("\n")).map_err(|e| CompoundError::Format {
            line: labels_line,
            message: e.to_string(),
        })?;

    expect_section(&mut cur, "[component kw]")?;
    let kw_names = super::view_feature_names(spec.model_kw, &vocabulary, &taxonomy);
    let kw = read_component::<R>(&mut cur, &kw_names)?;
    expect_section(&mut cur, "[component nokw]")?;
    let nokw_names = super::view_feature_names(spec.model_nokw, &vocabulary, &taxonomy);
    let nokw = read_component::<R>(&mut cur, &nokw_names)?;

    if !cur.at_end() {
        return Err(CompoundError::Format {
            line: cur.line + 1,
            message: "trailing content after the components".to_string(),
        });
    }

    Ok(CompoundModel {
        spec,
        kw,
        nokw,
        vocabulary,
        stopwords,
        taxonomy,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{classify_commit, train_compound};
    use super::*;
    use crate::corpus::synthetic::{synthetic_corpus, SYNTHETIC_SEED};
    use crate::corpus::{Commit, LabeledDataset};
    use crate::distill::ChangeVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_corpus() -> LabeledDataset {
        synthetic_corpus(SYNTHETIC_SEED).select(&(0..1200).step_by(8).collect::<Vec<_>>())
    }

    fn spec_for(algorithm: Algorithm<f64>) -> CompoundSpec<f64> {
        CompoundSpec {
            model_kw: ModelType::Keywords,
            model_nokw: ModelType::Combined,
            algorithm,
            seed: 11,
        }
    }

    fn trained(algorithm: Algorithm<f64>) -> CompoundModel<f64> {
        let ds = small_corpus();
        train_compound(
            &ds,
            &spec_for(algorithm),
            Vocabulary::builtin(),
            StopwordConfig::builtin(),
            Taxonomy::builtin(),
        )
        .unwrap()
    }

    fn all_algorithms() -> [Algorithm<f64>; 4] {
        [
            Algorithm::Tree(TreeParams::default()),
            Algorithm::Forest(ForestParams {
                trees: 10,
                ..ForestParams::default()
            }),
            Algorithm::Boost(BoostParams {
                stages: 5,
                ..BoostParams::default()
            }),
            Algorithm::Naive,
        ]
    }

    #[test]
    fn every_algorithm_round_trips_losslessly() {
        for algorithm in all_algorithms() {
            let model = trained(algorithm);
            let bytes = serialize_model(&model);
            let back: CompoundModel<f64> = deserialize_model(&bytes).unwrap();
            assert_eq!(back, model, "algorithm {}", algorithm.name());
            assert_eq!(serialize_model(&back), bytes);
        }
    }

    #[test]
    fn round_trip_classification_agrees_on_random_probes() {
        let model = trained(Algorithm::Forest(ForestParams {
            trees: 12,
            ..ForestParams::default()
        }));
        let back: CompoundModel<f64> = deserialize_model(&serialize_model(&model)).unwrap();
        let pool = [
            "fix",
            "bug",
            "support",
            "refactor",
            "widget",
            "panel",
            "rotor",
            "gasket",
            "hinge",
            "update",
            "remove",
            "implement",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(424242);
        for i in 0..1000 {
            let words: Vec<&str> = (0..rng.random_range(0..8))
                .map(|_| pool[rng.random_range(0..pool.len())])
                .collect();
            let mut changes = ChangeVector::zero();
            for _ in 0..rng.random_range(0..6) {
                let idx = rng.random_range(0..48);
                changes.0[idx] = rng.random_range(0..5);
            }
            let commit = Commit {
                id: format!("probe-{i}"),
                project: "probe".to_string(),
                message: words.join(" "),
                changes,
                label: None,
            };
            let a = classify_commit(&model, &commit);
            let b = classify_commit(&back, &commit);
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.probabilities(), b.1.probabilities());
            assert_eq!(a.2, b.2);
        }
    }

    #[test]
    fn truncation_and_corruption_fail_the_checksum() {
        let bytes = serialize_model(&trained(Algorithm::Tree(TreeParams::default())));
        let truncated = &bytes[..bytes.len() - 40];
        assert!(matches!(
            deserialize_model::<f64>(truncated),
            Err(CompoundError::Checksum)
        ));

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] = if flipped[mid] == b'0' { b'1' } else { b'0' };
        assert!(matches!(
            deserialize_model::<f64>(&flipped),
            Err(CompoundError::Checksum)
        ));
    }

    #[test]
    fn future_versions_and_foreign_files_are_explicit_errors() {
        let bytes = serialize_model(&trained(Algorithm::Naive));
        let text = String::from_utf8(bytes).unwrap();
        let bumped = text.replacen("MMCM 1", "MMCM 2", 1);
        match deserialize_model::<f64>(bumped.as_bytes()) {
            Err(CompoundError::Version { found, supported }) => {
                assert_eq!(found, "2");
                assert_eq!(supported, 1);
            }
            other => panic!("expected a version error, got {other:?}"),
        }

        assert!(matches!(
            deserialize_model::<f64>(b"PK\x03\x04 not a model"),
            Err(CompoundError::Magic)
        ));
        assert!(matches!(
            deserialize_model::<f64>(b""),
            Err(CompoundError::Magic)
        ));
    }
}
