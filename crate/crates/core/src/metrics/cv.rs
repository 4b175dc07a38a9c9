//! Repeated stratified k-fold cross-validation with deterministic,
//! seed-derived fold assignment, plus six-number resample summaries.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate, to_f64, ConfusionMatrix, MetricsError};
use crate::compound::{classify_commit, train_compound_with, CompoundSpec};
use crate::corpus::{LabeledDataset, MaintenanceClass};
use crate::distill::Taxonomy;
use crate::learners::rng::splitmix64;
use crate::textnorm::{StopwordConfig, Vocabulary};
use crate::Real;

/// Controls for [`repeated_cv`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CvOptions {
    pub repeats: usize,
    pub folds: usize,
    /// Seed for fold assignment; per-fold model seeds derive from the
    /// spec's own seed instead, so the two concerns stay independent.
    pub seed: u64,
    /// Train each dispatch component only on its own branch of the data.
    pub partition: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            repeats: 5,
            folds: 10,
            seed: 0,
            partition: false,
        }
    }
}

/// Accuracy and kappa of one held-out fold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resample<R: Real> {
    pub repeat: usize,
    pub fold: usize,
    pub accuracy: R,
    pub kappa: R,
}

fn validate_folds(data: &LabeledDataset, folds: usize) -> Result<(), MetricsError> {
    let rows = data.len();
    // folds == rows is leave-one-out, where stratification is vacuous;
    // otherwise every represented class must be able to reach every fold.
    let stratifiable = folds == rows || data.class_counts().iter().all(|&c| c == 0 || c >= folds);
    if folds < 2 || folds > rows || !stratifiable {
        return Err(MetricsError::BadFolds { folds, rows });
    }
    Ok(())
}

fn deal_folds(data: &LabeledDataset, folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut assignment = vec![0usize; data.len()];
    // One cursor runs across the classes so fold sizes stay balanced
    // overall, while each class is dealt round-robin for stratification.
    let mut cursor = 0usize;
    for class in MaintenanceClass::ALL {
        let mut members: Vec<usize> = data
            .commits()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.label == Some(class))
            .map(|(i, _)| i)
            .collect();
        members.shuffle(rng);
        for index in members {
            assignment[index] = cursor % folds;
            cursor += 1;
        }
    }
    assignment
}

/// Stratified fold identifiers, one vector per repeat: entry `i` of a
/// vector is the fold that holds row `i` out. Each repeat reshuffles with
/// its own seed derived from `seed`; within every repeat, each class is
/// spread across folds as evenly as integer counts allow.
pub fn cv_assignments(
    data: &LabeledDataset,
    repeats: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, MetricsError> {
    if repeats == 0 {
        return Err(MetricsError::BadRepeats);
    }
    validate_folds(data, folds)?;
    Ok((0..repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed, r as u64));
            deal_folds(data, folds, &mut rng)
        })
        .collect())
}

/// Repeats x folds cross-validation of a compound spec. Returns one
/// resample per held-out fold in repeat-major order. Every fold trains a
/// fresh model whose seed derives from the spec seed and the fold's
/// position, so results are reproducible and independent of scheduling.
pub fn repeated_cv<R: Real>(
    data: &LabeledDataset,
    spec: &CompoundSpec<R>,
    vocabulary: &Vocabulary,
    stopwords: &StopwordConfig,
    taxonomy: &Taxonomy,
    options: &CvOptions,
) -> Result<Vec<Resample<R>>, MetricsError> {
    let assignments = cv_assignments(data, options.repeats, options.folds, options.seed)?;
    let folds = options.folds;
    let jobs: Vec<(usize, usize)> = (0..options.repeats)
        .flat_map(|r| (0..folds).map(move |f| (r, f)))
        .collect();
    jobs.into_par_iter()
        .map(|(repeat, fold)| {
            let assignment = &assignments[repeat];
            let train_rows: Vec<usize> =
                (0..data.len()).filter(|&i| assignment[i] != fold).collect();
            let test_rows: Vec<usize> =
                (0..data.len()).filter(|&i| assignment[i] == fold).collect();
            let fold_spec = CompoundSpec {
                seed: splitmix64(spec.seed, (repeat * folds + fold) as u64),
                ..*spec
            };
            let model = train_compound_with(
                &data.select(&train_rows),
                &fold_spec,
                vocabulary,
                stopwords,
                taxonomy,
                options.partition,
            )?;
            let held_out = data.select(&test_rows);
            let matrix = ConfusionMatrix::from_pairs(held_out.commits().iter().map(|c| {
                (
                    classify_commit(&model, c).0,
                    c.label.expect("datasets are fully labeled"),
                )
            }));
            let report = evaluate::<R>(&matrix)?;
            Ok(Resample {
                repeat,
                fold,
                accuracy: report.accuracy,
                kappa: report.kappa,
            })
        })
        .collect()
}

/// Minimum, quartiles, mean and maximum of one measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SixNumber<R: Real> {
    pub min: R,
    pub q1: R,
    pub median: R,
    pub mean: R,
    pub q3: R,
    pub max: R,
}

/// Six-number summaries of accuracy and kappa over resamples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResampleSummary<R: Real> {
    pub resamples: usize,
    pub accuracy: SixNumber<R>,
    pub kappa: SixNumber<R>,
}

impl<R: Real> ResampleSummary<R> {
    /// Fixed-width text rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "resamples: {}", self.resamples).expect("write to string");
        writeln!(
            out,
            "{:<10}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}",
            "", "min", "q1", "median", "mean", "q3", "max"
        )
        .expect("write to string");
        for (name, s) in [("accuracy", &self.accuracy), ("kappa", &self.kappa)] {
            writeln!(
                out,
                "{:<10}{:>9.4}{:>9.4}{:>9.4}{:>9.4}{:>9.4}{:>9.4}",
                name,
                to_f64(s.min),
                to_f64(s.q1),
                to_f64(s.median),
                to_f64(s.mean),
                to_f64(s.q3),
                to_f64(s.max),
            )
            .expect("write to string");
        }
        out
    }
}

/// Summarize a non-empty set of resamples.
pub fn summarize_resamples<R: Real>(
    resamples: &[Resample<R>],
) -> Result<ResampleSummary<R>, MetricsError> {
    if resamples.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(ResampleSummary {
        resamples: resamples.len(),
        accuracy: six_number(resamples.iter().map(|r| r.accuracy).collect()),
        kappa: six_number(resamples.iter().map(|r| r.kappa).collect()),
    })
}

fn six_number<R: Real>(mut values: Vec<R>) -> SixNumber<R> {
    values.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    let n = values.len();
    let mean = values.iter().copied().sum::<R>() / R::from_count(n);
    SixNumber {
        min: values[0],
        q1: quantile(&values, 0.25),
        median: quantile(&values, 0.5),
        mean,
        q3: quantile(&values, 0.75),
        max: values[n - 1],
    }
}

/// Linear-interpolation quantile of sorted values (the default continuous
/// definition in R and NumPy): position h = (n-1)p, interpolated between
/// the flanking order statistics.
fn quantile<R: Real>(sorted: &[R], p: f64) -> R {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 == sorted.len() {
        return sorted[lo];
    }
    sorted[lo] + (sorted[lo + 1] - sorted[lo]) * R::from_f64_lossy(frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compound::{Algorithm, ModelType};
    use crate::corpus::synthetic::{synthetic_corpus, SYNTHETIC_SEED};
    use crate::learners::{ForestParams, TreeParams};

    fn spread_subset(step: usize) -> LabeledDataset {
        synthetic_corpus(SYNTHETIC_SEED).select(&(0..1200).step_by(step).collect::<Vec<_>>())
    }

    fn forest_spec(trees: usize, seed: u64) -> CompoundSpec<f64> {
        CompoundSpec {
            model_kw: ModelType::Keywords,
            model_nokw: ModelType::Combined,
            algorithm: Algorithm::Forest(ForestParams {
                trees,
                ..ForestParams::default()
            }),
            seed,
        }
    }

    fn ctx() -> (
        &'static Vocabulary,
        &'static StopwordConfig,
        &'static Taxonomy,
    ) {
        (
            Vocabulary::builtin(),
            StopwordConfig::builtin(),
            Taxonomy::builtin(),
        )
    }

    #[test]
    fn assignments_are_stratified_and_partition_the_rows() {
        let ds = spread_subset(7); // 172 rows, uneven class counts
        let n = ds.len();
        let folds = 10;
        let assignments = cv_assignments(&ds, 3, folds, 5).unwrap();
        assert_eq!(assignments.len(), 3);
        for assignment in &assignments {
            assert_eq!(assignment.len(), n);
            assert!(assignment.iter().all(|&f| f < folds));
            for fold in 0..folds {
                let size = assignment.iter().filter(|&&a| a == fold).count();
                assert!(size == n / folds || size == n.div_ceil(folds));
                for class in MaintenanceClass::ALL {
                    let in_fold = ds
                        .commits()
                        .iter()
                        .zip(assignment)
                        .filter(|(c, &a)| a == fold && c.label == Some(class))
                        .count();
                    let total = ds.count_of(class);
                    assert!(
                        in_fold == total / folds || in_fold == total.div_ceil(folds),
                        "class {class} fold {fold}: {in_fold} of {total}"
                    );
                }
            }
        }
        // repeats reshuffle
        assert_ne!(assignments[0], assignments[1]);
    }

    #[test]
    fn assignments_depend_on_the_seed() {
        let ds = spread_subset(10);
        let a = cv_assignments(&ds, 2, 10, 1).unwrap();
        let b = cv_assignments(&ds, 2, 10, 1).unwrap();
        let c = cv_assignments(&ds, 2, 10, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn repeated_cv_yields_repeat_major_resamples() {
        let ds = spread_subset(20); // 60 rows
        let spec = CompoundSpec {
            algorithm: Algorithm::Naive,
            ..forest_spec(1, 3)
        };
        let (v, s, t) = ctx();
        let options = CvOptions {
            repeats: 2,
            folds: 5,
            seed: 9,
            partition: false,
        };
        let resamples = repeated_cv(&ds, &spec, v, s, t, &options).unwrap();
        assert_eq!(resamples.len(), 10);
        for (i, r) in resamples.iter().enumerate() {
            assert_eq!(r.repeat, i / 5);
            assert_eq!(r.fold, i % 5);
            assert!((0.0..=1.0).contains(&r.accuracy));
            assert!((-1.0..=1.0).contains(&r.kappa));
        }
    }

    #[test]
    fn repeated_cv_is_deterministic() {
        let ds = spread_subset(20);
        let spec = forest_spec(10, 21);
        let (v, s, t) = ctx();
        let options = CvOptions {
            repeats: 2,
            folds: 5,
            seed: 4,
            partition: false,
        };
        let a = repeated_cv(&ds, &spec, v, s, t, &options).unwrap();
        let b = repeated_cv(&ds, &spec, v, s, t, &options).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn leave_one_out_matches_the_brute_force_oracle() {
        let full = synthetic_corpus(SYNTHETIC_SEED);
        let ds = full.select(&[0, 1, 600, 601, 200, 201, 800, 801, 400, 401, 1000, 1001]);
        assert_eq!(ds.class_counts(), [4, 4, 4]);
        let spec = forest_spec(10, 9);
        let (v, s, t) = ctx();
        let options = CvOptions {
            repeats: 1,
            folds: 12,
            seed: 77,
            partition: false,
        };
        let resamples = repeated_cv(&ds, &spec, v, s, t, &options).unwrap();
        assert_eq!(resamples.len(), 12);

        let assignment = &cv_assignments(&ds, 1, 12, 77).unwrap()[0];
        for (fold, resample) in resamples.iter().enumerate() {
            let held = (0..12).find(|&i| assignment[i] == fold).unwrap();
            let train_rows: Vec<usize> = (0..12).filter(|&i| i != held).collect();
            let fold_spec = CompoundSpec {
                seed: splitmix64(spec.seed, fold as u64),
                ..spec
            };
            let model =
                train_compound_with(&ds.select(&train_rows), &fold_spec, v, s, t, false).unwrap();
            let commit = &ds.commits()[held];
            let correct = classify_commit(&model, commit).0 == commit.label.unwrap();
            let expected = if correct { 1.0 } else { 0.0 };
            assert_eq!(resample.accuracy, expected, "fold {fold}");
            assert_eq!(resample.kappa, expected, "fold {fold}");
            assert_eq!(resample.repeat, 0);
            assert_eq!(resample.fold, fold);
        }
    }

    #[test]
    fn fold_and_repeat_validation() {
        let full = synthetic_corpus(SYNTHETIC_SEED);
        let ds = full.select(&[0, 1, 600, 601, 200, 201, 800, 801, 400, 401, 1000, 1001]);
        assert!(matches!(
            cv_assignments(&ds, 1, 1, 0),
            Err(MetricsError::BadFolds { folds: 1, rows: 12 })
        ));
        assert!(matches!(
            cv_assignments(&ds, 1, 13, 0),
            Err(MetricsError::BadFolds {
                folds: 13,
                rows: 12
            })
        ));
        // a class of 4 cannot reach 5 folds unless it is leave-one-out
        assert!(matches!(
            cv_assignments(&ds, 1, 5, 0),
            Err(MetricsError::BadFolds { folds: 5, rows: 12 })
        ));
        assert!(cv_assignments(&ds, 1, 4, 0).is_ok());
        assert!(cv_assignments(&ds, 1, 12, 0).is_ok());
        assert!(matches!(
            cv_assignments(&ds, 0, 4, 0),
            Err(MetricsError::BadRepeats)
        ));

        let spec = CompoundSpec {
            algorithm: Algorithm::Tree(TreeParams::default()),
            ..forest_spec(1, 0)
        };
        let (v, s, t) = ctx();
        let options = CvOptions {
            repeats: 1,
            folds: 40,
            seed: 0,
            partition: false,
        };
        assert!(matches!(
            repeated_cv(&ds, &spec, v, s, t, &options),
            Err(MetricsError::BadFolds { .. })
        ));
    }

    #[test]
    fn six_number_summary_uses_linear_interpolation_quantiles() {
        let mut values: Vec<f64> = (1..=50).map(|k| k as f64 / 100.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        values.shuffle(&mut rng);
        let resamples: Vec<Resample<f64>> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Resample {
                repeat: i / 10,
                fold: i % 10,
                accuracy: v,
                kappa: v,
            })
            .collect();
        let summary = summarize_resamples(&resamples).unwrap();
        assert_eq!(summary.resamples, 50);
        for s in [summary.accuracy, summary.kappa] {
            assert!((s.min - 0.01).abs() < 1e-12);
            assert!((s.q1 - 0.1325).abs() < 1e-12);
            assert!((s.median - 0.255).abs() < 1e-12);
            assert!((s.mean - 0.255).abs() < 1e-12);
            assert!((s.q3 - 0.3775).abs() < 1e-12);
            assert!((s.max - 0.50).abs() < 1e-12);
        }
        let text = summary.render();
        assert!(text.contains("resamples: 50"));
        assert!(text.contains("accuracy"));
        assert!(text.contains("0.2550"));
    }

    #[test]
    fn degenerate_summaries_behave() {
        assert!(matches!(
            summarize_resamples::<f64>(&[]),
            Err(MetricsError::Empty)
        ));
        let one = [Resample {
            repeat: 0,
            fold: 0,
            accuracy: 0.75,
            kappa: 0.5,
        }];
        let s = summarize_resamples(&one).unwrap();
        assert_eq!(s.accuracy.min, 0.75);
        assert_eq!(s.accuracy.q1, 0.75);
        assert_eq!(s.accuracy.median, 0.75);
        assert_eq!(s.accuracy.mean, 0.75);
        assert_eq!(s.accuracy.q3, 0.75);
        assert_eq!(s.accuracy.max, 0.75);
        assert_eq!(s.kappa.median, 0.5);
    }
}
