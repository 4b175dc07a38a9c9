//! Evaluation machinery: confusion matrices, the headline agreement
//! statistics (accuracy, Cohen's kappa, no-information rate with an exact
//! binomial test), rater-agreement confidence intervals, and repeated
//! stratified cross-validation.

mod cv;

pub use cv::{
    cv_assignments, repeated_cv, summarize_resamples, CvOptions, Resample, ResampleSummary,
    SixNumber,
};

use std::fmt::Write as _;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::compound::CompoundError;
use crate::corpus::MaintenanceClass;
use crate::Real;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no observations")]
    Empty,
    #[error("{predictions} predictions against {references} reference labels")]
    LengthMismatch {
        predictions: usize,
        references: usize,
    },
    #[error("successes {successes} exceed trials {trials}")]
    BadCount { successes: u64, trials: u64 },
    #[error("null proportion {p0} must be strictly between 0 and 1")]
    BadProportion { p0: f64 },
    #[error("cannot deal {rows} rows into {folds} stratified folds")]
    BadFolds { folds: usize, rows: usize },
    #[error("repeats must be at least 1")]
    BadRepeats,
    #[error(transparent)]
    Compound(#[from] CompoundError),
}

/// Class order used when printing tables, chosen to match the usual
/// alphabetical presentation. Internal storage stays in canonical order.
pub const DISPLAY_ORDER: [MaintenanceClass; 3] = [
    MaintenanceClass::Adaptive,
    MaintenanceClass::Corrective,
    MaintenanceClass::Perfective,
];

/// A 3x3 contingency table of predicted against reference classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// `counts[predicted.index()][reference.index()]`, canonical order.
    counts: [[u32; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one (predicted, reference) observation.
    pub fn add(&mut self, predicted: MaintenanceClass, reference: MaintenanceClass) {
        self.counts[predicted.index()][reference.index()] += 1;
    }

    /// Build from (predicted, reference) pairs.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (MaintenanceClass, MaintenanceClass)>,
    {
        let mut m = Self::new();
        for (predicted, reference) in pairs {
            m.add(predicted, reference);
        }
        m
    }

    /// Build from parallel slices; the slices must be equally long and
    /// non-empty.
    pub fn from_predictions(
        predicted: &[MaintenanceClass],
        reference: &[MaintenanceClass],
    ) -> Result<Self, MetricsError> {
        if predicted.len() != reference.len() {
            return Err(MetricsError::LengthMismatch {
                predictions: predicted.len(),
                references: reference.len(),
            });
        }
        if predicted.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(Self::from_pairs(
            predicted.iter().copied().zip(reference.iter().copied()),
        ))
    }

    /// Build from rows given in [`DISPLAY_ORDER`]: `rows[i][j]` is the
    /// number of commits predicted as `DISPLAY_ORDER[i]` whose reference
    /// label is `DISPLAY_ORDER[j]`.
    pub fn from_table(rows: [[u32; 3]; 3]) -> Self {
        let mut m = Self::new();
        for (i, pred) in DISPLAY_ORDER.iter().enumerate() {
            for (j, refr) in DISPLAY_ORDER.iter().enumerate() {
                m.counts[pred.index()][refr.index()] = rows[i][j];
            }
        }
        m
    }

    /// The table in [`DISPLAY_ORDER`], inverse of [`ConfusionMatrix::from_table`].
    pub fn table(&self) -> [[u32; 3]; 3] {
        let mut rows = [[0u32; 3]; 3];
        for (i, pred) in DISPLAY_ORDER.iter().enumerate() {
            for (j, refr) in DISPLAY_ORDER.iter().enumerate() {
                rows[i][j] = self.counts[pred.index()][refr.index()];
            }
        }
        rows
    }

    pub fn cell(&self, predicted: MaintenanceClass, reference: MaintenanceClass) -> u32 {
        self.counts[predicted.index()][reference.index()]
    }

    /// Total predicted as `class`.
    pub fn row_sum(&self, class: MaintenanceClass) -> u64 {
        self.counts[class.index()]
            .iter()
            .map(|&c| u64::from(c))
            .sum()
    }

    /// Total whose reference label is `class`.
    pub fn col_sum(&self, class: MaintenanceClass) -> u64 {
        self.counts
            .iter()
            .map(|row| u64::from(row[class.index()]))
            .sum()
    }

    /// Correctly classified observations.
    pub fn trace(&self) -> u64 {
        MaintenanceClass::ALL
            .iter()
            .map(|&c| u64::from(self.cell(c, c)))
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| u64::from(c)).sum()
    }
}

impl Serialize for ConfusionMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("ConfusionMatrix", 2)?;
        st.serialize_field("classes", &DISPLAY_ORDER.map(MaintenanceClass::name))?;
        st.serialize_field("rows", &self.table())?;
        st.end()
    }
}

fn serialize_rates<R, S>(rates: &[Option<R>; 3], serializer: S) -> Result<S::Ok, S::Error>
where
    R: Real + Serialize,
    S: Serializer,
{
    let mut map = serializer.serialize_map(Some(3))?;
    for class in MaintenanceClass::ALL {
        map.serialize_entry(class.name(), &rates[class.index()])?;
    }
    map.end()
}

/// Headline statistics for one confusion matrix. Per-class rates are
/// `None` when their denominator is zero (an absent class has no rate,
/// rather than a zero one).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvaluationReport<R: Real> {
    pub matrix: ConfusionMatrix,
    pub n: u64,
    pub accuracy: R,
    /// Cohen's kappa; defined as 1 when expected agreement is already 1.
    pub kappa: R,
    /// Accuracy of always predicting the most prevalent reference class.
    pub no_information_rate: R,
    /// One-sided exact binomial p-value for accuracy exceeding the
    /// no-information rate; 1 when that rate is already 1.
    pub p_value: R,
    /// Per-class recall, indexed canonically.
    #[serde(serialize_with = "serialize_rates")]
    pub recall: [Option<R>; 3],
    /// Per-class precision, indexed canonically.
    #[serde(serialize_with = "serialize_rates")]
    pub precision: [Option<R>; 3],
}

pub(crate) fn to_f64<R: Real>(x: R) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

impl<R: Real> EvaluationReport<R> {
    /// Fixed-width text rendering of the matrix and statistics.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let names = DISPLAY_ORDER.map(MaintenanceClass::name);
        out.push_str("confusion matrix (rows: predicted, columns: reference)\n");
        writeln!(
            out,
            "{:>14}{:>12}{:>12}{:>12}",
            "", names[0], names[1], names[2]
        )
        .expect("write to string");
        let table = self.table_rows();
        for (name, row) in names.iter().zip(table) {
            writeln!(
                out,
                "{:>14}{:>12}{:>12}{:>12}",
                name, row[0], row[1], row[2]
            )
            .expect("write to string");
        }
        out.push('\n');
        writeln!(out, "observations          {}", self.n).expect("write to string");
        writeln!(
            out,
            "accuracy              {:.2}%",
            100.0 * to_f64(self.accuracy)
        )
        .expect("write to string");
        writeln!(out, "kappa                 {:.4}", to_f64(self.kappa)).expect("write to string");
        writeln!(
            out,
            "no-information rate   {:.2}%",
            100.0 * to_f64(self.no_information_rate)
        )
        .expect("write to string");
        writeln!(out, "p-value [acc > NIR]   {:.2e}", to_f64(self.p_value))
            .expect("write to string");
        out.push('\n');
        writeln!(out, "{:<12}{:>11}{:>11}", "class", "precision", "recall")
            .expect("write to string");
        for class in DISPLAY_ORDER {
            writeln!(
                out,
                "{:<12}{:>11}{:>11}",
                class.name(),
                render_rate(self.precision[class.index()]),
                render_rate(self.recall[class.index()]),
            )
            .expect("write to string");
        }
        out
    }

    fn table_rows(&self) -> [[u32; 3]; 3] {
        self.matrix.table()
    }
}

fn render_rate<R: Real>(rate: Option<R>) -> String {
    rate.map_or_else(|| "-".to_string(), |v| format!("{:.2}%", 100.0 * to_f64(v)))
}

/// Compute the full report for a non-empty confusion matrix.
pub fn evaluate<R: Real>(matrix: &ConfusionMatrix) -> Result<EvaluationReport<R>, MetricsError> {
    let n = matrix.total();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let nf = n as f64;
    let trace = matrix.trace();
    let accuracy = trace as f64 / nf;

    let mut expected_num: u128 = 0;
    let mut max_col: u64 = 0;
    for class in MaintenanceClass::ALL {
        expected_num += u128::from(matrix.row_sum(class)) * u128::from(matrix.col_sum(class));
        max_col = max_col.max(matrix.col_sum(class));
    }
    let expected_den = u128::from(n) * u128::from(n);
    let kappa = if expected_num == expected_den {
        1.0
    } else {
        (trace as f64 * nf - expected_num as f64) / (expected_den as f64 - expected_num as f64)
    };

    let nir = max_col as f64 / nf;
    let p_value = if max_col == n {
        1.0
    } else {
        binomial_test_greater(trace, n, nir)
            .expect("trace <= n and the no-information rate is strictly inside (0, 1)")
    };

    let mut recall = [None; 3];
    let mut precision = [None; 3];
    for class in MaintenanceClass::ALL {
        let i = class.index();
        let diagonal = f64::from(matrix.cell(class, class));
        let col = matrix.col_sum(class);
        let row = matrix.row_sum(class);
        if col > 0 {
            recall[i] = Some(R::from_f64_lossy(diagonal / col as f64));
        }
        if row > 0 {
            precision[i] = Some(R::from_f64_lossy(diagonal / row as f64));
        }
    }

    Ok(EvaluationReport {
        matrix: *matrix,
        n,
        accuracy: R::from_f64_lossy(accuracy),
        kappa: R::from_f64_lossy(kappa),
        no_information_rate: R::from_f64_lossy(nir),
        p_value: R::from_f64_lossy(p_value),
        recall,
        precision,
    })
}

/// Exact one-sided binomial tail P[X >= successes] for X ~ B(trials, p0),
/// evaluated in log space so large counts stay stable. `successes == 0`
/// returns exactly 1.
pub fn binomial_test_greater(successes: u64, trials: u64, p0: f64) -> Result<f64, MetricsError> {
    if trials == 0 {
        return Err(MetricsError::Empty);
    }
    if successes > trials {
        return Err(MetricsError::BadCount { successes, trials });
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(MetricsError::BadProportion { p0 });
    }
    if successes == 0 {
        return Ok(1.0);
    }
    let n = usize::try_from(trials).map_err(|_| MetricsError::BadCount { successes, trials })?;
    let s = successes as usize;
    let mut lnfact = vec![0.0f64; n + 1];
    for k in 1..=n {
        lnfact[k] = lnfact[k - 1] + (k as f64).ln();
    }
    let (lp, lq) = (p0.ln(), (1.0 - p0).ln());
    let log_terms: Vec<f64> = (s..=n)
        .map(|k| lnfact[n] - lnfact[k] - lnfact[n - k] + k as f64 * lp + (n - k) as f64 * lq)
        .collect();
    let peak = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|&t| (t - peak).exp()).sum();
    Ok((peak + sum.ln()).exp().min(1.0))
}

/// A proportion of agreements with its Wald 95% interval, all expressed in
/// percent rounded to one decimal place. The interval is built from the
/// rounded numbers so the printed figures are self-consistent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AgreementSummary {
    pub percent: f64,
    pub margin: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn proportion_agreement_ci(
    agreements: u64,
    total: u64,
) -> Result<AgreementSummary, MetricsError> {
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    if agreements > total {
        return Err(MetricsError::BadCount {
            successes: agreements,
            trials: total,
        });
    }
    let estimate = agreements as f64 / total as f64;
    let margin = 1.96 * (estimate * (1.0 - estimate) / total as f64).sqrt();
    let to_tenth = |x: f64| (x * 1000.0).round() / 10.0;
    let percent = to_tenth(estimate);
    let margin = to_tenth(margin);
    Ok(AgreementSummary {
        percent,
        margin,
        lower: percent - margin,
        upper: percent + margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn champion_matrix() -> ConfusionMatrix {
        ConfusionMatrix::from_table([[28, 5, 5], [6, 63, 14], [3, 7, 41]])
    }

    fn baseline_matrix() -> ConfusionMatrix {
        ConfusionMatrix::from_table([[18, 2, 16], [18, 72, 37], [1, 1, 7]])
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn champion_matrix_statistics_match_hand_computations() {
        let m = champion_matrix();
        assert_eq!(m.total(), 172);
        assert_eq!(m.trace(), 132);
        assert_eq!(m.col_sum(MaintenanceClass::Adaptive), 37);
        assert_eq!(m.col_sum(MaintenanceClass::Corrective), 75);
        assert_eq!(m.col_sum(MaintenanceClass::Perfective), 60);

        let r = evaluate::<f64>(&m).unwrap();
        assert!(close(r.accuracy, 132.0 / 172.0));
        // expected agreement = (38*37 + 83*75 + 51*60) / 172^2 = 10691/29584
        assert!(close(r.kappa, 12013.0 / 18893.0));
        assert!(close(r.no_information_rate, 75.0 / 172.0));
        assert!(r.p_value < 1e-12);

        let recall = |c: MaintenanceClass| r.recall[c.index()].unwrap();
        let precision = |c: MaintenanceClass| r.precision[c.index()].unwrap();
        assert!(close(recall(MaintenanceClass::Adaptive), 28.0 / 37.0));
        assert!(close(recall(MaintenanceClass::Corrective), 63.0 / 75.0));
        assert!(close(recall(MaintenanceClass::Perfective), 41.0 / 60.0));
        assert!(close(precision(MaintenanceClass::Adaptive), 28.0 / 38.0));
        assert!(close(precision(MaintenanceClass::Corrective), 63.0 / 83.0));
        assert!(close(precision(MaintenanceClass::Perfective), 41.0 / 51.0));
    }

    #[test]
    fn baseline_matrix_statistics_match_hand_computations() {
        let m = baseline_matrix();
        assert_eq!(m.total(), 172);
        assert_eq!(m.trace(), 97);
        // the reference column totals are the same test split
        assert_eq!(m.col_sum(MaintenanceClass::Adaptive), 37);
        assert_eq!(m.col_sum(MaintenanceClass::Corrective), 75);
        assert_eq!(m.col_sum(MaintenanceClass::Perfective), 60);

        let r = evaluate::<f64>(&m).unwrap();
        assert!(close(r.accuracy, 97.0 / 172.0));
        // expected agreement = (36*37 + 127*75 + 9*60) / 172^2 = 11397/29584
        assert!(close(r.kappa, 5287.0 / 18187.0));
        assert!((2.5e-4..1.0e-3).contains(&r.p_value));

        let recall = |c: MaintenanceClass| r.recall[c.index()].unwrap();
        assert!(close(recall(MaintenanceClass::Adaptive), 18.0 / 37.0));
        assert!(close(recall(MaintenanceClass::Corrective), 72.0 / 75.0));
        assert!(close(recall(MaintenanceClass::Perfective), 7.0 / 60.0));
    }

    #[test]
    fn tables_and_accessors_round_trip() {
        let rows = [[28, 5, 5], [6, 63, 14], [3, 7, 41]];
        let m = ConfusionMatrix::from_table(rows);
        assert_eq!(m.table(), rows);
        // display rows are predicted=adaptive, corrective, perfective
        assert_eq!(
            m.cell(MaintenanceClass::Adaptive, MaintenanceClass::Perfective),
            5
        );
        assert_eq!(
            m.cell(MaintenanceClass::Perfective, MaintenanceClass::Adaptive),
            3
        );
        assert_eq!(m.row_sum(MaintenanceClass::Corrective), 83);

        let pairs = [
            (MaintenanceClass::Corrective, MaintenanceClass::Corrective),
            (MaintenanceClass::Corrective, MaintenanceClass::Adaptive),
            (MaintenanceClass::Adaptive, MaintenanceClass::Adaptive),
        ];
        let built = ConfusionMatrix::from_pairs(pairs);
        let (pred, refr): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        assert_eq!(
            ConfusionMatrix::from_predictions(&pred, &refr).unwrap(),
            built
        );
        assert_eq!(
            built.cell(MaintenanceClass::Corrective, MaintenanceClass::Adaptive),
            1
        );
        assert_eq!(built.total(), 3);

        assert!(matches!(
            ConfusionMatrix::from_predictions(&pred, &refr[..2]),
            Err(MetricsError::LengthMismatch {
                predictions: 3,
                references: 2
            })
        ));
        assert!(matches!(
            ConfusionMatrix::from_predictions(&[], &[]),
            Err(MetricsError::Empty)
        ));
        assert!(matches!(
            evaluate::<f64>(&ConfusionMatrix::new()),
            Err(MetricsError::Empty)
        ));
    }

    #[test]
    fn degenerate_single_class_matrices_evaluate_cleanly() {
        // everything predicted and labeled corrective: perfect agreement,
        // but no information either
        let mut m = ConfusionMatrix::new();
        for _ in 0..9 {
            m.add(MaintenanceClass::Corrective, MaintenanceClass::Corrective);
        }
        let r = evaluate::<f64>(&m).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.no_information_rate, 1.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.recall[MaintenanceClass::Corrective.index()], Some(1.0));
        assert_eq!(r.recall[MaintenanceClass::Adaptive.index()], None);
        assert_eq!(r.precision[MaintenanceClass::Perfective.index()], None);

        // a single wrong prediction: zero accuracy and zero kappa
        let mut m = ConfusionMatrix::new();
        m.add(MaintenanceClass::Corrective, MaintenanceClass::Perfective);
        let r = evaluate::<f64>(&m).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.kappa, 0.0);
        assert_eq!(r.no_information_rate, 1.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.recall[MaintenanceClass::Perfective.index()], Some(0.0));
        assert_eq!(r.precision[MaintenanceClass::Corrective.index()], Some(0.0));
    }

    #[test]
    fn kappa_never_exceeds_accuracy_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut rows = [[0u32; 3]; 3];
            for row in &mut rows {
                for cell in row.iter_mut() {
                    *cell = rng.random_range(0..40);
                }
            }
            let m = ConfusionMatrix::from_table(rows);
            if m.total() == 0 {
                continue;
            }
            let r = evaluate::<f64>(&m).unwrap();
            assert!(r.kappa <= r.accuracy + 1e-12, "{rows:?}");
            assert!((-1.0..=1.0).contains(&r.kappa));
        }
    }

    #[test]
    fn accuracy_decomposes_into_recall_weighted_by_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut rows = [[0u32; 3]; 3];
            for row in &mut rows {
                for cell in row.iter_mut() {
                    *cell = rng.random_range(0..25);
                }
            }
            let m = ConfusionMatrix::from_table(rows);
            if m.total() == 0 {
                continue;
            }
            let r = evaluate::<f64>(&m).unwrap();
            let n = m.total() as f64;
            let weighted: f64 = MaintenanceClass::ALL
                .iter()
                .filter_map(|&c| r.recall[c.index()].map(|rec| rec * m.col_sum(c) as f64 / n))
                .sum();
            assert!(close(r.accuracy, weighted));
        }
    }

    #[test]
    fn exact_binomial_tail_properties() {
        // all trials succeeding has probability p^n
        for n in [1u64, 5, 20] {
            let p = binomial_test_greater(n, n, 0.5).unwrap();
            assert!((p - 0.5f64.powi(n as i32)).abs() < 1e-15);
        }
        assert_eq!(binomial_test_greater(0, 50, 0.3).unwrap(), 1.0);

        // the tail shrinks as the threshold rises
        let mut last = 1.0f64;
        for s in 0..=30 {
            let p = binomial_test_greater(s, 30, 0.436).unwrap();
            assert!(p <= last + 1e-12);
            last = p;
        }

        assert!(matches!(
            binomial_test_greater(3, 0, 0.5),
            Err(MetricsError::Empty)
        ));
        assert!(matches!(
            binomial_test_greater(5, 4, 0.5),
            Err(MetricsError::BadCount { .. })
        ));
        assert!(matches!(
            binomial_test_greater(1, 4, 0.0),
            Err(MetricsError::BadProportion { .. })
        ));
        assert!(matches!(
            binomial_test_greater(1, 4, 1.0),
            Err(MetricsError::BadProportion { .. })
        ));
    }

    #[test]
    fn agreement_intervals_match_hand_computations() {
        let a = proportion_agreement_ci(104, 110).unwrap();
        assert!(close(a.percent, 94.5));
        assert!(close(a.margin, 4.2));
        assert!((a.lower - 90.3).abs() < 1e-9);
        assert!((a.upper - 98.7).abs() < 1e-9);

        let b = proportion_agreement_ci(55, 110).unwrap();
        assert!(close(b.percent, 50.0));
        assert!(close(b.margin, 9.3));
        assert!((b.lower - 40.7).abs() < 1e-9);
        assert!((b.upper - 59.3).abs() < 1e-9);

        assert!(matches!(
            proportion_agreement_ci(0, 0),
            Err(MetricsError::Empty)
        ));
        assert!(matches!(
            proportion_agreement_ci(5, 4),
            Err(MetricsError::BadCount { .. })
        ));
    }

    #[test]
    fn report_rendering_shows_the_headline_numbers() {
        let r = evaluate::<f64>(&champion_matrix()).unwrap();
        let text = r.render();
        assert!(text.contains("accuracy              76.74%"));
        assert!(text.contains("kappa                 0.6358"));
        assert!(text.contains("no-information rate   43.60%"));
        assert!(text.contains("observations          172"));
        assert!(text.contains("adaptive"));
        assert!(text.contains("84.00%"));

        // absent classes render as a dash instead of a bogus rate
        let mut m = ConfusionMatrix::new();
        m.add(MaintenanceClass::Corrective, MaintenanceClass::Corrective);
        let degenerate = evaluate::<f64>(&m).unwrap().render();
        assert!(degenerate.contains('-'));

        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"accuracy\""));
        assert!(json.contains("\"classes\":[\"adaptive\",\"corrective\",\"perfective\"]"));
        assert!(json.contains("\"recall\":{\"corrective\""));
    }
}
