//! Random forest of Gini-impurity trees over bootstrap samples, with
//! majority-vote prediction, out-of-bag error, and impurity-decrease
//! feature importances.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dtree::{count_classes, read_class_counts};
use super::{
    argmax_class, parse_reals, ranked_importance, tagged_values, ClassScores, LearnError,
    LineCursor, SplitNode, TrainingMatrix,
};
use crate::corpus::MaintenanceClass;
use crate::Real;

/// Forest hyperparameters. `mtry` is the number of features sampled at each
/// node; `None` selects ⌊√width⌋. With `bootstrap` off every tree sees the
/// full sample (only useful for diagnostics — the trees coincide).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForestParams {
    pub trees: usize,
    pub mtry: Option<usize>,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 500,
            mtry: None,
            seed: 0,
            bootstrap: true,
        }
    }
}

/// A trained forest. `params.mtry` holds the resolved value actually used.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel<R: Real> {
    pub(crate) trees: Vec<SplitNode<R>>,
    params: ForestParams,
    class_counts: [u32; 3],
    feature_names: Vec<String>,
    importance: Vec<R>,
}

impl<R: Real> ForestModel<R> {
    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn class_counts(&self) -> [u32; 3] {
        self.class_counts
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Normalized mean-impurity-decrease importances, descending.
    pub fn feature_importance(&self) -> Vec<(String, R)> {
        ranked_importance(&self.feature_names, &self.importance)
    }

    /// Predict by majority vote: each tree casts one vote for its leaf's
    /// plurality class, and the scores are the vote shares.
    pub fn predict(&self, x: &[u32]) -> Result<(MaintenanceClass, ClassScores<R>), LearnError> {
        if x.len() != self.feature_names.len() {
            return Err(LearnError::FeatureCount {
                expected: self.feature_names.len(),
                found: x.len(),
            });
        }
        let mut votes = [0u32; 3];
        for tree in &self.trees {
            let scores = ClassScores::<R>::from_counts(*tree.leaf_for(x));
            let class = argmax_class(&scores.probabilities(), &self.class_counts);
            votes[class.index()] += 1;
        }
        let scores = ClassScores::from_counts(votes);
        let class = argmax_class(&scores.probabilities(), &self.class_counts);
        Ok((class, scores))
    }

    /// Out-of-bag error: every row is scored by the majority vote of the
    /// trees whose bootstrap sample missed it. Requires the original
    /// training data (same size and order) and bootstrap sampling.
    pub fn oob_error(&self, data: &TrainingMatrix) -> Result<R, LearnError> {
        if !self.params.bootstrap {
            return Err(LearnError::BadParams(
                "out-of-bag error needs bootstrap sampling".to_string(),
            ));
        }
        if data.width() != self.feature_names.len() {
            return Err(LearnError::FeatureCount {
                expected: self.feature_names.len(),
                found: data.width(),
            });
        }
        if data.class_counts() != self.class_counts {
            return Err(LearnError::BadParams(
                "out-of-bag error needs the original training data".to_string(),
            ));
        }
        let n = data.len();
        let mut votes = vec![[0u32; 3]; n];
        for (i, tree) in self.trees.iter().enumerate() {
            let mut rng = tree_rng(self.params.seed, i);
            let mut in_bag = vec![false; n];
            for row in bootstrap_rows(&mut rng, n) {
                in_bag[row] = true;
            }
            for (row, slot) in votes.iter_mut().enumerate() {
                if !in_bag[row] {
                    let scores = ClassScores::<R>::from_counts(*tree.leaf_for(data.row(row)));
                    let class = argmax_class(&scores.probabilities(), &self.class_counts);
                    slot[class.index()] += 1;
                }
            }
        }
        let mut scored = 0usize;
        let mut wrong = 0usize;
        for (row, tally) in votes.iter().enumerate() {
            if tally.iter().sum::<u32>() == 0 {
                continue;
            }
            let scores = ClassScores::<R>::from_counts(*tally);
            let class = argmax_class(&scores.probabilities(), &self.class_counts);
            scored += 1;
            if class != data.label(row) {
                wrong += 1;
            }
        }
        if scored == 0 {
            return Err(LearnError::BadParams(
                "no out-of-bag votes; grow more trees".to_string(),
            ));
        }
        Ok(R::from_count(wrong) / R::from_count(scored))
    }

    pub(crate) fn write_text(&self, out: &mut String) {
        writeln!(out, "forest").expect("write to string");
        writeln!(
            out,
            "params {} {} {} {}",
            self.params.trees,
            self.params.mtry.expect("model stores the resolved mtry"),
            self.params.seed,
            u8::from(self.params.bootstrap)
        )
        .expect("write to string");
        writeln!(
            out,
            "classes {} {} {}",
            self.class_counts[0], self.class_counts[1], self.class_counts[2]
        )
        .expect("write to string");
        out.push_str("importance");
        for v in &self.importance {
            write!(out, " {v}").expect("write to string");
        }
        out.push('\n');
        for tree in &self.trees {
            tree.write_text(out);
        }
    }

    pub(crate) fn read_text(
        cur: &mut LineCursor<'_>,
        feature_names: &[String],
    ) -> Result<Self, LearnError> {
        cur.expect("forest")?;
        let raw = tagged_values(cur, "params")?;
        let line = cur.line;
        let bad = |message: String| LearnError::Format { line, message };
        if raw.len() != 4 {
            return Err(bad(
                "expected `params trees mtry seed bootstrap`".to_string()
            ));
        }
        let trees: usize = raw[0]
            .parse()
            .map_err(|_| bad(format!("bad tree count `{}`", raw[0])))?;
        let mtry: usize = raw[1]
            .parse()
            .map_err(|_| bad(format!("bad mtry `{}`", raw[1])))?;
        let seed: u64 = raw[2]
            .parse()
            .map_err(|_| bad(format!("bad seed `{}`", raw[2])))?;
        let bootstrap = match raw[3] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("bad bootstrap flag `{other}`"))),
        };
        let class_counts = read_class_counts(cur)?;
        let imp_tokens = tagged_values(cur, "importance")?;
        let imp_line = cur.line;
        if imp_tokens.len() != feature_names.len() {
            return Err(LearnError::Format {
                line: imp_line,
                message: format!(
                    "expected {} importance values, found {}",
                    feature_names.len(),
                    imp_tokens.len()
                ),
            });
        }
        let importance = parse_reals::<R>(&imp_tokens, imp_line)?;
        let mut nodes = Vec::with_capacity(trees);
        for _ in 0..trees {
            nodes.push(SplitNode::read_text(cur, feature_names.len())?);
        }
        Ok(ForestModel {
            trees: nodes,
            params: ForestParams {
                trees,
                mtry: Some(mtry),
                seed,
                bootstrap,
            },
            class_counts,
            feature_names: feature_names.to_vec(),
            importance,
        })
    }
}

fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

fn bootstrap_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Train a forest: each tree gets an independent generator seeded with
/// `seed + tree index`, draws a bootstrap sample (when enabled), and grows
/// an unpruned Gini tree sampling `mtry` candidate features per node.
/// Bit-identical output for a given seed regardless of thread schedule.
pub fn train_forest<R: Real>(
    data: &TrainingMatrix,
    params: &ForestParams,
) -> Result<ForestModel<R>, LearnError> {
    if params.trees < 1 {
        return Err(LearnError::BadParams("trees must be ≥ 1".to_string()));
    }
    let width = data.width();
    let mtry = params
        .mtry
        .unwrap_or_else(|| (width as f64).sqrt().floor() as usize);
    if mtry < 1 || mtry > width {
        return Err(LearnError::BadParams(format!(
            "mtry {mtry} outside 1..={width}"
        )));
    }
    let n = data.len();
    let grown: Vec<(SplitNode<R>, Vec<R>)> = (0..params.trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(params.seed, i);
            let rows: Vec<usize> = if params.bootstrap {
                bootstrap_rows(&mut rng, n)
            } else {
                (0..n).collect()
            };
            let mut importance = vec![R::zero(); width];
            let node = grow_gini(data, &rows, mtry, n, &mut rng, &mut importance);
            (node, importance)
        })
        .collect();
    let mut trees = Vec::with_capacity(params.trees);
    let mut importance = vec![R::zero(); width];
    for (node, local) in grown {
        trees.push(node);
        for (total, v) in importance.iter_mut().zip(local) {
            *total = *total + v;
        }
    }
    Ok(ForestModel {
        trees,
        params: ForestParams {
            mtry: Some(mtry),
            ..*params
        },
        class_counts: data.class_counts(),
        feature_names: data.feature_names().to_vec(),
        importance,
    })
}

fn gini<R: Real>(counts: &[u32; 3], n: usize) -> R {
    let nr = R::from_count(n);
    let mut sum = R::zero();
    for &c in counts {
        let p = R::from_count(c as usize) / nr;
        sum = sum + p * p;
    }
    R::one() - sum
}

/// Grow one Gini tree to purity. Each node samples `mtry` features without
/// replacement (sorted, so only the sampled set — not its order — matters),
/// scans midpoint thresholds, and keeps the largest weighted impurity
/// decrease; ties keep the lowest feature index, then the lowest threshold.
/// Importance accumulates (node size / total size) × decrease per feature.
pub(crate) fn grow_gini<R: Real>(
    data: &TrainingMatrix,
    rows: &[usize],
    mtry: usize,
    n_total: usize,
    rng: &mut ChaCha8Rng,
    importance: &mut [R],
) -> SplitNode<R> {
    let counts = count_classes(data, rows);
    let n = rows.len();
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || n < 2 {
        return SplitNode::Leaf { counts };
    }
    let mut features = rand::seq::index::sample(rng, data.width(), mtry).into_vec();
    features.sort_unstable();

    let parent = gini::<R>(&counts, n);
    let nr = R::from_count(n);
    let tiny = R::from_f64_lossy(1e-12);
    let two = R::from_f64_lossy(2.0);
    let mut best: Option<(usize, R, R)> = None; // (feature, threshold, decrease)
    for &f in &features {
        let mut pairs: Vec<(u32, usize)> = rows
            .iter()
            .map(|&i| (data.row(i)[f], data.label(i).index()))
            .collect();
        pairs.sort_by_key(|p| p.0);
        if pairs[0].0 == pairs[n - 1].0 {
            continue;
        }
        let mut left = [0u32; 3];
        for i in 1..n {
            left[pairs[i - 1].1] += 1;
            if pairs[i].0 == pairs[i - 1].0 {
                continue;
            }
            let right = [
                counts[0] - left[0],
                counts[1] - left[1],
                counts[2] - left[2],
            ];
            let (wl, wr) = (R::from_count(i) / nr, R::from_count(n - i) / nr);
            let decrease = parent - (wl * gini::<R>(&left, i) + wr * gini::<R>(&right, n - i));
            if decrease <= tiny {
                continue;
            }
            if best.as_ref().is_none_or(|b| decrease > b.2) {
                let threshold = (R::from_count(pairs[i - 1].0 as usize)
                    + R::from_count(pairs[i].0 as usize))
                    / two;
                best = Some((f, threshold, decrease));
            }
        }
    }
    let Some((feature, threshold, decrease)) = best else {
        return SplitNode::Leaf { counts };
    };
    importance[feature] =
        importance[feature] + (R::from_count(n) / R::from_count(n_total)) * decrease;
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .copied()
        .partition(|&i| R::from_count(data.row(i)[feature] as usize) <= threshold);
    let left = grow_gini(data, &left_rows, mtry, n_total, rng, importance);
    let right = grow_gini(data, &right_rows, mtry, n_total, rng, importance);
    SplitNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    fn small_params(trees: usize, seed: u64) -> ForestParams {
        ForestParams {
            trees,
            seed,
            ..ForestParams::default()
        }
    }

    #[test]
    fn degenerate_forest_equals_one_direct_gini_tree() {
        let data = fixtures::separable(12, 4);
        let params = ForestParams {
            trees: 1,
            mtry: Some(4),
            seed: 999,
            bootstrap: false,
        };
        let forest = train_forest::<f64>(&data, &params).unwrap();

        // With the full sample and every feature offered at every node, the
        // generator has no influence: the tree is the deterministic Gini
        // tree over the data.
        let rows: Vec<usize> = (0..data.len()).collect();
        let mut importance = vec![0.0; data.width()];
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let direct = grow_gini::<f64>(&data, &rows, 4, data.len(), &mut rng, &mut importance);
        assert_eq!(forest.trees[0], direct);

        let other_seed = train_forest::<f64>(&data, &ForestParams { seed: 7, ..params }).unwrap();
        let (mut a, mut b) = (String::new(), String::new());
        forest.write_text(&mut a);
        other_seed.write_text(&mut b);
        // Only the recorded seed may differ.
        assert_eq!(
            a.replace("params 1 4 999 0", "params"),
            b.replace("params 1 4 7 0", "params")
        );

        let acc: f64 = fixtures::training_accuracy(&data, |x| forest.predict(x).unwrap().0);
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = fixtures::separable(15, 8);
        let a = train_forest::<f64>(&data, &small_params(25, 42)).unwrap();
        let b = train_forest::<f64>(&data, &small_params(25, 42)).unwrap();
        let c = train_forest::<f64>(&data, &small_params(25, 43)).unwrap();
        let (mut ta, mut tb, mut tc) = (String::new(), String::new(), String::new());
        a.write_text(&mut ta);
        b.write_text(&mut tb);
        c.write_text(&mut tc);
        assert_eq!(ta, tb);
        assert_ne!(ta, tc);
    }

    #[test]
    fn out_of_bag_error_is_small_on_separable_data() {
        let mut total = 0.0f64;
        for seed in 0..10 {
            let data = fixtures::separable(20, 100 + seed);
            let model = train_forest::<f64>(&data, &small_params(80, seed)).unwrap();
            total += model.oob_error(&data).unwrap();
        }
        let mean = total / 10.0;
        assert!(mean < 0.05, "mean OOB error {mean}");
    }

    #[test]
    fn out_of_bag_error_requires_bootstrap_and_matching_data() {
        let data = fixtures::separable(10, 3);
        let plain = train_forest::<f64>(
            &data,
            &ForestParams {
                trees: 5,
                bootstrap: false,
                ..ForestParams::default()
            },
        )
        .unwrap();
        assert!(matches!(
            plain.oob_error(&data),
            Err(LearnError::BadParams(_))
        ));

        let model = train_forest::<f64>(&data, &small_params(5, 0)).unwrap();
        let smaller = fixtures::separable(8, 3);
        assert!(model.oob_error(&smaller).is_err());
    }

    #[test]
    fn majority_vote_and_scores_follow_the_trees() {
        let model = ForestModel::<f64> {
            trees: vec![
                SplitNode::Leaf { counts: [5, 0, 0] },
                SplitNode::Leaf { counts: [4, 1, 0] },
                SplitNode::Leaf { counts: [0, 5, 0] },
            ],
            params: ForestParams {
                trees: 3,
                mtry: Some(1),
                seed: 0,
                bootstrap: true,
            },
            class_counts: [10, 10, 10],
            feature_names: vec!["f".to_string()],
            importance: vec![0.0],
        };
        let (class, scores) = model.predict(&[0]).unwrap();
        assert_eq!(class, MaintenanceClass::Corrective);
        let p = scores.probabilities();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p[2], 0.0);

        assert!(matches!(
            model.predict(&[0, 0]),
            Err(LearnError::FeatureCount { .. })
        ));
    }

    #[test]
    fn importances_concentrate_on_informative_features() {
        let data = fixtures::separable(20, 5);
        let model = train_forest::<f64>(&data, &small_params(60, 1)).unwrap();
        let ranked = model.feature_importance();
        let total: f64 = ranked.iter().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let noise = ranked
            .iter()
            .find(|(name, _)| name == "noise")
            .map(|(_, v)| *v)
            .unwrap();
        assert!(noise < 0.05, "noise importance {noise}");
        assert_eq!(ranked.len(), 4);
        assert!(ranked[0].1 >= ranked[1].1 && ranked[1].1 >= ranked[2].1);
    }

    #[test]
    fn model_text_codec_round_trips() {
        let data = fixtures::separable(10, 9);
        let model = train_forest::<f64>(&data, &small_params(12, 77)).unwrap();
        let mut text = String::new();
        model.write_text(&mut text);
        let mut cur = LineCursor::new(&text);
        let back = ForestModel::<f64>::read_text(&mut cur, data.feature_names()).unwrap();
        assert!(cur.at_end());
        assert_eq!(back, model);
        let mut again = String::new();
        back.write_text(&mut again);
        assert_eq!(again, text);
    }

    #[test]
    fn bad_params_are_rejected() {
        let data = fixtures::separable(5, 1);
        for params in [
            ForestParams {
                trees: 0,
                ..ForestParams::default()
            },
            ForestParams {
                mtry: Some(0),
                ..ForestParams::default()
            },
            ForestParams {
                mtry: Some(5),
                ..ForestParams::default()
            },
        ] {
            assert!(matches!(
                train_forest::<f64>(&data, &params),
                Err(LearnError::BadParams(_))
            ));
        }
    }
}
