//! Multinomial gradient boosting: shallow regression trees fit to softmax
//! residuals, one tree per class per stage, with shrinkage and a recorded
//! training-deviance trace.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::dtree::read_class_counts;
use super::{
    argmax_class, parse_reals, ranked_importance, tagged_values, ClassScores, LearnError,
    LineCursor, TrainingMatrix,
};
use crate::corpus::MaintenanceClass;
use crate::Real;

/// Boosting hyperparameters. `seed` is accepted for interface uniformity
/// but unused: the procedure has no random element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostParams<R: Real> {
    pub stages: usize,
    pub depth: usize,
    pub shrinkage: R,
    pub seed: u64,
}

impl<R: Real> Default for BoostParams<R> {
    fn default() -> Self {
        BoostParams {
            stages: 150,
            depth: 3,
            shrinkage: R::from_f64_lossy(0.1),
            seed: 0,
        }
    }
}

/// Regression tree node: leaves hold the fitted additive step.
#[derive(Clone, Debug, PartialEq)]
enum RegNode<R: Real> {
    Split {
        feature: usize,
        threshold: R,
        left: Box<RegNode<R>>,
        right: Box<RegNode<R>>,
    },
    Leaf {
        value: R,
    },
}

impl<R: Real> RegNode<R> {
    fn value_for(&self, x: &[u32]) -> R {
        match self {
            RegNode::Leaf { value } => *value,
            RegNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if R::from_count(x[*feature] as usize) <= *threshold {
                    left.value_for(x)
                } else {
                    right.value_for(x)
                }
            }
        }
    }

    fn write_text(&self, out: &mut String) {
        match self {
            RegNode::Leaf { value } => writeln!(out, "V {value}").expect("write to string"),
            RegNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                writeln!(out, "S {feature} {threshold}").expect("write to string");
                left.write_text(out);
                right.write_text(out);
            }
        }
    }

    fn read_text(cur: &mut LineCursor<'_>, width: usize) -> Result<Self, LearnError> {
        let line = cur.next()?;
        let lineno = cur.line;
        let bad = |message: String| LearnError::Format {
            line: lineno,
            message,
        };
        let mut parts = line.split(' ');
        match parts.next() {
            Some("V") => {
                let value = parts
                    .next()
                    .and_then(R::parse_text)
                    .ok_or_else(|| bad(format!("bad leaf value in `{line}`")))?;
                if parts.next().is_some() {
                    return Err(bad(format!("trailing tokens in `{line}`")));
                }
                Ok(RegNode::Leaf { value })
            }
            Some("S") => {
                let feature: usize = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(format!("bad split line `{line}`")))?;
                if feature >= width {
                    return Err(bad(format!(
                        "feature index {feature} out of range (width {width})"
                    )));
                }
                let threshold = parts
                    .next()
                    .and_then(R::parse_text)
                    .ok_or_else(|| bad(format!("bad threshold in `{line}`")))?;
                if parts.next().is_some() {
                    return Err(bad(format!("trailing tokens in `{line}`")));
                }
                let left = Box::new(RegNode::read_text(cur, width)?);
                let right = Box::new(RegNode::read_text(cur, width)?);
                Ok(RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                })
            }
            _ => Err(bad(format!("expected node line, found `{line}`"))),
        }
    }
}

/// A trained boosting model: class-prior baseline scores plus `stages`
/// triples of regression trees, applied with shrinkage.
#[derive(Clone, Debug, PartialEq)]
pub struct BoostModel<R: Real> {
    f0: [R; 3],
    stages: Vec<[RegNode<R>; 3]>,
    params: BoostParams<R>,
    class_counts: [u32; 3],
    feature_names: Vec<String>,
    importance: Vec<R>,
    deviance: Vec<R>,
}

impl<R: Real> BoostModel<R> {
    pub fn params(&self) -> &BoostParams<R> {
        &self.params
    }

    pub fn class_counts(&self) -> [u32; 3] {
        self.class_counts
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Mean training deviance (−ln p of the true class) before any stage
    /// and after each one: `stages + 1` values.
    pub fn deviance_trace(&self) -> &[R] {
        &self.deviance
    }

    /// Normalized squared-error-reduction importances, descending.
    pub fn feature_importance(&self) -> Vec<(String, R)> {
        ranked_importance(&self.feature_names, &self.importance)
    }

    pub fn predict(&self, x: &[u32]) -> Result<(MaintenanceClass, ClassScores<R>), LearnError> {
        if x.len() != self.feature_names.len() {
            return Err(LearnError::FeatureCount {
                expected: self.feature_names.len(),
                found: x.len(),
            });
        }
        let mut f = self.f0;
        for stage in &self.stages {
            for (k, tree) in stage.iter().enumerate() {
                f[k] = f[k] + self.params.shrinkage * tree.value_for(x);
            }
        }
        let probs = softmax(&f);
        let scores = ClassScores::from_raw(probs);
        let class = argmax_class(&scores.probabilities(), &self.class_counts);
        Ok((class, scores))
    }

    pub(crate) fn write_text(&self, out: &mut String) {
        writeln!(out, "boost").expect("write to string");
        writeln!(
            out,
            "params {} {} {} {}",
            self.params.stages, self.params.depth, self.params.shrinkage, self.params.seed
        )
        .expect("write to string");
        writeln!(
            out,
            "classes {} {} {}",
            self.class_counts[0], self.class_counts[1], self.class_counts[2]
        )
        .expect("write to string");
        writeln!(out, "f0 {} {} {}", self.f0[0], self.f0[1], self.f0[2]).expect("write to string");
        out.push_str("importance");
        for v in &self.importance {
            write!(out, " {v}").expect("write to string");
        }
        out.push('\n');
        out.push_str("deviance");
        for v in &self.deviance {
            write!(out, " {v}").expect("write to string");
        }
        out.push('\n');
        for stage in &self.stages {
            for tree in stage {
                tree.write_text(out);
            }
        }
    }

    pub(crate) fn read_text(
        cur: &mut LineCursor<'_>,
        feature_names: &[String],
    ) -> Result<Self, LearnError> {
        cur.expect("boost")?;
        let raw = tagged_values(cur, "params")?;
        let line = cur.line;
        let bad = |message: String| LearnError::Format { line, message };
        if raw.len() != 4 {
            return Err(bad(
                "expected `params stages depth shrinkage seed`".to_string()
            ));
        }
        let stages: usize = raw[0]
            .parse()
            .map_err(|_| bad(format!("bad stage count `{}`", raw[0])))?;
        let depth: usize = raw[1]
            .parse()
            .map_err(|_| bad(format!("bad depth `{}`", raw[1])))?;
        let shrinkage =
            R::parse_text(raw[2]).ok_or_else(|| bad(format!("bad shrinkage `{}`", raw[2])))?;
        let seed: u64 = raw[3]
            .parse()
            .map_err(|_| bad(format!("bad seed `{}`", raw[3])))?;
        let class_counts = read_class_counts(cur)?;
        let f0_tokens = tagged_values(cur, "f0")?;
        let f0_vals = parse_reals::<R>(&f0_tokens, cur.line)?;
        if f0_vals.len() != 3 {
            return Err(LearnError::Format {
                line: cur.line,
                message: "expected three baseline scores".to_string(),
            });
        }
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
        let dev_tokens = tagged_values(cur, "deviance")?;
        let dev_line = cur.line;
        if dev_tokens.len() != stages + 1 {
            return Err(LearnError::Format {
                line: dev_line,
                message: format!(
                    "expected {} deviance values, found {}",
                    stages + 1,
                    dev_tokens.len()
                ),
            });
        }
        let deviance = parse_reals::<R>(&dev_tokens, dev_line)?;
        let mut stage_trees = Vec::with_capacity(stages);
        for _ in 0..stages {
            let a = RegNode::read_text(cur, feature_names.len())?;
            let b = RegNode::read_text(cur, feature_names.len())?;
            let c = RegNode::read_text(cur, feature_names.len())?;
            stage_trees.push([a, b, c]);
        }
        Ok(BoostModel {
            f0: [f0_vals[0], f0_vals[1], f0_vals[2]],
            stages: stage_trees,
            params: BoostParams {
                stages,
                depth,
                shrinkage,
                seed,
            },
            class_counts,
            feature_names: feature_names.to_vec(),
            importance,
            deviance,
        })
    }
}

fn softmax<R: Real>(f: &[R; 3]) -> [R; 3] {
    let mx = f[0].max(f[1]).max(f[2]);
    let e = [(f[0] - mx).exp(), (f[1] - mx).exp(), (f[2] - mx).exp()];
    let sum = e[0] + e[1] + e[2];
    [e[0] / sum, e[1] / sum, e[2] / sum]
}

/// Train a multinomial boosting model. Each stage fits one depth-limited
/// least-squares tree per class to the residuals (one-hot label minus
/// current softmax probability) and adds its leaf steps with shrinkage.
/// Deterministic; if any score ever leaves the finite range, training
/// aborts naming the 1-based stage.
pub fn train_boost<R: Real>(
    data: &TrainingMatrix,
    params: &BoostParams<R>,
) -> Result<BoostModel<R>, LearnError> {
    if params.depth < 1 {
        return Err(LearnError::BadParams("depth must be ≥ 1".to_string()));
    }
    let nu = params.shrinkage.to_f64().unwrap_or(f64::NAN);
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(LearnError::BadParams(format!(
            "shrinkage {nu} outside (0, 1]"
        )));
    }
    let n = data.len();
    let width = data.width();
    let class_counts = data.class_counts();
    let nr = R::from_count(n);

    // Baseline: log prior per class; −30 stands in for ln 0 on absent classes.
    let f0 = class_counts.map(|c| {
        if c == 0 {
            R::from_f64_lossy(-30.0)
        } else {
            (R::from_count(c as usize) / nr).ln()
        }
    });
    let mut f: Vec<[R; 3]> = vec![f0; n];
    let mut probs: Vec<[R; 3]> = f.iter().map(softmax).collect();
    let mut deviance = Vec::with_capacity(params.stages + 1);
    deviance.push(mean_deviance(data, &probs));
    let mut importance = vec![R::zero(); width];
    let mut stages = Vec::with_capacity(params.stages);
    let all_rows: Vec<usize> = (0..n).collect();

    for stage in 1..=params.stages {
        let residuals: Vec<[R; 3]> = (0..n)
            .map(|i| {
                let y = data.label(i).index();
                let mut r = probs[i].map(|p| R::zero() - p);
                r[y] = r[y] + R::one();
                r
            })
            .collect();
        let fitted: Vec<(RegNode<R>, Vec<R>)> = (0..3usize)
            .into_par_iter()
            .map(|k| {
                let rk: Vec<R> = residuals.iter().map(|r| r[k]).collect();
                let mut local = vec![R::zero(); width];
                let tree = grow_sse(data, &all_rows, &rk, params.depth, &mut local);
                (tree, local)
            })
            .collect();
        let mut triple = Vec::with_capacity(3);
        for (tree, local) in fitted {
            for (total, v) in importance.iter_mut().zip(local) {
                *total = *total + v;
            }
            triple.push(tree);
        }
        let triple: [RegNode<R>; 3] = triple.try_into().expect("three class trees");
        for (i, fi) in f.iter_mut().enumerate() {
            let x = data.row(i);
            for (k, tree) in triple.iter().enumerate() {
                fi[k] = fi[k] + params.shrinkage * tree.value_for(x);
            }
            if fi.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::NonFinite { stage });
            }
        }
        probs = f.iter().map(softmax).collect();
        deviance.push(mean_deviance(data, &probs));
        stages.push(triple);
    }

    Ok(BoostModel {
        f0,
        stages,
        params: *params,
        class_counts,
        feature_names: data.feature_names().to_vec(),
        importance,
        deviance,
    })
}

fn mean_deviance<R: Real>(data: &TrainingMatrix, probs: &[[R; 3]]) -> R {
    let mut total = R::zero();
    for (i, p) in probs.iter().enumerate() {
        total = total - p[data.label(i).index()].ln();
    }
    total / R::from_count(data.len())
}

/// Depth-limited least-squares regression tree on one class's residuals.
/// Splits maximize the squared-error reduction (must exceed 1e-12); ties
/// keep the lowest feature index, then the lowest threshold. Leaves carry
/// the one-step multinomial update γ = (2/3)·Σr / Σ|r|(1−|r|), zero when
/// the denominator vanishes.
fn grow_sse<R: Real>(
    data: &TrainingMatrix,
    rows: &[usize],
    residuals: &[R],
    depth_left: usize,
    importance: &mut [R],
) -> RegNode<R> {
    let n = rows.len();
    if depth_left == 0 || n < 2 {
        return RegNode::Leaf {
            value: gamma(rows, residuals),
        };
    }
    let sum: R = rows.iter().map(|&i| residuals[i]).sum();
    let nr = R::from_count(n);
    let base = sum * sum / nr;
    let tiny = R::from_f64_lossy(1e-12);
    let two = R::from_f64_lossy(2.0);
    let mut best: Option<(usize, R, R)> = None; // (feature, threshold, decrease)
    for f in 0..data.width() {
        let mut pairs: Vec<(u32, R)> = rows
            .iter()
            .map(|&i| (data.row(i)[f], residuals[i]))
            .collect();
        pairs.sort_by_key(|p| p.0);
        if pairs[0].0 == pairs[n - 1].0 {
            continue;
        }
        let mut left_sum = R::zero();
        for i in 1..n {
            left_sum = left_sum + pairs[i - 1].1;
            if pairs[i].0 == pairs[i - 1].0 {
                continue;
            }
            let right_sum = sum - left_sum;
            // SSE reduction: Σ_left²/n_left + Σ_right²/n_right − Σ²/n.
            let decrease = left_sum * left_sum / R::from_count(i)
                + right_sum * right_sum / R::from_count(n - i)
                - base;
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
        return RegNode::Leaf {
            value: gamma(rows, residuals),
        };
    };
    importance[feature] = importance[feature] + decrease;
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .copied()
        .partition(|&i| R::from_count(data.row(i)[feature] as usize) <= threshold);
    let left = grow_sse(data, &left_rows, residuals, depth_left - 1, importance);
    let right = grow_sse(data, &right_rows, residuals, depth_left - 1, importance);
    RegNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn gamma<R: Real>(rows: &[usize], residuals: &[R]) -> R {
    let mut num = R::zero();
    let mut den = R::zero();
    for &i in rows {
        let r = residuals[i];
        num = num + r;
        den = den + r.abs() * (R::one() - r.abs());
    }
    if den < R::from_f64_lossy(1e-12) {
        return R::zero();
    }
    R::from_f64_lossy(2.0 / 3.0) * num / den
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    fn skewed_priors() -> TrainingMatrix {
        let mut rows = Vec::new();
        for (count, class) in [
            (500, MaintenanceClass::Corrective),
            (404, MaintenanceClass::Perfective),
            (247, MaintenanceClass::Adaptive),
        ] {
            for _ in 0..count {
                rows.push((vec![0u32], class));
            }
        }
        TrainingMatrix::new(rows, vec!["f".to_string()]).unwrap()
    }

    #[test]
    fn zero_stages_predicts_the_class_priors() {
        let data = skewed_priors();
        let params = BoostParams::<f64> {
            stages: 0,
            ..BoostParams::default()
        };
        let model = train_boost(&data, &params).unwrap();
        let (class, scores) = model.predict(&[0]).unwrap();
        assert_eq!(class, MaintenanceClass::Corrective);
        let p = scores.probabilities();
        assert!((p[0] - 0.4344).abs() < 1e-4, "corrective prior {}", p[0]);
        assert!((p[1] - 0.3510).abs() < 1e-4, "perfective prior {}", p[1]);
        assert!((p[2] - 0.2146).abs() < 1e-4, "adaptive prior {}", p[2]);
        assert_eq!(model.deviance_trace().len(), 1);
    }

    #[test]
    fn separable_data_trains_to_high_accuracy() {
        let data = fixtures::separable(25, 6);
        let params = BoostParams::<f64> {
            stages: 50,
            ..BoostParams::default()
        };
        let model = train_boost(&data, &params).unwrap();
        let acc: f64 = fixtures::training_accuracy(&data, |x| model.predict(x).unwrap().0);
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn deviance_trace_never_increases_on_fixtures() {
        let data = fixtures::separable(20, 13);
        let params = BoostParams::<f64> {
            stages: 40,
            ..BoostParams::default()
        };
        let model = train_boost(&data, &params).unwrap();
        let trace = model.deviance_trace();
        assert_eq!(trace.len(), 41);
        for pair in trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "deviance rose from {} to {}",
                pair[0],
                pair[1]
            );
        }
        assert!(trace[trace.len() - 1] < trace[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let data = fixtures::separable(15, 21);
        let params = BoostParams::<f64> {
            stages: 10,
            ..BoostParams::default()
        };
        let a = train_boost(&data, &params).unwrap();
        let b = train_boost(&data, &params).unwrap();
        let (mut ta, mut tb) = (String::new(), String::new());
        a.write_text(&mut ta);
        b.write_text(&mut tb);
        assert_eq!(ta, tb);
    }

    #[test]
    fn importances_concentrate_on_informative_features() {
        let data = fixtures::separable(20, 17);
        let params = BoostParams::<f64> {
            stages: 30,
            ..BoostParams::default()
        };
        let model = train_boost(&data, &params).unwrap();
        let ranked = model.feature_importance();
        let total: f64 = ranked.iter().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let noise = ranked
            .iter()
            .find(|(name, _)| name == "noise")
            .map(|(_, v)| *v)
            .unwrap();
        assert!(noise < 0.05, "noise importance {noise}");
    }

    #[test]
    fn model_text_codec_round_trips() {
        let data = fixtures::separable(10, 19);
        let params = BoostParams::<f64> {
            stages: 5,
            depth: 2,
            ..BoostParams::default()
        };
        let model = train_boost(&data, &params).unwrap();
        let mut text = String::new();
        model.write_text(&mut text);
        let mut cur = LineCursor::new(&text);
        let back = BoostModel::<f64>::read_text(&mut cur, data.feature_names()).unwrap();
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
            BoostParams::<f64> {
                depth: 0,
                ..BoostParams::default()
            },
            BoostParams::<f64> {
                shrinkage: 0.0,
                ..BoostParams::default()
            },
            BoostParams::<f64> {
                shrinkage: 1.5,
                ..BoostParams::default()
            },
        ] {
            assert!(matches!(
                train_boost(&data, &params),
                Err(LearnError::BadParams(_))
            ));
        }
    }

    #[test]
    fn predict_rejects_width_mismatch() {
        let data = fixtures::separable(5, 2);
        let model = train_boost(
            &data,
            &BoostParams::<f64> {
                stages: 2,
                ..BoostParams::default()
            },
        )
        .unwrap();
        assert!(matches!(
            model.predict(&[1, 2]),
            Err(LearnError::FeatureCount { .. })
        ));
    }
}
