//! Gain-ratio decision tree with pessimistic-error pruning, plus the
//! human-readable rendering and its parser.

use std::fmt::Write as _;

use super::{
    argmax_class, tagged_values, ClassScores, LearnError, LineCursor, SplitNode, TrainingMatrix,
};
use crate::corpus::MaintenanceClass;
use crate::scalar::inverse_normal_cdf;
use crate::Real;

/// Tree hyperparameters: minimum rows on each side of a split, and the
/// pruning confidence (smaller prunes harder).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams<R: Real> {
    pub min_leaf: usize,
    pub cf: R,
}

impl<R: Real> Default for TreeParams<R> {
    fn default() -> Self {
        TreeParams {
            min_leaf: 2,
            cf: R::from_f64_lossy(0.25),
        }
    }
}

/// A trained gain-ratio tree.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeModel<R: Real> {
    pub(crate) root: SplitNode<R>,
    feature_names: Vec<String>,
    class_counts: [u32; 3],
    params: TreeParams<R>,
}

impl<R: Real> TreeModel<R> {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_counts(&self) -> [u32; 3] {
        self.class_counts
    }

    pub fn params(&self) -> &TreeParams<R> {
        &self.params
    }

    pub fn node_count(&self) -> usize {
        fn count<R: Real>(node: &SplitNode<R>) -> usize {
            match node {
                SplitNode::Leaf { .. } => 1,
                SplitNode::Split { left, right, .. } => 1 + count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Predict the class and its probability scores for one feature tuple.
    pub fn predict(&self, x: &[u32]) -> Result<(MaintenanceClass, ClassScores<R>), LearnError> {
        if x.len() != self.feature_names.len() {
            return Err(LearnError::FeatureCount {
                expected: self.feature_names.len(),
                found: x.len(),
            });
        }
        let counts = self.root.leaf_for(x);
        let scores = ClassScores::from_counts(*counts);
        let class = argmax_class(&scores.probabilities(), &self.class_counts);
        Ok((class, scores))
    }

    pub(crate) fn write_text(&self, out: &mut String) {
        writeln!(out, "tree").expect("write to string");
        writeln!(out, "params {} {}", self.params.min_leaf, self.params.cf)
            .expect("write to string");
        writeln!(
            out,
            "classes {} {} {}",
            self.class_counts[0], self.class_counts[1], self.class_counts[2]
        )
        .expect("write to string");
        self.root.write_text(out);
    }

    pub(crate) fn read_text(
        cur: &mut LineCursor<'_>,
        feature_names: &[String],
    ) -> Result<Self, LearnError> {
        cur.expect("tree")?;
        let params = tagged_values(cur, "params")?;
        let line = cur.line;
        let bad = |message: String| LearnError::Format { line, message };
        if params.len() != 2 {
            return Err(bad("expected `params min_leaf cf`".to_string()));
        }
        let min_leaf: usize = params[0]
            .parse()
            .map_err(|_| bad(format!("bad min_leaf `{}`", params[0])))?;
        let cf = R::parse_text(params[1]).ok_or_else(|| bad(format!("bad cf `{}`", params[1])))?;
        let class_counts = read_class_counts(cur)?;
        let root = SplitNode::read_text(cur, feature_names.len())?;
        Ok(TreeModel {
            root,
            feature_names: feature_names.to_vec(),
            class_counts,
            params: TreeParams { min_leaf, cf },
        })
    }
}

pub(crate) fn read_class_counts(cur: &mut LineCursor<'_>) -> Result<[u32; 3], LearnError> {
    let values = tagged_values(cur, "classes")?;
    let line = cur.line;
    if values.len() != 3 {
        return Err(LearnError::Format {
            line,
            message: "expected `classes c p a`".to_string(),
        });
    }
    let mut counts = [0u32; 3];
    for (slot, token) in counts.iter_mut().zip(&values) {
        *slot = token.parse().map_err(|_| LearnError::Format {
            line,
            message: format!("bad class count `{token}`"),
        })?;
    }
    Ok(counts)
}

/// Train a gain-ratio tree: splits maximize the gain ratio over midpoint
/// thresholds (requiring information gain above 1e-12 and `min_leaf` rows
/// per side), then pessimistic-error pruning by subtree replacement at
/// confidence `cf`. Fully deterministic; row order does not matter.
pub fn train_tree<R: Real>(
    data: &TrainingMatrix,
    params: &TreeParams<R>,
) -> Result<TreeModel<R>, LearnError> {
    if params.min_leaf < 1 {
        return Err(LearnError::BadParams("min_leaf must be ≥ 1".to_string()));
    }
    let cf = params.cf.to_f64().unwrap_or(f64::NAN);
    if !(cf > 0.0 && cf < 1.0) {
        return Err(LearnError::BadParams(format!(
            "pruning confidence {cf} outside (0, 1)"
        )));
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    let grown = grow(data, &rows, params.min_leaf);
    let z = R::from_f64_lossy(inverse_normal_cdf(1.0 - cf));
    let (root, _) = prune(grown, z);
    Ok(TreeModel {
        root,
        feature_names: data.feature_names().to_vec(),
        class_counts: data.class_counts(),
        params: *params,
    })
}

pub(crate) fn count_classes(data: &TrainingMatrix, rows: &[usize]) -> [u32; 3] {
    let mut counts = [0u32; 3];
    for &i in rows {
        counts[data.label(i).index()] += 1;
    }
    counts
}

fn entropy<R: Real>(counts: &[u32; 3], n: usize) -> R {
    let nr = R::from_count(n);
    let mut h = R::zero();
    for &c in counts {
        if c > 0 {
            let p = R::from_count(c as usize) / nr;
            h = h - p * p.log2();
        }
    }
    h
}

pub(crate) struct Candidate<R> {
    pub(crate) feature: usize,
    pub(crate) threshold: R,
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) gain: R,
    pub(crate) ratio: R,
}

/// Best gain-ratio split over all features and midpoint thresholds; `None`
/// when no candidate has positive gain with `min_leaf` rows per side.
/// Ties keep the lowest feature index, then the lowest threshold.
pub(crate) fn best_gain_ratio_split<R: Real>(
    data: &TrainingMatrix,
    rows: &[usize],
    min_leaf: usize,
) -> Option<Candidate<R>> {
    let n = rows.len();
    let total = count_classes(data, rows);
    let h = entropy::<R>(&total, n);
    let tiny = R::from_f64_lossy(1e-12);
    let two = R::from_f64_lossy(2.0);
    let nr = R::from_count(n);
    let mut best: Option<Candidate<R>> = None;
    for f in 0..data.width() {
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
            let (nl, nrt) = (i, n - i);
            if nl < min_leaf || nrt < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
            let (wl, wr) = (R::from_count(nl) / nr, R::from_count(nrt) / nr);
            let gain = h - (wl * entropy::<R>(&left, nl) + wr * entropy::<R>(&right, nrt));
            if gain <= tiny {
                continue;
            }
            let split_info = -(wl * wl.log2() + wr * wr.log2());
            let ratio = gain / split_info;
            if best.as_ref().is_none_or(|b| ratio > b.ratio) {
                let threshold = (R::from_count(pairs[i - 1].0 as usize)
                    + R::from_count(pairs[i].0 as usize))
                    / two;
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    gain,
                    ratio,
                });
            }
        }
    }
    best
}

fn grow<R: Real>(data: &TrainingMatrix, rows: &[usize], min_leaf: usize) -> SplitNode<R> {
    let counts = count_classes(data, rows);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || rows.len() < 2 * min_leaf {
        return SplitNode::Leaf { counts };
    }
    let Some(cand) = best_gain_ratio_split::<R>(data, rows, min_leaf) else {
        return SplitNode::Leaf { counts };
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .copied()
        .partition(|&i| R::from_count(data.row(i)[cand.feature] as usize) <= cand.threshold);
    SplitNode::Split {
        feature: cand.feature,
        threshold: cand.threshold,
        left: Box::new(grow(data, &left_rows, min_leaf)),
        right: Box::new(grow(data, &right_rows, min_leaf)),
    }
}

/// C4.5's pessimistic error estimate: the upper confidence bound (normal
/// approximation, one-sided at z) of the error rate, times the leaf size.
pub(crate) fn pessimistic_errors<R: Real>(counts: &[u32; 3], z: R) -> R {
    let n: u32 = counts.iter().sum();
    debug_assert!(n > 0, "empty leaf has no error estimate");
    let nr = R::from_count(n as usize);
    let e = n - counts.iter().copied().max().expect("three classes");
    let f = R::from_count(e as usize) / nr;
    let z2 = z * z;
    let two = R::from_f64_lossy(2.0);
    let four = R::from_f64_lossy(4.0);
    let numerator = f + z2 / (two * nr) + z * (f / nr - f * f / nr + z2 / (four * nr * nr)).sqrt();
    let bound = numerator / (R::one() + z2 / nr);
    nr * bound
}

/// Bottom-up subtree replacement: collapse a split whenever the node's
/// pessimistic errors as a leaf do not exceed the sum over its (already
/// pruned) children. Returns the pruned node and its estimated errors.
pub(crate) fn prune<R: Real>(node: SplitNode<R>, z: R) -> (SplitNode<R>, R) {
    match node {
        SplitNode::Leaf { counts } => {
            let estimate = pessimistic_errors(&counts, z);
            (SplitNode::Leaf { counts }, estimate)
        }
        SplitNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let (left, left_err) = prune(*left, z);
            let (right, right_err) = prune(*right, z);
            let subtree_err = left_err + right_err;
            let (lc, rc) = (left.counts(), right.counts());
            let counts = [lc[0] + rc[0], lc[1] + rc[1], lc[2] + rc[2]];
            let leaf_err = pessimistic_errors(&counts, z);
            if leaf_err <= subtree_err {
                (SplitNode::Leaf { counts }, leaf_err)
            } else {
                (
                    SplitNode::Split {
                        feature,
                        threshold,
                        left: Box::new(left),
                        right: Box::new(right),
                    },
                    subtree_err,
                )
            }
        }
    }
}

/// The class a leaf displays: plain majority, ties to the earlier class in
/// canonical order (display only; prediction tie-breaking also considers
/// training frequencies).
fn leaf_majority(counts: &[u32; 3]) -> MaintenanceClass {
    let mut best = 0;
    for i in 1..3 {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    MaintenanceClass::ALL[best]
}

/// Render a tree as indented text, one node per line. A split prints its
/// left-branch condition `feature <= threshold` with both subtrees indented
/// below it (left first); a leaf prints `class (n)` or `class (n/errors)`.
pub fn render_tree<R: Real>(model: &TreeModel<R>) -> String {
    let mut out = String::new();
    render_node(&model.root, model.feature_names(), 0, &mut out);
    out
}

fn render_node<R: Real>(node: &SplitNode<R>, names: &[String], depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("|   ");
    }
    match node {
        SplitNode::Leaf { counts } => {
            let class = leaf_majority(counts);
            let n: u32 = counts.iter().sum();
            let errors = n - counts[class.index()];
            if errors == 0 {
                writeln!(out, "{class} ({n})").expect("write to string");
            } else {
                writeln!(out, "{class} ({n}/{errors})").expect("write to string");
            }
        }
        SplitNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            writeln!(out, "{} <= {}", names[*feature], threshold).expect("write to string");
            render_node(left, names, depth + 1, out);
            render_node(right, names, depth + 1, out);
        }
    }
}

/// Parse rendered-tree text back into a model isomorphic to the original:
/// identical splits, and leaves with the displayed class, size and error
/// count. The unobserved error distribution is reconstructed by giving the
/// later class (canonical order) the larger share, which keeps
/// render∘parse idempotent. Split lines using the `feature > threshold`
/// form are accepted (their subtrees are swapped).
pub fn parse_rendered_tree<R: Real>(
    text: &str,
    feature_names: &[String],
) -> Result<TreeModel<R>, LearnError> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut depth = 0;
        let mut rest = raw;
        while let Some(stripped) = rest.strip_prefix("|   ") {
            depth += 1;
            rest = stripped;
        }
        if rest.starts_with(' ') || rest.starts_with('|') {
            return Err(LearnError::Format {
                line: lineno,
                message: format!("malformed indentation in `{raw}`"),
            });
        }
        lines.push((lineno, depth, rest));
    }
    if lines.is_empty() {
        return Err(LearnError::Format {
            line: 0,
            message: "empty tree text".to_string(),
        });
    }
    let mut pos = 0;
    let root = parse_node(&lines, &mut pos, 0, feature_names)?;
    if pos != lines.len() {
        return Err(LearnError::Format {
            line: lines[pos].0,
            message: "trailing lines after the tree".to_string(),
        });
    }
    let class_counts = root.counts();
    Ok(TreeModel {
        root,
        feature_names: feature_names.to_vec(),
        class_counts,
        params: TreeParams::default(),
    })
}

fn parse_node<R: Real>(
    lines: &[(usize, usize, &str)],
    pos: &mut usize,
    depth: usize,
    names: &[String],
) -> Result<SplitNode<R>, LearnError> {
    let Some(&(lineno, line_depth, content)) = lines.get(*pos) else {
        let last = lines.last().map_or(0, |l| l.0);
        return Err(LearnError::Format {
            line: last,
            message: "tree text ended mid-subtree".to_string(),
        });
    };
    let bad = |message: String| LearnError::Format {
        line: lineno,
        message,
    };
    if line_depth != depth {
        return Err(bad(format!(
            "expected indent depth {depth}, found {line_depth}"
        )));
    }
    *pos += 1;
    let split = content
        .split_once(" <= ")
        .map(|(name, thr)| (name, thr, false))
        .or_else(|| {
            content
                .split_once(" > ")
                .map(|(name, thr)| (name, thr, true))
        });
    if let Some((name, threshold_text, swapped)) = split {
        let feature = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| bad(format!("unknown feature `{name}`")))?;
        let threshold = R::parse_text(threshold_text)
            .ok_or_else(|| bad(format!("bad threshold `{threshold_text}`")))?;
        let first = parse_node(lines, pos, depth + 1, names)?;
        let second = parse_node(lines, pos, depth + 1, names)?;
        let (left, right) = if swapped {
            (second, first)
        } else {
            (first, second)
        };
        return Ok(SplitNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        });
    }
    // Leaf: `class (n)` or `class (n/errors)`.
    let (class_text, paren) = content
        .split_once(" (")
        .ok_or_else(|| bad(format!("expected a split or leaf line, found `{content}`")))?;
    let class: MaintenanceClass = class_text
        .parse()
        .map_err(|e| bad(format!("bad leaf class: {e}")))?;
    let body = paren
        .strip_suffix(')')
        .ok_or_else(|| bad("leaf line missing `)`".to_string()))?;
    let (n, errors) = match body.split_once('/') {
        Some((n, e)) => (
            n.parse::<u32>()
                .map_err(|_| bad(format!("bad count `{n}`")))?,
            e.parse::<u32>()
                .map_err(|_| bad(format!("bad error count `{e}`")))?,
        ),
        None => (
            body.parse::<u32>()
                .map_err(|_| bad(format!("bad count `{body}`")))?,
            0,
        ),
    };
    if n == 0 || errors >= n {
        return Err(bad(format!("leaf counts {n}/{errors} are inconsistent")));
    }
    let mut counts = [0u32; 3];
    counts[class.index()] = n - errors;
    let others: Vec<usize> = (0..3).filter(|&i| i != class.index()).collect();
    // Later class first, ceil share first: keeps the displayed class the
    // unique canonical-order majority (see render docs).
    counts[others[1]] = errors.div_ceil(2);
    counts[others[0]] = errors / 2;
    Ok(SplitNode::Leaf { counts })
}
