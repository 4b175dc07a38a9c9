//! Tree differencing: two-phase matching followed by edit-script generation.
//!
//! Matching pairs leaves (statements, comments) by bigram-Dice value
//! similarity and inner nodes (classes, methods, compilation units) by the
//! ratio of matched descendants, falling back to value similarity so renamed
//! or empty containers can still pair up. Script generation walks the target
//! tree breadth-first, emitting insert/update/move operations against an
//! evolving working copy, then deletes unmatched nodes bottom-up — applying
//! the returned script to the before-tree always reproduces the after-tree
//! up to kind+value isomorphism.
//!
//! Operations address nodes by their child-index path *in the working tree
//! at the moment the operation executes*; a move detaches its source before
//! the destination path is resolved.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};

use super::tree::{NodeKind, SourceTree, TreeNode};
use super::DistillError;

/// Child-index path from the root; the root itself is the empty path.
pub type NodePath = Vec<usize>;

/// Ordered list of edit operations.
pub type EditScript = Vec<EditOp>;

/// Minimum bigram-Dice similarity for two leaf values to match.
const LEAF_SIMILARITY: f64 = 0.6;
/// Minimum ratio of matched descendants for two inner nodes to match.
const INNER_DESCENDANT_RATIO: f64 = 0.5;
/// Fallback value similarity for inner nodes (empty or renamed containers).
const INNER_VALUE_SIMILARITY: f64 = 0.6;

/// One tree-edit operation. Every variant carries the node's kind and enough
/// text for downstream classification without consulting the trees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Insert {
        kind: NodeKind,
        value: String,
        to_parent: NodePath,
        position: usize,
    },
    Delete {
        kind: NodeKind,
        value: String,
        path: NodePath,
    },
    Update {
        kind: NodeKind,
        path: NodePath,
        old_value: String,
        new_value: String,
    },
    Move {
        kind: NodeKind,
        value: String,
        from: NodePath,
        to_parent: NodePath,
        position: usize,
    },
}

/// Dice coefficient over the character-bigram *sets* of two strings.
fn dice(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let ba = bigrams(a);
    let bb = bigrams(b);
    if ba.is_empty() && bb.is_empty() {
        return 0.0;
    }
    let common = ba.iter().filter(|g| bb.contains(*g)).count();
    2.0 * common as f64 / (ba.len() + bb.len()) as f64
}

fn bigrams(s: &str) -> std::collections::BTreeSet<(char, char)> {
    let cs: Vec<char> = s.chars().collect();
    cs.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Flat id-addressed tree; ids are preorder positions of the original tree,
/// with script-phase insertions appended at the end.
struct Arena {
    kind: Vec<NodeKind>,
    value: Vec<String>,
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
}

impl Arena {
    fn from_tree(tree: &SourceTree) -> Arena {
        fn add(arena: &mut Arena, node: &TreeNode, parent: Option<usize>) -> usize {
            let id = arena.kind.len();
            arena.kind.push(node.kind);
            arena.value.push(node.value.clone());
            arena.children.push(Vec::new());
            arena.parent.push(parent);
            for child in &node.children {
                let c = add(arena, child, Some(id));
                arena.children[id].push(c);
            }
            id
        }
        let mut arena = Arena {
            kind: Vec::new(),
            value: Vec::new(),
            children: Vec::new(),
            parent: Vec::new(),
        };
        add(&mut arena, &tree.root, None);
        arena
    }

    fn len(&self) -> usize {
        self.kind.len()
    }

    fn is_leaf_kind(&self, id: usize) -> bool {
        matches!(self.kind[id], NodeKind::Statement | NodeKind::Comment)
    }

    fn push_node(&mut self, kind: NodeKind, value: String) -> usize {
        let id = self.len();
        self.kind.push(kind);
        self.value.push(value);
        self.children.push(Vec::new());
        self.parent.push(None);
        id
    }

    fn index_in_parent(&self, id: usize) -> usize {
        let p = self.parent[id].expect("node has a parent");
        self.children[p]
            .iter()
            .position(|&c| c == id)
            .expect("child is listed under its parent")
    }

    fn path_of(&self, mut id: usize) -> NodePath {
        let mut path = Vec::new();
        while self.parent[id].is_some() {
            path.push(self.index_in_parent(id));
            id = self.parent[id].expect("loop condition");
        }
        path.reverse();
        path
    }

    fn detach(&mut self, id: usize) {
        if let Some(p) = self.parent[id] {
            let pos = self.index_in_parent(id);
            self.children[p].remove(pos);
            self.parent[id] = None;
        }
    }

    fn insert_child(&mut self, parent: usize, pos: usize, id: usize) {
        self.children[parent].insert(pos, id);
        self.parent[id] = Some(parent);
    }

    fn bfs(&self, root: usize) -> Vec<usize> {
        let mut order = Vec::new();
        let mut queue = VecDeque::from([root]);
        while let Some(id) = queue.pop_front() {
            order.push(id);
            queue.extend(self.children[id].iter().copied());
        }
        order
    }

    fn postorder(&self, root: usize) -> Vec<usize> {
        fn walk(arena: &Arena, id: usize, out: &mut Vec<usize>) {
            for &c in &arena.children[id] {
                walk(arena, c, out);
            }
            out.push(id);
        }
        let mut out = Vec::new();
        walk(self, root, &mut out);
        out
    }

    /// All strict descendants of `id`.
    fn descendants(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.children[id].to_vec();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.children[n].iter().copied());
        }
        out
    }

    fn is_strict_ancestor(&self, ancestor: usize, mut node: usize) -> bool {
        while let Some(p) = self.parent[node] {
            if p == ancestor {
                return true;
            }
            node = p;
        }
        false
    }
}

struct Matching {
    b2a: Vec<Option<usize>>,
    a2b: Vec<Option<usize>>,
}

impl Matching {
    fn link(&mut self, b: usize, a: usize) {
        self.b2a[b] = Some(a);
        self.a2b[a] = Some(b);
    }
}

fn match_trees(before: &Arena, after: &Arena) -> Matching {
    let mut m = Matching {
        b2a: vec![None; before.len()],
        a2b: vec![None; after.len()],
    };

    // --- Leaves: exact values first, then best Dice similarity >= 0.6. ---
    let before_leaves: Vec<usize> = (0..before.len())
        .filter(|&i| before.is_leaf_kind(i))
        .collect();
    let after_leaves: Vec<usize> = (0..after.len())
        .filter(|&i| after.is_leaf_kind(i))
        .collect();

    let mut exact: HashMap<(NodeKind, &str), VecDeque<usize>> = HashMap::new();
    for &a in &after_leaves {
        exact
            .entry((after.kind[a], after.value[a].as_str()))
            .or_default()
            .push_back(a);
    }
    for &b in &before_leaves {
        if let Some(queue) = exact.get_mut(&(before.kind[b], before.value[b].as_str())) {
            if let Some(a) = queue.pop_front() {
                m.link(b, a);
            }
        }
    }
    for &b in &before_leaves {
        if m.b2a[b].is_some() {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &a in &after_leaves {
            if m.a2b[a].is_some() || after.kind[a] != before.kind[b] {
                continue;
            }
            let score = dice(&before.value[b], &after.value[a]);
            if score >= LEAF_SIMILARITY && best.is_none_or(|(s, _)| score > s) {
                best = Some((score, a));
            }
        }
        if let Some((_, a)) = best {
            m.link(b, a);
        }
    }

    // --- Inner nodes, bottom-up: matched-descendant ratio with a value-
    // similarity fallback for empty or renamed containers. ---
    for b in before.postorder(0) {
        if before.is_leaf_kind(b) || m.b2a[b].is_some() || b == 0 {
            continue;
        }
        let mut best: Option<(bool, f64, f64, usize)> = None;
        for a in 0..after.len() {
            if a == 0
                || after.is_leaf_kind(a)
                || m.a2b[a].is_some()
                || after.kind[a] != before.kind[b]
            {
                continue;
            }
            let ratio = matched_descendant_ratio(before, b, after, a, &m);
            let value_sim = dice(&before.value[b], &after.value[a]);
            if ratio < INNER_DESCENDANT_RATIO && value_sim < INNER_VALUE_SIMILARITY {
                continue;
            }
            // Prefer an exact value match (a container keeping its name
            // beats one that merely inherited the contents), then the
            // descendant ratio, then value similarity.
            let exact = before.value[b] == after.value[a];
            let better = match best {
                None => true,
                Some((e, r, v, _)) => (exact, ratio, value_sim) > (e, r, v),
            };
            if better {
                best = Some((exact, ratio, value_sim, a));
            }
        }
        if let Some((_, _, _, a)) = best {
            m.link(b, a);
        }
    }

    // Roots always correspond.
    if m.b2a[0].is_none() && m.a2b[0].is_none() {
        m.link(0, 0);
    }
    m
}

fn matched_descendant_ratio(
    before: &Arena,
    b: usize,
    after: &Arena,
    a: usize,
    m: &Matching,
) -> f64 {
    let b_desc = before.descendants(b);
    let a_count = after.descendants(a).len();
    let denom = b_desc.len().max(a_count);
    if denom == 0 {
        return 0.0;
    }
    let common = b_desc
        .iter()
        .filter(|&&d| m.b2a[d].is_some_and(|p| after.is_strict_ancestor(a, p)))
        .count();
    common as f64 / denom as f64
}

/// Edit-script generation state: `w` is the working tree (a mutated copy of
/// the before-arena), kept in step with every emitted operation.
struct ScriptGen<'a> {
    w: Arena,
    after: &'a Arena,
    w2a: Vec<Option<usize>>,
    a2w: Vec<Option<usize>>,
    in_order_w: Vec<bool>,
    in_order_a: Vec<bool>,
    script: EditScript,
}

impl<'a> ScriptGen<'a> {
    fn run(mut self) -> EditScript {
        for y in self.after.bfs(0) {
            let wx = match self.after.parent[y] {
                None => self.process_root(y),
                Some(py) => self.process_node(y, py),
            };
            self.align_children(wx, y);
        }
        self.delete_unmatched();
        self.script
    }

    fn process_root(&mut self, y: usize) -> usize {
        let x = self.a2w[y].expect("roots are matched");
        self.update_value_if_needed(x, y);
        self.in_order_w[x] = true;
        self.in_order_a[y] = true;
        x
    }

    fn process_node(&mut self, y: usize, py: usize) -> usize {
        let z = self.a2w[py].expect("BFS visits parents first");
        let wx = match self.a2w[y] {
            None => {
                let k = self.find_pos(y).min(self.w.children[z].len());
                let id = self
                    .w
                    .push_node(self.after.kind[y], self.after.value[y].clone());
                self.w2a.push(Some(y));
                self.in_order_w.push(true);
                self.a2w[y] = Some(id);
                self.script.push(EditOp::Insert {
                    kind: self.after.kind[y],
                    value: self.after.value[y].clone(),
                    to_parent: self.w.path_of(z),
                    position: k,
                });
                self.w.insert_child(z, k, id);
                id
            }
            Some(x) => {
                self.update_value_if_needed(x, y);
                let wparent = self.w.parent[x].expect("only the root lacks a parent");
                if wparent != z {
                    let from = self.w.path_of(x);
                    self.w.detach(x);
                    let k = self.find_pos(y).min(self.w.children[z].len());
                    self.script.push(EditOp::Move {
                        kind: self.w.kind[x],
                        value: self.w.value[x].clone(),
                        from,
                        to_parent: self.w.path_of(z),
                        position: k,
                    });
                    self.w.insert_child(z, k, x);
                }
                self.in_order_w[x] = true;
                x
            }
        };
        self.in_order_a[y] = true;
        wx
    }

    fn update_value_if_needed(&mut self, x: usize, y: usize) {
        if self.w.value[x] != self.after.value[y] {
            self.script.push(EditOp::Update {
                kind: self.w.kind[x],
                path: self.w.path_of(x),
                old_value: self.w.value[x].clone(),
                new_value: self.after.value[y].clone(),
            });
            self.w.value[x] = self.after.value[y].clone();
        }
    }

    /// Re-align the mutual children of a matched pair: longest common
    /// subsequence members stay, the rest move within the parent.
    fn align_children(&mut self, w_id: usize, y: usize) {
        let wc = self.w.children[w_id].clone();
        let yc = self.after.children[y].clone();
        for &c in &wc {
            self.in_order_w[c] = false;
        }
        for &c in &yc {
            self.in_order_a[c] = false;
        }
        let s1: Vec<usize> = wc
            .iter()
            .copied()
            .filter(|&c| self.w2a[c].is_some_and(|p| self.after.parent[p] == Some(y)))
            .collect();
        let s2: Vec<usize> = yc
            .iter()
            .copied()
            .filter(|&c| self.a2w[c].is_some_and(|p| self.w.parent[p] == Some(w_id)))
            .collect();
        let common = lcs(&s1, &s2, |a, b| self.w2a[a] == Some(b));
        for &(a, b) in &common {
            self.in_order_w[a] = true;
            self.in_order_a[b] = true;
        }
        let aligned: std::collections::BTreeSet<usize> = common.iter().map(|&(_, b)| b).collect();
        for &b in &s2 {
            if aligned.contains(&b) {
                continue;
            }
            let a = self.a2w[b].expect("members of s2 are matched");
            let from = self.w.path_of(a);
            self.w.detach(a);
            let k = self.find_pos(b).min(self.w.children[w_id].len());
            self.script.push(EditOp::Move {
                kind: self.w.kind[a],
                value: self.w.value[a].clone(),
                from,
                to_parent: self.w.path_of(w_id),
                position: k,
            });
            self.w.insert_child(w_id, k, a);
            self.in_order_w[a] = true;
            self.in_order_a[b] = true;
        }
    }

    /// Position for a node about to be placed: directly after the working-
    /// tree partner of its nearest in-order left sibling, or first.
    fn find_pos(&self, y: usize) -> usize {
        let py = match self.after.parent[y] {
            Some(p) => p,
            None => return 0,
        };
        let siblings = &self.after.children[py];
        let ypos = siblings
            .iter()
            .position(|&s| s == y)
            .expect("node listed under its parent");
        let anchor = siblings[..ypos].iter().rev().find(|&&s| self.in_order_a[s]);
        match anchor.and_then(|&v| self.a2w[v]) {
            Some(u) if self.w.parent[u].is_some() => self.w.index_in_parent(u) + 1,
            _ => 0,
        }
    }

    fn delete_unmatched(&mut self) {
        for x in self.w.postorder(0) {
            if self.w2a[x].is_none() {
                self.script.push(EditOp::Delete {
                    kind: self.w.kind[x],
                    value: self.w.value[x].clone(),
                    path: self.w.path_of(x),
                });
                self.w.detach(x);
            }
        }
    }
}

fn lcs(s1: &[usize], s2: &[usize], eq: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    let (n, m) = (s1.len(), s2.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i][j] = if eq(s1[i], s2[j]) {
                dp[i + 1][j + 1] + 1
            } else {
                dp[i + 1][j].max(dp[i][j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < n && j < m {
        if eq(s1[i], s2[j]) {
            out.push((s1[i], s2[j]));
            i += 1;
            j += 1;
        } else if dp[i + 1][j] >= dp[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Diff two trees into an edit script satisfying the round-trip invariant
/// `apply_script(before, diff_trees(before, after)) ≅ after`.
pub fn diff_trees(before: &SourceTree, after: &SourceTree) -> EditScript {
    let b = Arena::from_tree(before);
    let a = Arena::from_tree(after);
    let m = match_trees(&b, &a);
    let gen = ScriptGen {
        in_order_w: vec![false; b.len()],
        in_order_a: vec![false; a.len()],
        w2a: m.b2a,
        a2w: m.a2b,
        w: b,
        after: &a,
        script: Vec::new(),
    };
    gen.run()
}

/// Apply an edit script to a tree. Inserted nodes carry the line range
/// `[0, 0]` — ranges are not part of tree isomorphism.
pub fn apply_script(before: &SourceTree, script: &[EditOp]) -> Result<SourceTree, DistillError> {
    let mut root = before.root.clone();
    for (i, op) in script.iter().enumerate() {
        apply_one(&mut root, op).map_err(|msg| DistillError::Apply(format!("op {i}: {msg}")))?;
    }
    Ok(SourceTree::new(root))
}

fn node_at<'t>(root: &'t mut TreeNode, path: &[usize]) -> Result<&'t mut TreeNode, String> {
    let mut cur = root;
    for &idx in path {
        cur = cur
            .children
            .get_mut(idx)
            .ok_or_else(|| format!("child index {idx} out of range"))?;
    }
    Ok(cur)
}

fn remove_at(root: &mut TreeNode, path: &[usize]) -> Result<TreeNode, String> {
    let (last, parent_path) = path
        .split_last()
        .ok_or_else(|| "cannot detach the root".to_string())?;
    let parent = node_at(root, parent_path)?;
    if *last >= parent.children.len() {
        return Err(format!("child index {last} out of range"));
    }
    Ok(parent.children.remove(*last))
}

fn apply_one(root: &mut TreeNode, op: &EditOp) -> Result<(), String> {
    match op {
        EditOp::Insert {
            kind,
            value,
            to_parent,
            position,
        } => {
            let parent = node_at(root, to_parent)?;
            if *position > parent.children.len() {
                return Err(format!("insert position {position} out of range"));
            }
            parent
                .children
                .insert(*position, TreeNode::new(*kind, value.clone(), [0, 0]));
            Ok(())
        }
        EditOp::Delete { path, .. } => {
            let node = remove_at(root, path)?;
            if !node.children.is_empty() {
                return Err("delete target still has children".to_string());
            }
            Ok(())
        }
        EditOp::Update {
            path, new_value, ..
        } => {
            let node = node_at(root, path)?;
            node.value = new_value.clone();
            Ok(())
        }
        EditOp::Move {
            from,
            to_parent,
            position,
            ..
        } => {
            let node = remove_at(root, from)?;
            let parent = node_at(root, to_parent)?;
            if *position > parent.children.len() {
                return Err(format!("move position {position} out of range"));
            }
            parent.children.insert(*position, node);
            Ok(())
        }
    }
}
