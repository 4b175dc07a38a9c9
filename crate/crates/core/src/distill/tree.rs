//! Interchange syntax trees for change distilling.
//!
//! Trees are rooted and ordered; every node carries a kind, a text value and a
//! source line range. The JSON interchange form
//! `{ "kind": str, "value": str, "range": [startLine, endLine], "children": [...] }`
//! lets external full-language parsers feed the distiller.

use serde::{Deserialize, Serialize};

use super::DistillError;

/// Node kinds understood by the distiller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    CompilationUnit,
    Class,
    Method,
    Statement,
    Comment,
}

impl NodeKind {
    /// Stable lowercase name (mirrors the JSON encoding).
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::CompilationUnit => "compilation_unit",
            NodeKind::Class => "class",
            NodeKind::Method => "method",
            NodeKind::Statement => "statement",
            NodeKind::Comment => "comment",
        }
    }
}

/// One node of a [`SourceTree`]; `range` is a 1-based inclusive line span.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub value: String,
    pub range: [u32; 2],
    #[serde(default)]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn new(kind: NodeKind, value: impl Into<String>, range: [u32; 2]) -> Self {
        TreeNode {
            kind,
            value: value.into(),
            range,
            children: Vec::new(),
        }
    }

    /// Number of nodes in this subtree, including `self`.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TreeNode::size).sum::<usize>()
    }

    /// Kind-and-value isomorphism, ignoring ranges.
    pub fn iso_eq(&self, other: &TreeNode) -> bool {
        self.kind == other.kind
            && self.value == other.value
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.iso_eq(b))
    }
}

/// A parsed or externally supplied syntax tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceTree {
    pub root: TreeNode,
}

impl SourceTree {
    pub fn new(root: TreeNode) -> Self {
        SourceTree { root }
    }

    /// Empty compilation unit.
    pub fn empty() -> Self {
        SourceTree {
            root: TreeNode::new(NodeKind::CompilationUnit, "", [1, 1]),
        }
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn iso_eq(&self, other: &SourceTree) -> bool {
        self.root.iso_eq(&other.root)
    }

    /// Parse the JSON interchange form and validate range nesting.
    pub fn from_json(text: &str) -> Result<Self, DistillError> {
        let tree: SourceTree =
            serde_json::from_str(text).map_err(|e| DistillError::TreeJson(e.to_string()))?;
        validate_ranges(&tree.root)?;
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }
}

fn validate_ranges(node: &TreeNode) -> Result<(), DistillError> {
    if node.range[0] > node.range[1] {
        return Err(DistillError::InvalidTree(format!(
            "node `{}` has inverted range {}..{}",
            node.value, node.range[0], node.range[1]
        )));
    }
    let mut prev_start = 0u32;
    for child in &node.children {
        if child.range[0] < node.range[0] || child.range[1] > node.range[1] {
            return Err(DistillError::InvalidTree(format!(
                "child `{}` range {}..{} escapes parent {}..{}",
                child.value, child.range[0], child.range[1], node.range[0], node.range[1]
            )));
        }
        if child.range[0] < prev_start {
            return Err(DistillError::InvalidTree(format!(
                "sibling `{}` starts at line {} before its predecessor",
                child.value, child.range[0]
            )));
        }
        prev_start = child.range[0];
        validate_ranges(child)?;
    }
    Ok(())
}
