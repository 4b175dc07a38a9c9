//! Frontend for a small curly-brace object-oriented subset.
//!
//! Recovered structure: class/interface declarations, method declarations
//! with normalized signatures, and statements as leaf nodes. Control-flow
//! blocks (`if`, `for`, …) contribute a statement leaf for their header while
//! their braces are transparent — the block's statements attach to the
//! enclosing method. Comments and string/char literal contents are stripped
//! before chunking, so comment-only and literal-internal punctuation never
//! affects the tree shape.

use super::tree::{NodeKind, SourceTree, TreeNode};
use super::DistillError;

/// First tokens that mark a braced header as control flow, not a method.
const CONTROL_KEYWORDS: &[&str] = &[
    "if",
    "else",
    "for",
    "while",
    "do",
    "switch",
    "try",
    "catch",
    "finally",
    "synchronized",
    "return",
    "throw",
    "new",
    "case",
    "default",
];

struct Builder {
    node: TreeNode,
    transparent: bool,
    open_line: u32,
    saved_parens: usize,
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    chunk: String,
    chunk_start: Option<u32>,
    parens: usize,
    stack: Vec<Builder>,
}

/// Parse source text into a [`SourceTree`].
///
/// Statements are whitespace-normalized and keep their terminating `;`;
/// headers (class and method values) are whitespace-normalized without the
/// opening brace. Unbalanced braces and unterminated comments or literals
/// are reported with a line number.
pub fn parse_source(text: &str) -> Result<SourceTree, DistillError> {
    let mut parser = Parser {
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        chunk: String::new(),
        chunk_start: None,
        parens: 0,
        stack: vec![Builder {
            node: TreeNode::new(NodeKind::CompilationUnit, "", [1, 1]),
            transparent: false,
            open_line: 1,
            saved_parens: 0,
        }],
    };
    parser.run()?;
    parser.finish()
}

impl Parser {
    fn error(&self, line: u32, message: impl Into<String>) -> DistillError {
        DistillError::Parse {
            line,
            message: message.into(),
        }
    }

    fn peek(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn push_char(&mut self, c: char) {
        if !c.is_whitespace() && self.chunk_start.is_none() {
            self.chunk_start = Some(self.line);
        }
        self.chunk.push(c);
    }

    fn run(&mut self) -> Result<(), DistillError> {
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            match c {
                '\n' => {
                    self.line += 1;
                    self.chunk.push(' ');
                    self.pos += 1;
                }
                '/' if self.peek(1) == Some('/') => {
                    while self.pos < self.chars.len() && self.chars[self.pos] != '\n' {
                        self.pos += 1;
                    }
                    self.chunk.push(' ');
                }
                '/' if self.peek(1) == Some('*') => {
                    let start = self.line;
                    self.pos += 2;
                    loop {
                        match self.chars.get(self.pos) {
                            None => {
                                return Err(
                                    self.error(start, "unterminated block comment".to_string())
                                )
                            }
                            Some('*') if self.peek(1) == Some('/') => {
                                self.pos += 2;
                                break;
                            }
                            Some('\n') => {
                                self.line += 1;
                                self.pos += 1;
                            }
                            Some(_) => self.pos += 1,
                        }
                    }
                    self.chunk.push(' ');
                }
                '"' | '\'' => self.consume_literal(c)?,
                '(' => {
                    self.parens += 1;
                    self.push_char(c);
                    self.pos += 1;
                }
                ')' => {
                    self.parens = self.parens.saturating_sub(1);
                    self.push_char(c);
                    self.pos += 1;
                }
                ';' if self.parens == 0 => {
                    self.pos += 1;
                    self.flush_statement(true);
                }
                '{' => {
                    self.pos += 1;
                    self.open_block();
                }
                '}' => {
                    self.pos += 1;
                    self.close_block()?;
                }
                _ => {
                    self.push_char(c);
                    self.pos += 1;
                }
            }
        }
        Ok(())
    }

    /// Copy a string or char literal into the chunk with its contents
    /// dropped, so embedded `;`, `{`, `}` cannot affect chunking.
    fn consume_literal(&mut self, quote: char) -> Result<(), DistillError> {
        let start = self.line;
        self.push_char(quote);
        self.pos += 1;
        loop {
            match self.chars.get(self.pos).copied() {
                None => {
                    let what = if quote == '"' { "string" } else { "char" };
                    return Err(self.error(start, format!("unterminated {what} literal")));
                }
                Some('\\') => {
                    if self.peek(1) == Some('\n') {
                        self.line += 1;
                    }
                    self.pos += 2;
                }
                Some('\n') => {
                    let what = if quote == '"' { "string" } else { "char" };
                    return Err(self.error(start, format!("unterminated {what} literal")));
                }
                Some(c) if c == quote => {
                    self.chunk.push(quote);
                    self.pos += 1;
                    return Ok(());
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    /// Emit the pending chunk as a statement leaf (if non-empty).
    fn flush_statement(&mut self, terminated: bool) {
        let raw = std::mem::take(&mut self.chunk);
        let start = self.chunk_start.take().unwrap_or(self.line);
        let mut value = normalize(&raw);
        if value.is_empty() {
            return;
        }
        if terminated {
            value = format!("{};", value.trim_end_matches(';').trim_end());
        }
        let node = TreeNode::new(NodeKind::Statement, value, [start, self.line]);
        self.current_mut().node.children.push(node);
    }

    fn current_mut(&mut self) -> &mut Builder {
        self.stack.last_mut().expect("stack never empty")
    }

    /// Kind of the nearest enclosing non-transparent container.
    fn container_kind(&self) -> NodeKind {
        self.stack
            .iter()
            .rev()
            .find(|b| !b.transparent)
            .map(|b| b.node.kind)
            .expect("root is non-transparent")
    }

    fn open_block(&mut self) {
        let raw = std::mem::take(&mut self.chunk);
        let start = self.chunk_start.take().unwrap_or(self.line);
        let header = normalize(&raw);
        let saved_parens = std::mem::replace(&mut self.parens, 0);
        let open_line = self.line;

        let is_type_decl = header
            .split_whitespace()
            .any(|tok| tok == "class" || tok == "interface");
        let first_token = header.split_whitespace().next().unwrap_or("");
        let container = self.container_kind();
        let is_method = !is_type_decl
            && header.contains('(')
            && matches!(container, NodeKind::CompilationUnit | NodeKind::Class)
            && !CONTROL_KEYWORDS.contains(&first_token);

        if is_type_decl || is_method {
            let kind = if is_type_decl {
                NodeKind::Class
            } else {
                NodeKind::Method
            };
            self.stack.push(Builder {
                node: TreeNode::new(kind, header, [start, start]),
                transparent: false,
                open_line,
                saved_parens,
            });
        } else {
            // Control-flow or anonymous block: header (if any) becomes a
            // statement leaf, the braces are transparent.
            if !header.is_empty() {
                let node = TreeNode::new(NodeKind::Statement, header, [start, open_line]);
                self.current_mut().node.children.push(node);
            }
            self.stack.push(Builder {
                node: TreeNode::new(NodeKind::CompilationUnit, "", [start, start]),
                transparent: true,
                open_line,
                saved_parens,
            });
        }
    }

    fn close_block(&mut self) -> Result<(), DistillError> {
        self.flush_statement(false);
        if self.stack.len() == 1 {
            return Err(self.error(self.line, "unmatched `}`"));
        }
        let mut done = self.stack.pop().expect("checked above");
        self.parens = done.saved_parens;
        let close_line = self.line;
        let parent = self.current_mut();
        if done.transparent {
            parent.node.children.append(&mut done.node.children);
        } else {
            done.node.range[1] = close_line;
            parent.node.children.push(done.node);
        }
        Ok(())
    }

    fn finish(mut self) -> Result<SourceTree, DistillError> {
        self.flush_statement(false);
        if self.stack.len() > 1 {
            let unclosed = self.stack.len() - 1;
            let last_open = self.stack.last().expect("non-empty").open_line;
            return Err(self.error(
                self.line,
                format!("unbalanced braces: {unclosed} unclosed block(s), last opened at line {last_open}"),
            ));
        }
        let mut root = self.stack.pop().expect("root remains").node;
        root.range = [1, self.line.max(1)];
        clamp_ranges(&mut root);
        Ok(SourceTree::new(root))
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Widen parents so every child range nests (headers spanning multiple lines
/// can otherwise start after an annotation attached to a sibling).
fn clamp_ranges(node: &mut TreeNode) {
    for child in &mut node.children {
        clamp_ranges(child);
        node.range[0] = node.range[0].min(child.range[0]);
        node.range[1] = node.range[1].max(child.range[1]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds_and_values(tree: &SourceTree) -> Vec<(NodeKind, String)> {
        fn walk(node: &TreeNode, out: &mut Vec<(NodeKind, String)>) {
            out.push((node.kind, node.value.clone()));
            for c in &node.children {
                walk(c, out);
            }
        }
        let mut out = Vec::new();
        walk(&tree.root, &mut out);
        out
    }

    #[test]
    fn parses_class_method_statement() {
        let tree = parse_source("class A { void f() { x = 1; } }").unwrap();
        assert_eq!(
            kinds_and_values(&tree),
            vec![
                (NodeKind::CompilationUnit, String::new()),
                (NodeKind::Class, "class A".to_string()),
                (NodeKind::Method, "void f()".to_string()),
                (NodeKind::Statement, "x = 1;".to_string()),
            ]
        );
    }

    #[test]
    fn empty_text_yields_bare_compilation_unit() {
        let tree = parse_source("").unwrap();
        assert_eq!(tree.root.kind, NodeKind::CompilationUnit);
        assert!(tree.root.children.is_empty());
        assert_eq!(tree.root.range, [1, 1]);
    }

    #[test]
    fn counts_methods_and_statements() {
        let src = "class C {\n  int a() { p = 1; q = 2; r = 3; }\n  int b() { s = 4; t = 5; u = 6; }\n}\n";
        let tree = parse_source(src).unwrap();
        let class = &tree.root.children[0];
        assert_eq!(class.kind, NodeKind::Class);
        assert_eq!(class.children.len(), 2);
        for method in &class.children {
            assert_eq!(method.kind, NodeKind::Method);
            assert_eq!(method.children.len(), 3);
            assert!(method
                .children
                .iter()
                .all(|s| s.kind == NodeKind::Statement));
        }
    }

    #[test]
    fn comments_and_whitespace_do_not_change_the_tree() {
        let plain = "class A { void f() { x = 1; } }";
        let noisy = "/* header\n   comment */\nclass A {\n  // set x\n  void f() {\n    x = 1; /* inline */\n  }\n}\n";
        let a = parse_source(plain).unwrap();
        let b = parse_source(noisy).unwrap();
        assert!(a.iso_eq(&b));
    }

    #[test]
    fn literal_contents_are_inert() {
        let src = "class A { void f() { s = \"a; } {\"; c = ';'; } }";
        let tree = parse_source(src).unwrap();
        let method = &tree.root.children[0].children[0];
        assert_eq!(method.children.len(), 2);
        assert_eq!(method.children[0].value, "s = \"\";");
        assert_eq!(method.children[1].value, "c = '';");
    }

    #[test]
    fn for_loop_semicolons_do_not_split() {
        let src = "class A { void f() { for (int i = 0; i < n; i++) { sum += i; } } }";
        let tree = parse_source(src).unwrap();
        let method = &tree.root.children[0].children[0];
        let values: Vec<&str> = method.children.iter().map(|c| c.value.as_str()).collect();
        assert_eq!(values, vec!["for (int i = 0; i < n; i++)", "sum += i;"]);
    }

    #[test]
    fn control_blocks_are_transparent() {
        let src = "class A { void f() { if (x > 0) { y = 1; } else { y = 2; } return y; } }";
        let tree = parse_source(src).unwrap();
        let method = &tree.root.children[0].children[0];
        let values: Vec<&str> = method.children.iter().map(|c| c.value.as_str()).collect();
        assert_eq!(
            values,
            vec!["if (x > 0)", "y = 1;", "else", "y = 2;", "return y;"]
        );
        assert!(method
            .children
            .iter()
            .all(|c| c.kind == NodeKind::Statement));
    }

    #[test]
    fn nested_and_interface_declarations() {
        let src = "public interface Shape { double area(); }\nclass Box { static class Inner { void g() { } } }";
        let tree = parse_source(src).unwrap();
        let shape = &tree.root.children[0];
        assert_eq!(shape.kind, NodeKind::Class);
        assert_eq!(shape.value, "public interface Shape");
        assert_eq!(shape.children[0].value, "double area();");
        let boxed = &tree.root.children[1];
        let inner = &boxed.children[0];
        assert_eq!(inner.kind, NodeKind::Class);
        assert_eq!(inner.value, "static class Inner");
        assert_eq!(inner.children[0].kind, NodeKind::Method);
    }

    #[test]
    fn static_initializer_is_statement_plus_transparent_block() {
        let src = "class A { static { x = 1; } }";
        let tree = parse_source(src).unwrap();
        let class = &tree.root.children[0];
        let values: Vec<&str> = class.children.iter().map(|c| c.value.as_str()).collect();
        assert_eq!(values, vec!["static", "x = 1;"]);
    }

    #[test]
    fn annotations_fold_into_the_signature() {
        let src = "class A { @Override\n public void f(int a) { } }";
        let tree = parse_source(src).unwrap();
        let method = &tree.root.children[0].children[0];
        assert_eq!(method.value, "@Override public void f(int a)");
    }

    #[test]
    fn line_ranges_cover_nested_content() {
        let src = "class A {\n  void f() {\n    x = 1;\n    y = 2;\n  }\n}\n";
        let tree = parse_source(src).unwrap();
        let class = &tree.root.children[0];
        assert_eq!(class.range, [1, 6]);
        let method = &class.children[0];
        assert_eq!(method.range, [2, 5]);
        assert_eq!(method.children[0].range, [3, 3]);
        assert_eq!(method.children[1].range, [4, 4]);
    }

    #[test]
    fn unbalanced_braces_report_line_numbers() {
        match parse_source("class A {\n void f() {\n}\n") {
            Err(DistillError::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("unbalanced"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_source("class A { } }") {
            Err(DistillError::Parse { line, message }) => {
                assert_eq!(line, 1);
                assert!(message.contains("unmatched"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unterminated_comment_and_literal_are_errors() {
        assert!(matches!(
            parse_source("class A { /* never closed"),
            Err(DistillError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_source("class A { void f() { s = \"oops; } }"),
            Err(DistillError::Parse { .. })
        ));
    }

    #[test]
    fn trailing_unterminated_statement_is_kept_leniently() {
        let tree = parse_source("class A { void f() { x = 1 } }").unwrap();
        let method = &tree.root.children[0].children[0];
        assert_eq!(method.children[0].value, "x = 1");
    }

    #[test]
    fn json_round_trip_of_parsed_tree() {
        let tree = parse_source("class A { void f() { x = 1; } }").unwrap();
        let back = SourceTree::from_json(&tree.to_json()).unwrap();
        assert_eq!(tree, back);
    }
}
