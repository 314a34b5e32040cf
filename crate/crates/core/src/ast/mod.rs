//! Spanned AST for a deterministic Java-method subset.
//!
//! A program is a single method definition: typed parameters over
//! `int`/`boolean`/`String`/`int[]`, and statements limited to declaration,
//! assignment, `if`/`else`, `while`, `for`, `return`, and expression calls.
//! Every node carries a byte span into the original source so analysis
//! results can be mapped back to the exact text that produced them.

mod json;
mod lexer;
mod parser;
mod render;

pub use json::{ast_from_json, ast_to_json, SchemaError};
pub use lexer::SyntaxError;
pub use render::{render_expr, render_method, render_stmt, same_shape};

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{Serialize, SerializeTuple, Serializer};
use serde::Deserialize;

/// Half-open byte range `[start, end)` into the program source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end, "span must be non-empty: {start}..{end}");
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    /// True if `other` lies entirely within `self` (equality counts).
    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Number of overlapping bytes between the two ranges.
    pub fn overlap(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

// Serialized as the two-element array `[start, end]` used by every file
// format in this workspace.
impl Serialize for Span {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(2)?;
        t.serialize_element(&self.start)?;
        t.serialize_element(&self.end)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SpanVisitor;
        impl<'de> Visitor<'de> for SpanVisitor {
            type Value = Span;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a [start, end] byte span")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Span, A::Error> {
                let start: usize = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let end: usize = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if start >= end {
                    return Err(de::Error::custom(format!("bad span {start}..{end}")));
                }
                Ok(Span { start, end })
            }
        }
        deserializer.deserialize_tuple(2, SpanVisitor)
    }
}

/// Grammar kind of an AST node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, Deserialize)]
pub enum AstKind {
    MethodDecl,
    Param,
    Block,
    If,
    While,
    For,
    Return,
    Assign,
    BinaryOp,
    UnaryOp,
    Call,
    ArrayIndex,
    IntLit,
    BoolLit,
    StringLit,
    Ident,
    VarDecl,
}

impl AstKind {
    pub const ALL: [AstKind; 17] = [
        AstKind::MethodDecl,
        AstKind::Param,
        AstKind::Block,
        AstKind::If,
        AstKind::While,
        AstKind::For,
        AstKind::Return,
        AstKind::Assign,
        AstKind::BinaryOp,
        AstKind::UnaryOp,
        AstKind::Call,
        AstKind::ArrayIndex,
        AstKind::IntLit,
        AstKind::BoolLit,
        AstKind::StringLit,
        AstKind::Ident,
        AstKind::VarDecl,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AstKind::MethodDecl => "MethodDecl",
            AstKind::Param => "Param",
            AstKind::Block => "Block",
            AstKind::If => "If",
            AstKind::While => "While",
            AstKind::For => "For",
            AstKind::Return => "Return",
            AstKind::Assign => "Assign",
            AstKind::BinaryOp => "BinaryOp",
            AstKind::UnaryOp => "UnaryOp",
            AstKind::Call => "Call",
            AstKind::ArrayIndex => "ArrayIndex",
            AstKind::IntLit => "IntLit",
            AstKind::BoolLit => "BoolLit",
            AstKind::StringLit => "StringLit",
            AstKind::Ident => "Ident",
            AstKind::VarDecl => "VarDecl",
        }
    }

    pub fn from_str(s: &str) -> Option<AstKind> {
        AstKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Leaf kinds never carry children.
    pub fn is_leaf(&self) -> bool {
        matches!(
            self,
            AstKind::IntLit | AstKind::BoolLit | AstKind::StringLit | AstKind::Ident
        )
    }

    /// Kinds whose token is a user-chosen identifier (renamed away during
    /// canonicalization).
    pub fn token_is_identifier(&self) -> bool {
        matches!(
            self,
            AstKind::MethodDecl | AstKind::Param | AstKind::VarDecl | AstKind::Ident
        )
    }
}

/// Binary operator tokens accepted by the grammar.
pub const BINARY_OPS: [&str; 16] = [
    "+", "-", "*", "/", "%", "<", "<=", ">", ">=", "==", "!=", "&&", "||", "&", "|", "=",
];

/// Binding strength for binary operators, higher binds tighter.
/// Mirrors Java: `*,/,%` > `+,-` > relational > equality > `&` > `|` > `&&` > `||` > `=`.
pub fn binop_precedence(op: &str) -> Option<u8> {
    Some(match op {
        "*" | "/" | "%" => 9,
        "+" | "-" => 8,
        "<" | "<=" | ">" | ">=" => 7,
        "==" | "!=" => 6,
        "&" => 5,
        "|" => 4,
        "&&" => 3,
        "||" => 2,
        "=" => 1,
        _ => return None,
    })
}

/// One node of the parse tree.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct AstNode {
    pub kind: AstKind,
    pub token: Option<String>,
    pub span: Span,
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn new(kind: AstKind, token: Option<String>, span: Span, children: Vec<AstNode>) -> Self {
        AstNode {
            kind,
            token,
            span,
            children,
        }
    }

    /// Nodes in this subtree, including `self`.
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(AstNode::count).sum::<usize>()
    }

    /// Pre-order walk calling `f(path, node)`; `path` is the child-index
    /// route from the walk root.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&[usize], &'a AstNode)) {
        fn go<'a>(
            node: &'a AstNode,
            path: &mut Vec<usize>,
            f: &mut impl FnMut(&[usize], &'a AstNode),
        ) {
            f(path, node);
            for (i, c) in node.children.iter().enumerate() {
                path.push(i);
                go(c, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f);
    }

    /// Resolve a child-index path rooted at this node.
    pub fn at_path(&self, path: &[usize]) -> Option<&AstNode> {
        let mut node = self;
        for &i in path {
            node = node.children.get(i)?;
        }
        Some(node)
    }

    pub fn at_path_mut(&mut self, path: &[usize]) -> Option<&mut AstNode> {
        let mut node = self;
        for &i in path {
            node = node.children.get_mut(i)?;
        }
        Some(node)
    }

    /// Check the per-node structural invariants recursively: child spans
    /// inside the parent span, siblings ordered and non-overlapping, leaf
    /// kinds childless, and BinaryOp shape. Returns the path of the first
    /// offending node.
    pub fn check_invariants(&self, source_len: usize) -> Result<(), String> {
        fn at(path: &[usize]) -> String {
            if path.is_empty() {
                "root".to_string()
            } else {
                format!(
                    "root.{}",
                    path.iter()
                        .map(|i| i.to_string())
                        .collect::<Vec<_>>()
                        .join(".")
                )
            }
        }
        fn go(node: &AstNode, source_len: usize, path: &mut Vec<usize>) -> Result<(), String> {
            if node.span.is_empty() {
                return Err(format!("{}: empty span", at(path)));
            }
            if node.span.end > source_len {
                return Err(format!("{}: span past end of source", at(path)));
            }
            if node.kind.is_leaf() && !node.children.is_empty() {
                return Err(format!("{}: leaf kind with children", at(path)));
            }
            if node.kind == AstKind::BinaryOp {
                let tok = node.token.as_deref().unwrap_or("");
                if node.children.len() != 2 || !BINARY_OPS.contains(&tok) {
                    return Err(format!("{}: malformed BinaryOp", at(path)));
                }
            }
            let mut prev_end = None;
            for (i, c) in node.children.iter().enumerate() {
                path.push(i);
                if !node.span.contains(&c.span) {
                    let msg = format!("{}: child span escapes parent", at(path));
                    path.pop();
                    return Err(msg);
                }
                if let Some(pe) = prev_end {
                    if c.span.start < pe {
                        let msg = format!("{}: sibling spans overlap or misordered", at(path));
                        path.pop();
                        return Err(msg);
                    }
                }
                prev_end = Some(c.span.end);
                go(c, source_len, path)?;
                path.pop();
            }
            Ok(())
        }
        go(self, source_len, &mut Vec::new())
    }
}

/// A parsed method: root node plus the text it was parsed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Ast {
    pub root: AstNode,
    pub source: String,
    pub node_count: usize,
}

impl Ast {
    pub fn new(root: AstNode, source: String) -> Self {
        let node_count = root.count();
        Ast {
            root,
            source,
            node_count,
        }
    }
}

/// Parse a single method definition. Lexing or parsing failure signals the
/// submission is not analyzable and must be excluded from a corpus.
pub fn parse(source: &str) -> Result<Ast, SyntaxError> {
    let tokens = lexer::lex(source)?;
    let root = parser::Parser::new(tokens).parse_method()?;
    debug_assert_eq!(root.check_invariants(source.len()), Ok(()));
    Ok(Ast::new(root, source.to_string()))
}

/// 1-based (line, column) of a byte offset, for human-readable output.
pub fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for (i, ch) in source.char_indices() {
        if i >= offset {
            break;
        }
        if ch == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

/// Declared type of a `VarDecl` or `Param` node, read from its span text
/// (the tree itself stores only the declared name).
pub fn declared_type(source: &str, node: &AstNode) -> Option<String> {
    if !matches!(node.kind, AstKind::VarDecl | AstKind::Param) {
        return None;
    }
    let text = node.span.text(source);
    let mut word_end = text.len();
    for (i, c) in text.char_indices() {
        if c.is_whitespace() || c == '[' {
            word_end = i;
            break;
        }
    }
    let mut ty = text[..word_end].to_string();
    if text[word_end..].trim_start().starts_with('[') {
        ty.push_str("[]");
    }
    if ty.is_empty() {
        None
    } else {
        Some(ty)
    }
}
