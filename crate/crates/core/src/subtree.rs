//! Rooted-subtree enumeration and the two-way program encoding.
//!
//! Every internal node of an AST roots exactly one subtree containing the
//! node and all of its descendants, so subtree count equals internal-node
//! count and nested errors stay representable at every granularity. Each
//! subtree is keyed by a canonical serialization in which identifiers are
//! replaced by positional placeholders (`VAR1`, `VAR2`, ... in first-use
//! order) while operators and literal texts stay verbatim: `a = a` and
//! `b = b` share the key `(Assign VAR1 VAR1)` but `x == 60` and `x == 61`
//! do not collide.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ast::{Ast, AstKind, AstNode, Span};

/// Reserved padding id in both vocabularies.
pub const PAD: u32 = 0;
/// Reserved unknown-entry id in both vocabularies.
pub const UNK: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("program has no internal nodes to embed")]
    EmptyProgram,
}

/// One rooted subtree of a program AST.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtree {
    /// Child-index route from the AST root to this subtree's root.
    pub root_path: Vec<usize>,
    /// Node symbols in pre-order (`BinaryOp:<`, `Ident`, `IntLit:0`, ...).
    pub kinds_preorder: Vec<String>,
    /// Canonical placeholder serialization, the subtree-vocabulary key.
    pub serialization: String,
    /// Source span of the subtree root.
    pub span: Span,
    /// Node count, equal to `kinds_preorder.len()`.
    pub size: usize,
}

/// Symbol for the node-level embedding way. Identifier tokens are dropped
/// (the kind alone remains); operator, literal, and callee tokens are kept.
pub fn node_symbol(node: &AstNode) -> String {
    match node.token.as_deref() {
        Some(tok) if !node.kind.token_is_identifier() => {
            format!("{}:{}", node.kind.as_str(), tok)
        }
        _ => node.kind.as_str().to_string(),
    }
}

fn placeholder(map: &mut IndexMap<String, usize>, name: &str) -> String {
    let next = map.len() + 1;
    let k = *map.entry(name.to_string()).or_insert(next);
    format!("VAR{k}")
}

fn write_canonical(node: &AstNode, vars: &mut IndexMap<String, usize>, out: &mut String) {
    match node.kind {
        AstKind::Ident => out.push_str(&placeholder(vars, node.token.as_deref().unwrap_or(""))),
        AstKind::IntLit | AstKind::BoolLit => out.push_str(node.token.as_deref().unwrap_or("")),
        AstKind::StringLit => {
            out.push('"');
            out.push_str(node.token.as_deref().unwrap_or(""));
            out.push('"');
        }
        _ => {
            out.push('(');
            out.push_str(node.kind.as_str());
            match node.token.as_deref() {
                Some(tok) if node.kind.token_is_identifier() => {
                    out.push(' ');
                    out.push_str(&placeholder(vars, tok));
                }
                Some(tok) => {
                    out.push(':');
                    out.push_str(tok);
                }
                None => {}
            }
            for child in &node.children {
                out.push(' ');
                write_canonical(child, vars, out);
            }
            out.push(')');
        }
    }
}

/// Canonical serialization of the subtree rooted at `node`. Placeholder
/// numbering restarts per subtree, so the same structure serializes the
/// same wherever it occurs.
pub fn serialize_subtree(node: &AstNode) -> String {
    let mut out = String::new();
    let mut vars = IndexMap::new();
    write_canonical(node, &mut vars, &mut out);
    out
}

/// Enumerate all rooted subtrees, one per internal node, ordered by the
/// pre-order position of their roots.
pub fn extract_subtrees(ast: &Ast) -> Result<Vec<Subtree>, EncodeError> {
    if ast.root.children.is_empty() {
        return Err(EncodeError::EmptyProgram);
    }
    let mut subtrees = Vec::new();
    ast.root.walk(&mut |path, node| {
        if node.children.is_empty() {
            return;
        }
        let mut kinds = Vec::with_capacity(node.count());
        node.walk(&mut |_, n| kinds.push(node_symbol(n)));
        subtrees.push(Subtree {
            root_path: path.to_vec(),
            size: kinds.len(),
            kinds_preorder: kinds,
            serialization: serialize_subtree(node),
            span: node.span,
        });
    });
    Ok(subtrees)
}

/// The two vocabularies behind the two-way embedding. Ids are dense and
/// assigned in first-occurrence order over the training corpus; 0 and 1
/// are reserved for PAD and UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pub subtree_entries: IndexMap<String, SubtreeEntry>,
    pub node_ids: IndexMap<String, u32>,
    pub min_frequency: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubtreeEntry {
    pub id: u32,
    pub freq: u32,
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("invalid vocabulary file: {0}")]
    Parse(String),
    #[error("unsupported vocabulary version {0}")]
    Version(u32),
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    subtrees: Vec<SubtreeRow>,
    nodes: Vec<NodeRow>,
    min_frequency: u32,
}

#[derive(Serialize, Deserialize)]
struct SubtreeRow {
    key: String,
    id: u32,
    freq: u32,
}

#[derive(Serialize, Deserialize)]
struct NodeRow {
    key: String,
    id: u32,
}

const VOCAB_VERSION: u32 = 1;

impl Vocab {
    /// Rows of the subtree embedding table (learned entries plus PAD/UNK).
    pub fn subtree_vocab_size(&self) -> usize {
        self.subtree_entries.len() + 2
    }

    pub fn node_vocab_size(&self) -> usize {
        self.node_ids.len() + 2
    }

    pub fn subtree_id(&self, key: &str) -> u32 {
        self.subtree_entries.get(key).map(|e| e.id).unwrap_or(UNK)
    }

    pub fn node_id(&self, symbol: &str) -> u32 {
        self.node_ids.get(symbol).copied().unwrap_or(UNK)
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            version: VOCAB_VERSION,
            subtrees: self
                .subtree_entries
                .iter()
                .map(|(key, e)| SubtreeRow {
                    key: key.clone(),
                    id: e.id,
                    freq: e.freq,
                })
                .collect(),
            nodes: self
                .node_ids
                .iter()
                .map(|(key, id)| NodeRow {
                    key: key.clone(),
                    id: *id,
                })
                .collect(),
            min_frequency: self.min_frequency,
        };
        serde_json::to_string(&file).expect("vocab serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Vocab, VocabError> {
        let file: VocabFile =
            serde_json::from_str(json).map_err(|e| VocabError::Parse(e.to_string()))?;
        if file.version != VOCAB_VERSION {
            return Err(VocabError::Version(file.version));
        }
        let mut subtree_entries = IndexMap::new();
        for row in file.subtrees {
            if row.id < 2 {
                return Err(VocabError::Parse(format!(
                    "subtree id {} collides with PAD/UNK",
                    row.id
                )));
            }
            subtree_entries.insert(
                row.key,
                SubtreeEntry {
                    id: row.id,
                    freq: row.freq,
                },
            );
        }
        let mut node_ids = IndexMap::new();
        for row in file.nodes {
            if row.id < 2 {
                return Err(VocabError::Parse(format!(
                    "node id {} collides with PAD/UNK",
                    row.id
                )));
            }
            node_ids.insert(row.key, row.id);
        }
        Ok(Vocab {
            subtree_entries,
            node_ids,
            min_frequency: file.min_frequency,
        })
    }

    /// Stable content hash used to pair checkpoints with the vocabulary
    /// they were trained against.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Count subtree serializations and node symbols over a training corpus.
/// Entries seen fewer than `min_frequency` times stay out of the subtree
/// vocabulary and map to UNK at encode time. Deterministic in input order.
pub fn build_vocab(programs: &[Ast], min_frequency: u32) -> Vocab {
    assert!(min_frequency >= 1, "min_frequency must be at least 1");
    let mut subtree_counts: IndexMap<String, u32> = IndexMap::new();
    let mut node_symbols: IndexMap<String, u32> = IndexMap::new();
    for ast in programs {
        let Ok(subtrees) = extract_subtrees(ast) else {
            continue;
        };
        for st in subtrees {
            *subtree_counts.entry(st.serialization).or_insert(0) += 1;
        }
        ast.root.walk(&mut |_, node| {
            let next = node_symbols.len() as u32 + 2;
            node_symbols.entry(node_symbol(node)).or_insert(next);
        });
    }
    let mut subtree_entries = IndexMap::new();
    let mut next_id = 2;
    for (key, freq) in subtree_counts {
        if freq >= min_frequency {
            subtree_entries.insert(key, SubtreeEntry { id: next_id, freq });
            next_id += 1;
        }
    }
    Vocab {
        subtree_entries,
        node_ids: node_symbols,
        min_frequency,
    }
}

/// A program as the model consumes it.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedProgram {
    pub subtree_ids: Vec<u32>,
    /// One id sequence per subtree, truncated to `max_nodes` and padded
    /// with PAD.
    pub node_id_seqs: Vec<Vec<u32>>,
    /// Unpadded sequence lengths (1..=max_nodes).
    pub lengths: Vec<usize>,
    pub spans: Vec<Span>,
    pub serializations: Vec<String>,
    /// 1 = correct, 0 = incorrect.
    pub label: u8,
}

impl EncodedProgram {
    pub fn len(&self) -> usize {
        self.subtree_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtree_ids.is_empty()
    }
}

/// Encode a program against a fixed vocabulary. When more than
/// `max_subtrees` subtrees exist the largest are kept (ties by pre-order)
/// and the kept set stays in pre-order.
pub fn encode_program(
    ast: &Ast,
    vocab: &Vocab,
    label: u8,
    max_subtrees: usize,
    max_nodes: usize,
) -> Result<EncodedProgram, EncodeError> {
    assert!(max_subtrees >= 1 && max_nodes >= 1);
    let subtrees = extract_subtrees(ast)?;
    let mut order: Vec<usize> = (0..subtrees.len()).collect();
    if subtrees.len() > max_subtrees {
        order.sort_by_key(|&i| (std::cmp::Reverse(subtrees[i].size), i));
        order.truncate(max_subtrees);
        order.sort_unstable();
    }
    let mut encoded = EncodedProgram {
        subtree_ids: Vec::with_capacity(order.len()),
        node_id_seqs: Vec::with_capacity(order.len()),
        lengths: Vec::with_capacity(order.len()),
        spans: Vec::with_capacity(order.len()),
        serializations: Vec::with_capacity(order.len()),
        label,
    };
    for i in order {
        let st = &subtrees[i];
        let len = st.kinds_preorder.len().min(max_nodes);
        let mut seq: Vec<u32> = st.kinds_preorder[..len]
            .iter()
            .map(|s| vocab.node_id(s))
            .collect();
        seq.resize(max_nodes, PAD);
        encoded.subtree_ids.push(vocab.subtree_id(&st.serialization));
        encoded.node_id_seqs.push(seq);
        encoded.lengths.push(len);
        encoded.spans.push(st.span);
        encoded.serializations.push(st.serialization.clone());
    }
    Ok(encoded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse;

    fn leaf(tok: &str, a: usize, b: usize) -> AstNode {
        AstNode::new(AstKind::Ident, Some(tok.into()), Span::new(a, b), vec![])
    }

    fn internal(kind: AstKind, span: (usize, usize), children: Vec<AstNode>) -> AstNode {
        AstNode::new(kind, None, Span::new(span.0, span.1), children)
    }

    fn ast_of(root: AstNode, len: usize) -> Ast {
        Ast::new(root, "x".repeat(len))
    }

    #[test]
    fn root_with_two_leaves_has_one_subtree() {
        let root = internal(
            AstKind::Block,
            (0, 10),
            vec![leaf("a", 1, 2), leaf("b", 3, 4)],
        );
        let subtrees = extract_subtrees(&ast_of(root, 10)).unwrap();
        assert_eq!(subtrees.len(), 1);
        assert_eq!(subtrees[0].size, 3);
        assert_eq!(subtrees[0].root_path, Vec::<usize>::new());
    }

    #[test]
    fn chain_yields_two_subtrees() {
        // A -> B -> C with C a leaf: exhaustive enumeration gives internal
        // nodes {A, B} with sizes 3 and 2.
        let c = leaf("c", 4, 5);
        let b = internal(AstKind::Return, (2, 7), vec![c]);
        let a = internal(AstKind::Block, (0, 9), vec![b]);
        let subtrees = extract_subtrees(&ast_of(a, 9)).unwrap();
        let sizes: Vec<usize> = subtrees.iter().map(|s| s.size).collect();
        assert_eq!(sizes, vec![3, 2]);
    }

    #[test]
    fn full_binary_tree_of_depth_two() {
        let t = internal(
            AstKind::Block,
            (0, 20),
            vec![
                internal(AstKind::Block, (1, 8), vec![leaf("a", 2, 3), leaf("b", 4, 5)]),
                internal(
                    AstKind::Block,
                    (9, 19),
                    vec![leaf("c", 10, 11), leaf("d", 12, 13)],
                ),
            ],
        );
        let subtrees = extract_subtrees(&ast_of(t, 20)).unwrap();
        let sizes: Vec<usize> = subtrees.iter().map(|s| s.size).collect();
        assert_eq!(sizes, vec![7, 3, 3]);
    }

    #[test]
    fn subtree_count_equals_internal_node_count_on_parsed_code() {
        let src = "int f(int a, int b) { int s = 0; if (a < b) { s = a * b; } else { s = a % b; } while (s > 0) { s = s - 1; } return s; }";
        let ast = parse(src).unwrap();
        let mut internal_nodes = 0;
        ast.root.walk(&mut |_, n| {
            if !n.children.is_empty() {
                internal_nodes += 1;
            }
        });
        assert_eq!(extract_subtrees(&ast).unwrap().len(), internal_nodes);
    }

    #[test]
    fn empty_program_is_rejected() {
        let bare = AstNode::new(
            AstKind::MethodDecl,
            Some("f".into()),
            Span::new(0, 5),
            vec![],
        );
        assert_eq!(
            extract_subtrees(&ast_of(bare, 5)).unwrap_err(),
            EncodeError::EmptyProgram
        );
    }

    fn stmt_serialization(src: &str, idx: usize) -> String {
        let full = format!("int f(int a, int b, boolean flag) {{ {src} return 0; }}");
        let ast = parse(&full).unwrap();
        let body = ast.root.children.last().unwrap();
        serialize_subtree(&body.children[idx])
    }

    #[test]
    fn placeholders_canonicalize_identifiers() {
        let a = stmt_serialization("a = a;", 0);
        assert_eq!(a, "(Assign VAR1 VAR1)");
        let b = stmt_serialization("b = b;", 0);
        assert_eq!(a, b);
        let ab = stmt_serialization("a = b;", 0);
        assert_eq!(ab, "(Assign VAR1 VAR2)");
        assert_ne!(a, ab);
    }

    #[test]
    fn literals_and_operators_stay_verbatim() {
        let full = format!("boolean f(int x) {{ return x == 60; }}");
        let ast = parse(&full).unwrap();
        let ret = &ast.root.children.last().unwrap().children[0];
        let cmp = &ret.children[0];
        assert_eq!(serialize_subtree(cmp), "(BinaryOp:== VAR1 60)");
        let full61 = format!("boolean f(int x) {{ return x == 61; }}");
        let ast61 = parse(&full61).unwrap();
        let cmp61 = &ast61.root.children.last().unwrap().children[0].children[0];
        assert_ne!(serialize_subtree(cmp), serialize_subtree(cmp61));
    }

    #[test]
    fn node_symbols_keep_operator_but_not_identifier_tokens() {
        let src = "int f(int a) { return a + 1; }";
        let ast = parse(src).unwrap();
        let subtrees = extract_subtrees(&ast).unwrap();
        let method = &subtrees[0];
        assert_eq!(
            method.kinds_preorder,
            vec![
                "MethodDecl",
                "Param",
                "Block",
                "Return",
                "BinaryOp:+",
                "Ident",
                "IntLit:1"
            ]
        );
    }

    #[test]
    fn vocab_counts_match_a_manual_tally() {
        let srcs = [
            "int f(int a) { a = a; return a; }",
            "int g(int b) { b = b; return b; }",
            "int h(int c) { c = 1; return c; }",
        ];
        let asts: Vec<Ast> = srcs.iter().map(|s| parse(s).unwrap()).collect();
        let mut tally: std::collections::HashMap<String, u32> = std::collections::HashMap::new();
        for ast in &asts {
            for st in extract_subtrees(ast).unwrap() {
                *tally.entry(st.serialization).or_insert(0) += 1;
            }
        }
        let vocab = build_vocab(&asts, 1);
        assert_eq!(vocab.subtree_entries.len(), tally.len());
        for (key, entry) in &vocab.subtree_entries {
            assert_eq!(entry.freq, tally[key], "freq mismatch for {key}");
        }
        // with a cutoff, the self-assignment (seen twice) stays, the rest
        // of the once-only keys drop out
        let vocab2 = build_vocab(&asts, 2);
        assert!(vocab2.subtree_entries.contains_key("(Assign VAR1 VAR1)"));
        assert!(vocab2.subtree_entries.len() < tally.len());
    }

    #[test]
    fn unseen_serialization_maps_to_unk() {
        let train = parse("int f(int a) { a = a; return a; }").unwrap();
        let vocab = build_vocab(std::slice::from_ref(&train), 1);
        let test = parse("int g(int z) { z = z * 9; return z; }").unwrap();
        let ep = encode_program(&test, &vocab, 0, 16, 16).unwrap();
        assert!(ep.subtree_ids.contains(&UNK));
    }

    #[test]
    fn padding_and_truncation_contract() {
        let ast = parse("int f(int a) { a = a; return a; }").unwrap();
        let vocab = build_vocab(std::slice::from_ref(&ast), 1);
        let ep = encode_program(&ast, &vocab, 1, 16, 8).unwrap();
        // the `a = a` subtree has 3 nodes: 3 real ids then 5 PADs
        let assign_pos = ep
            .serializations
            .iter()
            .position(|s| s == "(Assign VAR1 VAR1)")
            .unwrap();
        let seq = &ep.node_id_seqs[assign_pos];
        assert_eq!(ep.lengths[assign_pos], 3);
        assert!(seq[..3].iter().all(|&id| id != PAD));
        assert!(seq[3..].iter().all(|&id| id == PAD));
        assert_eq!(seq.len(), 8);
    }

    #[test]
    fn keep_largest_matches_sort_oracle() {
        let src = "int f(int a) { if (a > 0) { a = a + 1; } while (a > 9) { a = a - 2; } return a; }";
        let ast = parse(src).unwrap();
        let vocab = build_vocab(std::slice::from_ref(&ast), 1);
        let all = extract_subtrees(&ast).unwrap();
        assert!(all.len() > 3);
        let ep = encode_program(&ast, &vocab, 1, 3, 64).unwrap();
        let mut by_size: Vec<usize> = (0..all.len()).collect();
        by_size.sort_by_key(|&i| (std::cmp::Reverse(all[i].size), i));
        let mut expect: Vec<usize> = by_size[..3].to_vec();
        expect.sort_unstable();
        let expected_spans: Vec<Span> = expect.iter().map(|&i| all[i].span).collect();
        assert_eq!(ep.spans, expected_spans);
    }

    #[test]
    fn child_preorder_is_contiguous_in_parent_preorder() {
        let src = "int f(int a, int b) { if (a < b) { a = a + b; } return a; }";
        let ast = parse(src).unwrap();
        let subtrees = extract_subtrees(&ast).unwrap();
        for child in &subtrees {
            if child.root_path.is_empty() {
                continue;
            }
            let parent_path = &child.root_path[..child.root_path.len() - 1];
            if let Some(parent) = subtrees.iter().find(|s| s.root_path == parent_path) {
                let window = child.kinds_preorder.len();
                let found = parent
                    .kinds_preorder
                    .windows(window)
                    .any(|w| w == child.kinds_preorder.as_slice());
                assert!(found, "child pre-order not contiguous in parent");
            }
        }
    }
}
