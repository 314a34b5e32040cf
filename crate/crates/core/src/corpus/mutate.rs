//! Fault injection: seeded, category-tagged logical-error operators.
//!
//! Each operator proposes rewrite sites on the current AST; a chosen site
//! is applied as a source splice (so untouched bytes and earlier label
//! spans survive unchanged, shifted by the splice delta), the result is
//! re-parsed, and the interpreter must observe a different outcome from
//! the original template on at least one reference input before the
//! mutation is accepted. Every accepted mutation records an `ErrorLabel`
//! whose span lands exactly on a node of the mutated program's AST.

use rand::prelude::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::interp::{run_method, Value};
use super::LabeledProgram;
use crate::ast::{
    binop_precedence, declared_type, parse, render_expr, Ast, AstKind, AstNode, Span,
};
use crate::localize::{ErrorCategory, ErrorLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MutationOperator {
    pub name: &'static str,
    pub category: ErrorCategory,
}

/// The full operator catalog. Compilable-syntactic operators exploit
/// Java's non-short-circuit `&`/`|`; strategic operators break the
/// algorithm shape; conceptual operators corrupt operator semantics.
pub const OPERATOR_CATALOG: [MutationOperator; 12] = [
    MutationOperator {
        name: "and_to_bitand",
        category: ErrorCategory::CompilableSyntactic,
    },
    MutationOperator {
        name: "or_to_bitor",
        category: ErrorCategory::CompilableSyntactic,
    },
    MutationOperator {
        name: "cmp_off_by_one",
        category: ErrorCategory::Strategic,
    },
    MutationOperator {
        name: "swap_branches",
        category: ErrorCategory::Strategic,
    },
    MutationOperator {
        name: "wrong_loop_bound",
        category: ErrorCategory::Strategic,
    },
    MutationOperator {
        name: "negate_lone_if",
        category: ErrorCategory::Strategic,
    },
    MutationOperator {
        name: "early_return",
        category: ErrorCategory::Strategic,
    },
    MutationOperator {
        name: "eq_to_assign",
        category: ErrorCategory::Conceptual,
    },
    MutationOperator {
        name: "mul_to_div",
        category: ErrorCategory::Conceptual,
    },
    MutationOperator {
        name: "accum_reset_in_loop",
        category: ErrorCategory::Conceptual,
    },
    MutationOperator {
        name: "paren_removal",
        category: ErrorCategory::Conceptual,
    },
    MutationOperator {
        name: "mod_to_div",
        category: ErrorCategory::Conceptual,
    },
];

pub fn operators_in(category: ErrorCategory) -> Vec<MutationOperator> {
    OPERATOR_CATALOG
        .iter()
        .copied()
        .filter(|o| o.category == category)
        .collect()
}

#[derive(Debug, Error)]
pub enum MutateError {
    #[error("only {applied} of {requested} requested mutation sites were applicable")]
    NoApplicableSite { requested: usize, applied: usize },
    #[error("mutation target does not parse: {0}")]
    Unparseable(String),
    #[error("mutation target must be a correct (label=1) program")]
    NotCorrect,
}

/// One concrete rewrite: replace `splice` with `replacement`, label the
/// bytes at `label` (post-splice coordinates) with the operator category.
#[derive(Debug, Clone)]
struct Candidate {
    op: MutationOperator,
    splice: (usize, usize),
    replacement: String,
    label: Span,
}

/// Apply `k` operators at distinct, non-overlapping sites. Each applied
/// mutation must change the program's outcome on at least one reference
/// input relative to the unmutated original.
pub fn mutate(
    program: &LabeledProgram,
    operators: &[MutationOperator],
    k: usize,
    seed: u64,
    inputs: &[Vec<Value>],
) -> Result<LabeledProgram, MutateError> {
    assert!(k >= 1, "k must be at least 1");
    if program.label != 1 {
        return Err(MutateError::NotCorrect);
    }
    let original = parse(&program.source).map_err(|e| MutateError::Unparseable(e.to_string()))?;
    let original_outcomes: Vec<Result<Value, ()>> = inputs
        .iter()
        .map(|i| run_method(&original, i).map_err(|_| ()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut src = program.source.clone();
    let mut labels: Vec<ErrorLabel> = Vec::new();
    let mut applied_ops: Vec<String> = Vec::new();

    for step in 0..k {
        let ast = parse(&src).expect("accepted mutations keep the program parseable");
        let mut candidates: Vec<Candidate> = operators
            .iter()
            .flat_map(|op| candidates_for(*op, &ast, &src))
            .filter(|c| {
                labels
                    .iter()
                    .all(|l| !splice_touches(c.splice, &l.span) && !spans_overlap(&c.label, &l.span))
            })
            .collect();
        candidates.shuffle(&mut rng);

        let mut accepted = None;
        for cand in candidates {
            let next_src = apply_splice(&src, cand.splice, &cand.replacement);
            let Ok(next_ast) = parse(&next_src) else {
                debug_assert!(false, "operator produced unparseable code:\n{next_src}");
                continue;
            };
            let differs = inputs.iter().zip(&original_outcomes).any(|(input, orig)| {
                let got = run_method(&next_ast, input).map_err(|_| ());
                &got != orig
            });
            if differs {
                accepted = Some((cand, next_src));
                break;
            }
        }
        let Some((cand, next_src)) = accepted else {
            return Err(MutateError::NoApplicableSite {
                requested: k,
                applied: step,
            });
        };
        let delta = cand.replacement.len() as isize - (cand.splice.1 - cand.splice.0) as isize;
        for l in &mut labels {
            if l.span.start >= cand.splice.1 {
                l.span = Span::new(
                    (l.span.start as isize + delta) as usize,
                    (l.span.end as isize + delta) as usize,
                );
            }
        }
        labels.push(ErrorLabel {
            span: cand.label,
            category: cand.op.category,
        });
        applied_ops.push(cand.op.name.to_string());
        src = next_src;
    }

    labels.sort_by_key(|l| (l.span.start, l.span.end));
    debug_assert!(labels_land_on_nodes(&src, &labels));

    let mut mutated = program.clone();
    mutated.source = src;
    mutated.label = 0;
    mutated.errors = labels;
    mutated.provenance.operators = applied_ops;
    mutated.provenance.mutation_seed = Some(seed);
    Ok(mutated)
}

fn apply_splice(src: &str, (start, end): (usize, usize), replacement: &str) -> String {
    let mut out = String::with_capacity(src.len() + replacement.len());
    out.push_str(&src[..start]);
    out.push_str(replacement);
    out.push_str(&src[end..]);
    out
}

fn spans_overlap(a: &Span, b: &Span) -> bool {
    a.start < b.end && b.start < a.end
}

/// Whether a splice region (possibly zero-width insertion) would disturb a
/// label span.
fn splice_touches((s, e): (usize, usize), label: &Span) -> bool {
    if s == e {
        label.start < s && s < label.end
    } else {
        s < label.end && label.start < e
    }
}

fn labels_land_on_nodes(src: &str, labels: &[ErrorLabel]) -> bool {
    let Ok(ast) = parse(src) else { return false };
    let mut spans = Vec::new();
    ast.root.walk(&mut |_, n| spans.push(n.span));
    labels.iter().all(|l| spans.contains(&l.span))
}

/// Parenthesize a rewritten expression only where its new top-level
/// operator would otherwise be captured by the surrounding context.
fn needs_parens(root: &AstNode, path: &[usize], new_prec: u8) -> bool {
    if path.is_empty() {
        return false;
    }
    let parent = root
        .at_path(&path[..path.len() - 1])
        .expect("parent path is valid");
    let pos = *path.last().unwrap();
    match parent.kind {
        AstKind::BinaryOp => {
            let p = binop_precedence(parent.token.as_deref().unwrap_or("")).unwrap_or(1);
            if pos == 0 {
                new_prec < p
            } else if parent.token.as_deref() == Some("=") {
                new_prec < p
            } else {
                new_prec <= p
            }
        }
        AstKind::UnaryOp => true,
        AstKind::ArrayIndex => pos == 0,
        _ => false,
    }
}

fn rewritten_expr(root: &AstNode, path: &[usize], node: AstNode, new_prec: Option<u8>) -> String {
    let text = render_expr(&node);
    match new_prec {
        Some(p) if needs_parens(root, path, p) => format!("({text})"),
        _ => text,
    }
}

/// Declarations visible at byte position `pos`: all parameters plus every
/// `VarDecl` whose block (or `for` header) scope covers `pos`.
fn visible_decls(ast: &Ast, pos: usize) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for p in &ast.root.children {
        if p.kind == AstKind::Param {
            if let (Some(name), Some(ty)) = (p.token.clone(), declared_type(&ast.source, p)) {
                out.push((name, ty));
            }
        }
    }
    ast.root.walk(&mut |path, node| {
        if node.kind != AstKind::VarDecl {
            return;
        }
        if path.is_empty() {
            return;
        }
        let parent = ast
            .root
            .at_path(&path[..path.len() - 1])
            .expect("walk paths are valid");
        let scope_end = match parent.kind {
            AstKind::Block | AstKind::For => parent.span.end,
            _ => return,
        };
        if node.span.end <= pos && pos < scope_end {
            if let (Some(name), Some(ty)) = (node.token.clone(), declared_type(&ast.source, node))
            {
                out.push((name, ty));
            }
        }
    });
    out
}

fn candidates_for(op: MutationOperator, ast: &Ast, src: &str) -> Vec<Candidate> {
    match op.name {
        "and_to_bitand" => token_swap(op, ast, &[("&&", "&")]),
        "or_to_bitor" => token_swap(op, ast, &[("||", "|")]),
        "cmp_off_by_one" => token_swap(op, ast, &[("<", "<="), ("<=", "<"), (">", ">="), (">=", ">")]),
        "mul_to_div" => token_swap(op, ast, &[("*", "/")]),
        "mod_to_div" => token_swap(op, ast, &[("%", "/")]),
        "eq_to_assign" => eq_to_assign(op, ast),
        "swap_branches" => swap_branches(op, ast, src),
        "negate_lone_if" => negate_lone_if(op, ast, src),
        "wrong_loop_bound" => wrong_loop_bound(op, ast),
        "early_return" => early_return(op, ast, src),
        "accum_reset_in_loop" => accum_reset(op, ast, src),
        "paren_removal" => paren_removal(op, ast),
        other => panic!("unknown operator `{other}`"),
    }
}

fn token_swap(
    op: MutationOperator,
    ast: &Ast,
    table: &[(&'static str, &'static str)],
) -> Vec<Candidate> {
    let mut out = Vec::new();
    ast.root.walk(&mut |path, node| {
        if node.kind != AstKind::BinaryOp {
            return;
        }
        let tok = node.token.as_deref().unwrap_or("");
        let Some((_, new_tok)) = table.iter().find(|(from, _)| *from == tok) else {
            return;
        };
        let mut modified = node.clone();
        modified.token = Some(new_tok.to_string());
        let new_prec = binop_precedence(new_tok);
        let replacement = rewritten_expr(&ast.root, path, modified, new_prec);
        out.push(Candidate {
            op,
            splice: (node.span.start, node.span.end),
            label: Span::new(node.span.start, node.span.start + replacement.len()),
            replacement,
        });
    });
    out
}

fn eq_to_assign(op: MutationOperator, ast: &Ast) -> Vec<Candidate> {
    let mut out = Vec::new();
    ast.root.walk(&mut |path, node| {
        if node.kind != AstKind::BinaryOp || node.token.as_deref() != Some("==") {
            return;
        }
        let lhs = &node.children[0];
        if lhs.kind != AstKind::Ident {
            return;
        }
        let name = lhs.token.as_deref().unwrap_or("");
        let visible = visible_decls(ast, node.span.start);
        if !visible
            .iter()
            .any(|(n, ty)| n == name && ty == "boolean")
        {
            return;
        }
        let mut modified = node.clone();
        modified.token = Some("=".to_string());
        let replacement = rewritten_expr(&ast.root, path, modified, binop_precedence("="));
        out.push(Candidate {
            op,
            splice: (node.span.start, node.span.end),
            label: Span::new(node.span.start, node.span.start + replacement.len()),
            replacement,
        });
    });
    out
}

fn swap_branches(op: MutationOperator, ast: &Ast, src: &str) -> Vec<Candidate> {
    let mut out = Vec::new();
    ast.root.walk(&mut |_, node| {
        if node.kind != AstKind::If || node.children.len() != 3 {
            return;
        }
        let (then_b, else_b) = (&node.children[1], &node.children[2]);
        if else_b.kind != AstKind::Block {
            return;
        }
        let replacement = format!(
            "{}{}{}",
            else_b.span.text(src),
            Span::new(then_b.span.end, else_b.span.start).text(src),
            then_b.span.text(src),
        );
        out.push(Candidate {
            op,
            splice: (then_b.span.start, else_b.span.end),
            replacement,
            // byte count is preserved, so the whole If keeps its span
            label: node.span,
        });
    });
    out
}

fn negate_lone_if(op: MutationOperator, ast: &Ast, src: &str) -> Vec<Candidate> {
    let mut out = Vec::new();
    ast.root.walk(&mut |_, node| {
        if node.kind != AstKind::If || node.children.len() != 2 {
            return;
        }
        let cond = &node.children[0];
        let replacement = format!("!({})", cond.span.text(src));
        out.push(Candidate {
            op,
            splice: (cond.span.start, cond.span.end),
            label: Span::new(cond.span.start, cond.span.start + replacement.len()),
            replacement,
        });
    });
    out
}

fn wrong_loop_bound(op: MutationOperator, ast: &Ast) -> Vec<Candidate> {
    let mut out = Vec::new();
    ast.root.walk(&mut |_, node| {
        let cond = match node.kind {
            AstKind::While => &node.children[0],
            AstKind::For => &node.children[1],
            _ => return,
        };
        if cond.kind != AstKind::BinaryOp
            || !matches!(cond.token.as_deref(), Some("<" | "<=" | ">" | ">="))
        {
            return;
        }
        let rhs = &cond.children[1];
        if rhs.kind != AstKind::Ident {
            return;
        }
        let bound = rhs.token.as_deref().unwrap_or("");
        let lhs_name = cond.children[0].token.as_deref().unwrap_or("");
        for (name, ty) in visible_decls(ast, node.span.start) {
            if ty == "int" && name != bound && name != lhs_name {
                out.push(Candidate {
                    op,
                    splice: (rhs.span.start, rhs.span.end),
                    label: Span::new(rhs.span.start, rhs.span.start + name.len()),
                    replacement: name,
                });
            }
        }
    });
    out
}

/// Copy the method's final `return` into the end of an if-without-else
/// branch, so the method bails out early whenever the condition holds.
fn early_return(op: MutationOperator, ast: &Ast, src: &str) -> Vec<Candidate> {
    let body = ast.root.children.last().expect("method has a body");
    let Some(final_ret) = body.children.last().filter(|s| s.kind == AstKind::Return) else {
        return Vec::new();
    };
    let mut ret_idents = Vec::new();
    final_ret.walk(&mut |_, n| {
        if n.kind == AstKind::Ident {
            ret_idents.push(n.token.clone().unwrap_or_default());
        }
    });
    let ret_text = final_ret.span.text(src).to_string();

    let mut out = Vec::new();
    ast.root.walk(&mut |_, node| {
        if node.kind != AstKind::If || node.children.len() != 2 {
            return;
        }
        let then_b = &node.children[1];
        if node.span.end >= final_ret.span.start {
            return;
        }
        if then_b
            .children
            .last()
            .map(|s| s.kind == AstKind::Return)
            .unwrap_or(false)
        {
            return;
        }
        let visible = visible_decls(ast, node.span.start);
        if !ret_idents
            .iter()
            .all(|id| visible.iter().any(|(n, _)| n == id))
        {
            return;
        }
        let insert_at = then_b.span.end - 1;
        out.push(Candidate {
            op,
            splice: (insert_at, insert_at),
            replacement: format!(" {ret_text} "),
            label: Span::new(insert_at + 1, insert_at + 1 + ret_text.len()),
        });
    });
    out
}

/// Re-initialize an accumulator at the top of the loop that updates it.
fn accum_reset(op: MutationOperator, ast: &Ast, src: &str) -> Vec<Candidate> {
    let mut out = Vec::new();
    ast.root.walk(&mut |_, node| {
        if node.kind != AstKind::Block {
            return;
        }
        for (j, decl) in node.children.iter().enumerate() {
            if decl.kind != AstKind::VarDecl || decl.children[0].kind != AstKind::IntLit {
                continue;
            }
            let Some(name) = decl.token.as_deref() else { continue };
            let init = decl.children[0].token.as_deref().unwrap_or("0");
            for loop_node in &node.children[j + 1..] {
                let loop_body = match loop_node.kind {
                    AstKind::While => &loop_node.children[1],
                    AstKind::For => &loop_node.children[3],
                    _ => continue,
                };
                let mut assigns_name = false;
                loop_body.walk(&mut |_, n| {
                    let is_assign = n.kind == AstKind::Assign
                        || (n.kind == AstKind::BinaryOp && n.token.as_deref() == Some("="));
                    if is_assign
                        && n.children[0].kind == AstKind::Ident
                        && n.children[0].token.as_deref() == Some(name)
                    {
                        assigns_name = true;
                    }
                });
                if !assigns_name {
                    continue;
                }
                let _ = src;
                let stmt = format!("{name} = {init};");
                let insert_at = loop_body.span.start + 1;
                out.push(Candidate {
                    op,
                    splice: (insert_at, insert_at),
                    label: Span::new(insert_at + 1, insert_at + 1 + stmt.len()),
                    replacement: format!(" {stmt}"),
                });
            }
        }
    });
    out
}

/// Rewrite `(p ∘ q) ⊗ r` to the no-parens reading `p ∘ (q ⊗ r)` — the
/// grouping a student who forgot the parentheses would get.
fn paren_removal(op: MutationOperator, ast: &Ast) -> Vec<Candidate> {
    let mut out = Vec::new();
    ast.root.walk(&mut |path, node| {
        if node.kind != AstKind::BinaryOp {
            return;
        }
        let outer = node.token.as_deref().unwrap_or("");
        let left = &node.children[0];
        if left.kind != AstKind::BinaryOp {
            return;
        }
        let inner = left.token.as_deref().unwrap_or("");
        let (Some(po), Some(pi)) = (binop_precedence(outer), binop_precedence(inner)) else {
            return;
        };
        if pi >= po || inner == "=" {
            return;
        }
        let reassociated = AstNode::new(
            AstKind::BinaryOp,
            Some(inner.to_string()),
            node.span,
            vec![
                left.children[0].clone(),
                AstNode::new(
                    AstKind::BinaryOp,
                    Some(outer.to_string()),
                    node.span,
                    vec![left.children[1].clone(), node.children[1].clone()],
                ),
            ],
        );
        let replacement = rewritten_expr(&ast.root, path, reassociated, Some(pi));
        out.push(Candidate {
            op,
            splice: (node.span.start, node.span.end),
            label: Span::new(node.span.start, node.span.start + replacement.len()),
            replacement,
        });
    });
    out
}

#[cfg(test)]
mod tests {
    use super::super::templates::{instantiate, TEMPLATES};
    use super::super::{LabeledProgram, Provenance, Split};
    use super::*;

    fn program_from(template: &str, seed_value: u64) -> (LabeledProgram, Vec<Vec<Value>>) {
        let inst = instantiate(template, seed_value);
        (
            LabeledProgram {
                id: format!("{template}_{seed_value}"),
                problem_id: template.to_string(),
                student_id: None,
                source: inst.source,
                label: 1,
                errors: Vec::new(),
                split: Split::Train,
                provenance: Provenance {
                    template: template.to_string(),
                    instance_seed: seed_value,
                    operators: Vec::new(),
                    mutation_seed: None,
                },
            },
            inst.inputs,
        )
    }

    #[test]
    fn single_mutation_produces_one_label_on_a_node_span() {
        for t in &TEMPLATES {
            for s in 0..4 {
                let (prog, inputs) = program_from(t.name, s);
                let mutated = mutate(&prog, &OPERATOR_CATALOG, 1, s + 50, &inputs)
                    .unwrap_or_else(|e| panic!("{}: {e}", t.name));
                assert_eq!(mutated.label, 0);
                assert_eq!(mutated.errors.len(), 1);
                assert!(labels_land_on_nodes(&mutated.source, &mutated.errors));
                // behavior differs from the template on some input
                let orig = parse(&prog.source).unwrap();
                let mutant = parse(&mutated.source).unwrap();
                let differs = inputs.iter().any(|i| {
                    run_method(&orig, i).map_err(|_| ()) != run_method(&mutant, i).map_err(|_| ())
                });
                assert!(differs, "{}: mutant behaves like the original", t.name);
            }
        }
    }

    #[test]
    fn k_three_yields_three_distinct_labels() {
        let (prog, inputs) = program_from("canSplit", 9);
        let mutated = mutate(&prog, &OPERATOR_CATALOG, 3, 123, &inputs).unwrap();
        assert_eq!(mutated.errors.len(), 3);
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(
                    !spans_overlap(&mutated.errors[i].span, &mutated.errors[j].span),
                    "labels overlap: {:?}",
                    mutated.errors
                );
            }
        }
        assert!(labels_land_on_nodes(&mutated.source, &mutated.errors));
    }

    #[test]
    fn and_to_bitand_lands_on_the_binary_op_with_its_category() {
        // findFirst variant 0 has the guarded `i < length(xs) && xs[i] != t`
        let inst =
            super::super::templates::instantiate_controlled("findFirst", 0, 3, 3, 3);
        let prog = LabeledProgram {
            id: "x".into(),
            problem_id: "findFirst".into(),
            student_id: None,
            source: inst.source,
            label: 1,
            errors: Vec::new(),
            split: Split::Train,
            provenance: Provenance::default(),
        };
        let ops = [OPERATOR_CATALOG[0]];
        let mutated = mutate(&prog, &ops, 1, 7, &inst.inputs).unwrap();
        assert_eq!(
            mutated.errors[0].category,
            ErrorCategory::CompilableSyntactic
        );
        let text = mutated.errors[0].span.text(&mutated.source);
        assert!(text.contains(" & "), "labeled text: {text}");
        assert!(!text.contains("&&"));
    }

    #[test]
    fn every_operator_has_a_verifiable_site_somewhere() {
        for op in OPERATOR_CATALOG {
            let mut hit = false;
            'outer: for t in &TEMPLATES {
                for s in 0..8u64 {
                    let (prog, inputs) = program_from(t.name, s);
                    if mutate(&prog, &[op], 1, s + 1, &inputs).is_ok() {
                        hit = true;
                        break 'outer;
                    }
                }
            }
            assert!(hit, "operator {} never applied", op.name);
        }
    }

    #[test]
    fn impossible_k_reports_applied_count() {
        let (prog, inputs) = program_from("speedTicket", 2);
        let err = mutate(&prog, &OPERATOR_CATALOG, 50, 5, &inputs).unwrap_err();
        match err {
            MutateError::NoApplicableSite { requested, applied } => {
                assert_eq!(requested, 50);
                assert!(applied > 0 && applied < 50);
            }
            other => panic!("expected NoApplicableSite, got {other:?}"),
        }
    }

    #[test]
    fn mutation_is_deterministic() {
        let (prog, inputs) = program_from("sumSkip", 11);
        let a = mutate(&prog, &OPERATOR_CATALOG, 2, 77, &inputs).unwrap();
        let b = mutate(&prog, &OPERATOR_CATALOG, 2, 77, &inputs).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.errors, b.errors);
        let c = mutate(&prog, &OPERATOR_CATALOG, 2, 78, &inputs).unwrap();
        assert!(c.source != a.source || c.errors != a.errors);
    }
}
