//! Canonical source rendering.
//!
//! Expressions render from the tree alone, inserting parentheses wherever
//! the child binds looser than its context so that `parse(render(t))` has
//! the shape of `t`. Declarations and method headers copy their type text
//! from the original source, since the tree stores only declared names.

use super::{binop_precedence, Ast, AstKind, AstNode};

/// Render an expression node to canonical text.
pub fn render_expr(node: &AstNode) -> String {
    let mut out = String::new();
    write_expr(node, &mut out);
    out
}

fn prec_of(node: &AstNode) -> Option<u8> {
    match node.kind {
        AstKind::BinaryOp => binop_precedence(node.token.as_deref().unwrap_or("")),
        _ => None,
    }
}

fn write_child(child: &AstNode, parent_prec: u8, needs_paren_at_equal: bool, out: &mut String) {
    let wrap = match prec_of(child) {
        Some(cp) => cp < parent_prec || (cp == parent_prec && needs_paren_at_equal),
        None => false,
    };
    if wrap {
        out.push('(');
        write_expr(child, out);
        out.push(')');
    } else {
        write_expr(child, out);
    }
}

fn write_expr(node: &AstNode, out: &mut String) {
    match node.kind {
        AstKind::IntLit | AstKind::BoolLit | AstKind::Ident => {
            out.push_str(node.token.as_deref().unwrap_or(""));
        }
        AstKind::StringLit => {
            out.push('"');
            for ch in node.token.as_deref().unwrap_or("").chars() {
                match ch {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
        AstKind::BinaryOp => {
            let op = node.token.as_deref().unwrap_or("?");
            let p = binop_precedence(op).unwrap_or(1);
            let right_assoc = op == "=";
            write_child(&node.children[0], p, right_assoc, out);
            out.push(' ');
            out.push_str(op);
            out.push(' ');
            write_child(&node.children[1], p, !right_assoc, out);
        }
        AstKind::UnaryOp => {
            out.push_str(node.token.as_deref().unwrap_or("?"));
            let operand = &node.children[0];
            if matches!(operand.kind, AstKind::BinaryOp) {
                out.push('(');
                write_expr(operand, out);
                out.push(')');
            } else {
                write_expr(operand, out);
            }
        }
        AstKind::Call => {
            out.push_str(node.token.as_deref().unwrap_or("?"));
            out.push('(');
            for (i, arg) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(arg, out);
            }
            out.push(')');
        }
        AstKind::ArrayIndex => {
            let base = &node.children[0];
            if matches!(base.kind, AstKind::BinaryOp | AstKind::UnaryOp) {
                out.push('(');
                write_expr(base, out);
                out.push(')');
            } else {
                write_expr(base, out);
            }
            out.push('[');
            write_expr(&node.children[1], out);
            out.push(']');
        }
        // Statement kinds do not occur inside expressions; `=` appears as a
        // BinaryOp, not an Assign, in expression position.
        other => panic!("render_expr on non-expression node {other:?}"),
    }
}

/// Type-and-name prefix of a declaration (`int s`), read from the source.
fn decl_prefix(node: &AstNode, source: &str) -> String {
    let text = node.span.text(source);
    let head = text.split('=').next().unwrap_or(text).trim_end();
    head.to_string()
}

/// Render one statement at the given indent level (4 spaces per level).
pub fn render_stmt(node: &AstNode, source: &str, indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    match node.kind {
        AstKind::VarDecl => {
            out.push_str(&pad);
            out.push_str(&decl_prefix(node, source));
            out.push_str(" = ");
            write_expr(&node.children[0], out);
            out.push_str(";\n");
        }
        AstKind::Assign => {
            out.push_str(&pad);
            write_expr(&node.children[0], out);
            out.push_str(" = ");
            write_expr(&node.children[1], out);
            out.push_str(";\n");
        }
        AstKind::Call => {
            out.push_str(&pad);
            write_expr(node, out);
            out.push_str(";\n");
        }
        AstKind::Return => {
            out.push_str(&pad);
            out.push_str("return ");
            write_expr(&node.children[0], out);
            out.push_str(";\n");
        }
        AstKind::If => {
            out.push_str(&pad);
            write_if(node, source, indent, out);
        }
        AstKind::While => {
            out.push_str(&pad);
            out.push_str("while (");
            write_expr(&node.children[0], out);
            out.push_str(") ");
            render_block(&node.children[1], source, indent, out);
            out.push('\n');
        }
        AstKind::For => {
            out.push_str(&pad);
            out.push_str("for (");
            let init = &node.children[0];
            if init.kind == AstKind::VarDecl {
                out.push_str(&decl_prefix(init, source));
                out.push_str(" = ");
                write_expr(&init.children[0], out);
            } else {
                write_expr(&init.children[0], out);
                out.push_str(" = ");
                write_expr(&init.children[1], out);
            }
            out.push_str("; ");
            write_expr(&node.children[1], out);
            out.push_str("; ");
            let update = &node.children[2];
            write_expr(&update.children[0], out);
            out.push_str(" = ");
            write_expr(&update.children[1], out);
            out.push_str(") ");
            render_block(&node.children[3], source, indent, out);
            out.push('\n');
        }
        other => panic!("render_stmt on non-statement node {other:?}"),
    }
}

fn write_if(node: &AstNode, source: &str, indent: usize, out: &mut String) {
    out.push_str("if (");
    write_expr(&node.children[0], out);
    out.push_str(") ");
    render_block(&node.children[1], source, indent, out);
    if let Some(alt) = node.children.get(2) {
        out.push_str(" else ");
        if alt.kind == AstKind::If {
            write_if(alt, source, indent, out);
            return;
        }
        render_block(alt, source, indent, out);
    }
    out.push('\n');
}

fn render_block(block: &AstNode, source: &str, indent: usize, out: &mut String) {
    out.push_str("{\n");
    for stmt in &block.children {
        render_stmt(stmt, source, indent + 1, out);
    }
    out.push_str(&"    ".repeat(indent));
    out.push('}');
}

/// Render the whole method in canonical formatting.
pub fn render_method(ast: &Ast) -> String {
    let root = &ast.root;
    let header_text = root.span.text(&ast.source);
    let header = header_text
        .split('(')
        .next()
        .unwrap_or(header_text)
        .trim_end();
    let mut out = String::new();
    out.push_str(header);
    out.push('(');
    let params: Vec<&AstNode> = root
        .children
        .iter()
        .filter(|c| c.kind == AstKind::Param)
        .collect();
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(p.span.text(&ast.source));
    }
    out.push_str(") ");
    let body = root.children.last().expect("method has a body");
    render_block(body, &ast.source, 0, &mut out);
    out.push('\n');
    out
}

/// Structural equality ignoring spans (kind, token, and shape).
pub fn same_shape(a: &AstNode, b: &AstNode) -> bool {
    a.kind == b.kind
        && a.token == b.token
        && a.children.len() == b.children.len()
        && a.children
            .iter()
            .zip(&b.children)
            .all(|(x, y)| same_shape(x, y))
}
