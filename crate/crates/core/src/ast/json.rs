//! AST interchange format.
//!
//! One JSON object per node: `{kind, token, span: [start, end], children}`,
//! children in source order. `ast_from_json` accepts trees produced by
//! external parsers as long as spans index into the supplied source text.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::{Ast, AstKind, AstNode, Span};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("{path}: missing field `{field}`")]
    MissingField { path: String, field: &'static str },
    #[error("{path}: field `{field}` must be {expected}")]
    WrongType {
        path: String,
        field: &'static str,
        expected: &'static str,
    },
    #[error("{path}: unknown kind `{kind}`")]
    UnknownKind { path: String, kind: String },
    #[error("{path}: {detail}")]
    Invariant { path: String, detail: String },
}

#[derive(Serialize)]
struct JsonNode<'a> {
    kind: &'static str,
    token: Option<&'a str>,
    span: (usize, usize),
    children: Vec<JsonNode<'a>>,
}

fn to_json_node(node: &AstNode) -> JsonNode<'_> {
    JsonNode {
        kind: node.kind.as_str(),
        token: node.token.as_deref(),
        span: (node.span.start, node.span.end),
        children: node.children.iter().map(to_json_node).collect(),
    }
}

/// Serialize an AST to the interchange schema (root node object).
pub fn ast_to_json(ast: &Ast) -> String {
    serde_json::to_string(&to_json_node(&ast.root)).expect("AST serialization cannot fail")
}

/// Parse and validate an interchange-schema tree against `source`; all
/// structural invariants are enforced and violations name the node path.
pub fn ast_from_json(json: &str, source: &str) -> Result<Ast, SchemaError> {
    let value: Value = serde_json::from_str(json).map_err(|e| SchemaError::Json(e.to_string()))?;
    let root = node_from_value(&value, "root".to_string())?;
    root.check_invariants(source.len())
        .map_err(|msg| match msg.split_once(": ") {
            Some((path, detail)) => SchemaError::Invariant {
                path: path.to_string(),
                detail: detail.to_string(),
            },
            None => SchemaError::Invariant {
                path: "root".to_string(),
                detail: msg,
            },
        })?;
    Ok(Ast::new(root, source.to_string()))
}

fn node_from_value(value: &Value, path: String) -> Result<AstNode, SchemaError> {
    let obj = value.as_object().ok_or_else(|| SchemaError::WrongType {
        path: path.clone(),
        field: "node",
        expected: "an object",
    })?;

    let kind_str = obj
        .get("kind")
        .ok_or_else(|| SchemaError::MissingField {
            path: path.clone(),
            field: "kind",
        })?
        .as_str()
        .ok_or_else(|| SchemaError::WrongType {
            path: path.clone(),
            field: "kind",
            expected: "a string",
        })?;
    let kind = AstKind::from_str(kind_str).ok_or_else(|| SchemaError::UnknownKind {
        path: path.clone(),
        kind: kind_str.to_string(),
    })?;

    let token = match obj.get("token") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(SchemaError::WrongType {
                path,
                field: "token",
                expected: "a string or null",
            })
        }
    };

    let span_val = obj.get("span").ok_or_else(|| SchemaError::MissingField {
        path: path.clone(),
        field: "span",
    })?;
    let pair = span_val
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| SchemaError::WrongType {
            path: path.clone(),
            field: "span",
            expected: "a [start, end] array",
        })?;
    let start = pair[0].as_u64().ok_or_else(|| SchemaError::WrongType {
        path: path.clone(),
        field: "span",
        expected: "non-negative integer offsets",
    })? as usize;
    let end = pair[1].as_u64().ok_or_else(|| SchemaError::WrongType {
        path: path.clone(),
        field: "span",
        expected: "non-negative integer offsets",
    })? as usize;
    if start >= end {
        return Err(SchemaError::Invariant {
            path,
            detail: format!("span start {start} must be less than end {end}"),
        });
    }

    let mut children = Vec::new();
    if let Some(kids) = obj.get("children") {
        let arr = kids.as_array().ok_or_else(|| SchemaError::WrongType {
            path: path.clone(),
            field: "children",
            expected: "an array",
        })?;
        for (i, kid) in arr.iter().enumerate() {
            children.push(node_from_value(kid, format!("{path}.{i}"))?);
        }
    }

    Ok(AstNode::new(kind, token, Span { start, end }, children))
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn root_object_has_method_kind() {
        let ast = parse("int f() { return 0; }").unwrap();
        let json = ast_to_json(&ast);
        let v: Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["kind"], "MethodDecl");
        assert_eq!(v["span"][0], 0);
    }

    #[test]
    fn roundtrip_restores_the_exact_tree() {
        let src = "int g(int n) { int s = 0; while (s < n) { s = s + 2; } return s; }";
        let ast = parse(src).unwrap();
        let back = ast_from_json(&ast_to_json(&ast), src).unwrap();
        assert_eq!(ast.root, back.root);
        assert_eq!(ast.node_count, back.node_count);
    }

    #[test]
    fn children_appear_in_source_order() {
        let src = "int f(int a, int b) { return a; }";
        let ast = parse(src).unwrap();
        let v: Value = serde_json::from_str(&ast_to_json(&ast)).unwrap();
        let kids = v["children"].as_array().unwrap();
        assert_eq!(kids[0]["token"], "a");
        assert_eq!(kids[1]["token"], "b");
        let spans: Vec<u64> = kids.iter().map(|k| k["span"][0].as_u64().unwrap()).collect();
        let mut sorted = spans.clone();
        sorted.sort_unstable();
        assert_eq!(spans, sorted);
    }

    #[test]
    fn reversed_span_names_the_node_path() {
        let json = r#"{"kind":"MethodDecl","token":"f","span":[0,10],
            "children":[{"kind":"Block","token":null,"span":[5,3],"children":[]}]}"#;
        let err = ast_from_json(json, "int f() {}").unwrap_err();
        match err {
            SchemaError::Invariant { path, .. } => assert_eq!(path, "root.0"),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let json = r#"{"kind":"Lambda","token":null,"span":[0,5],"children":[]}"#;
        let err = ast_from_json(json, "xxxxx").unwrap_err();
        match err {
            SchemaError::UnknownKind { kind, .. } => assert_eq!(kind, "Lambda"),
            other => panic!("expected unknown kind, got {other:?}"),
        }
    }

    #[test]
    fn span_past_source_end_is_rejected() {
        let json = r#"{"kind":"Ident","token":"x","span":[0,99],"children":[]}"#;
        assert!(matches!(
            ast_from_json(json, "x").unwrap_err(),
            SchemaError::Invariant { .. }
        ));
    }

    #[test]
    fn leaf_with_children_is_rejected() {
        let json = r#"{"kind":"Ident","token":"x","span":[0,5],
            "children":[{"kind":"IntLit","token":"1","span":[1,2],"children":[]}]}"#;
        assert!(matches!(
            ast_from_json(json, "xxxxx").unwrap_err(),
            SchemaError::Invariant { .. }
        ));
    }
}
