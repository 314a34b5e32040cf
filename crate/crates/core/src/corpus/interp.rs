//! Reference interpreter for the method subset.
//!
//! Exists only to validate generated data: template instances must agree
//! with their specification closures, and every mutant must differ from
//! its template on at least one reference input. It is never visible to
//! the models — training uses correctness labels alone.
//!
//! Semantics follow Java for the subset: `int` is wrapping 64-bit here
//! (desk inputs stay far from the edges), `/` and `%` truncate toward
//! zero, `&&`/`||` short-circuit while `&`/`|` evaluate both sides, and
//! assignment is an expression yielding the assigned value. A step budget
//! turns runaway loops into `StepLimit` errors.

use std::fmt;

use thiserror::Error;

use crate::ast::{Ast, AstKind, AstNode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
    IntArr(Vec<i64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v:?}"),
            Value::IntArr(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("division by zero")]
    DivByZero,
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: i64, len: usize },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("step budget exhausted (non-terminating program?)")]
    StepLimit,
    #[error("method finished without returning")]
    NoReturn,
}

/// How a run ended; mutants are compared to templates on this.
pub type Outcome = Result<Value, RuntimeError>;

const DEFAULT_BUDGET: u64 = 200_000;

struct Scope {
    vars: Vec<(String, Value)>,
}

struct Interp<'a> {
    source: &'a str,
    scopes: Vec<Scope>,
    steps: u64,
}

enum Flow {
    Normal,
    Return(Value),
}

/// Run a parsed method on positional arguments.
pub fn run_method(ast: &Ast, args: &[Value]) -> Outcome {
    run_method_with_budget(ast, args, DEFAULT_BUDGET)
}

pub fn run_method_with_budget(ast: &Ast, args: &[Value], budget: u64) -> Outcome {
    let params: Vec<&AstNode> = ast
        .root
        .children
        .iter()
        .filter(|c| c.kind == AstKind::Param)
        .collect();
    if params.len() != args.len() {
        return Err(RuntimeError::Type(format!(
            "expected {} arguments, got {}",
            params.len(),
            args.len()
        )));
    }
    let mut interp = Interp {
        source: &ast.source,
        scopes: vec![Scope { vars: Vec::new() }],
        steps: budget,
    };
    for (p, v) in params.iter().zip(args) {
        interp.declare(p.token.as_deref().unwrap_or(""), v.clone())?;
    }
    let body = ast.root.children.last().expect("method has a body");
    match interp.exec_block(body)? {
        Flow::Return(v) => Ok(v),
        Flow::Normal => Err(RuntimeError::NoReturn),
    }
}

impl Interp<'_> {
    fn tick(&mut self) -> Result<(), RuntimeError> {
        if self.steps == 0 {
            return Err(RuntimeError::StepLimit);
        }
        self.steps -= 1;
        Ok(())
    }

    fn declare(&mut self, name: &str, value: Value) -> Result<(), RuntimeError> {
        let scope = self.scopes.last_mut().expect("scope stack never empty");
        if scope.vars.iter().any(|(n, _)| n == name) {
            return Err(RuntimeError::Type(format!(
                "variable `{name}` already declared in this scope"
            )));
        }
        scope.vars.push((name.to_string(), value));
        Ok(())
    }

    fn lookup_mut(&mut self, name: &str) -> Result<&mut Value, RuntimeError> {
        for scope in self.scopes.iter_mut().rev() {
            if let Some((_, v)) = scope.vars.iter_mut().rev().find(|(n, _)| n == name) {
                return Ok(v);
            }
        }
        Err(RuntimeError::Unbound(name.to_string()))
    }

    fn lookup(&mut self, name: &str) -> Result<Value, RuntimeError> {
        self.lookup_mut(name).map(|v| v.clone())
    }

    fn exec_block(&mut self, block: &AstNode) -> Result<Flow, RuntimeError> {
        self.scopes.push(Scope { vars: Vec::new() });
        let mut flow = Flow::Normal;
        for stmt in &block.children {
            flow = self.exec_stmt(stmt)?;
            if matches!(flow, Flow::Return(_)) {
                break;
            }
        }
        self.scopes.pop();
        Ok(flow)
    }

    fn exec_stmt(&mut self, stmt: &AstNode) -> Result<Flow, RuntimeError> {
        self.tick()?;
        match stmt.kind {
            AstKind::VarDecl => {
                let value = self.eval(&stmt.children[0])?;
                self.declare(stmt.token.as_deref().unwrap_or(""), value)?;
                Ok(Flow::Normal)
            }
            AstKind::Assign => {
                let value = self.eval(&stmt.children[1])?;
                self.assign(&stmt.children[0], value)?;
                Ok(Flow::Normal)
            }
            AstKind::Call => {
                self.eval(stmt)?;
                Ok(Flow::Normal)
            }
            AstKind::Return => {
                let value = self.eval(&stmt.children[0])?;
                Ok(Flow::Return(value))
            }
            AstKind::If => {
                let cond = self.eval_bool(&stmt.children[0])?;
                if cond {
                    self.exec_block_or_if(&stmt.children[1])
                } else if let Some(alt) = stmt.children.get(2) {
                    self.exec_block_or_if(alt)
                } else {
                    Ok(Flow::Normal)
                }
            }
            AstKind::While => {
                loop {
                    self.tick()?;
                    if !self.eval_bool(&stmt.children[0])? {
                        break;
                    }
                    if let Flow::Return(v) = self.exec_block(&stmt.children[1])? {
                        return Ok(Flow::Return(v));
                    }
                }
                Ok(Flow::Normal)
            }
            AstKind::For => {
                self.scopes.push(Scope { vars: Vec::new() });
                let result = (|| {
                    let init = &stmt.children[0];
                    match init.kind {
                        AstKind::VarDecl => {
                            let v = self.eval(&init.children[0])?;
                            self.declare(init.token.as_deref().unwrap_or(""), v)?;
                        }
                        _ => {
                            let v = self.eval(&init.children[1])?;
                            self.assign(&init.children[0], v)?;
                        }
                    }
                    loop {
                        self.tick()?;
                        if !self.eval_bool(&stmt.children[1])? {
                            break;
                        }
                        if let Flow::Return(v) = self.exec_block(&stmt.children[3])? {
                            return Ok(Flow::Return(v));
                        }
                        let update = &stmt.children[2];
                        let v = self.eval(&update.children[1])?;
                        self.assign(&update.children[0], v)?;
                    }
                    Ok(Flow::Normal)
                })();
                self.scopes.pop();
                result
            }
            other => Err(RuntimeError::Type(format!(
                "unexpected {} in statement position",
                other.as_str()
            ))),
        }
    }

    fn exec_block_or_if(&mut self, node: &AstNode) -> Result<Flow, RuntimeError> {
        if node.kind == AstKind::If {
            self.exec_stmt(node)
        } else {
            self.exec_block(node)
        }
    }

    fn assign(&mut self, lhs: &AstNode, value: Value) -> Result<(), RuntimeError> {
        match lhs.kind {
            AstKind::Ident => {
                let slot = self.lookup_mut(lhs.token.as_deref().unwrap_or(""))?;
                *slot = value;
                Ok(())
            }
            AstKind::ArrayIndex => {
                let base = &lhs.children[0];
                if base.kind != AstKind::Ident {
                    return Err(RuntimeError::Type(
                        "array assignment needs a named array".to_string(),
                    ));
                }
                let idx = self.eval_int(&lhs.children[1])?;
                let elem = match value {
                    Value::Int(v) => v,
                    other => {
                        return Err(RuntimeError::Type(format!(
                            "cannot store {other} in an int[]",
                        )))
                    }
                };
                let slot = self.lookup_mut(base.token.as_deref().unwrap_or(""))?;
                match slot {
                    Value::IntArr(items) => {
                        let len = items.len();
                        if idx < 0 || idx as usize >= len {
                            return Err(RuntimeError::IndexOutOfBounds { index: idx, len });
                        }
                        items[idx as usize] = elem;
                        Ok(())
                    }
                    other => Err(RuntimeError::Type(format!("{other} is not an int[]"))),
                }
            }
            _ => Err(RuntimeError::Type("assignment target must be a variable".into())),
        }
    }

    fn eval_bool(&mut self, node: &AstNode) -> Result<bool, RuntimeError> {
        match self.eval(node)? {
            Value::Bool(b) => Ok(b),
            other => Err(RuntimeError::Type(format!(
                "expected a boolean, got {other}"
            ))),
        }
    }

    fn eval_int(&mut self, node: &AstNode) -> Result<i64, RuntimeError> {
        match self.eval(node)? {
            Value::Int(v) => Ok(v),
            other => Err(RuntimeError::Type(format!("expected an int, got {other}"))),
        }
    }

    fn eval(&mut self, node: &AstNode) -> Result<Value, RuntimeError> {
        self.tick()?;
        match node.kind {
            AstKind::IntLit => node
                .token
                .as_deref()
                .unwrap_or("")
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| RuntimeError::Type("integer literal out of range".into())),
            AstKind::BoolLit => Ok(Value::Bool(node.token.as_deref() == Some("true"))),
            AstKind::StringLit => Ok(Value::Str(node.token.clone().unwrap_or_default())),
            AstKind::Ident => self.lookup(node.token.as_deref().unwrap_or("")),
            AstKind::UnaryOp => {
                let v = self.eval(&node.children[0])?;
                match (node.token.as_deref().unwrap_or(""), v) {
                    ("-", Value::Int(v)) => Ok(Value::Int(v.wrapping_neg())),
                    ("!", Value::Bool(b)) => Ok(Value::Bool(!b)),
                    (op, v) => Err(RuntimeError::Type(format!("cannot apply {op} to {v}"))),
                }
            }
            AstKind::ArrayIndex => {
                let arr = self.eval(&node.children[0])?;
                let idx = self.eval_int(&node.children[1])?;
                match arr {
                    Value::IntArr(items) => {
                        if idx < 0 || idx as usize >= items.len() {
                            Err(RuntimeError::IndexOutOfBounds {
                                index: idx,
                                len: items.len(),
                            })
                        } else {
                            Ok(Value::Int(items[idx as usize]))
                        }
                    }
                    other => Err(RuntimeError::Type(format!("{other} is not an int[]"))),
                }
            }
            AstKind::Call => self.eval_call(node),
            AstKind::BinaryOp => self.eval_binop(node),
            other => Err(RuntimeError::Type(format!(
                "unexpected {} in expression position",
                other.as_str()
            ))),
        }
    }

    fn eval_binop(&mut self, node: &AstNode) -> Result<Value, RuntimeError> {
        let op = node.token.as_deref().unwrap_or("");
        // short-circuit and assignment forms evaluate lazily
        match op {
            "&&" => {
                return Ok(Value::Bool(
                    self.eval_bool(&node.children[0])? && self.eval_bool(&node.children[1])?,
                ))
            }
            "||" => {
                return Ok(Value::Bool(
                    self.eval_bool(&node.children[0])? || self.eval_bool(&node.children[1])?,
                ))
            }
            "=" => {
                let value = self.eval(&node.children[1])?;
                self.assign(&node.children[0], value.clone())?;
                return Ok(value);
            }
            _ => {}
        }
        let lhs = self.eval(&node.children[0])?;
        let rhs = self.eval(&node.children[1])?;
        use Value::*;
        let type_err = |l: &Value, r: &Value| {
            Err(RuntimeError::Type(format!("cannot apply {op} to {l} and {r}")))
        };
        match op {
            "+" => match (lhs, rhs) {
                (Int(a), Int(b)) => Ok(Int(a.wrapping_add(b))),
                (Str(a), Str(b)) => Ok(Str(a + &b)),
                (Str(a), Int(b)) => Ok(Str(format!("{a}{b}"))),
                (Int(a), Str(b)) => Ok(Str(format!("{a}{b}"))),
                (l, r) => type_err(&l, &r),
            },
            "-" | "*" | "/" | "%" => match (lhs, rhs) {
                (Int(a), Int(b)) => match op {
                    "-" => Ok(Int(a.wrapping_sub(b))),
                    "*" => Ok(Int(a.wrapping_mul(b))),
                    "/" if b == 0 => Err(RuntimeError::DivByZero),
                    "/" => Ok(Int(a.wrapping_div(b))),
                    "%" if b == 0 => Err(RuntimeError::DivByZero),
                    _ => Ok(Int(a.wrapping_rem(b))),
                },
                (l, r) => type_err(&l, &r),
            },
            "<" | "<=" | ">" | ">=" => match (lhs, rhs) {
                (Int(a), Int(b)) => Ok(Bool(match op {
                    "<" => a < b,
                    "<=" => a <= b,
                    ">" => a > b,
                    _ => a >= b,
                })),
                (l, r) => type_err(&l, &r),
            },
            "==" | "!=" => {
                let same = match (&lhs, &rhs) {
                    (Int(a), Int(b)) => a == b,
                    (Bool(a), Bool(b)) => a == b,
                    (Str(a), Str(b)) => a == b,
                    (IntArr(a), IntArr(b)) => a == b,
                    (l, r) => return type_err(l, r),
                };
                Ok(Bool(if op == "==" { same } else { !same }))
            }
            // non-short-circuit logical / bitwise forms
            "&" | "|" => match (lhs, rhs) {
                (Bool(a), Bool(b)) => Ok(Bool(if op == "&" { a & b } else { a | b })),
                (Int(a), Int(b)) => Ok(Int(if op == "&" { a & b } else { a | b })),
                (l, r) => type_err(&l, &r),
            },
            other => Err(RuntimeError::Type(format!("unknown operator {other}"))),
        }
    }

    fn eval_call(&mut self, node: &AstNode) -> Result<Value, RuntimeError> {
        let name = node.token.as_deref().unwrap_or("");
        let mut args = Vec::with_capacity(node.children.len());
        for arg in &node.children {
            args.push(self.eval(arg)?);
        }
        use Value::*;
        match (name, args.as_slice()) {
            ("length", [Str(s)]) => Ok(Int(s.len() as i64)),
            ("length", [IntArr(items)]) => Ok(Int(items.len() as i64)),
            ("charAt", [Str(s), Int(i)]) => {
                if *i < 0 || *i as usize >= s.len() {
                    Err(RuntimeError::IndexOutOfBounds {
                        index: *i,
                        len: s.len(),
                    })
                } else {
                    Ok(Str(s[*i as usize..*i as usize + 1].to_string()))
                }
            }
            ("substring", [Str(s), Int(i), Int(j)]) => {
                if *i < 0 || j < i || *j as usize > s.len() {
                    Err(RuntimeError::IndexOutOfBounds {
                        index: *j,
                        len: s.len(),
                    })
                } else {
                    Ok(Str(s[*i as usize..*j as usize].to_string()))
                }
            }
            ("equals", [a, b]) => Ok(Bool(a == b)),
            (name, args) => {
                let _ = self.source;
                if matches!(name, "length" | "charAt" | "substring" | "equals") {
                    Err(RuntimeError::Type(format!(
                        "bad arguments to {name}: {}",
                        args.iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )))
                } else {
                    Err(RuntimeError::UnknownFunction(name.to_string()))
                }
            }
        }
    }
}
