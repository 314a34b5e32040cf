//! Recursive-descent parser with Java operator precedence.
//!
//! Grammar sketch (one method per source):
//!
//! ```text
//! method  := type IDENT '(' (param (',' param)*)? ')' block
//! param   := type IDENT
//! type    := 'int' ('[' ']')? | 'boolean' | 'String'
//! block   := '{' stmt* '}'
//! stmt    := type IDENT '=' expr ';'            (declaration, initializer required)
//!          | lvalue '=' expr ';'                (assignment)
//!          | IDENT '(' args ')' ';'             (expression call)
//!          | 'if' '(' expr ')' block ('else' (ifstmt | block))?
//!          | 'while' '(' expr ')' block
//!          | 'for' '(' forinit ';' expr ';' assign-no-semi ')' block
//!          | 'return' expr ';'
//! ```
//!
//! Expressions use precedence climbing over `BINARY_OPS`; `=` is
//! right-associative and requires an lvalue. Statement node spans include
//! the terminating `;`, and `if`/`while`/`for` bodies must be braced blocks.

use super::lexer::{SyntaxError, TokKind, Token};
use super::{binop_precedence, AstKind, AstNode, Span};

pub(super) struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    pub(super) fn new(tokens: Vec<Token>) -> Self {
        Parser { tokens, pos: 0 }
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek2(&self) -> &Token {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> SyntaxError {
        let t = self.peek();
        SyntaxError::Parse {
            offset: t.span.start,
            expected: expected.to_string(),
            found: t.kind.describe(),
        }
    }

    fn expect(&mut self, kind: TokKind, expected: &str) -> PResult<Token> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            Err(self.error(expected))
        }
    }

    fn expect_ident(&mut self, expected: &str) -> PResult<(String, Span)> {
        match &self.peek().kind {
            TokKind::Ident(name) => {
                let name = name.clone();
                let span = self.peek().span;
                self.bump();
                Ok((name, span))
            }
            _ => Err(self.error(expected)),
        }
    }

    fn at_type_keyword(&self) -> bool {
        matches!(
            self.peek().kind,
            TokKind::KwInt | TokKind::KwBoolean | TokKind::KwString
        )
    }

    fn parse_type(&mut self) -> PResult<Span> {
        let start = self.peek().span;
        match self.peek().kind {
            TokKind::KwBoolean | TokKind::KwString => {
                self.bump();
                Ok(start)
            }
            TokKind::KwInt => {
                self.bump();
                if self.peek().kind == TokKind::LBracket {
                    self.bump();
                    let close = self.expect(TokKind::RBracket, "`]`")?;
                    Ok(Span::new(start.start, close.span.end))
                } else {
                    Ok(start)
                }
            }
            _ => Err(self.error("a type (`int`, `int[]`, `boolean`, `String`)")),
        }
    }

    pub(super) fn parse_method(&mut self) -> PResult<AstNode> {
        let ty_span = self.parse_type()?;
        let (name, _) = self.expect_ident("method name")?;
        self.expect(TokKind::LParen, "`(`")?;
        let mut children = Vec::new();
        if self.peek().kind != TokKind::RParen {
            loop {
                children.push(self.parse_param()?);
                if self.peek().kind == TokKind::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(TokKind::RParen, "`)` or `,`")?;
        let body = self.parse_block()?;
        let span = Span::new(ty_span.start, body.span.end);
        children.push(body);
        let node = AstNode::new(AstKind::MethodDecl, Some(name), span, children);
        if self.peek().kind != TokKind::Eof {
            return Err(self.error("end of input"));
        }
        Ok(node)
    }

    fn parse_param(&mut self) -> PResult<AstNode> {
        let ty_span = self.parse_type()?;
        let (name, name_span) = self.expect_ident("parameter name")?;
        Ok(AstNode::new(
            AstKind::Param,
            Some(name),
            Span::new(ty_span.start, name_span.end),
            Vec::new(),
        ))
    }

    fn parse_block(&mut self) -> PResult<AstNode> {
        let open = self.expect(TokKind::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while self.peek().kind != TokKind::RBrace {
            if self.peek().kind == TokKind::Eof {
                return Err(self.error("`}`"));
            }
            stmts.push(self.parse_stmt()?);
        }
        let close = self.bump();
        Ok(AstNode::new(
            AstKind::Block,
            None,
            Span::new(open.span.start, close.span.end),
            stmts,
        ))
    }

    fn parse_stmt(&mut self) -> PResult<AstNode> {
        match self.peek().kind {
            TokKind::KwInt | TokKind::KwBoolean | TokKind::KwString => {
                let decl = self.parse_decl_no_semi()?;
                let semi = self.expect(TokKind::Semi, "`;`")?;
                Ok(widen(decl, semi.span.end))
            }
            TokKind::KwIf => self.parse_if(),
            TokKind::KwWhile => {
                let kw = self.bump();
                self.expect(TokKind::LParen, "`(`")?;
                let cond = self.parse_expr(1)?;
                self.expect(TokKind::RParen, "`)`")?;
                let body = self.parse_block()?;
                let span = Span::new(kw.span.start, body.span.end);
                Ok(AstNode::new(AstKind::While, None, span, vec![cond, body]))
            }
            TokKind::KwFor => {
                let kw = self.bump();
                self.expect(TokKind::LParen, "`(`")?;
                let init = if self.at_type_keyword() {
                    self.parse_decl_no_semi()?
                } else {
                    self.parse_assign_no_semi()?
                };
                self.expect(TokKind::Semi, "`;`")?;
                let cond = self.parse_expr(1)?;
                self.expect(TokKind::Semi, "`;`")?;
                let update = self.parse_assign_no_semi()?;
                self.expect(TokKind::RParen, "`)`")?;
                let body = self.parse_block()?;
                let span = Span::new(kw.span.start, body.span.end);
                Ok(AstNode::new(
                    AstKind::For,
                    None,
                    span,
                    vec![init, cond, update, body],
                ))
            }
            TokKind::KwReturn => {
                let kw = self.bump();
                let value = self.parse_expr(1)?;
                let semi = self.expect(TokKind::Semi, "`;`")?;
                Ok(AstNode::new(
                    AstKind::Return,
                    None,
                    Span::new(kw.span.start, semi.span.end),
                    vec![value],
                ))
            }
            TokKind::Ident(_) => {
                if self.peek2().kind == TokKind::LParen {
                    let call = self.parse_expr(1)?;
                    if call.kind != AstKind::Call {
                        return Err(SyntaxError::Parse {
                            offset: call.span.start,
                            expected: "a call statement".to_string(),
                            found: format!("{} expression", call.kind.as_str()),
                        });
                    }
                    let semi = self.expect(TokKind::Semi, "`;`")?;
                    Ok(widen(call, semi.span.end))
                } else {
                    let assign = self.parse_assign_no_semi()?;
                    let semi = self.expect(TokKind::Semi, "`;`")?;
                    Ok(widen(assign, semi.span.end))
                }
            }
            _ => Err(self.error("a statement")),
        }
    }

    fn parse_if(&mut self) -> PResult<AstNode> {
        let kw = self.expect(TokKind::KwIf, "`if`")?;
        self.expect(TokKind::LParen, "`(`")?;
        let cond = self.parse_expr(1)?;
        self.expect(TokKind::RParen, "`)`")?;
        let then = self.parse_block()?;
        let mut children = vec![cond, then];
        let mut end = children.last().unwrap().span.end;
        if self.peek().kind == TokKind::KwElse {
            self.bump();
            let alt = if self.peek().kind == TokKind::KwIf {
                self.parse_if()?
            } else {
                self.parse_block()?
            };
            end = alt.span.end;
            children.push(alt);
        }
        Ok(AstNode::new(
            AstKind::If,
            None,
            Span::new(kw.span.start, end),
            children,
        ))
    }

    /// `type IDENT = expr` without the trailing `;` (shared by statements
    /// and `for` initializers). The subset requires an initializer.
    fn parse_decl_no_semi(&mut self) -> PResult<AstNode> {
        let ty_span = self.parse_type()?;
        let (name, _) = self.expect_ident("variable name")?;
        match self.peek().kind {
            TokKind::Op("=") => {
                self.bump();
            }
            _ => return Err(self.error("`=` (declarations need an initializer)")),
        }
        let init = self.parse_expr(1)?;
        let span = Span::new(ty_span.start, init.span.end);
        Ok(AstNode::new(AstKind::VarDecl, Some(name), span, vec![init]))
    }

    /// `lvalue = expr` without the trailing `;`.
    fn parse_assign_no_semi(&mut self) -> PResult<AstNode> {
        let lhs = self.parse_postfix()?;
        if !matches!(lhs.kind, AstKind::Ident | AstKind::ArrayIndex) {
            return Err(SyntaxError::Parse {
                offset: lhs.span.start,
                expected: "an assignable variable or array element".to_string(),
                found: format!("{} expression", lhs.kind.as_str()),
            });
        }
        match self.peek().kind {
            TokKind::Op("=") => {
                self.bump();
            }
            _ => return Err(self.error("`=`")),
        }
        let rhs = self.parse_expr(1)?;
        let span = Span::new(lhs.span.start, rhs.span.end);
        Ok(AstNode::new(AstKind::Assign, None, span, vec![lhs, rhs]))
    }

    fn parse_expr(&mut self, min_prec: u8) -> PResult<AstNode> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek().kind {
                TokKind::Op(op) if op != "!" => op,
                _ => break,
            };
            let prec = binop_precedence(op).expect("lexer only emits known operators");
            if prec < min_prec {
                break;
            }
            if op == "=" && !matches!(lhs.kind, AstKind::Ident | AstKind::ArrayIndex) {
                return Err(self.error("no `=` here (left side is not assignable)"));
            }
            self.bump();
            // `=` is right-associative, everything else left-associative.
            let rhs = if op == "=" {
                self.parse_expr(prec)?
            } else {
                self.parse_expr(prec + 1)?
            };
            let span = Span::new(lhs.span.start, rhs.span.end);
            lhs = AstNode::new(AstKind::BinaryOp, Some(op.to_string()), span, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<AstNode> {
        match self.peek().kind {
            TokKind::Op(op @ ("-" | "!")) => {
                let tok = self.bump();
                let operand = self.parse_unary()?;
                let span = Span::new(tok.span.start, operand.span.end);
                Ok(AstNode::new(
                    AstKind::UnaryOp,
                    Some(op.to_string()),
                    span,
                    vec![operand],
                ))
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> PResult<AstNode> {
        let mut node = self.parse_primary()?;
        while self.peek().kind == TokKind::LBracket {
            self.bump();
            let index = self.parse_expr(1)?;
            let close = self.expect(TokKind::RBracket, "`]`")?;
            let span = Span::new(node.span.start, close.span.end);
            node = AstNode::new(AstKind::ArrayIndex, None, span, vec![node, index]);
        }
        Ok(node)
    }

    fn parse_primary(&mut self) -> PResult<AstNode> {
        let tok = self.peek().clone();
        match tok.kind {
            TokKind::IntLit(text) => {
                self.bump();
                Ok(AstNode::new(
                    AstKind::IntLit,
                    Some(text),
                    tok.span,
                    Vec::new(),
                ))
            }
            TokKind::StringLit(text) => {
                self.bump();
                Ok(AstNode::new(
                    AstKind::StringLit,
                    Some(text),
                    tok.span,
                    Vec::new(),
                ))
            }
            TokKind::KwTrue | TokKind::KwFalse => {
                self.bump();
                let text = if tok.kind == TokKind::KwTrue {
                    "true"
                } else {
                    "false"
                };
                Ok(AstNode::new(
                    AstKind::BoolLit,
                    Some(text.to_string()),
                    tok.span,
                    Vec::new(),
                ))
            }
            TokKind::Ident(name) => {
                self.bump();
                if self.peek().kind == TokKind::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if self.peek().kind != TokKind::RParen {
                        loop {
                            args.push(self.parse_expr(1)?);
                            if self.peek().kind == TokKind::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    let close = self.expect(TokKind::RParen, "`)` or `,`")?;
                    Ok(AstNode::new(
                        AstKind::Call,
                        Some(name),
                        Span::new(tok.span.start, close.span.end),
                        args,
                    ))
                } else {
                    Ok(AstNode::new(
                        AstKind::Ident,
                        Some(name),
                        tok.span,
                        Vec::new(),
                    ))
                }
            }
            TokKind::LParen => {
                self.bump();
                let mut inner = self.parse_expr(1)?;
                let close = self.expect(TokKind::RParen, "`)`")?;
                // the parens stay inside the span so that splicing the node
                // out of the source never strands half a pair
                inner.span = Span::new(tok.span.start, close.span.end);
                Ok(inner)
            }
            _ => Err(self.error("an expression")),
        }
    }
}

fn widen(mut node: AstNode, end: usize) -> AstNode {
    node.span = Span::new(node.span.start, end.max(node.span.end));
    node
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn expr_of(src_body: &str) -> AstNode {
        let src = format!("int f(int a, int b, int c, boolean p, boolean q) {{ return {src_body}; }}");
        let ast = parse(&src).unwrap();
        let block = ast.root.children.last().unwrap().clone();
        block.children[0].children[0].clone()
    }

    fn shape(node: &AstNode) -> String {
        let mut s = String::new();
        match node.kind {
            AstKind::BinaryOp | AstKind::UnaryOp => s.push_str(node.token.as_deref().unwrap()),
            _ => s.push_str(node.token.as_deref().unwrap_or(node.kind.as_str())),
        }
        if !node.children.is_empty() {
            s.push('(');
            let parts: Vec<String> = node.children.iter().map(shape).collect();
            s.push_str(&parts.join(","));
            s.push(')');
        }
        s
    }

    #[test]
    fn precedence_follows_java() {
        assert_eq!(shape(&expr_of("a + b * c")), "+(a,*(b,c))");
        assert_eq!(shape(&expr_of("(a + b) * c")), "*(+(a,b),c)");
        assert_eq!(shape(&expr_of("a - b - c")), "-(-(a,b),c)");
        assert_eq!(shape(&expr_of("a < b == p")), "==(<(a,b),p)");
        assert_eq!(shape(&expr_of("p && q || p")), "||(&&(p,q),p)");
        // & binds tighter than &&, | tighter than ||
        assert_eq!(shape(&expr_of("p & q && p")), "&&(&(p,q),p)");
        assert_eq!(shape(&expr_of("p | q || p")), "||(|(p,q),p)");
        assert_eq!(shape(&expr_of("a % b / c")), "/(%(a,b),c)");
        assert_eq!(shape(&expr_of("-a + b")), "+(-(a),b)");
        assert_eq!(shape(&expr_of("!p && q")), "&&(!(p),q)");
    }

    #[test]
    fn assignment_expression_is_right_associative_and_needs_lvalue() {
        assert_eq!(shape(&expr_of("a = b = c")), "=(a,=(b,c))");
        assert_eq!(shape(&expr_of("p = q && p")), "=(p,&&(q,p))");
        let src = "int f(int a, int b) { return a + b = 1; }";
        assert!(parse(src).is_err());
    }

    #[test]
    fn calls_and_indexing() {
        assert_eq!(shape(&expr_of("length(a)")), "length(a)");
        assert_eq!(shape(&expr_of("a[b + 1]")), "ArrayIndex(a,+(b,1))");
        let n = expr_of("charAt(a, 0)");
        assert_eq!(n.kind, AstKind::Call);
        assert_eq!(n.children.len(), 2);
    }

    #[test]
    fn statements_and_structure() {
        let src = "int total(int[] xs) {\n    int s = 0;\n    for (int i = 0; i < length(xs); i = i + 1) {\n        s = s + xs[i];\n    }\n    while (s > 100) {\n        s = s - 1;\n    }\n    if (s == 13) {\n        s = 0;\n    } else {\n        log(s);\n    }\n    return s;\n}\n";
        let ast = parse(src).unwrap();
        let body = ast.root.children.last().unwrap();
        let kinds: Vec<AstKind> = body.children.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            vec![
                AstKind::VarDecl,
                AstKind::For,
                AstKind::While,
                AstKind::If,
                AstKind::Return
            ]
        );
        // declaration span includes the terminating semicolon
        assert_eq!(body.children[0].span.text(src), "int s = 0;");
        // call statement keeps its semicolon too
        let if_node = &body.children[3];
        let else_block = &if_node.children[2];
        assert_eq!(else_block.children[0].span.text(src), "log(s);");
    }

    #[test]
    fn else_if_chains_nest() {
        let src = "int f(int a) { if (a < 0) { return 0; } else if (a < 10) { return 1; } else { return 2; } }";
        let ast = parse(src).unwrap();
        let if_node = &ast.root.children.last().unwrap().children[0];
        assert_eq!(if_node.children.len(), 3);
        assert_eq!(if_node.children[2].kind, AstKind::If);
        assert_eq!(if_node.children[2].children.len(), 3);
    }

    #[test]
    fn unbraced_bodies_are_rejected() {
        assert!(parse("int f(int a) { if (a < 0) return 0; return a; }").is_err());
        assert!(parse("int f(int a) { while (a < 0) a = a + 1; return a; }").is_err());
    }

    #[test]
    fn trailing_tokens_are_rejected() {
        assert!(parse("int f() { return 0; } int g() { return 1; }").is_err());
    }
}
