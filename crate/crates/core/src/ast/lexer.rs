//! Hand-rolled lexer for the method subset. Produces spanned tokens;
//! `//` and `/* */` comments and all whitespace are skipped.

use thiserror::Error;

use super::Span;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error("lex error at byte {offset}: unexpected character {found:?}")]
    Lex { offset: usize, found: char },
    #[error("parse error at byte {offset}: expected {expected}, found {found}")]
    Parse {
        offset: usize,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum TokKind {
    Ident(String),
    IntLit(String),
    StringLit(String),
    KwInt,
    KwBoolean,
    KwString,
    KwIf,
    KwElse,
    KwWhile,
    KwFor,
    KwReturn,
    KwTrue,
    KwFalse,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    // operator token, one of BINARY_OPS plus "!"
    Op(&'static str),
    Eof,
}

impl TokKind {
    pub(super) fn describe(&self) -> String {
        match self {
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::IntLit(s) => format!("integer `{s}`"),
            TokKind::StringLit(_) => "string literal".to_string(),
            TokKind::KwInt => "`int`".to_string(),
            TokKind::KwBoolean => "`boolean`".to_string(),
            TokKind::KwString => "`String`".to_string(),
            TokKind::KwIf => "`if`".to_string(),
            TokKind::KwElse => "`else`".to_string(),
            TokKind::KwWhile => "`while`".to_string(),
            TokKind::KwFor => "`for`".to_string(),
            TokKind::KwReturn => "`return`".to_string(),
            TokKind::KwTrue => "`true`".to_string(),
            TokKind::KwFalse => "`false`".to_string(),
            TokKind::LParen => "`(`".to_string(),
            TokKind::RParen => "`)`".to_string(),
            TokKind::LBrace => "`{`".to_string(),
            TokKind::RBrace => "`}`".to_string(),
            TokKind::LBracket => "`[`".to_string(),
            TokKind::RBracket => "`]`".to_string(),
            TokKind::Semi => "`;`".to_string(),
            TokKind::Comma => "`,`".to_string(),
            TokKind::Op(op) => format!("`{op}`"),
            TokKind::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) struct Token {
    pub kind: TokKind,
    pub span: Span,
}

pub(super) fn lex(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && i + 1 < bytes.len() && bytes[i + 1] == b'/' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && i + 1 < bytes.len() && bytes[i + 1] == b'*' {
            let mut j = i + 2;
            while j + 1 < bytes.len() && !(bytes[j] == b'*' && bytes[j + 1] == b'/') {
                j += 1;
            }
            if j + 1 >= bytes.len() {
                return Err(SyntaxError::Lex {
                    offset: i,
                    found: '/',
                });
            }
            i = j + 2;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            let word = &source[start..i];
            let kind = match word {
                "int" => TokKind::KwInt,
                "boolean" => TokKind::KwBoolean,
                "String" => TokKind::KwString,
                "if" => TokKind::KwIf,
                "else" => TokKind::KwElse,
                "while" => TokKind::KwWhile,
                "for" => TokKind::KwFor,
                "return" => TokKind::KwReturn,
                "true" => TokKind::KwTrue,
                "false" => TokKind::KwFalse,
                _ => TokKind::Ident(word.to_string()),
            };
            tokens.push(Token {
                kind,
                span: Span::new(start, i),
            });
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            tokens.push(Token {
                kind: TokKind::IntLit(source[start..i].to_string()),
                span: Span::new(start, i),
            });
            continue;
        }
        if c == '"' {
            let mut j = i + 1;
            let mut text = String::new();
            loop {
                if j >= bytes.len() || bytes[j] == b'\n' {
                    return Err(SyntaxError::Lex {
                        offset: i,
                        found: '"',
                    });
                }
                match bytes[j] {
                    b'"' => break,
                    b'\\' => {
                        if j + 1 >= bytes.len() {
                            return Err(SyntaxError::Lex {
                                offset: j,
                                found: '\\',
                            });
                        }
                        match bytes[j + 1] {
                            b'"' => text.push('"'),
                            b'\\' => text.push('\\'),
                            b'n' => text.push('\n'),
                            b't' => text.push('\t'),
                            other => {
                                return Err(SyntaxError::Lex {
                                    offset: j + 1,
                                    found: other as char,
                                })
                            }
                        }
                        j += 2;
                    }
                    b if (0x20..0x7f).contains(&b) => {
                        text.push(b as char);
                        j += 1;
                    }
                    b => {
                        return Err(SyntaxError::Lex {
                            offset: j,
                            found: b as char,
                        })
                    }
                }
            }
            tokens.push(Token {
                kind: TokKind::StringLit(text),
                span: Span::new(i, j + 1),
            });
            i = j + 1;
            continue;
        }
        let two = if i + 1 < bytes.len() {
            &source[i..i + 2]
        } else {
            ""
        };
        let op2 = match two {
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => Some("=="),
            "!=" => Some("!="),
            "&&" => Some("&&"),
            "||" => Some("||"),
            _ => None,
        };
        if let Some(op) = op2 {
            tokens.push(Token {
                kind: TokKind::Op(op),
                span: Span::new(i, i + 2),
            });
            i += 2;
            continue;
        }
        let kind = match c {
            '(' => Some(TokKind::LParen),
            ')' => Some(TokKind::RParen),
            '{' => Some(TokKind::LBrace),
            '}' => Some(TokKind::RBrace),
            '[' => Some(TokKind::LBracket),
            ']' => Some(TokKind::RBracket),
            ';' => Some(TokKind::Semi),
            ',' => Some(TokKind::Comma),
            '+' => Some(TokKind::Op("+")),
            '-' => Some(TokKind::Op("-")),
            '*' => Some(TokKind::Op("*")),
            '/' => Some(TokKind::Op("/")),
            '%' => Some(TokKind::Op("%")),
            '<' => Some(TokKind::Op("<")),
            '>' => Some(TokKind::Op(">")),
            '&' => Some(TokKind::Op("&")),
            '|' => Some(TokKind::Op("|")),
            '=' => Some(TokKind::Op("=")),
            '!' => Some(TokKind::Op("!")),
            _ => None,
        };
        match kind {
            Some(kind) => {
                tokens.push(Token {
                    kind,
                    span: Span::new(i, i + 1),
                });
                i += 1;
            }
            None => {
                return Err(SyntaxError::Lex {
                    offset: i,
                    found: c,
                })
            }
        }
    }
    tokens.push(Token {
        kind: TokKind::Eof,
        span: Span::new(source.len().max(1) - 1, source.len().max(1)),
    });
    Ok(tokens)
}
