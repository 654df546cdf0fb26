//! Lexer and recursive-descent parser for the expression grammar.
//!
//! Precedence, tightest first: `^` (right-associative), unary minus,
//! `* /`, `+ -`. Functions: sin, cos, sqrt, exp, log (natural), abs,
//! atan2(y, x). `pi` resolves to the constant when not shadowed by a
//! declared name.

use super::{Func, Node, NodeKind, Span};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok<'a> {
    Num(f64),
    Ident(&'a str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

#[derive(Debug, Clone, Copy)]
struct SpannedTok<'a> {
    tok: Tok<'a>,
    span: Span,
}

fn lex(text: &str) -> Result<Vec<SpannedTok<'_>>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => {
                out.push(tok(Tok::Plus, start, i + 1));
                i += 1;
            }
            b'-' => {
                out.push(tok(Tok::Minus, start, i + 1));
                i += 1;
            }
            b'*' => {
                out.push(tok(Tok::Star, start, i + 1));
                i += 1;
            }
            b'/' => {
                out.push(tok(Tok::Slash, start, i + 1));
                i += 1;
            }
            b'^' => {
                out.push(tok(Tok::Caret, start, i + 1));
                i += 1;
            }
            b'(' => {
                out.push(tok(Tok::LParen, start, i + 1));
                i += 1;
            }
            b')' => {
                out.push(tok(Tok::RParen, start, i + 1));
                i += 1;
            }
            b',' => {
                out.push(tok(Tok::Comma, start, i + 1));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let s = &text[i..j];
                let v: f64 = s.parse().map_err(|_| Error::Parse {
                    message: format!("invalid number `{s}`"),
                    offset: i,
                })?;
                out.push(tok(Tok::Num(v), i, j));
                i = j;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push(tok(Tok::Ident(&text[i..j]), i, j));
                i = j;
            }
            _ => {
                return Err(Error::Parse {
                    message: format!("unexpected character `{}`", &text[i..i + 1]),
                    offset: i,
                });
            }
        }
    }
    out.push(tok(Tok::Eof, text.len(), text.len()));
    Ok(out)
}

fn tok(t: Tok<'_>, start: usize, end: usize) -> SpannedTok<'_> {
    SpannedTok {
        tok: t,
        span: Span {
            start: start as u32,
            end: end as u32,
        },
    }
}

pub(super) struct Parser<'a> {
    toks: Vec<SpannedTok<'a>>,
    pos: usize,
    vars: &'a [String],
    params: &'a [String],
}

impl<'a> Parser<'a> {
    pub(super) fn parse(text: &'a str, vars: &'a [String], params: &'a [String]) -> Result<Node> {
        if text.trim().is_empty() {
            return Err(Error::Parse {
                message: "empty expression".into(),
                offset: 0,
            });
        }
        let toks = lex(text)?;
        let mut p = Parser {
            toks,
            pos: 0,
            vars,
            params,
        };
        let root = p.expr()?;
        let t = p.peek();
        if t.tok != Tok::Eof {
            return Err(Error::Parse {
                message: "unexpected trailing input".into(),
                offset: t.span.start as usize,
            });
        }
        Ok(root)
    }

    fn peek(&self) -> SpannedTok<'a> {
        self.toks[self.pos]
    }

    fn bump(&mut self) -> SpannedTok<'a> {
        let t = self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Node::bin(super::BinOp::Add, lhs, rhs);
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Node::bin(super::BinOp::Sub, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Node::bin(super::BinOp::Mul, lhs, rhs);
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Node::bin(super::BinOp::Div, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek().tok == Tok::Minus {
            let t = self.bump();
            let inner = self.unary()?;
            let span = Span {
                start: t.span.start,
                end: inner.span.end,
            };
            return Ok(Node {
                kind: NodeKind::Neg(Box::new(inner)),
                span,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            // Exponent admits unary minus and chains right-associatively.
            let exp = self.unary()?;
            return Ok(Node::bin(super::BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Node {
                kind: NodeKind::Const(v),
                span: t.span,
            }),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    return self.call(name, t.span);
                }
                if let Some(i) = self.vars.iter().position(|v| v == name) {
                    return Ok(Node {
                        kind: NodeKind::Var(i),
                        span: t.span,
                    });
                }
                if let Some(i) = self.params.iter().position(|v| v == name) {
                    return Ok(Node {
                        kind: NodeKind::Param(i),
                        span: t.span,
                    });
                }
                if name == "pi" {
                    return Ok(Node {
                        kind: NodeKind::Const(std::f64::consts::PI),
                        span: t.span,
                    });
                }
                Err(Error::Parse {
                    message: format!("unknown identifier `{name}`"),
                    offset: t.span.start as usize,
                })
            }
            Tok::Eof => Err(Error::Parse {
                message: "expected expression, found end of input".into(),
                offset: t.span.start as usize,
            }),
            other => Err(Error::Parse {
                message: format!("expected expression, found `{other:?}`"),
                offset: t.span.start as usize,
            }),
        }
    }

    fn call(&mut self, name: &str, name_span: Span) -> Result<Node> {
        let func = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "atan2" => Func::Atan2,
            _ => {
                let what = if self.vars.iter().any(|v| v == name)
                    || self.params.iter().any(|v| v == name)
                {
                    format!("`{name}` is not a function")
                } else {
                    format!("unknown identifier `{name}`")
                };
                return Err(Error::Parse {
                    message: what,
                    offset: name_span.start as usize,
                });
            }
        };
        self.bump(); // consume '('
        let mut args = vec![self.expr()?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        let close = self.expect_rparen()?;
        if args.len() != func.arity() {
            return Err(Error::Parse {
                message: format!(
                    "`{name}` takes {} argument(s), got {}",
                    func.arity(),
                    args.len()
                ),
                offset: name_span.start as usize,
            });
        }
        Ok(Node {
            kind: NodeKind::Call(func, args),
            span: Span {
                start: name_span.start,
                end: close.end,
            },
        })
    }

    fn expect_rparen(&mut self) -> Result<Span> {
        let t = self.bump();
        if t.tok != Tok::RParen {
            return Err(Error::Parse {
                message: "expected `)`".into(),
                offset: t.span.start as usize,
            });
        }
        Ok(t.span)
    }
}
