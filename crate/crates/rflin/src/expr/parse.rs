//! Recursive-descent parser for the scalar expression language.
//!
//! Grammar:
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' integer)?
//! base   := number | identifier | func '(' expr ')' | '(' expr ')' | '-' base
//! func   := sin | cos | tan | exp | ln | sqrt
//! ```
//! Identifiers resolve against a [`SymbolTable`] of declared symbols.

use std::collections::HashMap;

use super::{add, div, mul, sub, Expr, Symbol, UnaryOp};
use crate::error::{Error, Result};

/// Declared symbols an expression may reference, by name.
#[derive(Default, Clone, Debug)]
pub struct SymbolTable {
    by_name: HashMap<String, Symbol>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declare a symbol. Names are unique across classes so that an
    /// identifier in source text resolves unambiguously.
    pub fn declare(&mut self, sym: Symbol) -> Result<()> {
        if let Some(prev) = self.by_name.get(&sym.name) {
            if *prev != sym {
                return Err(Error::Model(format!(
                    "symbol `{}` declared both as {} and {}",
                    sym.name, prev.class, sym.class
                )));
            }
            return Ok(());
        }
        self.by_name.insert(sym.name.clone(), sym);
        Ok(())
    }

    pub fn resolve(&self, name: &str) -> Option<&Symbol> {
        self.by_name.get(name)
    }
}

/// Parse `text` into an expression, resolving identifiers against `table`.
pub fn parse(text: &str, table: &SymbolTable) -> Result<Expr> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0, table };
    let e = p.expr()?;
    if let Some(tok) = p.peek() {
        return Err(p.err_at(tok.clone(), "unexpected trailing input"));
    }
    Ok(e.simplify())
}

#[derive(Clone, Debug, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokKind,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '+' | '-' | '*' | '/' | '^' | '(' | ')' => {
                let kind = match c {
                    '+' => TokKind::Plus,
                    '-' => TokKind::Minus,
                    '*' => TokKind::Star,
                    '/' => TokKind::Slash,
                    '^' => TokKind::Caret,
                    '(' => TokKind::LParen,
                    _ => TokKind::RParen,
                };
                out.push(Token { kind, line: tline, col: tcol });
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| Error::Parse {
                    msg: format!("malformed number `{s}`"),
                    line: tline,
                    col: tcol,
                })?;
                col += i - start;
                out.push(Token { kind: TokKind::Num(v), line: tline, col: tcol });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                col += i - start;
                out.push(Token { kind: TokKind::Ident(s), line: tline, col: tcol });
                continue;
            }
            other => {
                return Err(Error::Parse {
                    msg: format!("unexpected character `{other}`"),
                    line: tline,
                    col: tcol,
                })
            }
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    table: &'a SymbolTable,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, tok: Token, msg: &str) -> Error {
        Error::Parse { msg: msg.to_string(), line: tok.line, col: tok.col }
    }

    fn err_eof(&self, msg: &str) -> Error {
        let (line, col) = self
            .tokens
            .last()
            .map(|t| (t.line, t.col + 1))
            .unwrap_or((1, 1));
        Error::Parse { msg: msg.to_string(), line, col }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        while let Some(tok) = self.peek() {
            match tok.kind {
                TokKind::Plus => {
                    self.next();
                    e = add(e, self.term()?);
                }
                TokKind::Minus => {
                    self.next();
                    e = sub(e, self.term()?);
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.factor()?;
        while let Some(tok) = self.peek() {
            match tok.kind {
                TokKind::Star => {
                    self.next();
                    e = mul(e, self.factor()?);
                }
                TokKind::Slash => {
                    self.next();
                    e = div(e, self.factor()?);
                }
                _ => break,
            }
        }
        Ok(e)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.base()?;
        if let Some(tok) = self.peek() {
            if tok.kind == TokKind::Caret {
                self.next();
                let neg = matches!(self.peek().map(|t| &t.kind), Some(TokKind::Minus));
                if neg {
                    self.next();
                }
                let tok = self.next().ok_or_else(|| self.err_eof("expected exponent"))?;
                let k = match tok.kind {
                    TokKind::Num(v) if v.fract() == 0.0 => v,
                    _ => {
                        return Err(self.err_at(tok, "exponent must be an integer constant"))
                    }
                };
                return Ok(base.pow(if neg { -k } else { k }));
            }
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr> {
        let tok = self.next().ok_or_else(|| self.err_eof("expected expression"))?;
        match tok.kind {
            TokKind::Num(v) => Ok(Expr::constant(v)),
            TokKind::Minus => Ok(self.base()?.neg()),
            TokKind::LParen => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token { kind: TokKind::RParen, .. }) => Ok(e),
                    Some(t) => Err(self.err_at(t, "expected `)`")),
                    None => Err(self.err_eof("expected `)`")),
                }
            }
            TokKind::Ident(ref name) => {
                let name = name.clone();
                let is_call =
                    matches!(self.peek().map(|t| &t.kind), Some(TokKind::LParen));
                if is_call {
                    let func = match name.as_str() {
                        "sin" => UnaryOp::Sin,
                        "cos" => UnaryOp::Cos,
                        "tan" => UnaryOp::Tan,
                        "exp" => UnaryOp::Exp,
                        "ln" => UnaryOp::Ln,
                        "sqrt" => UnaryOp::Sqrt,
                        _ => {
                            return Err(self.err_at(tok, &format!("unknown function `{name}`")))
                        }
                    };
                    self.next(); // consume '('
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Token { kind: TokKind::RParen, .. }) => {}
                        Some(t) => return Err(self.err_at(t, "expected `)`")),
                        None => return Err(self.err_eof("expected `)`")),
                    }
                    Ok(Expr::Unary(func, std::sync::Arc::new(arg)))
                } else {
                    match self.table.resolve(&name) {
                        Some(sym) => Ok(Expr::sym(sym.clone())),
                        None => Err(self.err_at(tok, &format!("unknown symbol `{name}`"))),
                    }
                }
            }
            _ => Err(self.err_at(tok, "expected number, symbol, or `(`")),
        }
    }
}
