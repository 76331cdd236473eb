use std::sync::Arc;

use super::ast::{Expr, Func};
use super::ExprError;

/// Names the parser accepts: chart coordinates (by position) and parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolTable {
    pub coords: Vec<String>,
    pub params: Vec<String>,
}

impl SymbolTable {
    pub fn new(coords: Vec<String>, params: Vec<String>) -> Self {
        SymbolTable { coords, params }
    }

    /// Coordinates x1..xn followed by y(n+1)..y(n+m).
    pub fn chart(n: usize, m: usize, params: Vec<String>) -> Self {
        let mut coords: Vec<String> = (1..=n).map(|i| format!("x{}", i)).collect();
        coords.extend((n + 1..=n + m).map(|a| format!("y{}", a)));
        SymbolTable { coords, params }
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = self.pos;
            while end < self.src.len() && (self.src[end].is_ascii_digit() || self.src[end] == b'.') {
                end += 1;
            }
            if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                let mut k = end + 1;
                if k < self.src.len() && (self.src[k] == b'+' || self.src[k] == b'-') {
                    k += 1;
                }
                if k < self.src.len() && self.src[k].is_ascii_digit() {
                    while k < self.src.len() && self.src[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = std::str::from_utf8(&self.src[start..end]).unwrap_or("");
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number '{}'", text),
            })?;
            self.pos = end;
            return Ok((Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = self.pos;
            while end < self.src.len() && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_') {
                end += 1;
            }
            let text = String::from_utf8_lossy(&self.src[start..end]).into_owned();
            self.pos = end;
            return Ok((Tok::Ident(text), start));
        }
        self.pos += 1;
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character '{}'", c as char),
                })
            }
        };
        Ok((tok, start))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
    table: &'a SymbolTable,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ExprError> {
        let (t, at) = self.lex.next()?;
        self.tok = t;
        self.at = at;
        Ok(())
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax { offset: self.at, message: message.into() })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.bump()?;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Arc::new(lhs), Arc::new(rhs));
                }
                Tok::Op('-') => {
                    self.bump()?;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Arc::new(lhs), Arc::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.bump()?;
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Arc::new(lhs), Arc::new(rhs));
                }
                Tok::Op('/') => {
                    self.bump()?;
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Arc::new(lhs), Arc::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Arc::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.primary()?;
        while self.tok == Tok::Op('^') {
            self.bump()?;
            let at = self.at;
            let exponent = self.exponent()?;
            if !exponent.is_coordinate_free() {
                return Err(ExprError::Syntax {
                    offset: at,
                    message: "exponent must not depend on coordinates".into(),
                });
            }
            base = Expr::Pow(Arc::new(base), Arc::new(exponent));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ExprError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            let inner = self.exponent()?;
            return Ok(Expr::Neg(Arc::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.expr()?;
                if self.tok != Tok::RParen {
                    return self.err("expected ')'");
                }
                self.bump()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump()?;
                if self.tok == Tok::LParen {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ExprError::UnknownSymbol(name));
                    };
                    self.bump()?;
                    let arg = self.expr()?;
                    let mut count = 1;
                    while self.tok == Tok::Comma {
                        self.bump()?;
                        self.expr()?;
                        count += 1;
                    }
                    if self.tok != Tok::RParen {
                        return self.err("expected ')'");
                    }
                    if count != 1 {
                        return Err(ExprError::Arity { function: name, expected: 1, found: count });
                    }
                    self.bump()?;
                    return Ok(Expr::Call(func, Arc::new(arg)));
                }
                if let Some(i) = self.table.coord_index(&name) {
                    return Ok(Expr::Coord(i, name.as_str().into()));
                }
                if self.table.params.iter().any(|p| p == &name) {
                    return Ok(Expr::Param(name.as_str().into()));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                if Func::from_name(&name).is_some() {
                    return self.err(format!("function '{}' needs an argument list", name));
                }
                Err(ExprError::UnknownSymbol(name))
            }
            Tok::End => self.err("unexpected end of input"),
            other => self.err(format!("unexpected token {:?}", other)),
        }
    }
}

/// Parse expression text against a symbol table.
pub fn parse(source: &str, table: &SymbolTable) -> Result<Expr, ExprError> {
    if source.trim().is_empty() {
        return Err(ExprError::Syntax { offset: 0, message: "empty expression".into() });
    }
    let mut p = Parser {
        lex: Lexer { src: source.as_bytes(), pos: 0 },
        tok: Tok::End,
        at: 0,
        table,
    };
    let run = |p: &mut Parser| -> Result<Expr, ExprError> {
        p.bump()?;
        let e = p.expr()?;
        if p.tok != Tok::End {
            return p.err("trailing input");
        }
        Ok(e)
    };
    // offsets are reported 1-based
    run(&mut p).map_err(|e| match e {
        ExprError::Syntax { offset, message } => ExprError::Syntax { offset: offset + 1, message },
        other => other,
    })
}
