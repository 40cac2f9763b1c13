//! A small Prolog-style reader for facts, clauses and mode declarations.
//!
//! Grammar (whitespace and `%` comments are skipped between tokens):
//!
//! ```text
//! clause  ::= atom [ ":-" atom { "," atom } ] "."
//! atom    ::= NAME [ "(" term { "," term } ")" ]
//! term    ::= VAR | NUMBER | PLACEMARK | "*" | list | NAME [ "(" term { "," term } ")" ]
//! list    ::= "[" [ term { "," term } ] "]"
//! NAME    ::= [a-z][A-Za-z0-9_]*
//! VAR     ::= [A-Z_][A-Za-z0-9_]*
//! NUMBER  ::= ["-"] digit+ [ "." digit+ ]
//! PLACEMARK ::= ("+" | "-" | "#") NAME
//! ```
//!
//! Lists are represented as function terms named `[]`.

use std::fmt;

use super::{sym, Atom, Term};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

pub const LIST_FUNCTOR: &str = "[]";

pub struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            match bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'%' => {
                    while self.pos < bytes.len() && bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    pub fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    pub fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn eat_str(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn number(&mut self) -> &'a str {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        if bytes[self.pos] == b'-' {
            self.pos += 1;
        }
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos + 1 < bytes.len() && bytes[self.pos] == b'.' && bytes[self.pos + 1].is_ascii_digit() {
            self.pos += 1;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        &self.src[start..self.pos]
    }

    fn args(&mut self, close: u8) -> Result<Vec<Term>, ParseError> {
        let mut args = Vec::new();
        if self.eat(close) {
            return Ok(args);
        }
        loop {
            args.push(self.term()?);
            if self.eat(close) {
                return Ok(args);
            }
            self.expect(b',')?;
        }
    }

    pub fn term(&mut self) -> Result<Term, ParseError> {
        let Some(c) = self.peek() else {
            return self.err("unexpected end of input");
        };
        let bytes = self.src.as_bytes();
        let next_is = |p: usize, f: fn(&u8) -> bool| bytes.get(p).map(f).unwrap_or(false);
        match c {
            b'[' => {
                self.pos += 1;
                Ok(Term::Fn(sym(LIST_FUNCTOR), self.args(b']')?))
            }
            b'*' => {
                self.pos += 1;
                Ok(Term::constant("*"))
            }
            b'-' if next_is(self.pos + 1, u8::is_ascii_digit) => Ok(Term::constant(self.number())),
            b'+' | b'-' | b'#' if next_is(self.pos + 1, u8::is_ascii_alphabetic) => {
                let start = self.pos;
                self.pos += 1;
                self.ident();
                Ok(Term::constant(&self.src[start..self.pos]))
            }
            c if c.is_ascii_digit() => Ok(Term::constant(self.number())),
            c if c.is_ascii_uppercase() || c == b'_' => Ok(Term::var(self.ident())),
            c if c.is_ascii_lowercase() => {
                let name = self.ident();
                if self.src.as_bytes().get(self.pos) == Some(&b'(') {
                    self.pos += 1;
                    Ok(Term::Fn(sym(name), self.args(b')')?))
                } else {
                    Ok(Term::constant(name))
                }
            }
            _ => self.err(format!("unexpected character '{}'", c as char)),
        }
    }

    pub fn atom(&mut self) -> Result<Atom, ParseError> {
        match self.peek() {
            Some(c) if c.is_ascii_lowercase() => {}
            _ => return self.err("expected a predicate name"),
        }
        match self.term()? {
            Term::Const(name) => Ok(Atom {
                pred: name,
                args: Vec::new(),
            }),
            Term::Fn(name, args) => Ok(Atom { pred: name, args }),
            Term::Var(_) => self.err("expected a predicate name"),
        }
    }

    /// `head.` or `head :- body1, ..., bodyN.`
    pub fn clause(&mut self) -> Result<(Atom, Vec<Atom>), ParseError> {
        let head = self.atom()?;
        let mut body = Vec::new();
        if self.eat_str(":-") {
            loop {
                body.push(self.atom()?);
                if !self.eat(b',') {
                    break;
                }
            }
        }
        self.expect(b'.')?;
        Ok((head, body))
    }
}

fn whole<'a, T>(src: &'a str, f: impl FnOnce(&mut Parser<'a>) -> Result<T, ParseError>) -> Result<T, ParseError> {
    let mut p = Parser::new(src);
    let out = f(&mut p)?;
    p.eat(b'.');
    if !p.at_end() {
        return p.err("trailing input");
    }
    Ok(out)
}

pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    whole(src, Parser::term)
}

/// Parses a single atom; a trailing `.` is accepted.
pub fn parse_atom(src: &str) -> Result<Atom, ParseError> {
    whole(src, Parser::atom)
}

/// Parses a sequence of clauses (e.g. a theory file).
pub fn parse_clauses(src: &str) -> Result<Vec<(Atom, Vec<Atom>)>, ParseError> {
    let mut p = Parser::new(src);
    let mut out = Vec::new();
    while !p.at_end() {
        out.push(p.clause()?);
    }
    Ok(out)
}
