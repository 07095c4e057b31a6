//! Speed expressions for continuous transitions: an expression tree over
//! constants, place-marking references `m(<id>)`, the four arithmetic
//! operators and `min`/`max`.

use std::collections::BTreeSet;
use std::fmt;

use crate::net::{Marking, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub enum SpeedExpr {
    Const(f64),
    /// Current marking of a place, written `m(<id>)`.
    Marking(NodeId),
    Add(Box<SpeedExpr>, Box<SpeedExpr>),
    Sub(Box<SpeedExpr>, Box<SpeedExpr>),
    Mul(Box<SpeedExpr>, Box<SpeedExpr>),
    Div(Box<SpeedExpr>, Box<SpeedExpr>),
    Min(Box<SpeedExpr>, Box<SpeedExpr>),
    Max(Box<SpeedExpr>, Box<SpeedExpr>),
}

#[allow(clippy::should_implement_trait)]
impl SpeedExpr {
    pub fn add(a: SpeedExpr, b: SpeedExpr) -> SpeedExpr {
        SpeedExpr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: SpeedExpr, b: SpeedExpr) -> SpeedExpr {
        SpeedExpr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: SpeedExpr, b: SpeedExpr) -> SpeedExpr {
        SpeedExpr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: SpeedExpr, b: SpeedExpr) -> SpeedExpr {
        SpeedExpr::Div(Box::new(a), Box::new(b))
    }

    pub fn min(a: SpeedExpr, b: SpeedExpr) -> SpeedExpr {
        SpeedExpr::Min(Box::new(a), Box::new(b))
    }

    pub fn max(a: SpeedExpr, b: SpeedExpr) -> SpeedExpr {
        SpeedExpr::Max(Box::new(a), Box::new(b))
    }

    /// Missing places evaluate as marking 0.
    pub fn eval(&self, marking: &Marking) -> f64 {
        match self {
            SpeedExpr::Const(c) => *c,
            SpeedExpr::Marking(p) => marking.get(p).copied().unwrap_or(0.0),
            SpeedExpr::Add(a, b) => a.eval(marking) + b.eval(marking),
            SpeedExpr::Sub(a, b) => a.eval(marking) - b.eval(marking),
            SpeedExpr::Mul(a, b) => a.eval(marking) * b.eval(marking),
            SpeedExpr::Div(a, b) => a.eval(marking) / b.eval(marking),
            SpeedExpr::Min(a, b) => a.eval(marking).min(b.eval(marking)),
            SpeedExpr::Max(a, b) => a.eval(marking).max(b.eval(marking)),
        }
    }

    /// All places referenced anywhere in the tree.
    pub fn places(&self) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        self.collect_places(&mut out);
        out
    }

    fn collect_places(&self, out: &mut BTreeSet<NodeId>) {
        match self {
            SpeedExpr::Const(_) => {}
            SpeedExpr::Marking(p) => {
                out.insert(*p);
            }
            SpeedExpr::Add(a, b)
            | SpeedExpr::Sub(a, b)
            | SpeedExpr::Mul(a, b)
            | SpeedExpr::Div(a, b)
            | SpeedExpr::Min(a, b)
            | SpeedExpr::Max(a, b) => {
                a.collect_places(out);
                b.collect_places(out);
            }
        }
    }

    /// Rewrites every place reference through `f`.
    pub fn map_places(&self, f: &impl Fn(NodeId) -> NodeId) -> SpeedExpr {
        match self {
            SpeedExpr::Const(c) => SpeedExpr::Const(*c),
            SpeedExpr::Marking(p) => SpeedExpr::Marking(f(*p)),
            SpeedExpr::Add(a, b) => SpeedExpr::add(a.map_places(f), b.map_places(f)),
            SpeedExpr::Sub(a, b) => SpeedExpr::sub(a.map_places(f), b.map_places(f)),
            SpeedExpr::Mul(a, b) => SpeedExpr::mul(a.map_places(f), b.map_places(f)),
            SpeedExpr::Div(a, b) => SpeedExpr::div(a.map_places(f), b.map_places(f)),
            SpeedExpr::Min(a, b) => SpeedExpr::min(a.map_places(f), b.map_places(f)),
            SpeedExpr::Max(a, b) => SpeedExpr::max(a.map_places(f), b.map_places(f)),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            SpeedExpr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            SpeedExpr::Add(..) | SpeedExpr::Sub(..) => 1,
            SpeedExpr::Mul(..) | SpeedExpr::Div(..) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for SpeedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &SpeedExpr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            SpeedExpr::Const(c) => write!(f, "{c}"),
            SpeedExpr::Marking(p) => write!(f, "m({p})"),
            SpeedExpr::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, "+")?;
                child(f, b, 2)
            }
            SpeedExpr::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, "-")?;
                child(f, b, 2)
            }
            SpeedExpr::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, "*")?;
                child(f, b, 3)
            }
            SpeedExpr::Div(a, b) => {
                child(f, a, 2)?;
                write!(f, "/")?;
                child(f, b, 3)
            }
            SpeedExpr::Min(a, b) => write!(f, "min({a},{b})"),
            SpeedExpr::Max(a, b) => write!(f, "max({a},{b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid speed expression at byte {offset}: {message}")]
pub struct SpeedParseError {
    pub offset: usize,
    pub message: String,
}

/// Parses the textual expression syntax used by scenario files and brace
/// parameters: `0.5`, `m(2)`, `0.1*m(8)`, `min(m(4),2)`, `max(0,1-m(3))`.
pub fn parse_speed(text: &str) -> Result<SpeedExpr, SpeedParseError> {
    let mut p = ExprParser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.err("trailing input"));
    }
    Ok(expr)
}

struct ExprParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ExprParser<'a> {
    fn err(&self, message: &str) -> SpeedParseError {
        SpeedParseError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, byte: u8) -> Result<(), SpeedParseError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", byte as char)))
        }
    }

    fn expr(&mut self) -> Result<SpeedExpr, SpeedParseError> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = SpeedExpr::add(acc, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = SpeedExpr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<SpeedExpr, SpeedParseError> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = SpeedExpr::mul(acc, self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = SpeedExpr::div(acc, self.factor()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<SpeedExpr, SpeedParseError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                self.eat(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident();
                self.skip_ws();
                match name.as_str() {
                    "m" => {
                        self.eat(b'(')?;
                        self.skip_ws();
                        let id = self.integer()?;
                        self.skip_ws();
                        self.eat(b')')?;
                        Ok(SpeedExpr::Marking(NodeId::new(id)))
                    }
                    "min" | "max" => {
                        self.eat(b'(')?;
                        let a = self.expr()?;
                        self.skip_ws();
                        self.eat(b',')?;
                        let b = self.expr()?;
                        self.skip_ws();
                        self.eat(b')')?;
                        Ok(if name == "min" {
                            SpeedExpr::min(a, b)
                        } else {
                            SpeedExpr::max(a, b)
                        })
                    }
                    other => Err(self.err(&format!("unknown function '{other}'"))),
                }
            }
            _ => Err(self.err("expected a number, m(<id>), min(,), max(,) or (...)")),
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_alphabetic())
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned()
    }

    fn integer(&mut self) -> Result<u32, SpeedParseError> {
        let start = self.pos;
        while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an integer"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        let value: u32 = text.parse().map_err(|_| self.err("integer out of range"))?;
        if value == 0 {
            return Err(self.err("node ids are positive"));
        }
        Ok(value)
    }

    fn number(&mut self) -> Result<SpeedExpr, SpeedParseError> {
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_digit() || c == b'.')
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| SpeedParseError {
            offset: start,
            message: format!("bad number '{text}'"),
        })?;
        Ok(SpeedExpr::Const(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(v: u32) -> NodeId {
        NodeId::new(v)
    }

    #[test]
    fn parses_and_evaluates() {
        let e = parse_speed("0.1*m(8)").unwrap();
        let mut m = Marking::new();
        m.insert(id(8), 15.0);
        assert_eq!(e.eval(&m), 1.5);
    }

    #[test]
    fn min_max_and_precedence() {
        let e = parse_speed("max(0, 2 - m(3)) + 1*2").unwrap();
        let mut m = Marking::new();
        m.insert(id(3), 5.0);
        assert_eq!(e.eval(&m), 2.0);
        m.insert(id(3), 0.5);
        assert_eq!(e.eval(&m), 3.5);
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "0.5",
            "m(2)",
            "min(m(2),3)",
            "max(0,10-m(2))*0.5",
            "1+2*3",
            "(1+2)*3",
        ] {
            let e = parse_speed(text).unwrap();
            let shown = e.to_string();
            assert_eq!(parse_speed(&shown).unwrap(), e, "{text} -> {shown}");
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_speed("m(0)").is_err());
        assert!(parse_speed("foo(1)").is_err());
        assert!(parse_speed("1 2").is_err());
    }
}
