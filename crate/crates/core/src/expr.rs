//! Closed-form field descriptors.
//!
//! A deliberately small arithmetic language over `x`, `y`, numeric literals
//! and `pi`, with `+ - * / ^`, unary minus, and the functions `abs`, `sin`,
//! `min`, `max`. The Unicode minus sign `−` is accepted as `-`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    X,
    Y,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Abs(Box<Node>),
    Sin(Box<Node>),
    Min(Vec<Node>),
    Max(Vec<Node>),
}

impl Node {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::X => x,
            Node::Y => y,
            Node::Neg(a) => -a.eval(x, y),
            Node::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Node::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Node::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Node::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Node::Pow(a, b) => {
                let base = a.eval(x, y);
                let exp = b.eval(x, y);
                if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
                    base.powi(exp as i32)
                } else {
                    base.powf(exp)
                }
            }
            Node::Abs(a) => a.eval(x, y).abs(),
            Node::Sin(a) => a.eval(x, y).sin(),
            Node::Min(args) => args
                .iter()
                .map(|a| a.eval(x, y))
                .fold(f64::INFINITY, f64::min),
            Node::Max(args) => args
                .iter()
                .map(|a| a.eval(x, y))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// A parsed expression, keeping its source text for display.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let normalized: String = source.replace('−', "-");
        let tokens = tokenize(&normalized)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(Error::Parse {
                offset: tok.offset,
                message: format!("unexpected trailing {:?}", tok.kind),
            });
        }
        Ok(Self {
            source: source.trim().to_string(),
            root,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            source: format!("{value}"),
            root: Node::Const(value),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.root.eval(x, y)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    kind: Kind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            '+' | '-' | '*' | '/' | '^' => {
                i += 1;
                Kind::Op(c)
            }
            '(' => {
                i += 1;
                Kind::LParen
            }
            ')' => {
                i += 1;
                Kind::RParen
            }
            ',' => {
                i += 1;
                Kind::Comma
            }
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part: 1e-9, 2.5E+3
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value = text.parse::<f64>().map_err(|_| Error::Parse {
                    offset: start,
                    message: format!("bad number {text:?}"),
                })?;
                Kind::Num(value)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Kind::Ident(src[start..i].to_ascii_lowercase())
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(Error::Parse {
                    offset: start,
                    message: format!("unexpected character {ch:?}"),
                });
            }
        };
        tokens.push(Token {
            kind,
            offset: start,
        });
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Kind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.offset)
            .or_else(|| self.tokens.last().map(|t| t.offset + 1))
            .unwrap_or(0)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, kind: Kind) -> Result<()> {
        if self.peek() == Some(&kind) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {kind:?}"))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Kind::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Kind::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Kind::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Kind::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // `^` binds tighter than unary minus and associates to the right.
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Kind::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(kind) = self.peek().cloned() else {
            return self.error("unexpected end of expression");
        };
        match kind {
            Kind::Num(v) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Kind::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Kind::RParen)?;
                Ok(inner)
            }
            Kind::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => Ok(Node::X),
                    "y" => Ok(Node::Y),
                    "pi" => Ok(Node::Const(std::f64::consts::PI)),
                    "abs" | "sin" | "min" | "max" => {
                        let mut args = self.call_args()?;
                        match (name.as_str(), args.len()) {
                            ("abs", 1) => Ok(Node::Abs(Box::new(args.remove(0)))),
                            ("sin", 1) => Ok(Node::Sin(Box::new(args.remove(0)))),
                            ("min", k) if k >= 2 => Ok(Node::Min(args)),
                            ("max", k) if k >= 2 => Ok(Node::Max(args)),
                            (f, k) => self.error(format!("{f} does not take {k} argument(s)")),
                        }
                    }
                    other => {
                        self.pos -= 1;
                        self.error(format!("unknown identifier {other:?}"))
                    }
                }
            }
            other => self.error(format!("unexpected {other:?}")),
        }
    }

    fn call_args(&mut self) -> Result<Vec<Node>> {
        self.expect(Kind::LParen)?;
        let mut args = vec![self.expr()?];
        while let Some(Kind::Comma) = self.peek() {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(Kind::RParen)?;
        Ok(args)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x, 0.0)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1+2*3", 0.0), 7.0);
        assert_eq!(ev("(1+2)*3", 0.0), 9.0);
        assert_eq!(ev("-x^2", 3.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0), 512.0);
        assert_eq!(ev("8/4/2", 0.0), 1.0);
        assert_eq!(ev("1e-9 * 2E3", 0.0), 1e-9 * 2e3);
        assert_eq!(ev("2.5E+1", 0.0), 25.0);
    }

    #[test]
    fn functions_and_constants() {
        assert_eq!(ev("0.1 - abs(x - 0.5)", 0.5), 0.1);
        assert_eq!(ev("min(x, 1-x, 0.3)", 0.9), 1.0 - 0.9);
        assert_eq!(ev("max(x, 2)", 1.0), 2.0);
        assert!((ev("sin(pi*x)", 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unicode_minus() {
        assert_eq!(ev("−5*x*(1−x)+1", 0.5), -0.25);
    }

    #[test]
    fn two_variables() {
        let e = Expr::parse("x*y + y").unwrap();
        assert_eq!(e.eval(2.0, 3.0), 9.0);
    }

    #[test]
    fn rejects_garbage() {
        for bad in [
            "",
            "x +",
            "foo(x)",
            "sin(x, 1)",
            "min(x)",
            "(x",
            "x)",
            "3 $ 4",
            "z",
        ] {
            assert!(
                matches!(Expr::parse(bad), Err(Error::Parse { .. })),
                "{bad:?} should not parse"
            );
        }
    }
}
