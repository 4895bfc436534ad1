//! Scalar expressions over ambient coordinates.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | 'y' | 'z' | 'pi'
//!          | ('sin' | 'cos' | 'exp') '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)`. Gradients are evaluated exactly by forward differentiation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr> {
        let mut p = Parser {
            src: source,
            chars: source.char_indices().peekable(),
        };
        let root = p.expr()?;
        p.skip_ws();
        if let Some(&(i, c)) = p.chars.peek() {
            return Err(p.error(format!("unexpected `{c}` at offset {i}")));
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, p: &Point) -> f64 {
        value(&self.root, p)
    }

    /// Value and ambient gradient at `p`.
    pub fn eval_grad(&self, p: &Point) -> (f64, Point) {
        let d = dual(&self.root, p);
        (d.v, d.g)
    }
}

fn value(n: &Node, p: &Point) -> f64 {
    match n {
        Node::Num(c) => *c,
        Node::Var(i) => p[*i],
        Node::Neg(a) => -value(a, p),
        Node::Add(a, b) => value(a, p) + value(b, p),
        Node::Sub(a, b) => value(a, p) - value(b, p),
        Node::Mul(a, b) => value(a, p) * value(b, p),
        Node::Div(a, b) => value(a, p) / value(b, p),
        Node::Pow(a, b) => pow(value(a, p), value(b, p)),
        Node::Sin(a) => value(a, p).sin(),
        Node::Cos(a) => value(a, p).cos(),
        Node::Exp(a) => value(a, p).exp(),
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() < i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[derive(Clone, Copy)]
struct Dual {
    v: f64,
    g: Point,
}

fn dual(n: &Node, p: &Point) -> Dual {
    let d = |v, g| Dual { v, g };
    match n {
        Node::Num(c) => d(*c, Point::zeros()),
        Node::Var(i) => {
            let mut g = Point::zeros();
            g[*i] = 1.0;
            d(p[*i], g)
        }
        Node::Neg(a) => {
            let a = dual(a, p);
            d(-a.v, -a.g)
        }
        Node::Add(a, b) => {
            let (a, b) = (dual(a, p), dual(b, p));
            d(a.v + b.v, a.g + b.g)
        }
        Node::Sub(a, b) => {
            let (a, b) = (dual(a, p), dual(b, p));
            d(a.v - b.v, a.g - b.g)
        }
        Node::Mul(a, b) => {
            let (a, b) = (dual(a, p), dual(b, p));
            d(a.v * b.v, a.g * b.v + b.g * a.v)
        }
        Node::Div(a, b) => {
            let (a, b) = (dual(a, p), dual(b, p));
            d(a.v / b.v, (a.g * b.v - b.g * a.v) / (b.v * b.v))
        }
        Node::Pow(a, b) => {
            let (a, b) = (dual(a, p), dual(b, p));
            let v = pow(a.v, b.v);
            let mut g = a.g * (b.v * pow(a.v, b.v - 1.0));
            if b.g != Point::zeros() {
                g += b.g * (v * a.v.ln());
            }
            d(v, g)
        }
        Node::Sin(a) => {
            let a = dual(a, p);
            d(a.v.sin(), a.g * a.v.cos())
        }
        Node::Cos(a) => {
            let a = dual(a, p);
            d(a.v.cos(), -a.g * a.v.sin())
        }
        Node::Exp(a) => {
            let a = dual(a, p);
            let e = a.v.exp();
            d(e, a.g * e)
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl Parser<'_> {
    fn error(&self, message: String) -> Error {
        Error::Expression {
            expr: self.src.to_string(),
            message,
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn eat(&mut self, want: char) -> bool {
        self.skip_ws();
        if matches!(self.chars.peek(), Some(&(_, c)) if c == want) {
            self.chars.next();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.eat('^') {
            Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Node> {
        self.skip_ws();
        let Some(&(start, c)) = self.chars.peek() else {
            return Err(self.error("unexpected end of expression".into()));
        };
        if c == '(' {
            self.chars.next();
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("missing `)`".into()));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == '.' {
            let mut end = start;
            let mut prev = ' ';
            while let Some(&(i, ch)) = self.chars.peek() {
                let exp_sign = (ch == '+' || ch == '-') && (prev == 'e' || prev == 'E');
                if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || exp_sign {
                    end = i + ch.len_utf8();
                    prev = ch;
                    self.chars.next();
                } else {
                    break;
                }
            }
            let text = &self.src[start..end];
            return text
                .parse()
                .map(Node::Num)
                .map_err(|_| self.error(format!("bad number `{text}`")));
        }
        if c.is_ascii_alphabetic() {
            let mut end = start;
            while let Some(&(i, ch)) = self.chars.peek() {
                if ch.is_ascii_alphanumeric() || ch == '_' {
                    end = i + 1;
                    self.chars.next();
                } else {
                    break;
                }
            }
            let name = &self.src[start..end];
            return match name {
                "x" => Ok(Node::Var(0)),
                "y" => Ok(Node::Var(1)),
                "z" => Ok(Node::Var(2)),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "sin" | "cos" | "exp" => {
                    if !self.eat('(') {
                        return Err(self.error(format!("expected `(` after `{name}`")));
                    }
                    let arg = Box::new(self.expr()?);
                    if !self.eat(')') {
                        return Err(self.error("missing `)`".into()));
                    }
                    Ok(match name {
                        "sin" => Node::Sin(arg),
                        "cos" => Node::Cos(arg),
                        _ => Node::Exp(arg),
                    })
                }
                _ => Err(self.error(format!("unknown identifier `{name}`"))),
            };
        }
        Err(self.error(format!("unexpected `{c}` at offset {start}")))
    }
}
