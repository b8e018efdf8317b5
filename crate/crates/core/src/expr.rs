//! Closed-form scalar expressions used to describe problem data.
//!
//! The language is deliberately small: numeric literals, the coordinate
//! variables `x`, `y` (aliases `x1`, `x2`), the constant `pi`, optional named
//! parameters, the binary operators `+ - * / ^`, unary minus and the functions
//! `abs`, `min`, `max`, `exp`, `sin`, `cos`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("division by zero at {point:?}")]
    DivisionByZero { point: Vec<f64> },
    #[error("domain error at {point:?}: {msg}")]
    Domain { msg: String, point: Vec<f64> },
    #[error("expression uses coordinate {index} but point has dimension {dim}")]
    Dimension { index: usize, dim: usize },
    #[error("parameter `{0}` is unbound")]
    UnboundParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Min,
    Max,
    Exp,
    Sin,
    Cos,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Syntax tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Coord(usize),
    Param(String),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression together with the text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        Self::parse_with_params(text, &[])
    }

    /// Parses `text`, accepting the identifiers in `params` as free parameters
    /// to be fixed later with [`Expr::bind`].
    pub fn parse_with_params(text: &str, params: &[&str]) -> Result<Expr, ExprError> {
        let tokens = lex(text)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            params,
            end: text.len(),
        };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ExprError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {}", tok.kind),
            });
        }
        Ok(Expr {
            source: text.to_string(),
            root,
        })
    }

    /// Constant expression; the source text is the shortest round-trip
    /// decimal form of `value`.
    pub fn constant(value: f64) -> Expr {
        Expr {
            source: format!("{value}"),
            root: Node::Const(value),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Replaces the parameter `name` by `value`.
    pub fn bind(&self, name: &str, value: f64) -> Expr {
        fn go(node: &Node, name: &str, value: f64) -> Node {
            match node {
                Node::Param(p) if p == name => Node::Const(value),
                Node::Neg(a) => Node::Neg(Box::new(go(a, name, value))),
                Node::Binary(op, a, b) => {
                    Node::Binary(*op, Box::new(go(a, name, value)), Box::new(go(b, name, value)))
                }
                Node::Call(f, args) => Node::Call(*f, args.iter().map(|a| go(a, name, value)).collect()),
                other => other.clone(),
            }
        }
        Expr {
            source: format!("{}[{name}={value}]", self.source),
            root: go(&self.root, name, value),
        }
    }

    /// Highest coordinate index referenced plus one (0 for constants).
    pub fn dimension(&self) -> usize {
        fn go(node: &Node) -> usize {
            match node {
                Node::Coord(i) => i + 1,
                Node::Neg(a) => go(a),
                Node::Binary(_, a, b) => go(a).max(go(b)),
                Node::Call(_, args) => args.iter().map(go).max().unwrap_or(0),
                _ => 0,
            }
        }
        go(&self.root)
    }

    /// `Some(c)` when the expression contains no coordinates or parameters.
    pub fn as_constant(&self) -> Option<f64> {
        fn free(node: &Node) -> bool {
            match node {
                Node::Coord(_) | Node::Param(_) => false,
                Node::Const(_) => true,
                Node::Neg(a) => free(a),
                Node::Binary(_, a, b) => free(a) && free(b),
                Node::Call(_, args) => args.iter().all(free),
            }
        }
        if free(&self.root) {
            self.eval(&[]).ok()
        } else {
            None
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        let v = eval_node(&self.root, point)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain {
                msg: "non-finite result".into(),
                point: point.to_vec(),
            })
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, ExprError> {
    Expr::parse(text)
}

pub fn eval(expr: &Expr, point: &[f64]) -> Result<f64, ExprError> {
    expr.eval(point)
}

fn eval_node(node: &Node, point: &[f64]) -> Result<f64, ExprError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Coord(i) => *point.get(*i).ok_or(ExprError::Dimension {
            index: *i,
            dim: point.len(),
        })?,
        Node::Param(p) => return Err(ExprError::UnboundParameter(p.clone())),
        Node::Neg(a) => -eval_node(a, point)?,
        Node::Binary(op, a, b) => {
            let x = eval_node(a, point)?;
            let y = eval_node(b, point)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(ExprError::DivisionByZero {
                            point: point.to_vec(),
                        });
                    }
                    x / y
                }
                BinOp::Pow => pow(x, y, point)?,
            }
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], point)?;
            match func {
                Func::Abs => a.abs(),
                Func::Exp => a.exp(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Min => a.min(eval_node(&args[1], point)?),
                Func::Max => a.max(eval_node(&args[1], point)?),
            }
        }
    })
}

fn pow(base: f64, exp: f64, point: &[f64]) -> Result<f64, ExprError> {
    if base == 0.0 && exp < 0.0 {
        return Err(ExprError::Domain {
            msg: "zero raised to a negative power".into(),
            point: point.to_vec(),
        });
    }
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        return Ok(base.powi(exp as i32));
    }
    if base < 0.0 {
        return Err(ExprError::Domain {
            msg: "negative base with non-integer exponent".into(),
            point: point.to_vec(),
        });
    }
    Ok(base.powf(exp))
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Op(c) => write!(f, "operator `{c}`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Comma => f.write_str("`,`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
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
            let lit = &text[start..i];
            let v = lit.parse::<f64>().map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{lit}`"),
            })?;
            TokenKind::Num(v)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            TokenKind::Ident(text[start..i].to_string())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => TokenKind::Op(c),
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                ',' => TokenKind::Comma,
                _ => {
                    return Err(ExprError::Syntax {
                        pos: start,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            }
        };
        out.push(Token { kind, pos: start });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    params: &'a [&'a str],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ExprError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(ExprError::Syntax {
                pos: t.pos,
                msg: format!("expected {kind}, found {}", t.kind),
            }),
            None => Err(ExprError::Syntax {
                pos: self.end,
                msg: format!("expected {kind}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.eat_op(&['-', '+']) {
            Some('-') => Ok(Node::Neg(Box::new(self.unary()?))),
            Some(_) => self.unary(),
            None => self.power(),
        }
    }

    // `^` binds tighter than unary minus and associates to the right.
    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(ExprError::Syntax {
                pos: self.end,
                msg: "unexpected end of input".into(),
            });
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Num(v) => Ok(Node::Const(v)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if let Some(func) = Func::lookup(&name) {
                    self.expect(TokenKind::LParen)?;
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek(), Some(Token { kind: TokenKind::Comma, .. })) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(TokenKind::RParen)?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Arity {
                            name,
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                match name.as_str() {
                    "x" | "x1" => Ok(Node::Coord(0)),
                    "y" | "x2" => Ok(Node::Coord(1)),
                    "pi" => Ok(Node::Const(std::f64::consts::PI)),
                    _ if self.params.contains(&name.as_str()) => Ok(Node::Param(name)),
                    _ => Err(ExprError::UnknownIdentifier { name, pos: tok.pos }),
                }
            }
            other => Err(ExprError::Syntax {
                pos: tok.pos,
                msg: format!("unexpected {other}"),
            }),
        }
    }
}
