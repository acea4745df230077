//! A small arithmetic expression language for initial data, diffusion
//! modes and spatial test functions.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constants `pi` and `e`, the functions `sin cos tan exp log sqrt abs tanh
//! sign floor min max`, and variables chosen by the caller (`x`/`x1`, `x2`,
//! `u`, ...).

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Sign,
    Floor,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "exp" => (Func::Exp, 1),
            "log" | "ln" => (Func::Log, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "tanh" => (Func::Tanh, 1),
            "sign" => (Func::Sign, 1),
            "floor" => (Func::Floor, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

/// A parsed expression bound to an ordered list of variable names.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl Expr {
    /// Parses `source`, resolving identifiers against `vars` (each entry is a
    /// list of aliases for one slot).
    pub fn parse(source: &str, vars: &[&[&str]]) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
        };
        let root = p.expr()?;
        if let Some((at, tok)) = p.peek_full() {
            return Err(Error::Parse {
                position: at,
                message: format!("unexpected token {tok:?}"),
            });
        }
        Ok(Self {
            source: source.to_string(),
            root: fold(root),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        eval(&self.root, vars)
    }

    /// The value if the expression reduces to a constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn uses_var(&self, slot: usize) -> bool {
        uses(&self.root, slot)
    }
}

fn uses(node: &Node, slot: usize) -> bool {
    match node {
        Node::Const(_) => false,
        Node::Var(i) => *i == slot,
        Node::Neg(a) => uses(a, slot),
        Node::Bin(_, a, b) => uses(a, slot) || uses(b, slot),
        Node::Call(_, args) => args.iter().any(|a| uses(a, slot)),
    }
}

fn eval(node: &Node, vars: &[f64]) -> f64 {
    match node {
        Node::Const(c) => *c,
        Node::Var(i) => vars[*i],
        Node::Neg(a) => -eval(a, vars),
        Node::Bin(op, a, b) => {
            let x = eval(a, vars);
            let y = eval(b, vars);
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Pow => pow(x, y),
            }
        }
        Node::Call(f, args) => {
            let x = eval(&args[0], vars);
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => x.tan(),
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
                Func::Sqrt => x.sqrt(),
                Func::Abs => x.abs(),
                Func::Tanh => x.tanh(),
                Func::Sign => {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Func::Floor => x.floor(),
                Func::Min => x.min(eval(&args[1], vars)),
                Func::Max => x.max(eval(&args[1], vars)),
            }
        }
    }
}

fn pow(x: f64, y: f64) -> f64 {
    if y == 2.0 {
        x * x
    } else if y.fract() == 0.0 && y.abs() < 64.0 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

fn fold(node: Node) -> Node {
    match node {
        Node::Neg(a) => match fold(*a) {
            Node::Const(c) => Node::Const(-c),
            other => Node::Neg(Box::new(other)),
        },
        Node::Bin(op, a, b) => {
            let a = fold(*a);
            let b = fold(*b);
            match (&a, &b) {
                (Node::Const(_), Node::Const(_)) => Node::Const(eval(&Node::Bin(op, Box::new(a), Box::new(b)), &[])),
                _ => Node::Bin(op, Box::new(a), Box::new(b)),
            }
        }
        Node::Call(f, args) => {
            let args: Vec<Node> = args.into_iter().map(fold).collect();
            if args.iter().all(|a| matches!(a, Node::Const(_))) {
                Node::Const(eval(&Node::Call(f, args), &[]))
            } else {
                Node::Call(f, args)
            }
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                position: start,
                message: format!("bad number `{text}`"),
            })?;
            out.push((start, Token::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Ident(src[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Token::Op(c),
                '(' => Token::LParen,
                ')' => Token::RParen,
                ',' => Token::Comma,
                _ => {
                    return Err(Error::Parse {
                        position: i,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((i, tok));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    vars: &'a [&'a [&'a str]],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn peek_full(&self) -> Option<(usize, &Token)> {
        self.tokens.get(self.pos).map(|(p, t)| (*p, t))
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or_else(
            || self.tokens.last().map_or(0, |(p, _)| p + 1),
            |(p, _)| *p,
        )
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            other => Err(Error::Parse {
                position: self.here(),
                message: format!("expected {want:?}, found {other:?}"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // Right associative; binds tighter than unary minus on its left.
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let at = self.here();
        let tok = self.peek().cloned();
        match tok {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if let Some((func, arity)) = Func::lookup(&name) {
                    self.expect(Token::LParen)?;
                    let mut args = vec![self.expr()?];
                    while let Some(Token::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen)?;
                    if args.len() != arity {
                        return Err(Error::Parse {
                            position: at,
                            message: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                match name.as_str() {
                    "pi" => return Ok(Node::Const(std::f64::consts::PI)),
                    "e" => return Ok(Node::Const(std::f64::consts::E)),
                    _ => {}
                }
                self.vars
                    .iter()
                    .position(|aliases| aliases.contains(&name.as_str()))
                    .map(Node::Var)
                    .ok_or_else(|| Error::Parse {
                        position: at,
                        message: format!("unknown identifier `{name}`"),
                    })
            }
            other => Err(Error::Parse {
                position: at,
                message: format!("unexpected {other:?}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const XU: &[&[&str]] = &[&["x", "x1"], &["x2"], &["u", "r"]];

    #[test]
    fn precedence_and_functions() {
        let e = Expr::parse("1 + 2*3^2 - -4", &[]).unwrap();
        assert_eq!(e.as_constant(), Some(23.0));
        let e = Expr::parse("-2^2", &[]).unwrap();
        assert_eq!(e.as_constant(), Some(-4.0));
        let e = Expr::parse("2^3^2", &[]).unwrap();
        assert_eq!(e.as_constant(), Some(512.0));
        let e = Expr::parse("10*sin(2*pi*x) + max(u, 0.5)", XU).unwrap();
        let v = e.eval(&[0.25, 0.0, 0.1]);
        assert!((v - 10.5).abs() < 1e-12);
        assert!(e.uses_var(0) && e.uses_var(2) && !e.uses_var(1));
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(Expr::parse("1.5e-3", &[]).unwrap().as_constant(), Some(1.5e-3));
    }

    #[test]
    fn errors_carry_positions() {
        match Expr::parse("1 + y", XU) {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 4),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("sin(1, 2)", &[]).is_err());
        assert!(Expr::parse("(1 + 2", &[]).is_err());
        assert!(Expr::parse("1 2", &[]).is_err());
    }
}
