//! Scalar field expressions in the plane.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'y' | func '(' expr ')' | '(' expr ')'
//! func   := 'exp' | 'sin' | 'cos' | 'sqrt'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)`. Expressions can be differentiated symbolically, which is how
//! conductivities obtain their gradient and the Laplacian of their square root.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 200;
const MAX_LEN: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    /// Natural logarithm. Only produced by differentiation of `f^g`.
    Ln,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sqrt => v.sqrt(),
            Func::Ln => v.ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Arc<Node>),
    Call(Func, Arc<Node>),
    Bin(BinOp, Arc<Node>, Arc<Node>),
}

type Rc = Arc<Node>;

fn cnst(v: f64) -> Rc {
    Arc::new(Node::Const(v))
}

fn as_const(n: &Node) -> Option<f64> {
    match n {
        Node::Const(v) => Some(*v),
        _ => None,
    }
}

fn neg(a: Rc) -> Rc {
    match &*a {
        Node::Const(v) => cnst(-v),
        Node::Neg(inner) => inner.clone(),
        _ => Arc::new(Node::Neg(a)),
    }
}

fn add(a: Rc, b: Rc) -> Rc {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => cnst(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Arc::new(Node::Bin(BinOp::Add, a, b)),
    }
}

fn sub(a: Rc, b: Rc) -> Rc {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => cnst(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Arc::new(Node::Bin(BinOp::Sub, a, b)),
    }
}

fn mul(a: Rc, b: Rc) -> Rc {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => cnst(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => cnst(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => Arc::new(Node::Bin(BinOp::Mul, a, b)),
    }
}

fn div(a: Rc, b: Rc) -> Rc {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) if y != 0.0 => cnst(x / y),
        (Some(x), _) if x == 0.0 => cnst(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Arc::new(Node::Bin(BinOp::Div, a, b)),
    }
}

fn pow(a: Rc, b: Rc) -> Rc {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => cnst(x.powf(y)),
        (_, Some(y)) if y == 1.0 => a,
        (_, Some(y)) if y == 0.0 => cnst(1.0),
        _ => Arc::new(Node::Bin(BinOp::Pow, a, b)),
    }
}

fn call(f: Func, a: Rc) -> Rc {
    match as_const(&a) {
        Some(v) => cnst(f.apply(v)),
        None => Arc::new(Node::Call(f, a)),
    }
}

impl Node {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Node::Const(v) => *v,
            Node::Var(Var::X) => x,
            Node::Var(Var::Y) => y,
            Node::Neg(a) => -a.eval(x, y),
            Node::Call(f, a) => f.apply(a.eval(x, y)),
            Node::Bin(op, a, b) => {
                let (u, v) = (a.eval(x, y), b.eval(x, y));
                match op {
                    BinOp::Add => u + v,
                    BinOp::Sub => u - v,
                    BinOp::Mul => u * v,
                    BinOp::Div => u / v,
                    BinOp::Pow => {
                        if v == 2.0 {
                            u * u
                        } else {
                            u.powf(v)
                        }
                    }
                }
            }
        }
    }

    fn depends_on(&self, var: Var) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(v) => *v == var,
            Node::Neg(a) | Node::Call(_, a) => a.depends_on(var),
            Node::Bin(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    fn derive(self: &Rc, var: Var) -> Rc {
        if !self.depends_on(var) {
            return cnst(0.0);
        }
        match &**self {
            Node::Const(_) => cnst(0.0),
            Node::Var(v) => cnst(if *v == var { 1.0 } else { 0.0 }),
            Node::Neg(a) => neg(a.derive(var)),
            Node::Call(f, a) => {
                let da = a.derive(var);
                let outer = match f {
                    Func::Exp => call(Func::Exp, a.clone()),
                    Func::Sin => call(Func::Cos, a.clone()),
                    Func::Cos => neg(call(Func::Sin, a.clone())),
                    Func::Sqrt => div(cnst(0.5), call(Func::Sqrt, a.clone())),
                    Func::Ln => div(cnst(1.0), a.clone()),
                };
                mul(outer, da)
            }
            Node::Bin(op, a, b) => {
                let (da, db) = (a.derive(var), b.derive(var));
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b.clone()), mul(a.clone(), db)),
                    BinOp::Div => div(
                        sub(mul(da, b.clone()), mul(a.clone(), db)),
                        pow(b.clone(), cnst(2.0)),
                    ),
                    BinOp::Pow => match as_const(b) {
                        Some(c) => mul(mul(cnst(c), pow(a.clone(), cnst(c - 1.0))), da),
                        None => mul(
                            self.clone(),
                            add(
                                mul(db, call(Func::Ln, a.clone())),
                                div(mul(b.clone(), da), a.clone()),
                            ),
                        ),
                    },
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Node::Neg(_) => 3,
            Node::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, n: &Node, min: u8| -> fmt::Result {
            if n.precedence() < min {
                write!(f, "({n})")
            } else {
                write!(f, "{n}")
            }
        };
        match self {
            Node::Const(v) => {
                if *v < 0.0 {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Node::Var(Var::X) => f.write_str("x"),
            Node::Var(Var::Y) => f.write_str("y"),
            Node::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, 4)
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
            Node::Bin(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => ("+", 1, 2),
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    BinOp::Pow => ("^", 5, 4),
                };
                wrap(f, a, lp)?;
                f.write_str(sym)?;
                wrap(f, b, rp)
            }
        }
    }
}

/// A parsed expression in the variables `x` and `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    root: Rc,
}

impl Expression {
    pub fn parse(src: &str) -> Result<Self> {
        if src.len() > MAX_LEN {
            return Err(Error::parse(0, "expression too long"));
        }
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            depth: 0,
        };
        let root = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(Error::parse(t.at, format!("unexpected {:?}", t.kind)));
        }
        Ok(Expression { root })
    }

    pub fn constant(v: f64) -> Self {
        Expression { root: cnst(v) }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.root.eval(x, y)
    }

    pub fn derivative(&self, var: Var) -> Expression {
        Expression {
            root: self.root.derive(var),
        }
    }

    pub fn gradient(&self) -> [Expression; 2] {
        [self.derivative(Var::X), self.derivative(Var::Y)]
    }

    pub fn laplacian(&self) -> Expression {
        let xx = self.derivative(Var::X).derivative(Var::X);
        let yy = self.derivative(Var::Y).derivative(Var::Y);
        Expression {
            root: add(xx.root, yy.root),
        }
    }

    pub fn sqrt(&self) -> Expression {
        Expression {
            root: call(Func::Sqrt, self.root.clone()),
        }
    }

    pub fn is_constant(&self) -> bool {
        as_const(&self.root).is_some()
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl std::str::FromStr for Expression {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expression::parse(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Token {
    kind: Tok,
    at: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_digit() || c == b'.' {
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
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| Error::parse(start, format!("bad number '{text}'")))?;
            Tok::Num(v)
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Tok::Ident(src[start..i].to_string())
        } else {
            i += 1;
            match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(Error::parse(start, format!("unexpected character '{ch}'")));
                }
            }
        };
        out.push(Token { kind, at: start });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn end_pos(&self) -> usize {
        self.tokens.last().map(|t| t.at + 1).unwrap_or(0)
    }

    fn next(&mut self) -> Result<Token> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::parse(self.end_pos(), "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: Tok::Op(c), ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let at = self.peek().map(|t| t.at).unwrap_or_else(|| self.end_pos());
            return Err(Error::parse(at, "expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Rc> {
        self.enter()?;
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            lhs = if op == '+' {
                Arc::new(Node::Bin(BinOp::Add, lhs, rhs))
            } else {
                Arc::new(Node::Bin(BinOp::Sub, lhs, rhs))
            };
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Rc> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Arc::new(Node::Bin(BinOp::Mul, lhs, rhs))
            } else {
                Arc::new(Node::Bin(BinOp::Div, lhs, rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Rc> {
        self.enter()?;
        let out = match self.eat_op(&['-', '+']) {
            Some('-') => Arc::new(Node::Neg(self.unary()?)),
            Some(_) => self.unary()?,
            None => self.power()?,
        };
        self.depth -= 1;
        Ok(out)
    }

    fn power(&mut self) -> Result<Rc> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Arc::new(Node::Bin(BinOp::Pow, base, exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Rc> {
        let t = self.next()?;
        match t.kind {
            Tok::Num(v) => Ok(cnst(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Arc::new(Node::Var(Var::X))),
                "y" => Ok(Arc::new(Node::Var(Var::Y))),
                "exp" | "sin" | "cos" | "sqrt" => {
                    let f = match name.as_str() {
                        "exp" => Func::Exp,
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        _ => Func::Sqrt,
                    };
                    match self.next()? {
                        Token {
                            kind: Tok::LParen, ..
                        } => {}
                        other => {
                            return Err(Error::parse(other.at, format!("expected '(' after {name}")))
                        }
                    }
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Arc::new(Node::Call(f, arg)))
                }
                _ => Err(Error::parse(t.at, format!("unknown identifier '{name}'"))),
            },
            other => Err(Error::parse(t.at, format!("unexpected {other:?}"))),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.next()? {
            Token {
                kind: Tok::RParen, ..
            } => Ok(()),
            other => Err(Error::parse(other.at, "expected ')'")),
        }
    }
}
