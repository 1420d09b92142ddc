//! A small arithmetic expression language for right-hand sides, boundary
//! data and subsolutions.
//!
//! Grammar (standard precedence, `+ - * /` left associative, `^` right
//! associative and binding tighter than unary minus):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables are `x1..xn` and `u`; functions are `sqrt abs max min exp sin
//! cos pow`.

use std::fmt;

use crate::error::{Error, Result};

pub const MAX_SOURCE_BYTES: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Max,
    Min,
    Exp,
    Sin,
    Cos,
    Pow,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "max" => Func::Max,
            "min" => Func::Min,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Max => "max",
            Func::Min => "min",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Max | Func::Min | Func::Pow => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    /// Zero-based coordinate index (`x1` is `X(0)`).
    X(usize),
    U,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// AST node tagged with the byte offset it was parsed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub node: Node,
    pub offset: usize,
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug)]
pub struct Expression {
    root: Expr,
    source: String,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Expression {
    pub fn parse(text: &str) -> Result<Self> {
        parse_expression(text)
    }

    pub fn constant(v: f64) -> Self {
        Self { root: Expr { node: Node::Const(v), offset: 0 }, source: format_number(v) }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Largest `xi` index referenced (1-based), 0 if none.
    pub fn max_coordinate(&self) -> usize {
        fn walk(e: &Expr) -> usize {
            match &e.node {
                Node::Const(_) | Node::Var(Var::U) => 0,
                Node::Var(Var::X(i)) => i + 1,
                Node::Neg(a) => walk(a),
                Node::Bin(_, a, b) => walk(a).max(walk(b)),
                Node::Call(_, args) => args.iter().map(walk).max().unwrap_or(0),
            }
        }
        walk(&self.root)
    }

    pub fn uses_u(&self) -> bool {
        fn walk(e: &Expr) -> bool {
            match &e.node {
                Node::Const(_) | Node::Var(Var::X(_)) => false,
                Node::Var(Var::U) => true,
                Node::Neg(a) => walk(a),
                Node::Bin(_, a, b) => walk(a) || walk(b),
                Node::Call(_, args) => args.iter().any(walk),
            }
        }
        walk(&self.root)
    }

    /// Evaluates at point `x` with unknown value `u`.
    pub fn eval(&self, x: &[f64], u: f64) -> Result<f64> {
        eval_node(&self.root, x, u)
    }

    /// Evaluation with failures mapped to NaN.
    pub fn eval_or_nan(&self, x: &[f64], u: f64) -> f64 {
        self.eval(x, u).unwrap_or(f64::NAN)
    }

    /// Fully parenthesized canonical form; re-parses to the same AST.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        print_node(&self.root, &mut s);
        s
    }

    /// True when the expression is affine in `x` and independent of `u`
    /// (checked structurally on the AST).
    pub fn is_affine(&self) -> bool {
        affine_coefficients(&self.root).is_some()
    }

    /// `(c, g)` with `expr(x) = c + g·x` when affine.
    pub fn affine_form(&self, n: usize) -> Option<(f64, Vec<f64>)> {
        let (c, mut g) = affine_coefficients(&self.root)?;
        if g.len() > n {
            return None;
        }
        g.resize(n, 0.0);
        Some((c, g))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn affine_coefficients(e: &Expr) -> Option<(f64, Vec<f64>)> {
    fn add(a: (f64, Vec<f64>), b: (f64, Vec<f64>), sign: f64) -> (f64, Vec<f64>) {
        let len = a.1.len().max(b.1.len());
        let mut g = vec![0.0; len];
        for (i, v) in a.1.iter().enumerate() {
            g[i] += v;
        }
        for (i, v) in b.1.iter().enumerate() {
            g[i] += sign * v;
        }
        (a.0 + sign * b.0, g)
    }
    fn scale(a: (f64, Vec<f64>), c: f64) -> (f64, Vec<f64>) {
        (a.0 * c, a.1.into_iter().map(|v| v * c).collect())
    }
    match &e.node {
        Node::Const(c) => Some((*c, vec![])),
        Node::Var(Var::X(i)) => {
            let mut g = vec![0.0; i + 1];
            g[*i] = 1.0;
            Some((0.0, g))
        }
        Node::Var(Var::U) => None,
        Node::Neg(a) => affine_coefficients(a).map(|v| scale(v, -1.0)),
        Node::Bin(op, a, b) => {
            let fa = affine_coefficients(a)?;
            let fb = affine_coefficients(b)?;
            let is_const = |v: &(f64, Vec<f64>)| v.1.iter().all(|x| *x == 0.0);
            match op {
                BinOp::Add => Some(add(fa, fb, 1.0)),
                BinOp::Sub => Some(add(fa, fb, -1.0)),
                BinOp::Mul if is_const(&fa) => Some(scale(fb, fa.0)),
                BinOp::Mul if is_const(&fb) => Some(scale(fa, fb.0)),
                BinOp::Div if is_const(&fb) && fb.0 != 0.0 => Some(scale(fa, 1.0 / fb.0)),
                BinOp::Pow if is_const(&fa) && is_const(&fb) => Some((fa.0.powf(fb.0), vec![])),
                _ => None,
            }
        }
        Node::Call(func, args) => {
            let vals: Option<Vec<_>> = args.iter().map(affine_coefficients).collect();
            let vals = vals?;
            if vals.iter().all(|v| v.1.iter().all(|x| *x == 0.0)) {
                let consts: Vec<f64> = vals.iter().map(|v| v.0).collect();
                apply_func(*func, &consts, e.offset).ok().map(|c| (c, vec![]))
            } else {
                None
            }
        }
    }
}

fn eval_node(e: &Expr, x: &[f64], u: f64) -> Result<f64> {
    let v = match &e.node {
        Node::Const(c) => *c,
        Node::Var(Var::U) => u,
        Node::Var(Var::X(i)) => *x.get(*i).ok_or_else(|| Error::Eval {
            offset: e.offset,
            msg: format!("x{} not defined in dimension {}", i + 1, x.len()),
        })?,
        Node::Neg(a) => -eval_node(a, x, u)?,
        Node::Bin(op, a, b) => {
            let a = eval_node(a, x, u)?;
            let b = eval_node(b, x, u)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
        Node::Call(f, args) => {
            let vals: Result<Vec<f64>> = args.iter().map(|a| eval_node(a, x, u)).collect();
            apply_func(*f, &vals?, e.offset)?
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Eval { offset: e.offset, msg: format!("non-finite value {v}") })
    }
}

fn apply_func(f: Func, a: &[f64], offset: usize) -> Result<f64> {
    let v = match f {
        Func::Sqrt => {
            if a[0] < 0.0 {
                return Err(Error::Eval { offset, msg: format!("sqrt of negative {}", a[0]) });
            }
            a[0].sqrt()
        }
        Func::Abs => a[0].abs(),
        Func::Max => a[0].max(a[1]),
        Func::Min => a[0].min(a[1]),
        Func::Exp => a[0].exp(),
        Func::Sin => a[0].sin(),
        Func::Cos => a[0].cos(),
        Func::Pow => a[0].powf(a[1]),
    };
    Ok(v)
}

fn format_number(v: f64) -> String {
    // `{:?}` is the shortest representation that round-trips.
    let s = format!("{v:?}");
    if v.is_sign_negative() {
        format!("({s})")
    } else {
        s
    }
}

fn print_node(e: &Expr, out: &mut String) {
    match &e.node {
        Node::Const(c) => out.push_str(&format_number(*c)),
        Node::Var(Var::U) => out.push('u'),
        Node::Var(Var::X(i)) => out.push_str(&format!("x{}", i + 1)),
        Node::Neg(a) => {
            out.push_str("(-");
            print_node(a, out);
            out.push(')');
        }
        Node::Bin(op, a, b) => {
            out.push('(');
            print_node(a, out);
            out.push(op.symbol());
            print_node(b, out);
            out.push(')');
        }
        Node::Call(f, args) => {
            out.push_str(f.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                print_node(a, out);
            }
            out.push(')');
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expression> {
    if text.len() > MAX_SOURCE_BYTES {
        return Err(Error::Parse { offset: MAX_SOURCE_BYTES, msg: "expression exceeds 64 KiB".into() });
    }
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(Expression { root, source: text.trim().to_string() })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse { offset: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let offset = self.pos;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), offset };
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            let offset = self.pos;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), offset };
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            let offset = self.pos;
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr { node: Node::Neg(Box::new(inner)), offset });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            let offset = self.pos;
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr { node: Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)), offset });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(c) = self.peek() else {
            return Err(self.error("unexpected end of input"));
        };
        let offset = self.pos;
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            if let Some(func) = Func::from_name(name) {
                if !self.eat(b'(') {
                    return Err(self.error(&format!("expected '(' after {name}")));
                }
                let mut args = vec![self.expr()?];
                while self.eat(b',') {
                    args.push(self.expr()?);
                }
                if !self.eat(b')') {
                    return Err(self.error("expected ')' or ','"));
                }
                if args.len() != func.arity() {
                    return Err(Error::Parse {
                        offset,
                        msg: format!("{name} takes {} argument(s), got {}", func.arity(), args.len()),
                    });
                }
                return Ok(Expr { node: Node::Call(func, args), offset });
            }
            let var = match name {
                "u" => Var::U,
                _ => match name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    Some(i) if i >= 1 && !name[1..].starts_with('0') => Var::X(i - 1),
                    _ => {
                        return Err(Error::Parse {
                            offset,
                            msg: format!("unknown identifier '{name}'"),
                        })
                    }
                },
            };
            return Ok(Expr { node: Node::Var(var), offset });
        }
        Err(self.error(&format!("unexpected character '{}'", c as char)))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        let mut p = self.pos;
        digits(&mut p);
        if p < s.len() && s[p] == b'.' {
            p += 1;
            digits(&mut p);
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                digits(&mut q);
                p = q;
            }
        }
        let text = std::str::from_utf8(&s[start..p]).expect("ascii");
        let v: f64 = text.parse().map_err(|_| self.error(&format!("malformed number '{text}'")))?;
        self.pos = p;
        Ok(Expr { node: Node::Const(v), offset: start })
    }
}
