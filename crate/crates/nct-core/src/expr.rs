//! Parsed arithmetic expressions over `x`, `y` and the per-map translation
//! symbols `t1`, `t2`, with exact evaluation and exact first/second partial
//! derivatives. Downstream modules never use finite differences for map
//! derivatives; they differentiate here symbolically and evaluate the result.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ('^' number)?
//! atom   := number | 'x' | 'y' | 't1' | 't2' | ident '(' expr ')' | '(' expr ')' | '-' atom
//! ident  := 'sin' | 'cos' | 'exp' | 'log' | 'sqrt'
//! ```
//!
//! Pow exponents are constants, which keeps differentiation closed-form.

use crate::error::DomainKind;
use crate::{Error, Result};

/// Permitted variable symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    T1,
    T2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Const(f64),
    Var(Var),
    Unary(UnaryFn, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    /// Power with a constant exponent.
    Pow(Box<Node>, f64),
}

#[derive(Debug, Clone)]
struct Node {
    kind: NodeKind,
    /// Byte offset into the original source, for error reporting. Nodes
    /// produced by differentiation inherit the offset of their source node.
    offset: u32,
}

/// An immutable parsed expression. Evaluation is pure and safe to call from
/// any number of threads.
#[derive(Debug, Clone)]
pub struct Expression {
    root: Node,
}

/// Partial-derivative selector: a multiset over `{x, y}` of size one or two.
/// Mixed partials are canonicalized to x-before-y, so `{x,y}` and `{y,x}`
/// run the same code path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivOrder {
    Dx,
    Dy,
    Dxx,
    Dxy,
    Dyy,
}

impl DerivOrder {
    /// Builds the canonical order from an unordered pair/singleton.
    pub fn from_vars(vars: &[Var]) -> Result<Self> {
        match vars {
            [Var::X] => Ok(DerivOrder::Dx),
            [Var::Y] => Ok(DerivOrder::Dy),
            [Var::X, Var::X] => Ok(DerivOrder::Dxx),
            [Var::X, Var::Y] | [Var::Y, Var::X] => Ok(DerivOrder::Dxy),
            [Var::Y, Var::Y] => Ok(DerivOrder::Dyy),
            _ => Err(Error::InvalidArg(
                "derivative order must be a multiset over {x,y} of size 1 or 2".into(),
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
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

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' => {
                let tok = match c {
                    b'+' => Tok::Plus,
                    b'-' => Tok::Minus,
                    b'*' => Tok::Star,
                    b'/' => Tok::Slash,
                    b'^' => Tok::Caret,
                    b'(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                out.push(Token { tok, offset: i });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
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
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    expected: "number".into(),
                })?;
                out.push(Token {
                    tok: Tok::Num(value),
                    offset: start,
                });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(src[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                return Err(Error::Syntax {
                    offset: i,
                    expected: "number, identifier, operator, or parenthesis".into(),
                })
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser (recursive descent over the grammar above)
// ---------------------------------------------------------------------------

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    src_len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn offset(&self) -> usize {
        self.peek().map(|t| t.offset).unwrap_or(self.src_len)
    }

    fn err(&self, expected: &str) -> Error {
        Error::Syntax {
            offset: self.offset(),
            expected: expected.into(),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let offset = t.offset as u32;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node {
                kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                offset,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            let offset = t.offset as u32;
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Node {
                kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                offset,
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(t) = self.peek() {
            if t.tok == Tok::Caret {
                let offset = t.offset as u32;
                self.pos += 1;
                let exp = match self.peek() {
                    Some(Token {
                        tok: Tok::Num(v), ..
                    }) => *v,
                    _ => return Err(self.err("number (pow exponents must be constants)")),
                };
                self.pos += 1;
                return Ok(Node {
                    kind: NodeKind::Pow(Box::new(base), exp),
                    offset,
                });
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let t = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(self.err("number, variable, function, '(' or '-'")),
        };
        match t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Node {
                    kind: NodeKind::Const(v),
                    offset: t.offset as u32,
                })
            }
            Tok::Minus => {
                self.bump();
                let inner = self.atom()?;
                Ok(Node {
                    kind: NodeKind::Unary(UnaryFn::Neg, Box::new(inner)),
                    offset: t.offset as u32,
                })
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token {
                        tok: Tok::RParen, ..
                    }) => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(self.err("')'")),
                }
            }
            Tok::Ident(name) => {
                self.bump();
                let var = match name.as_str() {
                    "x" => Some(Var::X),
                    "y" => Some(Var::Y),
                    "t1" => Some(Var::T1),
                    "t2" => Some(Var::T2),
                    _ => None,
                };
                if let Some(v) = var {
                    return Ok(Node {
                        kind: NodeKind::Var(v),
                        offset: t.offset as u32,
                    });
                }
                let f = match name.as_str() {
                    "sin" => UnaryFn::Sin,
                    "cos" => UnaryFn::Cos,
                    "exp" => UnaryFn::Exp,
                    "log" => UnaryFn::Log,
                    "sqrt" => UnaryFn::Sqrt,
                    _ => {
                        return Err(Error::UnknownIdent {
                            name,
                            offset: t.offset,
                        })
                    }
                };
                match self.peek() {
                    Some(Token {
                        tok: Tok::LParen, ..
                    }) => {
                        self.bump();
                    }
                    _ => return Err(self.err("'(' after function name")),
                }
                let arg = self.expr()?;
                match self.peek() {
                    Some(Token {
                        tok: Tok::RParen, ..
                    }) => {
                        self.bump();
                    }
                    _ => return Err(self.err("')'")),
                }
                Ok(Node {
                    kind: NodeKind::Unary(f, Box::new(arg)),
                    offset: t.offset as u32,
                })
            }
            _ => Err(self.err("number, variable, function, '(' or '-'")),
        }
    }
}

/// Parses `source` into an [`Expression`].
pub fn parse(source: &str) -> Result<Expression> {
    if source.trim().is_empty() {
        return Err(Error::Syntax {
            offset: 0,
            expected: "non-empty expression".into(),
        });
    }
    let toks = tokenize(source)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        src_len: source.len(),
    };
    let root = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.err("operator or end of input"));
    }
    Ok(Expression { root })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, t1: f64, t2: f64) -> Self {
        Self { x, y, t1, t2 }
    }

    fn get(&self, v: Var) -> f64 {
        match v {
            Var::X => self.x,
            Var::Y => self.y,
            Var::T1 => self.t1,
            Var::T2 => self.t2,
        }
    }
}

fn eval_node(n: &Node, p: &Point) -> Result<f64> {
    let domain_err = |kind: DomainKind, n: &Node| Error::Domain {
        offset: n.offset as usize,
        node: render(n),
        kind,
    };
    match &n.kind {
        NodeKind::Const(c) => Ok(*c),
        NodeKind::Var(v) => Ok(p.get(*v)),
        NodeKind::Unary(f, a) => {
            let v = eval_node(a, p)?;
            match f {
                UnaryFn::Neg => Ok(-v),
                UnaryFn::Sin => Ok(v.sin()),
                UnaryFn::Cos => Ok(v.cos()),
                UnaryFn::Exp => Ok(v.exp()),
                UnaryFn::Log => {
                    if v <= 0.0 {
                        Err(domain_err(DomainKind::LogNonPositive, n))
                    } else {
                        Ok(v.ln())
                    }
                }
                UnaryFn::Sqrt => {
                    if v < 0.0 {
                        Err(domain_err(DomainKind::SqrtNegative, n))
                    } else {
                        Ok(v.sqrt())
                    }
                }
            }
        }
        NodeKind::Binary(op, a, b) => {
            let va = eval_node(a, p)?;
            let vb = eval_node(b, p)?;
            match op {
                BinOp::Add => Ok(va + vb),
                BinOp::Sub => Ok(va - vb),
                BinOp::Mul => Ok(va * vb),
                BinOp::Div => {
                    if vb == 0.0 {
                        Err(domain_err(DomainKind::DivByZero, n))
                    } else {
                        Ok(va / vb)
                    }
                }
            }
        }
        NodeKind::Pow(a, c) => {
            let v = eval_node(a, p)?;
            if v < 0.0 && c.fract() != 0.0 {
                return Err(domain_err(DomainKind::PowNegativeBase, n));
            }
            if v == 0.0 && *c < 0.0 {
                return Err(domain_err(DomainKind::DivByZero, n));
            }
            Ok(v.powf(*c))
        }
    }
}

// ---------------------------------------------------------------------------
// Symbolic differentiation with folding constructors
// ---------------------------------------------------------------------------

fn constant(c: f64, offset: u32) -> Node {
    Node {
        kind: NodeKind::Const(c),
        offset,
    }
}

fn as_const(n: &Node) -> Option<f64> {
    match n.kind {
        NodeKind::Const(c) => Some(c),
        _ => None,
    }
}

fn mk_unary(f: UnaryFn, a: Node, offset: u32) -> Node {
    if let Some(c) = as_const(&a) {
        let v = match f {
            UnaryFn::Neg => Some(-c),
            UnaryFn::Sin => Some(c.sin()),
            UnaryFn::Cos => Some(c.cos()),
            UnaryFn::Exp => Some(c.exp()),
            UnaryFn::Log => (c > 0.0).then(|| c.ln()),
            UnaryFn::Sqrt => (c >= 0.0).then(|| c.sqrt()),
        };
        if let Some(v) = v {
            return constant(v, offset);
        }
    }
    Node {
        kind: NodeKind::Unary(f, Box::new(a)),
        offset,
    }
}

fn mk_bin(op: BinOp, a: Node, b: Node, offset: u32) -> Node {
    let (ca, cb) = (as_const(&a), as_const(&b));
    match op {
        BinOp::Add => {
            if ca == Some(0.0) {
                return b;
            }
            if cb == Some(0.0) {
                return a;
            }
            if let (Some(x), Some(y)) = (ca, cb) {
                return constant(x + y, offset);
            }
        }
        BinOp::Sub => {
            if cb == Some(0.0) {
                return a;
            }
            if let (Some(x), Some(y)) = (ca, cb) {
                return constant(x - y, offset);
            }
            if ca == Some(0.0) {
                return mk_unary(UnaryFn::Neg, b, offset);
            }
        }
        BinOp::Mul => {
            if ca == Some(0.0) || cb == Some(0.0) {
                return constant(0.0, offset);
            }
            if ca == Some(1.0) {
                return b;
            }
            if cb == Some(1.0) {
                return a;
            }
            if let (Some(x), Some(y)) = (ca, cb) {
                return constant(x * y, offset);
            }
        }
        BinOp::Div => {
            if ca == Some(0.0) && cb != Some(0.0) {
                return constant(0.0, offset);
            }
            if cb == Some(1.0) {
                return a;
            }
            if let (Some(x), Some(y)) = (ca, cb) {
                if y != 0.0 {
                    return constant(x / y, offset);
                }
            }
        }
    }
    Node {
        kind: NodeKind::Binary(op, Box::new(a), Box::new(b)),
        offset,
    }
}

fn mk_pow(a: Node, c: f64, offset: u32) -> Node {
    if c == 0.0 {
        return constant(1.0, offset);
    }
    if c == 1.0 {
        return a;
    }
    if let Some(v) = as_const(&a) {
        if v >= 0.0 || c.fract() == 0.0 {
            return constant(v.powf(c), offset);
        }
    }
    Node {
        kind: NodeKind::Pow(Box::new(a), c),
        offset,
    }
}

fn diff(n: &Node, var: Var) -> Node {
    let o = n.offset;
    match &n.kind {
        NodeKind::Const(_) => constant(0.0, o),
        NodeKind::Var(v) => constant(if *v == var { 1.0 } else { 0.0 }, o),
        NodeKind::Unary(f, a) => {
            let da = diff(a, var);
            match f {
                UnaryFn::Neg => mk_unary(UnaryFn::Neg, da, o),
                UnaryFn::Sin => mk_bin(BinOp::Mul, mk_unary(UnaryFn::Cos, (**a).clone(), o), da, o),
                UnaryFn::Cos => mk_unary(
                    UnaryFn::Neg,
                    mk_bin(BinOp::Mul, mk_unary(UnaryFn::Sin, (**a).clone(), o), da, o),
                    o,
                ),
                UnaryFn::Exp => mk_bin(BinOp::Mul, n.clone(), da, o),
                UnaryFn::Log => mk_bin(BinOp::Div, da, (**a).clone(), o),
                UnaryFn::Sqrt => mk_bin(
                    BinOp::Div,
                    da,
                    mk_bin(BinOp::Mul, constant(2.0, o), n.clone(), o),
                    o,
                ),
            }
        }
        NodeKind::Binary(op, a, b) => {
            let da = diff(a, var);
            let db = diff(b, var);
            match op {
                BinOp::Add => mk_bin(BinOp::Add, da, db, o),
                BinOp::Sub => mk_bin(BinOp::Sub, da, db, o),
                BinOp::Mul => mk_bin(
                    BinOp::Add,
                    mk_bin(BinOp::Mul, da, (**b).clone(), o),
                    mk_bin(BinOp::Mul, (**a).clone(), db, o),
                    o,
                ),
                BinOp::Div => {
                    // (a/b)' = a'/b - a b' / b^2
                    let first = mk_bin(BinOp::Div, da, (**b).clone(), o);
                    let second = mk_bin(
                        BinOp::Div,
                        mk_bin(BinOp::Mul, (**a).clone(), db, o),
                        mk_bin(BinOp::Mul, (**b).clone(), (**b).clone(), o),
                        o,
                    );
                    mk_bin(BinOp::Sub, first, second, o)
                }
            }
        }
        NodeKind::Pow(a, c) => {
            // (a^c)' = c a^(c-1) a'
            let da = diff(a, var);
            mk_bin(
                BinOp::Mul,
                mk_bin(
                    BinOp::Mul,
                    constant(*c, o),
                    mk_pow((**a).clone(), c - 1.0, o),
                    o,
                ),
                da,
                o,
            )
        }
    }
}

// ---------------------------------------------------------------------------
// Display
// ---------------------------------------------------------------------------

fn prec(n: &Node) -> u8 {
    match &n.kind {
        NodeKind::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        NodeKind::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        NodeKind::Pow(..) => 3,
        _ => 4,
    }
}

fn render(n: &Node) -> String {
    let mut s = String::new();
    write_node(&mut s, n);
    s
}

fn write_child(out: &mut String, child: &Node, min_prec: u8) {
    if prec(child) < min_prec {
        out.push('(');
        write_node(out, child);
        out.push(')');
    } else {
        write_node(out, child);
    }
}

fn write_node(out: &mut String, n: &Node) {
    match &n.kind {
        NodeKind::Const(c) => {
            out.push_str(&format!("{c}"));
        }
        NodeKind::Var(v) => out.push_str(match v {
            Var::X => "x",
            Var::Y => "y",
            Var::T1 => "t1",
            Var::T2 => "t2",
        }),
        NodeKind::Unary(UnaryFn::Neg, a) => {
            out.push('-');
            write_child(out, a, 4);
        }
        NodeKind::Unary(f, a) => {
            out.push_str(match f {
                UnaryFn::Sin => "sin",
                UnaryFn::Cos => "cos",
                UnaryFn::Exp => "exp",
                UnaryFn::Log => "log",
                UnaryFn::Sqrt => "sqrt",
                UnaryFn::Neg => unreachable!(),
            });
            out.push('(');
            write_node(out, a);
            out.push(')');
        }
        NodeKind::Binary(op, a, b) => {
            let p = prec(n);
            write_child(out, a, p);
            out.push(match op {
                BinOp::Add => '+',
                BinOp::Sub => '-',
                BinOp::Mul => '*',
                BinOp::Div => '/',
            });
            // Right operand of - and / needs strictly higher precedence.
            let rp = match op {
                BinOp::Add | BinOp::Mul => p,
                BinOp::Sub | BinOp::Div => p + 1,
            };
            write_child(out, b, rp);
        }
        NodeKind::Pow(a, c) => {
            write_child(out, a, 4);
            if *c < 0.0 {
                // The grammar has no signed exponents; render through division.
                out.push_str(&format!("^{c}").replace('-', ""));
                let inner = std::mem::take(out);
                out.push_str(&format!("1/({inner})"));
            } else {
                out.push_str(&format!("^{c}"));
            }
        }
    }
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&render(&self.root))
    }
}

fn node_eq(a: &Node, b: &Node) -> bool {
    match (&a.kind, &b.kind) {
        (NodeKind::Const(x), NodeKind::Const(y)) => x == y,
        (NodeKind::Var(x), NodeKind::Var(y)) => x == y,
        (NodeKind::Unary(f, x), NodeKind::Unary(g, y)) => f == g && node_eq(x, y),
        (NodeKind::Binary(o1, x1, y1), NodeKind::Binary(o2, x2, y2)) => {
            o1 == o2 && node_eq(x1, x2) && node_eq(y1, y2)
        }
        (NodeKind::Pow(x, c), NodeKind::Pow(y, d)) => c == d && node_eq(x, y),
        _ => false,
    }
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        node_eq(&self.root, &other.root)
    }
}

// ---------------------------------------------------------------------------
// Compiled form for hot loops
// ---------------------------------------------------------------------------

/// Postfix instruction stream with the map's translation parameters bound as
/// constants. No domain checks: inputs are grid-validated at load time, and
/// IEEE semantics propagate any escape as NaN/inf which the callers' guards
/// catch.
#[derive(Debug, Clone)]
pub(crate) struct Program {
    ops: Vec<Op>,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    X,
    Y,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Sq,
    Powi(i32),
    Powf(f64),
}

const MAX_STACK: usize = 64;

impl Program {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut st = [0.0f64; MAX_STACK];
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(c) => {
                    st[sp] = c;
                    sp += 1;
                }
                Op::X => {
                    st[sp] = x;
                    sp += 1;
                }
                Op::Y => {
                    st[sp] = y;
                    sp += 1;
                }
                Op::Add => {
                    sp -= 1;
                    st[sp - 1] += st[sp];
                }
                Op::Sub => {
                    sp -= 1;
                    st[sp - 1] -= st[sp];
                }
                Op::Mul => {
                    sp -= 1;
                    st[sp - 1] *= st[sp];
                }
                Op::Div => {
                    sp -= 1;
                    st[sp - 1] /= st[sp];
                }
                Op::Neg => st[sp - 1] = -st[sp - 1],
                Op::Sin => st[sp - 1] = st[sp - 1].sin(),
                Op::Cos => st[sp - 1] = st[sp - 1].cos(),
                Op::Exp => st[sp - 1] = st[sp - 1].exp(),
                Op::Ln => st[sp - 1] = st[sp - 1].ln(),
                Op::Sqrt => st[sp - 1] = st[sp - 1].sqrt(),
                Op::Sq => st[sp - 1] *= st[sp - 1],
                Op::Powi(k) => st[sp - 1] = st[sp - 1].powi(k),
                Op::Powf(c) => st[sp - 1] = st[sp - 1].powf(c),
            }
        }
        st[0]
    }

    /// The program is a single constant.
    pub fn as_const(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(c)] => Some(*c),
            _ => None,
        }
    }
}

fn substitute_params(n: &Node, t1: f64, t2: f64) -> Node {
    let o = n.offset;
    match &n.kind {
        NodeKind::Const(c) => constant(*c, o),
        NodeKind::Var(Var::T1) => constant(t1, o),
        NodeKind::Var(Var::T2) => constant(t2, o),
        NodeKind::Var(v) => Node {
            kind: NodeKind::Var(*v),
            offset: o,
        },
        NodeKind::Unary(f, a) => mk_unary(*f, substitute_params(a, t1, t2), o),
        NodeKind::Binary(op, a, b) => mk_bin(
            *op,
            substitute_params(a, t1, t2),
            substitute_params(b, t1, t2),
            o,
        ),
        NodeKind::Pow(a, c) => mk_pow(substitute_params(a, t1, t2), *c, o),
    }
}

fn emit(n: &Node, ops: &mut Vec<Op>, depth: &mut usize, max_depth: &mut usize) {
    match &n.kind {
        NodeKind::Const(c) => {
            ops.push(Op::Const(*c));
            *depth += 1;
        }
        NodeKind::Var(Var::X) => {
            ops.push(Op::X);
            *depth += 1;
        }
        NodeKind::Var(Var::Y) => {
            ops.push(Op::Y);
            *depth += 1;
        }
        // Parameters are substituted before emission.
        NodeKind::Var(_) => unreachable!("unbound parameter in compiled expression"),
        NodeKind::Unary(f, a) => {
            emit(a, ops, depth, max_depth);
            ops.push(match f {
                UnaryFn::Neg => Op::Neg,
                UnaryFn::Sin => Op::Sin,
                UnaryFn::Cos => Op::Cos,
                UnaryFn::Exp => Op::Exp,
                UnaryFn::Log => Op::Ln,
                UnaryFn::Sqrt => Op::Sqrt,
            });
        }
        NodeKind::Binary(op, a, b) => {
            emit(a, ops, depth, max_depth);
            emit(b, ops, depth, max_depth);
            ops.push(match op {
                BinOp::Add => Op::Add,
                BinOp::Sub => Op::Sub,
                BinOp::Mul => Op::Mul,
                BinOp::Div => Op::Div,
            });
            *depth -= 1;
        }
        NodeKind::Pow(a, c) => {
            emit(a, ops, depth, max_depth);
            if *c == 2.0 {
                ops.push(Op::Sq);
            } else if c.fract() == 0.0 && c.abs() <= 64.0 {
                ops.push(Op::Powi(*c as i32));
            } else {
                ops.push(Op::Powf(*c));
            }
        }
    }
    *max_depth = (*max_depth).max(*depth);
}

// ---------------------------------------------------------------------------
// Public expression API
// ---------------------------------------------------------------------------

impl Expression {
    /// IEEE double-precision evaluation at the given point.
    pub fn evaluate(&self, x: f64, y: f64, t1: f64, t2: f64) -> Result<f64> {
        eval_node(&self.root, &Point::new(x, y, t1, t2))
    }

    /// Exact partial derivative (symbolic differentiation, then evaluation).
    pub fn deriv(&self, order: DerivOrder, point: Point) -> Result<f64> {
        self.derivative_expr(order).evaluate(point.x, point.y, point.t1, point.t2)
    }

    /// The derivative as an expression. Mixed partials differentiate x first.
    pub fn derivative_expr(&self, order: DerivOrder) -> Expression {
        let root = match order {
            DerivOrder::Dx => diff(&self.root, Var::X),
            DerivOrder::Dy => diff(&self.root, Var::Y),
            DerivOrder::Dxx => diff(&diff(&self.root, Var::X), Var::X),
            DerivOrder::Dxy => diff(&diff(&self.root, Var::X), Var::Y),
            DerivOrder::Dyy => diff(&diff(&self.root, Var::Y), Var::Y),
        };
        Expression { root }
    }

    /// First derivative with respect to any symbol, including `t1`/`t2`.
    pub fn derivative_var(&self, var: Var) -> Expression {
        Expression {
            root: diff(&self.root, var),
        }
    }

    /// The set of variables appearing in the expression.
    pub fn vars(&self) -> Vec<Var> {
        fn walk(n: &Node, out: &mut Vec<Var>) {
            match &n.kind {
                NodeKind::Var(v) => {
                    if !out.contains(v) {
                        out.push(*v);
                    }
                }
                NodeKind::Unary(_, a) | NodeKind::Pow(a, _) => walk(a, out),
                NodeKind::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                NodeKind::Const(_) => {}
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Compiles with `t1`, `t2` bound; constants fold.
    pub(crate) fn compile(&self, t1: f64, t2: f64) -> Result<Program> {
        let folded = substitute_params(&self.root, t1, t2);
        let mut ops = Vec::new();
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        emit(&folded, &mut ops, &mut depth, &mut max_depth);
        if max_depth > MAX_STACK {
            return Err(Error::InvalidSpec(format!(
                "expression too deep to compile (stack {max_depth})"
            )));
        }
        Ok(Program { ops })
    }

    /// Checks finiteness (and domain validity) on an `n`×`n` grid over
    /// `[0,1]^2` at the given parameters.
    pub fn validate_grid(&self, t1: f64, t2: f64, n: usize) -> Result<()> {
        for i in 0..n {
            for j in 0..n {
                let x = i as f64 / (n - 1) as f64;
                let y = j as f64 / (n - 1) as f64;
                let v = self.evaluate(x, y, t1, t2)?;
                if !v.is_finite() {
                    return Err(Error::Domain {
                        offset: self.root.offset as usize,
                        node: render(&self.root),
                        kind: DomainKind::NonFinite,
                    });
                }
            }
        }
        Ok(())
    }
}
