//! Scalar expressions over `x0..x{n-1}`, `y0..y{n-1}`.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := expr ('+' | '-') expr          left-assoc
//!          | expr ('*' | '/') expr          left-assoc
//!          | '-' expr
//!          | expr '^' constant-expr         right-assoc
//!          | number | variable | func '(' expr ')' | '(' expr ')'
//! func    := sqrt | exp | log | sin | cos | tanh | abs
//! ```
//!
//! Exponents must be free of variables; they are folded to a constant node at
//! parse time. Evaluation is generic over [`Scalar`], so the same AST yields
//! plain values or jets.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::tower::{DomainError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{i}"),
            Var::Y(i) => write!(f, "y{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
    Abs,
}

impl UnaryOp {
    fn function(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sqrt" => UnaryOp::Sqrt,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tanh" => UnaryOp::Tanh,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    /// Left and right binding power.
    fn binding(self) -> (u8, u8) {
        match self {
            BinaryOp::Add | BinaryOp::Sub => (1, 2),
            BinaryOp::Mul | BinaryOp::Div => (3, 4),
            BinaryOp::Pow => (7, 6),
        }
    }
}

const PREFIX_NEG_BP: u8 = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Parsed expression. Equality compares structure only, not source offsets.
#[derive(Debug, Clone)]
pub struct Expr {
    pub node: Node,
    /// Byte offset in the source text (operator position for binary nodes).
    pub pos: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset} (expected one of: {})", expected.join(", "))]
pub struct ParseDiagnostic {
    pub offset: usize,
    pub expected: Vec<String>,
    pub message: String,
}

impl ParseDiagnostic {
    fn new(offset: usize, expected: &[&str], message: impl Into<String>) -> Self {
        ParseDiagnostic {
            offset,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

const OPERAND: &[&str] = &["number", "variable", "function", "(", "-"];
const AFTER_OPERAND: &[&str] = &["+", "-", "*", "/", "^", ")", "end of input"];

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseDiagnostic> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((Tok::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
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
                if !bytes[start..i].iter().any(u8::is_ascii_digit) {
                    return Err(ParseDiagnostic::new(start, &["digit"], "malformed number"));
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let e = i;
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    let digits = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    if digits == i {
                        return Err(ParseDiagnostic::new(
                            e,
                            &["exponent digits"],
                            "malformed exponent in number",
                        ));
                    }
                }
                let v: f64 = text[start..i]
                    .parse()
                    .map_err(|_| ParseDiagnostic::new(start, &["number"], "malformed number"))?;
                if !v.is_finite() {
                    return Err(ParseDiagnostic::new(start, &["number"], "numeric literal out of range"));
                }
                out.push((Tok::Num(v), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(ParseDiagnostic::new(
                    i,
                    OPERAND,
                    format!("unexpected character {:?}", text[i..].chars().next().unwrap_or('?')),
                ))
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

/// Limits that keep recursive evaluation and drop of the AST shallow.
const MAX_NESTING: usize = 64;
const MAX_NODES: usize = 1024;

struct Parser {
    toks: Vec<(Tok, usize)>,
    cur: usize,
    dimension: usize,
    nesting: usize,
    nodes: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.cur]
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.cur].clone();
        if self.cur + 1 < self.toks.len() {
            self.cur += 1;
        }
        t
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ParseDiagnostic> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            let pos = self.peek().1;
            return Err(ParseDiagnostic::new(pos, OPERAND, "expression nested too deeply"));
        }
        let out = self.expr_inner(min_bp);
        self.nesting -= 1;
        out
    }

    fn count_node(&mut self, pos: usize) -> Result<(), ParseDiagnostic> {
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(ParseDiagnostic::new(pos, &["end of input"], "expression too large"));
        }
        Ok(())
    }

    fn expr_inner(&mut self, min_bp: u8) -> Result<Expr, ParseDiagnostic> {
        let mut lhs = self.prefix()?;
        loop {
            let (tok, pos) = self.peek().clone();
            let op = match tok {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                Tok::Op('^') => BinaryOp::Pow,
                Tok::RParen | Tok::End => break,
                _ => {
                    return Err(ParseDiagnostic::new(pos, AFTER_OPERAND, "expected operator"));
                }
            };
            let (lbp, rbp) = op.binding();
            if lbp < min_bp {
                break;
            }
            self.bump();
            let mut rhs = self.expr(rbp)?;
            if op == BinaryOp::Pow {
                rhs = fold_exponent(rhs)?;
            }
            self.count_node(pos)?;
            lhs = Expr {
                node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseDiagnostic> {
        let (tok, pos) = self.bump();
        // Parentheses are grouping, not nodes.
        if tok != Tok::LParen {
            self.count_node(pos)?;
        }
        match tok {
            Tok::Num(v) => Ok(Expr {
                node: Node::Const(v),
                pos,
            }),
            Tok::Op('-') => {
                let inner = self.expr(PREFIX_NEG_BP)?;
                Ok(Expr {
                    node: Node::Unary(UnaryOp::Neg, Box::new(inner)),
                    pos,
                })
            }
            Tok::LParen => {
                let inner = self.expr(0)?;
                self.close_paren()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(op) = UnaryOp::function(&name) {
                    let (open, open_pos) = self.bump();
                    if open != Tok::LParen {
                        return Err(ParseDiagnostic::new(
                            open_pos,
                            &["("],
                            format!("expected '(' after function {name}"),
                        ));
                    }
                    let arg = self.expr(0)?;
                    self.close_paren()?;
                    return Ok(Expr {
                        node: Node::Unary(op, Box::new(arg)),
                        pos,
                    });
                }
                let var = parse_var(&name)
                    .ok_or_else(|| ParseDiagnostic::new(pos, OPERAND, format!("unknown identifier {name:?}")))?;
                let idx = match var {
                    Var::X(i) | Var::Y(i) => i,
                };
                if idx >= self.dimension {
                    return Err(ParseDiagnostic::new(
                        pos,
                        &["declared variable"],
                        format!(
                            "undeclared variable {name} (dimension {}, valid indices 0..{})",
                            self.dimension, self.dimension
                        ),
                    ));
                }
                Ok(Expr {
                    node: Node::Var(var),
                    pos,
                })
            }
            Tok::End => Err(ParseDiagnostic::new(pos, OPERAND, "unexpected end of input")),
            Tok::RParen => Err(ParseDiagnostic::new(pos, OPERAND, "unexpected ')'")),
            Tok::Op(c) => Err(ParseDiagnostic::new(pos, OPERAND, format!("unexpected operator '{c}'"))),
        }
    }

    fn close_paren(&mut self) -> Result<(), ParseDiagnostic> {
        let (tok, pos) = self.bump();
        if tok == Tok::RParen {
            Ok(())
        } else {
            Err(ParseDiagnostic::new(pos, &[")"], "unbalanced parenthesis"))
        }
    }
}

fn parse_var(name: &str) -> Option<Var> {
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let idx: usize = digits.parse().ok()?;
    match head {
        "x" => Some(Var::X(idx)),
        "y" => Some(Var::Y(idx)),
        _ => None,
    }
}

fn fold_exponent(e: Expr) -> Result<Expr, ParseDiagnostic> {
    if let Some((v, pos)) = e.first_var() {
        return Err(ParseDiagnostic::new(
            pos,
            &["constant exponent"],
            format!("exponent must be constant, found variable {v}"),
        ));
    }
    let value = e
        .eval::<f64>(&[], &[])
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ParseDiagnostic::new(e.pos, &["constant exponent"], "exponent is not a finite constant"))?;
    Ok(Expr {
        node: Node::Const(value),
        pos: e.pos,
    })
}

/// Parse `text` as an expression over `dimension` coordinates.
pub fn parse(text: &str, dimension: usize) -> Result<Expr, ParseDiagnostic> {
    if text.trim().is_empty() {
        return Err(ParseDiagnostic::new(0, OPERAND, "empty expression"));
    }
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        cur: 0,
        dimension,
        nesting: 0,
        nodes: 0,
    };
    let e = p.expr(0)?;
    let (tok, pos) = p.peek().clone();
    match tok {
        Tok::End => Ok(e),
        Tok::RParen => Err(ParseDiagnostic::new(pos, AFTER_OPERAND, "unmatched ')'")),
        _ => Err(ParseDiagnostic::new(pos, AFTER_OPERAND, "unexpected trailing input")),
    }
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr {
            node: Node::Const(v),
            pos: 0,
        }
    }

    /// Evaluate with `x` and `y` bindings.
    pub fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S, DomainError> {
        let out = match &self.node {
            Node::Const(v) => S::cst(*v),
            Node::Var(v) => {
                let (slot, idx) = match *v {
                    Var::X(i) => (x, i),
                    Var::Y(i) => (y, i),
                };
                slot.get(idx)
                    .cloned()
                    .ok_or_else(|| DomainError::at(self.pos, format!("unbound variable {v}")))?
            }
            Node::Unary(op, a) => {
                let a = a.eval(x, y)?;
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sqrt => {
                        if a.re() < 0.0 {
                            return Err(DomainError::at(self.pos, "sqrt of negative value"));
                        }
                        a.sqrt()
                    }
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => {
                        if a.re() <= 0.0 {
                            return Err(DomainError::at(self.pos, "log of non-positive value"));
                        }
                        a.ln()
                    }
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tanh => a.tanh(),
                    UnaryOp::Abs => a.abs(),
                }
            }
            Node::Binary(op, a, b) => {
                let a = a.eval(x, y)?;
                match op {
                    BinaryOp::Pow => match b.node {
                        Node::Const(p) => a.powf(p),
                        _ => return Err(DomainError::at(b.pos, "non-constant exponent")),
                    },
                    _ => {
                        let b = b.eval(x, y)?;
                        match op {
                            BinaryOp::Add => a + b,
                            BinaryOp::Sub => a - b,
                            BinaryOp::Mul => a * b,
                            BinaryOp::Div => {
                                if b.re() == 0.0 {
                                    return Err(DomainError::at(self.pos, "division by zero"));
                                }
                                a / b
                            }
                            BinaryOp::Pow => unreachable!(),
                        }
                    }
                }
            }
        };
        if !out.all_finite() {
            let what = match &self.node {
                Node::Unary(op, _) => format!("non-finite result of {}", op.name()),
                Node::Binary(op, _, _) => format!("non-finite result of '{}'", op.symbol()),
                _ => "non-finite value".to_string(),
            };
            return Err(DomainError::at(self.pos, what));
        }
        Ok(out)
    }

    /// Evaluate with a flat binding `x0..x{n-1}, y0..y{n-1}`.
    pub fn eval_flat<S: Scalar>(&self, coords: &[S], dimension: usize) -> Result<S, DomainError> {
        let (x, y) = coords.split_at(dimension.min(coords.len()));
        self.eval(x, y)
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    /// Variable names, e.g. `{"x0", "y1"}`.
    pub fn free_var_names(&self) -> BTreeSet<String> {
        self.free_vars().iter().map(Var::to_string).collect()
    }

    pub fn depends_on_y(&self) -> bool {
        self.free_vars().iter().any(|v| matches!(v, Var::Y(_)))
    }

    fn first_var(&self) -> Option<(Var, usize)> {
        match &self.node {
            Node::Const(_) => None,
            Node::Var(v) => Some((*v, self.pos)),
            Node::Unary(_, a) => a.first_var(),
            Node::Binary(_, a, b) => a.first_var().or_else(|| b.first_var()),
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match &self.node {
            Node::Const(_) => {}
            Node::Var(v) => {
                out.insert(*v);
            }
            Node::Unary(_, a) => a.collect_vars(out),
            Node::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl Expr {
    /// Binding strength of the printed form: atoms bind tightest.
    fn print_precedence(&self) -> u8 {
        match &self.node {
            Node::Const(v) if *v < 0.0 => PREFIX_NEG_BP,
            Node::Const(_) | Node::Var(_) => 10,
            Node::Unary(UnaryOp::Neg, _) => PREFIX_NEG_BP,
            Node::Unary(..) => 10,
            Node::Binary(op, ..) => op.binding().0,
        }
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    /// Minimal parenthesization; parser-produced trees reparse to an
    /// identical tree without gaining nesting depth.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Const(v) => write!(f, "{v:?}"),
            Node::Var(v) => write!(f, "{v}"),
            Node::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                a.fmt_operand(f, a.print_precedence() < PREFIX_NEG_BP)
            }
            Node::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Node::Binary(op, a, b) => {
                let (lbp, _) = op.binding();
                let (pa, pb) = (a.print_precedence(), b.print_precedence());
                // Right-associative power needs parentheses on a left power,
                // left-associative operators on a right operand of equal rank.
                let (left, right) = match op {
                    // A constant exponent reads back through the prefix rule.
                    BinaryOp::Pow => (pa <= lbp, pb <= lbp && !matches!(b.node, Node::Const(_))),
                    _ => (pa < lbp, pb <= lbp),
                };
                a.fmt_operand(f, left)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_operand(f, right)
            }
        }
    }
}
