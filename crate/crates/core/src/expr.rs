//! Arithmetic expressions over complex scalars.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := NUMBER | "i" | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^-1` is `0.5`. `i` is the imaginary unit and `n` is
//! conventionally the time index.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {reason} in `{subexpr}`")]
    Domain { reason: String, subexpr: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
    Abs,
    Re,
    Im,
    Conj,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "re" => Func::Re,
            "im" => Func::Im,
            "conj" => Func::Conj,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Re => "re",
            Func::Im => "im",
            Func::Conj => "conj",
        }
    }
}

/// A node of the expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(Complex64),
    Var(String),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

// constructors named after the operators they build
#[allow(clippy::should_implement_trait)]
impl Node {
    pub fn real(v: f64) -> Node {
        Node::Const(Complex64::new(v, 0.0))
    }

    pub fn var(name: impl Into<String>) -> Node {
        Node::Var(name.into())
    }

    pub fn neg(a: Node) -> Node {
        Node::Neg(Box::new(a))
    }

    pub fn add(a: Node, b: Node) -> Node {
        Node::Binary(BinOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Node, b: Node) -> Node {
        Node::Binary(BinOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Node, b: Node) -> Node {
        Node::Binary(BinOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn div(a: Node, b: Node) -> Node {
        Node::Binary(BinOp::Div, Box::new(a), Box::new(b))
    }

    pub fn pow(a: Node, b: Node) -> Node {
        Node::Binary(BinOp::Pow, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, a: Node) -> Node {
        Node::Call(f, Box::new(a))
    }

    /// Replaces every variable found in `map` simultaneously.
    pub fn substitute(&self, map: &HashMap<String, Node>) -> Node {
        match self {
            Node::Const(_) => self.clone(),
            Node::Var(name) => map.get(name).cloned().unwrap_or_else(|| self.clone()),
            Node::Neg(a) => Node::neg(a.substitute(map)),
            Node::Binary(op, a, b) => {
                Node::Binary(*op, Box::new(a.substitute(map)), Box::new(b.substitute(map)))
            }
            Node::Call(f, a) => Node::call(*f, a.substitute(map)),
        }
    }

    /// Light algebraic cleanup: sums and products are flattened, numeric
    /// constants folded, equal terms of opposite sign (and equal factors in
    /// numerator and denominator) cancelled, and `e^1` reduced to `e`.
    pub fn simplified(&self) -> Node {
        let one = Complex64::new(1.0, 0.0);
        match self {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Call(f, a) => Node::call(*f, a.simplified()),
            Node::Neg(_) | Node::Binary(BinOp::Add | BinOp::Sub, ..) => {
                let mut terms = Vec::new();
                self.collect_terms(false, &mut terms);
                rebuild_sum(terms)
            }
            Node::Binary(BinOp::Mul | BinOp::Div, ..) => {
                let mut factors = Vec::new();
                self.collect_factors(false, &mut factors);
                rebuild_product(factors)
            }
            Node::Binary(BinOp::Pow, a, b) => {
                let (a, b) = (a.simplified(), b.simplified());
                match (&a, &b) {
                    (_, Node::Const(c)) if *c == one => a,
                    (Node::Const(x), Node::Const(y)) => match power(*x, *y) {
                        Some(v) if v.is_finite() => Node::Const(v),
                        _ => Node::pow(a, b),
                    },
                    _ => Node::pow(a, b),
                }
            }
        }
    }

    fn collect_terms(&self, negated: bool, out: &mut Vec<(bool, Node)>) {
        match self {
            Node::Binary(BinOp::Add, a, b) => {
                a.collect_terms(negated, out);
                b.collect_terms(negated, out);
            }
            Node::Binary(BinOp::Sub, a, b) => {
                a.collect_terms(negated, out);
                b.collect_terms(!negated, out);
            }
            Node::Neg(a) => a.collect_terms(!negated, out),
            other => match other.simplified() {
                s @ (Node::Neg(_) | Node::Binary(BinOp::Add | BinOp::Sub, ..)) => s.collect_terms(negated, out),
                // fold a negative real coefficient into the term sign
                Node::Binary(BinOp::Mul, c, rest) if matches!(*c, Node::Const(v) if v.im == 0.0 && v.re < 0.0) => {
                    let Node::Const(v) = *c else { unreachable!() };
                    let term = if v.re == -1.0 { *rest } else { Node::mul(Node::Const(-v), *rest) };
                    out.push((!negated, term));
                }
                s => out.push((negated, s)),
            },
        }
    }

    fn collect_factors(&self, inverted: bool, out: &mut Vec<(bool, Node)>) {
        match self {
            Node::Binary(BinOp::Mul, a, b) => {
                a.collect_factors(inverted, out);
                b.collect_factors(inverted, out);
            }
            Node::Binary(BinOp::Div, a, b) => {
                a.collect_factors(inverted, out);
                b.collect_factors(!inverted, out);
            }
            other => match other.simplified() {
                s @ Node::Binary(BinOp::Mul | BinOp::Div, ..) => s.collect_factors(inverted, out),
                s => out.push((inverted, s)),
            },
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Node::Const(_) => {}
            Node::Var(name) => {
                out.insert(name.clone());
            }
            Node::Neg(a) | Node::Call(_, a) => a.collect_vars(out),
            Node::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn eval(&self, lookup: &dyn Fn(&str) -> Option<Complex64>) -> Result<Complex64, ExprError> {
        match self {
            Node::Const(c) => Ok(*c),
            Node::Var(name) => lookup(name).ok_or_else(|| ExprError::Unbound(name.clone())),
            Node::Neg(a) => {
                // `-0.0 + 0.0` is `+0.0`: keeps `-4` and `-(4)` on the same side of branch cuts
                let v = a.eval(lookup)?;
                Ok(Complex64::new(-v.re + 0.0, -v.im + 0.0))
            }
            Node::Binary(op, a, b) => {
                let l = a.eval(lookup)?;
                let r = b.eval(lookup)?;
                match op {
                    BinOp::Add => Ok(l + r),
                    BinOp::Sub => Ok(l - r),
                    BinOp::Mul => Ok(l * r),
                    BinOp::Div => {
                        if r == Complex64::new(0.0, 0.0) {
                            Err(self.domain("division by zero"))
                        } else {
                            Ok(l / r)
                        }
                    }
                    BinOp::Pow => power(l, r).ok_or_else(|| self.domain("zero to a power with non-positive real part")),
                }
            }
            Node::Call(f, a) => {
                let v = a.eval(lookup)?;
                Ok(match f {
                    Func::Exp => v.exp(),
                    Func::Ln => {
                        if v == Complex64::new(0.0, 0.0) {
                            return Err(self.domain("logarithm of zero"));
                        }
                        v.ln()
                    }
                    Func::Sqrt => v.sqrt(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Abs => Complex64::new(v.norm(), 0.0),
                    Func::Re => Complex64::new(v.re, 0.0),
                    Func::Im => Complex64::new(v.im, 0.0),
                    Func::Conj => v.conj(),
                })
            }
        }
    }

    fn domain(&self, reason: &str) -> ExprError {
        ExprError::Domain { reason: reason.to_string(), subexpr: format_node(self, &|_| None) }
    }
}

fn rebuild_sum(terms: Vec<(bool, Node)>) -> Node {
    let zero = Complex64::new(0.0, 0.0);
    let mut constant = zero;
    let mut kept: Vec<(bool, Node)> = Vec::new();
    let constant_first = matches!(terms.first(), Some((_, Node::Const(_))));
    for (negated, term) in terms {
        if let Node::Const(c) = term {
            constant += if negated { -c } else { c };
        } else if let Some(pos) = kept.iter().position(|(n, t)| *n != negated && *t == term) {
            kept.remove(pos);
        } else {
            kept.push((negated, term));
        }
    }
    // lead with a positive term when there is one
    if let Some(pos) = kept.iter().position(|(n, _)| !n) {
        let lead = kept.remove(pos);
        kept.insert(0, lead);
    }
    let mut acc: Option<Node> = None;
    if constant_first && constant != zero {
        acc = Some(Node::Const(constant));
        constant = zero;
    }
    for (negated, term) in kept {
        acc = Some(match (acc, negated) {
            (None, false) => term,
            (None, true) => Node::neg(term),
            (Some(a), false) => Node::add(a, term),
            (Some(a), true) => Node::sub(a, term),
        });
    }
    match acc {
        None => Node::Const(constant),
        Some(a) if constant == zero => a,
        Some(a) if constant.im == 0.0 && constant.re < 0.0 => Node::sub(a, Node::Const(-constant)),
        Some(a) => Node::add(a, Node::Const(constant)),
    }
}

fn rebuild_product(factors: Vec<(bool, Node)>) -> Node {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mut coef = one;
    let mut num: Vec<Node> = Vec::new();
    let mut den: Vec<Node> = Vec::new();
    for (inverted, factor) in factors {
        match (&factor, inverted) {
            (Node::Const(c), false) => coef *= c,
            (Node::Const(c), true) if *c != zero => coef /= c,
            (_, false) => match den.iter().position(|d| *d == factor) {
                Some(pos) => {
                    den.remove(pos);
                }
                None => num.push(factor),
            },
            (_, true) => match num.iter().position(|d| *d == factor) {
                Some(pos) => {
                    num.remove(pos);
                }
                None => den.push(factor),
            },
        }
    }
    if coef == zero && den.is_empty() {
        return Node::Const(zero);
    }
    let numerator = match num.into_iter().reduce(Node::mul) {
        None => Node::Const(coef),
        Some(n) if coef == one => n,
        Some(n) if coef == -one => Node::neg(n),
        Some(n) => Node::mul(Node::Const(coef), n),
    };
    match den.into_iter().reduce(Node::mul) {
        None => numerator,
        Some(d) => Node::div(numerator, d),
    }
}

/// `w^c` on the principal branch, `0^c = 0` for `re(c) > 0`.
///
/// Small real integer exponents use repeated multiplication so that
/// real polynomial terms stay exactly real.
pub fn power(w: Complex64, c: Complex64) -> Option<Complex64> {
    if w == Complex64::new(0.0, 0.0) {
        return if c.re > 0.0 { Some(Complex64::new(0.0, 0.0)) } else { None };
    }
    if c.im == 0.0 && c.re.fract() == 0.0 && c.re.abs() <= 1024.0 {
        return Some(w.powi(c.re as i32));
    }
    Some((c * w.ln()).exp())
}

/// A parsed expression together with its free-variable set.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    vars: BTreeSet<String>,
}

impl Expression {
    pub fn new(root: Node) -> Self {
        let mut vars = BTreeSet::new();
        root.collect_vars(&mut vars);
        Expression { root, vars }
    }

    pub fn constant(c: Complex64) -> Self {
        Expression::new(Node::Const(c))
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn free_vars(&self) -> &BTreeSet<String> {
        &self.vars
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.vars.contains(name)
    }

    pub fn substitute(&self, map: &HashMap<String, Node>) -> Expression {
        Expression::new(self.root.substitute(map))
    }

    /// Substitutes a single variable.
    pub fn substitute_var(&self, name: &str, with: &Node) -> Expression {
        let mut map = HashMap::new();
        map.insert(name.to_string(), with.clone());
        self.substitute(&map)
    }

    pub fn evaluate(&self, env: &Bindings) -> Result<Complex64, ExprError> {
        self.root.eval(&|name| env.get(name))
    }

    /// Evaluates with an arbitrary lookup function.
    pub fn evaluate_with(&self, lookup: &dyn Fn(&str) -> Option<Complex64>) -> Result<Complex64, ExprError> {
        self.root.eval(lookup)
    }

    /// Formats with variables renamed by `rename` (names it returns `None` for are kept).
    pub fn display_with(&self, rename: &dyn Fn(&str) -> Option<String>) -> String {
        format_node(&self.root, rename)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_expression(self))
    }
}

impl std::str::FromStr for Expression {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expression(s)
    }
}

/// Variable name to value map. Looking up an unbound name is an error.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings {
    values: HashMap<String, Complex64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<Complex64>) -> Self {
        self.set(name, value.into());
        self
    }

    pub fn set(&mut self, name: &str, value: Complex64) {
        if let Some(slot) = self.values.get_mut(name) {
            *slot = value;
        } else {
            self.values.insert(name.to_string(), value);
        }
    }

    pub fn get(&self, name: &str) -> Option<Complex64> {
        if name == "i" {
            return Some(Complex64::new(0.0, 1.0));
        }
        self.values.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<Complex64, ExprError> {
        self.get(name).ok_or_else(|| ExprError::Unbound(name.to_string()))
    }

    pub fn extend<'a>(&mut self, items: impl IntoIterator<Item = (&'a String, &'a Complex64)>) {
        for (k, v) in items {
            self.set(k, *v);
        }
    }
}

pub fn evaluate(expr: &Expression, env: &Bindings) -> Result<Complex64, ExprError> {
    expr.evaluate(env)
}

// ---------------------------------------------------------------- lexer

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
    End,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let ch = bytes[pos];
        if ch.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        let start = pos;
        let tok = match ch {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                let mut end = pos;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
                if end < bytes.len() && bytes[end] == b'.' {
                    end += 1;
                    while end < bytes.len() && bytes[end].is_ascii_digit() {
                        end += 1;
                    }
                }
                if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                    let mut probe = end + 1;
                    if probe < bytes.len() && (bytes[probe] == b'+' || bytes[probe] == b'-') {
                        probe += 1;
                    }
                    if probe < bytes.len() && bytes[probe].is_ascii_digit() {
                        while probe < bytes.len() && bytes[probe].is_ascii_digit() {
                            probe += 1;
                        }
                        end = probe;
                    }
                }
                let literal = &text[start..end];
                let value: f64 = literal.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    expected: "a decimal number".into(),
                })?;
                if !value.is_finite() {
                    return Err(ExprError::Syntax { offset: start, expected: "a finite number".into() });
                }
                if end < bytes.len() && (bytes[end].is_ascii_alphabetic() || bytes[end] == b'_') {
                    return Err(ExprError::Syntax {
                        offset: end,
                        expected: "an operator (implicit multiplication is not supported)".into(),
                    });
                }
                pos = end;
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = pos;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                pos = end;
                out.push((Tok::Ident(text[start..end].to_string()), start));
                continue;
            }
            _ => {
                return Err(ExprError::Syntax { offset: start, expected: "a number, identifier, operator or parenthesis".into() })
            }
        };
        pos += 1;
        out.push((tok, start));
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            expected: format!("{expected}, found {}", describe(self.peek())),
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Node::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Node::pow(base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::real(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction { name, offset })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::call(func, arg));
                }
                if name == "i" {
                    return Ok(Node::Const(Complex64::new(0.0, 1.0)));
                }
                Ok(Node::Var(name))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            _ => Err(self.error("an expression")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.error("`)`"))
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expression, ExprError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error("an operator or end of input"));
    }
    Ok(Expression::new(root))
}

// ---------------------------------------------------------------- formatter

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(node: &Node) -> u8 {
    match node {
        Node::Const(c) => {
            if c.im != 0.0 {
                PREC_ATOM
            } else if c.re.is_sign_negative() {
                PREC_NEG
            } else {
                PREC_ATOM
            }
        }
        Node::Var(_) | Node::Call(..) => PREC_ATOM,
        Node::Neg(_) => PREC_NEG,
        Node::Binary(op, ..) => match op {
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div => PREC_MUL,
            BinOp::Pow => PREC_POW,
        },
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:?}");
    match s.strip_suffix(".0") {
        Some(stripped) => stripped.to_string(),
        None => s,
    }
}

fn format_const(c: Complex64) -> String {
    if c.im == 0.0 {
        return format_real(c.re);
    }
    let sign = if c.im.is_sign_negative() { "-" } else { "+" };
    format!("({} {} {}*i)", format_real(c.re), sign, format_real(c.im.abs()))
}

fn wrap(node: &Node, parens: bool, rename: &dyn Fn(&str) -> Option<String>) -> String {
    let s = format_node(node, rename);
    if parens {
        format!("({s})")
    } else {
        s
    }
}

fn format_node(node: &Node, rename: &dyn Fn(&str) -> Option<String>) -> String {
    match node {
        Node::Const(c) => format_const(*c),
        Node::Var(name) => rename(name).unwrap_or_else(|| name.clone()),
        Node::Neg(a) => format!("-{}", wrap(a, precedence(a) < PREC_NEG, rename)),
        Node::Call(f, a) => format!("{}({})", f.name(), format_node(a, rename)),
        Node::Binary(op, a, b) => {
            let own = precedence(node);
            match op {
                BinOp::Add | BinOp::Sub => format!(
                    "{} {} {}",
                    wrap(a, precedence(a) < own, rename),
                    op.symbol(),
                    wrap(b, precedence(b) <= own, rename)
                ),
                BinOp::Mul | BinOp::Div => format!(
                    "{}{}{}",
                    wrap(a, precedence(a) < own, rename),
                    op.symbol(),
                    wrap(b, precedence(b) <= own, rename)
                ),
                BinOp::Pow => format!(
                    "{}^{}",
                    wrap(a, precedence(a) < PREC_ATOM, rename),
                    wrap(b, precedence(b) < PREC_NEG, rename)
                ),
            }
        }
    }
}

pub fn format_expression(expr: &Expression) -> String {
    format_node(&expr.root, &|_| None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn precedence_and_associativity() {
        let env = Bindings::new().with("x", 3.0);
        let cases = [
            ("1 + 2*3", 7.0),
            ("2^3^2", 512.0),
            ("-x^2", -9.0),
            ("(-x)^2", 9.0),
            ("2^-1", 0.5),
            ("8/2/2", 2.0),
            ("1 - 2 - 3", -4.0),
            ("--x", 3.0),
        ];
        for (text, want) in cases {
            let got = parse_expression(text).unwrap().evaluate(&env).unwrap();
            assert_eq!(got, c(want, 0.0), "{text}");
        }
    }

    #[test]
    fn free_variables_are_exactly_identifiers() {
        let e = parse_expression("x0 + a*(x0-x1)^2/(x1-x2)").unwrap();
        let vars: Vec<_> = e.free_vars().iter().cloned().collect();
        assert_eq!(vars, ["a", "x0", "x1", "x2"]);
        let zero = parse_expression("0").unwrap();
        assert!(zero.free_vars().is_empty());
        assert_eq!(zero.evaluate(&Bindings::new()).unwrap(), c(0.0, 0.0));
        let e = parse_expression("x1*exp(a - x0 - x1)").unwrap();
        assert_eq!(e.free_vars().len(), 3);
        // `i` is the imaginary unit, not a variable
        assert!(parse_expression("2*i").unwrap().free_vars().is_empty());
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_expression("x0 + ") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_expression("2x"), Err(ExprError::Syntax { offset: 1, .. })));
        assert!(matches!(parse_expression("(1 + 2"), Err(ExprError::Syntax { offset: 6, .. })));
        assert!(matches!(parse_expression("1 + $"), Err(ExprError::Syntax { offset: 4, .. })));
        assert!(matches!(
            parse_expression("foo(x)"),
            Err(ExprError::UnknownFunction { ref name, offset: 0 }) if name == "foo"
        ));
    }

    #[test]
    fn evaluation_examples() {
        let e = parse_expression("x0 - x1").unwrap();
        let env = Bindings::new().with("x0", 5.0).with("x1", 3.0);
        assert_eq!(e.evaluate(&env).unwrap(), c(2.0, 0.0));

        let e = parse_expression("x1*exp(a - x0 - x1)").unwrap();
        let env = Bindings::new().with("a", 4.6).with("x0", 2.3).with("x1", 2.3);
        let v = e.evaluate(&env).unwrap();
        assert!((v - c(2.3, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn conjugate_complex_powers_multiply_to_real() {
        let s3 = 3f64.sqrt();
        let env = Bindings::new()
            .with("t", 2.0)
            .with("c", c(0.5, s3 / 2.0))
            .with("c2", c(0.5, -s3 / 2.0));
        let a = parse_expression("t^c").unwrap().evaluate(&env).unwrap();
        let b = parse_expression("t^c2").unwrap().evaluate(&env).unwrap();
        // oracle: exp((c + conj c) ln 2) = exp(ln 2) = 2
        assert!((a * b - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let env = Bindings::new().with("x", 0.0);
        match parse_expression("1 + 1/x").unwrap().evaluate(&env) {
            Err(ExprError::Domain { subexpr, .. }) => assert_eq!(subexpr, "1/x"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_expression("ln(x)").unwrap().evaluate(&env), Err(ExprError::Domain { .. })));
        assert!(matches!(parse_expression("x^-1").unwrap().evaluate(&env), Err(ExprError::Domain { .. })));
        assert!(matches!(parse_expression("x^(0 + 1*i)").unwrap().evaluate(&env), Err(ExprError::Domain { .. })));
        assert_eq!(parse_expression("x^0.5").unwrap().evaluate(&env).unwrap(), c(0.0, 0.0));
        assert!(matches!(parse_expression("y").unwrap().evaluate(&env), Err(ExprError::Unbound(ref n)) if n == "y"));
    }

    #[test]
    fn formatting_examples() {
        assert_eq!(format_expression(&Expression::constant(c(-1.0, 0.0))), "-1");
        assert_eq!(parse_expression("x0+x1*x2").unwrap().to_string(), "x0 + x1*x2");
        assert_eq!(parse_expression("(x0+x1)*x2").unwrap().to_string(), "(x0 + x1)*x2");
        assert_eq!(parse_expression("a-(b-c)").unwrap().to_string(), "a - (b - c)");
        assert_eq!(parse_expression("(-x)^2").unwrap().to_string(), "(-x)^2");
        assert_eq!(parse_expression("x^-2").unwrap().to_string(), "x^-2");
        assert_eq!(format_expression(&Expression::constant(c(0.5, -2.0))), "(0.5 - 2*i)");
        assert_eq!(format_expression(&Expression::constant(c(1e-7, 0.0))), "1e-7");
    }

    #[test]
    fn parenthesised_sum_format_is_evaluation_equivalent() {
        // oracle: both trees evaluated at 10 fixed pseudo-random bindings
        let original = parse_expression("(x0+x1)*x2").unwrap();
        let reparsed = parse_expression(&original.to_string()).unwrap();
        let mut seed = 0x2545_f491_u64;
        for _ in 0..10 {
            let mut next = || {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (seed >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
            };
            let env = Bindings::new().with("x0", next()).with("x1", next()).with("x2", next());
            let a = original.evaluate(&env).unwrap();
            let b = reparsed.evaluate(&env).unwrap();
            assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn principal_branch_magnitude() {
        for (t, cre, cim) in [(2.0, 0.3, 4.0), (0.1, -1.5, 2.0), (7.0, 2.0, -3.0)] {
            let v = power(c(t, 0.0), c(cre, cim)).unwrap();
            let want = f64::powf(t, cre);
            assert!((v.norm() - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = parse_expression("x0 + x1").unwrap();
        let mut map = HashMap::new();
        map.insert("x0".to_string(), Node::var("x1"));
        map.insert("x1".to_string(), Node::var("x0"));
        assert_eq!(e.substitute(&map).to_string(), "x1 + x0");
    }
}
