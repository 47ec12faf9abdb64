//! Arithmetic expressions over the state variables `x1 … xn`.
//!
//! Grammar (LL(1), `^` right-associative and binding tighter than unary
//! minus, so `-x1^2` is `-(x1^2)`):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | variable | function '(' expr ')' | '(' expr ')'
//! ```
//!
//! Functions: `sin cos tan tanh exp ln sqrt abs`. There is no implicit
//! multiplication. Evaluation never returns NaN or infinity; such results are
//! reported as [`ExprError::Domain`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: expected {}, found {found}", .expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown variable `{name}` at offset {offset} (dimension {dimension})")]
    UnknownVariable {
        name: String,
        offset: usize,
        dimension: usize,
    },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("point has {got} coordinates, expression expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Tanh,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, v: f64) -> Result<f64, ExprError> {
        let out = match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Tanh => v.tanh(),
            Func::Exp => v.exp(),
            Func::Ln => {
                if v <= 0.0 {
                    return Err(domain("ln", format!("log of non-positive value {v}")));
                }
                v.ln()
            }
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(domain("sqrt", format!("square root of negative value {v}")));
                }
                v.sqrt()
            }
            Func::Abs => v.abs(),
        };
        finite(self.name(), out)
    }
}

/// Node of a parsed expression. Variables are 0-based internally.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        match self {
            Node::Const(c) => Ok(*c),
            Node::Var(k) => Ok(x[*k]),
            Node::Neg(a) => Ok(-a.eval(x)?),
            Node::Call(f, a) => f.apply(a.eval(x)?),
            Node::Binary(op, a, b) => {
                let l = a.eval(x)?;
                let r = b.eval(x)?;
                match op {
                    BinOp::Add => finite("+", l + r),
                    BinOp::Sub => finite("-", l - r),
                    BinOp::Mul => finite("*", l * r),
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(domain("/", "division by zero".into()));
                        }
                        finite("/", l / r)
                    }
                    BinOp::Pow => pow(l, r),
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Node::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Node::Neg(_) => 3,
            Node::Binary(BinOp::Pow, ..) => 4,
            Node::Const(_) | Node::Var(_) | Node::Call(..) => 5,
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Var(k) => Some(*k),
            Node::Neg(a) | Node::Call(_, a) => a.max_var(),
            Node::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }
}

fn pow(base: f64, exp: f64) -> Result<f64, ExprError> {
    if base == 0.0 && exp < 0.0 {
        return Err(domain("^", "division by zero (0 to a negative power)".into()));
    }
    let out = if exp == 2.0 {
        base * base
    } else if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    };
    if out.is_nan() {
        return Err(domain("^", format!("fractional power {exp} of negative value {base}")));
    }
    finite("^", out)
}

fn domain(op: &'static str, detail: String) -> ExprError {
    ExprError::Domain { op, detail }
}

fn finite(op: &'static str, v: f64) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain(op, format!("non-finite result {v}")))
    }
}

/// A parsed expression bound to a state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    dimension: usize,
}

impl Expr {
    pub fn parse(text: &str, dimension: usize) -> Result<Self, ExprError> {
        if dimension == 0 {
            return Err(ExprError::ZeroDimension);
        }
        let tokens = lex(text)?;
        let mut parser = Parser { tokens, pos: 0, dimension };
        let root = parser.expr()?;
        parser.expect_end()?;
        Ok(Self { root, dimension })
    }

    pub fn constant(value: f64, dimension: usize) -> Self {
        Self { root: Node::Const(value), dimension }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// `Some(c)` when the expression is a literal constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    /// Highest variable index used (0-based), if any.
    pub fn max_variable(&self) -> Option<usize> {
        self.root.max_var()
    }

    /// Evaluates at `point`, whose length must equal the dimension.
    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        if point.len() != self.dimension {
            return Err(ExprError::DimensionMismatch { expected: self.dimension, got: point.len() });
        }
        self.root.eval(point)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_child(node: &Node, parens: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if parens {
        f.write_str("(")?;
        write_node(node, f)?;
        f.write_str(")")
    } else {
        write_node(node, f)
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => write!(f, "({c})"),
        Node::Const(c) => write!(f, "{c}"),
        Node::Var(k) => write!(f, "x{}", k + 1),
        Node::Neg(a) => {
            f.write_str("-")?;
            write_child(a, a.precedence() < 3, f)
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, f)?;
            f.write_str(")")
        }
        Node::Binary(BinOp::Pow, a, b) => {
            write_child(a, a.precedence() <= 4, f)?;
            f.write_str("^")?;
            write_child(b, b.precedence() < 4, f)
        }
        Node::Binary(op, a, b) => {
            let p = node.precedence();
            write_child(a, a.precedence() < p, f)?;
            f.write_str(match op {
                BinOp::Add => " + ",
                BinOp::Sub => " - ",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => unreachable!(),
            })?;
            write_child(b, b.precedence() <= p, f)
        }
    }
}

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

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
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
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
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
                match f64::from_str(lit) {
                    Ok(v) if v.is_finite() => out.push((Tok::Num(v), start)),
                    _ => {
                        return Err(ExprError::Syntax {
                            offset: start,
                            expected: vec!["number"],
                            found: format!("`{lit}`"),
                        })
                    }
                }
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    expected: vec!["operand", "operator"],
                    found: format!("`{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    dimension: usize,
}

const OPERAND: [&str; 4] = ["number", "variable", "function", "`(`"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&'static str]) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            expected: expected.to_vec(),
            found: self.peek().describe(),
        }
    }

    fn expect_end(&self) -> Result<(), ExprError> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            Err(self.error(&["operator", "end of input"]))
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
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.close_paren()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let offset = self.offset();
                self.bump();
                if *self.peek() == Tok::LParen {
                    let func = Func::from_name(&name)
                        .ok_or(ExprError::UnknownFunction { name: name.clone(), offset })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.close_paren()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if Func::from_name(&name).is_some() {
                    return Err(self.error(&["`(`"]));
                }
                self.variable(name, offset)
            }
            _ => Err(self.error(&OPERAND)),
        }
    }

    fn close_paren(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&["operator", "`)`"]))
        }
    }

    fn variable(&self, name: String, offset: usize) -> Result<Node, ExprError> {
        let index = name
            .strip_prefix('x')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()) && !d.starts_with('0'))
            .and_then(|d| d.parse::<usize>().ok());
        match index {
            Some(k) if k <= self.dimension => Ok(Node::Var(k - 1)),
            _ => Err(ExprError::UnknownVariable { name, offset, dimension: self.dimension }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, n: usize, x: &[f64]) -> f64 {
        Expr::parse(text, n).unwrap().eval(x).unwrap()
    }

    #[test]
    fn product_of_variables() {
        assert_eq!(ev("x1*x2", 3, &[2.0, 3.0, 7.0]), 6.0);
    }

    #[test]
    fn gene_regulation_drift() {
        let v = ev("6*x1^2/(x1^2+10) - x1 + 0.4", 1, &[1.0]);
        assert!((v - (6.0 / 11.0 - 0.6)).abs() < 1e-15);
        assert!((v + 0.054_545_5).abs() < 1e-7);
    }

    #[test]
    fn syntax_error_offset() {
        match Expr::parse("x1 + * 2", 1) {
            Err(ExprError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 5);
                assert!(expected.contains(&"variable"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constants_and_basis_entries() {
        assert_eq!(ev("3.5", 2, &[9.0, 9.0]), 3.5);
        assert_eq!(ev("-10*tanh(10*x1)^2+10", 1, &[0.0]), 10.0);
        assert_eq!(ev("2.5e-1", 1, &[0.0]), 0.25);
        assert_eq!(ev("1E2", 1, &[0.0]), 100.0);
    }

    #[test]
    fn precedence_rules() {
        assert_eq!(ev("-x1^2", 1, &[3.0]), -9.0);
        assert_eq!(ev("2^3^2", 1, &[0.0]), 512.0);
        assert_eq!(ev("x1^-1", 1, &[4.0]), 0.25);
        assert_eq!(ev("1-2-3", 1, &[0.0]), -4.0);
        assert_eq!(ev("8/4/2", 1, &[0.0]), 1.0);
        assert_eq!(ev("2*3+4*5", 1, &[0.0]), 26.0);
        assert_eq!(ev("(-2)^2", 1, &[0.0]), 4.0);
        assert_eq!(ev("--x1", 1, &[5.0]), 5.0);
    }

    #[test]
    fn domain_errors() {
        let e = Expr::parse("1/x1", 1).unwrap();
        assert!(matches!(e.eval(&[0.0]), Err(ExprError::Domain { op: "/", .. })));
        assert!(Expr::parse("sqrt(x1)", 1).unwrap().eval(&[-1.0]).is_err());
        assert!(Expr::parse("ln(x1)", 1).unwrap().eval(&[0.0]).is_err());
        assert!(Expr::parse("x1^0.5", 1).unwrap().eval(&[-4.0]).is_err());
        assert!(Expr::parse("exp(x1)", 1).unwrap().eval(&[1000.0]).is_err());
        assert!(Expr::parse("x1^(-1)", 1).unwrap().eval(&[0.0]).is_err());
    }

    #[test]
    fn name_errors() {
        assert!(matches!(
            Expr::parse("x4 + 1", 3),
            Err(ExprError::UnknownVariable { offset: 0, .. })
        ));
        assert!(matches!(Expr::parse("x0", 3), Err(ExprError::UnknownVariable { .. })));
        assert!(matches!(Expr::parse("y", 3), Err(ExprError::UnknownVariable { .. })));
        assert!(matches!(
            Expr::parse("2 + foo(x1)", 1),
            Err(ExprError::UnknownFunction { offset: 4, .. })
        ));
        assert!(matches!(Expr::parse("sin x1", 1), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn no_implicit_multiplication() {
        assert!(matches!(Expr::parse("2x1", 1), Err(ExprError::Syntax { offset: 1, .. })));
        assert!(matches!(Expr::parse("(x1)(x1)", 1), Err(ExprError::Syntax { offset: 4, .. })));
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["", "(", "x1 +", "1e999", "3 $ 4", "sin()", "1..2", ")"] {
            assert!(matches!(Expr::parse(bad, 1), Err(ExprError::Syntax { .. })), "{bad}");
        }
    }

    #[test]
    fn dimension_checks() {
        assert_eq!(Expr::parse("1", 0), Err(ExprError::ZeroDimension));
        let e = Expr::parse("x1", 2).unwrap();
        assert!(matches!(e.eval(&[1.0]), Err(ExprError::DimensionMismatch { .. })));
    }

    #[test]
    fn canonical_print() {
        let cases = [
            ("-(x1*x2)", "-(x1*x2)"),
            ("x1 - (x2 - x3)", "x1 - (x2 - x3)"),
            ("(x1^x2)^x3", "(x1^x2)^x3"),
            ("x1^x2^x3", "x1^x2^x3"),
            ("(-x1)^2", "(-x1)^2"),
            ("-x1^2", "-x1^2"),
            ("x1^-2", "x1^(-2)"),
            ("exp(-50*(x1-3)^2)", "exp(-50*(x1 - 3)^2)"),
        ];
        for (src, printed) in cases {
            let e = Expr::parse(src, 3).unwrap();
            assert_eq!(e.to_string(), printed);
            assert_eq!(Expr::parse(&e.to_string(), 3).unwrap(), e);
        }
    }
}
