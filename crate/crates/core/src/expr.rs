//! A small expression language for nonnegative functions of `x` (and `y`).
//!
//! Grammar (see `docs/expr-grammar.md`):
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := "-" unary | power
//! power := atom ("^" unary)?
//! atom  := number | "x" | "y" | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus and is right associative, so `-2^2`
//! is `-4` and `2^3^2` is `512`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
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
pub enum Func1 {
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func2 {
    /// `le(a, b)` is 1 when `a <= b`, else 0.
    Le,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call1(Func1, Box<Expr>),
    Call2(Func2, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected one of [{}], found {found}", expected.join(", "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        got: usize,
    },
    #[error("numeric literal `{text}` at byte {offset} is not a finite number")]
    BadNumber { text: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("expression references `y` but no value was bound")]
    MissingVariable,
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. }
            | ParseError::BadNumber { offset, .. } => *offset,
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
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        match c {
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
                let value: f64 = lit.parse().map_err(|_| ParseError::BadNumber {
                    text: lit.to_string(),
                    offset: start,
                })?;
                if !value.is_finite() {
                    return Err(ParseError::BadNumber {
                        text: lit.to_string(),
                        offset: start,
                    });
                }
                out.push((Tok::Num(value), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((Tok::Op(c as char), start));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, start));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, start));
                i += 1;
            }
            b',' => {
                out.push((Tok::Comma, start));
                i += 1;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    expected: vec!["number".into(), "identifier".into(), "operator".into()],
                    found: format!("character `{ch}`"),
                });
            }
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

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

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Tok::Op('-')) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Tok::Op('^')) {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if !matches!(self.peek(), Tok::RParen) {
                    return self.fail(&["`)`", "operator"]);
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                let (_, offset) = self.bump();
                match name.as_str() {
                    "x" => return Ok(Expr::Var(Var::X)),
                    "y" => return Ok(Expr::Var(Var::Y)),
                    _ => {}
                }
                let arity = match name.as_str() {
                    "exp" | "log" | "sqrt" | "abs" => 1,
                    "le" | "min" | "max" => 2,
                    _ => return Err(ParseError::UnknownIdentifier { name, offset }),
                };
                if !matches!(self.peek(), Tok::LParen) {
                    return self.fail(&["`(`"]);
                }
                self.bump();
                let mut args = vec![self.expr()?];
                while matches!(self.peek(), Tok::Comma) {
                    self.bump();
                    args.push(self.expr()?);
                }
                if !matches!(self.peek(), Tok::RParen) {
                    return self.fail(&["`,`", "`)`", "operator"]);
                }
                self.bump();
                if args.len() != arity {
                    return Err(ParseError::Arity {
                        name,
                        offset,
                        expected: arity,
                        got: args.len(),
                    });
                }
                let mut it = args.into_iter().map(Box::new);
                let a = it.next().unwrap();
                Ok(match name.as_str() {
                    "exp" => Expr::Call1(Func1::Exp, a),
                    "log" => Expr::Call1(Func1::Log, a),
                    "sqrt" => Expr::Call1(Func1::Sqrt, a),
                    "abs" => Expr::Call1(Func1::Abs, a),
                    "le" => Expr::Call2(Func2::Le, a, it.next().unwrap()),
                    "min" => Expr::Call2(Func2::Min, a, it.next().unwrap()),
                    _ => Expr::Call2(Func2::Max, a, it.next().unwrap()),
                })
            }
            _ => self.fail(&["number", "`x`", "`y`", "function call", "`(`", "`-`"]),
        }
    }
}

/// Parses an expression string.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::End) {
        return p.fail(&["operator", "end of input"]);
    }
    Ok(e)
}

fn domain(op: &'static str, detail: impl Into<String>) -> EvalError {
    EvalError::Domain {
        op,
        detail: detail.into(),
    }
}

fn finite(op: &'static str, v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain(op, format!("result {v} is not finite")))
    }
}

impl Expr {
    /// Evaluates at `x` and optional `y`.
    pub fn eval(&self, x: f64, y: Option<f64>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(Var::X) => Ok(x),
            Expr::Var(Var::Y) => y.ok_or(EvalError::MissingVariable),
            Expr::Neg(a) => Ok(-a.eval(x, y)?),
            Expr::Bin(op, a, b) => {
                let a = a.eval(x, y)?;
                let b = b.eval(x, y)?;
                match op {
                    BinOp::Add => finite("+", a + b),
                    BinOp::Sub => finite("-", a - b),
                    BinOp::Mul => finite("*", a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(domain("/", format!("division of {a} by zero")))
                        } else {
                            finite("/", a / b)
                        }
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return Err(domain(
                                "^",
                                format!("negative base {a} with non-integer exponent {b}"),
                            ));
                        }
                        if a == 0.0 && b < 0.0 {
                            return Err(domain("^", "zero raised to a negative power"));
                        }
                        finite("^", a.powf(b))
                    }
                }
            }
            Expr::Call1(f, a) => {
                let a = a.eval(x, y)?;
                match f {
                    Func1::Exp => finite("exp", a.exp()),
                    Func1::Log => {
                        if a <= 0.0 {
                            Err(domain("log", format!("argument {a} is not positive")))
                        } else {
                            Ok(a.ln())
                        }
                    }
                    Func1::Sqrt => {
                        if a < 0.0 {
                            Err(domain("sqrt", format!("argument {a} is negative")))
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                    Func1::Abs => Ok(a.abs()),
                }
            }
            Expr::Call2(f, a, b) => {
                let a = a.eval(x, y)?;
                let b = b.eval(x, y)?;
                Ok(match f {
                    Func2::Le => {
                        if a <= b {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Func2::Min => a.min(b),
                    Func2::Max => a.max(b),
                })
            }
        }
    }

    /// True when the expression mentions `y`.
    pub fn uses_y(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(Var::X) => false,
            Expr::Var(Var::Y) => true,
            Expr::Neg(a) | Expr::Call1(_, a) => a.uses_y(),
            Expr::Bin(_, a, b) | Expr::Call2(_, a, b) => a.uses_y() || b.uses_y(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Y) => write!(f, "y"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call1(func, a) => {
                let name = match func {
                    Func1::Exp => "exp",
                    Func1::Log => "log",
                    Func1::Sqrt => "sqrt",
                    Func1::Abs => "abs",
                };
                write!(f, "{name}({a})")
            }
            Expr::Call2(func, a, b) => {
                let name = match func {
                    Func2::Le => "le",
                    Func2::Min => "min",
                    Func2::Max => "max",
                };
                write!(f, "{name}({a}, {b})")
            }
        }
    }
}
