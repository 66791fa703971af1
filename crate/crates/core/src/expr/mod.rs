//! Scalar expression language.
//!
//! Expressions are parsed from plain strings such as `"x1^2 + x2^2 - 1"`,
//! evaluated against name bindings, and differentiated symbolically so that
//! user-supplied costs, fields and constraints come with exact gradients,
//! Hessians and time partials.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)?
//! exponent := '-' exponent | power
//! atom     := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^(3^2)`.

mod diff;
mod parse;
mod program;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use diff::diff;
pub use parse::{parse, ParseError};
pub use program::Program;

/// Unary operators and the supported elementary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
}

impl UnaryOp {
    /// Function-call spelling, `None` for negation.
    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Log => Some("log"),
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Tanh => Some("tanh"),
        }
    }

    pub fn from_function_name(name: &str) -> Option<Self> {
        Some(match name {
            "sqrt" => UnaryOp::Sqrt,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tanh" => UnaryOp::Tanh,
            _ => return None,
        })
    }

    pub(crate) fn apply(self, a: f64) -> Result<f64, DomainError> {
        match self {
            UnaryOp::Neg => Ok(-a),
            UnaryOp::Sqrt if a < 0.0 => Err(DomainError::SqrtNegative(a)),
            UnaryOp::Sqrt => Ok(a.sqrt()),
            UnaryOp::Exp => Ok(a.exp()),
            UnaryOp::Log if a <= 0.0 => Err(DomainError::LogNonPositive(a)),
            UnaryOp::Log => Ok(a.ln()),
            UnaryOp::Sin => Ok(a.sin()),
            UnaryOp::Cos => Ok(a.cos()),
            UnaryOp::Tanh => Ok(a.tanh()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

    pub(crate) fn apply(self, a: f64, b: f64) -> Result<f64, DomainError> {
        match self {
            BinaryOp::Add => Ok(a + b),
            BinaryOp::Sub => Ok(a - b),
            BinaryOp::Mul => Ok(a * b),
            BinaryOp::Div if b == 0.0 => Err(DomainError::DivisionByZero),
            BinaryOp::Div => Ok(a / b),
            BinaryOp::Pow => pow(a, b),
        }
    }
}

fn pow(base: f64, exponent: f64) -> Result<f64, DomainError> {
    if base == 0.0 && exponent < 0.0 {
        return Err(DomainError::ZeroToNegativePower(exponent));
    }
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        return Ok(base.powi(exponent as i32));
    }
    if base < 0.0 {
        return Err(DomainError::NegativeBaseFractionalPower { base, exponent });
    }
    Ok(base.powf(exponent))
}

/// Evaluation failure: an elementary operation left its real domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("log of non-positive value {0}")]
    LogNonPositive(f64),
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("zero raised to negative power {0}")]
    ZeroToNegativePower(f64),
    #[error("negative base {base} raised to non-integer power {exponent}")]
    NegativeBaseFractionalPower { base: f64, exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("variable `{0}` is not bound")]
    Unbound(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Immutable expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// True when the tree is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn eval(&self, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
        self.eval_with(&|name| bindings.get(name).copied())
    }

    /// Evaluates with an arbitrary name lookup.
    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => lookup(name).ok_or_else(|| ExprError::Unbound(name.clone())),
            Expr::Unary(op, a) => Ok(op.apply(a.eval_with(lookup)?)?),
            Expr::Binary(op, a, b) => {
                let a = a.eval_with(lookup)?;
                let b = b.eval_with(lookup)?;
                Ok(op.apply(a, b)?)
            }
        }
    }

    /// Replaces variables by name. Unmapped variables are kept.
    pub fn rename(&self, map: &dyn Fn(&str) -> Option<String>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(name) => Expr::Var(map(name).unwrap_or_else(|| name.clone())),
            Expr::Unary(op, a) => Expr::unary(*op, a.rename(map)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.rename(map), b.rename(map)),
        }
    }

    /// Substitutes constants for the named variables and folds the result.
    pub fn substitute(&self, values: &dyn Fn(&str) -> Option<f64>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(name) => values(name).map_or_else(|| Expr::Var(name.clone()), Expr::Const),
            Expr::Unary(op, a) => simplify_unary(*op, a.substitute(values)),
            Expr::Binary(op, a, b) => simplify_binary(*op, a.substitute(values), b.substitute(values)),
        }
    }

    /// Node count.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Binary(BinaryOp::Pow, ..) => 4,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{:?}` on f64 is the shortest representation that parses back exactly.
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{:?})", -c),
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                a.write_child(f, 3)
            }
            Expr::Unary(op, a) => write!(f, "{}({a})", op.function_name().unwrap_or_default()),
            Expr::Binary(op, a, b) => {
                let (lp, rp) = match op {
                    BinaryOp::Add | BinaryOp::Sub => (1, 2),
                    BinaryOp::Mul | BinaryOp::Div => (2, 3),
                    BinaryOp::Pow => (5, 3),
                };
                a.write_child(f, lp)?;
                match op {
                    BinaryOp::Add | BinaryOp::Sub => write!(f, " {} ", op.symbol())?,
                    _ => write!(f, "{}", op.symbol())?,
                }
                b.write_child(f, rp)
            }
        }
    }
}

/// Builds a unary node, folding constants.
pub fn simplify_unary(op: UnaryOp, a: Expr) -> Expr {
    if let Expr::Const(c) = a {
        if let Ok(v) = op.apply(c) {
            return Expr::Const(v);
        }
    }
    Expr::unary(op, a)
}

/// Builds a binary node, folding constants and eliminating `x+0`, `x-0`,
/// `x*1`, `x*0`, `x/1`, `x^1` and `x^0`.
pub fn simplify_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        if let Ok(v) = op.apply(x, y) {
            return Expr::Const(v);
        }
    }
    let (ca, cb) = (a.as_const(), b.as_const());
    match op {
        BinaryOp::Add if ca == Some(0.0) => b,
        BinaryOp::Add if cb == Some(0.0) => a,
        BinaryOp::Sub if cb == Some(0.0) => a,
        BinaryOp::Sub if ca == Some(0.0) => simplify_unary(UnaryOp::Neg, b),
        BinaryOp::Mul if ca == Some(0.0) || cb == Some(0.0) => Expr::Const(0.0),
        BinaryOp::Mul if ca == Some(1.0) => b,
        BinaryOp::Mul if cb == Some(1.0) => a,
        BinaryOp::Div if cb == Some(1.0) => a,
        BinaryOp::Div if ca == Some(0.0) => Expr::Const(0.0),
        BinaryOp::Pow if cb == Some(1.0) => a,
        BinaryOp::Pow if cb == Some(0.0) => Expr::Const(1.0),
        _ => Expr::binary(op, a, b),
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        simplify_binary(BinaryOp::Add, self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        simplify_binary(BinaryOp::Sub, self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        simplify_binary(BinaryOp::Mul, self, rhs)
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        simplify_binary(BinaryOp::Div, self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        simplify_unary(UnaryOp::Neg, self)
    }
}
