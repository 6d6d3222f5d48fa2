//! A small scalar expression language for Hamiltonians, forcings and jump
//! maps supplied as text.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          // right-associative
//! atom    := number | ident | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | tan | exp | log | sqrt
//! ```
//!
//! `pi` is a reserved constant. Any other identifier is a variable that must
//! be bound at evaluation time. Derivatives are computed pointwise with
//! forward-mode dual numbers.

mod dual;
mod parse;
mod program;

use std::collections::HashMap;
use std::fmt;

pub use dual::{Dual, Scalar};
pub use parse::{parse, parse_vector, ParseError};
pub use program::Program;

/// Built-in unary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }

    /// Whether `x` lies outside the real domain of the function.
    fn out_of_domain(self, x: f64) -> bool {
        match self {
            Func::Log => x <= 0.0,
            Func::Sqrt => x < 0.0,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Abstract syntax tree of a parsed expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

const NEG_PRECEDENCE: u8 = 3;
const ATOM_PRECEDENCE: u8 = 5;

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => NEG_PRECEDENCE,
            _ => ATOM_PRECEDENCE,
        }
    }

    /// Identifiers referenced by the tree, sorted and deduplicated.
    pub fn identifiers(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Var(name) => out.push(name.clone()),
                Expr::Neg(a) | Expr::Call(_, a) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Num(_) | Expr::Pi => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }

    /// Evaluates the tree with plain doubles.
    pub fn eval(&self, bindings: &Bindings) -> Result<f64, EvalError> {
        self.eval_generic(&|name| bindings.get(name))
    }

    /// Exact derivative with respect to `var` at the point given by `bindings`.
    pub fn partial(&self, var: &str, bindings: &Bindings) -> Result<f64, EvalError> {
        let d = self.eval_generic(&|name| {
            bindings.get(name).map(|v| {
                if name == var {
                    Dual::variable(v)
                } else {
                    Dual::constant(v)
                }
            })
        })?;
        Ok(d.eps)
    }

    /// Tree-walking evaluation over any scalar type.
    pub fn eval_generic<S: Scalar>(&self, lookup: &dyn Fn(&str) -> Option<S>) -> Result<S, EvalError> {
        match self {
            Expr::Num(v) => Ok(S::constant(*v)),
            Expr::Pi => Ok(S::constant(std::f64::consts::PI)),
            Expr::Var(name) => lookup(name).ok_or_else(|| EvalError::Unbound(name.clone())),
            Expr::Neg(a) => Ok(-a.eval_generic(lookup)?),
            Expr::Binary(op, a, b) => {
                let x = a.eval_generic(lookup)?;
                let y = b.eval_generic(lookup)?;
                binary(*op, x, y).ok_or_else(|| EvalError::Domain {
                    operation: op.symbol().to_string(),
                    argument: y.value(),
                    subexpr: self.to_string(),
                })
            }
            Expr::Call(f, a) => {
                let x = a.eval_generic(lookup)?;
                if f.out_of_domain(x.value()) {
                    return Err(EvalError::Domain {
                        operation: f.name().to_string(),
                        argument: x.value(),
                        subexpr: self.to_string(),
                    });
                }
                Ok(f.apply(x))
            }
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Applies a binary operator; `None` signals a domain violation.
fn binary<S: Scalar>(op: BinOp, x: S, y: S) -> Option<S> {
    match op {
        BinOp::Add => Some(x + y),
        BinOp::Sub => Some(x - y),
        BinOp::Mul => Some(x * y),
        BinOp::Div => (y.value() != 0.0).then(|| x / y),
        BinOp::Pow => {
            let r = x.pow(y);
            r.value().is_finite().then_some(r)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.fract() == 0.0 && v.abs() < 1e15 => write!(f, "{}", *v as i64),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.fmt_child(f, a.precedence() < NEG_PRECEDENCE)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(BinOp::Pow, a, b) => {
                a.fmt_child(f, a.precedence() <= BinOp::Pow.precedence())?;
                write!(f, "^")?;
                b.fmt_child(f, b.precedence() < NEG_PRECEDENCE)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                a.fmt_child(f, a.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_child(f, b.precedence() <= p)
            }
        }
    }
}

/// Identifier values used during evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bindings(HashMap<String, f64>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }
}

impl<'a> FromIterator<(&'a str, f64)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (&'a str, f64)>>(iter: I) -> Self {
        Bindings(iter.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    Unbound(String),
    #[error("domain error in `{operation}` at argument {argument} (subexpression `{subexpr}`)")]
    Domain {
        operation: String,
        argument: f64,
        subexpr: String,
    },
}
