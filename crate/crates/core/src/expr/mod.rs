//! Scalar expressions over `d` real variables.
//!
//! Expressions are parsed from text (see [`parse`]) into an [`Ast`] and
//! evaluated either plainly ([`Ast::eval`]) or together with their exact
//! gradient and Hessian ([`Ast::eval_jet`]) by second-order forward-mode
//! differentiation.
//!
//! Syntax summary:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/' | <juxtaposition>) unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          right associative
//! primary := number | variable | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log | sqrt
//! ```
//!
//! Variables are `x`, `y`, `z` (when the arity is at most three) or
//! `x1` … `xd`. Exponents must be constant; they are folded at parse time.

mod jet;
mod parse;

use std::fmt;

use thiserror::Error;

pub use jet::{Jet2, MAX_JET_VARS};
pub use parse::parse;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("variable `{name}` is out of range for arity {arity}")]
    ArityMismatch { name: String, arity: usize },

    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based variable index.
    Var(usize),
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    /// Base raised to a constant exponent.
    Pow(Box<Node>, f64),
}

/// Parsed expression together with the number of variables it ranges over.
#[derive(Debug, Clone, PartialEq)]
pub struct Ast {
    root: Node,
    arity: usize,
}

impl Ast {
    pub fn new(root: Node, arity: usize) -> Result<Self, ExprError> {
        let max = max_var(&root);
        if let Some(idx) = max {
            if idx >= arity {
                return Err(ExprError::ArityMismatch {
                    name: format!("x{}", idx + 1),
                    arity,
                });
            }
        }
        Ok(Self { root, arity })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Plain recursive evaluation.
    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        assert_eq!(point.len(), self.arity, "point has wrong dimension");
        eval_node(&self.root, point)
    }

    /// Value, gradient and Hessian at `point`, exact up to roundoff.
    pub fn eval_jet(&self, point: &[f64]) -> Result<Jet2, ExprError> {
        assert_eq!(point.len(), self.arity, "point has wrong dimension");
        if self.arity > MAX_JET_VARS {
            return Err(ExprError::ArityMismatch {
                name: format!("x{}", self.arity),
                arity: MAX_JET_VARS,
            });
        }
        jet::eval_jet_node(&self.root, point)
    }
}

fn max_var(node: &Node) -> Option<usize> {
    match node {
        Node::Const(_) => None,
        Node::Var(i) => Some(*i),
        Node::Neg(a) | Node::Call(_, a) | Node::Pow(a, _) => max_var(a),
        Node::Binary(_, a, b) => match (max_var(a), max_var(b)) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, None) => x,
            (None, y) => y,
        },
    }
}

pub(crate) fn domain_error(node: &Node, reason: &str) -> ExprError {
    ExprError::Domain {
        subexpr: NodeDisplay(node).to_string(),
        reason: reason.to_string(),
    }
}

/// `base^exponent` with the integer fast path shared by both evaluators.
#[inline]
pub(crate) fn pow_value(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

pub(crate) fn check_pow_domain(node: &Node, base: f64, exponent: f64) -> Result<(), ExprError> {
    let integral = exponent.fract() == 0.0;
    if !integral && base < 0.0 {
        return Err(domain_error(node, "non-integer power of a negative number"));
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(domain_error(node, "division by zero"));
    }
    Ok(())
}

pub(crate) fn apply_func(node: &Node, f: Func, x: f64) -> Result<f64, ExprError> {
    Ok(match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Exp => x.exp(),
        Func::Log => {
            if x <= 0.0 {
                return Err(domain_error(node, "log of a non-positive number"));
            }
            x.ln()
        }
        Func::Sqrt => {
            if x < 0.0 {
                return Err(domain_error(node, "sqrt of a negative number"));
            }
            x.sqrt()
        }
    })
}

fn eval_node(node: &Node, p: &[f64]) -> Result<f64, ExprError> {
    Ok(match node {
        Node::Const(c) => *c,
        Node::Var(i) => p[*i],
        Node::Neg(a) => -eval_node(a, p)?,
        Node::Call(f, a) => apply_func(node, *f, eval_node(a, p)?)?,
        Node::Binary(op, a, b) => {
            let x = eval_node(a, p)?;
            let y = eval_node(b, p)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(domain_error(node, "division by zero"));
                    }
                    x / y
                }
            }
        }
        Node::Pow(a, e) => {
            let x = eval_node(a, p)?;
            check_pow_domain(node, x, *e)?;
            pow_value(x, *e)
        }
    })
}

struct NodeDisplay<'a>(&'a Node);

impl fmt::Display for NodeDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Node::Const(c) => write!(f, "({c:?})"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => write!(f, "(-{})", NodeDisplay(a)),
            Node::Call(func, a) => write!(f, "{}({})", func.name(), NodeDisplay(a)),
            Node::Binary(op, a, b) => {
                write!(f, "({} {} {})", NodeDisplay(a), op.symbol(), NodeDisplay(b))
            }
            Node::Pow(a, e) => write!(f, "({}^({e:?}))", NodeDisplay(a)),
        }
    }
}

/// Fully parenthesized form using `x1..xd` names; re-parses to the same tree.
impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        NodeDisplay(&self.root).fmt(f)
    }
}
