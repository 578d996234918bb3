//! Equation skeletons: grammar, parsing, canonical form, evaluation and
//! parameter-role analysis.
//!
//! The exchange format is a single expression over the binary operators
//! `+ - * / ^`, unary minus, the functions `sin cos tan exp log sqrt tanh abs`,
//! named input variables, decimal literals and free parameters written
//! `params[k]`.

mod canon;
mod eval;
mod parse;
pub mod random;
mod render;
mod roles;
mod tokens;

use std::fmt;

use thiserror::Error;

pub use canon::{canonicalize, canonicalize_with_map, normalize};
pub(crate) use render::render;
pub use eval::{pow_safe, EvalError};
pub use parse::{parse, parse_fragment, parse_with_vars};
pub use roles::{classify_param_roles, ParamRole, ParamRoles};
pub use tokens::{tokenize, TokenBag, PARAM_TOKEN};

/// Functions admitted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Tanh,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Strict real-valued application; domain violations yield NaN or ±inf.
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => {
                if v > 0.0 {
                    v.ln()
                } else {
                    f64::NAN
                }
            }
            Func::Sqrt => {
                if v >= 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            }
            Func::Tanh => v.tanh(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Sub,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Sub => "-",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Expression node.
///
/// Sums and products are n-ary (at least two operands) so that commutative
/// chains have a single canonical ordering; subtraction, division and
/// power stay binary.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(usize),
    /// Index into the owning skeleton's `variable_names`.
    Var(usize),
    Neg(Box<Expr>),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
}

impl Expr {
    /// Builds a sum, splicing nested sums into one operand list.
    pub fn add(a: Expr, b: Expr) -> Expr {
        let mut terms = Vec::new();
        for e in [a, b] {
            match e {
                Expr::Add(inner) => terms.extend(inner),
                other => terms.push(other),
            }
        }
        Expr::Add(terms)
    }

    /// Builds a product, splicing nested products into one operand list.
    pub fn mul(a: Expr, b: Expr) -> Expr {
        let mut factors = Vec::new();
        for e in [a, b] {
            match e {
                Expr::Mul(inner) => factors.extend(inner),
                other => factors.push(other),
            }
        }
        Expr::Mul(factors)
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinOp::Div, Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinOp::Pow, Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }

    pub fn func(f: Func, a: Expr) -> Expr {
        Expr::Func(f, Box::new(a))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::Var(_) => Vec::new(),
            Expr::Neg(a) | Expr::Func(_, a) => vec![a],
            Expr::Add(v) | Expr::Mul(v) => v.iter().collect(),
            Expr::Binary(_, a, b) => vec![a, b],
        }
    }

    /// Preorder visit.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Func(_, a) => a.visit(f),
            Expr::Add(v) | Expr::Mul(v) => v.iter().for_each(|c| c.visit(f)),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    pub fn map_params(&self, f: &impl Fn(usize) -> usize) -> Expr {
        match self {
            Expr::Param(i) => Expr::Param(f(*i)),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::neg(a.map_params(f)),
            Expr::Func(g, a) => Expr::func(*g, a.map_params(f)),
            Expr::Add(v) => Expr::Add(v.iter().map(|c| c.map_params(f)).collect()),
            Expr::Mul(v) => Expr::Mul(v.iter().map(|c| c.map_params(f)).collect()),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.map_params(f)), Box::new(b.map_params(f)))
            }
        }
    }

    pub fn depends_on_params(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Param(_)));
        found
    }

    /// Value of a subtree that contains no parameters or variables.
    pub fn literal_value(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Param(_) | Expr::Var(_) => None,
            _ => {
                let mut free = false;
                self.visit(&mut |e| free |= matches!(e, Expr::Param(_) | Expr::Var(_)));
                if free {
                    None
                } else {
                    Some(eval::eval_node(self, &[], &[]))
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("parameter indices must be contiguous from 0: missing params[{missing}] (max index {max})")]
    ParamGap { missing: usize, max: usize },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkeletonError {
    #[error("parameter indices must be contiguous from 0: missing params[{0}]")]
    ParamGap(usize),
    #[error("variable index {0} out of range")]
    UnknownVariable(usize),
    #[error("non-finite literal")]
    NonFiniteLiteral,
}

/// A parsed equation with named free parameters. The unit of search.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    root: Expr,
    param_count: usize,
    variable_names: Vec<String>,
    program: eval::Program,
}

impl Skeleton {
    /// Validates the invariants: contiguous parameter indices, in-range
    /// variable references and finite literals.
    pub fn new(root: Expr, variable_names: Vec<String>) -> Result<Skeleton, SkeletonError> {
        let mut max_param: Option<usize> = None;
        let mut seen = Vec::new();
        let mut bad_var = None;
        let mut bad_lit = false;
        root.visit(&mut |e| match e {
            Expr::Param(i) => {
                max_param = Some(max_param.map_or(*i, |m: usize| m.max(*i)));
                if seen.len() <= *i {
                    seen.resize(*i + 1, false);
                }
                seen[*i] = true;
            }
            Expr::Var(v) if *v >= variable_names.len() => bad_var = Some(*v),
            Expr::Const(c) if !c.is_finite() => bad_lit = true,
            _ => {}
        });
        if let Some(v) = bad_var {
            return Err(SkeletonError::UnknownVariable(v));
        }
        if bad_lit {
            return Err(SkeletonError::NonFiniteLiteral);
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(SkeletonError::ParamGap(missing));
        }
        let param_count = max_param.map_or(0, |m| m + 1);
        let program = eval::Program::compile(&root);
        Ok(Skeleton {
            root,
            param_count,
            variable_names,
            program,
        })
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    /// Variables actually referenced by the expression, in column order.
    pub fn used_variables(&self) -> Vec<usize> {
        let mut used = vec![false; self.variable_names.len()];
        self.root.visit(&mut |e| {
            if let Expr::Var(v) = e {
                used[*v] = true;
            }
        });
        used.iter()
            .enumerate()
            .filter_map(|(i, u)| u.then_some(i))
            .collect()
    }

    /// Re-targets the skeleton onto a different (super)set of variable names.
    pub fn with_variables(&self, names: &[String]) -> Option<Skeleton> {
        let mut map = Vec::with_capacity(self.variable_names.len());
        for n in &self.variable_names {
            map.push(names.iter().position(|m| m == n));
        }
        let root = remap_vars(&self.root, &map)?;
        let program = eval::Program::compile(&root);
        Some(Skeleton {
            root,
            param_count: self.param_count,
            variable_names: names.to_vec(),
            program,
        })
    }
}

fn remap_vars(e: &Expr, map: &[Option<usize>]) -> Option<Expr> {
    Some(match e {
        Expr::Var(v) => Expr::Var(map[*v]?),
        Expr::Const(_) | Expr::Param(_) => e.clone(),
        Expr::Neg(a) => Expr::neg(remap_vars(a, map)?),
        Expr::Func(f, a) => Expr::func(*f, remap_vars(a, map)?),
        Expr::Add(v) => Expr::Add(v.iter().map(|c| remap_vars(c, map)).collect::<Option<_>>()?),
        Expr::Mul(v) => Expr::Mul(v.iter().map(|c| remap_vars(c, map)).collect::<Option<_>>()?),
        Expr::Binary(op, a, b) => Expr::Binary(
            *op,
            Box::new(remap_vars(a, map)?),
            Box::new(remap_vars(b, map)?),
        ),
    })
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render::render(&self.root, &self.variable_names))
    }
}
