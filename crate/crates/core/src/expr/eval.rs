use thiserror::Error;

use super::{BinOp, Expr, Func, Skeleton};
use crate::data::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("expected {expected} parameters, got {got}")]
    ParamArity { expected: usize, got: usize },
    #[error("expected {expected} data columns, got {got}")]
    ColumnArity { expected: usize, got: usize },
}

/// Sign-safe power. Integer literal exponents follow real arithmetic (so odd
/// powers keep the sign of the base); every other exponent is applied to
/// `|base|`, which keeps the search away from complex values.
pub fn pow_safe(base: f64, exp: f64, literal_exp: bool) -> f64 {
    if literal_exp && exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        base.powi(exp as i32)
    } else {
        base.abs().powf(exp)
    }
}

pub(crate) fn fold_binary(op: BinOp, x: f64, y: f64) -> f64 {
    match op {
        BinOp::Sub => x - y,
        BinOp::Div => x / y,
        BinOp::Pow => pow_safe(x, y, true),
    }
}

/// Tree-walking evaluation of a single node; used for literal folding.
pub(crate) fn eval_node(e: &Expr, theta: &[f64], row: &[f64]) -> f64 {
    match e {
        Expr::Const(c) => *c,
        Expr::Param(i) => theta[*i],
        Expr::Var(v) => row[*v],
        Expr::Neg(a) => -eval_node(a, theta, row),
        Expr::Func(f, a) => f.apply(eval_node(a, theta, row)),
        Expr::Add(v) => v.iter().map(|c| eval_node(c, theta, row)).sum(),
        Expr::Mul(v) => v.iter().map(|c| eval_node(c, theta, row)).product(),
        Expr::Binary(BinOp::Pow, a, b) => {
            let lit = b.literal_value();
            let base = eval_node(a, theta, row);
            match lit {
                Some(e) => pow_safe(base, e, true),
                None => pow_safe(base, eval_node(b, theta, row), false),
            }
        }
        Expr::Binary(op, a, b) => fold_binary(*op, eval_node(a, theta, row), eval_node(b, theta, row)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Instr {
    Const(f64),
    Param(usize),
    Var(usize),
    Neg,
    Add(usize),
    Mul(usize),
    Sub,
    Div,
    /// exponent already on the stack, not a literal
    PowDyn,
    /// exponent is a literal known at compile time
    PowLit(f64),
    Func(Func),
}

/// Postfix program compiled once per skeleton.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Program {
    code: Vec<Instr>,
    depth: usize,
}

impl Program {
    pub(crate) fn compile(root: &Expr) -> Program {
        let mut code = Vec::new();
        emit(root, &mut code);
        let mut depth = 0usize;
        let mut max = 0usize;
        for ins in &code {
            match ins {
                Instr::Const(_) | Instr::Param(_) | Instr::Var(_) => depth += 1,
                Instr::Add(n) | Instr::Mul(n) => depth -= n - 1,
                Instr::Sub | Instr::Div | Instr::PowDyn => depth -= 1,
                Instr::Neg | Instr::PowLit(_) | Instr::Func(_) => {}
            }
            max = max.max(depth);
        }
        Program { code, depth: max }
    }

    #[inline]
    pub(crate) fn run(&self, theta: &[f64], row: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        for ins in &self.code {
            match ins {
                Instr::Const(c) => stack.push(*c),
                Instr::Param(i) => stack.push(theta[*i]),
                Instr::Var(v) => stack.push(row[*v]),
                Instr::Neg => {
                    let a = stack.last_mut().unwrap();
                    *a = -*a;
                }
                Instr::Add(n) => {
                    let at = stack.len() - n;
                    let s = stack[at..].iter().sum();
                    stack.truncate(at);
                    stack.push(s);
                }
                Instr::Mul(n) => {
                    let at = stack.len() - n;
                    let p = stack[at..].iter().product();
                    stack.truncate(at);
                    stack.push(p);
                }
                Instr::Sub => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a -= b;
                }
                Instr::Div => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a /= b;
                }
                Instr::PowDyn => {
                    let b = stack.pop().unwrap();
                    let a = stack.last_mut().unwrap();
                    *a = pow_safe(*a, b, false);
                }
                Instr::PowLit(e) => {
                    let a = stack.last_mut().unwrap();
                    *a = pow_safe(*a, *e, true);
                }
                Instr::Func(f) => {
                    let a = stack.last_mut().unwrap();
                    *a = f.apply(*a);
                }
            }
        }
        stack[0]
    }

    pub(crate) fn stack_depth(&self) -> usize {
        self.depth
    }
}

fn emit(e: &Expr, code: &mut Vec<Instr>) {
    match e {
        Expr::Const(c) => code.push(Instr::Const(*c)),
        Expr::Param(i) => code.push(Instr::Param(*i)),
        Expr::Var(v) => code.push(Instr::Var(*v)),
        Expr::Neg(a) => {
            emit(a, code);
            code.push(Instr::Neg);
        }
        Expr::Func(f, a) => {
            emit(a, code);
            code.push(Instr::Func(*f));
        }
        Expr::Add(v) => {
            v.iter().for_each(|c| emit(c, code));
            code.push(Instr::Add(v.len()));
        }
        Expr::Mul(v) => {
            v.iter().for_each(|c| emit(c, code));
            code.push(Instr::Mul(v.len()));
        }
        Expr::Binary(BinOp::Pow, a, b) => {
            emit(a, code);
            match b.literal_value() {
                Some(lit) => code.push(Instr::PowLit(lit)),
                None => {
                    emit(b, code);
                    code.push(Instr::PowDyn);
                }
            }
        }
        Expr::Binary(op, a, b) => {
            emit(a, code);
            emit(b, code);
            code.push(match op {
                BinOp::Sub => Instr::Sub,
                BinOp::Div => Instr::Div,
                BinOp::Pow => unreachable!(),
            });
        }
    }
}

impl Skeleton {
    fn check_arity(&self, theta: &[f64], data: &Matrix) -> Result<(), EvalError> {
        if theta.len() != self.param_count {
            return Err(EvalError::ParamArity {
                expected: self.param_count,
                got: theta.len(),
            });
        }
        if data.cols() != self.variable_names.len() {
            return Err(EvalError::ColumnArity {
                expected: self.variable_names.len(),
                got: data.cols(),
            });
        }
        Ok(())
    }

    /// Evaluates every row. Domain violations, division by zero and overflow
    /// show up as non-finite entries in the output, never as errors.
    pub fn evaluate(&self, theta: &[f64], data: &Matrix) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::with_capacity(data.rows());
        self.evaluate_into(theta, data, &mut out)?;
        Ok(out)
    }

    pub fn evaluate_into(
        &self,
        theta: &[f64],
        data: &Matrix,
        out: &mut Vec<f64>,
    ) -> Result<(), EvalError> {
        self.check_arity(theta, data)?;
        out.clear();
        let mut stack = Vec::with_capacity(self.program.stack_depth());
        out.extend(data.iter_rows().map(|row| self.program.run(theta, row, &mut stack)));
        Ok(())
    }

    /// Single-row evaluation without arity checks beyond slice indexing.
    pub fn eval_row(&self, theta: &[f64], row: &[f64]) -> f64 {
        let mut stack = Vec::with_capacity(self.program.stack_depth());
        self.program.run(theta, row, &mut stack)
    }
}
