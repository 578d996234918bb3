//! Separable parameter fitting.
//!
//! Linear coefficients are eliminated by a ridge solve inside a
//! derivative-free search over the nonlinear ones. A quasi-Newton fit over
//! all parameters runs alongside, and the lower-NMSE result is kept.

mod bfgs;
mod budget;
mod powell;
mod probe;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use probe::{build_probe_system, reduced_objective, solve_linear, ProbeSystem};

use self::budget::Counted;
use self::probe::reduced_objective_with_var;
use crate::data::{variance, Matrix};
use crate::expr::{classify_param_roles, EvalError, ParamRoles, Skeleton};
use crate::scoring::nmse_unchecked;

pub const DEFAULT_RIDGE: f64 = 1e-10;
pub const DEFAULT_STARTS: usize = 4;
const FTOL: f64 = 1e-12;
const POWELL_EVALS_PER_DIM: usize = 200;
/// NMSE differences below this are treated as ties between the two paths.
pub const TIE_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("target has zero variance")]
    DegenerateTarget,
    #[error("probe evaluation produced a non-finite value")]
    InvalidProbe,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("{what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("no start produced a finite objective")]
    Failed,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitPath {
    Mixed,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub nmse: f64,
    pub path: FitPath,
    pub evals: usize,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub n_starts: usize,
    /// Leading policy starts to skip; 1 starts from all ones.
    pub skip_starts: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Cap on objective evaluations across both paths.
    pub max_evals: Option<usize>,
    pub deadline: Option<Instant>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_starts: DEFAULT_STARTS,
            skip_starts: 0,
            lambda: DEFAULT_RIDGE,
            seed: 0,
            max_evals: None,
            deadline: None,
        }
    }
}

impl FitOptions {
    fn starts(&self, dim: usize) -> impl Iterator<Item = Vec<f64>> {
        start_points(dim, self.n_starts.max(1) + self.skip_starts, self.seed)
            .into_iter()
            .skip(self.skip_starts)
    }

    pub fn with_seed(seed: u64) -> Self {
        FitOptions {
            seed,
            ..FitOptions::default()
        }
    }
}

/// Zeros, ones, then uniform draws in [-5, 5] from the seeded stream.
pub fn start_points(dim: usize, n_starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_starts.max(1))
        .map(|k| match k {
            0 => vec![0.0; dim],
            1 => vec![1.0; dim],
            _ => (0..dim).map(|_| rng.random_range(-5.0..=5.0)).collect(),
        })
        .collect()
}

struct Prepared {
    var: f64,
}

fn prepare(s: &Skeleton, data: &Matrix, y: &[f64]) -> Result<Prepared, FitError> {
    if data.rows() != y.len() {
        return Err(FitError::LengthMismatch {
            what: "target rows",
            expected: data.rows(),
            got: y.len(),
        });
    }
    let needed = s.variable_names().len();
    if data.cols() != needed {
        return Err(EvalError::ColumnArity {
            expected: needed,
            got: data.cols(),
        }
        .into());
    }
    let var = variance(y);
    if !(var > 0.0) || !var.is_finite() {
        return Err(FitError::DegenerateTarget);
    }
    if data.rows() < s.param_count() {
        log::warn!(
            "fitting {} parameters on {} rows",
            s.param_count(),
            data.rows()
        );
    }
    Ok(Prepared { var })
}

fn full_nmse(s: &Skeleton, theta: &[f64], data: &Matrix, y: &[f64], buf: &mut Vec<f64>) -> f64 {
    match s.evaluate_into(theta, data, buf) {
        Ok(()) => nmse_unchecked(buf, y),
        Err(_) => f64::INFINITY,
    }
}

fn remaining(limit: usize, used: usize) -> usize {
    limit.saturating_sub(used)
}

/// Best `(q*, w*, J)` over the starts of a Powell search on the reduced
/// objective, plus the number of objective evaluations spent.
pub(crate) fn powell_inner(
    s: &Skeleton,
    roles: &ParamRoles,
    data: &Matrix,
    y: &[f64],
    var: f64,
    opts: &FitOptions,
    limit: usize,
) -> Result<((Vec<f64>, Vec<f64>, f64), usize), FitError> {
    let dim = roles.nonlinear().len();
    let mut used = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut hard_error = None;
    for start in opts.starts(dim) {
        let cap = remaining(limit, used).min(POWELL_EVALS_PER_DIM * dim.max(1));
        if cap == 0 {
            break;
        }
        let mut f = |q: &[f64]| match reduced_objective_with_var(s, roles, q, data, y, opts.lambda, var) {
            Ok((j, _)) => j,
            Err(e) => {
                hard_error.get_or_insert(e);
                f64::INFINITY
            }
        };
        let mut obj = Counted::new(&mut f, cap, opts.deadline);
        let m = powell::minimize(&mut obj, &start, FTOL);
        used += obj.evals;
        if m.f.is_finite() && best.as_ref().is_none_or(|(_, bf)| m.f < *bf) {
            best = Some((m.x, m.f));
        }
    }
    if let Some(e) = hard_error {
        if best.is_none() {
            return Err(e);
        }
    }
    let (q, _) = best.ok_or(FitError::Failed)?;
    let (j, w) = reduced_objective_with_var(s, roles, &q, data, y, opts.lambda, var)?;
    if !j.is_finite() {
        return Err(FitError::Failed);
    }
    Ok(((q, w, j), used + 1))
}

/// Multi-start Powell search over the nonlinear parameters. Returns
/// `(q*, w*(q*))`.
pub fn powell_search(
    s: &Skeleton,
    roles: &ParamRoles,
    data: &Matrix,
    y: &[f64],
    opts: &FitOptions,
) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    let p = prepare(s, data, y)?;
    let limit = opts.max_evals.unwrap_or(usize::MAX);
    let ((q, w, _), _) = powell_inner(s, roles, data, y, p.var, opts, limit)?;
    Ok((q, w))
}

fn mixed_path(
    s: &Skeleton,
    data: &Matrix,
    y: &[f64],
    var: f64,
    opts: &FitOptions,
    limit: usize,
) -> Result<FitResult, FitError> {
    let roles = classify_param_roles(s);
    let (theta, evals) = if roles.nonlinear().is_empty() {
        let ps = build_probe_system(s, &roles, &[], data)?;
        (solve_linear(&ps, y, opts.lambda)?, 1)
    } else {
        let ((q, w, _), evals) = powell_inner(s, &roles, data, y, var, opts, limit)?;
        (roles.assemble(&w, &q), evals)
    };
    let nmse = full_nmse(s, &theta, data, y, &mut Vec::new());
    if !nmse.is_finite() {
        return Err(FitError::Failed);
    }
    Ok(FitResult {
        theta,
        nmse,
        path: FitPath::Mixed,
        evals,
    })
}

fn fallback_inner(
    s: &Skeleton,
    data: &Matrix,
    y: &[f64],
    opts: &FitOptions,
    limit: usize,
) -> Result<FitResult, FitError> {
    let mut used = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut buf = Vec::with_capacity(y.len());
    for start in opts.starts(s.param_count()) {
        let cap = remaining(limit, used);
        if cap == 0 {
            break;
        }
        let mut f = |theta: &[f64]| full_nmse(s, theta, data, y, &mut buf);
        let mut obj = Counted::new(&mut f, cap, opts.deadline);
        let m = bfgs::minimize(&mut obj, &start, FTOL);
        used += obj.evals;
        if m.f.is_finite() && best.as_ref().is_none_or(|(_, bf)| m.f < *bf) {
            best = Some((m.x, m.f));
        }
    }
    let (theta, nmse) = best.ok_or(FitError::Failed)?;
    Ok(FitResult {
        theta,
        nmse,
        path: FitPath::Fallback,
        evals: used,
    })
}

/// Multi-start BFGS over all parameters jointly.
pub fn fallback_fit(
    s: &Skeleton,
    data: &Matrix,
    y: &[f64],
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    prepare(s, data, y)?;
    fallback_inner(s, data, y, opts, opts.max_evals.unwrap_or(usize::MAX))
}

/// Runs the separable path and the fallback and keeps the lower NMSE,
/// preferring the separable result when the two agree within `TIE_TOL`.
pub fn mixed_optimize(
    s: &Skeleton,
    data: &Matrix,
    y: &[f64],
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let p = prepare(s, data, y)?;
    let limit = opts.max_evals.unwrap_or(usize::MAX);
    let mixed = mixed_path(s, data, y, p.var, opts, limit);
    let used = mixed.as_ref().map_or(0, |r| r.evals);
    let fallback = fallback_inner(s, data, y, opts, remaining(limit, used));
    match (mixed, fallback) {
        (Ok(m), Ok(f)) => {
            let evals = m.evals + f.evals;
            let mut best = if m.nmse <= f.nmse + TIE_TOL { m } else { f };
            best.evals = evals;
            Ok(best)
        }
        (Ok(m), Err(_)) => Ok(m),
        (Err(_), Ok(mut f)) => {
            f.evals += used;
            Ok(f)
        }
        (Err(e @ FitError::Eval(_)), Err(_)) => Err(e),
        (Err(_), Err(_)) => Err(FitError::Failed),
    }
}
