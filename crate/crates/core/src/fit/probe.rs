use nalgebra::{DMatrix, DVector};

use super::FitError;
use crate::data::{variance, Matrix};
use crate::expr::{ParamRoles, Skeleton};

/// Affine decomposition of a skeleton at fixed nonlinear parameters:
/// `f(u; w, q) = bias + design * w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSystem {
    /// N x L, one column per linear parameter.
    pub design: Matrix,
    pub bias: Vec<f64>,
}

impl ProbeSystem {
    pub fn predict(&self, w: &[f64]) -> Vec<f64> {
        (0..self.bias.len())
            .map(|i| {
                let row = self.design.row(i);
                self.bias[i] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn linear_count(&self) -> usize {
        self.design.cols()
    }
}

/// Evaluates the unit probes: bias with every linear coefficient at zero,
/// and column k as the response to coefficient k alone set to one.
pub fn build_probe_system(
    s: &Skeleton,
    roles: &ParamRoles,
    q: &[f64],
    data: &Matrix,
) -> Result<ProbeSystem, FitError> {
    let lin = roles.linear();
    let n_nonlin = roles.len() - lin.len();
    if q.len() != n_nonlin {
        return Err(FitError::LengthMismatch {
            what: "nonlinear parameters",
            expected: n_nonlin,
            got: q.len(),
        });
    }
    let n = data.rows();
    let l = lin.len();
    let mut w = vec![0.0; l];
    let bias = s.evaluate(&roles.assemble(&w, q), data)?;
    if bias.iter().any(|v| !v.is_finite()) {
        return Err(FitError::InvalidProbe);
    }
    let mut design = Matrix::zeros(n, l);
    let mut col = Vec::with_capacity(n);
    for k in 0..l {
        w.iter_mut().for_each(|v| *v = 0.0);
        w[k] = 1.0;
        s.evaluate_into(&roles.assemble(&w, q), data, &mut col)?;
        for i in 0..n {
            let v = col[i] - bias[i];
            if !v.is_finite() {
                return Err(FitError::InvalidProbe);
            }
            design.row_mut(i)[k] = v;
        }
    }
    Ok(ProbeSystem { design, bias })
}

/// Ridge least squares through the normal equations
/// `(Φᵀ Φ + λ I) w = Φᵀ (y - b)`.
pub fn solve_linear(ps: &ProbeSystem, y: &[f64], lambda: f64) -> Result<Vec<f64>, FitError> {
    let n = ps.bias.len();
    if y.len() != n {
        return Err(FitError::LengthMismatch {
            what: "target rows",
            expected: n,
            got: y.len(),
        });
    }
    let l = ps.linear_count();
    if l == 0 {
        return Ok(Vec::new());
    }
    let phi = DMatrix::from_row_slice(n, l, ps.design.values());
    let resid = DVector::from_iterator(n, y.iter().zip(&ps.bias).map(|(a, b)| a - b));
    let mut gram = phi.transpose() * &phi;
    for i in 0..l {
        gram[(i, i)] += lambda;
    }
    let rhs = phi.transpose() * resid;
    let chol = gram.cholesky().ok_or(FitError::SingularSystem)?;
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(FitError::SingularSystem);
    }
    Ok(w.iter().copied().collect())
}

/// NMSE after eliminating the linear coefficients; `+inf` when the probe
/// is invalid or the inner system is singular.
pub fn reduced_objective(
    s: &Skeleton,
    roles: &ParamRoles,
    q: &[f64],
    data: &Matrix,
    y: &[f64],
    lambda: f64,
) -> Result<f64, FitError> {
    let var = variance(y);
    if !(var > 0.0) {
        return Err(FitError::DegenerateTarget);
    }
    Ok(reduced_objective_with_var(s, roles, q, data, y, lambda, var)?.0)
}

/// Returns `(J, w*)`; `w*` is empty when J is the `+inf` sentinel.
pub(crate) fn reduced_objective_with_var(
    s: &Skeleton,
    roles: &ParamRoles,
    q: &[f64],
    data: &Matrix,
    y: &[f64],
    lambda: f64,
    var: f64,
) -> Result<(f64, Vec<f64>), FitError> {
    let ps = match build_probe_system(s, roles, q, data) {
        Ok(ps) => ps,
        Err(FitError::InvalidProbe) => return Ok((f64::INFINITY, Vec::new())),
        Err(e) => return Err(e),
    };
    let w = match solve_linear(&ps, y, lambda) {
        Ok(w) => w,
        Err(FitError::SingularSystem) => return Ok((f64::INFINITY, Vec::new())),
        Err(e) => return Err(e),
    };
    let pred = ps.predict(&w);
    let sse: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    let j = sse / (y.len() as f64 * var);
    if j.is_finite() {
        Ok((j, w))
    } else {
        Ok((f64::INFINITY, Vec::new()))
    }
}
