//! Fit error, complexity and the combined accuracy/complexity score.

use serde::{Deserialize, Serialize};

use crate::data::{std_dev, variance, Matrix};
use crate::expr::Skeleton;
use crate::fit::FitResult;

pub const K_PARAM: f64 = 1.0;
pub const K_SENS: f64 = 0.05;
pub const K_CURV: f64 = 0.01;
pub const W_FIT: f64 = 0.7;
pub const W_COMP: f64 = 0.3;
pub const SCORE_EPS: f64 = 1e-12;
/// Rows used for the finite-difference penalties.
pub const PENALTY_ROWS: usize = 300;
/// Contribution of a non-finite difference.
pub const PENALTY_CAP: f64 = 1e6;
const ACTIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("target has zero variance")]
    DegenerateTarget,
    #[error("length mismatch: {pred} predictions for {target} targets")]
    LengthMismatch { pred: usize, target: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub n_eff: usize,
    pub c_sens: f64,
    pub c_curv: f64,
}

impl Complexity {
    pub fn value(&self) -> f64 {
        complexity(self.n_eff as f64, self.c_sens, self.c_curv)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub skeleton: Skeleton,
    pub fit: FitResult,
    pub score: f64,
    pub complexity: Complexity,
}

/// Mean squared error over the population variance of `y`; `+inf` when
/// any prediction is non-finite.
pub fn nmse(pred: &[f64], y: &[f64]) -> Result<f64, ScoreError> {
    if pred.len() != y.len() || y.len() < 2 {
        return Err(ScoreError::LengthMismatch {
            pred: pred.len(),
            target: y.len(),
        });
    }
    if !(variance(y) > 0.0) {
        return Err(ScoreError::DegenerateTarget);
    }
    Ok(nmse_unchecked(pred, y))
}

pub(crate) fn nmse_unchecked(pred: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mut sse = 0.0;
    for (p, t) in pred.iter().zip(y) {
        if !p.is_finite() {
            return f64::INFINITY;
        }
        sse += (p - t) * (p - t);
    }
    let v = (sse / n) / variance(y);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn param_step(theta: f64) -> f64 {
    (1e-3 * theta.abs()).max(1e-6)
}

fn predict(s: &Skeleton, theta: &[f64], data: &Matrix) -> Vec<f64> {
    s.evaluate(theta, data)
        .unwrap_or_else(|_| vec![f64::NAN; data.rows()])
}

/// Number of parameters whose perturbation visibly moves the prediction
/// (max-norm change above 1e-10 times std(y)).
pub fn effective_param_count(s: &Skeleton, theta: &[f64], data: &Matrix, y: &[f64]) -> usize {
    let scale = std_dev(y);
    let base = predict(s, theta, data);
    let mut active = 0;
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        t[i] = theta[i] + param_step(theta[i]);
        let moved = predict(s, &t, data);
        t[i] = theta[i];
        let change = base
            .iter()
            .zip(&moved)
            .map(|(a, b)| {
                let d = (a - b).abs();
                if d.is_nan() {
                    // one side undefined counts as a change, both undefined does not
                    if a.is_finite() != b.is_finite() {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    d
                }
            })
            .fold(0.0, f64::max);
        if change > ACTIVE_TOL * scale {
            active += 1;
        }
    }
    active
}

fn capped(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        PENALTY_CAP
    }
}

/// Sensitivity to parameters and curvature in the inputs, both from
/// central differences on the first `min(N, 300)` rows and scaled by std(y).
pub fn behavior_penalties(s: &Skeleton, theta: &[f64], data: &Matrix, y: &[f64]) -> (f64, f64) {
    let sample = data.head(PENALTY_ROWS);
    let n = sample.rows();
    let scale = std_dev(y);
    if n == 0 {
        return (0.0, 0.0);
    }

    let mut c_sens = 0.0;
    if !theta.is_empty() {
        let mut t = theta.to_vec();
        let mut total = 0.0;
        for i in 0..theta.len() {
            let d = param_step(theta[i]);
            t[i] = theta[i] + d;
            let up = predict(s, &t, &sample);
            t[i] = theta[i] - d;
            let down = predict(s, &t, &sample);
            t[i] = theta[i];
            for (u, l) in up.iter().zip(&down) {
                let deriv = (u - l) / (2.0 * d);
                total += capped((deriv * d).abs() / scale);
            }
        }
        c_sens = total / (n * theta.len()) as f64;
    }

    let cols = sample.cols();
    let mut c_curv = 0.0;
    if cols > 0 {
        let mid = predict(s, theta, &sample);
        let mut total = 0.0;
        for j in 0..cols {
            let h = 1e-3 * std_dev(&data.column(j));
            let mut shifted = sample.clone();
            for r in 0..n {
                shifted.row_mut(r)[j] += h;
            }
            let up = predict(s, theta, &shifted);
            for r in 0..n {
                shifted.row_mut(r)[j] -= 2.0 * h;
            }
            let down = predict(s, theta, &shifted);
            for r in 0..n {
                let second = up[r] - 2.0 * mid[r] + down[r];
                total += capped(second.abs() / scale);
            }
        }
        c_curv = total / (n * cols) as f64;
    }
    (c_sens, c_curv)
}

pub fn complexity(n_eff: f64, c_sens: f64, c_curv: f64) -> f64 {
    K_PARAM * n_eff + K_SENS * c_sens + K_CURV * c_curv.ln_1p()
}

/// `W_fit * (-ln(nmse + eps)) - W_comp * C`; `-inf` for an invalid fit.
pub fn score(nmse: f64, complexity: f64) -> f64 {
    if !nmse.is_finite() || nmse < 0.0 {
        return f64::NEG_INFINITY;
    }
    W_FIT * -(nmse + SCORE_EPS).ln() - W_COMP * complexity
}

/// Complexity breakdown and score for a fitted skeleton.
pub fn score_candidate(s: &Skeleton, fit: FitResult, data: &Matrix, y: &[f64]) -> ScoredCandidate {
    let n_eff = effective_param_count(s, &fit.theta, data, y);
    let (c_sens, c_curv) = behavior_penalties(s, &fit.theta, data, y);
    let complexity = Complexity {
        n_eff,
        c_sens,
        c_curv,
    };
    let score = score(fit.nmse, complexity.value());
    ScoredCandidate {
        skeleton: s.clone(),
        fit,
        score,
        complexity,
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::expr::{parse, parse_with_vars};

    #[test]
    fn nmse_examples() {
        let y = [0.0, 1.0, 2.0];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        assert_relative_eq!(nmse(&[1.0, 1.0, 1.0], &y).unwrap(), 1.0);
        assert_relative_eq!(nmse(&[0.0, 1.0, 3.0], &y).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(nmse(&[0.0, f64::NAN, 2.0], &y).unwrap(), f64::INFINITY);
        assert_eq!(nmse(&[1.0, 1.0], &[2.0, 2.0]), Err(ScoreError::DegenerateTarget));
        assert!(nmse(&[1.0], &[2.0]).is_err());
    }

    fn two_var_data(x2: f64) -> Matrix {
        Matrix::from_rows(2, &[[0.0, x2], [1.0, x2], [2.5, x2], [-1.0, x2]])
    }

    #[test]
    fn n_eff_examples() {
        let vars = vec!["x1".to_string(), "x2".to_string()];
        let y = [1.0, 2.0, 3.0, 0.0];
        let s = parse_with_vars("params[0]+params[1]*x1", &vars).unwrap();
        assert_eq!(effective_param_count(&s, &[1.0, 2.0], &two_var_data(0.0), &y), 2);
        let s = parse_with_vars("params[0]+params[1]*x2", &vars).unwrap();
        assert_eq!(effective_param_count(&s, &[1.0, 2.0], &two_var_data(0.0), &y), 1);
        let s = parse_with_vars("x1 + 1", &vars).unwrap();
        assert_eq!(effective_param_count(&s, &[], &two_var_data(0.0), &y), 0);
    }

    #[test]
    fn penalty_examples() {
        let data = Matrix::column_vector(&[0.0, 1.0, 2.0, 3.0]);
        let y = [-1.0, 1.0, -1.0, 1.0]; // std = 1
        let s = parse("params[0] + 0*x").unwrap();
        let (sens, curv) = behavior_penalties(&s, &[1.0], &data, &y);
        assert_relative_eq!(sens, 1e-3, epsilon = 1e-12);
        assert_eq!(curv, 0.0);

        let s = parse("params[0]*sqrt(x - 1.5)").unwrap();
        let (sens, _) = behavior_penalties(&s, &[1.0], &data, &y);
        assert!(sens >= PENALTY_CAP / 4.0);
    }

    #[test]
    fn curvature_of_quadratic() {
        // second difference of x^2 is 2h^2; h = 1e-3*std(x)
        let xs = [0.0, 1.0, 2.0, 3.0];
        let data = Matrix::column_vector(&xs);
        let y = [-1.0, 1.0, -1.0, 1.0];
        let s = parse("x^2").unwrap();
        let h = 1e-3 * std_dev(&xs);
        let (_, curv) = behavior_penalties(&s, &[], &data, &y);
        assert_relative_eq!(curv, 2.0 * h * h, max_relative = 1e-6);
    }

    #[test]
    fn complexity_examples() {
        assert_relative_eq!(complexity(2.0, 0.0, 0.0), 2.0);
        assert_relative_eq!(complexity(3.0, 1.0, 0.0), 3.05);
        assert_relative_eq!(complexity(0.0, 0.0, std::f64::consts::E - 1.0), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn score_examples() {
        assert!(score(1.0, 0.0).abs() < 1e-11);
        assert!((score(1e-4, 3.0) - 5.547238).abs() < 1e-4);
        assert_eq!(score(f64::INFINITY, 0.0), f64::NEG_INFINITY);
        assert!(score(0.1, 1.0) < score(0.01, 1.0));
        assert!(score(0.1, 2.0) < score(0.1, 1.0));
    }
}
