//! Quasi-Newton minimization with finite-difference gradients.

use nalgebra::{DMatrix, DVector};

use super::budget::Counted;
use super::powell::Minimum;

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 50;
const MAX_ITERS: usize = 200;

fn gradient(obj: &mut Counted, x: &DVector<f64>) -> Option<DVector<f64>> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut probe = x.clone();
    for i in 0..n {
        let h = (1e-7 * x[i].abs()).max(1e-7);
        probe[i] = x[i] + h;
        let fp = obj.eval(probe.as_slice());
        probe[i] = x[i] - h;
        let fm = obj.eval(probe.as_slice());
        probe[i] = x[i];
        let gi = (fp - fm) / (2.0 * h);
        if !gi.is_finite() {
            return None;
        }
        g[i] = gi;
    }
    Some(g)
}

/// BFGS on the full parameter vector. Central differences with step
/// `max(1e-7, 1e-7 |x_i|)`; backtracking line search on the Armijo rule.
pub(crate) fn minimize(obj: &mut Counted, start: &[f64], ftol: f64) -> Minimum {
    let n = start.len();
    let mut x = DVector::from_column_slice(start);
    let mut f = obj.eval(x.as_slice());
    if n == 0 || !f.is_finite() {
        return Minimum { x: x.as_slice().to_vec(), f };
    }
    let Some(mut g) = gradient(obj, &x) else {
        return Minimum { x: x.as_slice().to_vec(), f };
    };
    let mut h = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_ITERS {
        if obj.exhausted() {
            break;
        }
        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            p = -g.clone();
            slope = g.dot(&p);
            if !(slope < 0.0) {
                break;
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &x + alpha * &p;
            let fc = obj.eval(cand.as_slice());
            if fc <= f + ARMIJO_C1 * alpha * slope {
                accepted = Some((cand, fc));
                break;
            }
            if obj.exhausted() {
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let Some(g_new) = gradient(obj, &x_new) else {
            x = x_new;
            f = f_new;
            break;
        };
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        let converged = 2.0 * (f - f_new) <= ftol * (f.abs() + f_new.abs()) + 1e-300;
        x = x_new;
        f = f_new;
        g = g_new;
        if converged {
            break;
        }
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * yv.transpose();
            let right = &eye - rho * &yv * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
    }
    Minimum { x: x.as_slice().to_vec(), f }
}
