//! Derivative-free direction-set minimization with Brent line searches.

use super::budget::Counted;

const GOLD: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;
const GLIMIT: f64 = 100.0;
/// First bracketing step along a coordinate direction, relative to
/// max(1, |coordinate|). Keeps the search near its start.
const COORD_STEP: f64 = 0.1;
const TINY: f64 = 1e-20;
const ZEPS: f64 = 1e-18;
const LINE_TOL: f64 = 1e-10;
const BRENT_ITERS: usize = 100;

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
}

fn along(p: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    p.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

fn bracket(phi: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64, f64, f64) {
    let mut fa = phi(a);
    let mut fb = phi(b);
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + GOLD * (b - a);
    let mut fc = phi(c);
    let mut guard = 0;
    while fb > fc && guard < 60 {
        guard += 1;
        let r = (b - a) * (fb - fc);
        let q = (b - c) * (fb - fa);
        let denom = 2.0 * (q - r).abs().max(TINY).copysign(q - r);
        let mut u = b - ((b - c) * q - (b - a) * r) / denom;
        let ulim = b + GLIMIT * (c - b);
        let mut fu;
        if !u.is_finite() {
            u = c + GOLD * (c - b);
            fu = phi(u);
        } else if (b - u) * (u - c) > 0.0 {
            fu = phi(u);
            if fu < fc {
                return (b, u, c, fu);
            } else if fu > fb {
                return (a, b, u, fb);
            }
            u = c + GOLD * (c - b);
            fu = phi(u);
        } else if (c - u) * (u - ulim) > 0.0 {
            fu = phi(u);
            if fu < fc {
                b = c;
                c = u;
                u = c + GOLD * (c - b);
                fb = fc;
                fc = fu;
                fu = phi(u);
            }
        } else if (u - ulim) * (ulim - c) >= 0.0 {
            u = ulim;
            fu = phi(u);
        } else {
            u = c + GOLD * (c - b);
            fu = phi(u);
        }
        a = b;
        b = c;
        c = u;
        fa = fb;
        fb = fc;
        fc = fu;
    }
    let _ = fa;
    (a, b, c, fb)
}

/// Brent's parabolic/golden minimization inside a bracket `a < b < c`
/// (in either orientation) with `phi(b) = fb`.
fn brent(phi: &mut dyn FnMut(f64) -> f64, ax: f64, bx: f64, cx: f64, fb: f64) -> (f64, f64) {
    let (mut a, mut b) = if ax < cx { (ax, cx) } else { (cx, ax) };
    let (mut x, mut w, mut v) = (bx, bx, bx);
    let (mut fx, mut fw, mut fv) = (fb, fb, fb);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..BRENT_ITERS {
        let xm = 0.5 * (a + b);
        let tol1 = LINE_TOL * x.abs() + ZEPS;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.is_finite()
                && q.is_finite()
                && p.abs() < (0.5 * q * etemp).abs()
                && p > q * (a - x)
                && p < q * (b - x)
            {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = phi(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Minimizes along `p + t d`, updating `p` in place. Returns the new value.
fn line_minimize(obj: &mut Counted, p: &mut [f64], d: &[f64], fp: f64, step: f64) -> f64 {
    let base = p.to_vec();
    let mut phi = |t: f64| {
        if t == 0.0 {
            fp
        } else {
            obj.eval(&along(&base, d, t))
        }
    };
    let (a, b, c, fb) = bracket(&mut phi, 0.0, step);
    let (t, ft) = brent(&mut phi, a, b, c, fb);
    if ft < fp && t.is_finite() {
        for (pi, di) in p.iter_mut().zip(d) {
            *pi += t * di;
        }
        ft
    } else {
        fp
    }
}

/// Powell's conjugate-direction method from `start`. Stops when an
/// iteration's relative decrease falls below `ftol` or the budget runs out.
pub(crate) fn minimize(obj: &mut Counted, start: &[f64], ftol: f64) -> Minimum {
    let n = start.len();
    let mut p = start.to_vec();
    let mut fret = obj.eval(&p);
    if n == 0 {
        return Minimum { x: p, f: fret };
    }
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            d
        })
        .collect();
    let mut pt = p.clone();
    while !obj.exhausted() {
        let fp = fret;
        let mut ibig = 0;
        let mut del = 0.0;
        for (i, d) in dirs.iter().enumerate() {
            let before = fret;
            let step = match d.iter().position(|v| *v != 0.0) {
                Some(k) if d.iter().filter(|v| **v != 0.0).count() == 1 => COORD_STEP * p[k].abs().max(1.0),
                _ => 1.0,
            };
            fret = line_minimize(obj, &mut p, d, fret, step);
            let drop = before - fret;
            if drop.is_finite() && drop > del {
                del = drop;
                ibig = i;
            }
        }
        if 2.0 * (fp - fret) <= ftol * (fp.abs() + fret.abs()) + TINY || !fret.is_finite() {
            break;
        }
        let ptt: Vec<f64> = p.iter().zip(&pt).map(|(a, b)| 2.0 * a - b).collect();
        let xit: Vec<f64> = p.iter().zip(&pt).map(|(a, b)| a - b).collect();
        pt.clone_from(&p);
        let fptt = obj.eval(&ptt);
        if fptt < fp {
            let t = 2.0 * (fp - 2.0 * fret + fptt) * (fp - fret - del).powi(2)
                - del * (fp - fptt).powi(2);
            if t < 0.0 {
                fret = line_minimize(obj, &mut p, &xit, fret, 1.0);
                dirs[ibig] = dirs[n - 1].clone();
                dirs[n - 1] = xit;
            }
        }
    }
    Minimum { x: p, f: fret }
}
