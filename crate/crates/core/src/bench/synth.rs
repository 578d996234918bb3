use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{BenchError, Dataset, Split};
use crate::data::{std_dev, Matrix};

pub const SYNTHETIC_NAMES: [&str; 4] = ["oscillator1", "oscillator2", "bactgrow", "stress_strain"];

/// A built-in generator: variable names, sampling boxes and the closed form.
/// Constants are engine choices.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub name: &'static str,
    pub variables: &'static [&'static str],
    pub target: &'static str,
    /// Per-variable `(lo, hi)` for training and ID test rows.
    pub id_box: &'static [(f64, f64)],
    /// Per-variable `(lo, hi)` containing the ID box; OOD rows lie inside it
    /// but outside the ID box.
    pub ood_box: &'static [(f64, f64)],
    pub formula: fn(&[f64]) -> f64,
    /// Ground-truth skeleton text and its parameter values.
    pub skeleton: &'static str,
    pub theta: &'static [f64],
}

fn oscillator1(r: &[f64]) -> f64 {
    let (x, v) = (r[0], r[1]);
    let (f, w, a, b, g) = (0.8, 1.2, 0.5, 0.3, 0.2);
    f * (w * x).sin() - a * v.powi(3) - b * x.powi(3) - g * x * v - x * x.cos()
}

fn oscillator2(r: &[f64]) -> f64 {
    let (t, x, v) = (r[0], r[1], r[2]);
    let (f, w, a, b, d, g) = (0.3, 0.5, 0.5, 1.0, 0.8, 0.5);
    f * (w * t).sin() - a * v.powi(3) - b * x * v - d * x * (g * x).exp()
}

fn bactgrow(r: &[f64]) -> f64 {
    let (b, s, t, ph) = (r[0], r[1], r[2], r[3]);
    let (mu, ks, k, x0, c, xd) = (0.8, 2.0, 0.3, 15.0, 1e-5, 38.0);
    let (ph_opt, ph_min, ph_max) = (7.0, 4.0, 10.0);
    let temp = (k * (t - x0)).tanh() / (1.0 + c * (t - xd).powi(4));
    let acid = (-(ph - ph_opt).abs()).exp() * (((ph - ph_min) / (ph_max - ph_min) * PI).powi(2)).sin();
    mu * b * (s / (ks + s)) * temp * acid
}

fn stress_strain(r: &[f64]) -> f64 {
    let (e, t) = (r[0], r[1]);
    let (a, b, n, tr, tm, m) = (0.3, 0.5, 0.4, 293.0, 1000.0, 1.2);
    (a + b * e.powf(n)) * (1.0 - ((t - tr) / (tm - tr)).powf(m))
}

const SPECS: [SyntheticSpec; 4] = [
    SyntheticSpec {
        name: "oscillator1",
        variables: &["x", "v"],
        target: "y",
        id_box: &[(-2.0, 2.0), (-2.0, 2.0)],
        ood_box: &[(-3.0, 3.0), (-3.0, 3.0)],
        formula: oscillator1,
        skeleton: "params[0]*sin(params[1]*x) + params[2]*v^3 + params[3]*x^3 + params[4]*x*v + params[5]*x*cos(x)",
        theta: &[0.8, 1.2, -0.5, -0.3, -0.2, -1.0],
    },
    SyntheticSpec {
        name: "oscillator2",
        variables: &["t", "x", "v"],
        target: "y",
        id_box: &[(0.0, 10.0), (-1.0, 1.0), (-1.0, 1.0)],
        ood_box: &[(0.0, 15.0), (-1.5, 1.5), (-1.5, 1.5)],
        formula: oscillator2,
        skeleton: "params[0]*sin(params[1]*t) + params[2]*v^3 + params[3]*x*v + params[4]*x*exp(params[5]*x)",
        theta: &[0.3, 0.5, -0.5, -1.0, -0.8, 0.5],
    },
    SyntheticSpec {
        name: "bactgrow",
        variables: &["B", "S", "T", "pH"],
        target: "y",
        id_box: &[(0.1, 2.0), (0.1, 5.0), (20.0, 40.0), (5.0, 9.0)],
        ood_box: &[(0.1, 3.0), (0.1, 7.5), (12.0, 45.0), (4.5, 9.5)],
        formula: bactgrow,
        skeleton: "params[0]*B*S/(params[1] + S)*tanh(params[2]*(T - params[3]))/(1 + params[4]*(T - params[5])^4)*exp(-abs(pH - params[6]))*sin((params[7]*(pH - params[8]))^2)",
        theta: &[0.8, 2.0, 0.3, 15.0, 1e-5, 38.0, 7.0, PI / 6.0, 4.0],
    },
    SyntheticSpec {
        name: "stress_strain",
        variables: &["eps", "T"],
        target: "y",
        id_box: &[(0.01, 0.6), (293.0, 600.0)],
        ood_box: &[(0.01, 0.9), (293.0, 800.0)],
        formula: stress_strain,
        skeleton: "(params[0] + params[1]*eps^params[2])*(1 - (params[3]*(T - params[4]))^params[5])",
        theta: &[0.3, 0.5, 0.4, 1.0 / 707.0, 293.0, 1.2],
    },
];

impl SyntheticSpec {
    pub fn by_name(name: &str) -> Result<&'static SyntheticSpec, BenchError> {
        SPECS
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| BenchError::UnknownSynthetic(name.to_string()))
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.variables.iter().map(|s| s.to_string()).collect()
    }

    pub fn in_id_box(&self, row: &[f64]) -> bool {
        row.iter().zip(self.id_box).all(|(v, (lo, hi))| (lo..=hi).contains(&v))
    }

    fn sample_box(&self, rng: &mut ChaCha8Rng, bx: &[(f64, f64)]) -> Vec<f64> {
        bx.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
    }

    fn block(&self, rng: &mut ChaCha8Rng, n: usize, ood: bool) -> Split {
        let mut values = Vec::with_capacity(n * self.variables.len());
        let mut target = Vec::with_capacity(n);
        for _ in 0..n {
            let row = if ood {
                loop {
                    let r = self.sample_box(rng, self.ood_box);
                    if !self.in_id_box(&r) {
                        break r;
                    }
                }
            } else {
                self.sample_box(rng, self.id_box)
            };
            target.push((self.formula)(&row));
            values.extend(row);
        }
        Split {
            inputs: Matrix::new(n, self.variables.len(), values),
            target,
        }
    }
}

/// Samples a train/ID/OOD dataset from a built-in generator. Train and ID
/// rows are uniform on the ID box; OOD rows are rejection-sampled from the
/// extended box outside it. With `noise > 0`, training targets get Gaussian
/// noise with standard deviation `noise * std(y_train)`; test targets stay
/// clean.
pub fn make_synthetic(
    name: &str,
    n_train: usize,
    n_id: usize,
    n_ood: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset, BenchError> {
    let spec = SyntheticSpec::by_name(name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = spec.block(&mut rng, n_train, false);
    let id_test = spec.block(&mut rng, n_id, false);
    let ood_test = spec.block(&mut rng, n_ood, true);
    if noise > 0.0 && n_train > 1 {
        let sigma = noise * std_dev(&train.target);
        let dist = Normal::new(0.0, sigma).map_err(|e| BenchError::Schema(e.to_string()))?;
        for y in &mut train.target {
            *y += dist.sample(&mut rng);
        }
    }
    Ok(Dataset {
        names: spec.variable_names(),
        target_name: spec.target.to_string(),
        train,
        id_test,
        ood_test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_with_vars;

    #[test]
    fn oscillator1_matches_closed_form() {
        let d = make_synthetic("oscillator1", 50, 10, 10, 0.0, 3).unwrap();
        for (_, split) in d.splits() {
            for (row, y) in split.inputs.iter_rows().zip(&split.target) {
                let (x, v) = (row[0], row[1]);
                let want = 0.8 * (1.2 * x).sin() - 0.5 * v * v * v - 0.3 * x * x * x - 0.2 * x * v - x * x.cos();
                assert!((y - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn skeletons_reproduce_generators() {
        for name in SYNTHETIC_NAMES {
            let spec = SyntheticSpec::by_name(name).unwrap();
            let s = parse_with_vars(spec.skeleton, &spec.variable_names()).unwrap();
            let d = make_synthetic(name, 40, 10, 10, 0.0, 1).unwrap();
            for (_, split) in d.splits() {
                let pred = s.evaluate(spec.theta, &split.inputs).unwrap();
                for (p, y) in pred.iter().zip(&split.target) {
                    assert!((p - y).abs() <= 1e-9 * y.abs().max(1.0), "{name}: {p} vs {y}");
                }
            }
        }
    }

    #[test]
    fn ood_rows_are_outside_the_id_box() {
        for name in SYNTHETIC_NAMES {
            let spec = SyntheticSpec::by_name(name).unwrap();
            let d = make_synthetic(name, 5, 50, 200, 0.0, 9).unwrap();
            assert!(d.ood_test.inputs.iter_rows().all(|r| !spec.in_id_box(r)));
            assert!(d.id_test.inputs.iter_rows().all(|r| spec.in_id_box(r)));
        }
    }

    #[test]
    fn deterministic_and_sized() {
        let a = make_synthetic("bactgrow", 20, 5, 0, 0.1, 7).unwrap();
        let b = make_synthetic("bactgrow", 20, 5, 0, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.ood_test.is_empty());
        assert_eq!((a.train.rows(), a.id_test.rows()), (20, 5));
        assert_ne!(a, make_synthetic("bactgrow", 20, 5, 0, 0.1, 8).unwrap());
    }

    #[test]
    fn noise_touches_training_targets_only() {
        let clean = make_synthetic("oscillator1", 30, 10, 10, 0.0, 5).unwrap();
        let noisy = make_synthetic("oscillator1", 30, 10, 10, 0.05, 5).unwrap();
        assert_eq!(clean.train.inputs, noisy.train.inputs);
        assert_ne!(clean.train.target, noisy.train.target);
        assert_eq!(clean.id_test, noisy.id_test);
    }

    #[test]
    fn unknown_name_is_an_error() {
        assert!(matches!(
            make_synthetic("pendulum", 1, 1, 1, 0.0, 0),
            Err(BenchError::UnknownSynthetic(_))
        ));
    }
}
