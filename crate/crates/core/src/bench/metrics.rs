use serde::Serialize;

use super::{BenchError, Dataset, Split};
use crate::data::variance;
use crate::expr::Skeleton;
use crate::scoring::nmse_unchecked;

/// Stabilizer in the relative-error denominator `|y| + ε`.
pub const ACC_EPSILON: f64 = 1e-9;

pub const DEFAULT_TAUS: [f64; 2] = [0.1, 0.001];

fn within(p: f64, y: f64, tau: f64) -> bool {
    p.is_finite() && (p - y).abs() / (y.abs() + ACC_EPSILON) <= tau
}

/// Fraction of points whose relative error is at most `tau`. Non-finite
/// predictions count as misses; an empty split gives 0.
pub fn acc_at_tau(pred: &[f64], y: &[f64], tau: f64) -> f64 {
    assert_eq!(pred.len(), y.len(), "prediction and target lengths differ");
    if y.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(y).filter(|(p, t)| within(**p, **t, tau)).count();
    hits as f64 / y.len() as f64
}

/// 1 when every point is within `tau`, else 0.
pub fn acc_max_at_tau(pred: &[f64], y: &[f64], tau: f64) -> u8 {
    assert_eq!(pred.len(), y.len(), "prediction and target lengths differ");
    u8::from(!y.is_empty() && pred.iter().zip(y).all(|(p, t)| within(*p, *t, tau)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauMetrics {
    pub tau: f64,
    pub acc: f64,
    pub acc_max: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitMetrics {
    pub split: String,
    pub rows: usize,
    /// `None` for an empty split or a constant target; infinite predictions
    /// give `f64::INFINITY`.
    pub nmse: Option<f64>,
    pub taus: Vec<TauMetrics>,
}

impl SplitMetrics {
    pub fn at(&self, tau: f64) -> Option<&TauMetrics> {
        self.taus.iter().find(|t| t.tau == tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub acc_epsilon: f64,
    pub splits: Vec<SplitMetrics>,
}

impl MetricsReport {
    pub fn split(&self, name: &str) -> Option<&SplitMetrics> {
        self.splits.iter().find(|s| s.split == name)
    }
}

fn split_metrics(name: &str, pred: &[f64], y: &[f64], taus: &[f64]) -> SplitMetrics {
    let nmse = (y.len() >= 2 && variance(y) > 0.0).then(|| nmse_unchecked(pred, y));
    SplitMetrics {
        split: name.to_string(),
        rows: y.len(),
        nmse,
        taus: taus
            .iter()
            .map(|&tau| TauMetrics {
                tau,
                acc: acc_at_tau(pred, y, tau),
                acc_max: acc_max_at_tau(pred, y, tau),
            })
            .collect(),
    }
}

/// Metrics for already computed predictions, one entry per `(name, pred, y)`.
pub fn evaluate_predictions(splits: &[(&str, &[f64], &[f64])], taus: &[f64]) -> MetricsReport {
    MetricsReport {
        acc_epsilon: ACC_EPSILON,
        splits: splits
            .iter()
            .map(|(name, pred, y)| split_metrics(name, pred, y, taus))
            .collect(),
    }
}

fn predict(s: &Skeleton, theta: &[f64], split: &Split) -> Result<Vec<f64>, BenchError> {
    s.evaluate(theta, &split.inputs)
        .map_err(|e| BenchError::Schema(e.to_string()))
}

/// Evaluates a fitted skeleton on every split of `data`. Variables are
/// matched to dataset columns by name.
pub fn evaluate_equation(
    s: &Skeleton,
    theta: &[f64],
    data: &Dataset,
    taus: &[f64],
) -> Result<MetricsReport, BenchError> {
    let mapped = s.with_variables(&data.names).ok_or_else(|| {
        BenchError::Schema(format!(
            "equation variables {:?} are not all columns of {:?}",
            s.variable_names(),
            data.names
        ))
    })?;
    if theta.len() != s.param_count() {
        return Err(BenchError::Schema(format!(
            "equation has {} parameters, {} values given",
            s.param_count(),
            theta.len()
        )));
    }
    let mut splits = Vec::new();
    for (name, split) in data.splits() {
        let pred = predict(&mapped, theta, split)?;
        splits.push(split_metrics(name, &pred, &split.target, taus));
    }
    Ok(MetricsReport {
        acc_epsilon: ACC_EPSILON,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{mean, Matrix};
    use crate::expr::parse_with_vars;

    #[test]
    fn hand_examples() {
        let y = [1.0, 2.0, 4.0];
        assert_eq!(acc_at_tau(&y, &y, 0.0), 1.0);
        assert_eq!(acc_max_at_tau(&y, &y, 0.0), 1);
        let pred = [1.05, 2.5, 4.0];
        assert!((acc_at_tau(&pred, &y, 0.1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(acc_max_at_tau(&pred, &y, 0.1), 0);
        assert!(acc_at_tau(&pred, &y, 0.0) < 1.0);
    }

    #[test]
    fn non_finite_predictions_fail() {
        let y = [1.0, 2.0, 3.0];
        let pred = [1.0, f64::NAN, 3.0];
        let r = evaluate_predictions(&[("train", &pred, &y)], &DEFAULT_TAUS);
        assert_eq!(r.splits[0].nmse, Some(f64::INFINITY));
        assert!((r.splits[0].taus[0].acc - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.splits[0].taus[0].acc_max, 0);
    }

    fn dataset() -> Dataset {
        let split = |xs: &[f64]| Split {
            inputs: Matrix::from_rows(2, &xs.iter().map(|x| [*x, 1.0 - x]).collect::<Vec<_>>()),
            target: xs.iter().map(|x| 2.0 * x + 0.5).collect(),
        };
        Dataset {
            names: vec!["x".to_string(), "v".to_string()],
            target_name: "y".to_string(),
            train: split(&[0.0, 0.5, 1.0, 1.5]),
            id_test: split(&[0.25, 0.75]),
            ood_test: split(&[3.0, 4.0, 5.0]),
        }
    }

    #[test]
    fn ground_truth_is_perfect_on_every_split() {
        let d = dataset();
        let s = parse_with_vars("params[0]*x + params[1]", &["x".to_string()]).unwrap();
        let r = evaluate_equation(&s, &[2.0, 0.5], &d, &DEFAULT_TAUS).unwrap();
        assert_eq!(r.splits.len(), 3);
        for sm in &r.splits {
            assert_eq!(sm.nmse, Some(0.0));
            for t in &sm.taus {
                assert_eq!((t.acc, t.acc_max), (1.0, 1));
            }
        }
        assert!(r.splits[0].at(0.1).is_some() && r.splits[0].at(0.001).is_some());
    }

    #[test]
    fn mean_predictor_has_unit_nmse() {
        let d = dataset();
        let s = parse_with_vars("params[0]", &["x".to_string()]).unwrap();
        for (name, split) in d.splits() {
            let m = mean(&split.target);
            let r = evaluate_equation(&s, &[m], &d, &DEFAULT_TAUS).unwrap();
            let nmse = r.split(name).unwrap().nmse.unwrap();
            assert!((nmse - 1.0).abs() < 1e-12, "{name}: {nmse}");
        }
    }

    #[test]
    fn unknown_variable_is_a_schema_error() {
        let s = parse_with_vars("params[0]*z", &["z".to_string()]).unwrap();
        assert!(matches!(
            evaluate_equation(&s, &[1.0], &dataset(), &DEFAULT_TAUS),
            Err(BenchError::Schema(_))
        ));
    }
}
