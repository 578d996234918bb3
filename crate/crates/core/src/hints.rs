//! Lightweight structural hints extracted from training data.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{mean, std_dev, Matrix};

pub const MIN_ROWS: usize = 20;
pub const MIN_PAIRS: usize = 30;
pub const PARITY_THRESHOLD: f64 = 0.05;
const MIRROR_TOL: f64 = 1e-6;
const OTHER_TOL: f64 = 0.05;
const HINT_RIDGE: f64 = 1e-6;
const MAX_FEATURES: usize = 200;
const TOP_TERMS: usize = 8;
const EXP_CLAMP: f64 = 20.0;
const MAX_LINES: usize = 40;
const MAX_LISTED_VARS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ColumnStats {
    fn of(name: &str, v: &[f64]) -> Self {
        ColumnStats {
            name: name.to_string(),
            mean: mean(v),
            std: std_dev(v),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Odd,
    Even,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityTag {
    pub variable: String,
    pub parity: Parity,
    /// Fraction of matched pairs meeting the tagged criterion.
    pub confidence: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantTerm {
    pub feature: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataHint {
    pub rows: usize,
    pub variables: Vec<ColumnStats>,
    pub target: ColumnStats,
    /// mean(y) / std(y); infinite for a constant nonzero target.
    pub bias_tendency: f64,
    pub parity: Vec<ParityTag>,
    pub dominant_terms: Vec<DominantTerm>,
    pub stats_only: bool,
    pub note: Option<String>,
}

impl DataHint {
    pub fn parity_of(&self, variable: &str) -> Option<&ParityTag> {
        self.parity.iter().find(|p| p.variable == variable)
    }
}

fn parity_for(data: &Matrix, y: &[f64], v: usize, name: &str, col_std: &[f64], y_std: f64) -> ParityTag {
    let n = data.rows();
    let mut odd = Vec::new();
    let mut even = Vec::new();
    for i in 0..n {
        let ri = data.row(i);
        if ri[v].abs() <= MIRROR_TOL {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == i {
                continue;
            }
            let rj = data.row(j);
            if (rj[v] + ri[v]).abs() > MIRROR_TOL {
                continue;
            }
            let mut dist: f64 = 0.0;
            let mut ok = true;
            for k in 0..data.cols() {
                if k == v {
                    continue;
                }
                let d = (rj[k] - ri[k]).abs();
                if d > OTHER_TOL * col_std[k] {
                    ok = false;
                    break;
                }
                dist = dist.max(d);
            }
            if ok && best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((j, dist));
            }
        }
        if let Some((j, _)) = best {
            odd.push((y[i] + y[j]).abs() / y_std);
            even.push((y[i] - y[j]).abs() / y_std);
        }
    }
    let pairs = odd.len();
    let variable = name.to_string();
    if pairs < MIN_PAIRS {
        return ParityTag {
            variable,
            parity: Parity::None,
            confidence: 0.0,
            pairs,
        };
    }
    let frac = |v: &[f64]| v.iter().filter(|d| **d < PARITY_THRESHOLD).count() as f64 / pairs as f64;
    let (parity, confidence) = if median(&mut odd) < PARITY_THRESHOLD {
        (Parity::Odd, frac(&odd))
    } else if median(&mut even) < PARITY_THRESHOLD {
        (Parity::Even, frac(&even))
    } else {
        (Parity::None, 1.0 - frac(&odd).max(frac(&even)))
    };
    ParityTag {
        variable,
        parity,
        confidence,
        pairs,
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Feature {
    name: String,
    degree: u8,
    values: Vec<f64>,
}

fn expand(data: &Matrix, names: &[String]) -> Vec<Feature> {
    let mut out = Vec::new();
    let cols: Vec<Vec<f64>> = (0..data.cols()).map(|j| data.column(j)).collect();
    let map = |c: &[f64], f: &dyn Fn(f64) -> f64| c.iter().map(|x| f(*x)).collect::<Vec<f64>>();
    for (name, c) in names.iter().zip(&cols) {
        out.push(Feature { name: name.clone(), degree: 1, values: c.clone() });
        out.push(Feature { name: format!("{name}^2"), degree: 2, values: map(c, &|x| x * x) });
        out.push(Feature { name: format!("{name}^3"), degree: 3, values: map(c, &|x| x * x * x) });
        out.push(Feature { name: format!("sin({name})"), degree: 1, values: map(c, &f64::sin) });
        out.push(Feature { name: format!("cos({name})"), degree: 1, values: map(c, &f64::cos) });
        out.push(Feature {
            name: format!("exp({name})"),
            degree: 1,
            values: map(c, &|x| x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()),
        });
        out.push(Feature {
            name: format!("log(|{name}|+1)"),
            degree: 1,
            values: map(c, &|x| x.abs().ln_1p()),
        });
    }
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            out.push(Feature {
                name: format!("{}*{}", names[i], names[j]),
                degree: 2,
                values: cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).collect(),
            });
        }
    }
    if out.len() > MAX_FEATURES {
        out.sort_by_key(|f| f.degree);
        out.truncate(MAX_FEATURES);
    }
    out
}

fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let m = mean(v);
    let s = std_dev(v);
    if !(s > 1e-12 * m.abs().max(1.0)) || !s.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| (x - m) / s).collect())
}

fn dominant_terms(data: &Matrix, names: &[String], y: &[f64]) -> Vec<DominantTerm> {
    let Some(ys) = standardize(y) else {
        return Vec::new();
    };
    let feats: Vec<(String, Vec<f64>)> = expand(data, names)
        .into_iter()
        .filter_map(|f| standardize(&f.values).map(|v| (f.name, v)))
        .collect();
    if feats.is_empty() {
        return Vec::new();
    }
    let n = y.len();
    let p = feats.len();
    let x = DMatrix::from_fn(n, p, |i, j| feats[j].1[i]);
    let mut gram = x.transpose() * &x / n as f64;
    for k in 0..p {
        gram[(k, k)] += HINT_RIDGE;
    }
    let rhs = x.transpose() * DVector::from_column_slice(&ys) / n as f64;
    let Some(beta) = gram.cholesky().map(|c| c.solve(&rhs)) else {
        return Vec::new();
    };
    let mut terms: Vec<DominantTerm> = feats
        .into_iter()
        .zip(beta.iter())
        .filter(|(_, b)| b.is_finite())
        .map(|((name, _), b)| DominantTerm { feature: name, weight: b.abs() })
        .collect();
    terms.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.feature.cmp(&b.feature)));
    terms.truncate(TOP_TERMS);
    terms
}

/// Builds the hint for inputs `data` (columns named by `names`) and target
/// `y`. Fewer than 20 rows or a constant target yield a stats-only hint.
pub fn build_data_hint(data: &Matrix, names: &[String], y: &[f64], target_name: &str) -> DataHint {
    let variables: Vec<ColumnStats> = names
        .iter()
        .enumerate()
        .map(|(j, n)| ColumnStats::of(n, &data.column(j)))
        .collect();
    let target = ColumnStats::of(target_name, y);
    let bias_tendency = target.mean / target.std;
    let mut hint = DataHint {
        rows: y.len(),
        variables,
        target,
        bias_tendency,
        parity: Vec::new(),
        dominant_terms: Vec::new(),
        stats_only: true,
        note: None,
    };
    if !(hint.target.std > 0.0) {
        hint.note = Some("target is constant".to_string());
        return hint;
    }
    if y.len() < MIN_ROWS {
        hint.note = Some(format!("only {} rows", y.len()));
        return hint;
    }
    let col_std: Vec<f64> = hint.variables.iter().map(|v| v.std).collect();
    hint.parity = (0..names.len())
        .map(|v| parity_for(data, y, v, &names[v], &col_std, hint.target.std))
        .collect();
    hint.dominant_terms = dominant_terms(data, names, y);
    hint.stats_only = false;
    hint
}

/// Four significant digits, trailing zeros trimmed.
pub fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let decimals = (3 - a.log10().floor() as i32).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.3e}")
    }
}

fn parity_word(p: Parity) -> &'static str {
    match p {
        Parity::Odd => "odd",
        Parity::Even => "even",
        Parity::None => "none",
    }
}

/// Text block for the generator prompt. At most 40 lines.
pub fn render_hint(h: &DataHint) -> String {
    let mut lines: Vec<String> = Vec::new();
    lines.push("STATS".to_string());
    lines.push(format!("rows: {}", h.rows));
    let stat = |c: &ColumnStats| {
        format!(
            "{}: mean={} std={} min={} max={}",
            c.name,
            sig4(c.mean),
            sig4(c.std),
            sig4(c.min),
            sig4(c.max)
        )
    };
    for c in h.variables.iter().take(MAX_LISTED_VARS) {
        lines.push(stat(c));
    }
    if h.variables.len() > MAX_LISTED_VARS {
        lines.push(format!("({} more variables)", h.variables.len() - MAX_LISTED_VARS));
    }
    lines.push(format!("target {}", stat(&h.target)));
    let tendency = if !h.bias_tendency.is_finite() {
        "constant"
    } else if h.bias_tendency > 0.1 {
        "positive"
    } else if h.bias_tendency < -0.1 {
        "negative"
    } else {
        "centered"
    };
    lines.push(format!("bias: {tendency} (mean/std={})", sig4(h.bias_tendency)));
    if let Some(note) = &h.note {
        lines.push(format!("note: {note}"));
    }

    if !h.stats_only {
        lines.push("SYMMETRY".to_string());
        for p in h.parity.iter().take(MAX_LISTED_VARS) {
            if p.pairs < MIN_PAIRS {
                lines.push(format!("symmetry: undetermined in {} ({} mirrored pairs)", p.variable, p.pairs));
            } else if p.parity == Parity::None {
                lines.push(format!("symmetry: none in {}", p.variable));
            } else {
                lines.push(format!("symmetry: {} in {}", parity_word(p.parity), p.variable));
            }
        }
        lines.push("DOMINANT TERMS".to_string());
        for (i, t) in h.dominant_terms.iter().enumerate() {
            lines.push(format!("{}. {} (weight {})", i + 1, t.feature, sig4(t.weight)));
        }
    }

    lines.push("CONSTRAINTS".to_string());
    for c in h.variables.iter().take(MAX_LISTED_VARS).chain(std::iter::once(&h.target)) {
        let mut line = format!("{} in [{}, {}]", c.name, sig4(c.min), sig4(c.max));
        if c.min > 0.0 {
            line.push_str(", positive");
        } else if c.min >= 0.0 {
            line.push_str(", nonnegative");
        } else if c.max < 0.0 {
            line.push_str(", negative");
        }
        lines.push(line);
    }
    lines.truncate(MAX_LINES);
    let mut out = String::new();
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn single(f: impl Fn(f64) -> f64) -> DataHint {
        let xs = grid(101, -2.0, 2.0);
        let y: Vec<f64> = xs.iter().map(|x| f(*x)).collect();
        build_data_hint(&Matrix::column_vector(&xs), &["x".to_string()], &y, "y")
    }

    #[test]
    fn cubic_is_odd_with_cubic_term() {
        let h = single(|x| x * x * x);
        let p = h.parity_of("x").unwrap();
        assert_eq!(p.parity, Parity::Odd);
        assert!(p.confidence >= 0.9);
        assert_eq!(h.dominant_terms[0].feature, "x^3");
        assert!(render_hint(&h).lines().any(|l| l == "symmetry: odd in x"));
    }

    #[test]
    fn square_is_even() {
        assert_eq!(single(|x| x * x).parity_of("x").unwrap().parity, Parity::Even);
        assert_eq!(single(|x| x.abs().sqrt() + 1.0).parity_of("x").unwrap().parity, Parity::Even);
    }

    #[test]
    fn negated_odd_is_still_odd() {
        assert_eq!(single(|x| -x.sin() * 3.0).parity_of("x").unwrap().parity, Parity::Odd);
    }

    #[test]
    fn generic_function_has_no_parity() {
        assert_eq!(single(|x| x.exp()).parity_of("x").unwrap().parity, Parity::None);
    }

    #[test]
    fn interaction_term_dominates() {
        let g = grid(15, -2.0, 2.0);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for a in &g {
            for b in &g {
                rows.push([*a, *b]);
                y.push(2.0 * a * b);
            }
        }
        let names = ["x1".to_string(), "x2".to_string()];
        let h = build_data_hint(&Matrix::from_rows(2, &rows), &names, &y, "y");
        assert_eq!(h.dominant_terms[0].feature, "x1*x2");
    }

    #[test]
    fn ranking_invariant_under_affine_target_change() {
        let a = single(|x| x.sin() + 0.3 * x * x);
        let b = single(|x| 5.0 * (x.sin() + 0.3 * x * x) - 2.0);
        let names = |h: &DataHint| h.dominant_terms.iter().map(|t| t.feature.clone()).collect::<Vec<_>>();
        assert_eq!(names(&a), names(&b));
    }

    #[test]
    fn small_or_constant_data_is_stats_only() {
        let xs = grid(10, -1.0, 1.0);
        let h = build_data_hint(&Matrix::column_vector(&xs), &["x".to_string()], &xs, "y");
        assert!(h.stats_only);
        let text = render_hint(&h);
        assert!(!text.contains("SYMMETRY") && !text.contains("DOMINANT TERMS"));
        assert!(text.contains("STATS") && text.contains("CONSTRAINTS"));

        let h = single(|_| 3.0);
        assert!(h.stats_only);
        assert!(h.note.is_some());
    }

    #[test]
    fn rendering_is_bounded_and_deterministic() {
        let n = 40;
        let names: Vec<String> = (0..12).map(|i| format!("v{i}")).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..12).map(|j| ((i * 7 + j * 3) % 11) as f64 - 5.0).collect())
            .collect();
        let data = Matrix::new(n, 12, rows.concat());
        let y: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let h = build_data_hint(&data, &names, &y, "y");
        let text = render_hint(&h);
        assert!(text.lines().count() <= 40);
        assert_eq!(text, render_hint(&h));
    }

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(1.23456), "1.235");
        assert_eq!(sig4(-0.012345), "-0.01235");
        assert_eq!(sig4(2.0), "2");
        assert_eq!(sig4(123456.0), "1.235e5");
        assert_eq!(sig4(0.0), "0");
    }
}
