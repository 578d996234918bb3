use std::fmt::Write as _;

use serde::Serialize;

use super::MetricsReport;

/// JSON summary of a discovery run. `generated_at` is the only
/// nondeterministic field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub generated_at: Option<String>,
    pub equation: String,
    pub theta: Vec<f64>,
    pub train_nmse: f64,
    pub score: f64,
    pub termination: String,
    pub iterations: u64,
    pub evaluations: usize,
    pub config: serde_json::Value,
    pub metrics: MetricsReport,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn fmt_nmse(v: Option<f64>) -> String {
    match v {
        None => "-".to_string(),
        Some(v) if v.is_infinite() => "inf".to_string(),
        Some(v) => format!("{v:.3e}"),
    }
}

/// Plain-text table, one row per split with NMSE and each tolerance.
pub fn render_table(m: &MetricsReport) -> String {
    let taus: Vec<f64> = m
        .splits
        .first()
        .map(|s| s.taus.iter().map(|t| t.tau).collect())
        .unwrap_or_default();
    let mut out = format!("{:<10} {:>6} {:>11}", "split", "rows", "nmse");
    for tau in &taus {
        let _ = write!(out, " {:>12} {:>12}", format!("acc@{tau}"), format!("accmax@{tau}"));
    }
    out.push('\n');
    for s in &m.splits {
        let _ = write!(out, "{:<10} {:>6} {:>11}", s.split, s.rows, fmt_nmse(s.nmse));
        for t in &s.taus {
            let _ = write!(out, " {:>11.2}% {:>12}", 100.0 * t.acc, t.acc_max);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "relative error denominator: |y| + {:e}", m.acc_epsilon);
    out
}
