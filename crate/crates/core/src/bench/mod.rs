//! Datasets, ID/OOD metrics, synthetic benchmarks and reports.

mod metrics;
mod report;
mod synth;

use std::io::Write;
use std::path::Path;

pub use metrics::{
    acc_at_tau, acc_max_at_tau, evaluate_equation, evaluate_predictions, MetricsReport, SplitMetrics,
    TauMetrics, ACC_EPSILON, DEFAULT_TAUS,
};
pub use report::{render_table, RunReport};
pub use synth::{make_synthetic, SyntheticSpec, SYNTHETIC_NAMES};

use crate::data::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}: empty file")]
    Empty { path: String },
    #[error("{path}: no column named '{target}' (have {columns:?})")]
    MissingTarget {
        path: String,
        target: String,
        columns: Vec<String>,
    },
    #[error("{path}: line {line}, column {column}: cannot parse '{value}' as a finite number")]
    BadCell {
        path: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: line {line}: expected {expected} fields, found {found}")]
    Ragged {
        path: String,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("unknown synthetic dataset '{0}'")]
    UnknownSynthetic(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inputs and target of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Matrix,
    pub target: Vec<f64>,
}

impl Split {
    pub fn empty(cols: usize) -> Self {
        Split {
            inputs: Matrix::zeros(0, cols),
            target: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

/// A split read from a CSV file together with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvBlock {
    pub names: Vec<String>,
    pub target_name: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub target_name: String,
    pub train: Split,
    pub id_test: Split,
    pub ood_test: Split,
}

impl Dataset {
    /// Assembles a dataset, checking that every split shares the schema of
    /// the training block.
    pub fn from_blocks(
        train: CsvBlock,
        id_test: Option<CsvBlock>,
        ood_test: Option<CsvBlock>,
    ) -> Result<Self, BenchError> {
        if train.split.is_empty() {
            return Err(BenchError::Schema("training split has no rows".to_string()));
        }
        let cols = train.names.len();
        let take = |b: Option<CsvBlock>, label: &str| -> Result<Split, BenchError> {
            match b {
                None => Ok(Split::empty(cols)),
                Some(b) if b.names == train.names && b.target_name == train.target_name => Ok(b.split),
                Some(b) => Err(BenchError::Schema(format!(
                    "{label} columns {:?} -> {} differ from training columns {:?} -> {}",
                    b.names, b.target_name, train.names, train.target_name
                ))),
            }
        };
        let id_test = take(id_test, "id-test")?;
        let ood_test = take(ood_test, "ood-test")?;
        Ok(Dataset {
            names: train.names,
            target_name: train.target_name,
            train: train.split,
            id_test,
            ood_test,
        })
    }

    pub fn splits(&self) -> [(&'static str, &Split); 3] {
        [
            ("train", &self.train),
            ("id_test", &self.id_test),
            ("ood_test", &self.ood_test),
        ]
    }
}

/// Reads a headed CSV file, separating the `target` column. Every cell must
/// parse as a finite number.
pub fn load_csv(path: &Path, target: &str) -> Result<CsvBlock, BenchError> {
    let label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(BenchError::Empty { path: label });
    }
    let Some(t_idx) = headers.iter().position(|h| h == target) else {
        return Err(BenchError::MissingTarget {
            path: label,
            target: target.to_string(),
            columns: headers,
        });
    };
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != t_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut values = Vec::new();
    let mut y = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(BenchError::Ragged {
                path: label,
                line,
                expected: headers.len(),
                found: rec.len(),
            });
        }
        for (i, cell) in rec.iter().enumerate() {
            let v = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| BenchError::BadCell {
                    path: label.clone(),
                    line,
                    column: headers[i].clone(),
                    value: cell.to_string(),
                })?;
            if i == t_idx {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    Ok(CsvBlock {
        split: Split {
            inputs: Matrix::new(y.len(), names.len(), values),
            target: y,
        },
        names,
        target_name: target.to_string(),
    })
}

/// Writes a split as CSV with the inputs first and the target last.
pub fn write_csv<W: Write>(out: W, names: &[String], target_name: &str, split: &Split) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(target_name);
    w.write_record(&header)?;
    for (row, y) in split.inputs.iter_rows().zip(&split.target) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{y:?}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
