//! Regression datasets and two-column signal files.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column z-scoring of regression inputs, plus an affine map of the target.
///
/// The kernel sees `(x - mean) / std`; the network is trained on
/// `(y - output_mean) / output_std` and its predictions are mapped back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    #[serde(default)]
    pub output_mean: f64,
    #[serde(default = "unit")]
    pub output_std: f64,
}

fn unit() -> f64 {
    1.0
}

fn mean_std<'a>(values: impl ExactSizeIterator<Item = &'a f64> + Clone) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = values.clone().sum::<f64>() / n;
    let var = values.map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    (mu, if var > 0.0 { var.sqrt() } else { 1.0 })
}

impl Normalization {
    /// Column statistics of `inputs`, identity on the target. Columns with zero spread
    /// get unit scale.
    pub fn fit(inputs: &DMatrix<f64>) -> Self {
        let (mean, std) = inputs.column_iter().map(|col| mean_std(col.iter())).unzip();
        Normalization {
            mean,
            std,
            output_mean: 0.0,
            output_std: 1.0,
        }
    }

    /// As [`Normalization::fit`], also standardizing the target.
    pub fn fit_with_outputs(inputs: &DMatrix<f64>, outputs: &DVector<f64>) -> Self {
        let (output_mean, output_std) = mean_std(outputs.iter());
        Normalization {
            output_mean,
            output_std,
            ..Normalization::fit(inputs)
        }
    }

    pub fn scale_output(&self, y: f64) -> f64 {
        (y - self.output_mean) / self.output_std
    }

    pub fn unscale_output(&self, y: f64) -> f64 {
        self.output_mean + self.output_std * y
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: inputs.ncols(),
            });
        }
        let mut out = inputs.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|x| *x = (*x - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (mu, s))| (x - mu) / s)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: self.std.len(),
            });
        }
        if self.std.iter().chain([&self.output_std]).any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidConfig(
                "normalization std entries must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Rows of `inputs` are regressors, `outputs` the matching targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self> {
        if inputs.nrows() != outputs.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                found: outputs.len(),
            });
        }
        Ok(Dataset {
            inputs,
            outputs,
            normalization: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], outputs: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let inputs = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Dataset::new(inputs, DVector::from_vec(outputs))
    }

    /// Enables z-scoring of inputs and target with statistics of this dataset.
    pub fn normalized(mut self) -> Self {
        self.normalization = Some(Normalization::fit_with_outputs(&self.inputs, &self.outputs));
        self
    }

    pub fn with_normalization(mut self, norm: Option<Normalization>) -> Result<Self> {
        if let Some(n) = &norm {
            n.validate()?;
            if n.dim() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: n.dim(),
                });
            }
        }
        self.normalization = norm;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Raw (unnormalized) inputs.
    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// Inputs as seen by the kernel: z-scored when normalization is active.
    pub fn model_inputs(&self) -> DMatrix<f64> {
        match &self.normalization {
            Some(n) => n.apply(&self.inputs).expect("dimension checked at construction"),
            None => self.inputs.clone(),
        }
    }

    /// Targets as the network is trained on them.
    pub fn model_outputs(&self) -> DVector<f64> {
        match &self.normalization {
            Some(n) => self.outputs.map(|y| n.scale_output(y)),
            None => self.outputs.clone(),
        }
    }

    /// Sub-dataset with the given rows, keeping the normalization record.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(rows),
            outputs: self.outputs.select_rows(rows),
            normalization: self.normalization.clone(),
        }
    }

    /// Leading `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&rows)
    }
}

/// A measured input/output record.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
}

/// Parses two-column `u,y` CSV text. A non-numeric first line is treated as a header.
pub fn parse_signals(text: &str, origin: &str) -> Result<Signals> {
    parse_table(text, origin, None, 0, 1)
}

/// Parses comma-separated text with any number of columns, taking `u` and `y` from
/// the given zero-based columns.
pub fn parse_columns(text: &str, origin: &str, u_column: usize, y_column: usize) -> Result<Signals> {
    parse_table(text, origin, Some(u_column.max(y_column) + 1), u_column, y_column)
}

fn parse_table(text: &str, origin: &str, min_columns: Option<usize>, uc: usize, yc: usize) -> Result<Signals> {
    let mut u = Vec::new();
    let mut y = Vec::new();
    let mut first = true;
    let parse_error = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let header_allowed = std::mem::replace(&mut first, false);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if header_allowed => continue,
            Err(e) => return Err(parse_error(lineno + 1, format!("not a number: {e}"))),
        };
        match min_columns {
            None if values.len() != 2 => {
                return Err(parse_error(
                    lineno + 1,
                    format!("expected 2 columns, found {}", values.len()),
                ))
            }
            Some(n) if values.len() < n => {
                return Err(parse_error(
                    lineno + 1,
                    format!("expected at least {n} columns, found {}", values.len()),
                ))
            }
            _ => {}
        }
        u.push(values[uc]);
        y.push(values[yc]);
    }
    if u.is_empty() {
        return Err(parse_error(0, "no samples".into()));
    }
    Ok(Signals { u, y })
}

pub fn read_signals(path: &Path) -> Result<Signals> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_signals(&text, &path.display().to_string())
}

pub fn format_signals(signals: &Signals) -> String {
    let mut out = String::from("u,y\n");
    for (u, y) in signals.u.iter().zip(&signals.y) {
        let _ = writeln!(out, "{u},{y}");
    }
    out
}

pub fn write_signals(path: &Path, signals: &Signals) -> Result<()> {
    std::fs::write(path, format_signals(signals)).map_err(|e| Error::io(path.display().to_string(), e))
}
