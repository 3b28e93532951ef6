//! Dense sensor matrices and their CSV ingestion.
//!
//! A [`TimeSeriesMatrix`] holds one reading per (device, timestamp) cell in
//! row-major order: `m` device rows by `t` timestamp columns. CSV files may
//! store either orientation; [`CsvLayout::orientation`] says which axis the
//! file's rows correspond to, and loading always yields devices-as-rows.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Which matrix axis the rows of a CSV file represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// One file row per device, one column per timestamp.
    #[default]
    DevicesAsRows,
    /// One file row per timestamp, one column per device.
    TimestampsAsRows,
}

/// Shape of a CSV file holding a sensor matrix.
#[derive(Debug, Clone, Copy)]
pub struct CsvLayout {
    pub delimiter: u8,
    pub has_header: bool,
    pub orientation: Orientation,
}

impl Default for CsvLayout {
    fn default() -> Self {
        CsvLayout {
            delimiter: b',',
            has_header: false,
            orientation: Orientation::DevicesAsRows,
        }
    }
}

/// Dense m x t matrix of finite readings, devices as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TimeSeriesMatrix {
    /// Builds a matrix from row-major values, rejecting empty shapes and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyInput);
        }
        if values.len() != rows * cols {
            return Err(Error::BlockShape {
                len: values.len(),
                rows,
                cols,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCell {
                row: index / cols,
                col: index % cols,
            });
        }
        Ok(TimeSeriesMatrix { rows, cols, values })
    }

    /// Internal constructor for values already known to be finite.
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert!(rows > 0 && cols > 0 && values.len() == rows * cols);
        debug_assert!(values.iter().all(|v| v.is_finite()));
        TimeSeriesMatrix { rows, cols, values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows.checked_mul(cols).unwrap_or(0)])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Returns the transpose as a new matrix.
    pub fn transposed(&self) -> TimeSeriesMatrix {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        TimeSeriesMatrix::from_parts(self.cols, self.rows, values)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Reads a matrix from CSV. Rows must all have the same width; cells must
    /// parse as finite numbers. Row and column indices in errors refer to the
    /// file as written (data rows counted from zero, header excluded).
    pub fn from_csv<R: Read>(reader: R, layout: &CsvLayout) -> Result<Self> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .delimiter(layout.delimiter)
            .has_headers(layout.has_header)
            .flexible(true)
            .from_reader(reader);

        let mut values: Vec<f64> = Vec::new();
        let mut width: Option<usize> = None;
        let mut row = 0usize;
        for record in csv_reader.records() {
            let record = record.map_err(csv_error)?;
            let expected = *width.get_or_insert(record.len());
            if record.len() != expected {
                return Err(Error::RaggedRow {
                    row,
                    expected,
                    found: record.len(),
                });
            }
            for (col, field) in record.iter().enumerate() {
                let text = field.trim();
                let value: f64 = text.parse().map_err(|_| Error::ParseNumber {
                    row,
                    col,
                    text: text.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(Error::NonFiniteCell { row, col });
                }
                values.push(value);
            }
            row += 1;
        }
        let width = width.filter(|&w| w > 0).ok_or(Error::EmptyInput)?;

        let parsed = TimeSeriesMatrix::from_parts(row, width, values);
        Ok(match layout.orientation {
            Orientation::DevicesAsRows => parsed,
            Orientation::TimestampsAsRows => parsed.transposed(),
        })
    }

    /// Writes the matrix as CSV in the requested orientation, no header.
    pub fn write_csv<W: Write>(&self, writer: &mut W, layout: &CsvLayout) -> Result<()> {
        let delimiter = layout.delimiter as char;
        let source;
        let oriented = match layout.orientation {
            Orientation::DevicesAsRows => self,
            Orientation::TimestampsAsRows => {
                source = self.transposed();
                &source
            }
        };
        for i in 0..oriented.rows {
            for j in 0..oriented.cols {
                if j > 0 {
                    write!(writer, "{delimiter}")?;
                }
                write!(writer, "{}", oriented.get(i, j))?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }
}

fn csv_error(err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Default relative cutoff for counting a singular value as part of the rank.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

/// Spectral summary of a matrix, from one full SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStats {
    /// Number of singular values above `rank_tolerance * sigma_1`.
    pub numerical_rank: usize,
    /// Fraction of cells that are exactly zero.
    pub sparsity: f64,
    /// Squared singular values, descending; length `min(m, t)`.
    pub eigen_spectrum: Vec<f64>,
    /// `eigen_spectrum` divided by its first entry (all zeros for a zero
    /// matrix).
    pub normalized_spectrum: Vec<f64>,
}

/// Computes rank, sparsity, and the eigenvalue spectrum of `X^T X`.
pub fn compute_stats(x: &TimeSeriesMatrix, rank_tolerance: f64) -> Result<MatrixStats> {
    if !(rank_tolerance.is_finite() && rank_tolerance >= 0.0) {
        return Err(Error::Config(format!(
            "rank tolerance must be finite and non-negative, got {rank_tolerance}"
        )));
    }
    let factors = crate::svd::svd(x)?;
    let sigma = factors.sigma();
    let numerical_rank = crate::svd::numerical_rank(sigma, rank_tolerance);

    let zeros = x.values().iter().filter(|&&v| v == 0.0).count();
    let sparsity = zeros as f64 / x.values().len() as f64;

    let eigen_spectrum: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let lambda_1 = eigen_spectrum.first().copied().unwrap_or(0.0);
    let normalized_spectrum = if lambda_1 > 0.0 {
        eigen_spectrum.iter().map(|l| l / lambda_1).collect()
    } else {
        vec![0.0; eigen_spectrum.len()]
    };

    Ok(MatrixStats {
        numerical_rank,
        sparsity,
        eigen_spectrum,
        normalized_spectrum,
    })
}
