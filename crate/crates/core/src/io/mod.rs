//! Matrix, embedding and manifest ingestion plus report output.

pub mod delimited;
pub mod manifest;
pub mod npy;
pub mod report;

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{load_manifest, Category, CheckpointManifest, ManifestEntry, Role};
pub use report::{write_report, Report, ReportFormat};

#[derive(Debug, Error)]
pub enum MatrixIoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed NPY header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NPY dtype {0:?} (expected '<f8' or '<f4')")]
    UnsupportedDtype(String),
    #[error("Fortran-ordered arrays are not supported")]
    FortranOrder,
    #[error("expected a 2-D array, found shape {shape:?}")]
    BadRank { shape: Vec<usize> },
    #[error("array has no elements (shape {rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("data section holds {actual} bytes, expected {expected}")]
    Truncated { expected: usize, actual: usize },
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("CSV line {line}: expected {expected} fields, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("cannot infer matrix format from {0} (use .npy or .csv)")]
    UnknownFormat(PathBuf),
}

impl MatrixIoError {
    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            MatrixIoError::Io { .. } => "io",
            MatrixIoError::MalformedHeader(_) => "malformed-header",
            MatrixIoError::UnsupportedDtype(_) => "unsupported-dtype",
            MatrixIoError::FortranOrder => "fortran-order",
            MatrixIoError::BadRank { .. } => "rank",
            MatrixIoError::Empty { .. } => "empty",
            MatrixIoError::NonFinite { .. } => "non-finite",
            MatrixIoError::Truncated { .. } => "truncated",
            MatrixIoError::Csv { .. } => "csv-parse",
            MatrixIoError::Ragged { .. } => "csv-ragged",
            MatrixIoError::UnknownFormat(_) => "unknown-format",
        }
    }
}

/// Storage precision of the values a matrix was read from. Determines the
/// machine epsilon used for numerical-rank cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn epsilon(self) -> f64 {
        match self {
            Precision::F32 => f32::EPSILON as f64,
            Precision::F64 => f64::EPSILON,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Npy,
    Csv,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Result<Self, MatrixIoError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "npy" => Ok(MatrixFormat::Npy),
            Some(ext) if ext == "csv" || ext == "txt" => Ok(MatrixFormat::Csv),
            _ => Err(MatrixIoError::UnknownFormat(path.to_path_buf())),
        }
    }
}

fn check_values(data: &DMatrix<f64>) -> Result<(), MatrixIoError> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(MatrixIoError::Empty {
            rows: data.nrows(),
            cols: data.ncols(),
        });
    }
    for col in 0..data.ncols() {
        for row in 0..data.nrows() {
            if !data[(row, col)].is_finite() {
                return Err(MatrixIoError::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

/// One layer's 2-D weight array with its identity.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    data: DMatrix<f64>,
    pub layer_id: String,
    pub checkpoint_id: String,
    pub precision: Precision,
}

impl WeightMatrix {
    pub fn new(
        data: DMatrix<f64>,
        layer_id: impl Into<String>,
        checkpoint_id: impl Into<String>,
    ) -> Result<Self, MatrixIoError> {
        check_values(&data)?;
        Ok(WeightMatrix {
            data,
            layer_id: layer_id.into(),
            checkpoint_id: checkpoint_id.into(),
            precision: Precision::F64,
        })
    }

    /// Rounds every entry to the given precision and records it.
    pub fn with_precision(mut self, precision: Precision) -> Self {
        if precision == Precision::F32 {
            self.data.apply(|v| *v = *v as f32 as f64);
        }
        self.precision = precision;
        self
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }
}

/// An n x d matrix of sample embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: DMatrix<f64>,
    pub label: String,
}

impl EmbeddingSet {
    pub fn new(data: DMatrix<f64>, label: impl Into<String>) -> Result<Self, MatrixIoError> {
        check_values(&data)?;
        Ok(EmbeddingSet {
            data,
            label: label.into(),
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, MatrixIoError> {
    std::fs::read(path).map_err(|source| MatrixIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a raw 2-D array and the precision it was stored in.
pub fn read_array(path: &Path, format: MatrixFormat) -> Result<(DMatrix<f64>, Precision), MatrixIoError> {
    let bytes = read_file(path)?;
    match format {
        MatrixFormat::Npy => npy::decode(&bytes),
        MatrixFormat::Csv => delimited::decode(&bytes).map(|m| (m, Precision::F64)),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a weight matrix. The layer id defaults to the file stem; the
/// checkpoint id is left empty for the caller to fill in.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<WeightMatrix, MatrixIoError> {
    let (data, precision) = read_array(path, format)?;
    let mut w = WeightMatrix::new(data, file_stem(path), "")?;
    w.precision = precision;
    Ok(w)
}

pub fn load_embeddings(path: &Path, format: MatrixFormat) -> Result<EmbeddingSet, MatrixIoError> {
    let (data, _) = read_array(path, format)?;
    EmbeddingSet::new(data, file_stem(path))
}

/// Writes a matrix as NPY (`<f8`) or headerless CSV, chosen by `format`.
pub fn save_matrix(path: &Path, data: &DMatrix<f64>, format: MatrixFormat) -> Result<(), MatrixIoError> {
    let bytes = match format {
        MatrixFormat::Npy => npy::encode(data),
        MatrixFormat::Csv => delimited::encode(data).into_bytes(),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| MatrixIoError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, bytes).map_err(|source| MatrixIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}
