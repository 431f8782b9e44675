use thiserror::Error;

use crate::diversity::DiversityError;
use crate::io::manifest::ManifestError;
use crate::io::MatrixIoError;
use crate::lab::LabError;
use crate::linalg::EigenError;
use crate::stats::StatsError;
use crate::tail::TailFitError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    MatrixIo(#[from] MatrixIoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    TailFit(#[from] TailFitError),
    #[error(transparent)]
    Diversity(#[from] DiversityError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("spectrum is empty")]
    EmptySpectrum,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures caused by bad input (files, schemas, shapes) as
    /// opposed to numerical breakdown.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::MatrixIo(_) | Error::Manifest(_) | Error::InvalidArgument(_) => true,
            Error::Diversity(e) => e.is_validation(),
            Error::Lab(e) => e.is_validation(),
            Error::Stats(e) => e.is_validation(),
            Error::TailFit(_) => true,
            Error::Eigen(EigenError::NotSymmetric { .. }) | Error::Eigen(EigenError::NotSquare { .. }) => true,
            Error::Eigen(_) | Error::EmptySpectrum | Error::Write { .. } => false,
        }
    }
}
