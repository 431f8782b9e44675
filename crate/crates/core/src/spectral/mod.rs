//! Layer correlation matrices and their eigenvalue spectra.

mod esd;
mod mp;

pub use esd::{esd, EsdHistogram};
pub use mp::{ks_to_mp, mp_cdf, mp_density, MpLaw};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::io::WeightMatrix;
use crate::linalg::{self, EigenError};

/// Relative asymmetry tolerated by [`eigenvalues_sym`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues of a correlation matrix, ascending, with near-zero values
/// removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    source_shape: (usize, usize),
    rank_cutoff: f64,
    dropped_count: usize,
}

impl Spectrum {
    /// Builds a spectrum from raw values, dropping every value `<= cutoff`.
    pub fn from_values(mut values: Vec<f64>, source_shape: (usize, usize), cutoff: f64) -> Self {
        assert!(cutoff >= 0.0, "rank cutoff must be non-negative");
        values.sort_by(f64::total_cmp);
        let first_kept = values.partition_point(|&v| v <= cutoff);
        let dropped_count = first_kept;
        values.drain(..first_kept);
        Spectrum {
            eigenvalues: values,
            source_shape,
            rank_cutoff: cutoff,
            dropped_count,
        }
    }

    /// Convenience for synthetic spectra: all positive values are retained.
    pub fn from_positive(values: Vec<f64>) -> Self {
        let n = values.len();
        Spectrum::from_values(values, (n, n), 0.0)
    }

    /// Retained eigenvalues, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn source_shape(&self) -> (usize, usize) {
        self.source_shape
    }

    pub fn rank_cutoff(&self) -> f64 {
        self.rank_cutoff
    }

    pub fn dropped_count(&self) -> usize {
        self.dropped_count
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }

    pub fn min(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }
}

/// `(1/n) WᵀW` when `m <= n`, otherwise `(1/n) WWᵀ`, where `n` is the number
/// of rows of `W`. Both share the same nonzero eigenvalues; the smaller one
/// is returned. The result is exactly symmetric.
pub fn correlation_matrix(w: &WeightMatrix) -> DMatrix<f64> {
    let data = w.data();
    let n = data.nrows() as f64;
    let mut gram = if data.ncols() <= data.nrows() {
        data.tr_mul(data)
    } else {
        data * data.transpose()
    };
    let k = gram.nrows();
    for i in 0..k {
        for j in i..k {
            let v = gram[(i, j)] / n;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    gram
}

/// Eigenvalues of a symmetric matrix assumed to be stored in double
/// precision. See [`eigenvalues_sym_with_eps`].
pub fn eigenvalues_sym(s: &DMatrix<f64>, tol: f64) -> Result<Spectrum, EigenError> {
    eigenvalues_sym_with_eps(s, tol, f64::EPSILON)
}

/// Eigenvalues of a symmetric matrix. Values at or below
/// `max(tol, dim * eps * λ_max)` are dropped and counted.
pub fn eigenvalues_sym_with_eps(s: &DMatrix<f64>, tol: f64, eps: f64) -> Result<Spectrum, EigenError> {
    linalg::check_symmetric(s, SYMMETRY_TOL)?;
    let values = if cfg!(debug_assertions) {
        let eig = linalg::symmetric_eigen(s)?;
        let residual = eig.residual(s);
        debug_assert!(residual <= 1e-10, "eigensolver residual {residual:e}");
        eig.values
    } else {
        linalg::symmetric_eigenvalues(s)?
    };
    let dim = s.nrows();
    let lambda_max = values.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = tol.max(0.0).max(dim as f64 * eps * lambda_max);
    Ok(Spectrum::from_values(values, (dim, dim), cutoff))
}

/// Spectrum of a layer's correlation matrix, using the machine epsilon of
/// the layer's storage precision for the rank cutoff.
pub fn weight_spectrum(w: &WeightMatrix) -> Result<Spectrum, EigenError> {
    let sigma = correlation_matrix(w);
    let mut spec = eigenvalues_sym_with_eps(&sigma, 0.0, w.precision.epsilon())?;
    spec.source_shape = w.shape();
    Ok(spec)
}
