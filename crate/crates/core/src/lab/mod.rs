//! Closed-form least-squares laboratory.
//!
//! Ordinary least squares, ridge and dropout solutions are all assembled in
//! the eigenbasis of `XᵀX` as `w = V (Λ + sI)⁻¹ Vᵀ Xᵀ y`, where the spectral
//! shift `s` is 0, `α` or `(1 − p) γ²`.

mod checkpoints;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::io::manifest::ManifestError;
use crate::io::{MatrixIoError, WeightMatrix};
use crate::linalg::{self, EigenError};
use crate::rng;

pub use checkpoints::{
    generate_checkpoints, make_checkpoints, reference_grid, Checkpoint, LabConfig, LabOutput, LabSummary, LayerShape,
    Scenario,
};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    MatrixIo(#[from] MatrixIoError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            LabError::Eigen(EigenError::NoConvergence { .. })
                | LabError::Write { .. }
                | LabError::MatrixIo(MatrixIoError::Io { .. })
        )
    }
}

type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(LabError::Shape("design matrix must be non-empty".into()));
        }
        if x.nrows() != y.len() {
            return Err(LabError::Shape(format!(
                "design has {} rows but there are {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("design matrix"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("targets"));
        }
        Ok(RegressionProblem { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regularizer {
    None,
    Ridge { alpha: f64 },
    Dropout { p: f64, gamma2: f64 },
}

impl Regularizer {
    pub fn shift(&self) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::Ridge { alpha } => alpha,
            Regularizer::Dropout { p, gamma2 } => (1.0 - p) * gamma2,
        }
    }
}

/// Eigendecomposition of `XᵀX`, reusable across targets and shifts.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    /// Ascending eigenvalues of `XᵀX`.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let gram = x.tr_mul(x);
        let gram = (&gram + gram.transpose()) * 0.5;
        let eig = linalg::symmetric_eigen(&gram)?;
        Ok(SpectralBasis {
            values: eig.values,
            vectors: eig.vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Modes with `λᵢ + s ≤ pinv_tol · λ_max` are excluded.
    pub fn kept(&self, shift: f64, pinv_tol: f64) -> Vec<bool> {
        let top = self.values.last().copied().unwrap_or(0.0).max(0.0);
        self.values
            .iter()
            .map(|&l| l + shift > pinv_tol * top && l + shift > 0.0)
            .collect()
    }

    /// `V (Λ + sI)⁺ Vᵀ B` for a right-hand side `B = XᵀY` with any number of
    /// columns.
    pub fn solve(&self, xty: &DMatrix<f64>, shift: f64, pinv_tol: f64) -> DMatrix<f64> {
        let mut coeffs = self.vectors.tr_mul(xty);
        for (i, keep) in self.kept(shift, pinv_tol).into_iter().enumerate() {
            let scale = if keep { 1.0 / (self.values[i] + shift) } else { 0.0 };
            coeffs.row_mut(i).scale_mut(scale);
        }
        &self.vectors * coeffs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSolution {
    pub w: Vec<f64>,
    /// Eigenvalues of `XᵀX`, ascending.
    pub eigvals: Vec<f64>,
    /// `qᵢ = vᵢᵀ Xᵀ y`.
    pub projections: Vec<f64>,
    pub regularizer: Regularizer,
    /// Modes excluded by the pseudo-inverse rule.
    pub truncated: Vec<bool>,
}

impl SpectralSolution {
    pub fn shift(&self) -> f64 {
        self.regularizer.shift()
    }

    pub fn truncated_count(&self) -> usize {
        self.truncated.iter().filter(|&&t| t).count()
    }

    pub fn norm_sq(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }
}

/// `d · ε`, the default pseudo-inverse threshold relative to `λ_max`.
pub fn default_pinv_tol(d: usize) -> f64 {
    d as f64 * f64::EPSILON
}

fn spectral_solve(prob: &RegressionProblem, regularizer: Regularizer, pinv_tol: f64) -> Result<SpectralSolution> {
    let shift = regularizer.shift();
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "spectral shift must be finite and >= 0, got {shift}"
        )));
    }
    if !(pinv_tol >= 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "pinv_tol must be >= 0, got {pinv_tol}"
        )));
    }
    let basis = SpectralBasis::new(&prob.x)?;
    let xty = prob.x.tr_mul(&prob.y);
    let q = basis.vectors.tr_mul(&xty);
    let kept = basis.kept(shift, pinv_tol);
    let coeffs = DVector::from_iterator(
        basis.dim(),
        (0..basis.dim()).map(|i| if kept[i] { q[i] / (basis.values[i] + shift) } else { 0.0 }),
    );
    let w = &basis.vectors * coeffs;
    Ok(SpectralSolution {
        w: w.iter().copied().collect(),
        eigvals: basis.values,
        projections: q.iter().copied().collect(),
        regularizer,
        truncated: kept.iter().map(|k| !k).collect(),
    })
}

/// Least squares through the eigenbasis, truncating modes with
/// `λᵢ ≤ pinv_tol · λ_max`.
pub fn ols_weights(prob: &RegressionProblem, pinv_tol: f64) -> Result<SpectralSolution> {
    spectral_solve(prob, Regularizer::None, pinv_tol)
}

pub fn ridge_weights(prob: &RegressionProblem, alpha: f64) -> Result<SpectralSolution> {
    if !(alpha >= 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "ridge alpha must be >= 0, got {alpha}"
        )));
    }
    spectral_solve(prob, Regularizer::Ridge { alpha }, default_pinv_tol(prob.x.ncols()))
}

/// Dropout as a spectral shift of `(1 − p) γ²`.
pub fn dropout_weights(prob: &RegressionProblem, p: f64, gamma2: f64) -> Result<SpectralSolution> {
    if !(0.0..1.0).contains(&p) {
        return Err(LabError::InvalidParameter(format!(
            "dropout rate must lie in [0, 1), got {p}"
        )));
    }
    if !(gamma2 >= 0.0) {
        return Err(LabError::InvalidParameter(format!("gamma2 must be >= 0, got {gamma2}")));
    }
    spectral_solve(
        prob,
        Regularizer::Dropout { p, gamma2 },
        default_pinv_tol(prob.x.ncols()),
    )
}

/// Mean of `diag(XᵀX)`.
pub fn default_gamma2(x: &DMatrix<f64>) -> f64 {
    x.column_iter().map(|c| c.norm_squared()).sum::<f64>() / x.ncols() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormDecomposition {
    /// `qᵢ² / (λᵢ + s)²` per mode, 0 for truncated modes.
    pub terms: Vec<f64>,
    pub total: f64,
}

pub fn norm_decomposition(sol: &SpectralSolution) -> NormDecomposition {
    let s = sol.shift();
    let terms: Vec<f64> = sol
        .eigvals
        .iter()
        .zip(&sol.projections)
        .zip(&sol.truncated)
        .map(|((&l, &q), &t)| if t { 0.0 } else { (q / (l + s)).powi(2) })
        .collect();
    let total = terms.iter().sum();
    NormDecomposition { terms, total }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceCheck {
    /// `tr(XᵀX)`.
    pub trace_x: f64,
    /// `2 tr(XᵀE)`.
    pub cross: f64,
    /// `tr(EᵀE)`.
    pub trace_e: f64,
    pub inflated: bool,
}

impl TraceCheck {
    /// `tr(X̃ᵀX̃)` for `X̃ = X + E`.
    pub fn total(&self) -> f64 {
        self.trace_x + self.cross + self.trace_e
    }
}

pub fn augment_trace_check(x: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<TraceCheck> {
    if x.shape() != e.shape() {
        return Err(LabError::Shape(format!(
            "perturbation shape {:?} differs from design shape {:?}",
            e.shape(),
            x.shape()
        )));
    }
    let cross = 2.0 * x.dot(e);
    let trace_e = e.norm_squared();
    Ok(TraceCheck {
        trace_x: x.norm_squared(),
        cross,
        trace_e,
        inflated: cross + trace_e > 0.0,
    })
}

fn gaussian(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn unit_vector(rng: &mut impl rand::Rng, len: usize) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(len, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// `W = σ G + s Σₖ uₖ vₖᵀ` with standard Gaussian `G` and random unit
/// vectors `uₖ ∈ ℝⁿ`, `vₖ ∈ ℝᵐ`.
pub fn synth_weight(
    n: usize,
    m: usize,
    rank: usize,
    signal_scale: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<WeightMatrix> {
    if n == 0 || m == 0 {
        return Err(LabError::InvalidParameter("matrix shape must be non-empty".into()));
    }
    if rank > n.min(m) {
        return Err(LabError::InvalidParameter(format!("rank {rank} exceeds min({n}, {m})")));
    }
    if !(signal_scale.is_finite() && noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "signal_scale {signal_scale} and noise_sigma {noise_sigma} must be finite, noise_sigma >= 0"
        )));
    }
    let mut rng = rng::seeded(seed, &[rng::tag("synth_weight")]);
    let mut w = gaussian(&mut rng, n, m) * noise_sigma;
    for _ in 0..rank {
        let u = unit_vector(&mut rng, n);
        let v = unit_vector(&mut rng, m);
        w += (u * v.transpose()) * signal_scale;
    }
    WeightMatrix::new(w, format!("synth-{n}x{m}-r{rank}"), format!("seed={seed}")).map_err(LabError::from)
}
