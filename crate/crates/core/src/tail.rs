//! Power-law fits `p(λ) ∝ λ^{-α}` for the upper tail of a spectrum.
//!
//! The lower cutoff is chosen by scanning every distinct eigenvalue as a
//! candidate, fitting α by continuous maximum likelihood on the values above
//! it and keeping the candidate whose fitted CDF is closest to the empirical
//! tail CDF in Kolmogorov-Smirnov distance.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::spectral::Spectrum;

/// Smallest tail a fit is attempted on.
pub const K_MIN: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailFitError {
    #[error("spectrum too small to fit: {found} positive eigenvalues, need at least {needed}")]
    TooSmall { found: usize, needed: usize },
    #[error("tail needs at least 2 values, got {0}")]
    TailTooShort(usize),
    #[error("degenerate tail: every value equals lambda_min")]
    DegenerateTail,
    #[error("tail value {value} is below lambda_min {lambda_min}")]
    BelowCutoff { value: f64, lambda_min: f64 },
    #[error("invalid power-law parameters: alpha={alpha}, lambda_min={lambda_min}")]
    InvalidParameters { alpha: f64, lambda_min: f64 },
    #[error("lambda {lambda} lies below lambda_min {lambda_min}")]
    OutsideDomain { lambda: f64, lambda_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub ks: f64,
    pub n_tail: usize,
}

/// Continuous power-law MLE, `α = 1 + n / Σ ln(λᵢ / λ_min)`.
pub fn fit_alpha_mle(tail: &[f64], lambda_min: f64) -> Result<f64, TailFitError> {
    if !(lambda_min > 0.0) {
        return Err(TailFitError::InvalidParameters {
            alpha: f64::NAN,
            lambda_min,
        });
    }
    if tail.len() < 2 {
        return Err(TailFitError::TailTooShort(tail.len()));
    }
    let mut log_sum = 0.0;
    for &v in tail {
        if v < lambda_min {
            return Err(TailFitError::BelowCutoff { value: v, lambda_min });
        }
        log_sum += (v / lambda_min).ln();
    }
    if log_sum <= 0.0 {
        return Err(TailFitError::DegenerateTail);
    }
    Ok(1.0 + tail.len() as f64 / log_sum)
}

/// `F(λ) = 1 − (λ/λ_min)^{1−α}`.
pub fn pl_cdf(lambda: f64, alpha: f64, lambda_min: f64) -> Result<f64, TailFitError> {
    if !(alpha > 1.0) || !(lambda_min > 0.0) {
        return Err(TailFitError::InvalidParameters { alpha, lambda_min });
    }
    if lambda < lambda_min {
        return Err(TailFitError::OutsideDomain { lambda, lambda_min });
    }
    Ok(1.0 - (lambda / lambda_min).powf(1.0 - alpha))
}

/// KS distance between a sorted tail sample and the fitted power law.
pub fn ks_distance(sorted_tail: &[f64], alpha: f64, lambda_min: f64) -> Result<f64, TailFitError> {
    let n = sorted_tail.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted_tail.iter().enumerate() {
        let f = pl_cdf(x, alpha, lambda_min)?;
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// One candidate cutoff evaluated on precomputed logs.
fn candidate(logs: &[f64], suffix_log_sum: f64, start: usize) -> Option<(f64, f64)> {
    let tail = &logs[start..];
    let n = tail.len() as f64;
    let log_min = tail[0];
    let spread = suffix_log_sum - n * log_min;
    if !(spread > 0.0) {
        return None;
    }
    let alpha = 1.0 + n / spread;
    let exponent = 1.0 - alpha;
    let mut d = 0.0f64;
    for (i, &lx) in tail.iter().enumerate() {
        let f = 1.0 - (exponent * (lx - log_min)).exp();
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Some((d, alpha))
}

/// Selects `λ_min` by KS minimization over the distinct eigenvalues that
/// leave at least [`K_MIN`] values in the tail. Ties go to the smaller
/// cutoff. `λ_max` is the largest eigenvalue and does not truncate the fit.
pub fn select_lambda_min(spec: &Spectrum) -> Result<PowerLawFit, TailFitError> {
    let values: Vec<f64> = spec.eigenvalues().iter().copied().filter(|&v| v > 0.0).collect();
    if values.len() < K_MIN {
        return Err(TailFitError::TooSmall {
            found: values.len(),
            needed: K_MIN,
        });
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mut suffix = vec![0.0; logs.len() + 1];
    for i in (0..logs.len()).rev() {
        suffix[i] = suffix[i + 1] + logs[i];
    }
    let last_start = values.len() - K_MIN;
    let starts: Vec<usize> = (0..=last_start)
        .filter(|&i| i == 0 || values[i] != values[i - 1])
        .collect();

    let best = starts
        .par_iter()
        .filter_map(|&i| candidate(&logs, suffix[i], i).map(|(ks, _)| (ks, i)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or(TailFitError::DegenerateTail)?;

    let start = best.1;
    let tail = &values[start..];
    let lambda_min = tail[0];
    let alpha = fit_alpha_mle(tail, lambda_min)?;
    let ks = ks_distance(tail, alpha, lambda_min)?;
    Ok(PowerLawFit {
        alpha,
        lambda_min,
        lambda_max: *values.last().expect("non-empty"),
        ks,
        n_tail: tail.len(),
    })
}
