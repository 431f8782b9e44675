use serde::Serialize;

use super::Spectrum;
use crate::error::{Error, Result};

/// Empirical spectral density as a normalized histogram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EsdHistogram {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
}

impl EsdHistogram {
    /// Σ densityᵢ · widthᵢ; equals 1 up to rounding.
    pub fn mass(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.bin_edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}

/// Histogram of the retained eigenvalues over `[min λ, max λ]` with `bins`
/// equal-width bins. A spectrum with a single distinct value gets a window
/// of half its magnitude on each side.
pub fn esd(spec: &Spectrum, bins: usize) -> Result<EsdHistogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let values = spec.eigenvalues();
    let (lo, hi) = match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::EmptySpectrum),
    };
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo != 0.0 { 0.5 * lo.abs() } else { 0.5 };
        (lo - pad, hi + pad)
    };
    let width = (hi - lo) / bins as f64;
    let mut bin_edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    bin_edges.push(hi);

    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let total = values.len() as f64;
    let densities = counts
        .iter()
        .zip(bin_edges.windows(2))
        .map(|(&c, e)| c as f64 / (total * (e[1] - e[0])))
        .collect();
    Ok(EsdHistogram { bin_edges, densities })
}
