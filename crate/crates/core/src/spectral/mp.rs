//! Marchenko-Pastur reference law for pure-noise correlation spectra.

use std::f64::consts::PI;

use serde::Serialize;

use super::Spectrum;
use crate::error::{Error, Result};
use crate::quad;

/// Absolute error target for CDF quadrature.
const CDF_TOL: f64 = 1e-10;

/// MP law with aspect ratio `q >= 1` and element variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpLaw {
    q: f64,
    sigma2: f64,
}

impl MpLaw {
    pub fn new(q: f64, sigma2: f64) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!("MP aspect ratio must be >= 1, got {q}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "MP variance must be positive, got {sigma2}"
            )));
        }
        Ok(MpLaw { q, sigma2 })
    }

    /// The law followed by the correlation spectrum of an `n x m` matrix of
    /// i.i.d. entries with variance `sigma2`, under the `1/n` scaling of
    /// [`super::correlation_matrix`]. For wide matrices (`n < m`) the gram is
    /// formed on the row side, which multiplies the spectrum by `m/n`.
    pub fn for_shape(n: usize, m: usize, sigma2: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("matrix shape must be non-empty".into()));
        }
        let (n, m) = (n as f64, m as f64);
        if n >= m {
            MpLaw::new(n / m, sigma2)
        } else {
            MpLaw::new(m / n, sigma2 * m / n)
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Bulk edges `(λ₋, λ₊) = σ²(1 ∓ 1/√q)²`.
    pub fn support(&self) -> (f64, f64) {
        let r = 1.0 / self.q.sqrt();
        (self.sigma2 * (1.0 - r).powi(2), self.sigma2 * (1.0 + r).powi(2))
    }

    pub fn density(&self, lambda: f64) -> f64 {
        let (lo, hi) = self.support();
        if lambda <= lo || lambda >= hi {
            return 0.0;
        }
        self.q / (2.0 * PI * self.sigma2 * lambda) * ((hi - lambda) * (lambda - lo)).sqrt()
    }

    /// CDF by quadrature. With `λ = λ₋ + (λ₊ − λ₋)(1 − cos θ)/2` the
    /// integrand becomes smooth on `[0, π]`, including the `q = 1` case.
    pub fn cdf(&self, lambda: f64) -> f64 {
        let (lo, hi) = self.support();
        if lambda <= lo {
            return 0.0;
        }
        if lambda >= hi {
            return 1.0;
        }
        let half = 0.5 * (hi - lo);
        let theta_end = (1.0 - (lambda - lo) / half).clamp(-1.0, 1.0).acos();
        let coef = self.q * half * half / (2.0 * PI * self.sigma2);
        let integrand = |theta: f64| {
            let s = theta.sin();
            let x = lo + half * (1.0 - theta.cos());
            if x <= 0.0 {
                // q = 1 at θ = 0: sin²θ / x → 2 / half.
                return coef * 2.0 / half;
            }
            coef * s * s / x
        };
        quad::integrate(integrand, 0.0, theta_end, CDF_TOL).clamp(0.0, 1.0)
    }
}

pub fn mp_density(law: &MpLaw, lambda: f64) -> f64 {
    law.density(lambda)
}

pub fn mp_cdf(law: &MpLaw, lambda: f64) -> f64 {
    law.cdf(lambda)
}

/// Kolmogorov-Smirnov distance between the retained eigenvalues and the MP
/// CDF. Returns 1 for an empty spectrum.
pub fn ks_to_mp(spec: &Spectrum, law: &MpLaw) -> f64 {
    let values = spec.eigenvalues();
    if values.is_empty() {
        return 1.0;
    }
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
