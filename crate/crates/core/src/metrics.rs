//! Per-layer scale metrics (squared Frobenius and spectral norms) and shape
//! metrics (power-law exponent, matrix entropy).

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::report::{f64_from_json, format_opt, format_sig17, json_f64, json_opt, Record};
use crate::io::WeightMatrix;
use crate::spectral::{weight_spectrum, Spectrum};
use crate::tail::select_lambda_min;

/// Marker written in CSV reports for a layer whose tail could not be fitted.
pub const UNFITTABLE: &str = "unfittable";

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMetrics {
    pub layer_id: String,
    /// Σλᵢ, equal to ‖W‖²_F / n.
    pub frobenius_sq: f64,
    /// ln(frobenius_sq); −∞ for a zero matrix.
    pub log_frobenius: f64,
    /// λ_max.
    pub spectral_sq: f64,
    pub log_spectral: f64,
    /// Power-law exponent, `None` when the spectrum is too small or degenerate.
    pub alpha: Option<f64>,
    /// Shannon entropy of the normalized eigenvalues, in nats.
    pub entropy: f64,
    /// −Σλᵢ ln λᵢ on the unnormalized eigenvalues.
    pub raw_entropy: f64,
}

/// Sum of eigenvalues. Dropped eigenvalues are numerically zero and add
/// nothing.
pub fn frobenius_sq(spec: &Spectrum) -> f64 {
    spec.eigenvalues().iter().sum()
}

pub fn spectral_sq(spec: &Spectrum) -> Result<f64> {
    spec.max().ok_or(Error::EmptySpectrum)
}

/// `(entropy, raw_entropy)`: the first on `λᵢ / Σλⱼ`, bounded by `ln k`;
/// the second on the raw eigenvalues. `0 ln 0 = 0`.
pub fn matrix_entropy(spec: &Spectrum) -> (f64, f64) {
    let plogp = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    let values = spec.eigenvalues();
    let raw = -values.iter().map(|&v| plogp(v)).sum::<f64>();
    let total = frobenius_sq(spec);
    if total <= 0.0 {
        return (0.0, raw);
    }
    let normalized = -values.iter().map(|&v| plogp(v / total)).sum::<f64>();
    (normalized.max(0.0), raw)
}

/// Metrics of an already-computed spectrum. A spectrum with no retained
/// eigenvalues (zero matrix) yields zero norms with −∞ logs.
pub fn metrics_from_spectrum(layer_id: impl Into<String>, spec: &Spectrum) -> LayerMetrics {
    let frob = frobenius_sq(spec);
    let spectral = spectral_sq(spec).unwrap_or(0.0);
    let (entropy, raw_entropy) = matrix_entropy(spec);
    let alpha = match select_lambda_min(spec) {
        Ok(fit) => Some(fit.alpha),
        Err(e) => {
            log::debug!("power-law fit skipped: {e}");
            None
        }
    };
    LayerMetrics {
        layer_id: layer_id.into(),
        frobenius_sq: frob,
        log_frobenius: frob.ln(),
        spectral_sq: spectral,
        log_spectral: spectral.ln(),
        alpha,
        entropy,
        raw_entropy,
    }
}

/// Correlation matrix, spectrum and all four metrics for one layer.
pub fn layer_metrics(w: &WeightMatrix) -> Result<LayerMetrics> {
    let spec = weight_spectrum(w)?;
    Ok(metrics_from_spectrum(w.layer_id.clone(), &spec))
}

impl Record for LayerMetrics {
    const COLUMNS: &'static [&'static str] = &[
        "layer_id",
        "frobenius_sq",
        "log_frobenius",
        "spectral_sq",
        "log_spectral",
        "alpha",
        "entropy",
        "raw_entropy",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.layer_id.clone(),
            format_sig17(self.frobenius_sq),
            format_sig17(self.log_frobenius),
            format_sig17(self.spectral_sq),
            format_sig17(self.log_spectral),
            format_opt(self.alpha, UNFITTABLE),
            format_sig17(self.entropy),
            format_sig17(self.raw_entropy),
        ]
    }

    fn to_json(&self) -> Value {
        json!({
            "layer_id": self.layer_id,
            "frobenius_sq": json_f64(self.frobenius_sq),
            "log_frobenius": json_f64(self.log_frobenius),
            "spectral_sq": json_f64(self.spectral_sq),
            "log_spectral": json_f64(self.log_spectral),
            "alpha": json_opt(self.alpha),
            "entropy": json_f64(self.entropy),
            "raw_entropy": json_f64(self.raw_entropy),
        })
    }
}

impl LayerMetrics {
    /// Parses one row written by the CSV report.
    pub fn from_fields(fields: &[&str]) -> Option<Self> {
        if fields.len() != Self::COLUMNS.len() {
            return None;
        }
        let num = |i: usize| fields[i].parse::<f64>().ok();
        Some(LayerMetrics {
            layer_id: fields[0].to_owned(),
            frobenius_sq: num(1)?,
            log_frobenius: num(2)?,
            spectral_sq: num(3)?,
            log_spectral: num(4)?,
            alpha: if fields[5] == UNFITTABLE { None } else { Some(num(5)?) },
            entropy: num(6)?,
            raw_entropy: num(7)?,
        })
    }

    /// Parses one object written by the JSON report.
    pub fn from_json(v: &Value) -> Option<Self> {
        let num = |k: &str| f64_from_json(&v[k]);
        Some(LayerMetrics {
            layer_id: v["layer_id"].as_str()?.to_owned(),
            frobenius_sq: num("frobenius_sq")?,
            log_frobenius: num("log_frobenius")?,
            spectral_sq: num("spectral_sq")?,
            log_spectral: num("log_spectral")?,
            alpha: if v["alpha"].is_null() {
                None
            } else {
                Some(num("alpha")?)
            },
            entropy: num("entropy")?,
            raw_entropy: num("raw_entropy")?,
        })
    }
}
