//! Pre/post metric deltas per layer and autocorrelation-adjusted tests
//! comparing regularization categories.

mod delta;
mod htest;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::metrics::LayerMetrics;

pub use delta::{
    aggregate_mean, delta_metrics, last_layer_summary, relative_series, relative_to_baseline, AggregationOrder,
    DeltaSeries, LastLayerSummary, MeanSeries, PlotRow,
};
pub use htest::{
    adjusted_anova, anova_with_rho, compare_groups, compare_series, effective_n, group_summary, holm, lag1_autocorr,
    pairwise_t, pairwise_t_with_rho, AnovaResult, Autocorrelation, ComparisonReport, ComparisonSet, GroupSummary,
    PairEntry, PairRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("layer {0:?} has no counterpart in the other metrics list")]
    UnmatchedLayer(String),
    #[error("series mismatch: {0}")]
    Mismatch(String),
    #[error("no series to aggregate")]
    EmptyGroup,
    #[error("need at least {needed} values, got {found}")]
    TooFewValues { found: usize, needed: usize },
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("baseline category {0:?} is not present")]
    MissingBaseline(String),
    #[error("non-finite value in group {0}")]
    NonFinite(usize),
}

impl StatsError {
    pub fn is_validation(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Frobenius,
    Spectral,
    Alpha,
    Entropy,
    LogFrobenius,
    LogSpectral,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Frobenius,
        Metric::Spectral,
        Metric::Alpha,
        Metric::Entropy,
        Metric::LogFrobenius,
        Metric::LogSpectral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Frobenius => "frobenius",
            Metric::Spectral => "spectral",
            Metric::Alpha => "alpha",
            Metric::Entropy => "entropy",
            Metric::LogFrobenius => "log_frobenius",
            Metric::LogSpectral => "log_spectral",
        }
    }

    /// The metric's value for one layer; `None` for an unfittable α or a
    /// non-finite log.
    pub fn value(self, m: &LayerMetrics) -> Option<f64> {
        let v = match self {
            Metric::Frobenius => m.frobenius_sq,
            Metric::Spectral => m.spectral_sq,
            Metric::Alpha => m.alpha?,
            Metric::Entropy => m.entropy,
            Metric::LogFrobenius => m.log_frobenius,
            Metric::LogSpectral => m.log_spectral,
        };
        v.is_finite().then_some(v)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}
