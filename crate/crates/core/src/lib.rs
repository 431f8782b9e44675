//! Spectral diagnostics for neural-network weight matrices.
//!
//! The crate covers the whole analysis path from files on disk to reports:
//!
//! * [`io`] loads weight matrices and embedding sets (NPY v1.0, CSV), validates
//!   checkpoint manifests and writes JSON/CSV reports.
//! * [`spectral`] builds layer correlation matrices, solves the symmetric
//!   eigenproblem and provides the Marchenko-Pastur reference law.
//! * [`tail`] fits a power law to the upper tail of a spectrum.
//! * [`metrics`] turns a spectrum into scale and shape metrics per layer.
//! * [`diversity`] scores embedding sets with the Vendi Score and its
//!   alignment-weighted variant.
//! * [`lab`] is a closed-form least-squares laboratory for ridge, dropout and
//!   augmentation effects, including synthetic checkpoint generation.
//! * [`stats`] computes pre/post deltas and autocorrelation-adjusted tests.

pub mod diversity;
pub mod error;
pub mod io;
pub mod lab;
pub mod linalg;
pub mod metrics;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod tail;

pub use error::{Error, Result};
pub use io::{EmbeddingSet, Precision, WeightMatrix};
pub use metrics::LayerMetrics;
pub use spectral::Spectrum;
pub use tail::PowerLawFit;
