//! Vendi Score and alignment-weighted Vendi Score for embedding sets.
//!
//! The Vendi Score is the exponential of the Shannon entropy of the
//! eigenvalues of `K/n`, where `K` is an `n x n` similarity kernel with unit
//! diagonal. It reads as an effective number of distinct samples: 1 for
//! identical samples, `n` for mutually orthogonal ones.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde_json::{json, Value};
use thiserror::Error;

use crate::io::report::{format_opt, format_sig17, json_f64, json_opt, Record};
use crate::io::EmbeddingSet;
use crate::linalg::{self, EigenError};
use crate::rng;

#[derive(Debug, Error)]
pub enum DiversityError {
    #[error("row {row} has zero norm; the cosine kernel is undefined")]
    ZeroNormRow { row: usize },
    #[error("alignment requires paired datasets: shapes {left:?} and {right:?} differ")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("alignment is undefined for an all-zero embedding matrix")]
    ZeroMatrix,
    #[error("kernel is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("kernel matrix is empty")]
    EmptyKernel,
    #[error("mixing ratio {0} must lie in [0, 1]")]
    InvalidRatio(f64),
    #[error("need {needed} synthetic rows, found {found}")]
    NotEnoughSynthetic { needed: usize, found: usize },
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

impl DiversityError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, DiversityError::Eigen(EigenError::NoConvergence { .. }))
    }
}

type Result<T> = std::result::Result<T, DiversityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelKind {
    #[default]
    Cosine,
    Linear,
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cosine" => Ok(KernelKind::Cosine),
            "linear" => Ok(KernelKind::Linear),
            other => Err(format!("unknown kernel {other:?} (expected cosine or linear)")),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Cosine => "cosine",
            KernelKind::Linear => "linear",
        })
    }
}

/// Similarity function. `centering` subtracts the column means from the
/// embeddings before the kernel is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub centering: bool,
}

/// Rows of the feature map whose gram matrix is the kernel.
fn features(x: &EmbeddingSet, spec: KernelSpec) -> Result<DMatrix<f64>> {
    let mut phi = x.data().clone();
    if spec.centering {
        for mut col in phi.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
    }
    if spec.kind == KernelKind::Cosine {
        for (row, mut r) in phi.row_iter_mut().enumerate() {
            let norm = r.norm();
            if norm == 0.0 {
                return Err(DiversityError::ZeroNormRow { row });
            }
            r /= norm;
        }
    }
    Ok(phi)
}

/// `n x n` similarity matrix. The cosine kernel has an exact unit diagonal.
pub fn similarity_kernel(x: &EmbeddingSet, spec: KernelSpec) -> Result<DMatrix<f64>> {
    let phi = features(x, spec)?;
    let mut k = &phi * phi.transpose();
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            k[(j, i)] = k[(i, j)];
        }
        if spec.kind == KernelKind::Cosine {
            k[(i, i)] = 1.0;
        }
    }
    Ok(k)
}

/// `exp(−Σ λᵢ ln λᵢ)` over the eigenvalues of `scaled`, after checking the
/// PSD tolerance `−1e-10 · ‖scaled‖_F`.
fn entropy_exp(scaled: &DMatrix<f64>) -> Result<f64> {
    let values = linalg::symmetric_eigenvalues(scaled)?;
    let floor = -1e-10 * scaled.norm();
    if let Some(&min) = values.first() {
        if min < floor {
            return Err(DiversityError::NotPsd { min_eigenvalue: min });
        }
    }
    let h: f64 = values.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    Ok(h.exp())
}

/// Vendi Score of a kernel matrix: eigenvalues of `K/n`, entropy, exponent.
pub fn vendi_score(k: &DMatrix<f64>) -> Result<f64> {
    let n = k.nrows();
    if n == 0 {
        return Err(DiversityError::EmptyKernel);
    }
    linalg::check_symmetric(k, 1e-10)?;
    entropy_exp(&(k / n as f64))
}

/// Vendi Score straight from embeddings. When there are more samples than
/// dimensions the `d x d` feature gram is decomposed instead of the kernel;
/// its nonzero spectrum is the same.
pub fn vendi_score_embeddings(x: &EmbeddingSet, spec: KernelSpec) -> Result<f64> {
    let n = x.samples();
    if n > x.dims() {
        let phi = features(x, spec)?;
        let gram = phi.tr_mul(&phi) / n as f64;
        let gram = (&gram + gram.transpose()) * 0.5;
        entropy_exp(&gram)
    } else {
        vendi_score(&similarity_kernel(x, spec)?)
    }
}

/// `⟨X, X̃⟩_F / (‖X‖_F ‖X̃‖_F)` for index-aligned datasets of equal shape.
pub fn alignment_rho(x: &EmbeddingSet, xt: &EmbeddingSet) -> Result<f64> {
    let (a, b) = (x.data(), xt.data());
    if a.shape() != b.shape() {
        return Err(DiversityError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (ssa, ssb) = (a.dot(a), b.dot(b));
    if ssa == 0.0 || ssb == 0.0 {
        return Err(DiversityError::ZeroMatrix);
    }
    // sqrt of the product keeps ρ(X, ±X) = ±1 exact
    let denom = match (ssa * ssb).sqrt() {
        d if d.is_finite() && d > 0.0 => d,
        _ => ssa.sqrt() * ssb.sqrt(),
    };
    Ok((a.dot(b) / denom).clamp(-1.0, 1.0))
}

/// Cosine similarity of the two mean embeddings. Defined for datasets of
/// different sizes; reported separately from [`alignment_rho`].
pub fn centroid_rho(x: &EmbeddingSet, xt: &EmbeddingSet) -> Result<f64> {
    if x.dims() != xt.dims() {
        return Err(DiversityError::DimensionMismatch {
            left: x.dims(),
            right: xt.dims(),
        });
    }
    let ca = x.data().row_mean();
    let cb = xt.data().row_mean();
    let (na, nb) = (ca.norm(), cb.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(DiversityError::ZeroMatrix);
    }
    Ok((ca.dot(&cb) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub label: String,
    pub n: usize,
    pub vs: f64,
    pub rho: Option<f64>,
    pub weighted_vs: Option<f64>,
    /// Centroid-cosine fallback for unpaired datasets; never substituted
    /// for `rho`.
    pub rho_centroid: Option<f64>,
}

impl DiversityReport {
    pub fn unpaired(x: &EmbeddingSet, spec: KernelSpec) -> Result<Self> {
        Ok(DiversityReport {
            label: x.label.clone(),
            n: x.samples(),
            vs: vendi_score_embeddings(x, spec)?,
            rho: None,
            weighted_vs: None,
            rho_centroid: None,
        })
    }
}

/// Weighted Vendi Score `ρ(X, X̃) · VS(X̃)`.
pub fn weighted_vendi(x: &EmbeddingSet, xt: &EmbeddingSet, spec: KernelSpec) -> Result<DiversityReport> {
    let rho = alignment_rho(x, xt)?;
    let vs = vendi_score_embeddings(xt, spec)?;
    Ok(DiversityReport {
        label: xt.label.clone(),
        n: xt.samples(),
        vs,
        rho: Some(rho),
        weighted_vs: Some(rho * vs),
        rho_centroid: None,
    })
}

impl Record for DiversityReport {
    const COLUMNS: &'static [&'static str] = &["label", "n", "vs", "rho", "weighted_vs", "rho_centroid"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            self.n.to_string(),
            format_sig17(self.vs),
            format_opt(self.rho, ""),
            format_opt(self.weighted_vs, ""),
            format_opt(self.rho_centroid, ""),
        ]
    }

    fn to_json(&self) -> Value {
        json!({
            "label": self.label,
            "n": self.n,
            "vs": json_f64(self.vs),
            "rho": json_opt(self.rho),
            "weighted_vs": json_opt(self.weighted_vs),
            "rho_centroid": json_opt(self.rho_centroid),
        })
    }
}

/// One point of a synthetic-replacement sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingPoint {
    pub ratio: f64,
    pub replaced: usize,
    pub report: DiversityReport,
}

impl Record for MixingPoint {
    const COLUMNS: &'static [&'static str] = &["ratio", "replaced", "n", "vs", "rho", "weighted_vs"];

    fn fields(&self) -> Vec<String> {
        vec![
            format_sig17(self.ratio),
            self.replaced.to_string(),
            self.report.n.to_string(),
            format_sig17(self.report.vs),
            format_opt(self.report.rho, ""),
            format_opt(self.report.weighted_vs, ""),
        ]
    }

    fn to_json(&self) -> Value {
        json!({
            "ratio": json_f64(self.ratio),
            "replaced": self.replaced,
            "report": Record::to_json(&self.report),
        })
    }
}

/// Replaces a fraction `r` of the rows of `real` by synthetic rows for each
/// ratio and scores the result against `real`. Replaced row sets are nested
/// across ratios (a prefix of one seeded permutation), and the dataset size
/// stays constant.
pub fn mixing_sweep(
    real: &EmbeddingSet,
    synthetic: &EmbeddingSet,
    ratios: &[f64],
    spec: KernelSpec,
    seed: u64,
) -> Result<Vec<MixingPoint>> {
    if real.dims() != synthetic.dims() {
        return Err(DiversityError::DimensionMismatch {
            left: real.dims(),
            right: synthetic.dims(),
        });
    }
    let n = real.samples();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed, &[0x004d_4958]));
    ratios
        .iter()
        .map(|&ratio| {
            if !(0.0..=1.0).contains(&ratio) {
                return Err(DiversityError::InvalidRatio(ratio));
            }
            let replaced = (ratio * n as f64).round() as usize;
            if replaced > synthetic.samples() {
                return Err(DiversityError::NotEnoughSynthetic {
                    needed: replaced,
                    found: synthetic.samples(),
                });
            }
            let mut mixed = real.data().clone();
            for (src, &dst) in order[..replaced].iter().enumerate() {
                mixed.set_row(dst, &synthetic.data().row(src));
            }
            let mixed = EmbeddingSet::new(mixed, format!("{}@{ratio}", synthetic.label))
                .expect("rows copied from validated sets");
            Ok(MixingPoint {
                ratio,
                replaced,
                report: weighted_vendi(real, &mixed, spec)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use spectralens_oracles as oracle;

    fn set(m: DMatrix<f64>) -> EmbeddingSet {
        EmbeddingSet::new(m, "x").unwrap()
    }

    #[test]
    fn identical_rows_kernel() {
        let x = set(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]));
        let k = similarity_kernel(&x, KernelSpec::default()).unwrap();
        assert_eq!(k, DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn orthogonal_rows_kernel() {
        let x = set(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(
            similarity_kernel(&x, KernelSpec::default()).unwrap(),
            DMatrix::identity(2, 2)
        );
    }

    #[test]
    fn kernel_matches_double_loop() {
        let mut rng = oracle::rng(10);
        let g = oracle::gaussian_matrix(&mut rng, 10, 3);
        let k = similarity_kernel(&set(g.clone()), KernelSpec::default()).unwrap();
        let naive = oracle::naive_cosine_kernel(&g);
        assert!((k - naive).abs().max() <= 1e-12);
        let lin = similarity_kernel(
            &set(g.clone()),
            KernelSpec {
                kind: KernelKind::Linear,
                centering: false,
            },
        )
        .unwrap();
        assert!((lin - &g * g.transpose()).abs().max() <= 1e-12);
    }

    #[test]
    fn zero_row_rejected_for_cosine() {
        let x = set(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(
            similarity_kernel(&x, KernelSpec::default()),
            Err(DiversityError::ZeroNormRow { row: 1 })
        ));
    }

    #[test]
    fn vendi_extremes() {
        assert!((vendi_score(&DMatrix::from_element(7, 7, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((vendi_score(&DMatrix::identity(7, 7)).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn vendi_two_by_two() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let expected = (-(0.75f64 * 0.75f64.ln()) - 0.25 * 0.25f64.ln()).exp();
        assert!((vendi_score(&k).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 1.7548).abs() < 1e-4);
    }

    #[test]
    fn non_psd_rejected() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(vendi_score(&k), Err(DiversityError::NotPsd { .. })));
    }

    #[test]
    fn feature_gram_shortcut_agrees() {
        let mut rng = oracle::rng(12);
        for kind in [KernelKind::Cosine, KernelKind::Linear] {
            for centering in [false, true] {
                let spec = KernelSpec { kind, centering };
                let x = set(oracle::gaussian_matrix(&mut rng, 60, 5));
                let via_kernel = vendi_score(&similarity_kernel(&x, spec).unwrap()).unwrap();
                let via_gram = vendi_score_embeddings(&x, spec).unwrap();
                assert!((via_kernel - via_gram).abs() < 1e-9 * via_kernel, "{kind} {centering}");
            }
        }
    }

    #[test]
    fn alignment_cases() {
        let mut rng = oracle::rng(13);
        let g = oracle::gaussian_matrix(&mut rng, 12, 4);
        let x = set(g.clone());
        assert_eq!(alignment_rho(&x, &x).unwrap(), 1.0);
        assert_eq!(alignment_rho(&x, &set(-g.clone())).unwrap(), -1.0);
        let e = oracle::orthogonal_perturbation(&mut rng, &g);
        let rho = alignment_rho(&x, &set(&g + e)).unwrap();
        assert!((rho - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);

        let other = set(oracle::gaussian_matrix(&mut rng, 11, 4));
        let err = alignment_rho(&x, &other).unwrap_err();
        assert!(err.to_string().contains("alignment requires paired datasets"));
        assert!(centroid_rho(&x, &other).is_ok());
        assert!(matches!(
            alignment_rho(&x, &set(DMatrix::zeros(12, 4))),
            Err(DiversityError::ZeroMatrix)
        ));
    }

    #[test]
    fn weighted_cases() {
        let mut rng = oracle::rng(14);
        let g = oracle::gaussian_matrix(&mut rng, 15, 6);
        let x = set(g.clone());
        let spec = KernelSpec::default();
        let vs = vendi_score_embeddings(&x, spec).unwrap();
        let same = weighted_vendi(&x, &x, spec).unwrap();
        assert_eq!(same.weighted_vs, Some(vs));
        let neg = weighted_vendi(&x, &set(-g.clone()), spec).unwrap();
        assert!((neg.weighted_vs.unwrap() + vs).abs() < 1e-12);

        let perm: Vec<usize> = (0..15).rev().collect();
        let permuted = set(DMatrix::from_fn(15, 6, |r, c| g[(perm[r], c)]));
        let rep = weighted_vendi(&x, &permuted, spec).unwrap();
        assert!((rep.vs - vs).abs() < 1e-10);
        assert!(rep.rho.unwrap() < 1.0);
        assert_eq!(rep.weighted_vs, Some(rep.rho.unwrap() * rep.vs));
    }

    #[test]
    fn mixing_sweep_rho_is_monotone() {
        let mut rng = oracle::rng(15);
        let real = set(oracle::gaussian_matrix(&mut rng, 200, 16));
        let synth = EmbeddingSet::new(oracle::gaussian_matrix(&mut rng, 200, 16), "syn").unwrap();
        let ratios = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
        let sweep = mixing_sweep(&real, &synth, &ratios, KernelSpec::default(), 1).unwrap();
        assert_eq!(sweep.len(), 6);
        let rhos: Vec<f64> = sweep.iter().map(|p| p.report.rho.unwrap()).collect();
        assert!(rhos.windows(2).all(|w| w[1] < w[0]), "{rhos:?}");
        assert_eq!(sweep[5].replaced, 200);
        assert!(mixing_sweep(&real, &synth, &[1.5], KernelSpec::default(), 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn vendi_bounds_and_permutation(n in 1usize..25, d in 1usize..8, seed in any::<u64>()) {
            let mut rng = oracle::rng(seed);
            let g = oracle::gaussian_matrix(&mut rng, n, d);
            let spec = KernelSpec::default();
            let vs = vendi_score(&similarity_kernel(&set(g.clone()), spec).unwrap()).unwrap();
            prop_assert!(vs >= 1.0 - 1e-12 && vs <= n as f64 + 1e-9);
            let rev = set(DMatrix::from_fn(n, d, |r, c| g[(n - 1 - r, c)]));
            let vs_rev = vendi_score(&similarity_kernel(&rev, spec).unwrap()).unwrap();
            prop_assert!((vs - vs_rev).abs() <= 1e-10 * vs);
        }

        #[test]
        fn duplication_preserves_vendi(n in 1usize..20, d in 1usize..6, seed in any::<u64>()) {
            let mut rng = oracle::rng(seed);
            let g = oracle::gaussian_matrix(&mut rng, n, d);
            let doubled = DMatrix::from_fn(2 * n, d, |r, c| g[(r % n, c)]);
            let spec = KernelSpec::default();
            let a = vendi_score(&similarity_kernel(&set(g), spec).unwrap()).unwrap();
            let b = vendi_score(&similarity_kernel(&set(doubled), spec).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }

        #[test]
        fn rho_symmetry_and_scaling(seed in any::<u64>(), c in -10.0f64..10.0) {
            prop_assume!(c.abs() > 1e-3);
            let mut rng = oracle::rng(seed);
            let a = oracle::gaussian_matrix(&mut rng, 9, 4);
            let b = oracle::gaussian_matrix(&mut rng, 9, 4);
            let ab = alignment_rho(&set(a.clone()), &set(b.clone())).unwrap();
            let ba = alignment_rho(&set(b.clone()), &set(a.clone())).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-15);
            let scaled = alignment_rho(&set(a * c), &set(b)).unwrap();
            prop_assert!((scaled - c.signum() * ab).abs() <= 1e-12);
        }
    }
}
