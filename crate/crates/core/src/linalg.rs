//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by the implicit-shift QL iteration.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: max |a_ij - a_ji| = {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("QL iteration failed to converge for eigenvalue {index}")]
    NoConvergence { index: usize },
}

/// Sweeps allowed per eigenvalue before giving up.
const MAX_ITER_PER_VALUE: usize = 60;

/// Eigenvalues in ascending order with matching unit eigenvectors stored as
/// the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// ‖A − QΛQᵀ‖_F / max(‖A‖_F, tiny).
    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(lam);
        }
        let recon = scaled * self.vectors.transpose();
        let diff = (a - recon).norm();
        debug_assert_eq!(a.nrows(), n);
        diff / a.norm().max(f64::MIN_POSITIVE)
    }
}

/// Largest |a_ij − a_ji|.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Rejects non-square, non-finite or asymmetric input. Asymmetry is
/// measured against `rel_tol * ‖A‖_F`.
pub fn check_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> Result<(), EigenError> {
    if a.nrows() != a.ncols() {
        return Err(EigenError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let tolerance = rel_tol * a.norm();
    let asym = asymmetry(a);
    if asym > tolerance {
        return Err(EigenError::NotSymmetric {
            asymmetry: asym,
            tolerance,
        });
    }
    Ok(())
}

/// Full eigendecomposition. Only the symmetric part of `a` is used.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen, EigenError> {
    let mut work = Workspace::new(a)?;
    work.tridiagonalize(true);
    work.ql(true)?;
    Ok(work.finish())
}

/// Eigenvalues only, ascending. Skips all eigenvector accumulation.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>, EigenError> {
    let mut work = Workspace::new(a)?;
    work.tridiagonalize(false);
    work.ql(false)?;
    let mut d = work.d;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

struct Workspace {
    n: usize,
    /// Row-major n x n; holds the matrix, then the accumulated transforms.
    v: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
}

impl Workspace {
    fn new(a: &DMatrix<f64>) -> Result<Self, EigenError> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(EigenError::NotSquare {
                rows: n,
                cols: a.ncols(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(EigenError::NonFinite);
        }
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                v[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
            }
        }
        Ok(Workspace {
            n,
            v,
            d: vec![0.0; n],
            e: vec![0.0; n],
        })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, x: f64) {
        self.v[i * self.n + j] = x;
    }

    /// Householder reduction. Afterwards `d` holds the diagonal and
    /// `e[1..]` the subdiagonal of the tridiagonal matrix.
    fn tridiagonalize(&mut self, vectors: bool) {
        let n = self.n;
        if n == 0 {
            return;
        }
        for j in 0..n {
            self.d[j] = self.at(n - 1, j);
        }
        for i in (1..n).rev() {
            let mut scale = 0.0;
            let mut h = 0.0;
            for k in 0..i {
                scale += self.d[k].abs();
            }
            if scale == 0.0 {
                self.e[i] = self.d[i - 1];
                for j in 0..i {
                    self.d[j] = self.at(i - 1, j);
                    self.set(i, j, 0.0);
                    self.set(j, i, 0.0);
                }
            } else {
                for k in 0..i {
                    self.d[k] /= scale;
                    h += self.d[k] * self.d[k];
                }
                let mut f = self.d[i - 1];
                let mut g = h.sqrt();
                if f > 0.0 {
                    g = -g;
                }
                self.e[i] = scale * g;
                h -= f * g;
                self.d[i - 1] = f - g;
                for j in 0..i {
                    self.e[j] = 0.0;
                }
                for j in 0..i {
                    f = self.d[j];
                    self.set(j, i, f);
                    g = self.e[j] + self.at(j, j) * f;
                    for k in (j + 1)..i {
                        let vkj = self.at(k, j);
                        g += vkj * self.d[k];
                        self.e[k] += vkj * f;
                    }
                    self.e[j] = g;
                }
                f = 0.0;
                for j in 0..i {
                    self.e[j] /= h;
                    f += self.e[j] * self.d[j];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    self.e[j] -= hh * self.d[j];
                }
                for j in 0..i {
                    f = self.d[j];
                    g = self.e[j];
                    for k in j..i {
                        let x = self.at(k, j) - (f * self.e[k] + g * self.d[k]);
                        self.set(k, j, x);
                    }
                    self.d[j] = self.at(i - 1, j);
                    self.set(i, j, 0.0);
                }
            }
            self.d[i] = h;
        }

        if vectors {
            for i in 0..n - 1 {
                let vii = self.at(i, i);
                self.set(n - 1, i, vii);
                self.set(i, i, 1.0);
                let h = self.d[i + 1];
                if h != 0.0 {
                    for k in 0..=i {
                        self.d[k] = self.at(k, i + 1) / h;
                    }
                    for j in 0..=i {
                        let mut g = 0.0;
                        for k in 0..=i {
                            g += self.at(k, i + 1) * self.at(k, j);
                        }
                        for k in 0..=i {
                            let x = self.at(k, j) - g * self.d[k];
                            self.set(k, j, x);
                        }
                    }
                }
                for k in 0..=i {
                    self.set(k, i + 1, 0.0);
                }
            }
            for j in 0..n {
                self.d[j] = self.at(n - 1, j);
                self.set(n - 1, j, 0.0);
            }
            self.set(n - 1, n - 1, 1.0);
        } else {
            // The reduced diagonal is left on the diagonal of the workspace.
            for j in 0..n {
                self.d[j] = self.at(j, j);
            }
        }
        self.e[0] = 0.0;
    }

    /// Implicit QL on the tridiagonal matrix; rotations are applied to the
    /// accumulated transforms when `vectors` is set.
    fn ql(&mut self, vectors: bool) -> Result<(), EigenError> {
        let n = self.n;
        if n == 0 {
            return Ok(());
        }
        for i in 1..n {
            self.e[i - 1] = self.e[i];
        }
        self.e[n - 1] = 0.0;

        let eps = f64::EPSILON;
        let mut f = 0.0;
        let mut tst1 = 0.0f64;
        for l in 0..n {
            tst1 = tst1.max(self.d[l].abs() + self.e[l].abs());
            let mut m = l;
            while m < n - 1 && self.e[m].abs() > eps * tst1 {
                m += 1;
            }
            if m > l {
                let mut iter = 0;
                loop {
                    iter += 1;
                    if iter > MAX_ITER_PER_VALUE {
                        return Err(EigenError::NoConvergence { index: l });
                    }
                    let mut g = self.d[l];
                    let mut p = (self.d[l + 1] - g) / (2.0 * self.e[l]);
                    let mut r = p.hypot(1.0);
                    if p < 0.0 {
                        r = -r;
                    }
                    self.d[l] = self.e[l] / (p + r);
                    self.d[l + 1] = self.e[l] * (p + r);
                    let dl1 = self.d[l + 1];
                    let mut h = g - self.d[l];
                    for i in (l + 2)..n {
                        self.d[i] -= h;
                    }
                    f += h;

                    p = self.d[m];
                    let mut c = 1.0;
                    let mut c2 = c;
                    let mut c3 = c;
                    let el1 = self.e[l + 1];
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for i in (l..m).rev() {
                        c3 = c2;
                        c2 = c;
                        s2 = s;
                        g = c * self.e[i];
                        h = c * p;
                        r = p.hypot(self.e[i]);
                        self.e[i + 1] = s * r;
                        s = self.e[i] / r;
                        c = p / r;
                        p = c * self.d[i] - s * g;
                        self.d[i + 1] = h + s * (c * g + s * self.d[i]);
                        if vectors {
                            for k in 0..n {
                                let hk = self.at(k, i + 1);
                                let vki = self.at(k, i);
                                self.set(k, i + 1, s * vki + c * hk);
                                self.set(k, i, c * vki - s * hk);
                            }
                        }
                    }
                    p = -s * s2 * c3 * el1 * self.e[l] / dl1;
                    self.e[l] = s * p;
                    self.d[l] = c * p;
                    if self.e[l].abs() <= eps * tst1 {
                        break;
                    }
                }
            }
            self.d[l] += f;
            self.e[l] = 0.0;
        }
        Ok(())
    }

    fn finish(self) -> SymmetricEigen {
        let n = self.n;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.d[a].total_cmp(&self.d[b]));
        let values = order.iter().map(|&i| self.d[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| self.v[r * n + order[c]]);
        SymmetricEigen { values, vectors }
    }
}
