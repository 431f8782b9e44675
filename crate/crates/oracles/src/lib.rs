//! Reference computations for the test suites.
//!
//! Everything here is deliberately naive and shares no code with the
//! `spectralens` implementation: cyclic Jacobi instead of tridiagonal QL,
//! tanh-sinh quadrature directly in the original variable, brute-force
//! double loops, inverse-CDF samplers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    (&g + g.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Sweeps stop once the off-diagonal Frobenius norm falls below
/// `1e-13 ‖A‖_F`, which bounds every eigenvalue error by the same amount.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    // row-major copy; symmetry is maintained explicitly
    let mut m: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        if off.sqrt() <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[p * n + k];
                    let akq = m[q * n + k];
                    let new_p = c * akp - s * akq;
                    let new_q = s * akp + c * akq;
                    m[p * n + k] = new_p;
                    m[k * n + p] = new_p;
                    m[q * n + k] = new_q;
                    m[k * n + q] = new_q;
                }
                m[p * n + p] -= t * apq;
                m[q * n + q] += t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration_max(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.7).sin() * 0.1);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        let v_next = w / norm;
        let converged = (next - lambda).abs() <= 1e-15 * next.abs() && (&v_next - &v).norm() < 1e-12;
        lambda = next;
        v = v_next;
        if converged {
            break;
        }
    }
    lambda
}

/// Least squares through Householder QR (nalgebra), independent of any
/// eigendecomposition.
pub fn qr_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).expect("full-rank design")
}

/// Solves a dense linear system through LU.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().lu().solve(b).expect("non-singular system")
}

/// Tanh-sinh quadrature on a finite interval. Tolerates integrable endpoint
/// singularities; the integrand is never evaluated exactly at an endpoint.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    assert!(b > a);
    let half = 0.5 * (b - a);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let node = |t: f64| -> Option<(f64, f64)> {
        let s = pi2 * t.sinh();
        let x = if s < 0.0 {
            a + (b - a) / (1.0 + (-2.0 * s).exp())
        } else {
            b - (b - a) / (1.0 + (2.0 * s).exp())
        };
        if x <= a || x >= b {
            return None;
        }
        let w = half * pi2 * t.cosh() / (s.cosh() * s.cosh());
        if !w.is_finite() {
            return None;
        }
        Some((x, w))
    };
    let tmax = 4.0;
    let mut h = 0.5;
    let mut sum = {
        let mut acc = 0.0;
        let mut k = -((tmax / h) as i64);
        while (k as f64) * h <= tmax {
            if let Some((x, w)) = node(k as f64 * h) {
                acc += w * f(x);
            }
            k += 1;
        }
        acc
    };
    let mut estimate = sum * h;
    for _level in 0..12 {
        h *= 0.5;
        // New nodes are the odd multiples of the halved step.
        let mut acc = 0.0;
        let kmax = (tmax / h) as i64;
        let mut k = -kmax;
        if k % 2 == 0 {
            k += 1;
        }
        while k <= kmax {
            if let Some((x, w)) = node(k as f64 * h) {
                acc += w * f(x);
            }
            k += 2;
        }
        sum += acc;
        let next = sum * h;
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= tol * estimate.abs().max(1.0) {
            break;
        }
    }
    estimate
}

fn beta_kernel(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0)
}

/// Regularized incomplete beta I_x(a, b) as a ratio of quadratures. Both
/// halves are mapped so that any endpoint singularity sits at the left end
/// of the integration interval, where offsets are represented exactly.
pub fn incomplete_beta_quadrature(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let lower = |hi: f64| tanh_sinh(beta_kernel(a, b), 0.0, hi, 1e-15);
    let upper = |hi: f64| tanh_sinh(beta_kernel(b, a), 0.0, hi, 1e-15);
    let full = lower(0.5) + upper(0.5);
    let part = if x <= 0.5 { lower(x) } else { full - upper(1.0 - x) };
    part / full
}

/// CDF of the F(d1, d2) distribution by quadrature.
pub fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let u = d1 * x / (d1 * x + d2);
    incomplete_beta_quadrature(u, 0.5 * d1, 0.5 * d2)
}

/// CDF of Student's t with `nu` degrees of freedom by quadrature.
pub fn t_cdf_quadrature(t: f64, nu: f64) -> f64 {
    let tail = 0.5 * incomplete_beta_quadrature(nu / (nu + t * t), 0.5 * nu, 0.5);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Marchenko-Pastur density for aspect ratio `q >= 1` and variance `sigma2`.
pub fn mp_density(q: f64, sigma2: f64, x: f64) -> f64 {
    let (lo, hi) = mp_edges(q, sigma2);
    if x <= lo || x >= hi {
        return 0.0;
    }
    q / (2.0 * std::f64::consts::PI * sigma2 * x) * ((hi - x) * (x - lo)).sqrt()
}

pub fn mp_edges(q: f64, sigma2: f64) -> (f64, f64) {
    let r = 1.0 / q.sqrt();
    (sigma2 * (1.0 - r).powi(2), sigma2 * (1.0 + r).powi(2))
}

/// Inverse-CDF sampler for the Marchenko-Pastur law. The CDF is tabulated
/// with tanh-sinh on a uniform grid in the original variable and refined by
/// bisection.
pub struct MpSampler {
    q: f64,
    sigma2: f64,
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl MpSampler {
    pub fn new(q: f64, sigma2: f64) -> Self {
        let (lo, hi) = mp_edges(q, sigma2);
        let segments = 400;
        let grid: Vec<f64> = (0..=segments)
            .map(|i| lo + (hi - lo) * i as f64 / segments as f64)
            .collect();
        let mut cdf = vec![0.0; grid.len()];
        for i in 1..grid.len() {
            let piece = tanh_sinh(|x| mp_density(q, sigma2, x), grid[i - 1], grid[i], 1e-14);
            cdf[i] = cdf[i - 1] + piece;
        }
        let total = *cdf.last().unwrap();
        assert!((total - 1.0).abs() < 1e-8, "MP mass {total}");
        MpSampler { q, sigma2, grid, cdf }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.grid[0] {
            return 0.0;
        }
        if x >= *self.grid.last().unwrap() {
            return 1.0;
        }
        let i = self.grid.partition_point(|&g| g <= x) - 1;
        if x == self.grid[i] {
            return self.cdf[i];
        }
        self.cdf[i] + tanh_sinh(|t| mp_density(self.q, self.sigma2, t), self.grid[i], x, 1e-14)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.grid.len() - 1);
        let (mut lo, mut hi) = (self.grid[i - 1], self.grid[i]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.gen::<f64>())).collect()
    }
}

/// Continuous power-law samples by inversion: x = xmin * u^{-1/(alpha-1)}.
pub fn power_law_samples<R: Rng>(rng: &mut R, alpha: f64, xmin: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = 1.0 - rng.gen::<f64>();
            xmin * u.powf(-1.0 / (alpha - 1.0))
        })
        .collect()
}

/// Gaussian AR(1) series with unit innovation variance.
pub fn ar1_series<R: Rng>(rng: &mut R, rho: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut x: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
    for _ in 0..n {
        out.push(x);
        x = rho * x + rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Cosine similarity kernel by a double loop.
pub fn naive_cosine_kernel(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            let mut ni = 0.0;
            let mut nj = 0.0;
            for c in 0..x.ncols() {
                dot += x[(i, c)] * x[(j, c)];
                ni += x[(i, c)] * x[(i, c)];
                nj += x[(j, c)] * x[(j, c)];
            }
            k[(i, j)] = dot / (ni.sqrt() * nj.sqrt());
        }
    }
    k
}

/// A perturbation `E` with `<X, E>_F = 0` and `||E||_F = ||X||_F`, obtained by
/// one Gram-Schmidt step of a random direction against `X`.
pub fn orthogonal_perturbation<R: Rng>(rng: &mut R, x: &DMatrix<f64>) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, x.nrows(), x.ncols());
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let gx: f64 = g.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let e = &g - x * (gx / xx);
    let en: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    e * (xx.sqrt() / en)
}

/// Trace of `W^T W / n` summed entry by entry.
pub fn scaled_trace(w: &DMatrix<f64>) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>() / w.nrows() as f64
}

/// Shannon entropy (nats) of a probability vector, with 0 log 0 = 0.
pub fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(jacobi_eigenvalues(&a), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn quadrature_handles_sqrt_singularity() {
        let v = tanh_sinh(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-15);
        assert!((v - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn f_cdf_known_value() {
        // F(1, 1) at 1 is exactly 1/2 by symmetry.
        assert!((f_cdf_quadrature(1.0, 1.0, 1.0) - 0.5).abs() < 1e-12);
        // F(2, d2) has closed-form CDF 1 - (1 + 2x/d2)^(-d2/2).
        let exact = 1.0 - (1.0 + 2.0 * 1.7 / 9.0f64).powf(-4.5);
        assert!((f_cdf_quadrature(1.7, 2.0, 9.0) - exact).abs() < 1e-12);
    }

    #[test]
    fn mp_sampler_median_in_support() {
        let s = MpSampler::new(2.0, 1.0);
        let m = s.quantile(0.5);
        let (lo, hi) = mp_edges(2.0, 1.0);
        assert!(m > lo && m < hi);
        assert!((s.cdf(m) - 0.5).abs() < 1e-10);
    }
}
