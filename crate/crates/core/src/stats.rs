//! Correlation and least-squares kernels shared by every analysis module.
//!
//! Everything here is a pure function of its inputs: Pearson and partial
//! correlation, OLS through a Householder QR, and a cyclic Jacobi
//! eigensolver for the small symmetric correlation matrices (N <= ~100)
//! produced elsewhere in the crate.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("control design matrix is rank deficient")]
    RankDeficientControls,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
}

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, StatsError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            if r.len() != ncols {
                return Err(StatsError::DimensionMismatch(format!(
                    "row length {} != {}",
                    r.len(),
                    ncols
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { nrows, ncols, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    /// Max absolute asymmetry |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            for j in (i + 1)..self.ncols.min(self.nrows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Result of an ordinary least-squares fit.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Two-sided p-values from the normal approximation of the t statistics.
    pub p_values: Vec<f64>,
    pub n_obs: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlation coefficient of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::LengthMismatch(x.len(), 2));
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Partial correlation of `x` and `y` given `controls`.
///
/// Both series are regressed (with intercept) on the controls and the
/// Pearson correlation of the residuals is returned. An empty control
/// list reduces to plain `pearson`.
pub fn partial_correlation(x: &[f64], y: &[f64], controls: &[&[f64]]) -> Result<f64, StatsError> {
    let n = x.len();
    if y.len() != n {
        return Err(StatsError::LengthMismatch(n, y.len()));
    }
    for c in controls {
        if c.len() != n {
            return Err(StatsError::LengthMismatch(n, c.len()));
        }
    }
    if controls.is_empty() {
        return pearson(x, y);
    }
    let p = controls.len() + 1;
    if n < p + 1 {
        return Err(StatsError::DimensionMismatch(format!(
            "{n} observations for {p} control columns"
        )));
    }
    let mut design = Matrix::zeros(n, p);
    for i in 0..n {
        design.set(i, 0, 1.0);
        for (j, c) in controls.iter().enumerate() {
            design.set(i, j + 1, c[i]);
        }
    }
    let qr = Householder::decompose(&design).map_err(|e| match e {
        StatsError::RankDeficient => StatsError::RankDeficientControls,
        other => other,
    })?;
    let ex = qr.residuals(&design, x);
    let ey = qr.residuals(&design, y);
    // A residual that is numerically zero relative to the original series
    // means the controls explain it entirely.
    let var = |s: &[f64]| {
        let m = mean(s);
        s.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    let degenerate = |orig: &[f64], res: &[f64]| var(res) <= 1e-14 * var(orig).max(f64::MIN_POSITIVE);
    if degenerate(x, &ex) || degenerate(y, &ey) {
        return Err(StatsError::ZeroVariance);
    }
    pearson(&ex, &ey)
}

/// Ordinary least squares of `target` on `design` (caller supplies the
/// intercept column). Coefficients come from a Householder QR; fit
/// statistics use the classical OLS formulas.
pub fn ols(design: &Matrix, target: &[f64]) -> Result<LeastSquaresFit, StatsError> {
    let n = design.nrows();
    let p = design.ncols();
    if target.len() != n {
        return Err(StatsError::DimensionMismatch(format!(
            "{} rows vs {} targets",
            n,
            target.len()
        )));
    }
    if n < p || p == 0 {
        return Err(StatsError::DimensionMismatch(format!(
            "{n} rows for {p} columns"
        )));
    }
    let qr = Householder::decompose(design)?;
    let coefficients = qr.solve(target);

    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let mut fitted = 0.0;
        for j in 0..p {
            fitted += design.get(i, j) * coefficients[j];
        }
        residuals.push(target[i] - fitted);
    }
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let ybar = mean(target);
    let sst: f64 = target.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };

    // (X'X)^-1 = R^-1 R^-T from the triangular factor.
    let rinv = qr.r_inverse();
    let df = n.saturating_sub(p);
    let sigma2 = if df > 0 { ssr / df as f64 } else { 0.0 };
    let mut std_errors = Vec::with_capacity(p);
    let mut t_stats = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let mut xx_jj = 0.0;
        for k in j..p {
            xx_jj += rinv[j][k] * rinv[j][k];
        }
        let se = (sigma2 * xx_jj).sqrt();
        let t = if se > 0.0 { coefficients[j] / se } else { f64::NAN };
        std_errors.push(se);
        t_stats.push(t);
        p_values.push(if t.is_finite() {
            2.0 * (1.0 - normal_cdf(t.abs()))
        } else {
            f64::NAN
        });
    }

    Ok(LeastSquaresFit {
        coefficients,
        residuals,
        r_squared,
        std_errors,
        t_stats,
        p_values,
        n_obs: n,
    })
}

/// Eigenvalues (descending) and orthonormal eigenvectors (columns) of a
/// symmetric matrix, by cyclic Jacobi rotations.
///
/// Sign convention: the largest-magnitude entry of each eigenvector is
/// positive.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix), StatsError> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(StatsError::NotSquare(m.nrows, m.ncols));
    }
    let scale = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| m.get(i, j).abs())
        .fold(0.0f64, f64::max);
    if m.asymmetry() > 1e-10 * (1.0 + scale) {
        return Err(StatsError::NotSymmetric);
    }

    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let frob: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a.get(i, j) * a.get(i, j);
            }
        }
        (2.0 * s).sqrt()
    };

    const MAX_SWEEPS: usize = 64;
    for _ in 0..MAX_SWEEPS {
        if off(&a) <= 1e-14 * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                if apq.abs() <= f64::EPSILON * (app.abs() + aqq.abs()) * 0.5 {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a.get(i, p);
                        let aiq = a.get(i, q);
                        let nip = aip - s * (aiq + tau * aip);
                        let niq = aiq + s * (aip - tau * aiq);
                        a.set(i, p, nip);
                        a.set(p, i, nip);
                        a.set(i, q, niq);
                        a.set(q, i, niq);
                    }
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, vip - s * (viq + tau * vip));
                    v.set(i, q, viq + s * (vip - tau * viq));
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&k| a.get(k, k)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut best = 0usize;
        for i in 1..n {
            if v.get(i, k).abs() > v.get(best, k).abs() {
                best = i;
            }
        }
        let flip = if v.get(best, k) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors.set(i, col, flip * v.get(i, k));
        }
    }
    Ok((eigenvalues, vectors))
}

/// Standard normal CDF via a rational erfc approximation (|error| < 1.2e-7).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Householder QR of an n x p matrix (n >= p), kept in factored form.
struct Householder {
    /// Reflector vectors (packed below the diagonal) and R on/above it.
    qr: Matrix,
    rdiag: Vec<f64>,
}

impl Householder {
    fn decompose(m: &Matrix) -> Result<Self, StatsError> {
        let n = m.nrows();
        let p = m.ncols();
        let mut qr = m.clone();
        let mut rdiag = vec![0.0; p];
        let col_norm_max = (0..p)
            .map(|j| (0..n).map(|i| m.get(i, j).powi(2)).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        for k in 0..p {
            let mut norm = 0.0f64;
            for i in k..n {
                norm = norm.hypot(qr.get(i, k));
            }
            if norm <= 1e-12 * col_norm_max.max(f64::MIN_POSITIVE) {
                return Err(StatsError::RankDeficient);
            }
            if qr.get(k, k) < 0.0 {
                norm = -norm;
            }
            for i in k..n {
                qr.set(i, k, qr.get(i, k) / norm);
            }
            qr.set(k, k, qr.get(k, k) + 1.0);
            for j in (k + 1)..p {
                let mut s = 0.0;
                for i in k..n {
                    s += qr.get(i, k) * qr.get(i, j);
                }
                s = -s / qr.get(k, k);
                for i in k..n {
                    qr.set(i, j, qr.get(i, j) + s * qr.get(i, k));
                }
            }
            rdiag[k] = -norm;
        }
        Ok(Householder { qr, rdiag })
    }

    /// Apply Q' to a copy of `y` and back-substitute through R.
    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let n = self.qr.nrows();
        let p = self.qr.ncols();
        let mut qty = y.to_vec();
        for k in 0..p {
            let mut s = 0.0;
            for i in k..n {
                s += self.qr.get(i, k) * qty[i];
            }
            s = -s / self.qr.get(k, k);
            for i in k..n {
                qty[i] += s * self.qr.get(i, k);
            }
        }
        let mut beta = vec![0.0; p];
        for k in (0..p).rev() {
            let mut s = qty[k];
            for j in (k + 1)..p {
                s -= self.qr.get(k, j) * beta[j];
            }
            beta[k] = s / self.rdiag[k];
        }
        beta
    }

    fn residuals(&self, design: &Matrix, y: &[f64]) -> Vec<f64> {
        let beta = self.solve(y);
        let n = design.nrows();
        let p = design.ncols();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut fitted = 0.0;
            for j in 0..p {
                fitted += design.get(i, j) * beta[j];
            }
            out.push(y[i] - fitted);
        }
        out
    }

    /// Inverse of the upper-triangular factor R, as rows.
    fn r_inverse(&self) -> Vec<Vec<f64>> {
        let p = self.qr.ncols();
        let r = |i: usize, j: usize| -> f64 {
            if i == j {
                self.rdiag[i]
            } else {
                self.qr.get(i, j)
            }
        };
        let mut inv = vec![vec![0.0; p]; p];
        for j in (0..p).rev() {
            inv[j][j] = 1.0 / r(j, j);
            for i in (0..j).rev() {
                let mut s = 0.0;
                for k in (i + 1)..=j {
                    s += r(i, k) * inv[k][j];
                }
                inv[i][j] = -s / r(i, i);
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn uniform(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        let u1 = uniform(rng).max(f64::MIN_POSITIVE);
        let u2 = uniform(rng);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn pearson_exact_linear() {
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn pearson_hand_value() {
        // Direct evaluation of the product-moment formula gives 16/20.
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_relative_eq!(r, 0.8, max_relative = 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            StatsError::LengthMismatch(2, 3)
        );
        assert_eq!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            StatsError::ZeroVariance
        );
    }

    #[test]
    fn pearson_symmetry_and_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x: Vec<f64> = (0..40).map(|_| normal(&mut rng)).collect();
            let y: Vec<f64> = (0..40).map(|_| normal(&mut rng)).collect();
            let rxy = pearson(&x, &y).unwrap();
            let ryx = pearson(&y, &x).unwrap();
            assert_relative_eq!(rxy, ryx, max_relative = 1e-12);
            let ax: Vec<f64> = x.iter().map(|v| -3.0 * v + 11.0).collect();
            assert_relative_eq!(pearson(&ax, &y).unwrap(), -rxy, epsilon = 1e-12);
        }
    }

    /// Closed-form single-control oracle:
    /// (rho_xy - rho_xz rho_yz) / sqrt((1-rho_xz^2)(1-rho_yz^2)).
    #[test]
    fn partial_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = 30;
            let z: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            let x: Vec<f64> = z
                .iter()
                .map(|&v| 0.6 * v + 0.8 * normal(&mut rng))
                .collect();
            let y: Vec<f64> = z
                .iter()
                .map(|&v| -0.3 * v + 0.9 * normal(&mut rng))
                .collect();
            let rxy = pearson(&x, &y).unwrap();
            let rxz = pearson(&x, &z).unwrap();
            let ryz = pearson(&y, &z).unwrap();
            let oracle = (rxy - rxz * ryz) / ((1.0 - rxz * rxz) * (1.0 - ryz * ryz)).sqrt();
            let got = partial_correlation(&x, &y, &[&z]).unwrap();
            assert_relative_eq!(got, oracle, epsilon = 1e-10);
        }
    }

    #[test]
    fn partial_on_own_control_is_degenerate() {
        let z: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(
            partial_correlation(&z, &y, &[&z]).unwrap_err(),
            StatsError::ZeroVariance
        );
    }

    #[test]
    fn partial_independent_after_control() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 10_000;
        let z: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let x: Vec<f64> = z.iter().map(|&v| v + normal(&mut rng)).collect();
        let y: Vec<f64> = z.iter().map(|&v| -v + normal(&mut rng)).collect();
        let got = partial_correlation(&x, &y, &[&z]).unwrap();
        assert!(got.abs() < 0.05, "expected near zero, got {got}");
    }

    #[test]
    fn partial_empty_controls_is_pearson() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        let y = [2.0, 3.0, 1.0, 9.0, 4.0];
        assert_relative_eq!(
            partial_correlation(&x, &y, &[]).unwrap(),
            pearson(&x, &y).unwrap()
        );
    }

    #[test]
    fn partial_rank_deficient_controls() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let c1: Vec<f64> = (0..20).map(|i| (i % 5) as f64).collect();
        let c2: Vec<f64> = c1.iter().map(|v| 2.0 * v).collect();
        assert_eq!(
            partial_correlation(&x, &y, &[&c1, &c2]).unwrap_err(),
            StatsError::RankDeficientControls
        );
    }

    #[test]
    fn ols_exact_slope() {
        let n = 10;
        let mut design = Matrix::zeros(n, 2);
        let mut y = Vec::new();
        for i in 0..n {
            let x = i as f64;
            design.set(i, 0, 1.0);
            design.set(i, 1, x);
            y.push(2.0 * x);
        }
        let fit = ols(&design, &y).unwrap();
        assert_relative_eq!(fit.coefficients[0], 0.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coefficients[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_intercept_only_is_mean() {
        let y = [3.0, 5.0, 7.0, 9.0];
        let design = Matrix::from_rows(&vec![vec![1.0]; 4]).unwrap();
        let fit = ols(&design, &y).unwrap();
        assert_relative_eq!(fit.coefficients[0], 6.0, epsilon = 1e-12);
    }

    /// Normal-equations brute force: beta = (X'X)^-1 X'y via Gaussian
    /// elimination, independent of the QR path.
    fn normal_equations(design: &Matrix, y: &[f64]) -> Vec<f64> {
        let n = design.nrows();
        let p = design.ncols();
        let mut a = vec![vec![0.0; p + 1]; p];
        for j in 0..p {
            for k in 0..p {
                let mut s = 0.0;
                for i in 0..n {
                    s += design.get(i, j) * design.get(i, k);
                }
                a[j][k] = s;
            }
            let mut s = 0.0;
            for i in 0..n {
                s += design.get(i, j) * y[i];
            }
            a[j][p] = s;
        }
        for col in 0..p {
            let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            for k in col..=p {
                a[col][k] /= d;
            }
            for row in 0..p {
                if row != col {
                    let f = a[row][col];
                    for k in col..=p {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..p).map(|j| a[j][p]).collect()
    }

    #[test]
    fn ols_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 200;
        let p = 4;
        let mut design = Matrix::zeros(n, p);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            design.set(i, 0, 1.0);
            for j in 1..p {
                design.set(i, j, normal(&mut rng));
            }
            y.push(normal(&mut rng));
        }
        let fit = ols(&design, &y).unwrap();
        let oracle = normal_equations(&design, &y);
        for j in 0..p {
            assert_relative_eq!(fit.coefficients[j], oracle[j], epsilon = 1e-8);
        }
        // Residual orthogonality: X'e = 0.
        for j in 0..p {
            let dot: f64 = (0..n).map(|i| design.get(i, j) * fit.residuals[i]).sum();
            let scale: f64 = (0..n).map(|i| design.get(i, j).powi(2)).sum::<f64>().sqrt();
            assert!(dot.abs() <= 1e-8 * scale.max(1.0), "column {j} not orthogonal: {dot}");
        }
    }

    #[test]
    fn ols_adding_column_never_decreases_r2() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let n = 60;
            let base: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![1.0, normal(&mut rng), normal(&mut rng)])
                .collect();
            let y: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            let extra: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            let small = Matrix::from_rows(&base).unwrap();
            let wide_rows: Vec<Vec<f64>> = base
                .iter()
                .zip(&extra)
                .map(|(r, &e)| {
                    let mut r = r.clone();
                    r.push(e);
                    r
                })
                .collect();
            let wide = Matrix::from_rows(&wide_rows).unwrap();
            let r2_small = ols(&small, &y).unwrap().r_squared;
            let r2_wide = ols(&wide, &y).unwrap().r_squared;
            assert!(r2_wide >= r2_small - 1e-12);
        }
    }

    #[test]
    fn ols_rank_deficient() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let design = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(ols(&design, &y).unwrap_err(), StatsError::RankDeficient);
    }

    #[test]
    fn eigen_identity() {
        let (vals, _) = symmetric_eigen(&Matrix::identity(3)).unwrap();
        for v in vals {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigen_two_by_two_analytic() {
        let m = Matrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 1.0]]).unwrap();
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert_relative_eq!(vals[0], 1.4, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 0.6, epsilon = 1e-12);
        // normalized eigenvectors
        for c in 0..2 {
            let norm: f64 = (0..2).map(|i| vecs.get(i, c).powi(2)).sum();
            assert_relative_eq!(norm, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigen_reconstruction_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = 8;
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = normal(&mut rng);
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
            let (vals, vecs) = symmetric_eigen(&m).unwrap();
            // trace preservation
            let trace: f64 = (0..n).map(|i| m.get(i, i)).sum();
            assert_relative_eq!(vals.iter().sum::<f64>(), trace, epsilon = 1e-8);
            // orthonormality
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..n).map(|i| vecs.get(i, a) * vecs.get(i, b)).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-8);
                }
            }
            // reconstruction V diag(vals) V'
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += vecs.get(i, k) * vals[k] * vecs.get(j, k);
                    }
                    assert!((s - m.get(i, j)).abs() < 1e-8);
                }
            }
            // eigenvalues sorted descending
            for k in 1..n {
                assert!(vals[k - 1] >= vals[k] - 1e-12);
            }
        }
    }

    #[test]
    fn eigen_rejects_bad_input() {
        let m = Matrix::zeros(2, 3);
        assert_eq!(symmetric_eigen(&m).unwrap_err(), StatsError::NotSquare(2, 3));
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
        assert_eq!(symmetric_eigen(&m).unwrap_err(), StatsError::NotSymmetric);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-6);
        assert_relative_eq!(normal_cdf(1.959964), 0.975, epsilon = 1e-6);
        assert_relative_eq!(normal_cdf(-1.959964), 0.025, epsilon = 1e-6);
    }
}
