//! Singular values by one-sided (Hestenes) Jacobi, plus condition numbers.

use num_complex::Complex64;

use super::{eig_symmetric, ComplexMatrix, RealMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Ratio below which the smallest singular value counts as zero.
const UNDERFLOW_RATIO: f64 = 1e-300;

/// `M = U diag(sigma) V^T` with singular values descending.
#[derive(Clone, Debug)]
pub struct RealSvd {
    pub u: RealMatrix,
    pub singular_values: Vec<f64>,
    pub v: RealMatrix,
}

/// Thin SVD of a real matrix. Tall input is first reduced by Householder QR so
/// the Jacobi sweeps run on the small triangular factor.
pub fn svd_real(m: &RealMatrix) -> Result<RealSvd> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows < cols {
        let t = svd_real(&m.transpose())?;
        return Ok(RealSvd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    // Column-major copy: a[j] is column j.
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| m[(i, j)]).collect()).collect();
    let reflectors = if rows > cols { householder_qr(&mut a, cols) } else { Vec::new() };
    let k = cols;
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..k).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    jacobi_columns(&mut a, &mut v, m.frobenius_norm())?;
    let norms: Vec<f64> = a.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let inner_rows = a.first().map_or(0, Vec::len);
    let mut u = RealMatrix::zeros(rows, k);
    let mut vm = RealMatrix::zeros(k, k);
    let mut sigma = Vec::with_capacity(k);
    for (c, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        let mut col = vec![0.0; rows];
        for i in 0..inner_rows {
            col[i] = if s > 0.0 { a[j][i] / s } else { 0.0 };
        }
        for (h, beta) in reflectors.iter().rev() {
            let tail = &mut col[rows - h.len()..];
            let dot: f64 = h.iter().zip(tail.iter()).map(|(x, y)| x * y).sum();
            for (ci, hi) in tail.iter_mut().zip(h) {
                *ci -= beta * dot * hi;
            }
        }
        for i in 0..rows {
            u[(i, c)] = col[i];
        }
        for i in 0..k {
            vm[(i, c)] = v[j][i];
        }
    }
    Ok(RealSvd {
        u,
        singular_values: sigma,
        v: vm,
    })
}

/// Replaces the columns of `a` by the `cols x cols` triangular factor `R` and
/// returns the reflectors `(h, beta)` with `Q_k = I - beta h h^T` acting on the
/// trailing `h.len()` rows.
fn householder_qr(a: &mut [Vec<f64>], cols: usize) -> Vec<(Vec<f64>, f64)> {
    let mut reflectors = Vec::with_capacity(cols);
    for k in 0..cols {
        let x = &a[k][k..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut h = x.to_vec();
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        h[0] -= alpha;
        let hh: f64 = h.iter().map(|v| v * v).sum();
        let beta = if hh > 0.0 { 2.0 / hh } else { 0.0 };
        for col in a.iter_mut().skip(k) {
            let dot: f64 = h.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
            for (c, hi) in col[k..].iter_mut().zip(&h) {
                *c -= beta * dot * hi;
            }
        }
        reflectors.push((h, beta));
    }
    for col in a.iter_mut() {
        col.truncate(cols);
    }
    reflectors
}

/// One-sided Jacobi: orthogonalizes the columns of `a`, accumulating rotations in `v`.
fn jacobi_columns(a: &mut [Vec<f64>], v: &mut [Vec<f64>], scale: f64) -> Result<()> {
    let cols = a.len();
    let rows = a.first().map_or(0, Vec::len);
    let tol = (rows.max(1) as f64).sqrt() * f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha: f64 = a[i].iter().map(|x| x * x).sum();
                let beta: f64 = a[j].iter().map(|x| x * x).sum();
                let gamma: f64 = a[i].iter().zip(&a[j]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(a, i, j, c, s);
                rotate(v, i, j, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::Convergence {
        iterations: MAX_SWEEPS,
        norm: scale,
    })
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(j);
    for (x, y) in left[i].iter_mut().zip(right[0].iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Singular values (descending) of a square complex matrix.
pub fn singular_values_complex(m: &ComplexMatrix) -> Result<Vec<f64>> {
    let n = m.dim();
    let mut a: Vec<Vec<Complex64>> = (0..n).map(|j| (0..n).map(|i| m[(i, j)]).collect()).collect();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha: f64 = a[i].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = a[j].iter().map(|z| z.norm_sqr()).sum();
                let gamma: Complex64 = a[i].iter().zip(&a[j]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rephase column j so the inner product is real, then rotate.
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = a.split_at_mut(j);
                for (x, y) in left[i].iter_mut().zip(right[0].iter_mut()) {
                    let xi = *x;
                    let yj = *y * phase;
                    *x = xi * c - yj * s;
                    *y = xi * s + yj * c;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations: MAX_SWEEPS,
            norm: m.frobenius_norm(),
        });
    }
    let mut sigma: Vec<f64> = a
        .iter()
        .map(|col| col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|x, y| y.total_cmp(x));
    Ok(sigma)
}

/// Types whose singular values the kernel can compute.
pub trait SingularValues {
    /// Descending singular values.
    fn singular_values(&self) -> Result<Vec<f64>>;
}

impl SingularValues for RealMatrix {
    fn singular_values(&self) -> Result<Vec<f64>> {
        if self.is_symmetric() {
            let eig = eig_symmetric(self)?;
            let mut s: Vec<f64> = eig.eigenvalues.iter().map(|x| x.abs()).collect();
            s.sort_by(|x, y| y.total_cmp(x));
            return Ok(s);
        }
        Ok(svd_real(self)?.singular_values)
    }
}

impl SingularValues for ComplexMatrix {
    fn singular_values(&self) -> Result<Vec<f64>> {
        singular_values_complex(self)
    }
}

/// `sigma_max / sigma_min`, or `+inf` when `sigma_min` underflows relative to
/// `sigma_max` (including the all-zero matrix).
pub fn condition_number<M: SingularValues + ?Sized>(m: &M) -> f64 {
    match m.singular_values() {
        Ok(s) => condition_from_singular_values(&s),
        Err(_) => f64::INFINITY,
    }
}

/// `sigma_max / sigma_min` with the same underflow sentinel as [`condition_number`].
pub fn condition_from_singular_values(s: &[f64]) -> f64 {
    let smax = s.iter().copied().fold(0.0f64, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if smax == 0.0 || !smax.is_finite() || smin <= UNDERFLOW_RATIO * smax {
        f64::INFINITY
    } else {
        smax / smin
    }
}
