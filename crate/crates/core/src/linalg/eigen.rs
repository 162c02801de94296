//! Hermitian eigendecomposition.
//!
//! Real symmetric input goes through Householder tridiagonalization and the
//! implicit QL algorithm (EISPACK tred2/tql2). Genuinely complex input uses
//! cyclic Jacobi rotations, which are slower but unconditionally accurate.

use num_complex::Complex64;

use super::{ComplexMatrix, HermitianMatrix, RealMatrix, C_ZERO};
use crate::error::{Error, Result};

const QL_MAX_ITER: usize = 60;
const JACOBI_MAX_SWEEPS: usize = 60;

/// `H = V diag(eigenvalues) V^dag`, eigenvalues ascending, eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigDecomposition {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        self.eigenvectors
            .mul_diag_right(&d)
            .mul_adjoint(&self.eigenvectors)
    }

    /// `V f(Lambda) V^dag` for a complex-valued spectral function.
    pub fn apply(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let d: Vec<Complex64> = self.eigenvalues.iter().map(|&x| f(x)).collect();
        self.eigenvectors
            .mul_diag_right(&d)
            .mul_adjoint(&self.eigenvectors)
    }
}

/// Eigendecomposition of a real symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEig {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns.
    pub eigenvectors: RealMatrix,
}

pub fn eig_hermitian(h: &HermitianMatrix) -> Result<EigDecomposition> {
    let m = h.as_matrix();
    let n = m.dim();
    if m.is_real() {
        let mut v: Vec<f64> = m.as_slice().iter().map(|z| z.re).collect();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        tred2(n, &mut v, &mut d, &mut e);
        tql2(n, &mut v, &mut d, &mut e).map_err(|iterations| Error::Convergence {
            iterations,
            norm: m.frobenius_norm(),
        })?;
        let vectors = ComplexMatrix::from_fn(n, |i, j| Complex64::new(v[i * n + j], 0.0));
        return Ok(EigDecomposition {
            eigenvalues: d,
            eigenvectors: vectors,
        });
    }
    jacobi_hermitian(m)
}

pub fn eig_symmetric(m: &RealMatrix) -> Result<SymmetricEig> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "symmetric eigenproblem needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut v = m.as_slice().to_vec();
    // Work on the exactly symmetric part.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (v[i * n + j] + v[j * n + i]);
            v[i * n + j] = avg;
            v[j * n + i] = avg;
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e).map_err(|iterations| Error::Convergence {
        iterations,
        norm: m.frobenius_norm(),
    })?;
    Ok(SymmetricEig {
        eigenvalues: d,
        eigenvectors: RealMatrix::from_vec(n, n, v)?,
    })
}

/// Householder reduction of the symmetric matrix in `v` (row-major, n x n) to
/// tridiagonal form; `v` is overwritten with the accumulated transformation.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal (d, e); eigenvalues sorted ascending with
/// matching columns of `v`. Returns the iteration count on failure.
fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> std::result::Result<(), usize> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(iter);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for j in 0..n {
                v.swap(at(j, i), at(j, k));
            }
        }
    }
    Ok(())
}

fn jacobi_hermitian(m: &ComplexMatrix) -> Result<EigDecomposition> {
    let n = m.dim();
    let mut a = m.clone();
    let mut vecs = ComplexMatrix::identity(n);
    let scale = m.frobenius_norm();
    if scale == 0.0 {
        return Ok(EigDecomposition {
            eigenvalues: vec![0.0; n],
            eigenvectors: vecs,
        });
    }
    let threshold = 1e-17 * scale;

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = a[(p, q)];
                let g_abs = g.norm();
                if g_abs <= 1e-300 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let phase = g / g_abs;
                let theta = (aqq - app) / (2.0 * g_abs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // R = D(phase) * Givens, acting on columns p and q.
                let r_pp = Complex64::new(c, 0.0);
                let r_pq = Complex64::new(s, 0.0);
                let r_qp = -phase.conj() * s;
                let r_qq = phase.conj() * c;
                // A <- A R
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * r_pp + akq * r_qp;
                    a[(k, q)] = akp * r_pq + akq * r_qq;
                }
                // A <- R^dag A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = r_pp.conj() * apk + r_qp.conj() * aqk;
                    a[(q, k)] = r_pq.conj() * apk + r_qq.conj() * aqk;
                }
                a[(p, q)] = C_ZERO;
                a[(q, p)] = C_ZERO;
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
                for k in 0..n {
                    let vkp = vecs[(k, p)];
                    let vkq = vecs[(k, q)];
                    vecs[(k, p)] = vkp * r_pp + vkq * r_qp;
                    vecs[(k, q)] = vkp * r_pq + vkq * r_qq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations: JACOBI_MAX_SWEEPS,
            norm: scale,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, |i, j| vecs[(i, order[j])]);
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}
