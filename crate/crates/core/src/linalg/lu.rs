use num_complex::Complex64;

use super::svd::{condition_number, svd_real};
use super::{eig_symmetric, ComplexMatrix, RealMatrix, C_ONE, C_ZERO};
use crate::error::{Error, Result};

/// How `solve_linear` treats the coefficient matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolveMode {
    /// Partial-pivoting LU; exactly singular input is an error.
    Strict,
    /// Truncated-SVD pseudo-inverse; singular values below `cutoff * sigma_max`
    /// are discarded.
    Regularized { cutoff: f64 },
}

impl SolveMode {
    pub const DEFAULT_CUTOFF: f64 = 1e-12;

    pub fn regularized() -> Self {
        SolveMode::Regularized {
            cutoff: Self::DEFAULT_CUTOFF,
        }
    }
}

/// Solves `M X = B` for a square real `M`; each row of `rhs` is one right-hand side.
pub fn solve_linear(m: &RealMatrix, rhs: &[Vec<f64>], mode: SolveMode) -> Result<Vec<Vec<f64>>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "linear solve needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if let Some(bad) = rhs.iter().find(|b| b.len() != n) {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, expected {n}",
            bad.len()
        )));
    }
    match mode {
        SolveMode::Strict => {
            let lu = RealLu::factor(m)?;
            Ok(rhs.iter().map(|b| lu.solve(b)).collect())
        }
        SolveMode::Regularized { cutoff } => pseudo_inverse_solve(m, rhs, cutoff),
    }
}

struct RealLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl RealLu {
    fn factor(m: &RealMatrix) -> Result<Self> {
        let n = m.rows();
        let mut lu = m.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (pivot_row, pivot_abs) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs == 0.0 {
                return Err(Error::Singular {
                    condition: condition_number(m),
                });
            }
            if pivot_row != k {
                for j in 0..n {
                    lu.swap(k * n + j, pivot_row * n + j);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

fn pseudo_inverse_solve(m: &RealMatrix, rhs: &[Vec<f64>], cutoff: f64) -> Result<Vec<Vec<f64>>> {
    let n = m.rows();
    if m.is_symmetric() {
        // Symmetric input: singular values are |eigenvalues|.
        let eig = eig_symmetric(m)?;
        let smax = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let v = &eig.eigenvectors;
        return Ok(rhs
            .iter()
            .map(|b| {
                let mut x = vec![0.0; n];
                for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                    if smax == 0.0 || lam.abs() <= cutoff * smax {
                        continue;
                    }
                    let proj: f64 = (0..n).map(|i| v[(i, k)] * b[i]).sum::<f64>() / lam;
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi += proj * v[(i, k)];
                    }
                }
                x
            })
            .collect());
    }
    let svd = svd_real(m)?;
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    Ok(rhs
        .iter()
        .map(|b| {
            let mut x = vec![0.0; n];
            for (k, &sigma) in svd.singular_values.iter().enumerate() {
                if smax == 0.0 || sigma <= cutoff * smax {
                    continue;
                }
                let proj: f64 = (0..n).map(|i| svd.u[(i, k)] * b[i]).sum::<f64>() / sigma;
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi += proj * svd.v[(i, k)];
                }
            }
            x
        })
        .collect())
}

/// Solves `A X = B` for complex square matrices by partial-pivoting LU.
pub fn solve_complex(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::Dimension("complex solve operand mismatch".into()));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let (pivot_row, pivot_abs) = (k..n)
            .map(|i| (i, lu[(i, k)].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs == 0.0 {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        if pivot_row != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(pivot_row, j)];
                lu[(pivot_row, j)] = t;
                let t = x[(k, j)];
                x[(k, j)] = x[(pivot_row, j)];
                x[(pivot_row, j)] = t;
            }
        }
        let inv_pivot = C_ONE / lu[(k, k)];
        for i in (k + 1)..n {
            let factor = lu[(i, k)] * inv_pivot;
            if factor == C_ZERO {
                continue;
            }
            for j in k..n {
                let t = lu[(k, j)];
                lu[(i, j)] -= factor * t;
            }
            for j in 0..n {
                let t = x[(k, j)];
                x[(i, j)] -= factor * t;
            }
        }
    }
    for i in (0..n).rev() {
        for j in 0..n {
            let mut acc: Complex64 = x[(i, j)];
            for k in (i + 1)..n {
                acc -= lu[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = acc / lu[(i, i)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_system() {
        let b = vec![vec![1.0, -2.0, 3.5]];
        let x = solve_linear(&RealMatrix::identity(3), &b, SolveMode::Strict).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn diagonal_system() {
        let m = RealMatrix::from_diagonal(&[2.0, 4.0]);
        let x = solve_linear(&m, &[vec![2.0, 4.0]], SolveMode::Strict).unwrap();
        assert!((x[0][0] - 1.0).abs() < 1e-15 && (x[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_100x100_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let n = 100;
        let mut m = RealMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = rng.gen_range(-1.0..1.0) + if i == j { 10.0 } else { 0.0 };
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for mode in [SolveMode::Strict, SolveMode::regularized()] {
            let x = &solve_linear(&m, &[b.clone()], mode).unwrap()[0];
            let r = m.mul_vec(x);
            let res: f64 = r.iter().zip(&b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * bn, "{mode:?}: residual {res:e}");
        }
    }

    #[test]
    fn singular_strict_reports_condition() {
        let m = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        match solve_linear(&m, &[vec![1.0, 1.0]], SolveMode::Strict) {
            Err(Error::Singular { condition }) => assert!(condition > 1e15),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn regularized_gives_least_norm_solution() {
        let m = RealMatrix::from_diagonal(&[1.0, 0.0]);
        let x = solve_linear(&m, &[vec![3.0, 5.0]], SolveMode::regularized()).unwrap();
        assert_eq!(x[0], vec![3.0, 0.0]);
    }

    #[test]
    fn complex_solve_roundtrip() {
        let a = ComplexMatrix::from_fn(3, |i, j| {
            Complex64::new(if i == j { 4.0 } else { 0.5 }, (i as f64) - (j as f64))
        });
        let x0 = ComplexMatrix::from_fn(3, |i, j| Complex64::new(i as f64, j as f64));
        let b = &a * &x0;
        let x = solve_complex(&a, &b).unwrap();
        assert!(x.max_abs_diff(&x0) < 1e-12);
    }
}
