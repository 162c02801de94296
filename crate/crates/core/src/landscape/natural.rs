//! Dimension of the space spanned by dynamical gradients, and the F matrix.

use num_complex::Complex64;

use crate::dynamics::{PropagationResult, StateSpec};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_basis, hermitian_coords, svd_real, HermitianMatrix, RealMatrix};

/// `n(2N - n) - sum n_i^2`: the number of independent gradient functions for a
/// state of rank `n` with degeneracies `n_i`.
pub fn natural_basis_dimension(state: &StateSpec, levels: usize) -> Result<usize> {
    let n = state.rank();
    let degeneracies = state.degeneracies();
    if state.dim() != levels || n > levels || degeneracies.iter().sum::<usize>() != n {
        return Err(Error::InvalidInput(format!(
            "state metadata (rank {n}, degeneracies {degeneracies:?}) inconsistent with {levels} levels"
        )));
    }
    let squares: usize = degeneracies.iter().map(|d| d * d).sum();
    Ok(n * (2 * levels - n) - squares)
}

#[derive(Clone, Debug)]
pub struct NaturalBasisReport {
    pub rank: usize,
    /// Descending singular values of the weighted sample matrix; their squares
    /// are the singular values of the Gram matrix.
    pub singular_values: Vec<f64>,
}

/// Numerical rank of the functions `t -> Tr(mu(t) i[rho, B])` for `B` over a
/// basis of Hermitian matrices, which span every achievable gradient
/// `delta <Theta> / delta eps(t)`.
///
/// `relative_cutoff` applies to the singular values of the sampled functions
/// (weighted by the quadrature), not to their Gram matrix: genuine modes reach
/// Gram eigenvalues near 1e-13 relative, beyond what the Gram matrix resolves.
pub fn natural_basis_rank(prop: &PropagationResult, state: &StateSpec, relative_cutoff: f64) -> Result<NaturalBasisReport> {
    let n = state.dim();
    if prop.dim() != n {
        return Err(Error::Dimension("propagation and state dimensions differ".into()));
    }
    let rho = state.rho0().as_matrix();
    let operators: Vec<HermitianMatrix> = hermitian_basis(n)
        .iter()
        .map(|b| HermitianMatrix::symmetrized(rho.commutator(b.as_matrix()).scale(Complex64::new(0.0, 1.0))))
        .collect();
    let evolved = prop.evolved_dipole();
    let functions: Vec<Vec<f64>> = operators
        .iter()
        .map(|c| evolved.iter().map(|mu_t| mu_t.inner(c)).collect())
        .collect();
    let singular_values = sampled_singular_values(&functions, &prop.weights)?;
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values
        .iter()
        .filter(|&&s| top > 0.0 && s > relative_cutoff * top)
        .count();
    Ok(NaturalBasisReport { rank, singular_values })
}

/// Singular values of the matrix with entries `sqrt(w_j) f_k(t_j)`, descending.
/// Squared, they are the eigenvalues of `G_kl = sum_j w_j f_k(t_j) f_l(t_j)`.
/// Always one value per function: fewer samples than functions pads with zeros.
pub(crate) fn sampled_singular_values(functions: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    let q = weights.len();
    let m = functions.len();
    let mut a = RealMatrix::zeros(q, m);
    for (k, f) in functions.iter().enumerate() {
        if f.len() != q {
            return Err(Error::Dimension(format!("function has {} samples, grid has {q}", f.len())));
        }
        for (j, (v, w)) in f.iter().zip(weights).enumerate() {
            a[(j, k)] = v * w.sqrt();
        }
    }
    let mut singular_values = svd_real(&a)?.singular_values;
    singular_values.resize(m, 0.0);
    Ok(singular_values)
}

/// `G_kl = sum_j w_j f_k(t_j) f_l(t_j)`
pub(crate) fn weighted_gram(functions: &[Vec<f64>], weights: &[f64]) -> RealMatrix {
    let m = functions.len();
    let mut gram = RealMatrix::zeros(m, m);
    for k in 0..m {
        for l in k..m {
            let v: f64 = functions[k]
                .iter()
                .zip(&functions[l])
                .zip(weights)
                .map(|((a, b), w)| a * b * w)
                .sum();
            gram[(k, l)] = v;
            gram[(l, k)] = v;
        }
    }
    gram
}

/// `F = int v(S(t)) v(S(t))^T dt` over the propagator sensitivities, in the real
/// Hermitian-basis coordinates. Symmetric positive semidefinite by construction.
pub fn f_matrix(prop: &PropagationResult) -> RealMatrix {
    let n = prop.dim();
    let dim = n * n;
    let mut f = RealMatrix::zeros(dim, dim);
    for (s, &w) in prop.sensitivity.iter().zip(&prop.weights) {
        let v = hermitian_coords(s);
        for a in 0..dim {
            let va = w * v[a];
            if va == 0.0 {
                continue;
            }
            let row = f.row_mut(a);
            for b in a..dim {
                row[b] += va * v[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            f[(a, b)] = f[(b, a)];
        }
    }
    f
}
