//! Orthonormal real basis of the N x N Hermitian matrices.
//!
//! Order: `E_kk` for each k, then `(E_ij + E_ji)/sqrt2` for i < j, then
//! `i(E_ij - E_ji)/sqrt2` for i < j. Orthonormal under `Tr(AB)`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use super::{ComplexMatrix, HermitianMatrix};
use crate::error::{Error, Result};

fn off_diagonal_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

pub fn hermitian_basis(n: usize) -> Vec<HermitianMatrix> {
    let mut out = Vec::with_capacity(n * n);
    for k in 0..n {
        let mut m = ComplexMatrix::zeros(n);
        m[(k, k)] = Complex64::new(1.0, 0.0);
        out.push(HermitianMatrix::symmetrized(m));
    }
    for (i, j) in off_diagonal_pairs(n) {
        let mut m = ComplexMatrix::zeros(n);
        m[(i, j)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        m[(j, i)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        out.push(HermitianMatrix::symmetrized(m));
    }
    for (i, j) in off_diagonal_pairs(n) {
        let mut m = ComplexMatrix::zeros(n);
        m[(i, j)] = Complex64::new(0.0, FRAC_1_SQRT_2);
        m[(j, i)] = Complex64::new(0.0, -FRAC_1_SQRT_2);
        out.push(HermitianMatrix::symmetrized(m));
    }
    out
}

/// Coordinates `Tr(B_k H)` in the basis above.
pub fn hermitian_coords(h: &HermitianMatrix) -> Vec<f64> {
    let n = h.dim();
    let m = h.as_matrix();
    let mut out = Vec::with_capacity(n * n);
    out.extend((0..n).map(|k| m[(k, k)].re));
    out.extend(off_diagonal_pairs(n).map(|(i, j)| std::f64::consts::SQRT_2 * m[(i, j)].re));
    out.extend(off_diagonal_pairs(n).map(|(i, j)| std::f64::consts::SQRT_2 * m[(i, j)].im));
    out
}

pub fn from_hermitian_coords(n: usize, coords: &[f64]) -> Result<HermitianMatrix> {
    if coords.len() != n * n {
        return Err(Error::Dimension(format!(
            "expected {} Hermitian coordinates, got {}",
            n * n,
            coords.len()
        )));
    }
    let mut m = ComplexMatrix::zeros(n);
    for k in 0..n {
        m[(k, k)] = Complex64::new(coords[k], 0.0);
    }
    let pairs = n * (n - 1) / 2;
    for (p, (i, j)) in off_diagonal_pairs(n).enumerate() {
        let z = Complex64::new(coords[n + p], coords[n + pairs + p]) * FRAC_1_SQRT_2;
        m[(i, j)] = z;
        m[(j, i)] = z.conj();
    }
    Ok(HermitianMatrix::symmetrized(m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        let b = hermitian_basis(4);
        assert_eq!(b.len(), 16);
        for (i, x) in b.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((x.inner(y) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn coords_match_inner_products_and_round_trip() {
        let n = 3;
        let h = HermitianMatrix::new(ComplexMatrix::from_fn(n, |i, j| {
            let (a, b) = (i as f64, j as f64);
            Complex64::new(a + b + 1.0, b - a)
        }))
        .unwrap();
        let c = hermitian_coords(&h);
        for (k, bk) in hermitian_basis(n).iter().enumerate() {
            assert!((bk.inner(&h) - c[k]).abs() < 1e-14);
        }
        let back = from_hermitian_coords(n, &c).unwrap();
        assert!(back.as_matrix().max_abs_diff(h.as_matrix()) < 1e-14);
    }
}
