//! Matrix functions of Hermitian and unitary matrices.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{eig_hermitian, solve_complex, ComplexMatrix, HermitianMatrix, C_ZERO};
use crate::error::{Error, Result};

/// Eigenphases closer than this to `+-pi` are rejected by the logarithm.
pub const BRANCH_TOLERANCE: f64 = 1e-6;

/// Input counts as unitary when `||V^dag V - I||_F` is below this.
const UNITARY_TOLERANCE: f64 = 1e-8;

const NEWTON_SCHULZ_MAX_ITER: usize = 30;

/// `exp(-i theta H)`.
pub fn expi_hermitian(h: &HermitianMatrix, theta: f64) -> Result<ComplexMatrix> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("exponential angle"));
    }
    if theta == 0.0 {
        return Ok(ComplexMatrix::identity(h.dim()));
    }
    let eig = eig_hermitian(h)?;
    Ok(eig.apply(|lam| Complex64::from_polar(1.0, -theta * lam)))
}

/// Hermitian `A = -i log V` on the principal branch, so that `exp(iA) = V`.
///
/// Eigenvectors come from the Cayley transform `K = i(I - V)(I + V)^-1`, which is
/// Hermitian with eigenvalues `tan(theta/2)`; phases are then read off `V` directly.
pub fn log_unitary_principal(v: &ComplexMatrix) -> Result<HermitianMatrix> {
    let n = v.dim();
    if !v.is_finite() {
        return Err(Error::NonFinite("matrix logarithm input"));
    }
    let deviation = v.unitarity_deviation();
    if deviation > UNITARY_TOLERANCE {
        return Err(Error::NotUnitary { deviation });
    }
    let identity = ComplexMatrix::identity(n);
    let plus = &identity + v;
    let minus = &identity - v;
    // (I - V) and (I + V)^-1 commute, so K = i (I + V)^-1 (I - V).
    let k = match solve_complex(&plus, &minus) {
        Ok(x) => x.scale(Complex64::new(0.0, 1.0)),
        Err(Error::Singular { .. }) => {
            return Err(Error::BranchBoundary {
                phase: PI,
                tolerance: BRANCH_TOLERANCE,
            })
        }
        Err(e) => return Err(e),
    };
    if !k.is_finite() {
        return Err(Error::BranchBoundary {
            phase: PI,
            tolerance: BRANCH_TOLERANCE,
        });
    }
    let eig = eig_hermitian(&HermitianMatrix::symmetrized(k))?;
    let w = &eig.eigenvectors;
    let vw = v * w;
    let mut phases = Vec::with_capacity(n);
    for col in 0..n {
        let mut rayleigh = C_ZERO;
        for row in 0..n {
            rayleigh += w[(row, col)].conj() * vw[(row, col)];
        }
        let phase = rayleigh.arg();
        if phase.abs() > PI - BRANCH_TOLERANCE {
            return Err(Error::BranchBoundary {
                phase,
                tolerance: BRANCH_TOLERANCE,
            });
        }
        phases.push(Complex64::new(phase, 0.0));
    }
    Ok(HermitianMatrix::symmetrized(
        w.mul_diag_right(&phases).mul_adjoint(w),
    ))
}

/// Nearest unitary matrix `X (X^dag X)^-1/2`.
///
/// Newton-Schulz when `X` is already close to unitary, eigendecomposition otherwise.
pub fn polar_unitary(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !x.is_finite() {
        return Err(Error::NonFinite("polar decomposition input"));
    }
    let n = x.dim();
    let identity = ComplexMatrix::identity(n);
    let mut deviation = x.unitarity_deviation();
    if deviation < 0.5 {
        let mut y = x.clone();
        for _ in 0..NEWTON_SCHULZ_MAX_ITER {
            if deviation < 1e-14 {
                return Ok(y);
            }
            let gram = &y.adjoint() * &y;
            let factor = (&identity.scale_real(3.0) - &gram).scale_real(0.5);
            y = &y * &factor;
            let next = y.unitarity_deviation();
            if next >= deviation {
                break;
            }
            deviation = next;
        }
        if deviation < 1e-12 {
            return Ok(y);
        }
    }
    let gram = HermitianMatrix::symmetrized(&x.adjoint() * x);
    let eig = eig_hermitian(&gram)?;
    let smallest = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if smallest <= 0.0 {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let inv_sqrt = eig.apply(|lam| Complex64::new(lam.sqrt().recip(), 0.0));
    Ok(x * &inv_sqrt)
}
