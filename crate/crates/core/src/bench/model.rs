//! Model system, states, observables and random fields used by the experiments.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::dynamics::{ControlField, QuantumSystem, StateSpec};
use crate::error::{Error, Result};
use crate::landscape::ObservableSet;
use crate::linalg::{eig_hermitian, HermitianMatrix};

pub const DEFAULT_LEVELS: usize = 11;
pub const DEFAULT_T_FINAL: f64 = 100.0;
pub const DEFAULT_Q: usize = 1024;

/// Minimum spacing between the random diagonal entries of the first observable.
const DISTINCT_SPACING: f64 = 1e-6;

/// `H0 = diag(0.1, 0.2, ..., 0.1 N)`; `mu` is 1 on the diagonal, 0.15 on the
/// first off-diagonals, 0.08 on the second, zero elsewhere.
pub fn build_model_system(levels: usize, t_final: f64, q: usize) -> Result<QuantumSystem> {
    if levels < 3 {
        return Err(Error::InvalidInput(format!("model system needs at least 3 levels, got {levels}")));
    }
    let energies: Vec<f64> = (1..=levels).map(|k| 0.1 * k as f64).collect();
    let h0 = HermitianMatrix::from_real_diagonal(&energies);
    let mu = HermitianMatrix::from_real_symmetric(levels, |i, j| match j - i {
        0 => 1.0,
        1 => 0.15,
        2 => 0.08,
        _ => 0.0,
    });
    QuantumSystem::new(h0, mu, t_final, q)
}

/// One sinusoidal component `A sin(omega t + phase)` of a random field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldMode {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

/// One mode per level pair `i < j` at the transition frequency `|E_i - E_j|`,
/// amplitude uniform on (0, 1] and phase uniform on (0, 2 pi].
pub fn sample_field_modes<R: Rng + ?Sized>(system: &QuantumSystem, rng: &mut R) -> Result<Vec<FieldMode>> {
    let energies = eig_hermitian(system.h0())?.eigenvalues;
    let n = energies.len();
    let mut modes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let amplitude = 1.0 - rng.gen::<f64>();
            let phase = 2.0 * PI * (1.0 - rng.gen::<f64>());
            modes.push(FieldMode {
                amplitude,
                omega: (energies[i] - energies[j]).abs(),
                phase,
            });
        }
    }
    Ok(modes)
}

pub fn field_from_modes(system: &QuantumSystem, modes: &[FieldMode]) -> Result<ControlField> {
    ControlField::from_fn(system, |t| {
        modes
            .iter()
            .map(|m| m.amplitude * (m.omega * t + m.phase).sin())
            .sum()
    })
}

pub fn sample_random_field<R: Rng + ?Sized>(system: &QuantumSystem, rng: &mut R) -> Result<ControlField> {
    field_from_modes(system, &sample_field_modes(system, rng)?)
}

fn boltzmann(system: &QuantumSystem, temperature: f64, keep: usize) -> Result<StateSpec> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidInput(format!("temperature must be positive, got {temperature}")));
    }
    let eig = eig_hermitian(system.h0())?;
    let e0 = eig.eigenvalues[0];
    let weights: Vec<f64> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, e)| if k < keep { (-(e - e0) / temperature).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let populations: Vec<Complex64> = weights.iter().map(|w| Complex64::new(w / total, 0.0)).collect();
    let v = &eig.eigenvectors;
    let rho = v.mul_diag_right(&populations).mul_adjoint(v);
    StateSpec::new(HermitianMatrix::symmetrized(rho))
}

/// Boltzmann populations over the eigenstates of `H0` (energies in units of `k T_e`).
pub fn build_thermal_state(system: &QuantumSystem, temperature: f64) -> Result<StateSpec> {
    boltzmann(system, temperature, system.dim())
}

/// Thermal state truncated to its `rank` most populated levels and renormalized.
pub fn build_truncated_thermal_state(system: &QuantumSystem, temperature: f64, rank: usize) -> Result<StateSpec> {
    if rank == 0 || rank > system.dim() {
        return Err(Error::InvalidInput(format!("rank {rank} outside 1..={}", system.dim())));
    }
    boltzmann(system, temperature, rank)
}

/// Lowest eigenstate of `H0`.
pub fn build_ground_state(system: &QuantumSystem) -> Result<StateSpec> {
    boltzmann(system, 1.0, 1)
}

/// `Theta_1` diagonal with distinct entries uniform on (0, 1]; `Theta_k` for
/// `k >= 2` projects onto canonical basis state `k - 2` (zero-based).
pub fn build_observable_set<R: Rng + ?Sized>(levels: usize, m: usize, rng: &mut R) -> Result<ObservableSet> {
    if m == 0 || m > levels {
        return Err(Error::InvalidInput(format!("observable count {m} outside 1..={levels}")));
    }
    let diagonal = loop {
        let d: Vec<f64> = (0..levels).map(|_| 1.0 - rng.gen::<f64>()).collect();
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[1] - w[0] >= DISTINCT_SPACING) {
            break d;
        }
    };
    let mut observables = vec![HermitianMatrix::from_real_diagonal(&diagonal)];
    for k in 0..(m - 1) {
        let mut p = vec![0.0; levels];
        p[k] = 1.0;
        observables.push(HermitianMatrix::from_real_diagonal(&p));
    }
    ObservableSet::new(observables)
}

/// Largest value of `Tr(U rho U^dag Theta)` over unitaries: sorted eigenvalues paired.
pub fn kinematic_maximum(state: &StateSpec, theta: &HermitianMatrix) -> Result<f64> {
    let mut rho = state.eigenvalues().to_vec();
    let mut th = eig_hermitian(theta)?.eigenvalues;
    rho.sort_by(f64::total_cmp);
    th.sort_by(f64::total_cmp);
    Ok(rho.iter().zip(&th).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn model_matrices() {
        let sys = build_model_system(11, 100.0, 1024).unwrap();
        let h0 = sys.h0().as_matrix();
        let mu = sys.mu().as_matrix();
        assert!((h0[(0, 0)].re - 0.1).abs() < 1e-15 && (h0[(10, 10)].re - 1.1).abs() < 1e-15);
        assert_eq!(mu[(0, 1)].re, 0.15);
        assert_eq!(mu[(0, 2)].re, 0.08);
        assert_eq!(mu[(0, 3)].re, 0.0);
        assert!((0..11).all(|k| mu[(k, k)].re == 1.0));
        assert!(build_model_system(2, 100.0, 1024).is_err());
    }

    #[test]
    fn random_field_modes() {
        let sys = build_model_system(11, 100.0, 1024).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let modes = sample_field_modes(&sys, &mut rng).unwrap();
        assert_eq!(modes.len(), 55);
        assert!(modes.iter().all(|m| m.amplitude > 0.0 && m.amplitude <= 1.0 && m.phase > 0.0 && m.phase <= 2.0 * PI));
        let field = field_from_modes(&sys, &modes).unwrap();
        let e0: f64 = modes.iter().map(|m| m.amplitude * m.phase.sin()).sum();
        assert!((field.samples()[0] - e0).abs() < 1e-12);
        let again = sample_random_field(&sys, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(again, field);
    }

    #[test]
    fn thermal_state_properties() {
        let sys = build_model_system(11, 100.0, 1024).unwrap();
        let s = build_thermal_state(&sys, 1.0).unwrap();
        let rho = s.rho0().as_matrix();
        assert!((s.rho0().real_trace() - 1.0).abs() < 1e-12);
        assert!((rho[(0, 0)].re / rho[(1, 1)].re - 0.1f64.exp()).abs() < 1e-12);
        assert_eq!(s.rank(), 11);
        assert_eq!(s.distinct_count(), 11);
        let hot = build_thermal_state(&sys, 1e9).unwrap();
        assert!((hot.rho0().as_matrix()[(5, 5)].re - 1.0 / 11.0).abs() < 1e-9);
        assert!(build_thermal_state(&sys, 0.0).is_err());
        let seven = build_truncated_thermal_state(&sys, 1.0, 7).unwrap();
        assert_eq!((seven.rank(), seven.distinct_count()), (7, 7));
        assert_eq!(build_ground_state(&sys).unwrap().rank(), 1);
    }

    #[test]
    fn observable_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = build_observable_set(11, 3, &mut rng).unwrap();
        let o = set.observables();
        assert_eq!(o[1].as_matrix()[(0, 0)].re, 1.0);
        assert_eq!(o[2].as_matrix()[(1, 1)].re, 1.0);
        assert_eq!(o[2].real_trace(), 1.0);
        let mut d: Vec<f64> = (0..11).map(|k| o[0].as_matrix()[(k, k)].re).collect();
        d.sort_by(f64::total_cmp);
        assert!(d.windows(2).all(|w| w[1] > w[0]));
        for a in o {
            for b in o {
                let c = a.as_matrix().commutator(b.as_matrix());
                assert!(c.frobenius_norm() == 0.0);
            }
        }
        assert!(build_observable_set(11, 12, &mut rng).is_err());
    }
}
