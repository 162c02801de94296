//! Gradient flow of the weighted objective directly on the unitary group.

use super::ObservableSet;
use crate::dynamics::StateSpec;
use crate::error::{Error, Result};
use crate::linalg::{polar_unitary, ComplexMatrix, HermitianMatrix};

const UNITARY_TOLERANCE: f64 = 1e-8;

/// `Phi_M(V) = Tr(V rho V^dag Theta_M)`.
pub fn weighted_objective_at(v: &ComplexMatrix, state: &StateSpec, set: &ObservableSet) -> Result<f64> {
    check_dims(v, state, set)?;
    Ok(objective_unchecked(v, state.rho0(), &set.weighted_sum()))
}

fn objective_unchecked(v: &ComplexMatrix, rho: &HermitianMatrix, theta: &HermitianMatrix) -> f64 {
    rho.transform_adjoint(v).inner(theta)
}

fn check_dims(v: &ComplexMatrix, state: &StateSpec, set: &ObservableSet) -> Result<()> {
    if v.dim() != state.dim() || set.dim() != state.dim() {
        return Err(Error::Dimension("unitary, state and observables must share a dimension".into()));
    }
    Ok(())
}

fn gradient_unchecked(v: &ComplexMatrix, rho: &HermitianMatrix, theta: &HermitianMatrix) -> ComplexMatrix {
    let rho_v = (v * rho.as_matrix()).mul_adjoint(v);
    &theta.as_matrix().commutator(&rho_v) * v
}

/// `[Theta_M, V rho V^dag] V`, the ascent direction of `Phi_M` at `V`.
pub fn unitary_gradient(v: &ComplexMatrix, state: &StateSpec, set: &ObservableSet) -> Result<ComplexMatrix> {
    check_dims(v, state, set)?;
    let deviation = v.unitarity_deviation();
    if deviation > UNITARY_TOLERANCE {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(gradient_unchecked(v, state.rho0(), &set.weighted_sum()))
}

#[derive(Clone, Debug)]
pub struct KinematicOptions {
    pub s_max: f64,
    /// Initial step.
    pub ds: f64,
    /// Step halving below this is a stall.
    pub ds_min: f64,
    pub ds_max: f64,
    /// Step multiplier after each accepted step; 1 keeps the step fixed.
    pub growth: f64,
    pub gradient_tolerance: f64,
}

impl Default for KinematicOptions {
    fn default() -> Self {
        Self {
            s_max: 10.0,
            ds: 0.01,
            ds_min: 1e-12,
            ds_max: 0.01,
            growth: 1.0,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KinematicPoint {
    pub s: f64,
    pub v: ComplexMatrix,
    pub phi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KinematicTermination {
    ReachedEnd,
    GradientConverged,
    /// The objective can no longer increase beyond round-off.
    RoundoffLimited,
}

#[derive(Clone, Debug)]
pub struct KinematicTrajectory {
    pub points: Vec<KinematicPoint>,
    pub termination: KinematicTermination,
    pub rejected_steps: usize,
}

impl KinematicTrajectory {
    pub fn last(&self) -> &KinematicPoint {
        self.points.last().expect("trajectory holds at least the start point")
    }
}

/// Integrates `dV/ds = [Theta_M, V rho V^dag] V` with classical RK4, projecting
/// back onto the unitary group after every step. Steps that lower `Phi_M` are
/// retried at half size, so `Phi_M` is nondecreasing along the returned points.
pub fn kinematic_flow(
    v0: &ComplexMatrix,
    state: &StateSpec,
    set: &ObservableSet,
    options: &KinematicOptions,
) -> Result<KinematicTrajectory> {
    check_dims(v0, state, set)?;
    let deviation = v0.unitarity_deviation();
    if deviation > UNITARY_TOLERANCE {
        return Err(Error::NotUnitary { deviation });
    }
    if !(options.ds > 0.0 && options.ds_min > 0.0 && options.ds_min <= options.ds) {
        return Err(Error::InvalidInput("kinematic flow needs 0 < ds_min <= ds".into()));
    }
    let rho = state.rho0();
    let theta = set.weighted_sum();
    let mut v = polar_unitary(v0)?;
    let mut phi = objective_unchecked(&v, rho, &theta);
    let mut s = 0.0;
    let mut ds = options.ds;
    let mut points = vec![KinematicPoint { s, v: v.clone(), phi }];
    let mut rejected = 0;
    let scale = theta.as_matrix().frobenius_norm().max(1.0);
    let termination = loop {
        if s >= options.s_max {
            break KinematicTermination::ReachedEnd;
        }
        let k1 = gradient_unchecked(&v, rho, &theta);
        let grad_norm = k1.frobenius_norm();
        if grad_norm < options.gradient_tolerance {
            break KinematicTermination::GradientConverged;
        }
        let h = ds.min(options.s_max - s);
        let candidate = rk4_step(&v, &k1, h, rho, &theta);
        let next = polar_unitary(&candidate).map_err(|e| e.at_step(s))?;
        let next_phi = objective_unchecked(&next, rho, &theta);
        if next_phi < phi {
            if phi - next_phi <= 64.0 * f64::EPSILON * scale {
                break KinematicTermination::RoundoffLimited;
            }
            rejected += 1;
            ds *= 0.5;
            if ds < options.ds_min {
                return Err(Error::Stall {
                    s,
                    step: ds,
                    error: phi - next_phi,
                });
            }
            continue;
        }
        s = if h == options.s_max - s { options.s_max } else { s + h };
        v = next;
        phi = next_phi;
        points.push(KinematicPoint { s, v: v.clone(), phi });
        ds = (ds * options.growth).min(options.ds_max.max(options.ds_min));
    };
    Ok(KinematicTrajectory {
        points,
        termination,
        rejected_steps: rejected,
    })
}

fn rk4_step(
    v: &ComplexMatrix,
    k1: &ComplexMatrix,
    h: f64,
    rho: &HermitianMatrix,
    theta: &HermitianMatrix,
) -> ComplexMatrix {
    let k2 = gradient_unchecked(&(v + &k1.scale_real(0.5 * h)), rho, theta);
    let k3 = gradient_unchecked(&(v + &k2.scale_real(0.5 * h)), rho, theta);
    let k4 = gradient_unchecked(&(v + &k3.scale_real(h)), rho, theta);
    let incr = (&(k1 + &k4) + &(&k2 + &k3).scale_real(2.0)).scale_real(h / 6.0);
    v + &incr
}

fn check_probabilities(x0: &[f64], lambdas: &[f64]) -> Result<()> {
    if x0.len() != lambdas.len() || x0.is_empty() {
        return Err(Error::Dimension(format!(
            "{} populations for {} eigenvalues",
            x0.len(),
            lambdas.len()
        )));
    }
    if x0.iter().any(|&x| !(x >= 0.0)) || lambdas.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidInput("populations must be nonnegative and eigenvalues finite".into()));
    }
    let total: f64 = x0.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!("populations sum to {total}, expected 1")));
    }
    Ok(())
}

/// Closed-form pure-state flow: `x_k(s) = e^{2 s lambda_k} x_k(0) / sum_j e^{2 s lambda_j} x_j(0)`.
pub fn analytic_purestate_flow(x0: &[f64], lambdas: &[f64], s: f64) -> Result<Vec<f64>> {
    check_probabilities(x0, lambdas)?;
    if !s.is_finite() {
        return Err(Error::NonFinite("flow time"));
    }
    // Shift exponents by the largest populated one so nothing overflows.
    let shift = x0
        .iter()
        .zip(lambdas)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, l)| 2.0 * s * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = x0
        .iter()
        .zip(lambdas)
        .map(|(&x, &l)| if x > 0.0 { x * (2.0 * s * l - shift).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// `d/ds ||x(s) - e_j*||^2` along [`analytic_purestate_flow`] (`jstar` zero-based).
pub fn distance_derivative(x0: &[f64], lambdas: &[f64], jstar: usize, s: f64) -> Result<f64> {
    if jstar >= lambdas.len() {
        return Err(Error::InvalidInput(format!(
            "target index {jstar} outside {} levels",
            lambdas.len()
        )));
    }
    let x = analytic_purestate_flow(x0, lambdas, s)?;
    let mean: f64 = x.iter().zip(lambdas).map(|(x, l)| x * l).sum();
    let spread: f64 = x
        .iter()
        .zip(lambdas)
        .map(|(x, l)| x * x * (l - mean))
        .sum();
    Ok(4.0 * spread - 4.0 * x[jstar] * (lambdas[jstar] - mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expi_hermitian;

    fn theta_set(d: &[f64]) -> ObservableSet {
        ObservableSet::new(vec![HermitianMatrix::from_real_diagonal(d)]).unwrap()
    }

    #[test]
    fn critical_point_has_zero_gradient() {
        let state = StateSpec::pure(3, 1).unwrap();
        let set = theta_set(&[0.2, 0.5, 0.9]);
        let g = unitary_gradient(&ComplexMatrix::identity(3), &state, &set).unwrap();
        assert!(g.frobenius_norm() < 1e-15);
        let mixed = StateSpec::from_populations(&[1.0, 1.0, 1.0]).unwrap();
        let v = expi_hermitian(&HermitianMatrix::from_real_symmetric(3, |i, j| (i + 2 * j) as f64 * 0.3), 1.0).unwrap();
        assert!(unitary_gradient(&v, &mixed, &set).unwrap().frobenius_norm() < 1e-14);
        let traj = kinematic_flow(&ComplexMatrix::identity(3), &state, &set, &KinematicOptions::default()).unwrap();
        assert_eq!(traj.points.len(), 1);
        assert_eq!(traj.termination, KinematicTermination::GradientConverged);
    }

    #[test]
    fn gradient_is_tangent_and_ascending() {
        let state = StateSpec::from_populations(&[0.6, 0.3, 0.1]).unwrap();
        let set = theta_set(&[0.2, 0.5, 0.9]);
        let v = expi_hermitian(&HermitianMatrix::from_real_symmetric(3, |i, j| 0.4 + (i * j) as f64 * 0.3), 1.0).unwrap();
        let g = unitary_gradient(&v, &state, &set).unwrap();
        let x = &v.adjoint() * &g;
        assert!((&x + &x.adjoint()).frobenius_norm() < 1e-12);
        let eps = 1e-6;
        let generator = HermitianMatrix::symmetrized(x.scale(num_complex::Complex64::new(0.0, 1.0)));
        // V exp(eps X) with X = -i K, K = iX Hermitian.
        let moved = &v * &expi_hermitian(&generator, eps).unwrap();
        let d = weighted_objective_at(&moved, &state, &set).unwrap() - weighted_objective_at(&v, &state, &set).unwrap();
        let expected = eps * g.frobenius_norm().powi(2);
        assert!((d - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn pure_flow_reaches_largest_eigenvalue() {
        let state = StateSpec::pure(3, 0).unwrap();
        let set = theta_set(&[0.2, 0.9, 0.5]);
        let v0 = expi_hermitian(&HermitianMatrix::from_real_symmetric(3, |i, j| 0.3 + (i + j) as f64 * 0.2), 1.0).unwrap();
        let opts = KinematicOptions {
            s_max: 200.0,
            ds_max: 1.0,
            growth: 1.2,
            ..KinematicOptions::default()
        };
        let traj = kinematic_flow(&v0, &state, &set, &opts).unwrap();
        assert!((traj.last().phi - 0.9).abs() < 1e-8);
        assert!(traj.points.windows(2).all(|w| w[1].phi >= w[0].phi));
    }

    #[test]
    fn analytic_flow_examples() {
        let e1 = [0.0, 1.0, 0.0];
        assert_eq!(analytic_purestate_flow(&e1, &[0.3, 0.1, 0.9], 7.0).unwrap(), e1.to_vec());
        for s in [0.0, 0.5, 3.0] {
            let x = analytic_purestate_flow(&[0.5, 0.5], &[0.0, 1.0], s).unwrap();
            let e = (2.0 * s).exp();
            assert!((x[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
            assert!((x[1] - e / (1.0 + e)).abs() < 1e-15);
        }
        let x = analytic_purestate_flow(&[0.3, 0.3, 0.4], &[0.5, 1.0, 0.2], 1e4).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 0.0]);
        assert!(analytic_purestate_flow(&[0.6, 0.6], &[0.0, 1.0], 1.0).is_err());
        assert!(analytic_purestate_flow(&[1.2, -0.2], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn distance_derivative_examples() {
        for s in [0.0, 1.0, 10.0] {
            assert_eq!(distance_derivative(&[0.0, 1.0], &[0.0, 1.0], 1, s).unwrap(), 0.0);
        }
        for s in [0.1, 1.0, 4.0] {
            let d = distance_derivative(&[0.5, 0.5], &[0.0, 1.0], 1, s).unwrap();
            let p = (2.0 * s).exp() / (1.0 + (2.0 * s).exp());
            let symbolic = -8.0 * p * (1.0 - p).powi(2);
            assert!(d < 0.0 && (d - symbolic).abs() < 1e-14);
        }
    }
}
