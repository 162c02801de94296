//! Control-landscape objectives and their gradients.

mod kinematic;
pub(crate) mod natural;

pub use kinematic::{
    analytic_purestate_flow, distance_derivative, kinematic_flow, unitary_gradient, weighted_objective_at,
    KinematicOptions, KinematicPoint, KinematicTermination, KinematicTrajectory,
};
pub use natural::{f_matrix, natural_basis_dimension, natural_basis_rank, NaturalBasisReport};

use num_complex::Complex64;

use crate::dynamics::{real_trace_product, PropagationResult, StateSpec};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, ComplexMatrix, HermitianMatrix, RealMatrix};

/// Observable Gram matrices at or above this condition are rejected as dependent.
pub const INDEPENDENCE_CONDITION_CAP: f64 = 1e12;

/// Observables with positive weights and optional target values.
#[derive(Clone, Debug)]
pub struct ObservableSet {
    observables: Vec<HermitianMatrix>,
    weights: Vec<f64>,
    targets: Option<Vec<f64>>,
}

impl ObservableSet {
    /// Unit weights, no targets.
    pub fn new(observables: Vec<HermitianMatrix>) -> Result<Self> {
        let m = observables.len();
        Self::with_weights(observables, vec![1.0; m])
    }

    pub fn with_weights(observables: Vec<HermitianMatrix>, weights: Vec<f64>) -> Result<Self> {
        let m = observables.len();
        if m == 0 {
            return Err(Error::InvalidInput("observable set is empty".into()));
        }
        if weights.len() != m {
            return Err(Error::Dimension(format!("{m} observables but {} weights", weights.len())));
        }
        if weights.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidInput("observable weights must be positive".into()));
        }
        let n = observables[0].dim();
        if observables.iter().any(|o| o.dim() != n) {
            return Err(Error::Dimension("observables differ in dimension".into()));
        }
        let mut gram = RealMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let g = observables[i].inner(&observables[j]);
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        let condition = condition_number(&gram);
        if condition >= INDEPENDENCE_CONDITION_CAP {
            return Err(Error::InvalidInput(format!(
                "observables are linearly dependent (Gram condition {condition:.3e})"
            )));
        }
        Ok(Self {
            observables,
            weights,
            targets: None,
        })
    }

    pub fn with_targets(mut self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} observables but {} targets",
                self.len(),
                targets.len()
            )));
        }
        self.targets = Some(targets);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.observables[0].dim()
    }

    pub fn observables(&self) -> &[HermitianMatrix] {
        &self.observables
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn targets(&self) -> Option<&[f64]> {
        self.targets.as_deref()
    }

    /// First `m` observables with their weights and targets.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::InvalidInput(format!("cannot take {m} of {} observables", self.len())));
        }
        let mut out = Self::with_weights(self.observables[..m].to_vec(), self.weights[..m].to_vec())?;
        out.targets = self.targets.as_ref().map(|t| t[..m].to_vec());
        Ok(out)
    }

    /// `Theta_M = sum_k alpha_k Theta_k`
    pub fn weighted_sum(&self) -> HermitianMatrix {
        let mut acc = HermitianMatrix::zeros(self.dim());
        for (theta, &a) in self.observables.iter().zip(&self.weights) {
            acc = &acc + &theta.scale(a);
        }
        acc
    }
}

fn check_len(phi: &[f64], set: &ObservableSet) -> Result<()> {
    if phi.len() != set.len() {
        return Err(Error::Dimension(format!(
            "{} expectation values for {} observables",
            phi.len(),
            set.len()
        )));
    }
    Ok(())
}

fn require_targets(set: &ObservableSet) -> Result<&[f64]> {
    set.targets()
        .ok_or_else(|| Error::InvalidInput("observable set has no targets".into()))
}

/// `sum_k alpha_k Phi_k`
pub fn objective_weighted(phi: &[f64], set: &ObservableSet) -> Result<f64> {
    check_len(phi, set)?;
    Ok(phi.iter().zip(set.weights()).map(|(p, a)| a * p).sum())
}

/// `sum_k alpha_k (Phi_k - chi_k)^2`
pub fn objective_targeted(phi: &[f64], set: &ObservableSet) -> Result<f64> {
    check_len(phi, set)?;
    let chi = require_targets(set)?;
    Ok(phi
        .iter()
        .zip(chi)
        .zip(set.weights())
        .map(|((p, c), a)| a * (p - c) * (p - c))
        .sum())
}

/// Functional derivative of an objective with respect to the field, on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub samples: Vec<f64>,
}

impl GradientField {
    /// Trapezoidal `int g^2 dt`.
    pub fn squared_norm(&self, weights: &[f64]) -> f64 {
        self.samples.iter().zip(weights).map(|(g, w)| g * g * w).sum()
    }
}

/// `i [rho, U^dag Theta U]`, the operator whose overlap with the sensitivity
/// gives `d <Theta> / d eps(t)`.
pub(crate) fn gradient_operator(u: &ComplexMatrix, rho: &HermitianMatrix, theta: &HermitianMatrix) -> ComplexMatrix {
    let theta_t = theta.transform(u);
    rho.as_matrix()
        .commutator(theta_t.as_matrix())
        .scale(Complex64::new(0.0, 1.0))
}

/// `d <Theta> / d eps(t_j)` for an arbitrary operator, one value per grid node.
pub(crate) fn operator_gradient(prop: &PropagationResult, rho: &HermitianMatrix, theta: &HermitianMatrix) -> Result<Vec<f64>> {
    let c = gradient_operator(prop.final_propagator(), rho, theta);
    prop.sensitivity
        .iter()
        .map(|s| real_trace_product(s.as_matrix(), &c, "field gradient"))
        .collect()
}

/// Unweighted single-observable gradients, one row per observable.
pub fn observable_gradients(prop: &PropagationResult, state: &StateSpec, set: &ObservableSet) -> Result<Vec<Vec<f64>>> {
    check_dims(prop, state, set)?;
    set.observables()
        .iter()
        .map(|theta| operator_gradient(prop, state.rho0(), theta))
        .collect()
}

fn check_dims(prop: &PropagationResult, state: &StateSpec, set: &ObservableSet) -> Result<()> {
    if prop.dim() != state.dim() || set.dim() != state.dim() {
        return Err(Error::Dimension("propagation, state and observables must share a dimension".into()));
    }
    Ok(())
}

/// Gradient of the weighted objective.
pub fn gradient_field(prop: &PropagationResult, state: &StateSpec, set: &ObservableSet) -> Result<GradientField> {
    let rows = observable_gradients(prop, state, set)?;
    Ok(GradientField {
        samples: combine_rows(&rows, set.weights().iter().copied()),
    })
}

/// Gradient of the targeted objective.
pub fn gradient_field_targeted(prop: &PropagationResult, state: &StateSpec, set: &ObservableSet) -> Result<GradientField> {
    let chi = require_targets(set)?.to_vec();
    let phi = crate::dynamics::expectations(prop, state, set)?;
    let rows = observable_gradients(prop, state, set)?;
    let coefficients = phi
        .iter()
        .zip(&chi)
        .zip(set.weights())
        .map(|((p, c), a)| 2.0 * a * (p - c));
    Ok(GradientField {
        samples: combine_rows(&rows, coefficients),
    })
}

fn combine_rows(rows: &[Vec<f64>], coefficients: impl Iterator<Item = f64>) -> Vec<f64> {
    let q = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; q];
    for (row, c) in rows.iter().zip(coefficients) {
        for (o, r) in out.iter_mut().zip(row) {
            *o += c * r;
        }
    }
    out
}
