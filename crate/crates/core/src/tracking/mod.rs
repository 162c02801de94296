//! Homotopy tracking: Gramians, free functions and the tracking right-hand sides.

mod target;

pub use target::{
    geodesic_target_observables, geodesic_target_unitary, straight_target_between, straight_target_observables,
    ObservableTrack, TrackTarget, UnitaryTrack,
};

use crate::dynamics::{expectations, ControlField, PropagationResult, StateSpec};
use crate::error::{Error, Result};
use crate::landscape::natural::{sampled_singular_values, weighted_gram};
use crate::landscape::{f_matrix, observable_gradients, ObservableSet};
use crate::linalg::{
    condition_from_singular_values, from_hermitian_coords, hermitian_coords, log_unitary_principal, solve_linear,
    ComplexMatrix, HermitianMatrix, RealMatrix, SolveMode,
};

/// Hard cap on the MOTC Gramian condition number.
pub const GAMMA_CONDITION_CAP: f64 = 1e14;
/// Above this condition number Gramian solves switch to truncated pseudo-inverses.
pub const REGULARIZE_ABOVE: f64 = 1e10;
pub const DEFAULT_BETA: f64 = 10.0;

/// Rounding allowance on the track parameter range.
const S_SLACK: f64 = 1e-9;

/// Gram matrix of a set of sampled functions with its conditioning.
#[derive(Clone, Debug)]
pub struct GramianReport {
    pub matrix: RealMatrix,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `+inf` when singular.
    pub condition: f64,
}

fn gramian(functions: &[Vec<f64>], weights: &[f64]) -> Result<GramianReport> {
    let singular_values: Vec<f64> = sampled_singular_values(functions, weights)?
        .into_iter()
        .map(|s| s * s)
        .collect();
    Ok(GramianReport {
        matrix: weighted_gram(functions, weights),
        condition: condition_from_singular_values(&singular_values),
        singular_values,
    })
}

/// `Gamma_ij = int a_i(t) a_j(t) dt` by trapezoidal quadrature.
pub fn gramian_motc(a: &[Vec<f64>], weights: &[f64]) -> Result<GramianReport> {
    if a.is_empty() {
        return Err(Error::InvalidInput("MOTC Gramian needs at least one row".into()));
    }
    gramian(a, weights)
}

/// Real-basis coordinates of the sensitivities: row `k` is `t_j -> v_k(S(t_j))`.
fn sensitivity_coordinates(prop: &PropagationResult) -> Vec<Vec<f64>> {
    let n = prop.dim();
    let mut rows = vec![Vec::with_capacity(prop.q()); n * n];
    for s in &prop.sensitivity {
        for (row, v) in rows.iter_mut().zip(hermitian_coords(s)) {
            row.push(v);
        }
    }
    rows
}

/// The N^2 x N^2 unitary-tracking Gramian `G = int v(S(t)) v(S(t))^T dt`.
pub fn gramian_unitary(prop: &PropagationResult) -> Result<GramianReport> {
    let singular_values: Vec<f64> = sampled_singular_values(&sensitivity_coordinates(prop), &prop.weights)?
        .into_iter()
        .map(|s| s * s)
        .collect();
    Ok(GramianReport {
        matrix: f_matrix(prop),
        condition: condition_from_singular_values(&singular_values),
        singular_values,
    })
}

/// Row `i`, column `j`: `d <Theta_i> / d eps(t_j)`.
pub fn motc_a_vector(prop: &PropagationResult, state: &StateSpec, set: &ObservableSet) -> Result<Vec<Vec<f64>>> {
    observable_gradients(prop, state, set)
}

/// `f(t) = -eps(t) w(t) / eta`, the free function that minimizes fluence.
pub fn free_function_min_fluence(field: &ControlField, eta: f64, w: &[f64]) -> Result<Vec<f64>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidInput(format!("fluence parameter eta must be positive, got {eta}")));
    }
    if w.len() != field.len() {
        return Err(Error::Dimension(format!("weight has {} samples, field has {}", w.len(), field.len())));
    }
    if let Some(bad) = w.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput(format!("fluence weight must be positive, got {bad}")));
    }
    Ok(field.samples().iter().zip(w).map(|(e, w)| -e * w / eta).collect())
}

/// Component of `d eps / ds` left free by the tracking constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FreeFunction {
    Zero,
    /// Minimal fluence with unit weight.
    MinFluence { eta: f64 },
}

impl FreeFunction {
    pub fn samples(&self, field: &ControlField) -> Result<Vec<f64>> {
        match *self {
            FreeFunction::Zero => Ok(vec![0.0; field.len()]),
            FreeFunction::MinFluence { eta } => free_function_min_fluence(field, eta, &vec![1.0; field.len()]),
        }
    }
}

/// Observable-tracking error correction: `beta (w_s - Phi_s)` is added to `dw/ds`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Correction {
    Off,
    Proportional { beta: f64 },
}

impl Default for Correction {
    fn default() -> Self {
        Correction::Proportional { beta: DEFAULT_BETA }
    }
}

/// Unitary-tracking error correction: heads along the geodesic from `U_s(T)`
/// to `Q_s`, reaching it over one step of length `step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnitaryCorrection {
    Off,
    Geodesic { step: f64 },
}

/// How Gramian systems are solved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramianPolicy {
    /// Conditions above this are a singular-track error.
    pub cap: f64,
    pub regularize_above: f64,
    /// Relative singular-value cutoff of the regularized solve.
    pub cutoff: f64,
}

impl GramianPolicy {
    pub fn motc() -> Self {
        GramianPolicy {
            cap: GAMMA_CONDITION_CAP,
            regularize_above: REGULARIZE_ABOVE,
            cutoff: SolveMode::DEFAULT_CUTOFF,
        }
    }

    /// No hard cap: G is routinely far more ill-conditioned than Gamma.
    pub fn unitary() -> Self {
        GramianPolicy {
            cap: f64::INFINITY,
            ..Self::motc()
        }
    }

    fn solve(&self, report: &GramianReport, rhs: Vec<f64>) -> Result<Vec<f64>> {
        if report.condition > self.cap {
            return Err(Error::SingularTrack {
                condition: report.condition,
                cap: self.cap,
            });
        }
        let mode = if report.condition > self.regularize_above {
            SolveMode::Regularized { cutoff: self.cutoff }
        } else {
            SolveMode::Strict
        };
        Ok(solve_linear(&report.matrix, &[rhs], mode)?.remove(0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDerivative {
    pub samples: Vec<f64>,
}

/// One tracking right-hand-side evaluation and the diagnostics behind it.
#[derive(Clone, Debug)]
pub struct TrackingRhs {
    pub derivative: FieldDerivative,
    pub condition: f64,
    /// Observable values at the current field (empty for unitary tracks).
    pub phi: Vec<f64>,
    /// `w_s` (empty for unitary tracks).
    pub target: Vec<f64>,
    /// `max_k |Phi_k - w_k|` for observable tracks, `||U_s(T) - Q_s||_F` for unitary tracks.
    pub deviation: f64,
}

fn check_free(f: &[f64], q: usize) -> Result<()> {
    if f.len() != q {
        return Err(Error::Dimension(format!("free function has {} samples, grid has {q}", f.len())));
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("free function"));
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if !(-S_SLACK..=1.0 + S_SLACK).contains(&s) {
        return Err(Error::InvalidInput(format!("track parameter s = {s} outside [0, 1]")));
    }
    Ok(())
}

/// Least-norm update `f + sum_k c_k a_k` with `Gamma c = rate - int a f dt`.
/// Returns the derivative samples and the Gramian condition number.
pub fn solve_tracking(
    a: &[Vec<f64>],
    weights: &[f64],
    rate: &[f64],
    f: &[f64],
    policy: &GramianPolicy,
) -> Result<(Vec<f64>, f64)> {
    if rate.len() != a.len() {
        return Err(Error::Dimension(format!("{} rates for {} tracked functions", rate.len(), a.len())));
    }
    check_free(f, weights.len())?;
    let report = gramian_motc(a, weights)?;
    let rhs: Vec<f64> = a
        .iter()
        .zip(rate)
        .map(|(row, r)| r - row.iter().zip(f).zip(weights).map(|((x, y), w)| x * y * w).sum::<f64>())
        .collect();
    let c = policy.solve(&report, rhs)?;
    let mut out = f.to_vec();
    for (row, ck) in a.iter().zip(&c) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += ck * x;
        }
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("tracking derivative"));
    }
    Ok((out, report.condition))
}

/// Everything an MOTC right-hand side needs besides the current propagation.
#[derive(Clone, Debug)]
pub struct MotcProblem<'a> {
    pub state: &'a StateSpec,
    pub set: &'a ObservableSet,
    pub track: &'a ObservableTrack,
    pub correction: Correction,
    pub policy: GramianPolicy,
}

impl MotcProblem<'_> {
    pub fn rhs(&self, prop: &PropagationResult, s: f64, f: &[f64]) -> Result<TrackingRhs> {
        check_s(s)?;
        if self.track.len() != self.set.len() {
            return Err(Error::Dimension(format!(
                "track has {} components, observable set has {}",
                self.track.len(),
                self.set.len()
            )));
        }
        let phi = expectations(prop, self.state, self.set)?;
        let target = self.track.value(s)?;
        let mut rate = self.track.rate(s)?;
        if let Correction::Proportional { beta } = self.correction {
            for ((r, w), p) in rate.iter_mut().zip(&target).zip(&phi) {
                *r += beta * (w - p);
            }
        }
        let a = motc_a_vector(prop, self.state, self.set)?;
        let (samples, condition) = solve_tracking(&a, &prop.weights, &rate, f, &self.policy)?;
        let deviation = phi.iter().zip(&target).map(|(p, w)| (p - w).abs()).fold(0.0, f64::max);
        Ok(TrackingRhs {
            derivative: FieldDerivative { samples },
            condition,
            phi,
            target,
            deviation,
        })
    }
}

/// `d eps_s(t) / ds` that moves the observables along an observable track.
pub fn motc_rhs(
    prop: &PropagationResult,
    state: &StateSpec,
    set: &ObservableSet,
    target: &TrackTarget,
    s: f64,
    f: &[f64],
    correction: Correction,
) -> Result<FieldDerivative> {
    let problem = MotcProblem {
        state,
        set,
        track: target.as_observable()?,
        correction,
        policy: GramianPolicy::motc(),
    };
    Ok(problem.rhs(prop, s, f)?.derivative)
}

/// Hermitian target `-i U^dag dU/ds` for tracking `Q_s` from the current `U`:
/// the Hermitian part of `U^dag Q_s A`, plus the correction term.
pub fn unitary_tracking_rate(
    u: &ComplexMatrix,
    track: &UnitaryTrack,
    s: f64,
    correction: UnitaryCorrection,
) -> Result<HermitianMatrix> {
    let q = track.point(s);
    let uq = &u.adjoint() * &q;
    let mut rate = HermitianMatrix::symmetrized(&uq * track.generator().as_matrix());
    if let UnitaryCorrection::Geodesic { step } = correction {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidInput(format!("correction step must be positive, got {step}")));
        }
        rate = &rate + &log_unitary_principal(&uq)?.scale(1.0 / step);
    }
    Ok(rate)
}

/// Everything a unitary-tracking right-hand side needs besides the propagation.
#[derive(Clone, Debug)]
pub struct UnitaryProblem<'a> {
    pub track: &'a UnitaryTrack,
    pub correction: UnitaryCorrection,
    pub policy: GramianPolicy,
}

impl UnitaryProblem<'_> {
    /// Solves `int S(t) d eps/ds dt = rate` through `G` in operator form:
    /// `d eps/ds = f + Tr(S(t) C)` with `G v(C) = v(rate - int S f dt)`.
    pub fn rhs(&self, prop: &PropagationResult, s: f64, f: &[f64]) -> Result<TrackingRhs> {
        check_s(s)?;
        let n = prop.dim();
        if self.track.u0().dim() != n {
            return Err(Error::Dimension("track and propagation dimensions differ".into()));
        }
        check_free(f, prop.q())?;
        let u = prop.final_propagator();
        let rate = unitary_tracking_rate(u, self.track, s, self.correction)?;
        let mut driven = ComplexMatrix::zeros(n);
        for ((sj, fj), wj) in prop.sensitivity.iter().zip(f).zip(&prop.weights) {
            if *fj != 0.0 {
                driven = &driven + &sj.as_matrix().scale_real(fj * wj);
            }
        }
        let residual = &rate - &HermitianMatrix::symmetrized(driven);
        let report = gramian_unitary(prop)?;
        let c = from_hermitian_coords(n, &self.policy.solve(&report, hermitian_coords(&residual))?)?;
        let samples: Vec<f64> = prop
            .sensitivity
            .iter()
            .zip(f)
            .map(|(sj, fj)| fj + sj.inner(&c))
            .collect();
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tracking derivative"));
        }
        Ok(TrackingRhs {
            derivative: FieldDerivative { samples },
            condition: report.condition,
            phi: Vec::new(),
            target: Vec::new(),
            deviation: (u - &self.track.point(s)).frobenius_norm(),
        })
    }
}

/// `d eps_s(t) / ds` that moves `U_s(T)` along a unitary track.
pub fn unitary_rhs(
    prop: &PropagationResult,
    target: &TrackTarget,
    s: f64,
    f: &[f64],
    correction: UnitaryCorrection,
) -> Result<FieldDerivative> {
    let problem = UnitaryProblem {
        track: target.as_unitary()?,
        correction,
        policy: GramianPolicy::unitary(),
    };
    Ok(problem.rhs(prop, s, f)?.derivative)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{build_model_system, sample_random_field};
    use crate::dynamics::{propagate, QuantumSystem};
    use crate::linalg::{eig_symmetric, expi_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_system(levels: usize) -> (QuantumSystem, ControlField) {
        let sys = build_model_system(levels, 100.0, 1001).unwrap();
        let field = sample_random_field(&sys, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        (sys, field)
    }

    fn small_set() -> ObservableSet {
        ObservableSet::new(vec![
            HermitianMatrix::from_real_diagonal(&[0.2, 0.9, 0.5]),
            HermitianMatrix::from_real_diagonal(&[1.0, 0.0, 0.0]),
        ])
        .unwrap()
    }

    fn nearby(u: &ComplexMatrix, seed: f64) -> ComplexMatrix {
        let h = HermitianMatrix::from_real_symmetric(u.dim(), |i, j| seed * ((i + 2 * j) as f64).sin());
        u * &expi_hermitian(&h, 1.0).unwrap()
    }

    #[test]
    fn zero_a_vector_is_singular() {
        let report = gramian_motc(&[vec![0.0; 5]], &[1.0; 5]).unwrap();
        assert_eq!(report.matrix[(0, 0)], 0.0);
        assert!(report.condition.is_infinite());
    }

    #[test]
    fn scalar_gramian_and_scale_covariance() {
        let w = [0.5, 1.0, 1.0, 0.5];
        let a = vec![vec![1.0, -2.0, 0.5, 3.0], vec![0.3, 0.1, -1.0, 2.0]];
        let g1 = gramian_motc(&a[..1], &w).unwrap();
        assert!((g1.matrix[(0, 0)] - (0.5 + 4.0 + 0.25 + 4.5)).abs() < 1e-12);
        let g = gramian_motc(&a, &w).unwrap();
        let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| 3.0 * x).collect()).collect();
        let gs = gramian_motc(&scaled, &w).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((gs.matrix[(i, j)] - 9.0 * g.matrix[(i, j)]).abs() < 1e-10 * gs.matrix[(i, j)].abs().max(1.0));
            }
        }
        assert!((gs.condition / g.condition - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unitary_gramian_is_psd_and_rank_bounded() {
        let (sys, field) = small_system(3);
        let report = gramian_unitary(&propagate(&sys, &field).unwrap()).unwrap();
        assert!(report.matrix.max_asymmetry() <= 1e-10);
        let eig = eig_symmetric(&report.matrix).unwrap();
        let top = eig.eigenvalues[8];
        assert!(eig.eigenvalues[0] >= -1e-8 * top);
        assert!(report.condition.is_finite());
        assert!(report.singular_values.windows(2).all(|p| p[0] >= p[1]));

        let short = sys.with_grid(6).unwrap();
        let coarse = ControlField::from_fn(&short, |t| t.sin()).unwrap();
        let report = gramian_unitary(&propagate(&short, &coarse).unwrap()).unwrap();
        assert_eq!(report.singular_values.len(), 9);
        assert!(report.condition.is_infinite());
    }

    #[test]
    fn min_fluence_free_function() {
        let field = ControlField::new(vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(free_function_min_fluence(&field, 1.0, &[1.0; 3]).unwrap(), vec![-1.0, 2.0, -0.5]);
        let half = free_function_min_fluence(&field, 2.0, &[1.0; 3]).unwrap();
        assert_eq!(half, vec![-0.5, 1.0, -0.25]);
        assert!(free_function_min_fluence(&ControlField::zeros(3), 5.0, &[1.0; 3])
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        assert!(free_function_min_fluence(&field, 0.0, &[1.0; 3]).is_err());
        assert!(free_function_min_fluence(&field, 1.0, &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn a_vector_rows_match_single_observable_gradients() {
        let (sys, field) = small_system(3);
        let prop = propagate(&sys, &field).unwrap();
        let state = StateSpec::from_populations(&[0.6, 0.3, 0.1]).unwrap();
        let set = small_set();
        let a = motc_a_vector(&prop, &state, &set).unwrap();
        for (k, row) in a.iter().enumerate() {
            let single = ObservableSet::new(vec![set.observables()[k].clone()]).unwrap();
            let g = crate::landscape::gradient_field(&prop, &state, &single).unwrap();
            assert_eq!(row, &g.samples);
            let gamma = gramian_motc(&a[k..=k], &prop.weights).unwrap();
            assert!((gamma.matrix[(0, 0)] - g.squared_norm(&prop.weights)).abs() < 1e-10);
        }
        let mixed = StateSpec::from_populations(&[1.0, 1.0, 1.0]).unwrap();
        assert!(motc_a_vector(&prop, &mixed, &set).unwrap().iter().flatten().all(|x| x.abs() < 1e-12));
        let identity = ObservableSet::new(vec![HermitianMatrix::identity(3)]).unwrap();
        assert!(motc_a_vector(&prop, &state, &identity).unwrap()[0].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn stationary_track_gives_zero_derivative() {
        let (sys, field) = small_system(3);
        let prop = propagate(&sys, &field).unwrap();
        let state = StateSpec::from_populations(&[0.6, 0.3, 0.1]).unwrap();
        let set = small_set();
        let phi = expectations(&prop, &state, &set).unwrap();
        let target = straight_target_observables(phi.clone(), phi).unwrap();
        let d = motc_rhs(&prop, &state, &set, &target, 0.3, &vec![0.0; sys.q()], Correction::default()).unwrap();
        assert!(d.samples.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn scalar_flow_reduction() {
        let (sys, field) = small_system(3);
        let prop = propagate(&sys, &field).unwrap();
        let state = StateSpec::from_populations(&[0.6, 0.3, 0.1]).unwrap();
        let set = small_set().truncated(1).unwrap();
        let u0 = prop.final_propagator().clone();
        let target = geodesic_target_observables(&u0, &nearby(&u0, 0.4), &state, &set).unwrap();
        let f = FreeFunction::MinFluence { eta: 7.0 }.samples(&field).unwrap();
        let beta = 10.0;
        let s = 0.25;
        let d = motc_rhs(&prop, &state, &set, &target, s, &f, Correction::Proportional { beta }).unwrap();

        let track = target.as_observable().unwrap();
        let a = &motc_a_vector(&prop, &state, &set).unwrap()[0];
        let gamma: f64 = a.iter().zip(&prop.weights).map(|(x, w)| x * x * w).sum();
        let af: f64 = a.iter().zip(&f).zip(&prop.weights).map(|((x, y), w)| x * y * w).sum();
        let phi = expectations(&prop, &state, &set).unwrap()[0];
        let dp = track.rate(s).unwrap()[0] + beta * (track.value(s).unwrap()[0] - phi);
        for ((got, aj), fj) in d.samples.iter().zip(a).zip(&f) {
            let expected = fj + aj / gamma * (dp - af);
            assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn least_norm_update_lies_in_row_space() {
        let (sys, field) = small_system(3);
        let prop = propagate(&sys, &field).unwrap();
        let state = StateSpec::from_populations(&[0.6, 0.3, 0.1]).unwrap();
        let set = small_set();
        let u0 = prop.final_propagator().clone();
        let target = geodesic_target_observables(&u0, &nearby(&u0, 0.3), &state, &set).unwrap();
        let d = motc_rhs(&prop, &state, &set, &target, 0.0, &vec![0.0; sys.q()], Correction::Off).unwrap();
        let a = motc_a_vector(&prop, &state, &set).unwrap();
        // Project onto span(a) in the weighted inner product and compare.
        let g = gramian_motc(&a, &prop.weights).unwrap();
        let proj_rhs: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(&d.samples).zip(&prop.weights).map(|((x, y), w)| x * y * w).sum())
            .collect();
        let c = solve_linear(&g.matrix, &[proj_rhs.clone()], SolveMode::Strict).unwrap().remove(0);
        let norm: f64 = d.samples.iter().map(|x| x * x).sum::<f64>().sqrt();
        let residual: f64 = (0..sys.q())
            .map(|j| {
                let p: f64 = a.iter().zip(&c).map(|(row, ck)| ck * row[j]).sum();
                (d.samples[j] - p).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        assert!(residual <= 1e-8 * norm.max(1.0));
        // The constraint itself holds.
        let rate = target.as_observable().unwrap().rate(0.0).unwrap();
        for (got, want) in proj_rhs.iter().zip(&rate) {
            assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn motc_first_order_consistency() {
        let sys = build_model_system(11, 100.0, 1024).unwrap();
        let field = sample_random_field(&sys, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let state = crate::bench::build_truncated_thermal_state(&sys, 1.0, 7).unwrap();
        let set = crate::bench::build_observable_set(11, 2, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let prop = propagate(&sys, &field).unwrap();
        let u0 = prop.final_propagator().clone();
        let target = geodesic_target_observables(&u0, &nearby(&u0, 0.2), &state, &set).unwrap();
        let problem = MotcProblem {
            state: &state,
            set: &set,
            track: target.as_observable().unwrap(),
            correction: Correction::default(),
            policy: GramianPolicy::motc(),
        };
        let rhs = problem.rhs(&prop, 0.0, &vec![0.0; sys.q()]).unwrap();
        let ds = 1e-3;
        let moved = propagate(&sys, &field.axpy(ds, &rhs.derivative.samples).unwrap()).unwrap();
        let phi1 = expectations(&moved, &state, &set).unwrap();
        let rate = target.as_observable().unwrap().rate(0.0).unwrap();
        for ((p1, p0), r) in phi1.iter().zip(&rhs.phi).zip(&rate) {
            let predicted = ds * r;
            assert!(((p1 - p0) - predicted).abs() <= 5e-2 * predicted.abs());
        }
    }

    #[test]
    fn unitary_correction_vanishes_on_track() {
        let (sys, field) = small_system(3);
        let u = propagate(&sys, &field).unwrap().final_propagator().clone();
        let target = geodesic_target_unitary(&u, &nearby(&u, 0.3)).unwrap();
        let track = target.as_unitary().unwrap();
        let plain = unitary_tracking_rate(&u, track, 0.0, UnitaryCorrection::Off).unwrap();
        let corrected = unitary_tracking_rate(&u, track, 0.0, UnitaryCorrection::Geodesic { step: 1e-3 }).unwrap();
        assert!(plain.as_matrix().max_abs_diff(corrected.as_matrix()) < 1e-9);
        assert!(plain.as_matrix().max_abs_diff(track.generator().as_matrix()) < 1e-12);
    }

    #[test]
    fn stationary_unitary_track_gives_zero_derivative() {
        let (sys, field) = small_system(3);
        let prop = propagate(&sys, &field).unwrap();
        let u = prop.final_propagator().clone();
        let target = geodesic_target_unitary(&u, &u).unwrap();
        let d = unitary_rhs(&prop, &target, 0.5, &vec![0.0; sys.q()], UnitaryCorrection::Off).unwrap();
        assert!(d.samples.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn unitary_tracking_is_an_motc_instance() {
        let (sys, field) = small_system(3);
        let prop = propagate(&sys, &field).unwrap();
        let u = prop.final_propagator().clone();
        let target = geodesic_target_unitary(&u, &nearby(&u, 0.5)).unwrap();
        let f = FreeFunction::MinFluence { eta: 3.0 }.samples(&field).unwrap();
        let s = 0.4;
        let correction = UnitaryCorrection::Geodesic { step: 0.05 };
        let direct = unitary_rhs(&prop, &target, s, &f, correction).unwrap();
        // Observables: real-basis components of -i log(Q^dag U), whose derivatives are v(S(t)).
        let a = sensitivity_coordinates(&prop);
        let rate = hermitian_coords(&unitary_tracking_rate(&u, target.as_unitary().unwrap(), s, correction).unwrap());
        let (via_motc, cond) = solve_tracking(&a, &prop.weights, &rate, &f, &GramianPolicy::unitary()).unwrap();
        let scale = direct.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in direct.samples.iter().zip(&via_motc) {
            assert!((x - y).abs() <= 1e-8 * scale, "{x} {y} {scale} {cond:e}");
        }
    }

    #[test]
    fn unitary_first_order_consistency() {
        let (sys, field) = small_system(3);
        let prop = propagate(&sys, &field).unwrap();
        let u = prop.final_propagator().clone();
        let target = geodesic_target_unitary(&u, &nearby(&u, 0.5)).unwrap();
        let track = target.as_unitary().unwrap();
        let d = unitary_rhs(&prop, &target, 0.0, &vec![0.0; sys.q()], UnitaryCorrection::Off).unwrap();
        let miss = |ds: f64| {
            let moved = propagate(&sys, &field.axpy(ds, &d.samples).unwrap()).unwrap();
            let linear = &u + &track.derivative(0.0).scale_real(ds);
            (moved.final_propagator() - &linear).frobenius_norm()
        };
        let (e1, e2) = (miss(1e-3), miss(5e-4));
        assert!(e1 < 1e-4, "{e1} {e2}");
        assert!((e1 / e2 - 4.0).abs() < 0.4, "ratio {}", e1 / e2);
    }
}
