//! Prescribed paths for the tracking engines.

use num_complex::Complex64;

use crate::dynamics::{expectations_at, real_trace_product, StateSpec};
use crate::error::{Error, Result};
use crate::landscape::ObservableSet;
use crate::linalg::{eig_hermitian, log_unitary_principal, ComplexMatrix, EigDecomposition, HermitianMatrix, C_I};

const UNITARY_TOLERANCE: f64 = 1e-8;

/// Geodesic `Q_s = U0 exp(iAs)` in U(N), with `Q_1 = W`.
#[derive(Clone, Debug)]
pub struct UnitaryTrack {
    u0: ComplexMatrix,
    w: ComplexMatrix,
    generator: HermitianMatrix,
    eig: EigDecomposition,
}

impl UnitaryTrack {
    pub fn u0(&self) -> &ComplexMatrix {
        &self.u0
    }

    pub fn w(&self) -> &ComplexMatrix {
        &self.w
    }

    /// `A = -i log(U0^dag W)`.
    pub fn generator(&self) -> &HermitianMatrix {
        &self.generator
    }

    /// `exp(iAs)`
    fn phase(&self, s: f64) -> ComplexMatrix {
        self.eig.apply(|lam| Complex64::from_polar(1.0, lam * s))
    }

    /// `Q_s`
    pub fn point(&self, s: f64) -> ComplexMatrix {
        &self.u0 * &self.phase(s)
    }

    /// `dQ/ds = Q_s iA`
    pub fn derivative(&self, s: f64) -> ComplexMatrix {
        &self.point(s) * &self.generator.as_matrix().scale(C_I)
    }

    /// Frobenius length of the path over `s in [0, 1]`, which is `||A||_F`.
    pub fn pathlength(&self) -> f64 {
        self.generator.as_matrix().frobenius_norm()
    }
}

#[derive(Clone, Debug)]
enum ObservablePath {
    Geodesic {
        geodesic: UnitaryTrack,
        rho: HermitianMatrix,
        observables: Vec<HermitianMatrix>,
    },
    Straight {
        start: Vec<f64>,
        end: Vec<f64>,
    },
}

/// Path `w_s` through multiobservable space with its derivative.
#[derive(Clone, Debug)]
pub struct ObservableTrack {
    path: ObservablePath,
}

impl ObservableTrack {
    pub fn len(&self) -> usize {
        match &self.path {
            ObservablePath::Geodesic { observables, .. } => observables.len(),
            ObservablePath::Straight { start, .. } => start.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The unitary geodesic inducing this path, when there is one.
    pub fn geodesic(&self) -> Option<&UnitaryTrack> {
        match &self.path {
            ObservablePath::Geodesic { geodesic, .. } => Some(geodesic),
            ObservablePath::Straight { .. } => None,
        }
    }

    /// `w_s`
    pub fn value(&self, s: f64) -> Result<Vec<f64>> {
        match &self.path {
            ObservablePath::Geodesic {
                geodesic,
                rho,
                observables,
            } => {
                let q = geodesic.point(s);
                let rho_s = rho.transform_adjoint(&q);
                observables
                    .iter()
                    .map(|theta| real_trace_product(rho_s.as_matrix(), theta.as_matrix(), "track value"))
                    .collect()
            }
            ObservablePath::Straight { start, end } => {
                Ok(start.iter().zip(end).map(|(a, b)| (1.0 - s) * a + s * b).collect())
            }
        }
    }

    /// `dw_s/ds`; for the geodesic path `Tr(rho i[M_k(s), A])` with
    /// `M_k(s) = Q_s^dag Theta_k Q_s`.
    pub fn rate(&self, s: f64) -> Result<Vec<f64>> {
        match &self.path {
            ObservablePath::Geodesic {
                geodesic,
                rho,
                observables,
            } => {
                let q = geodesic.point(s);
                let a = geodesic.generator.as_matrix();
                observables
                    .iter()
                    .map(|theta| {
                        let m = theta.transform(&q);
                        let c = m.as_matrix().commutator(a).scale(C_I);
                        real_trace_product(rho.as_matrix(), &c, "track derivative")
                    })
                    .collect()
            }
            ObservablePath::Straight { start, end } => Ok(end.iter().zip(start).map(|(b, a)| b - a).collect()),
        }
    }
}

/// A prescribed path for tracking, parameterized over `s in [0, 1]`.
#[derive(Clone, Debug)]
pub enum TrackTarget {
    Unitary(UnitaryTrack),
    Observable(ObservableTrack),
}

impl TrackTarget {
    pub fn as_unitary(&self) -> Result<&UnitaryTrack> {
        match self {
            TrackTarget::Unitary(t) => Ok(t),
            TrackTarget::Observable(_) => Err(Error::InvalidInput("expected a unitary track".into())),
        }
    }

    pub fn as_observable(&self) -> Result<&ObservableTrack> {
        match self {
            TrackTarget::Observable(t) => Ok(t),
            TrackTarget::Unitary(_) => Err(Error::InvalidInput("expected an observable track".into())),
        }
    }
}

fn check_unitary(u: &ComplexMatrix) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::NonFinite("track endpoint"));
    }
    let deviation = u.unitarity_deviation();
    if deviation > UNITARY_TOLERANCE {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

fn geodesic(u0: &ComplexMatrix, w: &ComplexMatrix) -> Result<UnitaryTrack> {
    if u0.dim() != w.dim() {
        return Err(Error::Dimension("geodesic endpoints differ in dimension".into()));
    }
    check_unitary(u0)?;
    check_unitary(w)?;
    let generator = log_unitary_principal(&(&u0.adjoint() * w))?;
    let eig = eig_hermitian(&generator)?;
    Ok(UnitaryTrack {
        u0: u0.clone(),
        w: w.clone(),
        generator,
        eig,
    })
}

/// Minimal geodesic from `U0` to `W`.
pub fn geodesic_target_unitary(u0: &ComplexMatrix, w: &ComplexMatrix) -> Result<TrackTarget> {
    Ok(TrackTarget::Unitary(geodesic(u0, w)?))
}

/// Expectation values along the geodesic from `U0` to `W`:
/// `w_s^k = Tr(rho Q_s^dag Theta_k Q_s)`.
pub fn geodesic_target_observables(
    u0: &ComplexMatrix,
    w: &ComplexMatrix,
    state: &StateSpec,
    set: &ObservableSet,
) -> Result<TrackTarget> {
    if state.dim() != u0.dim() || set.dim() != u0.dim() {
        return Err(Error::Dimension("geodesic, state and observables must share a dimension".into()));
    }
    Ok(TrackTarget::Observable(ObservableTrack {
        path: ObservablePath::Geodesic {
            geodesic: geodesic(u0, w)?,
            rho: state.rho0().clone(),
            observables: set.observables().to_vec(),
        },
    }))
}

/// `w_s = (1 - s) start + s end`.
pub fn straight_target_observables(start: Vec<f64>, end: Vec<f64>) -> Result<TrackTarget> {
    if start.len() != end.len() || start.is_empty() {
        return Err(Error::Dimension(format!(
            "straight track endpoints have lengths {} and {}",
            start.len(),
            end.len()
        )));
    }
    if start.iter().chain(&end).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("straight track endpoint"));
    }
    Ok(TrackTarget::Observable(ObservableTrack {
        path: ObservablePath::Straight { start, end },
    }))
}

/// Straight track from the expectations at `U0` to those at `W`.
pub fn straight_target_between(
    u0: &ComplexMatrix,
    w: &ComplexMatrix,
    state: &StateSpec,
    set: &ObservableSet,
) -> Result<TrackTarget> {
    straight_target_observables(expectations_at(u0, state, set)?, expectations_at(w, state, set)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expi_hermitian;

    fn random_unitary(n: usize, seed: u64) -> ComplexMatrix {
        let mut x = seed as f64;
        let h = HermitianMatrix::symmetrized(ComplexMatrix::from_fn(n, |_, _| {
            x = (x * 1.618 + 0.37).fract();
            let re = x - 0.5;
            x = (x * 2.414 + 0.11).fract();
            Complex64::new(re, x - 0.5)
        }));
        expi_hermitian(&h, 1.0).unwrap()
    }

    fn three_level() -> (StateSpec, ObservableSet) {
        let state = StateSpec::from_populations(&[0.6, 0.3, 0.1]).unwrap();
        let set = ObservableSet::new(vec![
            HermitianMatrix::from_real_diagonal(&[0.2, 0.9, 0.5]),
            HermitianMatrix::from_real_diagonal(&[1.0, 0.0, 0.0]),
        ])
        .unwrap();
        (state, set)
    }

    #[test]
    fn null_geodesic() {
        let u = random_unitary(3, 1);
        let t = geodesic_target_unitary(&u, &u).unwrap();
        let t = t.as_unitary().unwrap();
        assert!(t.pathlength() < 1e-10);
        assert!(t.point(0.4).max_abs_diff(&u) < 1e-10);
    }

    #[test]
    fn geodesic_endpoints_and_length() {
        let (u0, w) = (random_unitary(4, 2), random_unitary(4, 3));
        let target = geodesic_target_unitary(&u0, &w).unwrap();
        let t = target.as_unitary().unwrap();
        assert!(t.point(0.0).max_abs_diff(&u0) < 1e-8);
        assert!(t.point(1.0).max_abs_diff(&w) < 1e-8);
        // Simpson quadrature of the speed.
        let n = 200;
        let h = 1.0 / n as f64;
        let length: f64 = (0..=n)
            .map(|k| {
                let c = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                c * t.derivative(k as f64 * h).frobenius_norm()
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((length - t.pathlength()).abs() < 1e-6);
        let fd = (&t.point(0.3 + 1e-6) - &t.point(0.3 - 1e-6)).scale_real(0.5e6);
        assert!(fd.max_abs_diff(&t.derivative(0.3)) < 1e-6);
    }

    #[test]
    fn observable_geodesic_endpoints_and_rate() {
        let (state, set) = three_level();
        let (u0, w) = (random_unitary(3, 4), random_unitary(3, 5));
        let target = geodesic_target_observables(&u0, &w, &state, &set).unwrap();
        let t = target.as_observable().unwrap();
        let at0 = expectations_at(&u0, &state, &set).unwrap();
        let at1 = expectations_at(&w, &state, &set).unwrap();
        for (a, b) in t.value(0.0).unwrap().iter().zip(&at0) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in t.value(1.0).unwrap().iter().zip(&at1) {
            assert!((a - b).abs() < 1e-8);
        }
        let h = 1e-5;
        for s in [0.1, 0.5, 0.9] {
            let (plus, minus) = (t.value(s + h).unwrap(), t.value(s - h).unwrap());
            for ((p, m), r) in plus.iter().zip(&minus).zip(t.rate(s).unwrap()) {
                assert!(((p - m) / (2.0 * h) - r).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn straight_track() {
        let t = straight_target_observables(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let t = t.as_observable().unwrap();
        assert_eq!(t.value(0.5).unwrap(), vec![0.5, 2.0]);
        assert_eq!(t.rate(0.2).unwrap(), vec![1.0, 2.0]);
        assert!(t.geodesic().is_none());
        assert!(straight_target_observables(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn rejects_non_unitary_and_wrong_kind() {
        let u = random_unitary(3, 6);
        let bad = u.scale_real(1.1);
        assert!(geodesic_target_unitary(&u, &bad).is_err());
        let target = geodesic_target_unitary(&u, &u).unwrap();
        assert!(target.as_observable().is_err());
    }
}
