//! Driven N-level systems `H(t) = H0 - mu * eps(t)` on a uniform time grid.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::landscape::ObservableSet;
use crate::linalg::{eig_hermitian, eig_symmetric, ComplexMatrix, HermitianMatrix, RealMatrix};

/// Imaginary parts of real-valued traces above this are treated as a bug.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

/// Relative eigenvalue spacing below which state populations count as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

/// Eigenvalues of a density matrix below this count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct QuantumSystem {
    h0: HermitianMatrix,
    mu: HermitianMatrix,
    t_final: f64,
    q: usize,
}

impl QuantumSystem {
    pub fn new(h0: HermitianMatrix, mu: HermitianMatrix, t_final: f64, q: usize) -> Result<Self> {
        if h0.dim() != mu.dim() {
            return Err(Error::Dimension(format!(
                "H0 is {0}x{0} but mu is {1}x{1}",
                h0.dim(),
                mu.dim()
            )));
        }
        if h0.dim() == 0 || h0.dim() > crate::linalg::MAX_DIM {
            return Err(Error::Dimension(format!(
                "system dimension {} outside 1..={}",
                h0.dim(),
                crate::linalg::MAX_DIM
            )));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidInput(format!("final time must be positive, got {t_final}")));
        }
        if q < 2 {
            return Err(Error::InvalidInput(format!("time grid needs at least 2 points, got {q}")));
        }
        Ok(Self { h0, mu, t_final, q })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &HermitianMatrix {
        &self.h0
    }

    pub fn mu(&self) -> &HermitianMatrix {
        &self.mu
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dt(&self) -> f64 {
        self.t_final / (self.q - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.q).map(|j| j as f64 * dt).collect()
    }

    /// Trapezoidal quadrature weights on the grid.
    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.q, self.dt())
    }

    /// Same system on a different grid.
    pub fn with_grid(&self, q: usize) -> Result<Self> {
        Self::new(self.h0.clone(), self.mu.clone(), self.t_final, q)
    }

    /// `H0 - mu * eps`
    pub fn hamiltonian(&self, eps: f64) -> HermitianMatrix {
        &self.h0 - &self.mu.scale(eps)
    }
}

pub fn trapezoid_weights(q: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; q];
    if q >= 2 {
        w[0] = 0.5 * dt;
        w[q - 1] = 0.5 * dt;
    }
    w
}

/// Trapezoidal integral of sampled values.
pub fn trapezoid(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

/// Control amplitude sampled at the grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ControlField {
    samples: Vec<f64>,
}

impl ControlField {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("control field"));
        }
        Ok(Self { samples })
    }

    pub fn zeros(q: usize) -> Self {
        Self { samples: vec![0.0; q] }
    }

    pub fn from_fn(system: &QuantumSystem, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(system.times().into_iter().map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// `self + factor * direction`
    pub fn axpy(&self, factor: f64, direction: &[f64]) -> Result<Self> {
        if direction.len() != self.samples.len() {
            return Err(Error::Dimension(format!(
                "field update has {} samples, field has {}",
                direction.len(),
                self.samples.len()
            )));
        }
        Self::new(
            self.samples
                .iter()
                .zip(direction)
                .map(|(e, d)| e + factor * d)
                .collect(),
        )
    }

    /// Trapezoidal `int eps^2 dt`.
    pub fn fluence(&self, weights: &[f64]) -> f64 {
        self.samples.iter().zip(weights).map(|(e, w)| e * e * w).sum()
    }

    /// Euclidean distance between sample vectors.
    pub fn distance(&self, other: &ControlField) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Output of [`propagate`].
///
/// `sensitivity[j]` is the Hermitian `S_j` with `dU(T)/d eps(t_j) = i U(T) S_j`,
/// the exact derivative of the discrete propagator with respect to sample `j`
/// divided by its quadrature weight. It tends to [`PropagationResult::evolved_dipole`]
/// as the grid is refined and vanishes at the last node, which the left-endpoint
/// rule never uses.
#[derive(Clone, Debug)]
pub struct PropagationResult {
    pub cumulative: Vec<ComplexMatrix>,
    pub sensitivity: Vec<HermitianMatrix>,
    pub weights: Vec<f64>,
    mu: HermitianMatrix,
}

impl PropagationResult {
    pub fn final_propagator(&self) -> &ComplexMatrix {
        self.cumulative.last().expect("propagation grid is never empty")
    }

    pub fn q(&self) -> usize {
        self.cumulative.len()
    }

    pub fn dim(&self) -> usize {
        self.final_propagator().dim()
    }

    /// `mu(t_j) = U_j^dag mu U_j` at every node, computed on demand.
    pub fn evolved_dipole(&self) -> Vec<HermitianMatrix> {
        self.cumulative
            .iter()
            .map(|u| HermitianMatrix::symmetrized(u.conjugate(self.mu.as_matrix())))
            .collect()
    }
}

fn check_field(system: &QuantumSystem, field: &ControlField) -> Result<()> {
    if field.len() != system.q() {
        return Err(Error::Dimension(format!(
            "field has {} samples but the grid has {}",
            field.len(),
            system.q()
        )));
    }
    Ok(())
}

/// `(e^{ix} - 1)/(ix)`
fn phi1(x: f64) -> Complex64 {
    if x.abs() < 1e-6 {
        Complex64::new(1.0 - x * x / 6.0, x / 2.0 - x * x * x / 24.0)
    } else {
        (Complex64::new(0.0, x).exp() - 1.0) / Complex64::new(0.0, x)
    }
}

struct Step {
    local: ComplexMatrix,
    /// `(1/dt) int_0^dt e^{iH tau} mu e^{-iH tau} d tau`
    averaged_dipole: ComplexMatrix,
}

fn step(system: &QuantumSystem, eps: f64, dt: f64, with_derivative: bool) -> Result<Step> {
    let h = system.hamiltonian(eps);
    let eig = eig_hermitian(&h)?;
    let local = eig.apply(|lam| Complex64::from_polar(1.0, -lam * dt));
    let averaged_dipole = if with_derivative {
        let v = &eig.eigenvectors;
        let n = v.dim();
        let mut mu_eig = v.conjugate(system.mu.as_matrix());
        for k in 0..n {
            for l in 0..n {
                mu_eig[(k, l)] *= phi1((eig.eigenvalues[k] - eig.eigenvalues[l]) * dt);
            }
        }
        (v * &mu_eig).mul_adjoint(v)
    } else {
        ComplexMatrix::zeros(0)
    };
    Ok(Step {
        local,
        averaged_dipole,
    })
}

/// `U_{j+1} = exp(-i H_j dt) U_j` for a real `H_j = V diag(lam) V^T`, and
/// optionally `scale * U_j^dag D_j U_j` with `D_j` the step-averaged dipole.
///
/// Both reuse `B = V^T U_j`: `U_{j+1} = V diag(e^{-i lam dt}) B` and
/// `U_j^dag D_j U_j = B^dag (phi1 o V^T mu V) B`.
fn advance_real(
    h: &HermitianMatrix,
    mu: &[f64],
    dt: f64,
    u: &ComplexMatrix,
    sensitivity_scale: Option<f64>,
) -> Result<(ComplexMatrix, Option<HermitianMatrix>)> {
    let n = h.dim();
    let real = RealMatrix::from_vec(n, n, h.as_matrix().as_slice().iter().map(|z| z.re).collect())?;
    let eig = eig_symmetric(&real)?;
    let v = eig.eigenvectors.as_slice();
    let lam = &eig.eigenvalues;
    let ud = u.as_slice();
    let zero = Complex64::new(0.0, 0.0);

    let mut b = vec![zero; n * n];
    for a in 0..n {
        let urow = &ud[a * n..(a + 1) * n];
        for k in 0..n {
            let vak = v[a * n + k];
            for (o, &x) in b[k * n..(k + 1) * n].iter_mut().zip(urow) {
                *o += x * vak;
            }
        }
    }
    let mut pb = b.clone();
    for (k, row) in pb.chunks_exact_mut(n).enumerate() {
        let phase = Complex64::from_polar(1.0, -lam[k] * dt);
        row.iter_mut().for_each(|x| *x *= phase);
    }
    let mut next = vec![zero; n * n];
    for a in 0..n {
        let out = &mut next[a * n..(a + 1) * n];
        for k in 0..n {
            let vak = v[a * n + k];
            for (o, &x) in out.iter_mut().zip(&pb[k * n..(k + 1) * n]) {
                *o += x * vak;
            }
        }
    }
    let next = ComplexMatrix::from_vec(n, next)?;

    let Some(scale) = sensitivity_scale else {
        return Ok((next, None));
    };
    // mu_eig = V^T mu V, real symmetric.
    let mut mv = vec![0.0; n * n];
    for a in 0..n {
        for c in 0..n {
            let m = mu[a * n + c];
            if m != 0.0 {
                for (o, &x) in mv[a * n..(a + 1) * n].iter_mut().zip(&v[c * n..(c + 1) * n]) {
                    *o += m * x;
                }
            }
        }
    }
    let mut inner = vec![zero; n * n];
    for k in 0..n {
        for l in k..n {
            let me: f64 = (0..n).map(|a| v[a * n + k] * mv[a * n + l]).sum();
            let z = phi1((lam[k] - lam[l]) * dt) * (me * scale);
            inner[k * n + l] = z;
            inner[l * n + k] = z.conj();
        }
    }
    let mut c = vec![zero; n * n];
    for k in 0..n {
        let out = &mut c[k * n..(k + 1) * n];
        for l in 0..n {
            let z = inner[k * n + l];
            for (o, &x) in out.iter_mut().zip(&b[l * n..(l + 1) * n]) {
                *o += z * x;
            }
        }
    }
    let mut s = vec![zero; n * n];
    for k in 0..n {
        let brow = &b[k * n..(k + 1) * n];
        let crow = &c[k * n..(k + 1) * n];
        for a in 0..n {
            let left = brow[a].conj();
            for bcol in a..n {
                s[a * n + bcol] += left * crow[bcol];
            }
        }
    }
    for a in 0..n {
        for bcol in 0..a {
            s[a * n + bcol] = s[bcol * n + a].conj();
        }
    }
    Ok((next, Some(HermitianMatrix::symmetrized(ComplexMatrix::from_vec(n, s)?))))
}

/// Time-ordered propagation with the field held constant on `[t_j, t_{j+1})`.
pub fn propagate(system: &QuantumSystem, field: &ControlField) -> Result<PropagationResult> {
    check_field(system, field)?;
    let q = system.q();
    let dt = system.dt();
    let weights = system.weights();
    let n = system.dim();
    let real_mu = real_parts(system.mu.as_matrix());
    let mut cumulative = Vec::with_capacity(q);
    let mut sensitivity = Vec::with_capacity(q);
    let mut u = ComplexMatrix::identity(n);
    for (j, &eps) in field.samples().iter().enumerate() {
        if j + 1 == q {
            sensitivity.push(HermitianMatrix::zeros(n));
            cumulative.push(u);
            break;
        }
        let h = system.hamiltonian(eps);
        let scale = dt / weights[j];
        let (next, s) = match &real_mu {
            Some(mu) if h.as_matrix().is_real() => {
                let (next, s) = advance_real(&h, mu, dt, &u, Some(scale))?;
                (next, s.expect("sensitivity requested"))
            }
            _ => {
                let st = step(system, eps, dt, true)?;
                let s = HermitianMatrix::symmetrized(u.conjugate(&st.averaged_dipole).scale_real(scale));
                (&st.local * &u, s)
            }
        };
        sensitivity.push(s);
        cumulative.push(std::mem::replace(&mut u, next));
    }
    Ok(PropagationResult {
        cumulative,
        sensitivity,
        weights,
        mu: system.mu.clone(),
    })
}

fn real_parts(m: &ComplexMatrix) -> Option<Vec<f64>> {
    m.is_real().then(|| m.as_slice().iter().map(|z| z.re).collect())
}

/// `U(t_end, t_start) * initial`, using samples `start..end` of the field.
pub fn propagate_range(
    system: &QuantumSystem,
    field: &ControlField,
    start: usize,
    end: usize,
    initial: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    check_field(system, field)?;
    if start > end || end >= system.q() {
        return Err(Error::InvalidInput(format!(
            "grid range {start}..{end} outside 0..{}",
            system.q() - 1
        )));
    }
    if initial.dim() != system.dim() {
        return Err(Error::Dimension("initial propagator dimension".into()));
    }
    let dt = system.dt();
    let real_mu = real_parts(system.mu.as_matrix());
    let mut u = initial.clone();
    for &eps in &field.samples()[start..end] {
        let h = system.hamiltonian(eps);
        u = match &real_mu {
            Some(mu) if h.as_matrix().is_real() => advance_real(&h, mu, dt, &u, None)?.0,
            _ => &step(system, eps, dt, false)?.local * &u,
        };
    }
    Ok(u)
}

/// `U(T)` only, skipping the per-node bookkeeping of [`propagate`].
pub fn final_propagator(system: &QuantumSystem, field: &ControlField) -> Result<ComplexMatrix> {
    propagate_range(system, field, 0, system.q() - 1, &ComplexMatrix::identity(system.dim()))
}

/// Initial density matrix with its eigenstructure.
#[derive(Clone, Debug)]
pub struct StateSpec {
    rho0: HermitianMatrix,
    /// Ascending.
    eigenvalues: Vec<f64>,
    rank: usize,
    degeneracies: Vec<usize>,
}

impl StateSpec {
    pub fn new(rho0: HermitianMatrix) -> Result<Self> {
        let eig = eig_hermitian(&rho0)?;
        let trace = rho0.real_trace();
        if (trace - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("density matrix trace is {trace}, expected 1")));
        }
        if let Some(&min) = eig.eigenvalues.first() {
            if min < -1e-12 {
                return Err(Error::InvalidInput(format!(
                    "density matrix has negative eigenvalue {min:e}"
                )));
            }
        }
        let nonzero: Vec<f64> = eig
            .eigenvalues
            .iter()
            .copied()
            .filter(|&x| x > RANK_TOLERANCE)
            .collect();
        let mut degeneracies = Vec::new();
        let mut previous: Option<f64> = None;
        for &x in &nonzero {
            match previous {
                Some(p) if (x - p).abs() <= DEGENERACY_TOLERANCE * x.abs().max(p.abs()) => {
                    *degeneracies.last_mut().unwrap() += 1;
                }
                _ => degeneracies.push(1),
            }
            previous = Some(x);
        }
        Ok(Self {
            rho0,
            rank: nonzero.len(),
            eigenvalues: eig.eigenvalues,
            degeneracies,
        })
    }

    /// Diagonal state with the given populations, normalized to unit trace.
    pub fn from_populations(populations: &[f64]) -> Result<Self> {
        let total: f64 = populations.iter().sum();
        if populations.iter().any(|p| *p < 0.0 || !p.is_finite()) || total <= 0.0 {
            return Err(Error::InvalidInput("populations must be nonnegative with positive sum".into()));
        }
        let p: Vec<f64> = populations.iter().map(|x| x / total).collect();
        Self::new(HermitianMatrix::from_real_diagonal(&p))
    }

    /// `|k><k|`, zero-based.
    pub fn pure(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidInput(format!("basis state {k} outside dimension {dim}")));
        }
        let mut p = vec![0.0; dim];
        p[k] = 1.0;
        Self::from_populations(&p)
    }

    pub fn rho0(&self) -> &HermitianMatrix {
        &self.rho0
    }

    pub fn dim(&self) -> usize {
        self.rho0.dim()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn distinct_count(&self) -> usize {
        self.degeneracies.len()
    }

    pub fn degeneracies(&self) -> &[usize] {
        &self.degeneracies
    }
}

/// `Tr(rho Theta)` with the imaginary residue checked.
pub(crate) fn real_trace_product(a: &ComplexMatrix, b: &ComplexMatrix, context: &'static str) -> Result<f64> {
    let z = a.trace_product(b);
    if z.im.abs() > IMAGINARY_TOLERANCE * (1.0 + z.re.abs()) {
        return Err(Error::ImaginaryResidue {
            context,
            residue: z.im.abs(),
        });
    }
    Ok(z.re)
}

/// `Tr(U rho U^dag Theta_k)` for each observable, at an arbitrary unitary.
pub fn expectations_at(u: &ComplexMatrix, state: &StateSpec, set: &ObservableSet) -> Result<Vec<f64>> {
    if u.dim() != state.dim() || set.dim() != state.dim() {
        return Err(Error::Dimension("propagator, state and observables must share a dimension".into()));
    }
    let rho_t = state.rho0.transform_adjoint(u);
    set.observables()
        .iter()
        .map(|theta| real_trace_product(rho_t.as_matrix(), theta.as_matrix(), "expectation value"))
        .collect()
}

pub fn expectations(prop: &PropagationResult, state: &StateSpec, set: &ObservableSet) -> Result<Vec<f64>> {
    expectations_at(prop.final_propagator(), state, set)
}

/// `Tr(U rho U^dag)`.
pub fn evolved_trace(u: &ComplexMatrix, state: &StateSpec) -> f64 {
    state.rho0.transform_adjoint(u).real_trace()
}
