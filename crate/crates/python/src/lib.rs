//! Python module `motc`: propagation, landscape quantities and the seeded experiments.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use motc_core::bench::output::summary_document;
use motc_core::bench::{
    build_model_system, build_thermal_state, build_truncated_thermal_state, config_hash, emit_results,
    kinematic_maximum, run_efficiency_comparison, run_gradient_flow, run_gramian_distribution, run_motc_experiment,
    run_unitary_tracking, sampled_field, sampled_observables, Artifact, ExperimentConfig,
};
use motc_core::dynamics::{self, ControlField, PropagationResult, QuantumSystem, StateSpec};
use motc_core::landscape::{self, natural_basis_rank, ObservableSet};
use motc_core::linalg::{ComplexMatrix, HermitianMatrix};
use motc_core::tracking::{gramian_motc, gramian_unitary, motc_a_vector};
use motc_core::Error;

create_exception!(motc, MotcError, PyException, "Numerical failure inside motc-core.");

fn to_py(err: Error) -> PyErr {
    match err.root() {
        Error::Config(_) | Error::InvalidInput(_) | Error::Dimension(_) | Error::NotHermitian { .. } => {
            PyValueError::new_err(err.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        _ => MotcError::new_err(err.to_string()),
    }
}

type Rows = Vec<Vec<Complex64>>;

fn matrix_from_rows(rows: Rows) -> PyResult<ComplexMatrix> {
    let dim = rows.len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    ComplexMatrix::from_vec(dim, rows.into_iter().flatten().collect()).map_err(to_py)
}

fn hermitian_from_rows(rows: Rows) -> PyResult<HermitianMatrix> {
    HermitianMatrix::new(matrix_from_rows(rows)?).map_err(to_py)
}

fn matrix_rows(m: &ComplexMatrix) -> Rows {
    (0..m.dim()).map(|i| m.row(i).to_vec()).collect()
}

fn parse_config(config_json: Option<&str>) -> PyResult<ExperimentConfig> {
    let config = match config_json {
        Some(text) => ExperimentConfig::from_json(text).map_err(to_py)?,
        None => ExperimentConfig::default(),
    };
    config.validate().map_err(to_py)?;
    Ok(config)
}

/// Drift, dipole, horizon and grid of a driven N-level system.
#[pyclass(name = "QuantumSystem", module = "motc", frozen)]
struct PyQuantumSystem {
    inner: QuantumSystem,
}

#[pymethods]
impl PyQuantumSystem {
    #[new]
    fn new(h0: Rows, mu: Rows, t_final: f64, q: usize) -> PyResult<Self> {
        let inner = QuantumSystem::new(hermitian_from_rows(h0)?, hermitian_from_rows(mu)?, t_final, q).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// The banded-dipole model system with equally spaced levels.
    #[staticmethod]
    #[pyo3(signature = (levels=11, t_final=100.0, q=1024))]
    fn model(levels: usize, t_final: f64, q: usize) -> PyResult<Self> {
        Ok(Self {
            inner: build_model_system(levels, t_final, q).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights()
    }

    fn __repr__(&self) -> String {
        format!(
            "QuantumSystem(dim={}, t_final={}, q={})",
            self.inner.dim(),
            self.inner.t_final(),
            self.inner.q()
        )
    }
}

/// Field samples on the time grid.
#[pyclass(name = "ControlField", module = "motc", frozen)]
struct PyControlField {
    inner: ControlField,
}

#[pymethods]
impl PyControlField {
    #[new]
    fn new(samples: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: ControlField::new(samples).map_err(to_py)?,
        })
    }

    /// Random field `index` of the stream family seeded by `seed`.
    #[staticmethod]
    #[pyo3(signature = (system, seed, index=0))]
    fn sampled(system: &PyQuantumSystem, seed: u64, index: usize) -> PyResult<Self> {
        Ok(Self {
            inner: sampled_field(&system.inner, seed, index).map_err(to_py)?,
        })
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    fn fluence(&self, system: &PyQuantumSystem) -> PyResult<f64> {
        if system.inner.q() != self.inner.len() {
            return Err(PyValueError::new_err("field length does not match the system grid"));
        }
        Ok(self.inner.fluence(&system.inner.weights()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Initial density matrix with its spectral data.
#[pyclass(name = "StateSpec", module = "motc", frozen)]
struct PyStateSpec {
    inner: StateSpec,
}

#[pymethods]
impl PyStateSpec {
    #[new]
    fn new(rho0: Rows) -> PyResult<Self> {
        Ok(Self {
            inner: StateSpec::new(hermitian_from_rows(rho0)?).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (dim, level=0))]
    fn pure(dim: usize, level: usize) -> PyResult<Self> {
        Ok(Self {
            inner: StateSpec::pure(dim, level).map_err(to_py)?,
        })
    }

    /// Diagonal state with the given populations.
    #[staticmethod]
    fn populations(populations: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: StateSpec::from_populations(&populations).map_err(to_py)?,
        })
    }

    /// Boltzmann populations of the drift, optionally keeping the `rank` lowest levels.
    #[staticmethod]
    #[pyo3(signature = (system, temperature, rank=None))]
    fn thermal(system: &PyQuantumSystem, temperature: f64, rank: Option<usize>) -> PyResult<Self> {
        let inner = match rank {
            Some(rank) => build_truncated_thermal_state(&system.inner, temperature, rank),
            None => build_thermal_state(&system.inner, temperature),
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    fn density(&self) -> Rows {
        matrix_rows(self.inner.rho0().as_matrix())
    }
}

/// Weighted list of Hermitian observables.
#[pyclass(name = "ObservableSet", module = "motc", frozen)]
struct PyObservableSet {
    inner: ObservableSet,
}

#[pymethods]
impl PyObservableSet {
    #[new]
    #[pyo3(signature = (observables, weights=None))]
    fn new(observables: Vec<Rows>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let observables = observables.into_iter().map(hermitian_from_rows).collect::<PyResult<Vec<_>>>()?;
        let inner = match weights {
            Some(w) => ObservableSet::with_weights(observables, w),
            None => ObservableSet::new(observables),
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// The `m` random observables drawn by the experiments for `seed`.
    #[staticmethod]
    #[pyo3(signature = (seed, m, levels=11))]
    fn sampled(seed: u64, m: usize, levels: usize) -> PyResult<Self> {
        let mut config = ExperimentConfig {
            seed,
            observables: vec![m],
            ..ExperimentConfig::default()
        };
        config.system.levels = levels;
        Ok(Self {
            inner: sampled_observables(&config).map_err(to_py)?,
        })
    }

    fn truncated(&self, m: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.truncated(m).map_err(to_py)?,
        })
    }

    fn observable(&self, k: usize) -> PyResult<Rows> {
        self.inner
            .observables()
            .get(k)
            .map(|theta| matrix_rows(theta.as_matrix()))
            .ok_or_else(|| PyValueError::new_err(format!("no observable {k}")))
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Cumulative propagators and field sensitivities of one propagation.
#[pyclass(name = "Propagation", module = "motc", frozen)]
struct PyPropagation {
    inner: PropagationResult,
}

#[pymethods]
impl PyPropagation {
    fn final_propagator(&self) -> Rows {
        matrix_rows(self.inner.final_propagator())
    }

    fn propagator(&self, j: usize) -> PyResult<Rows> {
        self.inner
            .cumulative
            .get(j)
            .map(matrix_rows)
            .ok_or_else(|| PyValueError::new_err(format!("no grid point {j}")))
    }

    /// Largest `||U_j^dag U_j - I||_F` over the grid.
    fn unitarity_deviation(&self) -> f64 {
        self.inner
            .cumulative
            .iter()
            .map(ComplexMatrix::unitarity_deviation)
            .fold(0.0, f64::max)
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }
}

#[pyfunction]
fn propagate(system: &PyQuantumSystem, field: &PyControlField) -> PyResult<PyPropagation> {
    Ok(PyPropagation {
        inner: dynamics::propagate(&system.inner, &field.inner).map_err(to_py)?,
    })
}

/// Final expectation values `Tr(U rho0 U^dag Theta_k)`.
#[pyfunction]
fn expectations(prop: &PyPropagation, state: &PyStateSpec, observables: &PyObservableSet) -> PyResult<Vec<f64>> {
    dynamics::expectations(&prop.inner, &state.inner, &observables.inner).map_err(to_py)
}

/// Functional derivatives of each expectation value on the time grid.
#[pyfunction]
fn gradients(prop: &PyPropagation, state: &PyStateSpec, observables: &PyObservableSet) -> PyResult<Vec<Vec<f64>>> {
    landscape::observable_gradients(&prop.inner, &state.inner, &observables.inner).map_err(to_py)
}

/// Condition number of the observable tracking Gramian.
#[pyfunction]
fn observable_gramian_condition(prop: &PyPropagation, state: &PyStateSpec, observables: &PyObservableSet) -> PyResult<f64> {
    let a = motc_a_vector(&prop.inner, &state.inner, &observables.inner).map_err(to_py)?;
    Ok(gramian_motc(&a, &prop.inner.weights).map_err(to_py)?.condition)
}

/// Condition number of the full-propagator tracking Gramian.
#[pyfunction]
fn propagator_gramian_condition(prop: &PyPropagation) -> PyResult<f64> {
    Ok(gramian_unitary(&prop.inner).map_err(to_py)?.condition)
}

#[pyfunction]
#[pyo3(signature = (prop, state, relative_cutoff=1e-8))]
fn natural_rank(prop: &PyPropagation, state: &PyStateSpec, relative_cutoff: f64) -> PyResult<usize> {
    Ok(natural_basis_rank(&prop.inner, &state.inner, relative_cutoff).map_err(to_py)?.rank)
}

/// Largest `Tr(V rho0 V^dag Theta)` over all unitaries `V`.
#[pyfunction(name = "kinematic_maximum")]
fn py_kinematic_maximum(state: &PyStateSpec, theta: Rows) -> PyResult<f64> {
    kinematic_maximum(&state.inner, &hermitian_from_rows(theta)?).map_err(to_py)
}

#[pyfunction(name = "config_hash")]
#[pyo3(signature = (config_json=None))]
fn py_config_hash(config_json: Option<&str>) -> PyResult<String> {
    Ok(config_hash(&parse_config(config_json)?))
}

fn finish<A: Artifact>(artifact: A, config: &ExperimentConfig, write: bool) -> PyResult<String> {
    if write {
        emit_results(&artifact, config, config.output.format, &config.output.dir).map_err(to_py)?;
    }
    Ok(summary_document(&artifact, config).to_string())
}

/// Runs one experiment and returns its JSON summary document.
///
/// `name` is one of gramian-dist, motc-track, grad-flow, unitary-track or
/// efficiency. With `write=True` the CSV and JSON artifacts go to the
/// configured output directory as well.
#[pyfunction]
#[pyo3(signature = (name, config_json=None, write=false))]
fn run_experiment(py: Python<'_>, name: &str, config_json: Option<&str>, write: bool) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let name = name.to_owned();
    py.detach(move || match name.as_str() {
        "gramian-dist" => finish(run_gramian_distribution(&config).map_err(to_py)?, &config, write),
        "motc-track" => finish(run_motc_experiment(&config).map_err(to_py)?, &config, write),
        "grad-flow" => finish(run_gradient_flow(&config).map_err(to_py)?, &config, write),
        "unitary-track" => finish(run_unitary_tracking(&config).map_err(to_py)?, &config, write),
        "efficiency" => finish(run_efficiency_comparison(&config).map_err(to_py)?, &config, write),
        other => Err(PyValueError::new_err(format!("unknown experiment '{other}'"))),
    })
}

#[pymodule]
#[pyo3(name = "motc")]
fn motc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MotcError", m.py().get_type::<MotcError>())?;
    m.add_class::<PyQuantumSystem>()?;
    m.add_class::<PyControlField>()?;
    m.add_class::<PyStateSpec>()?;
    m.add_class::<PyObservableSet>()?;
    m.add_class::<PyPropagation>()?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(expectations, m)?)?;
    m.add_function(wrap_pyfunction!(gradients, m)?)?;
    m.add_function(wrap_pyfunction!(observable_gramian_condition, m)?)?;
    m.add_function(wrap_pyfunction!(propagator_gramian_condition, m)?)?;
    m.add_function(wrap_pyfunction!(natural_rank, m)?)?;
    m.add_function(wrap_pyfunction!(py_kinematic_maximum, m)?)?;
    m.add_function(wrap_pyfunction!(py_config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
