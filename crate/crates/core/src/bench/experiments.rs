//! Seeded experiment runners behind the command-line subcommands.
//!
//! Random field `k` is drawn from ChaCha stream `k` of the config seed and the
//! observables from [`OBSERVABLE_STREAM`], so results do not depend on worker
//! count or scheduling. Tracking runs use field 0.

use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{expectations, final_propagator, propagate, ControlField, PropagationResult, QuantumSystem, StateSpec};
use crate::error::{Error, Result};
use crate::integrate::{
    brent_line_search, euler_integrate, rk4_integrate, rkck_adaptive, FlowObserver, FlowProblem, FlowRhs,
    IntegrationReport, ObserverAction, Termination,
};
use crate::landscape::{gradient_field, kinematic_flow, weighted_objective_at, ObservableSet};
use crate::linalg::ComplexMatrix;
use crate::tracking::{
    geodesic_target_observables, geodesic_target_unitary, gramian_motc, gramian_unitary, motc_a_vector,
    straight_target_between, GramianPolicy, MotcProblem, TrackTarget, TrackingRhs, UnitaryCorrection, UnitaryProblem,
};

use super::config::{CorrectionConfig, ExperimentConfig, IntegratorConfig, TrackConfig};
use super::log::{Spectrum, StepMeasurement, TrajectoryLog, TrajectoryRecorder};
use super::model::{build_observable_set, kinematic_maximum, sample_random_field};

pub const OBSERVABLE_STREAM: u64 = u64::MAX;

/// Largest transition frequency of the model `H0`; spectra are counted above it.
pub const SPECTRUM_CUTOFF: f64 = 1.0;
pub const SPECTRUM_FLOOR_DB: f64 = -40.0;

pub const G_LABEL: &str = "G";

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sampled_field(system: &QuantumSystem, seed: u64, index: usize) -> Result<ControlField> {
    sample_random_field(system, &mut stream_rng(seed, index as u64))
}

/// Observable set with the largest configured `m`; smaller sets are its prefixes.
pub fn sampled_observables(config: &ExperimentConfig) -> Result<ObservableSet> {
    build_observable_set(
        config.system.levels,
        config.max_observables(),
        &mut stream_rng(config.seed, OBSERVABLE_STREAM),
    )
}

pub fn gamma_label(state: &str, m: usize) -> String {
    format!("gamma[{state}][m={m}]")
}

// ---------------------------------------------------------------- Gramians

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionSample {
    pub sample: usize,
    pub quantity: String,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower_log10: f64,
    pub upper_log10: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub quantity: String,
    pub count: usize,
    /// Samples whose Gramian was exactly singular.
    pub infinite: usize,
    pub median_log10: f64,
    pub mean_log10: f64,
    pub min_log10: f64,
    pub max_log10: f64,
    /// Finite values only.
    pub histogram: Vec<HistogramBin>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleFailure {
    pub sample: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramianDistribution {
    pub quantities: Vec<String>,
    pub samples: Vec<ConditionSample>,
    pub failures: Vec<SampleFailure>,
    pub summaries: Vec<ConditionSummary>,
}

impl GramianDistribution {
    pub fn summary(&self, quantity: &str) -> Option<&ConditionSummary> {
        self.summaries.iter().find(|s| s.quantity == quantity)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

pub fn summarize_conditions(quantity: &str, conditions: &[f64], bins: usize) -> ConditionSummary {
    let mut logs: Vec<f64> = conditions.iter().map(|c| c.log10()).collect();
    logs.sort_by(f64::total_cmp);
    let finite: Vec<f64> = logs.iter().copied().filter(|x| x.is_finite()).collect();
    let histogram = match (finite.first(), finite.last()) {
        (Some(&lo), Some(&hi)) => {
            let lo = lo.floor();
            let hi = if hi.ceil() > lo { hi.ceil() } else { lo + 1.0 };
            let width = (hi - lo) / bins as f64;
            let mut counts = vec![0usize; bins];
            for x in &finite {
                let k = (((x - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            counts
                .into_iter()
                .enumerate()
                .map(|(k, count)| HistogramBin {
                    lower_log10: lo + k as f64 * width,
                    upper_log10: lo + (k + 1) as f64 * width,
                    count,
                })
                .collect()
        }
        _ => Vec::new(),
    };
    ConditionSummary {
        quantity: quantity.to_string(),
        count: logs.len(),
        infinite: logs.len() - finite.len(),
        median_log10: median(&logs),
        mean_log10: if logs.is_empty() { f64::NAN } else { logs.iter().sum::<f64>() / logs.len() as f64 },
        min_log10: logs.first().copied().unwrap_or(f64::NAN),
        max_log10: logs.last().copied().unwrap_or(f64::NAN),
        histogram,
    }
}

fn gramian_sample(
    system: &QuantumSystem,
    states: &[(String, StateSpec)],
    set: &ObservableSet,
    ms: &[usize],
    field: &ControlField,
) -> Result<Vec<(String, f64)>> {
    let prop = propagate(system, field)?;
    let mut out = vec![(G_LABEL.to_string(), gramian_unitary(&prop)?.condition)];
    for (label, state) in states {
        let a = motc_a_vector(&prop, state, set)?;
        for &m in ms {
            out.push((gamma_label(label, m), gramian_motc(&a[..m], &prop.weights)?.condition));
        }
    }
    Ok(out)
}

/// Condition numbers of `G` and of `Gamma` (each configured state and `m`)
/// over `config.samples` random fields.
pub fn run_gramian_distribution(config: &ExperimentConfig) -> Result<GramianDistribution> {
    config.validate()?;
    let system = config.system.build()?;
    let set = sampled_observables(config)?;
    let states = config
        .states
        .iter()
        .map(|s| Ok((s.label(), s.build(&system)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut quantities = vec![G_LABEL.to_string()];
    for (label, _) in &states {
        quantities.extend(config.observables.iter().map(|&m| gamma_label(label, m)));
    }
    let results: Vec<Result<Vec<(String, f64)>>> = (0..config.samples)
        .into_par_iter()
        .map(|k| {
            let field = sampled_field(&system, config.seed, k)?;
            gramian_sample(&system, &states, &set, &config.observables, &field)
        })
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (k, result) in results.into_iter().enumerate() {
        match result {
            Ok(values) => samples.extend(values.into_iter().map(|(quantity, condition)| ConditionSample {
                sample: k,
                quantity,
                condition,
            })),
            Err(e) => failures.push(SampleFailure {
                sample: k,
                error: e.to_string(),
            }),
        }
    }
    let summaries = quantities
        .iter()
        .map(|q| {
            let values: Vec<f64> = samples.iter().filter(|s| &s.quantity == q).map(|s| s.condition).collect();
            summarize_conditions(q, &values, config.histogram_bins)
        })
        .collect();
    Ok(GramianDistribution {
        quantities,
        samples,
        failures,
        summaries,
    })
}

// ---------------------------------------------------------------- shared run plumbing

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunTermination {
    ReachedEnd,
    Stopped,
    StepLimit,
    /// The experiment's wall-clock limit passed first.
    TimeLimit,
    Failed,
}

impl From<Termination> for RunTermination {
    fn from(t: Termination) -> Self {
        match t {
            Termination::ReachedEnd => RunTermination::ReachedEnd,
            Termination::Stopped => RunTermination::Stopped,
            Termination::StepLimit => RunTermination::StepLimit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    pub termination: RunTermination,
    pub error: Option<String>,
    pub accepted_steps: usize,
    /// Unknown when the run failed.
    pub rejected_steps: Option<usize>,
    /// Distinct propagations performed.
    pub propagations: usize,
}

impl RunOutcome {
    fn new(result: Result<IntegrationReport>, log: &TrajectoryLog, propagations: usize, watch: &Watch) -> Self {
        match result {
            Ok(report) => RunOutcome {
                termination: match report.termination {
                    Termination::Stopped if watch.expired.get() => RunTermination::TimeLimit,
                    t => t.into(),
                },
                error: None,
                accepted_steps: report.accepted_steps,
                rejected_steps: Some(report.rejected_steps),
                propagations,
            },
            Err(e) => RunOutcome {
                termination: RunTermination::Failed,
                error: Some(e.to_string()),
                accepted_steps: log.accepted_steps(),
                rejected_steps: None,
                propagations,
            },
        }
    }

    pub fn failed(&self) -> bool {
        self.termination == RunTermination::Failed
    }
}

fn deadline(config: &ExperimentConfig) -> Option<Instant> {
    let limit = Duration::try_from_secs_f64(config.time_limit_s?).ok()?;
    Instant::now().checked_add(limit)
}

/// Stops a run once the experiment deadline has passed.
struct Watch {
    deadline: Option<Instant>,
    expired: Cell<bool>,
}

impl Watch {
    fn new(deadline: Option<Instant>) -> Self {
        Watch {
            deadline,
            expired: Cell::new(false),
        }
    }

    fn expired(&self) -> bool {
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.expired.set(true);
        }
        self.expired.get()
    }

    fn action(&self) -> ObserverAction {
        if self.expired() {
            ObserverAction::Stop
        } else {
            ObserverAction::Continue
        }
    }
}

/// Remembers the last evaluation so the observer and the next stage at the
/// same point share one propagation.
struct StepCache<'a, T> {
    system: &'a QuantumSystem,
    entry: RefCell<Option<(f64, Vec<f64>, Rc<PropagationResult>, Rc<T>)>>,
    computed: Cell<usize>,
}

impl<'a, T> StepCache<'a, T> {
    fn new(system: &'a QuantumSystem) -> Self {
        StepCache {
            system,
            entry: RefCell::new(None),
            computed: Cell::new(0),
        }
    }

    fn get(
        &self,
        s: f64,
        field: &ControlField,
        compute: impl FnOnce(&PropagationResult) -> Result<T>,
    ) -> Result<(Rc<PropagationResult>, Rc<T>)> {
        if let Some((cs, samples, prop, value)) = &*self.entry.borrow() {
            if *cs == s && samples.as_slice() == field.samples() {
                return Ok((prop.clone(), value.clone()));
            }
        }
        let prop = Rc::new(propagate(self.system, field)?);
        self.computed.set(self.computed.get() + 1);
        let value = Rc::new(compute(&prop)?);
        *self.entry.borrow_mut() = Some((s, field.samples().to_vec(), prop.clone(), value.clone()));
        Ok((prop, value))
    }
}

fn reject_line_search(config: &ExperimentConfig) -> Result<()> {
    match config.integrator {
        IntegratorConfig::LineSearch { .. } => {
            Err(Error::Config("the line-search integrator only applies to gradient flows".into()))
        }
        _ => Ok(()),
    }
}

fn integrate<R: FlowRhs, O: FlowObserver>(
    integrator: &IntegratorConfig,
    problem: FlowProblem,
    rhs: R,
    observer: O,
) -> Result<IntegrationReport> {
    match *integrator {
        IntegratorConfig::Euler { ds } => euler_integrate(&problem, ds, rhs, observer),
        IntegratorConfig::Rk4 { ds } => rk4_integrate(&problem, ds, rhs, observer),
        IntegratorConfig::Rkck {
            atol,
            rtol,
            ds_min,
            ds_max,
        } => rkck_adaptive(
            &problem.with_tolerances(atol, rtol).with_step_bounds(ds_min, ds_max),
            rhs,
            observer,
        ),
        IntegratorConfig::LineSearch { .. } => {
            Err(Error::Config("the line-search integrator only applies to gradient flows".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KinematicSummary {
    pub phi_initial: f64,
    pub phi_final: f64,
    /// Analytic maximum of `<Theta_1>` over the unitary orbit of `rho`.
    pub maximum: f64,
    pub s_final: f64,
    pub points: usize,
    pub rejected_steps: usize,
    pub termination: String,
}

/// Everything tracking runs share: the initial field, `U0`, and the
/// kinematic optimum `W` of `<Theta_1>` reached from `U0`.
#[derive(Clone, Debug)]
pub struct TrackingSetup {
    pub system: QuantumSystem,
    pub state: StateSpec,
    pub observables: ObservableSet,
    pub field0: ControlField,
    pub u0: ComplexMatrix,
    pub w: ComplexMatrix,
    pub kinematic: KinematicSummary,
    /// Shared by every run started from this setup.
    pub deadline: Option<Instant>,
}

pub fn prepare_tracking(config: &ExperimentConfig) -> Result<TrackingSetup> {
    config.validate()?;
    let deadline = deadline(config);
    let system = config.system.build()?;
    let state = config.state.build(&system)?;
    let observables = sampled_observables(config)?;
    let field0 = sampled_field(&system, config.seed, 0)?;
    let u0 = final_propagator(&system, &field0)?;
    let first = observables.truncated(1)?;
    let trajectory = kinematic_flow(&u0, &state, &first, &config.kinematic.options())?;
    let last = trajectory.last();
    let kinematic = KinematicSummary {
        phi_initial: trajectory.points[0].phi,
        phi_final: last.phi,
        maximum: kinematic_maximum(&state, &observables.observables()[0])?,
        s_final: last.s,
        points: trajectory.points.len(),
        rejected_steps: trajectory.rejected_steps,
        termination: format!("{:?}", trajectory.termination),
    };
    let w = last.v.clone();
    Ok(TrackingSetup {
        system,
        state,
        observables,
        field0,
        u0,
        w,
        kinematic,
        deadline,
    })
}

impl TrackingSetup {
    fn track(&self, config: &ExperimentConfig, set: &ObservableSet) -> Result<TrackTarget> {
        match config.track {
            TrackConfig::Geodesic => geodesic_target_observables(&self.u0, &self.w, &self.state, set),
            TrackConfig::Straight => straight_target_between(&self.u0, &self.w, &self.state, set),
        }
    }

    /// Level of `<Theta_1>` that counts as optimal.
    pub fn threshold_value(&self, config: &ExperimentConfig) -> f64 {
        config.threshold * self.kinematic.maximum
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingRun {
    pub m: usize,
    pub outcome: RunOutcome,
    pub log: TrajectoryLog,
    pub final_field: ControlField,
}

/// Integrates MOTC for the first `m` observables along the configured track.
/// With `stop_at`, the run ends once `<Theta_1>` reaches that level.
pub fn run_motc_tracking(
    setup: &TrackingSetup,
    config: &ExperimentConfig,
    m: usize,
    stop_at: Option<f64>,
) -> Result<TrackingRun> {
    reject_line_search(config)?;
    let set = setup.observables.truncated(m)?;
    let target = setup.track(config, &set)?;
    let problem = MotcProblem {
        state: &setup.state,
        set: &set,
        track: target.as_observable()?,
        correction: config.correction.observable(),
        policy: GramianPolicy::motc(),
    };
    let free = config.free_function.build();
    let cache: StepCache<TrackingRhs> = StepCache::new(&setup.system);
    let evaluate = |s: f64, field: &ControlField| {
        cache.get(s, field, |prop| problem.rhs(prop, s.clamp(0.0, 1.0), &free.samples(field)?))
    };
    let watch = Watch::new(setup.deadline);
    let mut recorder = TrajectoryRecorder::new(format!("motc m={m}"), m);
    let flow = FlowProblem::new(setup.field0.clone(), (0.0, 1.0)).with_max_steps(config.max_steps);
    let result = integrate(
        &config.integrator,
        flow,
        |s: f64, field: &ControlField, _: f64| Ok(evaluate(s, field)?.1.derivative.samples.clone()),
        |s: f64, field: &ControlField| {
            let (prop, rhs) = evaluate(s, field)?;
            recorder.record(
                s,
                prop.final_propagator(),
                field,
                StepMeasurement {
                    phi: rhs.phi.clone(),
                    target: Some(rhs.target.clone()),
                    unitary_distance: None,
                    condition: Some(rhs.condition),
                },
            );
            Ok(match stop_at {
                Some(level) if rhs.phi[0] >= level => ObserverAction::Stop,
                _ => watch.action(),
            })
        },
    );
    let final_field = match &result {
        Ok(report) => report.field.clone(),
        Err(_) => recorder.last_field().cloned().unwrap_or_else(|| setup.field0.clone()),
    };
    let log = recorder.finish();
    let outcome = RunOutcome::new(result, &log, cache.computed.get(), &watch);
    Ok(TrackingRun {
        m,
        outcome,
        log,
        final_field,
    })
}

// ---------------------------------------------------------------- MOTC comparison

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MotcRun {
    pub run: TrackingRun,
    pub spectrum: Spectrum,
    /// Modes above [`SPECTRUM_CUTOFF`] within [`SPECTRUM_FLOOR_DB`] of the peak.
    pub high_frequency_modes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MotcExperiment {
    pub kinematic: KinematicSummary,
    pub runs: Vec<MotcRun>,
}

impl MotcExperiment {
    pub fn run_for(&self, m: usize) -> Option<&MotcRun> {
        self.runs.iter().find(|r| r.run.m == m)
    }
}

/// Tracks the geodesic towards the `<Theta_1>` optimum for every configured `m`.
pub fn run_motc_experiment(config: &ExperimentConfig) -> Result<MotcExperiment> {
    let setup = prepare_tracking(config)?;
    let dt = setup.system.dt();
    let runs = config
        .observables
        .par_iter()
        .map(|&m| {
            let run = run_motc_tracking(&setup, config, m, None)?;
            let spectrum = Spectrum::of_field(&run.final_field, dt);
            let high_frequency_modes = spectrum.modes_above(SPECTRUM_CUTOFF, SPECTRUM_FLOOR_DB);
            Ok(MotcRun {
                run,
                spectrum,
                high_frequency_modes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MotcExperiment {
        kinematic: setup.kinematic,
        runs,
    })
}

// ---------------------------------------------------------------- gradient flow

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientFlowRun {
    pub outcome: RunOutcome,
    pub log: TrajectoryLog,
    /// `<Theta_1>` never decreased between accepted steps.
    pub monotone: bool,
}

/// Ascends `<Theta_1>` from the initial field until it reaches `stop_at`.
/// Every configured observable is logged.
pub fn run_gradient_flow_from(
    setup: &TrackingSetup,
    config: &ExperimentConfig,
    stop_at: f64,
) -> Result<GradientFlowRun> {
    let first = setup.observables.truncated(1)?;
    let logged = setup.observables.truncated(config.max_observables())?;
    let watch = Watch::new(setup.deadline);
    let mut recorder = TrajectoryRecorder::new("gradient flow", logged.len());
    let (result, propagations) = match config.integrator {
        IntegratorConfig::LineSearch { seed_step } => {
            let mut propagations = 0;
            let result = line_search_ascent(setup, config, &first, &logged, stop_at, seed_step, &watch, &mut recorder, &mut propagations);
            (result, propagations)
        }
        _ => {
            let cache: StepCache<Vec<f64>> = StepCache::new(&setup.system);
            let evaluate =
                |s: f64, field: &ControlField| cache.get(s, field, |prop| Ok(gradient_field(prop, &setup.state, &first)?.samples));
            let flow = FlowProblem::new(setup.field0.clone(), (0.0, config.gradient_s_max)).with_max_steps(config.max_steps);
            let result = integrate(
                &config.integrator,
                flow,
                |s: f64, field: &ControlField, _: f64| Ok(evaluate(s, field)?.1.as_ref().clone()),
                |s: f64, field: &ControlField| {
                    let (prop, _) = evaluate(s, field)?;
                    let phi = expectations(&prop, &setup.state, &logged)?;
                    let reached = phi[0] >= stop_at;
                    recorder.record(
                        s,
                        prop.final_propagator(),
                        field,
                        StepMeasurement {
                            phi,
                            ..Default::default()
                        },
                    );
                    Ok(if reached { ObserverAction::Stop } else { watch.action() })
                },
            );
            (result, cache.computed.get())
        }
    };
    let log = recorder.finish();
    let outcome = RunOutcome::new(result, &log, propagations, &watch);
    Ok(GradientFlowRun {
        monotone: log.is_monotone(0),
        outcome,
        log,
    })
}

/// Steepest ascent with a Brent line search along the gradient per iteration.
#[allow(clippy::too_many_arguments)]
fn line_search_ascent(
    setup: &TrackingSetup,
    config: &ExperimentConfig,
    first: &ObservableSet,
    logged: &ObservableSet,
    stop_at: f64,
    seed_step: f64,
    watch: &Watch,
    recorder: &mut TrajectoryRecorder,
    propagations: &mut usize,
) -> Result<IntegrationReport> {
    let mut field = setup.field0.clone();
    let mut s = 0.0;
    let mut accepted = 0;
    let termination = loop {
        let prop = propagate(&setup.system, &field)?;
        *propagations += 1;
        let phi = expectations(&prop, &setup.state, logged)?;
        let current = phi[0];
        recorder.record(
            s,
            prop.final_propagator(),
            &field,
            StepMeasurement {
                phi,
                ..Default::default()
            },
        );
        if current >= stop_at || watch.expired() {
            break Termination::Stopped;
        }
        if accepted >= config.max_steps {
            break Termination::StepLimit;
        }
        let direction = gradient_field(&prop, &setup.state, first)?.samples;
        let line = brent_line_search(
            |alpha| {
                *propagations += 1;
                let u = final_propagator(&setup.system, &field.axpy(alpha, &direction)?)?;
                Ok(-weighted_objective_at(&u, &setup.state, first)?)
            },
            seed_step,
        )
        .map_err(|e| e.at_step(s))?;
        if !(-line.value > current) {
            break Termination::ReachedEnd;
        }
        field = field.axpy(line.step, &direction)?;
        s += line.step;
        accepted += 1;
    };
    Ok(IntegrationReport {
        accepted_steps: accepted,
        rejected_steps: 0,
        rhs_evaluations: *propagations,
        s_values: recorder.log().records.iter().map(|r| r.s).collect(),
        field,
        termination,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientFlowExperiment {
    pub kinematic_maximum: f64,
    pub threshold_value: f64,
    pub run: GradientFlowRun,
    pub steps_to_threshold: Option<usize>,
}

/// Gradient ascent of `<Theta_1>` until it reaches the configured fraction of
/// its kinematic maximum.
pub fn run_gradient_flow(config: &ExperimentConfig) -> Result<GradientFlowExperiment> {
    config.validate()?;
    let deadline = deadline(config);
    let system = config.system.build()?;
    let state = config.state.build(&system)?;
    let observables = sampled_observables(config)?;
    let field0 = sampled_field(&system, config.seed, 0)?;
    let u0 = final_propagator(&system, &field0)?;
    let maximum = kinematic_maximum(&state, &observables.observables()[0])?;
    let phi0 = weighted_objective_at(&u0, &state, &observables.truncated(1)?)?;
    // The kinematic optimum W is not needed here.
    let setup = TrackingSetup {
        kinematic: KinematicSummary {
            phi_initial: phi0,
            phi_final: phi0,
            maximum,
            s_final: 0.0,
            points: 1,
            rejected_steps: 0,
            termination: "skipped".into(),
        },
        w: u0.clone(),
        system,
        state,
        observables,
        field0,
        u0,
        deadline,
    };
    let threshold_value = setup.threshold_value(config);
    let run = run_gradient_flow_from(&setup, config, threshold_value)?;
    Ok(GradientFlowExperiment {
        kinematic_maximum: maximum,
        threshold_value,
        steps_to_threshold: run.log.first_step_reaching(0, threshold_value),
        run,
    })
}

// ---------------------------------------------------------------- efficiency

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: String,
    /// Accepted steps until `<Theta_1>` first reached the threshold.
    pub steps_to_threshold: Option<usize>,
    /// The threshold was not reached.
    pub censored: bool,
    pub outcome: RunOutcome,
    pub log: TrajectoryLog,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyComparison {
    pub kinematic: KinematicSummary,
    pub threshold_value: f64,
    pub observables: usize,
    pub motc: MethodResult,
    pub gradient: MethodResult,
}

/// Accepted steps needed by MOTC (largest configured `m`) and by the gradient
/// flow, with the same integrator settings, to bring `<Theta_1>` to the threshold.
pub fn run_efficiency_comparison(config: &ExperimentConfig) -> Result<EfficiencyComparison> {
    let setup = prepare_tracking(config)?;
    let threshold_value = setup.threshold_value(config);
    let m = config.max_observables();
    let method = |name: &str, log: TrajectoryLog, outcome: RunOutcome| {
        let steps_to_threshold = log.first_step_reaching(0, threshold_value);
        MethodResult {
            method: name.into(),
            censored: steps_to_threshold.is_none(),
            steps_to_threshold,
            outcome,
            log,
        }
    };
    let (motc, gradient) = rayon::join(
        || run_motc_tracking(&setup, config, m, Some(threshold_value)),
        || run_gradient_flow_from(&setup, config, threshold_value),
    );
    let (motc, gradient) = (motc?, gradient?);
    Ok(EfficiencyComparison {
        kinematic: setup.kinematic.clone(),
        threshold_value,
        observables: m,
        motc: method("motc", motc.log, motc.outcome),
        gradient: method("gradient", gradient.log, gradient.outcome),
    })
}

// ---------------------------------------------------------------- unitary tracking

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitaryTrackExperiment {
    pub kinematic: KinematicSummary,
    /// `||A||_F`, the geodesic length from `U0` to `W`.
    pub geodesic_length: f64,
    pub outcome: RunOutcome,
    pub log: TrajectoryLog,
}

/// Tracks the full propagator along the geodesic from `U0` to `W`. The
/// correction `beta` closes the gap to `Q_s` over an algorithmic time `1/beta`.
pub fn run_unitary_tracking(config: &ExperimentConfig) -> Result<UnitaryTrackExperiment> {
    reject_line_search(config)?;
    let setup = prepare_tracking(config)?;
    let target = geodesic_target_unitary(&setup.u0, &setup.w)?;
    let track = target.as_unitary()?;
    let correction = match config.correction {
        CorrectionConfig::Off => UnitaryCorrection::Off,
        CorrectionConfig::Beta { beta } => UnitaryCorrection::Geodesic { step: 1.0 / beta },
    };
    let problem = UnitaryProblem {
        track,
        correction,
        policy: GramianPolicy::unitary(),
    };
    let free = config.free_function.build();
    let logged = setup.observables.truncated(config.max_observables())?;
    let cache: StepCache<TrackingRhs> = StepCache::new(&setup.system);
    let evaluate = |s: f64, field: &ControlField| {
        cache.get(s, field, |prop| problem.rhs(prop, s.clamp(0.0, 1.0), &free.samples(field)?))
    };
    let watch = Watch::new(setup.deadline);
    let mut recorder = TrajectoryRecorder::new("unitary", logged.len());
    let flow = FlowProblem::new(setup.field0.clone(), (0.0, 1.0)).with_max_steps(config.max_steps);
    let result = integrate(
        &config.integrator,
        flow,
        |s: f64, field: &ControlField, _: f64| Ok(evaluate(s, field)?.1.derivative.samples.clone()),
        |s: f64, field: &ControlField| {
            let (prop, rhs) = evaluate(s, field)?;
            recorder.record(
                s,
                prop.final_propagator(),
                field,
                StepMeasurement {
                    phi: expectations(&prop, &setup.state, &logged)?,
                    target: None,
                    unitary_distance: Some(rhs.deviation),
                    condition: Some(rhs.condition),
                },
            );
            Ok(watch.action())
        },
    );
    let log = recorder.finish();
    let outcome = RunOutcome::new(result, &log, cache.computed.get(), &watch);
    Ok(UnitaryTrackExperiment {
        kinematic: setup.kinematic.clone(),
        geodesic_length: track.pathlength(),
        outcome,
        log,
    })
}
