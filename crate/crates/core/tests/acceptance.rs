//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any fails.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use motc_core::bench::{
    build_ground_state, build_model_system, build_observable_set, build_thermal_state, build_truncated_thermal_state,
    run_efficiency_comparison, run_gramian_distribution, run_motc_experiment, sampled_field, sampled_observables,
    ExperimentConfig, MotcExperiment, RunTermination, StateConfig,
};
use motc_core::dynamics::{evolved_trace, final_propagator, propagate, expectations, ControlField, StateSpec};
use motc_core::landscape::{
    analytic_purestate_flow, gradient_field, kinematic_flow, natural_basis_rank, weighted_objective_at,
    KinematicOptions, ObservableSet,
};
use motc_core::linalg::{eig_hermitian, expi_hermitian, hermitian_coords, ComplexMatrix, HermitianMatrix};
use motc_core::tracking::{
    geodesic_target_observables, geodesic_target_unitary, motc_a_vector, motc_rhs, solve_tracking,
    unitary_rhs, unitary_tracking_rate, Correction, FreeFunction, GramianPolicy, UnitaryCorrection,
};

const UNITARITY_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-10;
const GRADIENT_REL_TOL: f64 = 1e-4;
const FLOW_ORACLE_TOL: f64 = 1e-6;
const G_MEDIAN_LOG10: (f64, f64) = (14.0, 22.0);
const GAMMA_MEDIAN_LOG10: (f64, f64) = (3.0, 8.0);
const TRACKING_ERROR_FRACTION: f64 = 1e-2;
const SCALAR_FLOW_TOL: f64 = 1e-12;
const UNITARY_AS_MOTC_TOL: f64 = 1e-8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct Suite {
    failures: usize,
    /// Criterion ids given on the command line; empty runs all.
    only: Vec<usize>,
}

impl Suite {
    fn selected(&self, id: usize) -> bool {
        self.only.is_empty() || self.only.contains(&id)
    }

    fn run(&mut self, id: usize, name: &str, budget: Duration, body: impl FnOnce() -> Verdict) {
        if !self.selected(id) {
            return;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(body));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass, v.detail),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let in_time = elapsed <= budget;
        let pass = pass && in_time;
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {detail} ({:.1} s, budget {} s{})",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
}

fn model_config() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn model_states(system: &motc_core::dynamics::QuantumSystem) -> Vec<(&'static str, StateSpec)> {
    vec![
        ("pure", build_ground_state(system).unwrap()),
        ("rank7", build_truncated_thermal_state(system, 1.0, 7).unwrap()),
        ("thermal", build_thermal_state(system, 1.0).unwrap()),
    ]
}

fn unitarity_and_conservation() -> Verdict {
    let config = model_config();
    let system = config.system.build().unwrap();
    let state = build_thermal_state(&system, 1.0).unwrap();
    let mut worst_unitarity: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    for k in 0..100 {
        let prop = propagate(&system, &sampled_field(&system, 1000 + k, 0).unwrap()).unwrap();
        for u in &prop.cumulative {
            worst_unitarity = worst_unitarity.max(u.unitarity_deviation());
            worst_trace = worst_trace.max((evolved_trace(u, &state) - 1.0).abs());
        }
    }
    verdict(
        worst_unitarity <= UNITARITY_TOL && worst_trace <= TRACE_TOL,
        format!("max ||U^dag U - I||_F = {worst_unitarity:.2e}, max |Tr rho(T) - 1| = {worst_trace:.2e} over 100 fields"),
    )
}

fn gradient_correctness() -> Verdict {
    let config = model_config();
    let system = config.system.build().unwrap();
    let set = build_observable_set(11, 4, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let field = sampled_field(&system, 21, 0).unwrap();
    let prop = propagate(&system, &field).unwrap();
    let weights = system.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let indices: Vec<usize> = (0..50).map(|_| rng.gen_range(0..system.q() - 1)).collect();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (_, state) in model_states(&system) {
        let grad = gradient_field(&prop, &state, &set).unwrap().samples;
        for &j in &indices {
            let mut bump = vec![0.0; system.q()];
            bump[j] = h;
            let phi = |sign: f64| {
                let u = final_propagator(&system, &field.axpy(sign, &bump).unwrap()).unwrap();
                weighted_objective_at(&u, &state, &set).unwrap()
            };
            let fd = (phi(1.0) - phi(-1.0)) / (2.0 * h * weights[j]);
            worst = worst.max((grad[j] - fd).abs() / grad[j].abs().max(fd.abs()));
        }
    }
    verdict(
        worst <= GRADIENT_REL_TOL,
        format!("max relative error {worst:.2e} at 50 indices x 3 states"),
    )
}

/// Real Householder reflection taking `e_0` to the unit vector `psi`.
fn householder_to(psi: &[f64]) -> ComplexMatrix {
    let n = psi.len();
    let w: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 } - psi[i]).collect();
    let ww: f64 = w.iter().map(|x| x * x).sum();
    ComplexMatrix::from_fn(n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        let reflect = if ww > 0.0 { 2.0 * w[i] * w[j] / ww } else { 0.0 };
        Complex64::new(delta - reflect, 0.0)
    })
}

fn appendix_flow_oracle() -> Verdict {
    let n = 11;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let state = StateSpec::pure(n, 0).unwrap();
    for _ in 0..10 {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let x0: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let lambdas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let psi: Vec<f64> = x0.iter().map(|x| x.sqrt()).collect();
        let set = ObservableSet::new(vec![HermitianMatrix::from_real_diagonal(&lambdas)]).unwrap();
        let options = KinematicOptions {
            s_max: 5.0,
            ds: 1e-3,
            ds_max: 1e-3,
            growth: 1.0,
            gradient_tolerance: 0.0,
            ..KinematicOptions::default()
        };
        let trajectory = kinematic_flow(&householder_to(&psi), &state, &set, &options).unwrap();
        for point in &trajectory.points {
            let exact = analytic_purestate_flow(&x0, &lambdas, point.s).unwrap();
            for (k, xk) in exact.iter().enumerate() {
                worst = worst.max((point.v[(k, 0)].norm_sqr() - xk).abs());
            }
        }
        let reached = trajectory.last().s;
        if (reached - 5.0).abs() > 1e-9 {
            return verdict(false, format!("flow stopped at s = {reached}"));
        }
    }
    verdict(worst <= FLOW_ORACLE_TOL, format!("max population error {worst:.2e} over s in [0, 5], 10 pairs"))
}

fn rank_oracle() -> Verdict {
    let system = build_model_system(11, 100.0, 2048).unwrap();
    let field = sampled_field(&system, 41, 0).unwrap();
    let prop = propagate(&system, &field).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for (label, state) in model_states(&system) {
        let n = state.rank();
        let squares: usize = state.degeneracies().iter().map(|d| d * d).sum();
        let expected = n * (2 * 11 - n) - squares;
        let got = natural_basis_rank(&prop, &state, 1e-8).unwrap().rank;
        pass &= got == expected;
        details.push(format!("{label} n={n}: {got}/{expected}"));
    }
    verdict(pass, details.join(", "))
}

fn gramian_conditioning() -> Verdict {
    let config = ExperimentConfig {
        states: vec![StateConfig::Thermal { temperature: 1.0 }, StateConfig::Pure],
        observables: vec![10],
        ..model_config()
    };
    let result = run_gramian_distribution(&config).unwrap();
    let g = result.summary("G").unwrap().median_log10;
    let thermal = result.summary("gamma[thermal][m=10]").unwrap().median_log10;
    let pure = result.summary("gamma[pure][m=10]").unwrap().median_log10;
    let pass = (G_MEDIAN_LOG10.0..=G_MEDIAN_LOG10.1).contains(&g)
        && (GAMMA_MEDIAN_LOG10.0..=GAMMA_MEDIAN_LOG10.1).contains(&thermal)
        && pure >= thermal
        && result.failures.is_empty();
    verdict(
        pass,
        format!(
            "median log10 cond: G {g:.2}, Gamma thermal {thermal:.2}, Gamma pure {pure:.2} ({} samples, {} failures)",
            config.samples,
            result.failures.len()
        ),
    )
}

fn tracking_orderings(experiment: &MotcExperiment) -> Verdict {
    let runs: Vec<_> = [2, 4, 10].iter().map(|&m| experiment.run_for(m).unwrap()).collect();
    if let Some(failed) = runs.iter().find(|r| r.run.outcome.failed()) {
        return verdict(false, format!("m={} failed: {:?}", failed.run.m, failed.run.outcome.error));
    }
    if let Some(short) = runs.iter().find(|r| r.run.outcome.termination != RunTermination::ReachedEnd) {
        return verdict(
            false,
            format!(
                "m={} ended with {:?} at s = {:.4} after {} accepted steps",
                short.run.m,
                short.run.outcome.termination,
                short.run.log.final_s().unwrap_or(0.0),
                short.run.outcome.accepted_steps
            ),
        );
    }
    let upath: Vec<f64> = runs.iter().map(|r| r.run.log.final_unitary_pathlength()).collect();
    let fpath: Vec<f64> = runs.iter().map(|r| r.run.log.final_field_pathlength()).collect();
    let mean2 = runs[0].run.log.mean_tracking_error().unwrap();
    let mean10 = runs[2].run.log.mean_tracking_error().unwrap();
    let pass = upath[0] > upath[1] && upath[1] > upath[2] && fpath[0] < fpath[1] && fpath[1] < fpath[2] && mean10 < mean2;
    verdict(
        pass,
        format!(
            "U path m=2/4/10: {:.3}/{:.3}/{:.3}; field path {:.3}/{:.3}/{:.3}; mean error m=2 {mean2:.2e}, m=10 {mean10:.2e}",
            upath[0], upath[1], upath[2], fpath[0], fpath[1], fpath[2]
        ),
    )
}

fn efficiency(budget: Duration) -> Verdict {
    let config = ExperimentConfig {
        time_limit_s: Some(budget.as_secs_f64()),
        ..model_config()
    };
    let result = run_efficiency_comparison(&config).unwrap();
    let motc = result.motc.steps_to_threshold;
    let grad = result.gradient.steps_to_threshold;
    let pass = matches!((motc, grad), (Some(a), Some(b)) if a < b);
    verdict(
        pass,
        format!(
            "accepted steps to 0.95 of max: motc m={} {motc:?} ({:?}), gradient {grad:?} ({:?})",
            result.observables, result.motc.outcome.termination, result.gradient.outcome.termination
        ),
    )
}

fn tracking_fidelity(experiment: &MotcExperiment, config: &ExperimentConfig) -> Verdict {
    let Some(run) = experiment.run_for(10) else {
        return verdict(false, "no m=10 run".into());
    };
    let set = sampled_observables(config).unwrap();
    let spread = set
        .observables()
        .iter()
        .map(|theta| {
            let ev = eig_hermitian(theta).unwrap().eigenvalues;
            ev.iter().copied().fold(f64::MIN, f64::max) - ev.iter().copied().fold(f64::MAX, f64::min)
        })
        .fold(0.0, f64::max);
    let worst = run.run.log.max_tracking_error().unwrap_or(f64::INFINITY);
    let complete = run.run.log.final_s() == Some(1.0);
    verdict(
        complete && worst <= TRACKING_ERROR_FRACTION * spread,
        format!(
            "max error {worst:.2e} vs {:.2e} (spread {spread:.3}), track {}",
            TRACKING_ERROR_FRACTION * spread,
            if complete { "complete" } else { "incomplete" }
        ),
    )
}

fn double_bracket_ascent() -> Verdict {
    let config = model_config();
    let system = config.system.build().unwrap();
    let set = sampled_observables(&config).unwrap();
    let states = model_states(&system);
    let options = KinematicOptions {
        s_max: 200.0,
        ds: 0.01,
        ds_max: 5.0,
        growth: 1.2,
        ..KinematicOptions::default()
    };
    let mut steps = 0;
    let mut violations = 0;
    for k in 0..20u64 {
        let u0 = final_propagator(&system, &sampled_field(&system, 900 + k, 0).unwrap()).unwrap();
        let state = &states[k as usize % states.len()].1;
        let trajectory = kinematic_flow(&u0, state, &set, &options).unwrap();
        steps += trajectory.points.len() - 1;
        violations += trajectory.points.windows(2).filter(|w| w[1].phi < w[0].phi).count();
    }
    verdict(violations == 0, format!("{violations} decreases over {steps} accepted steps, 20 starts"))
}

fn special_case_reductions() -> Verdict {
    let system = build_model_system(3, 100.0, 1001).unwrap();
    let field: ControlField = sampled_field(&system, 51, 0).unwrap();
    let prop = propagate(&system, &field).unwrap();
    let u0 = prop.final_propagator().clone();
    let nudge = HermitianMatrix::from_real_symmetric(3, |i, j| 0.4 * ((i + 2 * j) as f64).sin());
    let w = &u0 * &expi_hermitian(&nudge, 1.0).unwrap();

    // Scalar flow: d eps/ds = f + a (dPhi/ds - <a, f>) / <a, a>.
    let state = StateSpec::from_populations(&[0.6, 0.3, 0.1]).unwrap();
    let set = ObservableSet::new(vec![HermitianMatrix::from_real_diagonal(&[0.2, 0.9, 0.5])]).unwrap();
    let target = geodesic_target_observables(&u0, &w, &state, &set).unwrap();
    let track = target.as_observable().unwrap();
    let f = FreeFunction::MinFluence { eta: 7.0 }.samples(&field).unwrap();
    let (beta, s) = (10.0, 0.25);
    let got = motc_rhs(&prop, &state, &set, &target, s, &f, Correction::Proportional { beta }).unwrap();
    let a = &motc_a_vector(&prop, &state, &set).unwrap()[0];
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).zip(&prop.weights).map(|((p, q), w)| p * q * w).sum() };
    let phi = expectations(&prop, &state, &set).unwrap()[0];
    let rate = track.rate(s).unwrap()[0] + beta * (track.value(s).unwrap()[0] - phi);
    let (gamma, af) = (dot(a, a), dot(a, &f));
    let scalar_err = got
        .samples
        .iter()
        .zip(a)
        .zip(&f)
        .map(|((g, aj), fj)| {
            let expected = fj + aj / gamma * (rate - af);
            (g - expected).abs() / (1.0 + expected.abs())
        })
        .fold(0.0, f64::max);

    // Unitary tracking as MOTC with the real Hermitian coordinates of S(t) as the tracked functions.
    let unitary_target = geodesic_target_unitary(&u0, &w).unwrap();
    let correction = UnitaryCorrection::Geodesic { step: 0.05 };
    let f = FreeFunction::MinFluence { eta: 3.0 }.samples(&field).unwrap();
    let direct = unitary_rhs(&prop, &unitary_target, 0.4, &f, correction).unwrap().samples;
    let coords: Vec<Vec<f64>> = prop.sensitivity.iter().map(hermitian_coords).collect();
    let a: Vec<Vec<f64>> = (0..9).map(|k| coords.iter().map(|c| c[k]).collect()).collect();
    let rate = hermitian_coords(&unitary_tracking_rate(&u0, unitary_target.as_unitary().unwrap(), 0.4, correction).unwrap());
    let (via_motc, _) = solve_tracking(&a, &prop.weights, &rate, &f, &GramianPolicy::unitary()).unwrap();
    let scale = direct.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let unitary_err = direct.iter().zip(&via_motc).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;

    verdict(
        scalar_err <= SCALAR_FLOW_TOL && unitary_err <= UNITARY_AS_MOTC_TOL,
        format!("scalar flow error {scalar_err:.2e}, unitary-as-MOTC relative error {unitary_err:.2e} (N=3)"),
    )
}

fn main() {
    let only = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut suite = Suite { failures: 0, only };
    let minutes = |m: u64| Duration::from_secs(60 * m);
    suite.run(1, "unitarity and trace conservation", minutes(1), unitarity_and_conservation);
    suite.run(2, "gradient matches central differences", minutes(2), gradient_correctness);
    suite.run(3, "kinematic flow matches closed-form pure-state flow", minutes(1), appendix_flow_oracle);
    suite.run(4, "natural-basis rank equals n(2N-n) - sum n_i^2", minutes(1), rank_oracle);
    suite.run(5, "Gramian conditioning distribution", minutes(20), gramian_conditioning);

    let config = ExperimentConfig {
        time_limit_s: Some(minutes(30).as_secs_f64()),
        ..model_config()
    };
    let start = Instant::now();
    let experiment = if suite.selected(6) || suite.selected(8) {
        run_motc_experiment(&config).map(Some)
    } else {
        Ok(None)
    };
    let shared = start.elapsed();
    match &experiment {
        Ok(None) => {}
        Ok(Some(experiment)) => {
            suite.run(6, "tracking orderings across m", minutes(30).saturating_sub(shared), || {
                tracking_orderings(experiment)
            });
            suite.run(8, "tracking fidelity with correction", minutes(30).saturating_sub(shared), || {
                tracking_fidelity(experiment, &config)
            });
        }
        Err(e) => {
            let detail = format!("tracking experiment failed: {e}");
            suite.run(6, "tracking orderings across m", minutes(30), || verdict(false, detail.clone()));
            suite.run(8, "tracking fidelity with correction", minutes(30), || verdict(false, detail.clone()));
        }
    }
    if let Ok(Some(_)) = &experiment {
        println!("     tracking experiment shared by 6 and 8 took {:.1} s", shared.as_secs_f64());
    }
    suite.run(7, "tracking beats gradient flow in accepted steps", minutes(30), || efficiency(minutes(30)));
    suite.run(9, "double-bracket ascent is monotone", minutes(10), double_bracket_ascent);
    suite.run(10, "special-case reductions", minutes(1), special_case_reductions);

    println!("acceptance: {} failed", suite.failures);
    if suite.failures > 0 {
        std::process::exit(1);
    }
}
