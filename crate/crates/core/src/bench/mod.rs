//! Model systems and reproducible numerical experiments.

pub mod config;
pub mod experiments;
pub mod log;
pub mod model;
pub mod output;

pub use config::{
    CorrectionConfig, ExperimentConfig, FreeFunctionConfig, IntegratorConfig, KinematicConfig, OutputConfig,
    OutputFormat, StateConfig, SystemConfig, TrackConfig,
};
pub use experiments::{
    prepare_tracking, run_efficiency_comparison, run_gradient_flow, run_gramian_distribution, run_motc_experiment,
    run_motc_tracking, run_unitary_tracking, sampled_field, sampled_observables, EfficiencyComparison,
    GradientFlowExperiment, GramianDistribution, MotcExperiment, RunOutcome, RunTermination, TrackingSetup,
    UnitaryTrackExperiment,
};
pub use log::{Spectrum, StepMeasurement, TrajectoryLog, TrajectoryRecord, TrajectoryRecorder};
pub use model::{
    build_ground_state, build_model_system, build_observable_set, build_thermal_state,
    build_truncated_thermal_state, field_from_modes, kinematic_maximum, sample_field_modes, sample_random_field,
    FieldMode,
};
pub use output::{config_hash, emit_results, Artifact, CsvTable};
