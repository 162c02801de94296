//! Experiment configuration, parsed from JSON and command-line overrides.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{QuantumSystem, StateSpec};
use crate::error::{Error, Result};
use crate::integrate::{DEFAULT_ATOL, DEFAULT_DS_MAX, DEFAULT_DS_MIN, DEFAULT_MAX_STEPS, DEFAULT_RTOL};
use crate::landscape::KinematicOptions;
use crate::tracking::{Correction, FreeFunction, DEFAULT_BETA};

use super::model::{
    build_ground_state, build_model_system, build_thermal_state, build_truncated_thermal_state, DEFAULT_LEVELS,
    DEFAULT_Q, DEFAULT_T_FINAL,
};

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_THRESHOLD: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub levels: usize,
    pub t_final: f64,
    pub q: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            levels: DEFAULT_LEVELS,
            t_final: DEFAULT_T_FINAL,
            q: DEFAULT_Q,
        }
    }
}

impl SystemConfig {
    pub fn build(&self) -> Result<QuantumSystem> {
        build_model_system(self.levels, self.t_final, self.q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    /// Ground state of `H0`.
    Pure,
    Thermal { temperature: f64 },
    /// Thermal populations truncated to the `rank` most populated levels.
    Truncated { temperature: f64, rank: usize },
}

impl StateConfig {
    pub fn build(&self, system: &QuantumSystem) -> Result<StateSpec> {
        match *self {
            StateConfig::Pure => build_ground_state(system),
            StateConfig::Thermal { temperature } => build_thermal_state(system, temperature),
            StateConfig::Truncated { temperature, rank } => build_truncated_thermal_state(system, temperature, rank),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            StateConfig::Pure => "pure".into(),
            StateConfig::Thermal { .. } => "thermal".into(),
            StateConfig::Truncated { rank, .. } => format!("rank{rank}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegratorConfig {
    Euler {
        ds: f64,
    },
    Rk4 {
        ds: f64,
    },
    Rkck {
        atol: f64,
        rtol: f64,
        ds_min: f64,
        ds_max: f64,
    },
    /// Gradient flows only: Brent line search along the gradient each iteration.
    LineSearch {
        seed_step: f64,
    },
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::Rkck {
            atol: DEFAULT_ATOL,
            rtol: DEFAULT_RTOL,
            ds_min: DEFAULT_DS_MIN,
            ds_max: DEFAULT_DS_MAX,
        }
    }
}

/// Parses `key=value` pairs separated by commas.
fn parse_pairs(spec: &str) -> Result<Vec<(String, f64)>> {
    spec.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{pair}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("'{v}' is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn take(pairs: &[(String, f64)], key: &str) -> Option<f64> {
    pairs.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
}

fn reject_unknown(pairs: &[(String, f64)], allowed: &[&str]) -> Result<()> {
    match pairs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(Error::Config(format!("unknown parameter '{k}'"))),
        None => Ok(()),
    }
}

impl FromStr for IntegratorConfig {
    type Err = Error;

    /// `euler:ds=<x>`, `rk4:ds=<x>`, `rkck:atol=<x>,rtol=<x>[,ds_min=<x>,ds_max=<x>]`
    /// or `linesearch:seed=<x>`.
    fn from_str(spec: &str) -> Result<Self> {
        let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let pairs = parse_pairs(rest)?;
        let need = |key: &str| take(&pairs, key).ok_or_else(|| Error::Config(format!("integrator '{kind}' needs {key}=<x>")));
        let config = match kind {
            "euler" => {
                reject_unknown(&pairs, &["ds"])?;
                IntegratorConfig::Euler { ds: need("ds")? }
            }
            "rk4" => {
                reject_unknown(&pairs, &["ds"])?;
                IntegratorConfig::Rk4 { ds: need("ds")? }
            }
            "rkck" => {
                reject_unknown(&pairs, &["atol", "rtol", "ds_min", "ds_max"])?;
                IntegratorConfig::Rkck {
                    atol: take(&pairs, "atol").unwrap_or(DEFAULT_ATOL),
                    rtol: take(&pairs, "rtol").unwrap_or(DEFAULT_RTOL),
                    ds_min: take(&pairs, "ds_min").unwrap_or(DEFAULT_DS_MIN),
                    ds_max: take(&pairs, "ds_max").unwrap_or(DEFAULT_DS_MAX),
                }
            }
            "linesearch" => {
                reject_unknown(&pairs, &["seed"])?;
                IntegratorConfig::LineSearch {
                    seed_step: take(&pairs, "seed").unwrap_or(1.0),
                }
            }
            other => return Err(Error::Config(format!("unknown integrator '{other}'"))),
        };
        config.validate()?;
        Ok(config)
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            IntegratorConfig::Euler { ds } | IntegratorConfig::Rk4 { ds } => ds > 0.0 && ds.is_finite(),
            IntegratorConfig::Rkck {
                atol,
                rtol,
                ds_min,
                ds_max,
            } => atol > 0.0 && rtol > 0.0 && ds_min > 0.0 && ds_min <= ds_max && ds_max.is_finite(),
            IntegratorConfig::LineSearch { seed_step } => seed_step > 0.0 && seed_step.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid integrator settings {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrectionConfig {
    Off,
    Beta { beta: f64 },
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig::Beta { beta: DEFAULT_BETA }
    }
}

impl CorrectionConfig {
    pub fn observable(&self) -> Correction {
        match *self {
            CorrectionConfig::Off => Correction::Off,
            CorrectionConfig::Beta { beta } => Correction::Proportional { beta },
        }
    }

    pub fn enabled(&self) -> bool {
        !matches!(self, CorrectionConfig::Off)
    }
}

impl FromStr for CorrectionConfig {
    type Err = Error;

    /// `off` or `beta=<x>`.
    fn from_str(spec: &str) -> Result<Self> {
        if spec == "off" {
            return Ok(CorrectionConfig::Off);
        }
        let pairs = parse_pairs(spec)?;
        reject_unknown(&pairs, &["beta"])?;
        match take(&pairs, "beta") {
            Some(beta) if beta > 0.0 && beta.is_finite() => Ok(CorrectionConfig::Beta { beta }),
            _ => Err(Error::Config(format!("correction must be 'off' or 'beta=<positive>', got '{spec}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FreeFunctionConfig {
    #[default]
    Zero,
    Fluence {
        eta: f64,
    },
}

impl FreeFunctionConfig {
    pub fn build(&self) -> FreeFunction {
        match *self {
            FreeFunctionConfig::Zero => FreeFunction::Zero,
            FreeFunctionConfig::Fluence { eta } => FreeFunction::MinFluence { eta },
        }
    }
}

impl FromStr for FreeFunctionConfig {
    type Err = Error;

    /// `zero` or `fluence:eta=<x>`.
    fn from_str(spec: &str) -> Result<Self> {
        if spec == "zero" {
            return Ok(FreeFunctionConfig::Zero);
        }
        let rest = spec
            .strip_prefix("fluence:")
            .ok_or_else(|| Error::Config(format!("free function must be 'zero' or 'fluence:eta=<x>', got '{spec}'")))?;
        let pairs = parse_pairs(rest)?;
        reject_unknown(&pairs, &["eta"])?;
        match take(&pairs, "eta") {
            Some(eta) if eta > 0.0 && eta.is_finite() => Ok(FreeFunctionConfig::Fluence { eta }),
            _ => Err(Error::Config(format!("fluence free function needs eta=<positive>, got '{spec}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackConfig {
    /// Expectations along the unitary geodesic from `U0` to `W`.
    #[default]
    Geodesic,
    /// Straight line between the endpoint expectations.
    Straight,
}

/// Settings for the kinematic gradient flow that produces the tracking target `W`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicConfig {
    pub s_max: f64,
    pub ds: f64,
    pub ds_max: f64,
    pub growth: f64,
    pub gradient_tolerance: f64,
}

impl Default for KinematicConfig {
    fn default() -> Self {
        KinematicConfig {
            s_max: 1e5,
            ds: 0.01,
            ds_max: 50.0,
            growth: 1.5,
            gradient_tolerance: 1e-10,
        }
    }
}

impl KinematicConfig {
    pub fn options(&self) -> KinematicOptions {
        KinematicOptions {
            s_max: self.s_max,
            ds: self.ds,
            ds_max: self.ds_max,
            growth: self.growth,
            gradient_tolerance: self.gradient_tolerance,
            ..KinematicOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        match spec {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "both" => Ok(OutputFormat::Both),
            other => Err(Error::Config(format!("format must be csv, json or both, got '{other}'"))),
        }
    }
}

/// Where and how artifacts are written. Not part of the configuration hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("results"),
            format: OutputFormat::Both,
        }
    }
}

/// Everything that determines an experiment's results. Artifacts embed the
/// seed and a content hash of this structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: SystemConfig,
    /// State used by tracking, gradient-flow and efficiency runs.
    pub state: StateConfig,
    /// States compared by the Gramian distribution.
    pub states: Vec<StateConfig>,
    /// Observable counts `m`.
    pub observables: Vec<usize>,
    pub samples: usize,
    pub integrator: IntegratorConfig,
    pub correction: CorrectionConfig,
    pub free_function: FreeFunctionConfig,
    pub track: TrackConfig,
    pub kinematic: KinematicConfig,
    /// Fraction of the kinematic maximum of `<Theta_1>` counted as reaching the optimum.
    pub threshold: f64,
    /// Algorithmic-time horizon of gradient-flow runs.
    pub gradient_s_max: f64,
    pub max_steps: usize,
    pub histogram_bins: usize,
    /// Wall-clock limit in seconds for one experiment. Runs still in progress
    /// when it passes stop with `time_limit`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: DEFAULT_SEED,
            system: SystemConfig::default(),
            state: StateConfig::Truncated {
                temperature: 1.0,
                rank: 7,
            },
            states: vec![
                StateConfig::Thermal { temperature: 1.0 },
                StateConfig::Pure,
                StateConfig::Truncated {
                    temperature: 1.0,
                    rank: 7,
                },
            ],
            observables: vec![2, 4, 10],
            samples: DEFAULT_SAMPLES,
            integrator: IntegratorConfig::default(),
            correction: CorrectionConfig::default(),
            free_function: FreeFunctionConfig::default(),
            track: TrackConfig::default(),
            kinematic: KinematicConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            gradient_s_max: 1e4,
            max_steps: DEFAULT_MAX_STEPS,
            histogram_bins: 40,
            time_limit_s: None,
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.system.levels;
        if levels < 3 || self.system.q < 2 || !(self.system.t_final > 0.0 && self.system.t_final.is_finite()) {
            return Err(Error::Config(format!("invalid system settings {:?}", self.system)));
        }
        if self.observables.is_empty() || self.observables.iter().any(|&m| m == 0 || m > levels) {
            return Err(Error::Config(format!("observable counts {:?} must lie in 1..={levels}", self.observables)));
        }
        for state in std::iter::once(&self.state).chain(&self.states) {
            let ok = match *state {
                StateConfig::Pure => true,
                StateConfig::Thermal { temperature } => temperature > 0.0,
                StateConfig::Truncated { temperature, rank } => temperature > 0.0 && rank >= 1 && rank <= levels,
            };
            if !ok {
                return Err(Error::Config(format!("invalid state {state:?}")));
            }
        }
        if self.states.is_empty() {
            return Err(Error::Config("at least one state is needed".into()));
        }
        self.integrator.validate()?;
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        if !(self.gradient_s_max > 0.0 && self.gradient_s_max.is_finite()) {
            return Err(Error::Config("gradient_s_max must be positive".into()));
        }
        if self.samples == 0 || self.max_steps == 0 || self.histogram_bins == 0 {
            return Err(Error::Config("samples, max_steps and histogram_bins must be positive".into()));
        }
        if self.time_limit_s.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("time_limit_s must be positive".into()));
        }
        let k = &self.kinematic;
        if !(k.s_max > 0.0 && k.ds > 0.0 && k.ds <= k.ds_max && k.growth >= 1.0) {
            return Err(Error::Config(format!("invalid kinematic settings {k:?}")));
        }
        Ok(())
    }

    pub fn max_observables(&self) -> usize {
        self.observables.iter().copied().max().unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_cli_specs() {
        assert_eq!("euler:ds=0.01".parse::<IntegratorConfig>().unwrap(), IntegratorConfig::Euler { ds: 0.01 });
        assert_eq!(
            "rkck:atol=1e-5,rtol=1e-4".parse::<IntegratorConfig>().unwrap(),
            IntegratorConfig::Rkck {
                atol: 1e-5,
                rtol: 1e-4,
                ds_min: DEFAULT_DS_MIN,
                ds_max: DEFAULT_DS_MAX
            }
        );
        assert!("rkck:atol=-1".parse::<IntegratorConfig>().is_err());
        assert!("euler".parse::<IntegratorConfig>().is_err());
        assert!("euler:ds=0.1,foo=2".parse::<IntegratorConfig>().is_err());
        assert_eq!("off".parse::<CorrectionConfig>().unwrap(), CorrectionConfig::Off);
        assert_eq!("beta=4".parse::<CorrectionConfig>().unwrap(), CorrectionConfig::Beta { beta: 4.0 });
        assert!("beta=0".parse::<CorrectionConfig>().is_err());
        assert_eq!("zero".parse::<FreeFunctionConfig>().unwrap(), FreeFunctionConfig::Zero);
        assert_eq!(
            "fluence:eta=1000".parse::<FreeFunctionConfig>().unwrap(),
            FreeFunctionConfig::Fluence { eta: 1000.0 }
        );
        assert!("fluence".parse::<FreeFunctionConfig>().is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let config = ExperimentConfig::default();
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), config);
        let partial = ExperimentConfig::from_json(r#"{"seed": 3, "observables": [1, 2]}"#).unwrap();
        assert_eq!((partial.seed, partial.observables.clone()), (3, vec![1, 2]));
        assert!(ExperimentConfig::from_json(r#"{"observables": [12]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"unknown": 1}"#).is_err());
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Config(_))));
    }
}
