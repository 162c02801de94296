//! CSV and JSON artifacts with seed and configuration provenance.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::{ExperimentConfig, OutputConfig, OutputFormat};
use super::experiments::{
    EfficiencyComparison, GradientFlowExperiment, GramianDistribution, MethodResult, MotcExperiment, RunOutcome,
    UnitaryTrackExperiment,
};
use super::log::{format_number, TrajectoryLog};

/// Git-style blob hash (`sha256("blob <len>\0" + body)`) of the compact JSON
/// form of `config`, with the output settings reset.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = ExperimentConfig {
        output: OutputConfig::default(),
        ..config.clone()
    };
    let body = serde_json::to_vec(&canonical).expect("configuration serializes");
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", body.len()).as_bytes());
    hasher.update(&body);
    hex::encode(hasher.finalize())
}

/// A named CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub name: String,
    pub content: String,
}

/// Anything an experiment can write to disk.
pub trait Artifact {
    fn experiment(&self) -> &'static str;
    fn tables(&self) -> Vec<CsvTable>;
    fn summary(&self) -> Value;
}

fn outcome_json(outcome: &RunOutcome) -> Value {
    serde_json::to_value(outcome).expect("outcome serializes")
}

fn log_json(log: &TrajectoryLog) -> Value {
    json!({
        "records": log.len(),
        "accepted_steps": log.accepted_steps(),
        "final_s": log.final_s(),
        "final_unitary_pathlength": log.final_unitary_pathlength(),
        "final_field_pathlength": log.final_field_pathlength(),
        "mean_tracking_error": log.mean_tracking_error(),
        "max_tracking_error": log.max_tracking_error(),
        "max_condition": log.records.iter().filter_map(|r| r.condition).reduce(f64::max),
        "final_phi": log.records.last().map(|r| r.phi.clone()),
    })
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("summary serializes")
}

impl Artifact for GramianDistribution {
    fn experiment(&self) -> &'static str {
        "gramian-dist"
    }

    fn tables(&self) -> Vec<CsvTable> {
        let mut samples = String::from("sample,quantity,condition,log10_condition\n");
        for s in &self.samples {
            let _ = writeln!(
                samples,
                "{},{},{},{}",
                s.sample,
                s.quantity,
                format_number(s.condition),
                format_number(s.condition.log10())
            );
        }
        let mut histogram = String::from("quantity,lower_log10,upper_log10,count\n");
        for summary in &self.summaries {
            for bin in &summary.histogram {
                let _ = writeln!(
                    histogram,
                    "{},{},{},{}",
                    summary.quantity,
                    format_number(bin.lower_log10),
                    format_number(bin.upper_log10),
                    bin.count
                );
            }
        }
        vec![
            CsvTable {
                name: "conditions".into(),
                content: samples,
            },
            CsvTable {
                name: "histogram".into(),
                content: histogram,
            },
        ]
    }

    fn summary(&self) -> Value {
        json!({
            "quantities": self.quantities,
            "failures": to_value(&self.failures),
            "statistics": self.summaries.iter().map(|s| json!({
                "quantity": s.quantity,
                "count": s.count,
                "infinite": s.infinite,
                "median_log10": s.median_log10,
                "mean_log10": s.mean_log10,
                "min_log10": s.min_log10,
                "max_log10": s.max_log10,
            })).collect::<Vec<_>>(),
        })
    }
}

impl Artifact for MotcExperiment {
    fn experiment(&self) -> &'static str {
        "motc-track"
    }

    fn tables(&self) -> Vec<CsvTable> {
        self.runs
            .iter()
            .flat_map(|r| {
                [
                    CsvTable {
                        name: format!("trajectory_m{}", r.run.m),
                        content: r.run.log.to_csv(),
                    },
                    CsvTable {
                        name: format!("spectrum_m{}", r.run.m),
                        content: r.spectrum.to_csv(),
                    },
                ]
            })
            .collect()
    }

    fn summary(&self) -> Value {
        json!({
            "kinematic": to_value(&self.kinematic),
            "runs": self.runs.iter().map(|r| json!({
                "m": r.run.m,
                "outcome": outcome_json(&r.run.outcome),
                "trajectory": log_json(&r.run.log),
                "high_frequency_modes": r.high_frequency_modes,
            })).collect::<Vec<_>>(),
        })
    }
}

fn method_json(method: &MethodResult) -> Value {
    json!({
        "method": method.method,
        "steps_to_threshold": method.steps_to_threshold,
        "censored": method.censored,
        "outcome": outcome_json(&method.outcome),
        "trajectory": log_json(&method.log),
    })
}

impl Artifact for EfficiencyComparison {
    fn experiment(&self) -> &'static str {
        "efficiency"
    }

    fn tables(&self) -> Vec<CsvTable> {
        vec![
            CsvTable {
                name: "motc".into(),
                content: self.motc.log.to_csv(),
            },
            CsvTable {
                name: "gradient".into(),
                content: self.gradient.log.to_csv(),
            },
        ]
    }

    fn summary(&self) -> Value {
        json!({
            "kinematic": to_value(&self.kinematic),
            "threshold_value": self.threshold_value,
            "observables": self.observables,
            "motc": method_json(&self.motc),
            "gradient": method_json(&self.gradient),
        })
    }
}

impl Artifact for GradientFlowExperiment {
    fn experiment(&self) -> &'static str {
        "grad-flow"
    }

    fn tables(&self) -> Vec<CsvTable> {
        vec![CsvTable {
            name: "trajectory".into(),
            content: self.run.log.to_csv(),
        }]
    }

    fn summary(&self) -> Value {
        json!({
            "kinematic_maximum": self.kinematic_maximum,
            "threshold_value": self.threshold_value,
            "steps_to_threshold": self.steps_to_threshold,
            "monotone": self.run.monotone,
            "outcome": outcome_json(&self.run.outcome),
            "trajectory": log_json(&self.run.log),
        })
    }
}

impl Artifact for UnitaryTrackExperiment {
    fn experiment(&self) -> &'static str {
        "unitary-track"
    }

    fn tables(&self) -> Vec<CsvTable> {
        vec![CsvTable {
            name: "trajectory".into(),
            content: self.log.to_csv(),
        }]
    }

    fn summary(&self) -> Value {
        json!({
            "kinematic": to_value(&self.kinematic),
            "geodesic_length": self.geodesic_length,
            "outcome": outcome_json(&self.outcome),
            "trajectory": log_json(&self.log),
            "max_unitary_distance": self.log.records.iter().filter_map(|r| r.unitary_distance).reduce(f64::max),
        })
    }
}

/// JSON summary document: experiment name, seed, configuration hash, the
/// configuration itself and the experiment's statistics.
pub fn summary_document<A: Artifact + ?Sized>(artifact: &A, config: &ExperimentConfig) -> Value {
    json!({
        "experiment": artifact.experiment(),
        "seed": config.seed,
        "config_hash": config_hash(config),
        "config": to_value(config),
        "summary": artifact.summary(),
    })
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<experiment>_<table>.csv` files and `<experiment>_summary.json` into
/// `dir`, creating it if needed. Returns the written paths.
pub fn emit_results<A: Artifact + ?Sized>(
    artifact: &A,
    config: &ExperimentConfig,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let prefix = artifact.experiment();
    let mut written = Vec::new();
    if format.csv() {
        for table in artifact.tables() {
            let path = dir.join(format!("{prefix}_{}.csv", table.name));
            write_file(&path, &table.content)?;
            written.push(path);
        }
    }
    if format.json() {
        let path = dir.join(format!("{prefix}_summary.json"));
        let mut text = serde_json::to_string_pretty(&summary_document(artifact, config)).expect("summary serializes");
        text.push('\n');
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
