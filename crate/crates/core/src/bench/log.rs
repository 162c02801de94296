//! Per-step trajectory records, CSV rendering and field spectra.

use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dynamics::ControlField;
use crate::linalg::ComplexMatrix;

/// Formats with 17 significant digits so values round-trip exactly.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

fn format_optional(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    /// Accepted-step index; 0 is the initial point.
    pub step: usize,
    pub s: f64,
    pub phi: Vec<f64>,
    /// Empty when the run does not track observables.
    pub target: Vec<f64>,
    /// `max_k |phi_k - target_k|`.
    pub tracking_error: Option<f64>,
    pub unitary_pathlength: f64,
    pub field_pathlength: f64,
    /// `||U_s(T) - Q_s||_F` on unitary tracks.
    pub unitary_distance: Option<f64>,
    pub condition: Option<f64>,
}

/// What the caller measured at one accepted point.
#[derive(Clone, Debug, Default)]
pub struct StepMeasurement {
    pub phi: Vec<f64>,
    pub target: Option<Vec<f64>>,
    pub unitary_distance: Option<f64>,
    pub condition: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryLog {
    pub label: String,
    pub observables: usize,
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryLog {
    pub fn new(label: impl Into<String>, observables: usize) -> Self {
        TrajectoryLog {
            label: label.into(),
            observables,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Accepted steps after the initial point.
    pub fn accepted_steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    fn tracking_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.tracking_error)
    }

    pub fn mean_tracking_error(&self) -> Option<f64> {
        let (sum, n) = self.tracking_errors().fold((0.0, 0usize), |(a, n), e| (a + e, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn max_tracking_error(&self) -> Option<f64> {
        self.tracking_errors().reduce(f64::max)
    }

    pub fn final_unitary_pathlength(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.unitary_pathlength)
    }

    pub fn final_field_pathlength(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.field_pathlength)
    }

    pub fn final_s(&self) -> Option<f64> {
        self.records.last().map(|r| r.s)
    }

    /// First accepted step whose `phi[component]` reaches `level`.
    pub fn first_step_reaching(&self, component: usize, level: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.phi.get(component).is_some_and(|&p| p >= level))
            .map(|r| r.step)
    }

    /// True when `phi[component]` never decreases between consecutive records.
    pub fn is_monotone(&self, component: usize) -> bool {
        self.records
            .windows(2)
            .all(|w| match (w[0].phi.get(component), w[1].phi.get(component)) {
                (Some(a), Some(b)) => b >= a,
                _ => true,
            })
    }

    pub fn csv_header(&self) -> String {
        let mut header =
            String::from("step,s,tracking_error,unitary_pathlength,field_pathlength,unitary_distance,condition");
        for k in 1..=self.observables {
            let _ = write!(header, ",phi_{k}");
        }
        for k in 1..=self.observables {
            let _ = write!(header, ",target_{k}");
        }
        header
    }

    /// One row per record. Missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.records {
            let mut cells = vec![
                r.step.to_string(),
                format_number(r.s),
                format_optional(r.tracking_error),
                format_number(r.unitary_pathlength),
                format_number(r.field_pathlength),
                format_optional(r.unitary_distance),
                format_optional(r.condition),
            ];
            for k in 0..self.observables {
                cells.push(format_optional(r.phi.get(k).copied()));
            }
            for k in 0..self.observables {
                cells.push(format_optional(r.target.get(k).copied()));
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Builds a [`TrajectoryLog`] from accepted points, accumulating pathlengths.
#[derive(Clone, Debug)]
pub struct TrajectoryRecorder {
    log: TrajectoryLog,
    previous: Option<(ComplexMatrix, ControlField)>,
}

impl TrajectoryRecorder {
    pub fn new(label: impl Into<String>, observables: usize) -> Self {
        TrajectoryRecorder {
            log: TrajectoryLog::new(label, observables),
            previous: None,
        }
    }

    pub fn record(&mut self, s: f64, u: &ComplexMatrix, field: &ControlField, measured: StepMeasurement) {
        let (upath, fpath) = match (&self.previous, self.log.records.last()) {
            (Some((pu, pf)), Some(last)) => (
                last.unitary_pathlength + (u - pu).frobenius_norm(),
                last.field_pathlength + field.distance(pf),
            ),
            _ => (0.0, 0.0),
        };
        let tracking_error = measured.target.as_ref().map(|target| {
            measured
                .phi
                .iter()
                .zip(target)
                .map(|(p, w)| (p - w).abs())
                .fold(0.0, f64::max)
        });
        self.log.records.push(TrajectoryRecord {
            step: self.log.records.len(),
            s,
            phi: measured.phi,
            target: measured.target.unwrap_or_default(),
            tracking_error,
            unitary_pathlength: upath,
            field_pathlength: fpath,
            unitary_distance: measured.unitary_distance,
            condition: measured.condition,
        });
        self.previous = Some((u.clone(), field.clone()));
    }

    pub fn last_field(&self) -> Option<&ControlField> {
        self.previous.as_ref().map(|(_, f)| f)
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn finish(self) -> TrajectoryLog {
        self.log
    }
}

/// One-sided power spectrum `|FFT(eps)_k|^2` at `omega_k = 2 pi k / (q dt)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn of_field(field: &ControlField, dt: f64) -> Self {
        let q = field.len();
        let mut buffer: Vec<Complex64> = field.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        if q > 0 {
            FftPlanner::new().plan_fft_forward(q).process(&mut buffer);
        }
        let bins = if q == 0 { 0 } else { q / 2 + 1 };
        Spectrum {
            omega: (0..bins).map(|k| 2.0 * std::f64::consts::PI * k as f64 / (q as f64 * dt)).collect(),
            power: buffer[..bins].iter().map(|c| c.norm_sqr()).collect(),
        }
    }

    /// Modes strictly above `omega_cutoff` with power within `decibels` (negative) of the peak.
    pub fn modes_above(&self, omega_cutoff: f64, decibels: f64) -> usize {
        let peak = self.power.iter().copied().fold(0.0, f64::max);
        let floor = peak * 10f64.powf(decibels / 10.0);
        self.omega
            .iter()
            .zip(&self.power)
            .filter(|&(&w, &p)| w > omega_cutoff && p >= floor && p > 0.0)
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,power\n");
        for (w, p) in self.omega.iter().zip(&self.power) {
            let _ = writeln!(out, "{},{}", format_number(*w), format_number(*p));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_scaled(n: usize, phase: f64) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, |i, j| if i == j { Complex64::from_polar(1.0, phase) } else { Complex64::new(0.0, 0.0) })
    }

    #[test]
    fn empty_log_is_header_only() {
        let log = TrajectoryLog::new("empty", 2);
        let csv = log.to_csv();
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(
            csv.trim_end(),
            "step,s,tracking_error,unitary_pathlength,field_pathlength,unitary_distance,condition,phi_1,phi_2,target_1,target_2"
        );
        assert_eq!(log.mean_tracking_error(), None);
    }

    #[test]
    fn recorder_accumulates_pathlengths() {
        let mut rec = TrajectoryRecorder::new("t", 1);
        let fields = [vec![0.0, 0.0], vec![3.0, 4.0], vec![3.0, 4.0], vec![0.0, 4.0]];
        for (k, samples) in fields.iter().enumerate() {
            let u = identity_scaled(2, 0.1 * k as f64);
            let measured = StepMeasurement {
                phi: vec![k as f64],
                target: Some(vec![0.5 * k as f64]),
                ..Default::default()
            };
            rec.record(k as f64 / 3.0, &u, &ControlField::new(samples.clone()).unwrap(), measured);
        }
        let log = rec.finish();
        assert_eq!(log.accepted_steps(), 3);
        assert!((log.final_field_pathlength() - 8.0).abs() < 1e-15);
        let chord = (2.0 * (2.0 - 2.0 * 0.1f64.cos())).sqrt();
        assert!((log.final_unitary_pathlength() - 3.0 * chord).abs() < 1e-14);
        assert!(log.records.windows(2).all(|w| w[1].unitary_pathlength >= w[0].unitary_pathlength));
        assert_eq!(log.max_tracking_error(), Some(1.5));
        assert_eq!(log.first_step_reaching(0, 2.0), Some(2));
        assert!(log.is_monotone(0));
        assert_eq!(log.to_csv().lines().count(), log.accepted_steps() + 2);
    }

    #[test]
    fn csv_numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn spectrum_locates_a_pure_tone() {
        let q = 1024;
        let dt = 0.1;
        let k0 = 40;
        let omega0 = 2.0 * std::f64::consts::PI * k0 as f64 / (q as f64 * dt);
        let field = ControlField::new((0..q).map(|j| (omega0 * j as f64 * dt).sin()).collect()).unwrap();
        let spec = Spectrum::of_field(&field, dt);
        assert_eq!(spec.omega.len(), q / 2 + 1);
        let peak = (0..spec.power.len()).max_by(|&a, &b| spec.power[a].total_cmp(&spec.power[b])).unwrap();
        assert_eq!(peak, k0);
        // Parseval for a real tone: |X_k0|^2 = (q/2)^2.
        assert!((spec.power[k0] - (q as f64 / 2.0).powi(2)).abs() < 1e-6);
        assert_eq!(spec.modes_above(omega0 - 1e-9, -40.0), 1);
        assert_eq!(spec.modes_above(omega0, -40.0), 0);
    }
}
