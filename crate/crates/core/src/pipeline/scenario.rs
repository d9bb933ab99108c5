//! Seeded synthetic scenarios: calibration corpora, detection suites and
//! the mode comparison.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Analyzer, Mode, PipelineConfig};
use crate::alarm::Transition;
use crate::error::Result;
use crate::signal_model::{DriveScenario, FaultMode, MultiChannelRecord, NoiseKind, OperatingPoint};
use crate::signature::{calibrate, CalibrationSample, SignatureLibrary};

/// A named fault used by the suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultClass {
    pub label: String,
    pub fault: FaultMode,
}

/// Harmonic, sideband and valve faults at moderate severity.
pub fn default_fault_classes() -> Vec<FaultClass> {
    vec![
        FaultClass {
            label: "harmonic".into(),
            fault: FaultMode::HarmonicInjection {
                order: 3,
                relative_amplitude: 0.1,
            },
        },
        FaultClass {
            label: "sideband".into(),
            fault: FaultMode::Sideband {
                carrier_hz: 50.0,
                offset_hz: 10.0,
                depth: 0.2,
            },
        },
        FaultClass {
            label: "valve".into(),
            fault: FaultMode::StochasticValveNoise {
                burst_rate_hz: 20.0,
                burst_amplitude: 1.0,
            },
        },
    ]
}

/// One member of each noise family; levels are set per scenario from the
/// SNR, so only the impulse rate matters here.
pub fn noise_regimes() -> Vec<NoiseKind> {
    vec![
        NoiseKind::Gaussian { sigma: 1.0 },
        NoiseKind::UniformWhite { half_range: 1.0 },
        NoiseKind::RandomImpulsive {
            rate_hz: 50.0,
            amplitude: 1.0,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub operating_point: OperatingPoint,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub onset_s: f64,
    pub snr_db: f64,
    pub with_pressure: bool,
    pub calibration_seeds: Vec<u64>,
    pub calibration_duration_s: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            operating_point: OperatingPoint::default(),
            sample_rate_hz: 5000.0,
            duration_s: 10.0,
            onset_s: 4.0,
            snr_db: 10.0,
            with_pressure: true,
            calibration_seeds: (1000..1008).collect(),
            calibration_duration_s: 6.0,
        }
    }
}

/// One seeded record with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Ground-truth labels after onset; empty for healthy records.
    pub labels: Vec<String>,
    pub faults: Vec<FaultMode>,
    pub noise: NoiseKind,
    pub seed: u64,
    pub onset_s: f64,
    pub duration_s: f64,
}

impl Scenario {
    pub fn new(classes: &[&FaultClass], noise: NoiseKind, seed: u64, suite: &SuiteConfig) -> Self {
        let labels: Vec<String> = classes.iter().map(|c| c.label.clone()).collect();
        let name = if labels.is_empty() {
            format!("healthy/{}/{seed}", noise.regime_name())
        } else {
            format!("{}/{}/{seed}", labels.join("+"), noise.regime_name())
        };
        Self {
            name,
            labels,
            faults: classes.iter().map(|c| c.fault).collect(),
            noise,
            seed,
            onset_s: suite.onset_s,
            duration_s: suite.duration_s,
        }
    }

    pub fn drive(&self, suite: &SuiteConfig) -> DriveScenario {
        let op = suite.operating_point;
        let noise = self
            .noise
            .at_snr_db(op.healthy_power(), suite.snr_db, suite.sample_rate_hz);
        DriveScenario::new(
            op,
            self.faults.clone(),
            noise,
            suite.sample_rate_hz,
            self.duration_s,
            self.seed,
        )
        .with_onset(self.onset_s, None)
        .with_pressure(suite.with_pressure)
    }

    pub fn generate(&self, suite: &SuiteConfig) -> Result<MultiChannelRecord> {
        self.drive(suite).generate()
    }
}

/// Healthy records and each single fault, for every regime and seed.
pub fn single_fault_suite(
    classes: &[FaultClass],
    regimes: &[NoiseKind],
    seeds: &[u64],
    suite: &SuiteConfig,
) -> Vec<Scenario> {
    let mut out = Vec::new();
    for noise in regimes {
        for &seed in seeds {
            out.push(Scenario::new(&[], *noise, seed, suite));
            for c in classes {
                out.push(Scenario::new(&[c], *noise, seed, suite));
            }
        }
    }
    out
}

/// Seeds of the shipped valve-noise comparison suite.
pub const VALVE_SUITE_SEEDS: std::ops::Range<u64> = 0..20;

/// Healthy and valve-faulted records under impulsive noise, one of each per
/// seed in [`VALVE_SUITE_SEEDS`].
pub fn valve_noise_suite(classes: &[FaultClass], suite: &SuiteConfig) -> Vec<Scenario> {
    let noise = NoiseKind::RandomImpulsive {
        rate_hz: 50.0,
        amplitude: 1.0,
    };
    let valve: Vec<&FaultClass> = classes.iter().filter(|c| c.label == "valve").collect();
    let mut out = Vec::new();
    for seed in VALVE_SUITE_SEEDS {
        out.push(Scenario::new(&[], noise, seed, suite));
        out.push(Scenario::new(&valve, noise, seed, suite));
    }
    out
}

/// Every unordered pair of distinct fault classes.
pub fn fault_pairs(classes: &[FaultClass]) -> Vec<[&FaultClass; 2]> {
    let mut out = Vec::new();
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            out.push([&classes[i], &classes[j]]);
        }
    }
    out
}

/// Labelled window features from fully faulted calibration records: healthy,
/// every single class and every pair, for each regime and calibration seed.
pub fn calibration_corpus(
    analyzer: &Analyzer,
    classes: &[FaultClass],
    regimes: &[NoiseKind],
    suite: &SuiteConfig,
) -> Result<Vec<CalibrationSample>> {
    let mut sets: Vec<Vec<&FaultClass>> = vec![vec![]];
    sets.extend(classes.iter().map(|c| vec![c]));
    sets.extend(fault_pairs(classes).into_iter().map(|p| p.to_vec()));
    let calib_suite = SuiteConfig {
        onset_s: 0.0,
        duration_s: suite.calibration_duration_s,
        ..suite.clone()
    };
    let mut jobs = Vec::new();
    for noise in regimes {
        for set in &sets {
            for &seed in &suite.calibration_seeds {
                jobs.push(Scenario::new(set, *noise, seed, &calib_suite));
            }
        }
    }
    let per_record: Vec<Vec<CalibrationSample>> = jobs
        .par_iter()
        .map(|s| -> Result<Vec<CalibrationSample>> {
            let rec = s.generate(&calib_suite)?;
            let report = analyzer.analyze(&rec)?;
            Ok(report
                .windows
                .into_iter()
                .map(|w| CalibrationSample {
                    labels: s.labels.clone(),
                    features: w.features,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_record.into_iter().flatten().collect())
}

/// Calibrates a library for one mode.
pub fn calibrate_library(
    cfg: &PipelineConfig,
    mode: Mode,
    classes: &[FaultClass],
    regimes: &[NoiseKind],
    suite: &SuiteConfig,
) -> Result<SignatureLibrary> {
    let analyzer = Analyzer::new(cfg.clone(), None, mode)?;
    calibrate(&calibration_corpus(&analyzer, classes, regimes, suite)?)
}

/// Per-record result of a suite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub truth: Vec<String>,
    /// Predicted labels per window.
    pub predicted: Vec<Vec<String>>,
    pub post_onset_windows: usize,
    /// Post-onset windows whose prediction contains every true label.
    pub detected_windows: usize,
    /// Windows predicting a label that is not present at that time.
    pub false_positive_windows: usize,
    /// `Raised` events for labels not present at the event time.
    pub false_alarm_events: usize,
    /// Windows from onset to the first detected window.
    pub latency_windows: Option<usize>,
}

fn score(analyzer: &Analyzer, s: &Scenario, suite: &SuiteConfig) -> Result<ScenarioOutcome> {
    let rec = s.generate(suite)?;
    let report = analyzer.analyze(&rec)?;
    let truth: BTreeSet<&str> = s.labels.iter().map(String::as_str).collect();
    let active = |start: f64| !truth.is_empty() && start >= s.onset_s;
    let mut out = ScenarioOutcome {
        name: s.name.clone(),
        truth: s.labels.clone(),
        predicted: Vec::new(),
        post_onset_windows: 0,
        detected_windows: 0,
        false_positive_windows: 0,
        false_alarm_events: 0,
        latency_windows: None,
    };
    for w in &report.windows {
        let got: BTreeSet<&str> = w.classification.iter().map(|(l, _)| l.as_str()).collect();
        out.predicted.push(got.iter().map(|l| l.to_string()).collect());
        let straddles = w.start_s < s.onset_s && w.end_s > s.onset_s && !truth.is_empty();
        if straddles {
            continue;
        }
        if active(w.start_s) {
            if truth.is_subset(&got) {
                out.latency_windows.get_or_insert(out.post_onset_windows);
                out.detected_windows += 1;
            }
            out.post_onset_windows += 1;
            if !got.is_subset(&truth) {
                out.false_positive_windows += 1;
            }
        } else if !got.is_empty() {
            out.false_positive_windows += 1;
        }
    }
    out.false_alarm_events = report
        .events
        .iter()
        .filter(|e| e.transition == Transition::Raised)
        .filter(|e| !(truth.contains(e.label.as_str()) && e.time_s > s.onset_s))
        .count();
    Ok(out)
}

/// Runs every scenario through the analyzer (records in parallel; results
/// in scenario order).
pub fn run_suite(analyzer: &Analyzer, scenarios: &[Scenario], suite: &SuiteConfig) -> Result<Vec<ScenarioOutcome>> {
    scenarios.par_iter().map(|s| score(analyzer, s, suite)).collect()
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub scenarios: usize,
    pub post_onset_windows: usize,
    pub detected_windows: usize,
    pub detection_rate: f64,
    pub false_positive_windows: usize,
    pub false_alarm_events: usize,
    /// Mean over faulted scenarios that were detected at all.
    pub mean_latency_windows: Option<f64>,
    pub missed_scenarios: usize,
}

impl ModeSummary {
    pub fn from_outcomes(mode: Mode, outcomes: &[ScenarioOutcome]) -> Self {
        let post: usize = outcomes.iter().map(|o| o.post_onset_windows).sum();
        let det: usize = outcomes.iter().map(|o| o.detected_windows).sum();
        let lat: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| o.latency_windows)
            .map(|l| l as f64)
            .collect();
        Self {
            mode,
            scenarios: outcomes.len(),
            post_onset_windows: post,
            detected_windows: det,
            detection_rate: if post == 0 { 1.0 } else { det as f64 / post as f64 },
            false_positive_windows: outcomes.iter().map(|o| o.false_positive_windows).sum(),
            false_alarm_events: outcomes.iter().map(|o| o.false_alarm_events).sum(),
            mean_latency_windows: (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64),
            missed_scenarios: outcomes
                .iter()
                .filter(|o| !o.truth.is_empty() && o.latency_windows.is_none())
                .count(),
        }
    }
}

/// Calibrates each mode on the regimes present in `scenarios` and scores
/// it on them. An empty scenario list gives an empty table.
pub fn run_compare(
    cfg: &PipelineConfig,
    modes: &[Mode],
    scenarios: &[Scenario],
    classes: &[FaultClass],
    suite: &SuiteConfig,
) -> Result<Vec<ModeSummary>> {
    if scenarios.is_empty() {
        return Ok(Vec::new());
    }
    let mut regimes: Vec<NoiseKind> = Vec::new();
    for s in scenarios {
        if !regimes.iter().any(|r| r.regime_name() == s.noise.regime_name()) {
            regimes.push(s.noise);
        }
    }
    modes
        .iter()
        .map(|&mode| {
            let lib = calibrate_library(cfg, mode, classes, &regimes, suite)?;
            let analyzer = Analyzer::new(cfg.clone(), Some(lib), mode)?;
            let outcomes = run_suite(&analyzer, scenarios, suite)?;
            Ok(ModeSummary::from_outcomes(mode, &outcomes))
        })
        .collect()
}
