//! End-to-end analysis: configuration, per-window processing, reports and
//! the scenario suite used for calibration and comparison.
//!
//! A record is cut into consecutive non-overlapping windows of
//! `window_s` seconds (a trailing partial window is dropped). Each window
//! goes through
//!
//! ```text
//! decimate → smooth (optional) → center_whiten + ica_fit + separate
//!          → stft per source → extract_features → fuse → classify
//! ```
//!
//! and the per-window classifications are folded through the alarm state
//! machine in window order. A window's decision time is its end time.
//!
//! Separated sources are rescaled to sensor units: source `i` is multiplied
//! by the Euclidean norm of column `i` of the estimated mixing matrix, which
//! removes the scale ambiguity of the unmixing.

mod record_file;
mod scenario;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alarm::{step, AlarmConfig, AlarmEvent, AlarmState};
use crate::bss::{center_whiten, ica_fit, separate, IcaConfig};
use crate::error::{Error, Result};
use crate::multirate::{decimate, smooth};
use crate::signal_model::{Channel, MultiChannelRecord, OperatingPoint};
use crate::signature::{
    classify, detect_change_with_warmup, equal_weights, extract_features, fuse, FeatureConfig, FeatureVector,
    SignatureLibrary,
};
use crate::stft::{stft, Spectrogram, StftConfig};

pub use record_file::{
    header_path, read_header, read_record, write_record, Encoding, RecordHeader, RECORD_FORMAT, RECORD_FORMAT_VERSION,
};
pub use scenario::{
    calibrate_library, calibration_corpus, default_fault_classes, fault_pairs, noise_regimes, run_compare, run_suite,
    single_fault_suite, valve_noise_suite, FaultClass, ModeSummary, Scenario, ScenarioOutcome, SuiteConfig,
    VALVE_SUITE_SEEDS,
};

/// Which parts of the chain a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// First raw channel only: no resampling, no separation, no fusion.
    StftOnly,
    /// Every raw channel at the input rate, fused; no resampling or separation.
    FusionOnly,
    /// The full chain.
    Hybrid,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::StftOnly, Mode::FusionOnly, Mode::Hybrid];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::StftOnly => "stft_only",
            Mode::FusionOnly => "fusion_only",
            Mode::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stft_only" => Ok(Mode::StftOnly),
            "fusion_only" => Ok(Mode::FusionOnly),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Expected input rate; records at another rate are rejected.
    pub sample_rate_hz: f64,
    pub decimation: usize,
    /// Odd moving-average length applied after decimation; 0 or 1 disables.
    pub smoothing_window: usize,
    pub window_s: f64,
    pub stft: StftConfig,
    pub ica: IcaConfig,
    pub features: FeatureConfig,
    /// Per-channel weights for [`Mode::FusionOnly`]; `None` means equal.
    /// Separated sources carry no stable order, so the hybrid chain always
    /// fuses them with equal weights.
    pub fusion_weights: Option<Vec<f64>>,
    pub alarm: AlarmConfig,
    pub library_path: Option<PathBuf>,
    pub operating_point: OperatingPoint,
    pub max_labels: usize,
    /// CUSUM drift and threshold, in units of the warm-up standard deviation.
    pub change_drift: f64,
    pub change_threshold: f64,
    pub change_warmup_frames: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 5000.0,
            decimation: 2,
            smoothing_window: 0,
            window_s: 2.0,
            stft: StftConfig::default(),
            ica: IcaConfig {
                max_iterations: 300,
                ..IcaConfig::default()
            },
            features: FeatureConfig::default(),
            fusion_weights: None,
            alarm: AlarmConfig::default(),
            library_path: None,
            operating_point: OperatingPoint::default(),
            max_labels: 2,
            change_drift: 0.5,
            change_threshold: 8.0,
            change_warmup_frames: 12,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Rate after decimation for the given mode.
    pub fn analysis_rate_hz(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Hybrid => self.sample_rate_hz / self.decimation as f64,
            _ => self.sample_rate_hz,
        }
    }

    pub fn window_len(&self) -> usize {
        (self.window_s * self.sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::param("sample_rate_hz", "must be positive"));
        }
        if self.decimation == 0 {
            return Err(Error::param("decimation", "must be at least 1"));
        }
        if self.smoothing_window > 1 && self.smoothing_window.is_multiple_of(2) {
            return Err(Error::param("smoothing_window", "must be odd"));
        }
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return Err(Error::param("window_s", "must be positive"));
        }
        self.stft.validate()?;
        self.ica.validate()?;
        self.features.validate()?;
        self.alarm.validate()?;
        self.operating_point.validate()?;
        if self.max_labels == 0 {
            return Err(Error::param("max_labels", "must be at least 1"));
        }
        let nyquist = self.analysis_rate_hz(Mode::Hybrid) / 2.0;
        let needed = self.features.max_frequency_hz(&self.operating_point);
        if needed > nyquist {
            return Err(Error::param(
                "decimation",
                format!("decimated Nyquist {nyquist} Hz is below the highest analysed frequency {needed} Hz"),
            ));
        }
        let per_window = self.window_len() / self.decimation;
        if per_window < self.stft.window_len {
            return Err(Error::param(
                "window_s",
                format!(
                    "a window holds {per_window} decimated samples, fewer than the STFT window {}",
                    self.stft.window_len
                ),
            ));
        }
        if !(self.change_drift >= 0.0 && self.change_threshold > 0.0 && self.change_warmup_frames > 0) {
            return Err(Error::param("change_threshold", "CUSUM settings must be positive"));
        }
        Ok(())
    }

    /// Checks the record against the configuration, naming the failing
    /// invariant.
    pub fn check_record(&self, r: &MultiChannelRecord, mode: Mode) -> Result<()> {
        self.validate()?;
        if (r.sample_rate_hz() - self.sample_rate_hz).abs() > 1e-9 * self.sample_rate_hz {
            return Err(Error::param(
                "sample_rate_hz",
                format!(
                    "record is at {} Hz, configuration expects {} Hz",
                    r.sample_rate_hz(),
                    self.sample_rate_hz
                ),
            ));
        }
        if r.len() < self.window_len() {
            return Err(Error::TooShort {
                needed: self.window_len(),
                actual: r.len(),
            });
        }
        if mode == Mode::Hybrid && r.channel_count() < 2 {
            return Err(Error::param(
                "channels",
                "source separation needs at least two channels",
            ));
        }
        if let (Mode::FusionOnly, Some(w)) = (mode, &self.fusion_weights) {
            if w.len() != r.channel_count() {
                return Err(Error::DimensionMismatch(format!(
                    "{} fusion weights for {} channels",
                    w.len(),
                    r.channel_count()
                )));
            }
        }
        Ok(())
    }
}

/// Wall-clock seconds spent in each stage, summed over windows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub decimate_s: f64,
    pub smooth_s: f64,
    pub separate_s: f64,
    pub stft_s: f64,
    pub features_s: f64,
    pub fuse_s: f64,
    pub classify_s: f64,
    pub alarm_s: f64,
    /// Whole run, measured independently of the stages.
    pub total_s: f64,
}

impl StageTiming {
    pub fn stage_sum(&self) -> f64 {
        self.decimate_s
            + self.smooth_s
            + self.separate_s
            + self.stft_s
            + self.features_s
            + self.fuse_s
            + self.classify_s
            + self.alarm_s
    }

    fn add(&mut self, o: &StageTiming) {
        self.decimate_s += o.decimate_s;
        self.smooth_s += o.smooth_s;
        self.separate_s += o.separate_s;
        self.stft_s += o.stft_s;
        self.features_s += o.features_s;
        self.fuse_s += o.fuse_s;
        self.classify_s += o.classify_s;
        self.alarm_s += o.alarm_s;
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *slot += t.elapsed().as_secs_f64();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub features: FeatureVector,
    pub classification: Vec<(String, f64)>,
    /// Only for the hybrid chain.
    pub ica_converged: Option<bool>,
    pub ica_iterations: Option<usize>,
}

/// Everything one window produced; the heavy parts stay out of JSON.
#[derive(Debug, Clone)]
pub struct WindowOutput {
    pub report: WindowReport,
    /// Channels that were analysed (separated sources in sensor units for
    /// the hybrid chain, raw channels otherwise).
    pub analysed: MultiChannelRecord,
    pub spectrograms: Vec<Spectrogram>,
    pub fusion_weights: Vec<f64>,
    pub timing: StageTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub mode: Mode,
    pub input_rate_hz: f64,
    pub analysis_rate_hz: f64,
    pub channel_labels: Vec<String>,
    pub windows: Vec<WindowReport>,
    pub events: Vec<AlarmEvent>,
    /// Strongest spectral line over the whole record, in Hz.
    pub dominant_peak_hz: f64,
    /// Times where the CUSUM on the leading band power fired.
    pub change_points_s: Vec<f64>,
    pub dropped_samples: usize,
    pub timing: StageTiming,
}

impl AnalysisReport {
    /// Copy with all timing fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: StageTiming::default(),
            ..self.clone()
        }
    }
}

/// Output of [`Analyzer::analyze_full`]: the report plus per-window data.
#[derive(Debug, Clone)]
pub struct FullAnalysis {
    pub report: AnalysisReport,
    pub windows: Vec<WindowOutput>,
}

/// Scales separated sources to sensor units.
pub fn rescale_to_sensor_units(
    sources: &MultiChannelRecord,
    mixing: &nalgebra::DMatrix<f64>,
) -> Result<MultiChannelRecord> {
    if mixing.ncols() != sources.channel_count() {
        return Err(Error::DimensionMismatch(
            "mixing estimate does not match source count".into(),
        ));
    }
    let channels = sources
        .channels()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let g = mixing.column(i).norm();
            Channel::new(format!("source_{i}"), c.samples.iter().map(|v| v * g).collect())
        })
        .collect();
    MultiChannelRecord::new(sources.sample_rate_hz(), channels)
}

/// Runs the configured chain with an optional signature library.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub cfg: PipelineConfig,
    pub library: Option<SignatureLibrary>,
    pub mode: Mode,
}

impl Analyzer {
    pub fn new(cfg: PipelineConfig, library: Option<SignatureLibrary>, mode: Mode) -> Result<Self> {
        cfg.validate()?;
        if let Some(lib) = &library {
            lib.validate()?;
            if lib.schema != cfg.features.schema() {
                return Err(Error::DimensionMismatch(
                    "signature library schema does not match the configured features".into(),
                ));
            }
        }
        Ok(Self { cfg, library, mode })
    }

    /// Features and classification of one window of raw input.
    pub fn process_window(&self, raw: &MultiChannelRecord, index: usize, start_s: f64) -> Result<WindowOutput> {
        let cfg = &self.cfg;
        let mut timing = StageTiming::default();
        let mut ica_info = None;
        let analysed = match self.mode {
            Mode::StftOnly => raw.select(&[0])?,
            Mode::FusionOnly => raw.clone(),
            Mode::Hybrid => {
                let x = timed(&mut timing.decimate_s, || decimate(raw, cfg.decimation))?;
                let x = if cfg.smoothing_window > 1 {
                    timed(&mut timing.smooth_s, || smooth(&x, cfg.smoothing_window))?
                } else {
                    x
                };
                timed(&mut timing.separate_s, || -> Result<MultiChannelRecord> {
                    let (xw, whitener) = center_whiten(&x)?;
                    let mut fit = ica_fit(&xw, &cfg.ica)?;
                    fit.whitener = whitener;
                    ica_info = Some((fit.converged, fit.fit_iterations));
                    let u = separate(&fit, &x)?;
                    rescale_to_sensor_units(&u, &fit.mixing_estimate()?)
                })?
            }
        };
        let fs = analysed.sample_rate_hz();
        let spectrograms = timed(&mut timing.stft_s, || {
            analysed
                .channels()
                .iter()
                .map(|c| stft(&c.samples, fs, &cfg.stft))
                .collect::<Result<Vec<_>>>()
        })?;
        let per_channel = timed(&mut timing.features_s, || {
            analysed
                .channels()
                .iter()
                .zip(&spectrograms)
                .map(|(c, s)| extract_features(&c.samples, s, &cfg.operating_point, &cfg.features))
                .collect::<Result<Vec<_>>>()
        })?;
        let weights = match (self.mode, &cfg.fusion_weights) {
            (Mode::FusionOnly, Some(w)) => w.clone(),
            _ => equal_weights(per_channel.len()),
        };
        let features = timed(&mut timing.fuse_s, || fuse(&per_channel, &weights))?;
        let classification = match &self.library {
            Some(lib) => timed(&mut timing.classify_s, || classify(&features, lib, cfg.max_labels))?,
            None => Vec::new(),
        };
        Ok(WindowOutput {
            report: WindowReport {
                index,
                start_s,
                end_s: start_s + raw.duration_s(),
                features,
                classification,
                ica_converged: ica_info.map(|i| i.0),
                ica_iterations: ica_info.map(|i| i.1),
            },
            analysed,
            spectrograms,
            fusion_weights: weights,
            timing,
        })
    }

    /// Window boundaries `(start, end)` in samples.
    pub fn windows(&self, r: &MultiChannelRecord) -> Vec<(usize, usize)> {
        let w = self.cfg.window_len();
        (0..r.len() / w).map(|i| (i * w, (i + 1) * w)).collect()
    }

    pub fn analyze(&self, r: &MultiChannelRecord) -> Result<AnalysisReport> {
        Ok(self.analyze_full(r)?.report)
    }

    pub fn analyze_full(&self, r: &MultiChannelRecord) -> Result<FullAnalysis> {
        let started = Instant::now();
        self.cfg.check_record(r, self.mode)?;
        let fs = r.sample_rate_hz();
        let bounds = self.windows(r);
        let mut outputs = Vec::with_capacity(bounds.len());
        for (i, &(a, b)) in bounds.iter().enumerate() {
            outputs.push(self.process_window(&r.slice(a, b)?, i, a as f64 / fs)?);
        }
        let mut timing = StageTiming::default();
        for o in &outputs {
            timing.add(&o.timing);
        }
        let mut alarm_s = 0.0;
        let events = timed(&mut alarm_s, || fold_alarm(&outputs, &self.cfg.alarm))?;
        timing.alarm_s = alarm_s;
        let dominant_peak_hz = dominant_peak(&outputs);
        let change_points_s = self.change_points(&outputs)?;
        timing.total_s = started.elapsed().as_secs_f64();
        let report = AnalysisReport {
            mode: self.mode,
            input_rate_hz: fs,
            analysis_rate_hz: self.cfg.analysis_rate_hz(self.mode),
            channel_labels: r.labels(),
            windows: outputs.iter().map(|o| o.report.clone()).collect(),
            events,
            dominant_peak_hz,
            change_points_s,
            dropped_samples: r.len() - bounds.last().map_or(0, |b| b.1),
            timing,
        };
        Ok(FullAnalysis {
            report,
            windows: outputs,
        })
    }

    /// CUSUM over the per-frame power of the first configured band, fused
    /// across analysed channels with the window's fusion weights.
    fn change_points(&self, outputs: &[WindowOutput]) -> Result<Vec<f64>> {
        let Some(&(lo, hi)) = self.cfg.features.bands.first() else {
            return Ok(Vec::new());
        };
        let mut series = Vec::new();
        let mut times = Vec::new();
        for o in outputs {
            let per_channel: Vec<Vec<f64>> = o
                .spectrograms
                .iter()
                .map(|s| crate::stft::band_energy(s, lo, hi))
                .collect::<Result<_>>()?;
            let frames = per_channel.first().map_or(0, Vec::len);
            for f in 0..frames {
                series.push(
                    per_channel
                        .iter()
                        .zip(&o.fusion_weights)
                        .map(|(c, w)| w * c[f])
                        .sum::<f64>(),
                );
                times.push(o.report.start_s + o.spectrograms[0].frame_times_s[f]);
            }
        }
        let warm = self.cfg.change_warmup_frames;
        if series.len() <= warm {
            return Ok(Vec::new());
        }
        let head = &series[..warm];
        let mean = head.iter().sum::<f64>() / warm as f64;
        let sd = (head.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / warm as f64).sqrt();
        if !(sd > 1e-12 * mean.abs().max(1e-300)) {
            return Ok(Vec::new());
        }
        let z: Vec<f64> = series.iter().map(|v| v / sd).collect();
        let idx = detect_change_with_warmup(&z, self.cfg.change_drift, self.cfg.change_threshold, warm)?;
        Ok(idx.into_iter().map(|i| times[i]).collect())
    }
}

fn fold_alarm(outputs: &[WindowOutput], cfg: &AlarmConfig) -> Result<Vec<AlarmEvent>> {
    let mut state = AlarmState::default();
    let mut events = Vec::new();
    for o in outputs {
        let (s, e) = step(&state, &o.report.classification, o.report.end_s, cfg)?;
        state = s;
        events.extend(e);
    }
    Ok(events)
}

/// Strongest non-DC line of the power spectrum averaged over every frame
/// and channel, refined by a parabola through the log power of the peak
/// bin and its neighbours.
fn dominant_peak(outputs: &[WindowOutput]) -> f64 {
    let Some(first) = outputs.first().and_then(|o| o.spectrograms.first()) else {
        return 0.0;
    };
    let bins = first.bin_count();
    let mut power = vec![0.0; bins];
    for s in outputs.iter().flat_map(|o| &o.spectrograms) {
        for frame in &s.magnitudes {
            for (p, m) in power.iter_mut().zip(frame) {
                *p += m * m;
            }
        }
    }
    let k = (1..bins)
        .max_by(|&a, &b| power[a].total_cmp(&power[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let df = first.bin_spacing_hz();
    if k == 0 || k + 1 >= bins || power[k] <= 0.0 {
        return k as f64 * df;
    }
    let (a, b, c) = (
        power[k - 1].max(1e-300).ln(),
        power[k].ln(),
        power[k + 1].max(1e-300).ln(),
    );
    let denom = a - 2.0 * b + c;
    let delta = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    (k as f64 + delta.clamp(-0.5, 0.5)) * df
}

/// Loads the library named in the configuration, if any.
pub fn load_library(path: &std::path::Path) -> Result<SignatureLibrary> {
    let text = std::fs::read_to_string(path).map_err(|source| crate::error::RecordError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SignatureLibrary::from_json(&text).map_err(|e| {
        crate::error::RecordError::MalformedJson {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
        .into()
    })
}

/// Hybrid analysis with the library named in `cfg.library_path`.
pub fn run_analyze(cfg: &PipelineConfig, input: &MultiChannelRecord) -> Result<AnalysisReport> {
    let library = cfg.library_path.as_deref().map(load_library).transpose()?;
    Analyzer::new(cfg.clone(), library, Mode::Hybrid)?.analyze(input)
}

/// Window-by-window processing that hands each alarm event to `sink` as soon
/// as its window is classified.
pub fn run_monitor_stream(
    analyzer: &Analyzer,
    input: &MultiChannelRecord,
    mut sink: impl FnMut(&WindowReport, &[AlarmEvent]) -> Result<()>,
) -> Result<Vec<AlarmEvent>> {
    analyzer.cfg.check_record(input, analyzer.mode)?;
    let fs = input.sample_rate_hz();
    let mut state = AlarmState::default();
    let mut all = Vec::new();
    for (i, (a, b)) in analyzer.windows(input).into_iter().enumerate() {
        let out = analyzer.process_window(&input.slice(a, b)?, i, a as f64 / fs)?;
        let (s, events) = step(
            &state,
            &out.report.classification,
            out.report.end_s,
            &analyzer.cfg.alarm,
        )?;
        state = s;
        sink(&out.report, &events)?;
        all.extend(events);
    }
    Ok(all)
}

/// Latency of one analysis unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub decimation: usize,
    pub repetitions: usize,
    pub wall_clock_s: Vec<f64>,
    pub median_s: f64,
    pub last_timing: StageTiming,
}

/// Times the full chain over `input` treated as one window. When the input
/// rate differs from the configured one, the decimation factor is rescaled so
/// the analysis rate stays the same.
pub fn run_bench(cfg: &PipelineConfig, input: &MultiChannelRecord, repetitions: usize) -> Result<BenchReport> {
    let fs = input.sample_rate_hz();
    let decimation = ((cfg.decimation as f64 * fs / cfg.sample_rate_hz).round() as usize).max(1);
    let cfg = PipelineConfig {
        sample_rate_hz: fs,
        decimation,
        window_s: input.duration_s(),
        ..cfg.clone()
    };
    let library = cfg.library_path.as_deref().map(load_library).transpose()?;
    let analyzer = Analyzer::new(cfg, library, Mode::Hybrid)?;
    let mut times = Vec::new();
    let mut last = StageTiming::default();
    for _ in 0..repetitions.max(1) {
        let t = Instant::now();
        let report = analyzer.analyze(input)?;
        times.push(t.elapsed().as_secs_f64());
        last = report.timing;
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchReport {
        channels: input.channel_count(),
        sample_rate_hz: input.sample_rate_hz(),
        duration_s: input.duration_s(),
        decimation: analyzer.cfg.decimation,
        repetitions: times.len(),
        median_s: sorted[sorted.len() / 2],
        wall_clock_s: times,
        last_timing: last,
    })
}

/// Spectrogram as CSV: header row `time_s,<bin freqs>`, one row per frame.
pub fn spectrogram_csv(s: &Spectrogram) -> String {
    let mut out = String::from("time_s");
    for f in &s.bin_freqs_hz {
        out.push(',');
        out.push_str(&f.to_string());
    }
    out.push('\n');
    for (t, frame) in s.frame_times_s.iter().zip(&s.magnitudes) {
        out.push_str(&t.to_string());
        for m in frame {
            out.push(',');
            out.push_str(&m.to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{DriveScenario, NoiseKind};

    fn healthy(duration_s: f64) -> MultiChannelRecord {
        let op = OperatingPoint::default();
        let noise = NoiseKind::Gaussian { sigma: 1.0 }.at_snr_db(op.healthy_power(), 20.0, 5000.0);
        DriveScenario::new(op, vec![], noise, 5000.0, duration_s, 11)
            .generate()
            .unwrap()
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!(matches!("fft".parse::<Mode>(), Err(Error::UnknownMode(_))));
    }

    #[test]
    fn config_rejects_nyquist_violation() {
        let cfg = PipelineConfig {
            decimation: 8,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }

    #[test]
    fn record_rate_mismatch_names_the_rate() {
        let r = healthy(4.0);
        let cfg = PipelineConfig {
            sample_rate_hz: 10_000.0,
            decimation: 4,
            ..PipelineConfig::default()
        };
        let err = Analyzer::new(cfg, None, Mode::Hybrid).unwrap().analyze(&r).unwrap_err();
        assert!(err.to_string().contains("sample_rate_hz"), "{err}");
    }

    #[test]
    fn windows_and_timing() {
        let r = healthy(5.0);
        let a = Analyzer::new(PipelineConfig::default(), None, Mode::Hybrid).unwrap();
        let rep = a.analyze(&r).unwrap();
        assert_eq!(rep.windows.len(), 2);
        assert_eq!(rep.dropped_samples, 5000);
        assert_eq!(rep.windows[1].start_s, 2.0);
        assert_eq!(rep.windows[1].end_s, 4.0);
        assert!(rep.events.is_empty());
        assert!(rep.timing.stage_sum() <= rep.timing.total_s + 1e-3);
        assert!((rep.dominant_peak_hz - 50.0).abs() < 1.0, "{}", rep.dominant_peak_hz);
    }

    #[test]
    fn config_json_accepts_partial_documents() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"decimation": 4, "seed": 9}"#).unwrap();
        assert_eq!(cfg.decimation, 4);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.window_s, 2.0);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"decimaton": 4}"#).is_err());
    }

    #[test]
    fn spectrogram_csv_layout() {
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let s = stft(&x, 8.0, &StftConfig::new(16)).unwrap();
        let csv = spectrogram_csv(&s);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + s.frame_count());
        assert_eq!(lines[0].split(',').count(), 1 + s.bin_count());
        assert!(lines[0].starts_with("time_s,0,"));
    }
}
