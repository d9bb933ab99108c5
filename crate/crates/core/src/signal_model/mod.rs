//! Synthetic BLDC drive observations.
//!
//! The phase-current model is a trapezoidal back-EMF approximation: a
//! fundamental at the line frequency plus 5th and 7th harmonics at fixed
//! relative amplitudes, repeated on three phases displaced by 2π/3. Faults
//! add spectral components on top of that:
//!
//! - [`FaultMode::HarmonicInjection`] adds `order × f_line` on every phase,
//!   phase-displaced like a true harmonic of the phase current.
//! - [`FaultMode::Sideband`] adds a pair of tones at `carrier ± offset`.
//! - [`FaultMode::StochasticValveNoise`] adds common-mode Gaussian bursts at
//!   Poisson arrival times; the same bursts leak into the pressure channel.
//!
//! All randomness comes from ChaCha8 streams keyed by `(seed, purpose,
//! channel)`, so adding a channel never perturbs the samples of another.

mod mixing;
mod record;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mixing::{mix_sources, MixingMatrix};
pub use record::{Channel, MultiChannelRecord, SourceSet};

/// Relative amplitude of the 5th harmonic in the healthy phase current.
pub const FIFTH_HARMONIC_REL: f64 = 0.2;
/// Relative amplitude of the 7th harmonic in the healthy phase current.
pub const SEVENTH_HARMONIC_REL: f64 = 0.14;
/// Supply voltage divided by this gives the peak fundamental phase current.
pub const NOMINAL_PHASE_IMPEDANCE_OHM: f64 = 28.0;
/// Length of one valve-controller disturbance burst.
pub const VALVE_BURST_DURATION_S: f64 = 0.01;
/// Fraction of each valve burst that reaches the pressure sensor.
pub const VALVE_PRESSURE_COUPLING: f64 = 0.5;
/// Relative ripple of the pressure channel at the shaft rotation frequency.
pub const PRESSURE_RIPPLE_REL: f64 = 0.05;

const STREAM_NOISE: u64 = 1 << 32;
const STREAM_VALVE: u64 = 2 << 32;
const STREAM_SOURCE: u64 = 3 << 32;

/// Seeded ChaCha8 generator on an independent stream.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub line_frequency_hz: f64,
    pub supply_voltage_v: f64,
    pub phase_shift_rad: f64,
    pub speed_rpm: f64,
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self {
            line_frequency_hz: 50.0,
            supply_voltage_v: 28.0,
            phase_shift_rad: 0.0,
            speed_rpm: 3000.0,
        }
    }
}

impl OperatingPoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.line_frequency_hz > 0.0 && self.line_frequency_hz.is_finite()) {
            return Err(Error::param("line_frequency_hz", "must be positive"));
        }
        if !(self.supply_voltage_v > 0.0 && self.supply_voltage_v.is_finite()) {
            return Err(Error::param("supply_voltage_v", "must be positive"));
        }
        if !(self.speed_rpm > 0.0 && self.speed_rpm.is_finite()) {
            return Err(Error::param("speed_rpm", "must be positive"));
        }
        if !self.phase_shift_rad.is_finite() {
            return Err(Error::param("phase_shift_rad", "must be finite"));
        }
        Ok(())
    }

    /// Peak amplitude of the fundamental phase current.
    pub fn current_amplitude(&self) -> f64 {
        self.supply_voltage_v / NOMINAL_PHASE_IMPEDANCE_OHM
    }

    pub fn shaft_frequency_hz(&self) -> f64 {
        self.speed_rpm / 60.0
    }

    /// Mean-square value of one healthy phase current.
    pub fn healthy_power(&self) -> f64 {
        let a = self.current_amplitude();
        0.5 * a * a * (1.0 + FIFTH_HARMONIC_REL.powi(2) + SEVENTH_HARMONIC_REL.powi(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultMode {
    Healthy,
    HarmonicInjection {
        order: u32,
        relative_amplitude: f64,
    },
    Sideband {
        carrier_hz: f64,
        offset_hz: f64,
        depth: f64,
    },
    StochasticValveNoise {
        burst_rate_hz: f64,
        burst_amplitude: f64,
    },
}

impl FaultMode {
    pub fn is_healthy(&self) -> bool {
        matches!(self, FaultMode::Healthy)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must lie in (0, 1], got {v}")))
            }
        };
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        match *self {
            FaultMode::Healthy => Ok(()),
            FaultMode::HarmonicInjection {
                order,
                relative_amplitude,
            } => {
                if order == 0 {
                    return Err(Error::param("order", "harmonic order must be ≥ 1"));
                }
                unit("relative_amplitude", relative_amplitude)
            }
            FaultMode::Sideband {
                carrier_hz,
                offset_hz,
                depth,
            } => {
                positive("carrier_hz", carrier_hz)?;
                positive("offset_hz", offset_hz)?;
                unit("depth", depth)
            }
            FaultMode::StochasticValveNoise {
                burst_rate_hz,
                burst_amplitude,
            } => {
                positive("burst_rate_hz", burst_rate_hz)?;
                positive("burst_amplitude", burst_amplitude)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    UniformWhite { half_range: f64 },
    RandomImpulsive { rate_hz: f64, amplitude: f64 },
}

impl NoiseKind {
    pub fn validate(&self) -> Result<()> {
        let ok = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be strictly positive, got {v}")))
            }
        };
        match *self {
            NoiseKind::Gaussian { sigma } => ok("sigma", sigma),
            NoiseKind::UniformWhite { half_range } => ok("half_range", half_range),
            NoiseKind::RandomImpulsive { rate_hz, amplitude } => {
                ok("rate_hz", rate_hz)?;
                ok("amplitude", amplitude)
            }
        }
    }

    /// Expected mean-square value of the noise at the given sample rate.
    pub fn power(&self, sample_rate_hz: f64) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma } => sigma * sigma,
            NoiseKind::UniformWhite { half_range } => half_range * half_range / 3.0,
            NoiseKind::RandomImpulsive { rate_hz, amplitude } => {
                (rate_hz / sample_rate_hz).min(1.0) * amplitude * amplitude
            }
        }
    }

    /// Rescales this noise family so that `signal_power / noise_power`
    /// equals `snr_db`. For impulsive noise the rate is kept and the
    /// amplitude adjusted.
    pub fn at_snr_db(&self, signal_power: f64, snr_db: f64, sample_rate_hz: f64) -> Self {
        let target = signal_power / 10f64.powf(snr_db / 10.0);
        match *self {
            NoiseKind::Gaussian { .. } => NoiseKind::Gaussian { sigma: target.sqrt() },
            NoiseKind::UniformWhite { .. } => NoiseKind::UniformWhite {
                half_range: (3.0 * target).sqrt(),
            },
            NoiseKind::RandomImpulsive { rate_hz, .. } => NoiseKind::RandomImpulsive {
                rate_hz,
                amplitude: (target / (rate_hz / sample_rate_hz).min(1.0)).sqrt(),
            },
        }
    }

    pub fn regime_name(&self) -> &'static str {
        match self {
            NoiseKind::Gaussian { .. } => "gaussian",
            NoiseKind::UniformWhite { .. } => "uniform_white",
            NoiseKind::RandomImpulsive { .. } => "random_impulsive",
        }
    }
}

/// Start times of a homogeneous Poisson process on `[0, duration_s)`.
fn poisson_arrivals(rng: &mut ChaCha8Rng, rate_hz: f64, duration_s: f64) -> Vec<f64> {
    let gap = Exp::new(rate_hz).expect("rate validated positive");
    let mut t = gap.sample(rng);
    let mut out = Vec::new();
    while t < duration_s {
        out.push(t);
        t += gap.sample(rng);
    }
    out
}

fn noise_samples(noise: &NoiseKind, n: usize, sample_rate_hz: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match *noise {
        NoiseKind::Gaussian { sigma } => {
            let d = Normal::new(0.0, sigma).expect("sigma validated positive");
            (0..n).map(|_| d.sample(rng)).collect()
        }
        NoiseKind::UniformWhite { half_range } => {
            let d = Uniform::new_inclusive(-half_range, half_range).expect("half_range validated");
            (0..n).map(|_| d.sample(rng)).collect()
        }
        NoiseKind::RandomImpulsive { rate_hz, amplitude } => {
            let mut out = vec![0.0; n];
            let duration = n as f64 / sample_rate_hz;
            for t in poisson_arrivals(rng, rate_hz, duration) {
                let idx = ((t * sample_rate_hz) as usize).min(n - 1);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                out[idx] += sign * amplitude;
            }
            out
        }
    }
}

/// Adds independent noise to every channel. Channel `i` draws from its own
/// stream, so the result for channel `i` does not depend on the channel count.
pub fn add_noise(x: &MultiChannelRecord, noise: &NoiseKind, seed: u64) -> Result<MultiChannelRecord> {
    noise.validate()?;
    let fs = x.sample_rate_hz();
    let channels = x
        .channels()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = stream_rng(seed, STREAM_NOISE | i as u64);
            let n = noise_samples(noise, c.samples.len(), fs, &mut rng);
            let samples = c.samples.iter().zip(n).map(|(a, b)| a + b).collect();
            Channel::new(c.label.clone(), samples)
        })
        .collect();
    MultiChannelRecord::new(fs, channels)
}

/// Full description of one synthetic acquisition.
///
/// Faults are active on `[fault_onset_s, fault_end_s)`; outside that interval
/// the drive is healthy. With `with_pressure` a fourth channel carries a
/// normalized pressure reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveScenario {
    pub operating_point: OperatingPoint,
    pub faults: Vec<FaultMode>,
    pub noise: NoiseKind,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub fault_onset_s: f64,
    #[serde(default)]
    pub fault_end_s: Option<f64>,
    #[serde(default)]
    pub with_pressure: bool,
    pub seed: u64,
}

impl DriveScenario {
    pub fn new(
        operating_point: OperatingPoint,
        faults: Vec<FaultMode>,
        noise: NoiseKind,
        sample_rate_hz: f64,
        duration_s: f64,
        seed: u64,
    ) -> Self {
        Self {
            operating_point,
            faults,
            noise,
            sample_rate_hz,
            duration_s,
            fault_onset_s: 0.0,
            fault_end_s: None,
            with_pressure: false,
            seed,
        }
    }

    pub fn with_onset(mut self, onset_s: f64, end_s: Option<f64>) -> Self {
        self.fault_onset_s = onset_s;
        self.fault_end_s = end_s;
        self
    }

    pub fn with_pressure(mut self, on: bool) -> Self {
        self.with_pressure = on;
        self
    }

    fn active_faults(&self) -> impl Iterator<Item = &FaultMode> {
        self.faults.iter().filter(|f| !f.is_healthy())
    }

    pub fn validate(&self) -> Result<()> {
        self.operating_point.validate()?;
        self.noise.validate()?;
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::param("sample_rate_hz", "must be positive"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::param("duration_s", "must be positive"));
        }
        if self.duration_s * self.sample_rate_hz < 64.0 {
            return Err(Error::TooShort {
                needed: 64,
                actual: (self.duration_s * self.sample_rate_hz) as usize,
            });
        }
        for f in &self.faults {
            f.validate()?;
        }
        let n_faults = self.active_faults().count();
        if n_faults > 2 {
            return Err(Error::TooManyFaults(n_faults));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    /// Common-mode valve disturbance (zero outside bursts), before gating.
    fn valve_waveform(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        let fs = self.sample_rate_hz;
        let burst_len = ((VALVE_BURST_DURATION_S * fs).round() as usize).max(1);
        for (k, fault) in self.active_faults().enumerate() {
            if let FaultMode::StochasticValveNoise {
                burst_rate_hz,
                burst_amplitude,
            } = *fault
            {
                let mut rng = stream_rng(self.seed, STREAM_VALVE | k as u64);
                let shape = Normal::new(0.0, burst_amplitude).expect("validated");
                for t in poisson_arrivals(&mut rng, burst_rate_hz, self.duration_s) {
                    let start = (t * fs) as usize;
                    for v in out.iter_mut().skip(start).take(burst_len) {
                        *v += shape.sample(&mut rng);
                    }
                }
            }
        }
        out
    }

    pub fn generate(&self) -> Result<MultiChannelRecord> {
        self.validate()?;
        let op = &self.operating_point;
        let n = self.sample_count();
        let fs = self.sample_rate_hz;
        let amp = op.current_amplitude();
        let w0 = 2.0 * PI * op.line_frequency_hz;
        let onset = self.fault_onset_s;
        let end = self.fault_end_s.unwrap_or(f64::INFINITY);
        let valve = self.valve_waveform(n);
        let has_valve = self
            .active_faults()
            .any(|f| matches!(f, FaultMode::StochasticValveNoise { .. }));

        let mut channels = Vec::with_capacity(4);
        for phase in 0..3 {
            let displacement = phase as f64 * 2.0 * PI / 3.0;
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    let theta = w0 * t + op.phase_shift_rad - displacement;
                    let mut v = amp
                        * (theta.sin()
                            + FIFTH_HARMONIC_REL * (5.0 * theta).sin()
                            + SEVENTH_HARMONIC_REL * (7.0 * theta).sin());
                    if t >= onset && t < end {
                        for fault in self.active_faults() {
                            v += fault_component(fault, amp, t, op.phase_shift_rad, displacement, theta);
                        }
                        if has_valve {
                            v += valve[i];
                        }
                    }
                    v
                })
                .collect();
            channels.push(Channel::new(format!("phase_{}", ['a', 'b', 'c'][phase]), samples));
        }
        if self.with_pressure {
            let wm = 2.0 * PI * op.shaft_frequency_hz();
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    let mut v = 1.0 + PRESSURE_RIPPLE_REL * (wm * t).sin();
                    if has_valve && t >= onset && t < end {
                        v += VALVE_PRESSURE_COUPLING * valve[i];
                    }
                    v
                })
                .collect();
            channels.push(Channel::new("pressure", samples));
        }
        let clean = MultiChannelRecord::new(fs, channels)?;
        add_noise(&clean, &self.noise, self.seed)
    }
}

fn fault_component(fault: &FaultMode, amp: f64, t: f64, phase_shift: f64, displacement: f64, theta: f64) -> f64 {
    match *fault {
        FaultMode::Healthy | FaultMode::StochasticValveNoise { .. } => 0.0,
        FaultMode::HarmonicInjection {
            order,
            relative_amplitude,
        } => amp * relative_amplitude * (order as f64 * theta).sin(),
        FaultMode::Sideband {
            carrier_hz,
            offset_hz,
            depth,
        } => {
            let lower = 2.0 * PI * (carrier_hz - offset_hz) * t + phase_shift - displacement;
            let upper = 2.0 * PI * (carrier_hz + offset_hz) * t + phase_shift - displacement;
            amp * depth * (lower.sin() + upper.sin())
        }
    }
}

/// Three phase currents with the given faults (active from t = 0) and noise.
pub fn generate_phase_currents(
    op: &OperatingPoint,
    faults: &[FaultMode],
    noise: &NoiseKind,
    sample_rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<MultiChannelRecord> {
    DriveScenario::new(*op, faults.to_vec(), *noise, sample_rate_hz, duration_s, seed).generate()
}

/// Shape of one synthetic ground-truth source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Sine { frequency_hz: f64 },
    Sawtooth { frequency_hz: f64 },
    Square { frequency_hz: f64 },
    Laplacian,
    Uniform,
    Gaussian,
}

impl SourceKind {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, SourceKind::Gaussian)
    }
}

/// Generates unit-variance independent sources; at most one may be Gaussian.
pub fn generate_sources(kinds: &[SourceKind], sample_rate_hz: f64, len: usize, seed: u64) -> Result<SourceSet> {
    if kinds.iter().filter(|k| k.is_gaussian()).count() > 1 {
        return Err(Error::param("kinds", "at most one source may be Gaussian"));
    }
    if len == 0 {
        return Err(Error::param("len", "must be positive"));
    }
    let channels = kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| {
            let mut rng = stream_rng(seed, STREAM_SOURCE | i as u64);
            let phase0: f64 = rng.random::<f64>();
            let samples: Vec<f64> = (0..len)
                .map(|n| {
                    let t = n as f64 / sample_rate_hz;
                    match *kind {
                        SourceKind::Sine { frequency_hz } => {
                            std::f64::consts::SQRT_2 * (2.0 * PI * (frequency_hz * t + phase0)).sin()
                        }
                        SourceKind::Sawtooth { frequency_hz } => {
                            let c = (frequency_hz * t + phase0).fract();
                            3f64.sqrt() * (2.0 * c - 1.0)
                        }
                        SourceKind::Square { frequency_hz } => {
                            if (frequency_hz * t + phase0).fract() < 0.5 {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                        SourceKind::Laplacian => {
                            let u: f64 = rng.random::<f64>() - 0.5;
                            -u.signum() * (1.0 - 2.0 * u.abs()).ln() / std::f64::consts::SQRT_2
                        }
                        SourceKind::Uniform => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
                        SourceKind::Gaussian => rng.sample(rand_distr::StandardNormal),
                    }
                })
                .collect();
            Channel::new(format!("s{i}"), samples)
        })
        .collect();
    Ok(SourceSet(MultiChannelRecord::new(sample_rate_hz, channels)?))
}
