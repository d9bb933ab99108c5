//! Signature features, multi-channel fusion, library matching and change
//! detection.
//!
//! A [`FeatureVector`] has a fixed layout for a given [`FeatureConfig`]:
//!
//! | entries | meaning | units |
//! |---|---|---|
//! | one per band | mean power in the band | signal units² |
//! | `fundamental_amplitude` | peak amplitude at the line frequency | signal units |
//! | `harmonic_{2..=7}_amplitude` | peak amplitude at each harmonic | signal units |
//! | `sideband_ratio` | mean amplitude at `f_line ± offset` over the nominal line-current amplitude | ratio |
//! | `excess_kurtosis` | of the time samples | – |
//! | `crest_factor` | `max |x - mean| / std` of the time samples | – |
//!
//! Amplitudes come from the energy in a few bins around the target
//! frequency, averaged over frames, so they do not depend on where the tone
//! falls between bins. A zero-variance signal has kurtosis and crest factor 0.

mod change;
mod library;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::OperatingPoint;
use crate::stft::{band_energy, Spectrogram};

pub use change::{detect_change, detect_change_with_warmup, ChangeDetectorState, ChangeSide, DEFAULT_WARMUP};
pub use library::{
    calibrate, classify, nearest_template, CalibrationSample, FaultSignature, SignatureLibrary, LIBRARY_FORMAT,
    LIBRARY_VERSION,
};

/// Harmonic orders reported in every feature vector.
pub const HARMONIC_ORDERS: std::ops::RangeInclusive<u32> = 2..=7;
/// Largest half-width, in bins, of the neighbourhood used for amplitudes.
pub const MAX_NEIGHBOURHOOD_BINS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// `(lo, hi)` pairs in Hz, inclusive.
    pub bands: Vec<(f64, f64)>,
    pub sideband_offset_hz: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            bands: vec![
                (145.0, 155.0),
                (0.5, 45.0),
                (45.0, 55.0),
                (55.0, 145.0),
                (155.0, 500.0),
                (500.0, 1000.0),
            ],
            sideband_offset_hz: 10.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        for &(lo, hi) in &self.bands {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::param("bands", format!("need 0 ≤ lo < hi, got ({lo}, {hi})")));
            }
        }
        if !(self.sideband_offset_hz > 0.0 && self.sideband_offset_hz.is_finite()) {
            return Err(Error::param("sideband_offset_hz", "must be positive"));
        }
        Ok(())
    }

    /// Highest frequency any feature looks at.
    pub fn max_frequency_hz(&self, op: &OperatingPoint) -> f64 {
        let bands = self.bands.iter().map(|b| b.1).fold(0.0, f64::max);
        bands.max(op.line_frequency_hz + self.sideband_offset_hz)
    }

    pub fn schema(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .bands
            .iter()
            .map(|(lo, hi)| format!("band_energy_{lo}_{hi}"))
            .collect();
        names.push("fundamental_amplitude".into());
        names.extend(HARMONIC_ORDERS.map(|k| format!("harmonic_{k}_amplitude")));
        names.push("sideband_ratio".into());
        names.push("excess_kurtosis".into());
        names.push("crest_factor".into());
        names
    }

    pub fn len(&self) -> usize {
        self.bands.len() + 1 + HARMONIC_ORDERS.count() + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fundamental_index(&self) -> usize {
        self.bands.len()
    }

    pub fn harmonic_index(&self, order: u32) -> Option<usize> {
        HARMONIC_ORDERS
            .contains(&order)
            .then(|| self.bands.len() + 1 + (order - 2) as usize)
    }

    pub fn sideband_index(&self) -> usize {
        self.bands.len() + 1 + HARMONIC_ORDERS.count()
    }

    pub fn kurtosis_index(&self) -> usize {
        self.sideband_index() + 1
    }

    pub fn crest_index(&self) -> usize {
        self.sideband_index() + 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub schema: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if schema.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} values",
                schema.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "values",
                format!("entry {i} ({}) is not finite", schema[i]),
            ));
        }
        Ok(Self { schema, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.schema.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Mean and central second/fourth moments.
fn moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    (mean, m2 / n, m4 / n)
}

/// Excess kurtosis and crest factor; both 0 for a constant signal.
pub fn time_statistics(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let (mean, m2, m4) = moments(x);
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if m2 <= (scale * 1e-12).powi(2) {
        return (0.0, 0.0);
    }
    let peak = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    (m4 / (m2 * m2) - 3.0, peak / m2.sqrt())
}

/// Per-frame-averaged spectral quantities in physical units.
struct SpectralReader<'a> {
    s: &'a Spectrogram,
    /// `N_fft · Σ w²`
    norm: f64,
    half_width: usize,
}

impl<'a> SpectralReader<'a> {
    fn new(s: &'a Spectrogram, sideband_offset_hz: f64) -> Self {
        let norm = s.config.fft_len() as f64 * s.window_energy();
        // Keep the carrier and sideband neighbourhoods disjoint.
        let offset_bins = sideband_offset_hz / s.bin_spacing_hz();
        let fit = ((offset_bins - 1.0) / 2.0).floor().max(1.0) as usize;
        Self {
            s,
            norm,
            half_width: fit.min(MAX_NEIGHBOURHOOD_BINS),
        }
    }

    fn mean_energy(&self, lo_bin: usize, hi_bin: usize) -> f64 {
        let frames = self.s.frame_count() as f64;
        self.s
            .magnitudes
            .iter()
            .map(|f| f[lo_bin..=hi_bin].iter().map(|m| m * m).sum::<f64>())
            .sum::<f64>()
            / frames
    }

    /// Peak amplitude of a tone near `f`; 0 above the analysed band.
    fn amplitude(&self, f: f64) -> f64 {
        let last = self.s.bin_count() - 1;
        let centre = (f / self.s.bin_spacing_hz()).round() as usize;
        if f >= self.s.nyquist_hz() || centre > last {
            return 0.0;
        }
        let lo = centre.saturating_sub(self.half_width).max(1);
        let hi = (centre + self.half_width).min(last);
        if lo > hi {
            return 0.0;
        }
        (4.0 * self.mean_energy(lo, hi) / self.norm).sqrt()
    }

    fn band_power(&self, lo: f64, hi: f64) -> Result<f64> {
        let per_frame = band_energy(self.s, lo, hi)?;
        Ok(2.0 * per_frame.iter().sum::<f64>() / per_frame.len() as f64 / self.norm)
    }
}

/// Feature vector of one channel given its spectrogram.
pub fn extract_features(
    samples: &[f64],
    spec: &Spectrogram,
    op: &OperatingPoint,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    cfg.validate()?;
    op.validate()?;
    if spec.frame_count() == 0 {
        return Err(Error::Degenerate("spectrogram has no frames".into()));
    }
    let reader = SpectralReader::new(spec, cfg.sideband_offset_hz);
    let mut values = Vec::with_capacity(cfg.len());
    for &(lo, hi) in &cfg.bands {
        values.push(reader.band_power(lo, hi)?);
    }
    let f0 = op.line_frequency_hz;
    values.push(reader.amplitude(f0));
    for k in HARMONIC_ORDERS {
        values.push(reader.amplitude(k as f64 * f0));
    }
    let lower = if f0 > cfg.sideband_offset_hz {
        reader.amplitude(f0 - cfg.sideband_offset_hz)
    } else {
        0.0
    };
    let upper = reader.amplitude(f0 + cfg.sideband_offset_hz);
    values.push(0.5 * (lower + upper) / op.current_amplitude());
    let (kurt, crest) = time_statistics(samples);
    values.push(kurt);
    values.push(crest);
    FeatureVector::new(cfg.schema(), values)
}

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Convex combination of per-channel feature vectors.
pub fn fuse(features: &[FeatureVector], weights: &[f64]) -> Result<FeatureVector> {
    let first = features
        .first()
        .ok_or_else(|| Error::param("features", "need at least one feature vector"))?;
    if weights.len() != features.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} feature vectors",
            weights.len(),
            features.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::param("weights", "must be non-negative and finite"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::param("weights", format!("must sum to 1, sum is {sum}")));
    }
    if let Some(bad) = features.iter().position(|f| f.schema != first.schema) {
        return Err(Error::DimensionMismatch(format!(
            "feature vector {bad} has a different schema"
        )));
    }
    let values = (0..first.len())
        .map(|j| features.iter().zip(weights).map(|(f, w)| w * f.values[j]).sum())
        .collect();
    FeatureVector::new(first.schema.clone(), values)
}

/// `n` equal weights summing to 1.
pub fn equal_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}
