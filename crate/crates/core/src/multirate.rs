//! Sample-rate conversion and smoothing.
//!
//! Every filter here is a linear-phase Kaiser-windowed sinc applied
//! zero-phase: the group delay of `(taps - 1) / 2` samples is removed by
//! centring the convolution, and record edges are extended by reflection
//! (`x[-i] = x[i]`, the edge sample is not repeated). Outputs therefore stay
//! time-aligned with inputs, sample `n` of a decimated record sits at time
//! `n * m / fs`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::MultiChannelRecord;

/// Stopband attenuation used by the resamplers.
pub const DEFAULT_ATTENUATION_DB: f64 = 60.0;
/// Fraction of the output Nyquist band kept flat by the resamplers.
pub const PASSBAND_FRACTION: f64 = 0.8;
/// Grid size used to verify stopband rejection at design time.
pub const RESPONSE_GRID: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowpassFilter {
    pub taps: Vec<f64>,
    /// −6 dB point, in cycles per sample.
    pub cutoff_normalized: f64,
    pub passband_edge: f64,
    pub stopband_edge: f64,
    pub design_attenuation_db: f64,
}

impl LowpassFilter {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Magnitude response at normalized frequency `f` (cycles/sample).
    pub fn gain(&self, f: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, h) in self.taps.iter().enumerate() {
            let a = -2.0 * PI * f * k as f64;
            re += h * a.cos();
            im += h * a.sin();
        }
        re.hypot(im)
    }

    /// Worst stopband rejection in dB, sampled on a uniform grid over
    /// `[stopband_edge, 0.5]`.
    pub fn measured_rejection_db(&self, grid: usize) -> f64 {
        let lo = self.stopband_edge.min(0.5);
        let worst = (0..=grid)
            .map(|i| lo + (0.5 - lo) * i as f64 / grid as f64)
            .map(|f| self.gain(f))
            .fold(0.0f64, f64::max);
        -20.0 * worst.max(1e-300).log10()
    }
}

fn kaiser_beta(attenuation_db: f64) -> f64 {
    let a = attenuation_db;
    if a > 50.0 {
        0.1102 * (a - 8.7)
    } else if a >= 21.0 {
        0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
    } else {
        0.0
    }
}

/// Zeroth-order modified Bessel function of the first kind, power series.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn windowed_sinc(cutoff: f64, beta: f64, len: usize) -> Vec<f64> {
    let mid = (len - 1) as f64 / 2.0;
    let norm = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let r = if mid == 0.0 { 0.0 } else { t / mid };
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
            sinc * w
        })
        .collect();
    // Mirror so the taps are exactly symmetric, then normalize DC gain.
    for k in 0..len / 2 {
        let v = 0.5 * (taps[k] + taps[len - 1 - k]);
        taps[k] = v;
        taps[len - 1 - k] = v;
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Kaiser-windowed sinc with explicit band edges (cycles/sample).
///
/// The Kaiser length estimate is a starting point; the length grows two taps
/// at a time until the measured rejection reaches `attenuation_db - 0.5`.
pub fn design_lowpass_band(passband_edge: f64, stopband_edge: f64, attenuation_db: f64) -> Result<LowpassFilter> {
    if !(passband_edge > 0.0 && passband_edge < stopband_edge && stopband_edge <= 0.5) {
        return Err(Error::param(
            "band_edges",
            format!("need 0 < passband ({passband_edge}) < stopband ({stopband_edge}) ≤ 0.5"),
        ));
    }
    if !(attenuation_db > 0.0 && attenuation_db.is_finite()) {
        return Err(Error::param("attenuation_db", "must be positive"));
    }
    let transition = stopband_edge - passband_edge;
    let cutoff = 0.5 * (passband_edge + stopband_edge);
    let beta = kaiser_beta(attenuation_db);
    let estimate = ((attenuation_db - 7.95).max(0.0) / (14.36 * transition)).ceil() as usize + 1;
    let mut len = estimate.max(3) | 1;
    loop {
        let filter = LowpassFilter {
            taps: windowed_sinc(cutoff, beta, len),
            cutoff_normalized: cutoff,
            passband_edge,
            stopband_edge,
            design_attenuation_db: attenuation_db,
        };
        if filter.measured_rejection_db(RESPONSE_GRID) >= attenuation_db - 0.5 || len > 64 * estimate + 64 {
            return Ok(filter);
        }
        len += 2;
    }
}

/// Lowpass with −6 dB point `cutoff_normalized`.
///
/// The transition band is centred on the cutoff with half-width
/// `min(cutoff, 0.5 - cutoff) / 4`, so the stopband never crosses Nyquist.
pub fn design_lowpass(cutoff_normalized: f64, attenuation_db: f64) -> Result<LowpassFilter> {
    if !(cutoff_normalized > 0.0 && cutoff_normalized < 0.5) {
        return Err(Error::param(
            "cutoff_normalized",
            format!("must lie in (0, 0.5), got {cutoff_normalized}"),
        ));
    }
    let half = cutoff_normalized.min(0.5 - cutoff_normalized) / 4.0;
    design_lowpass_band(cutoff_normalized - half, cutoff_normalized + half, attenuation_db)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational rate change by `up / down` with a shared anti-imaging /
/// anti-aliasing lowpass.
#[derive(Debug, Clone, PartialEq)]
pub struct RateConversion {
    up: usize,
    down: usize,
    filter: LowpassFilter,
}

impl RateConversion {
    pub fn new(up: usize, down: usize, attenuation_db: f64) -> Result<Self> {
        if up == 0 || down == 0 {
            return Err(Error::param("factor", "up and down factors must be ≥ 1"));
        }
        if gcd(up, down) != 1 {
            return Err(Error::param(
                "factor",
                format!("up ({up}) and down ({down}) must be coprime"),
            ));
        }
        let edge = 0.5 / up.max(down) as f64;
        let filter = design_lowpass_band(PASSBAND_FRACTION * edge, edge, attenuation_db)?;
        Ok(Self { up, down, filter })
    }

    pub fn up(&self) -> usize {
        self.up
    }

    pub fn down(&self) -> usize {
        self.down
    }

    pub fn filter(&self) -> &LowpassFilter {
        &self.filter
    }

    /// Minimum input length accepted by [`apply_channel`](Self::apply_channel).
    pub fn min_input_len(&self) -> usize {
        self.filter.len().div_ceil(self.up) + 1
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    pub fn apply_channel(&self, x: &[f64]) -> Result<Vec<f64>> {
        let len = x.len();
        if len < self.min_input_len() {
            return Err(Error::TooShort {
                needed: self.min_input_len(),
                actual: len,
            });
        }
        let (l, m) = (self.up as isize, self.down as isize);
        let taps = &self.filter.taps;
        let half = (taps.len() / 2) as isize;
        let pad = half / l + 1;
        if pad as usize >= len {
            return Err(Error::TooShort {
                needed: pad as usize + 1,
                actual: len,
            });
        }
        let last = len as isize - 1;
        let reflect = |i: isize| -> f64 {
            let j = if i < 0 {
                -i
            } else if i > last {
                2 * last - i
            } else {
                i
            };
            x[j as usize]
        };
        let gain = l as f64;
        let out = (0..self.output_len(len) as isize)
            .map(|n| {
                // Position on the upsampled grid, centred on the filter.
                let centre = n * m + half;
                // Smallest tap index k with (centre - k) divisible by l.
                let k0 = centre.rem_euclid(l);
                let mut acc = 0.0;
                let mut k = k0;
                while k < taps.len() as isize {
                    let src = (centre - k) / l;
                    acc += taps[k as usize] * reflect(src);
                    k += l;
                }
                gain * acc
            })
            .collect();
        Ok(out)
    }

    pub fn apply(&self, x: &MultiChannelRecord) -> Result<MultiChannelRecord> {
        let fs = x.sample_rate_hz() * self.up as f64 / self.down as f64;
        let channels = x
            .channels()
            .iter()
            .map(|c| {
                Ok(crate::signal_model::Channel::new(
                    c.label.clone(),
                    self.apply_channel(&c.samples)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        MultiChannelRecord::new(fs, channels)
    }
}

/// Anti-aliased downsampling by `m`. `m = 1` returns the input unchanged.
pub fn decimate(x: &MultiChannelRecord, m: usize) -> Result<MultiChannelRecord> {
    if m == 0 {
        return Err(Error::param("m", "decimation factor must be ≥ 1"));
    }
    if m == 1 {
        return Ok(x.clone());
    }
    let conv = RateConversion::new(1, m, DEFAULT_ATTENUATION_DB)?;
    if x.len() <= conv.filter().len() {
        return Err(Error::TooShort {
            needed: conv.filter().len() + 1,
            actual: x.len(),
        });
    }
    conv.apply(x)
}

/// Zero-stuffing upsampling by `l` followed by image rejection.
/// `l = 1` returns the input unchanged.
pub fn interpolate(x: &MultiChannelRecord, l: usize) -> Result<MultiChannelRecord> {
    if l == 0 {
        return Err(Error::param("l", "interpolation factor must be ≥ 1"));
    }
    if l == 1 {
        return Ok(x.clone());
    }
    RateConversion::new(l, 1, DEFAULT_ATTENUATION_DB)?.apply(x)
}

/// Rate change by `l / m`; the ratio is reduced to lowest terms first.
pub fn resample(x: &MultiChannelRecord, l: usize, m: usize) -> Result<MultiChannelRecord> {
    if l == 0 || m == 0 {
        return Err(Error::param("factor", "factors must be ≥ 1"));
    }
    let g = gcd(l, m);
    let (l, m) = (l / g, m / g);
    if l == 1 && m == 1 {
        return Ok(x.clone());
    }
    RateConversion::new(l, m, DEFAULT_ATTENUATION_DB)?.apply(x)
}

/// Centred moving average over `window_len` (odd) samples with reflect
/// padding. Output length equals input length.
pub fn smooth(x: &MultiChannelRecord, window_len: usize) -> Result<MultiChannelRecord> {
    if window_len == 0 || window_len.is_multiple_of(2) {
        return Err(Error::param(
            "window_len",
            format!("must be odd and positive, got {window_len}"),
        ));
    }
    if window_len > x.len() {
        return Err(Error::param(
            "window_len",
            format!("{window_len} exceeds record length {}", x.len()),
        ));
    }
    if window_len == 1 {
        return Ok(x.clone());
    }
    x.map_samples(x.sample_rate_hz(), |s| smooth_channel(s, window_len))
}

fn smooth_channel(x: &[f64], window_len: usize) -> Vec<f64> {
    let half = (window_len / 2) as isize;
    let last = x.len() as isize - 1;
    // window_len ≤ len, so a single reflection always lands inside.
    let at = |i: isize| -> f64 {
        let j = if i < 0 {
            -i
        } else if i > last {
            2 * last - i
        } else {
            i
        };
        x[j as usize]
    };
    let n = window_len as f64;
    (0..x.len() as isize)
        .map(|i| {
            // Mean taken relative to the centre sample keeps constants exact.
            let centre = x[i as usize];
            let dev: f64 = (i - half..=i + half).map(|j| at(j) - centre).sum();
            centre + dev / n
        })
        .collect()
}
