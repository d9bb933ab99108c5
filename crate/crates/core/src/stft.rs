//! Short-time Fourier analysis.
//!
//! Spectra are one-sided: bins `0..=fft_len/2`, with DC at bin 0 and the
//! Nyquist bin last. Magnitudes are the raw DFT magnitudes of the windowed
//! frame (no one-sided doubling, no window normalization), so a DC signal of
//! amplitude 1 under a rectangular window gives `window_len` in bin 0.
//! Frame `i` covers samples `[i*hop, i*hop + window_len)`; its time stamp is
//! the centre of that span.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Rectangular,
    Hann,
    Hamming,
}

impl WindowKind {
    /// Periodic (DFT-even) window coefficients.
    pub fn coefficients(&self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let c = (2.0 * PI * i as f64 / n).cos();
                match self {
                    WindowKind::Rectangular => 1.0,
                    WindowKind::Hann => 0.5 - 0.5 * c,
                    WindowKind::Hamming => 0.54 - 0.46 * c,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
    /// FFT size when zero-padding each frame; `None` means `window_len`.
    #[serde(default)]
    pub fft_len: Option<usize>,
}

impl StftConfig {
    /// Hann window with 50% overlap.
    pub fn new(window_len: usize) -> Self {
        Self {
            window_len,
            hop: (window_len / 2).max(1),
            window: WindowKind::Hann,
            fft_len: None,
        }
    }

    pub fn with_window(mut self, window: WindowKind) -> Self {
        self.window = window;
        self
    }

    pub fn with_hop(mut self, hop: usize) -> Self {
        self.hop = hop;
        self
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len.unwrap_or(self.window_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 8 || !self.window_len.is_power_of_two() {
            return Err(Error::param(
                "window_len",
                format!("must be a power of two ≥ 8, got {}", self.window_len),
            ));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::param("hop", format!("must lie in 1..={}", self.window_len)));
        }
        let fft = self.fft_len();
        if fft < self.window_len || !fft.is_power_of_two() {
            return Err(Error::param("fft_len", "must be a power of two ≥ window_len"));
        }
        Ok(())
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::new(1024)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub sample_rate_hz: f64,
    pub config: StftConfig,
    pub frame_times_s: Vec<f64>,
    pub bin_freqs_hz: Vec<f64>,
    /// `magnitudes[frame][bin]`.
    pub magnitudes: Vec<Vec<f64>>,
    pub phases: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn frame_count(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn bin_count(&self) -> usize {
        self.bin_freqs_hz.len()
    }

    pub fn bin_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.config.fft_len() as f64
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    /// `Σ w[n]²` for the configured window.
    pub fn window_energy(&self) -> f64 {
        self.config
            .window
            .coefficients(self.config.window_len)
            .iter()
            .map(|w| w * w)
            .sum()
    }
}

/// Spectrogram of one channel.
pub fn stft(x: &[f64], sample_rate_hz: f64, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if !(sample_rate_hz > 0.0) {
        return Err(Error::param("sample_rate_hz", "must be positive"));
    }
    let n = cfg.window_len;
    if x.len() < n {
        return Err(Error::TooShort {
            needed: n,
            actual: x.len(),
        });
    }
    let fft_len = cfg.fft_len();
    let frames = (x.len() - n) / cfg.hop + 1;
    let bins = fft_len / 2 + 1;
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);

    let spectra: Vec<(Vec<f64>, Vec<f64>)> = (0..frames)
        .into_par_iter()
        .map(|f| {
            let start = f * cfg.hop;
            let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); fft_len];
            for (i, b) in buf.iter_mut().take(n).enumerate() {
                b.re = x[start + i] * window[i];
            }
            fft.process(&mut buf);
            let mags = buf[..bins].iter().map(|c| c.norm()).collect();
            let phases = buf[..bins].iter().map(|c| c.im.atan2(c.re)).collect();
            (mags, phases)
        })
        .collect();
    let (magnitudes, phases) = spectra.into_iter().unzip();

    Ok(Spectrogram {
        sample_rate_hz,
        config: *cfg,
        frame_times_s: (0..frames)
            .map(|f| (f * cfg.hop) as f64 / sample_rate_hz + n as f64 / (2.0 * sample_rate_hz))
            .collect(),
        bin_freqs_hz: (0..bins).map(|k| k as f64 * sample_rate_hz / fft_len as f64).collect(),
        magnitudes,
        phases,
    })
}

/// Per-frame sum of squared magnitudes over bins with `f_lo ≤ f ≤ f_hi`.
pub fn band_energy(s: &Spectrogram, f_lo_hz: f64, f_hi_hz: f64) -> Result<Vec<f64>> {
    if !(f_lo_hz >= 0.0 && f_lo_hz < f_hi_hz && f_hi_hz <= s.nyquist_hz()) {
        return Err(Error::param(
            "band",
            format!("need 0 ≤ lo < hi ≤ {} Hz, got [{f_lo_hz}, {f_hi_hz}]", s.nyquist_hz()),
        ));
    }
    let lo = (f_lo_hz / s.bin_spacing_hz()).ceil() as usize;
    let hi = ((f_hi_hz / s.bin_spacing_hz()).floor() as usize).min(s.bin_count() - 1);
    Ok(s.magnitudes
        .iter()
        .map(|frame| {
            if lo > hi {
                0.0
            } else {
                frame[lo..=hi].iter().map(|m| m * m).sum()
            }
        })
        .collect())
}

/// The `k` strongest local maxima of one frame, strongest first.
///
/// A bin is a local maximum when it is strictly above its left neighbour and
/// at least its right neighbour (edges compare against their one neighbour),
/// so a flat plateau reports its lowest bin. Equal magnitudes order by lower
/// frequency. When a frame has fewer than `k` local maxima the list is padded
/// with the remaining bins in magnitude order, so the result always has
/// exactly `k` entries.
pub fn spectral_peaks(s: &Spectrogram, frame: usize, k: usize) -> Result<Vec<(f64, f64)>> {
    let mags = s.magnitudes.get(frame).ok_or_else(|| {
        Error::param(
            "frame",
            format!("index {frame} out of range for {} frames", s.frame_count()),
        )
    })?;
    if k == 0 || k > mags.len() {
        return Err(Error::param("k", format!("must lie in 1..={}", mags.len())));
    }
    let last = mags.len() - 1;
    let is_peak = |i: usize| {
        let left_ok = i == 0 || mags[i] > mags[i - 1];
        let right_ok = i == last || mags[i] >= mags[i + 1];
        left_ok && right_ok
    };
    let by_magnitude = |a: &usize, b: &usize| mags[*b].total_cmp(&mags[*a]).then(a.cmp(b));
    let (mut peaks, mut rest): (Vec<usize>, Vec<usize>) = (0..mags.len()).partition(|&i| is_peak(i));
    peaks.sort_by(by_magnitude);
    rest.sort_by(by_magnitude);
    Ok(peaks
        .into_iter()
        .chain(rest)
        .take(k)
        .map(|i| (s.bin_freqs_hz[i], mags[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn dc_lands_in_bin_zero() {
        let cfg = StftConfig::new(64).with_window(WindowKind::Rectangular);
        let s = stft(&vec![1.0; 256], 64.0, &cfg).unwrap();
        assert_eq!(s.frame_count(), (256 - 64) / 32 + 1);
        for frame in &s.magnitudes {
            assert!((frame[0] - 64.0).abs() < 1e-9);
            assert!(frame[1..].iter().all(|m| m.abs() < 1e-9));
        }
    }

    #[test]
    fn bin_centred_tone_peaks_at_its_bin() {
        let s = stft(&tone(50.0, 1024.0, 4096, 1.0), 1024.0, &StftConfig::new(1024)).unwrap();
        let peaks = spectral_peaks(&s, 0, 1).unwrap();
        assert_eq!(peaks[0].0, 50.0);
        assert_eq!(s.bin_spacing_hz(), 1.0);
    }

    #[test]
    fn off_bin_tone_leaks() {
        let s = stft(&tone(50.0, 1000.0, 2000, 1.0), 1000.0, &StftConfig::new(256)).unwrap();
        let frame = &s.magnitudes[2];
        let top = spectral_peaks(&s, 2, 1).unwrap()[0];
        assert_eq!(top.0, 13.0 * 1000.0 / 256.0);
        assert!(frame[12] > 1.0 && frame[14] > 1.0);
    }

    #[test]
    fn frame_count_and_errors() {
        let cfg = StftConfig::new(16).with_hop(5);
        let s = stft(&vec![0.0; 100], 10.0, &cfg).unwrap();
        assert_eq!(s.frame_count(), (100 - 16) / 5 + 1);
        assert_eq!(s.bin_count(), 9);
        assert!(stft(&[0.0; 10], 10.0, &cfg).is_err());
        assert!(stft(&[0.0; 100], 10.0, &StftConfig::new(12)).is_err());
        assert!(stft(&[0.0; 100], 10.0, &StftConfig::new(4)).is_err());
        assert!(stft(&[0.0; 100], 10.0, &StftConfig::new(16).with_hop(0)).is_err());
        assert!(stft(&[0.0; 100], 10.0, &StftConfig::new(16).with_hop(17)).is_err());
    }

    #[test]
    fn band_energy_cases() {
        let fs = 1000.0;
        let s = stft(&tone(50.0, fs, 4000, 1.0), fs, &StftConfig::new(256)).unwrap();
        let full = band_energy(&s, 0.0, 500.0).unwrap();
        for (f, e) in s.magnitudes.iter().zip(&full) {
            let total: f64 = f.iter().map(|m| m * m).sum();
            assert!((total - e).abs() <= 1e-12 * total);
        }
        let empty = band_energy(&s, 100.1, 100.2).unwrap();
        assert!(empty.iter().all(|&e| e == 0.0));
        let narrow = band_energy(&s, 40.0, 60.0).unwrap();
        for (n, f) in narrow.iter().zip(&full) {
            assert!(n / f >= 0.95, "{}", n / f);
        }
        assert!(band_energy(&s, 60.0, 40.0).is_err());
        assert!(band_energy(&s, -1.0, 40.0).is_err());
        assert!(band_energy(&s, 0.0, 600.0).is_err());
    }

    #[test]
    fn two_tones_sorted_by_magnitude() {
        let fs = 1024.0;
        let x: Vec<f64> = tone(50.0, fs, 1024, 1.0)
            .iter()
            .zip(tone(150.0, fs, 1024, 0.5))
            .map(|(a, b)| a + b)
            .collect();
        let s = stft(&x, fs, &StftConfig::new(1024)).unwrap();
        let peaks = spectral_peaks(&s, 0, 2).unwrap();
        assert_eq!(peaks[0].0, 50.0);
        assert_eq!(peaks[1].0, 150.0);
        assert!(peaks[0].1 > peaks[1].1);
        assert!(spectral_peaks(&s, 1, 1).is_err());
        assert!(spectral_peaks(&s, 0, 0).is_err());
    }

    #[test]
    fn peaks_pad_to_k() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..64).map(|_| rng.random::<f64>() - 0.5).collect();
        let s = stft(&x, 64.0, &StftConfig::new(64)).unwrap();
        let all = spectral_peaks(&s, 0, s.bin_count()).unwrap();
        assert_eq!(all.len(), s.bin_count());
        let mut freqs: Vec<f64> = all.iter().map(|p| p.0).collect();
        freqs.sort_by(f64::total_cmp);
        freqs.dedup();
        assert_eq!(freqs.len(), s.bin_count());
    }
}
