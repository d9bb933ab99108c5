use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labelled, uniformly sampled channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub label: String,
    pub samples: Vec<f64>,
}

impl Channel {
    pub fn new(label: impl Into<String>, samples: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            samples,
        }
    }
}

/// Time-aligned multichannel signal sampled at a common rate.
///
/// Every channel holds the same number of samples (at least one). This is the
/// observation vector `x(t)` of the linear mixing model, laid out channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiChannelRecord {
    sample_rate_hz: f64,
    channels: Vec<Channel>,
}

impl MultiChannelRecord {
    pub fn new(sample_rate_hz: f64, channels: Vec<Channel>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::param(
                "sample_rate_hz",
                format!("must be positive and finite, got {sample_rate_hz}"),
            ));
        }
        let Some(first) = channels.first() else {
            return Err(Error::param("channels", "a record needs at least one channel"));
        };
        let len = first.samples.len();
        if len == 0 {
            return Err(Error::param("channels", "channels must hold at least one sample"));
        }
        if let Some(bad) = channels.iter().find(|c| c.samples.len() != len) {
            return Err(Error::DimensionMismatch(format!(
                "channel `{}` has {} samples, expected {len}",
                bad.label,
                bad.samples.len()
            )));
        }
        Ok(Self {
            sample_rate_hz,
            channels,
        })
    }

    /// Builds a record from bare sample vectors, labelling them `ch0`, `ch1`, ...
    pub fn from_samples(sample_rate_hz: f64, data: Vec<Vec<f64>>) -> Result<Self> {
        let channels = data
            .into_iter()
            .enumerate()
            .map(|(i, s)| Channel::new(format!("ch{i}"), s))
            .collect();
        Self::new(sample_rate_hz, channels)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &Channel {
        &self.channels[index]
    }

    pub fn samples(&self, index: usize) -> &[f64] {
        &self.channels[index].samples
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn labels(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.label.clone()).collect()
    }

    pub fn into_channels(self) -> Vec<Channel> {
        self.channels
    }

    /// Applies `f` to every channel's samples, keeping labels and order.
    pub(crate) fn map_samples<F>(&self, sample_rate_hz: f64, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let channels = self
            .channels
            .iter()
            .map(|c| Channel::new(c.label.clone(), f(&c.samples)))
            .collect();
        Self::new(sample_rate_hz, channels)
    }

    /// Samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::param(
                "slice",
                format!("range {start}..{end} invalid for {} samples", self.len()),
            ));
        }
        self.map_samples(self.sample_rate_hz, |s| s[start..end].to_vec())
    }

    /// Keeps the listed channels, in the listed order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let channels = indices
            .iter()
            .map(|&i| {
                self.channels
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::param("channel", format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.sample_rate_hz, channels)
    }

    pub fn push_channel(&mut self, channel: Channel) -> Result<()> {
        if channel.samples.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "channel `{}` has {} samples, record has {}",
                channel.label,
                channel.samples.len(),
                self.len()
            )));
        }
        self.channels.push(channel);
        Ok(())
    }

    /// Rounds every sample to the nearest `f32`, the precision of the binary
    /// record encoding.
    pub fn quantized_f32(&self) -> Self {
        let channels = self
            .channels
            .iter()
            .map(|c| Channel::new(c.label.clone(), c.samples.iter().map(|&v| v as f32 as f64).collect()))
            .collect();
        Self {
            sample_rate_hz: self.sample_rate_hz,
            channels,
        }
    }
}

/// Ground-truth sources `s(t)` for separation experiments.
///
/// Same layout as [`MultiChannelRecord`]; the wrapper only marks intent.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet(pub MultiChannelRecord);

impl SourceSet {
    pub fn record(&self) -> &MultiChannelRecord {
        &self.0
    }

    pub fn channel_count(&self) -> usize {
        self.0.channel_count()
    }
}
