use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::matrix_rows;
use crate::error::{Error, Result};
use crate::signal_model::{Channel, MultiChannelRecord};

/// Smallest eigenvalue of the sample covariance, relative to the largest,
/// that still counts as nonsingular.
pub const MIN_RELATIVE_EIGENVALUE: f64 = 1e-10;

/// Centring and symmetric (ZCA) whitening fitted on one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitener {
    pub mean: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub transform: DMatrix<f64>,
}

impl Whitener {
    pub fn identity(mean: Vec<f64>) -> Self {
        let n = mean.len();
        Self {
            mean,
            transform: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `transform · (x - mean)` for every sample.
    pub fn apply(&self, x: &MultiChannelRecord) -> Result<MultiChannelRecord> {
        if x.channel_count() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "whitener expects {} channels, record has {}",
                self.dim(),
                x.channel_count()
            )));
        }
        let centred: Vec<Vec<f64>> = x
            .channels()
            .iter()
            .zip(&self.mean)
            .map(|(c, m)| c.samples.iter().map(|v| v - m).collect())
            .collect();
        let out = apply_matrix(&self.transform, &centred);
        let channels = out
            .into_iter()
            .enumerate()
            .map(|(i, s)| Channel::new(format!("w{i}"), s))
            .collect();
        MultiChannelRecord::new(x.sample_rate_hz(), channels)
    }
}

/// `m · x` where `x` is channel-major.
pub(crate) fn apply_matrix(m: &DMatrix<f64>, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let len = x.first().map_or(0, Vec::len);
    (0..m.nrows())
        .map(|i| {
            let mut out = vec![0.0; len];
            for (j, xj) in x.iter().enumerate() {
                let c = m[(i, j)];
                if c != 0.0 {
                    out.iter_mut().zip(xj).for_each(|(o, v)| *o += c * v);
                }
            }
            out
        })
        .collect()
}

pub(crate) fn channel_means(x: &MultiChannelRecord) -> Vec<f64> {
    let n = x.len() as f64;
    x.channels().iter().map(|c| c.samples.iter().sum::<f64>() / n).collect()
}

/// Sample covariance with divisor `T`.
pub(crate) fn covariance(x: &MultiChannelRecord, mean: &[f64]) -> DMatrix<f64> {
    let n = x.channel_count();
    let t = x.len() as f64;
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = x
                .samples(i)
                .iter()
                .zip(x.samples(j))
                .map(|(a, b)| (a - mean[i]) * (b - mean[j]))
                .sum::<f64>()
                / t;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Centres the record and rotates/scales it to identity covariance.
///
/// Uses the symmetric inverse square root `E Λ^{-1/2} Eᵀ`, which leaves
/// already-white data (nearly) untouched.
pub fn center_whiten(x: &MultiChannelRecord) -> Result<(MultiChannelRecord, Whitener)> {
    let n = x.channel_count();
    if n < 2 {
        return Err(Error::param("channels", "whitening needs at least two channels"));
    }
    if x.len() < 10 * n {
        return Err(Error::TooShort {
            needed: 10 * n,
            actual: x.len(),
        });
    }
    let mean = channel_means(x);
    let cov = covariance(x, &mean);
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= MIN_RELATIVE_EIGENVALUE * max {
        return Err(Error::Degenerate(format!(
            "sample covariance is singular (eigenvalues {min:e} .. {max:e}); \
             a channel is constant or a linear combination of others"
        )));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let transform = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let whitener = Whitener { mean, transform };
    let whitened = whitener.apply(x)?;
    Ok((whitened, whitener))
}
