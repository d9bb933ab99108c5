use nalgebra::DMatrix;
use rand_distr::{Distribution, Uniform};

use super::{stream_rng, Channel, MultiChannelRecord, SourceSet};
use crate::error::{Error, Result};

const STREAM_MIXING: u64 = 4 << 32;

/// Largest condition number accepted for a square mixing matrix.
pub const MAX_CONDITION_NUMBER: f64 = 1e6;

/// The `M × N` matrix `A` of `x(t) = A s(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(DMatrix<f64>);

impl MixingMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::param("mixing_matrix", "must be non-empty"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("mixing_matrix", "entries must be finite"));
        }
        if a.is_square() {
            let cond = condition_number(&a);
            if !(cond <= MAX_CONDITION_NUMBER) {
                return Err(Error::Singular(format!(
                    "mixing matrix condition number {cond:e} exceeds {MAX_CONDITION_NUMBER:e}"
                )));
            }
        }
        Ok(Self(a))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("ragged mixing matrix rows".into()));
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    /// Random square matrix with entries in `[-1, 1]`, redrawn until its
    /// condition number is below `max_condition`.
    pub fn random_well_conditioned(n: usize, max_condition: f64, seed: u64) -> Result<Self> {
        if n == 0 || max_condition <= 1.0 {
            return Err(Error::param("max_condition", "need n ≥ 1 and max_condition > 1"));
        }
        let mut rng = stream_rng(seed, STREAM_MIXING);
        let u = Uniform::new_inclusive(-1.0, 1.0).expect("static bounds");
        for _ in 0..10_000 {
            let a = DMatrix::from_fn(n, n, |_, _| u.sample(&mut rng));
            if condition_number(&a) < max_condition {
                return Self::new(a);
            }
        }
        Err(Error::Degenerate("could not draw a well-conditioned matrix".into()))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(&self.0)
    }
}

pub(crate) fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Applies the mixing model sample by sample: `x[i][t] = Σ_j a[i][j] s[j][t]`.
pub fn mix_sources(a: &MixingMatrix, s: &SourceSet) -> Result<MultiChannelRecord> {
    let src = s.record();
    if a.cols() != src.channel_count() {
        return Err(Error::DimensionMismatch(format!(
            "mixing matrix has {} columns but there are {} sources",
            a.cols(),
            src.channel_count()
        )));
    }
    let len = src.len();
    let channels = (0..a.rows())
        .map(|i| {
            let mut out = vec![0.0; len];
            for j in 0..a.cols() {
                let coeff = a.0[(i, j)];
                for (o, v) in out.iter_mut().zip(src.samples(j)) {
                    *o += coeff * v;
                }
            }
            Channel::new(format!("x{i}"), out)
        })
        .collect();
    MultiChannelRecord::new(src.sample_rate_hz(), channels)
}
