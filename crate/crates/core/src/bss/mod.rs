//! Blind source separation by maximum-likelihood ICA.
//!
//! Observations `x(t) = A s(t)` are centred and whitened, then an unmixing
//! matrix `W` is fitted by natural-gradient ascent of
//!
//! ```text
//! L(W) = Σ_i mean_t log p_i(u_i(t)) + log |det W|,    u = W x̃
//! ```
//!
//! where `x̃` is the whitened record. The `+ log|det W|` form is the
//! `- log|det W⁻¹|` Jacobian term of the likelihood; the constant contributed
//! by the whitener is dropped since it does not move the maximiser.

mod infomax;
mod metrics;
mod whiten;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::{Channel, MultiChannelRecord};

pub use infomax::{data_term, gradient, ica_fit, log_det_term, log_likelihood, natural_gradient};
pub use metrics::{amari_index, match_sources, SourceMatch};
pub use whiten::{center_whiten, Whitener};

pub(crate) use whiten::apply_matrix;

/// Marginal density model for one estimated source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreModel {
    /// `p(u) = 1 / (π cosh u)`, score `tanh(u)`.
    SuperGaussian,
    /// `p(u) = exp(-u⁴/4) / Z`, score `u³`.
    SubGaussian,
}

/// `Γ(1/4)`.
const GAMMA_QUARTER: f64 = 3.625_609_908_221_908;

impl ScoreModel {
    pub fn log_density(&self, u: f64) -> f64 {
        match self {
            ScoreModel::SuperGaussian => -log_cosh(u) - std::f64::consts::PI.ln(),
            ScoreModel::SubGaussian => -0.25 * u.powi(4) - Self::sub_gaussian_log_norm(),
        }
    }

    /// `φ(u) = -d/du log p(u)`.
    pub fn score(&self, u: f64) -> f64 {
        match self {
            ScoreModel::SuperGaussian => u.tanh(),
            ScoreModel::SubGaussian => u * u * u,
        }
    }

    /// `log ∫ exp(-u⁴/4) du = log(Γ(1/4) / √2)`.
    pub fn sub_gaussian_log_norm() -> f64 {
        (GAMMA_QUARTER / std::f64::consts::SQRT_2).ln()
    }

    /// Log density and score together, sharing one exponential.
    #[inline]
    pub(crate) fn log_density_and_score(&self, u: f64) -> (f64, f64) {
        match self {
            ScoreModel::SuperGaussian => {
                let a = u.abs();
                let e = (-2.0 * a).exp();
                let lc = a + e.ln_1p() - std::f64::consts::LN_2;
                let t = (1.0 - e) / (1.0 + e);
                (-lc - std::f64::consts::PI.ln(), t.copysign(u))
            }
            ScoreModel::SubGaussian => {
                let u3 = u * u * u;
                (-0.25 * u3 * u - Self::sub_gaussian_log_norm(), u3)
            }
        }
    }

    /// Model matching the sign of an excess kurtosis.
    pub fn for_kurtosis(excess_kurtosis: f64) -> Self {
        if excess_kurtosis < 0.0 {
            ScoreModel::SubGaussian
        } else {
            ScoreModel::SuperGaussian
        }
    }
}

fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Source density hypothesis used by the contrast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePrior {
    SuperGaussian,
    SubGaussian,
    PerChannel(Vec<ScoreModel>),
    /// Re-selects each channel's model from the sign of its excess kurtosis
    /// at every iteration (extended-Infomax style).
    Adaptive,
}

impl SourcePrior {
    /// Fixed per-channel models, or `None` for [`SourcePrior::Adaptive`].
    pub fn fixed_models(&self, n: usize) -> Result<Option<Vec<ScoreModel>>> {
        match self {
            SourcePrior::SuperGaussian => Ok(Some(vec![ScoreModel::SuperGaussian; n])),
            SourcePrior::SubGaussian => Ok(Some(vec![ScoreModel::SubGaussian; n])),
            SourcePrior::PerChannel(v) if v.len() == n => Ok(Some(v.clone())),
            SourcePrior::PerChannel(v) => Err(Error::DimensionMismatch(format!(
                "{} per-channel priors for {n} channels",
                v.len()
            ))),
            SourcePrior::Adaptive => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub prior: SourcePrior,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iterations: 500,
            tolerance: 1e-6,
            seed: 0,
            prior: SourcePrior::Adaptive,
        }
    }
}

impl IcaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        Ok(())
    }
}

/// Fitted unmixing matrix `W` plus the whitener it operates after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixingMatrix {
    #[serde(with = "matrix_rows")]
    pub w: DMatrix<f64>,
    pub whitener: Whitener,
    pub fit_iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
    /// Score models in force at the end of the fit.
    pub models: Vec<ScoreModel>,
    /// Objective after each accepted step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
    /// Trace indices at which the adaptive prior switched a channel.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_switches: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl UnmixingMatrix {
    /// Wraps a given `W` and whitener without fitting (`fit_iterations` and
    /// `final_objective` are zero).
    pub fn from_parts(w: DMatrix<f64>, whitener: Whitener) -> Result<Self> {
        if !w.is_square() || w.nrows() != whitener.dim() {
            return Err(Error::DimensionMismatch(format!(
                "W is {}×{}, whitener has {} channels",
                w.nrows(),
                w.ncols(),
                whitener.dim()
            )));
        }
        if w.determinant().abs() <= 1e-12 {
            return Err(Error::Singular("unmixing matrix determinant ≈ 0".into()));
        }
        let n = w.nrows();
        Ok(Self {
            w,
            whitener,
            fit_iterations: 0,
            final_objective: 0.0,
            converged: true,
            models: vec![ScoreModel::SuperGaussian; n],
            objective_trace: Vec::new(),
            prior_switches: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// `W · V`: maps centred observations straight to sources.
    pub fn separation_matrix(&self) -> DMatrix<f64> {
        &self.w * &self.whitener.transform
    }

    /// `(W · V)⁻¹`, the estimated mixing matrix; column `i` is the sensor
    /// pattern of source `i`.
    pub fn mixing_estimate(&self) -> Result<DMatrix<f64>> {
        self.separation_matrix()
            .try_inverse()
            .ok_or_else(|| Error::Singular("W·V is not invertible".into()))
    }
}

/// `u(t) = W · V · (x(t) - mean)`.
pub fn separate(w: &UnmixingMatrix, x: &MultiChannelRecord) -> Result<MultiChannelRecord> {
    if x.channel_count() != w.dim() {
        return Err(Error::DimensionMismatch(format!(
            "unmixing matrix is {}×{}, record has {} channels",
            w.dim(),
            w.dim(),
            x.channel_count()
        )));
    }
    let centred: Vec<Vec<f64>> = x
        .channels()
        .iter()
        .zip(&w.whitener.mean)
        .map(|(c, m)| c.samples.iter().map(|v| v - m).collect())
        .collect();
    let u = apply_matrix(&w.separation_matrix(), &centred);
    let channels = u
        .into_iter()
        .enumerate()
        .map(|(i, s)| Channel::new(format!("u{i}"), s))
        .collect();
    MultiChannelRecord::new(x.sample_rate_hz(), channels)
}

/// Serde adapter: `DMatrix` as a row-major array of arrays.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).ok_or_else(|| D::Error::custom("ragged matrix rows"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        // Composite Simpson.
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn densities_integrate_to_one() {
        for m in [ScoreModel::SuperGaussian, ScoreModel::SubGaussian] {
            let total = quad(|u| m.log_density(u).exp(), -60.0, 60.0, 200_000);
            assert!((total - 1.0).abs() < 1e-8, "{m:?}: {total}");
        }
    }

    #[test]
    fn scores_are_odd_and_match_density_slope() {
        for m in [ScoreModel::SuperGaussian, ScoreModel::SubGaussian] {
            for u in [0.0, 0.3, 1.7, 4.0] {
                assert_eq!(m.score(-u), -m.score(u));
                let h = 1e-5;
                let fd = -(m.log_density(u + h) - m.log_density(u - h)) / (2.0 * h);
                assert!((fd - m.score(u)).abs() < 1e-6);
                let (lp, sc) = m.log_density_and_score(u);
                assert!((lp - m.log_density(u)).abs() < 1e-12);
                assert!((sc - m.score(u)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separate_identity_and_permutation() {
        let x = MultiChannelRecord::from_samples(1.0, vec![vec![1.0, 2.0, 6.0], vec![0.0, -1.0, 4.0]]).unwrap();
        let mean = vec![3.0, 1.0];
        let id = UnmixingMatrix::from_parts(DMatrix::identity(2, 2), Whitener::identity(mean.clone())).unwrap();
        let u = separate(&id, &x).unwrap();
        assert_eq!(u.samples(0), &[-2.0, -1.0, 3.0]);
        assert_eq!(u.samples(1), &[-1.0, -2.0, 3.0]);

        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let perm = UnmixingMatrix::from_parts(p, Whitener::identity(mean)).unwrap();
        let v = separate(&perm, &x).unwrap();
        assert_eq!(v.samples(0), u.samples(1));
        assert_eq!(v.samples(1), u.samples(0));

        let three = MultiChannelRecord::from_samples(1.0, vec![vec![0.0; 3]; 3]).unwrap();
        assert!(matches!(separate(&id, &three), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn from_parts_rejects_singular() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(UnmixingMatrix::from_parts(w, Whitener::identity(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn matrix_json_is_row_major() {
        let w = UnmixingMatrix::from_parts(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            Whitener::identity(vec![0.5, -0.5]),
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(&w).unwrap();
        assert_eq!(v["w"], serde_json::json!([[1.0, 2.0], [3.0, 4.0]]));
        let back: UnmixingMatrix = serde_json::from_value(v).unwrap();
        assert_eq!(back.w, w.w);
    }
}
