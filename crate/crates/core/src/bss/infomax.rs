use nalgebra::DMatrix;
use rand_distr::{Distribution, Uniform};

use super::{apply_matrix, IcaConfig, ScoreModel, SourcePrior, UnmixingMatrix, Whitener};
use crate::error::{Error, Result};
use crate::signal_model::{stream_rng, MultiChannelRecord};

const STREAM_ICA_INIT: u64 = 5 << 32;
/// Size of the seeded perturbation added to the identity start.
const INIT_PERTURBATION: f64 = 0.01;
/// Kurtosis must cross zero by this much before the adaptive prior flips.
const SWITCH_MARGIN: f64 = 0.02;
/// Accepted steps required after the last prior switch before convergence.
const SETTLE_STEPS: usize = 10;
/// Accepted steps a channel keeps a newly chosen model before it may switch
/// back.
const MIN_DWELL_STEPS: usize = 50;
const MAX_HALVINGS: usize = 40;
/// Covariance distance from identity above which the input is flagged as
/// not whitened.
const WHITENESS_TOLERANCE: f64 = 0.05;

fn channels_of(x: &MultiChannelRecord) -> Vec<Vec<f64>> {
    x.channels().iter().map(|c| c.samples.clone()).collect()
}

fn excess_kurtosis(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let m = u.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in u {
        let d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

fn resolve_models(prior: &SourcePrior, u: &[Vec<f64>]) -> Result<Vec<ScoreModel>> {
    Ok(match prior.fixed_models(u.len())? {
        Some(m) => m,
        None => u.iter().map(|c| ScoreModel::for_kurtosis(excess_kurtosis(c))).collect(),
    })
}

fn check_square(w: &DMatrix<f64>, x: &MultiChannelRecord) -> Result<()> {
    if !w.is_square() || w.nrows() != x.channel_count() {
        return Err(Error::DimensionMismatch(format!(
            "W is {}×{}, record has {} channels",
            w.nrows(),
            w.ncols(),
            x.channel_count()
        )));
    }
    Ok(())
}

/// `log |det W|`.
pub fn log_det_term(w: &DMatrix<f64>) -> Result<f64> {
    let det = w.determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Singular(format!("det W = {det}")));
    }
    Ok(det.abs().ln())
}

/// `Σ_i mean_t log p_i(u_i(t))` with `u = W x`.
pub fn data_term(w: &DMatrix<f64>, x: &MultiChannelRecord, prior: &SourcePrior) -> Result<f64> {
    check_square(w, x)?;
    let u = apply_matrix(w, &channels_of(x));
    let models = resolve_models(prior, &u)?;
    Ok(mean_log_density(&u, &models))
}

fn mean_log_density(u: &[Vec<f64>], models: &[ScoreModel]) -> f64 {
    u.iter()
        .zip(models)
        .map(|(c, m)| c.iter().map(|&v| m.log_density(v)).sum::<f64>() / c.len() as f64)
        .sum()
}

/// The ML contrast `L(W) = Σ_i mean_t log p_i(u_i) + log |det W|`,
/// evaluated on whitened data. Larger is better.
pub fn log_likelihood(w: &DMatrix<f64>, x_whitened: &MultiChannelRecord, prior: &SourcePrior) -> Result<f64> {
    let logdet = log_det_term(w)?;
    Ok(data_term(w, x_whitened, prior)? + logdet)
}

/// `E[φ(u) vᵀ]` for channel-major `phi` and `v`.
fn cross_moment(phi: &[Vec<f64>], v: &[Vec<f64>]) -> DMatrix<f64> {
    let n = phi.len();
    let t = phi[0].len() as f64;
    DMatrix::from_fn(n, v.len(), |i, j| {
        phi[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum::<f64>() / t
    })
}

fn scores(u: &[Vec<f64>], models: &[ScoreModel]) -> Vec<Vec<f64>> {
    u.iter()
        .zip(models)
        .map(|(c, m)| c.iter().map(|&v| m.score(v)).collect())
        .collect()
}

/// Euclidean gradient `∂L/∂W = W⁻ᵀ - E[φ(u) xᵀ]`.
pub fn gradient(w: &DMatrix<f64>, x: &MultiChannelRecord, prior: &SourcePrior) -> Result<DMatrix<f64>> {
    check_square(w, x)?;
    let inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("W is not invertible".into()))?;
    let xs = channels_of(x);
    let u = apply_matrix(w, &xs);
    let models = resolve_models(prior, &u)?;
    Ok(inv.transpose() - cross_moment(&scores(&u, &models), &xs))
}

/// Natural (relative) gradient `(I - E[φ(u) uᵀ]) W`, which equals
/// `∂L/∂W · Wᵀ W`.
pub fn natural_gradient(w: &DMatrix<f64>, x: &MultiChannelRecord, prior: &SourcePrior) -> Result<DMatrix<f64>> {
    check_square(w, x)?;
    let u = apply_matrix(w, &channels_of(x));
    let models = resolve_models(prior, &u)?;
    let n = w.nrows();
    Ok((DMatrix::identity(n, n) - cross_moment(&scores(&u, &models), &u)) * w)
}

/// Working state of one fit: current `W`, its outputs and scores.
struct Evaluation {
    w: DMatrix<f64>,
    u: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    objective: f64,
}

fn evaluate(w: DMatrix<f64>, x: &[Vec<f64>], models: &[ScoreModel]) -> Result<Evaluation> {
    let logdet = log_det_term(&w)?;
    let u = apply_matrix(&w, x);
    let t = x[0].len() as f64;
    let mut data = 0.0;
    let phi = u
        .iter()
        .zip(models)
        .map(|(c, m)| {
            let mut acc = 0.0;
            let p = c
                .iter()
                .map(|&v| {
                    let (lp, s) = m.log_density_and_score(v);
                    acc += lp;
                    s
                })
                .collect();
            data += acc / t;
            p
        })
        .collect();
    Ok(Evaluation {
        w,
        u,
        phi,
        objective: data + logdet,
    })
}

fn covariance_distance_from_identity(x: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let t = x[0].len() as f64;
    let means: Vec<f64> = x.iter().map(|c| c.iter().sum::<f64>() / t).collect();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = x[i]
                .iter()
                .zip(&x[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum::<f64>()
                / t;
            let target = if i == j { 1.0 } else { 0.0 };
            s += (c - target).powi(2);
        }
    }
    s.sqrt()
}

/// Fits `W` on whitened data by natural-gradient ascent of the ML contrast.
///
/// Each step proposes `W + η (I - E[φ(u)uᵀ]) W`; a proposal that lowers the
/// contrast is retried with `η` halved, so every accepted step is an ascent
/// under the score models in force. After an accepted step `η` grows back
/// by 10% toward the configured learning rate. The fit stops when
/// `learning_rate · ‖(I - E[φ(u)uᵀ]) W‖_F` drops below the tolerance; running
/// out of iterations returns the current matrix with `converged = false`.
///
/// With [`SourcePrior::Adaptive`] each channel's model follows the sign of
/// its excess kurtosis, with a small switching margin and a minimum dwell
/// after each switch. Convergence is only declared once the models have been
/// stable for a few accepted steps.
pub fn ica_fit(x_whitened: &MultiChannelRecord, cfg: &IcaConfig) -> Result<UnmixingMatrix> {
    cfg.validate()?;
    let n = x_whitened.channel_count();
    if x_whitened.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            actual: x_whitened.len(),
        });
    }
    let x = channels_of(x_whitened);
    let mut warnings = Vec::new();
    let dist = covariance_distance_from_identity(&x);
    if dist > WHITENESS_TOLERANCE {
        warnings.push(format!(
            "input covariance is {dist:.3} (Frobenius) from identity; whiten before fitting"
        ));
    }

    let mut rng = stream_rng(cfg.seed, STREAM_ICA_INIT);
    let jitter = Uniform::new_inclusive(-INIT_PERTURBATION, INIT_PERTURBATION).expect("static bounds");
    let w0 = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| jitter.sample(&mut rng));

    let adaptive = matches!(cfg.prior, SourcePrior::Adaptive);
    let u0 = apply_matrix(&w0, &x);
    let mut models = resolve_models(&cfg.prior, &u0)?;
    let mut current = evaluate(w0, &x, &models)?;
    let mut eta = cfg.learning_rate;
    let mut trace = Vec::new();
    let mut switches = Vec::new();
    let mut since_switch = 0usize;
    let mut last_switch = vec![0usize; n];
    let mut converged = false;
    let mut iterations = 0;
    let identity = DMatrix::<f64>::identity(n, n);

    while iterations < cfg.max_iterations {
        iterations += 1;
        let direction = (&identity - cross_moment(&current.phi, &current.u)) * &current.w;
        let nominal = cfg.learning_rate * direction.norm();
        if nominal < cfg.tolerance && since_switch >= SETTLE_STEPS.min(iterations - 1) {
            converged = true;
            break;
        }

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &current.w + &direction * eta;
            match evaluate(candidate, &x, &models) {
                Ok(e) if e.objective >= current.objective => {
                    accepted = Some(e);
                    break;
                }
                _ => eta *= 0.5,
            }
        }
        let Some(next) = accepted else {
            // No ascent possible along the natural gradient: a stationary point.
            converged = nominal < cfg.tolerance.sqrt();
            break;
        };
        current = next;
        trace.push(current.objective);
        eta = (eta * 1.1).min(cfg.learning_rate);
        since_switch += 1;

        if adaptive {
            let mut changed = false;
            for ((m, c), last) in models.iter_mut().zip(&current.u).zip(last_switch.iter_mut()) {
                if trace.len() < *last + MIN_DWELL_STEPS {
                    continue;
                }
                let k = excess_kurtosis(c);
                let want = match *m {
                    ScoreModel::SuperGaussian if k < -SWITCH_MARGIN => ScoreModel::SubGaussian,
                    ScoreModel::SubGaussian if k > SWITCH_MARGIN => ScoreModel::SuperGaussian,
                    other => other,
                };
                if want != *m {
                    changed = true;
                    *last = trace.len();
                }
                *m = want;
            }
            if changed {
                switches.push(trace.len());
                since_switch = 0;
                current = evaluate(current.w, &x, &models)?;
            }
        }
    }

    let n_whitened = x_whitened.channel_count();
    let whitener = Whitener::identity(vec![0.0; n_whitened]);
    Ok(UnmixingMatrix {
        w: current.w,
        whitener,
        fit_iterations: iterations,
        final_objective: current.objective,
        converged,
        models,
        objective_trace: trace,
        prior_switches: switches,
        warnings,
    })
}
