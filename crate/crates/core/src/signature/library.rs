use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};

pub const LIBRARY_FORMAT: &str = "motorsig-signature-library";
pub const LIBRARY_VERSION: u32 = 1;
/// Floor applied to per-feature normalization scales.
pub const MIN_NORMALIZATION: f64 = 1e-9;

fn format_tag() -> String {
    LIBRARY_FORMAT.to_string()
}

/// One known fault class.
///
/// Distances to the template are taken over `active_features` only, each
/// feature divided by the library normalization. An empty `active_features`
/// list means every feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSignature {
    pub label: String,
    pub template: Vec<f64>,
    pub tolerance_radius: f64,
    #[serde(default)]
    pub active_features: Vec<usize>,
    /// Nearest out-of-class over farthest in-class calibration distance;
    /// above 1 means the calibration corpus was separable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_margin: Option<f64>,
}

impl FaultSignature {
    pub fn new(label: impl Into<String>, template: Vec<f64>, tolerance_radius: f64) -> Self {
        Self {
            label: label.into(),
            template,
            tolerance_radius,
            active_features: Vec::new(),
            calibration_margin: None,
        }
    }

    fn distance(&self, v: &[f64], normalization: &[f64]) -> f64 {
        let term = |j: usize| ((v[j] - self.template[j]) / normalization[j]).powi(2);
        if self.active_features.is_empty() {
            (0..v.len()).map(term).sum::<f64>().sqrt()
        } else {
            self.active_features.iter().map(|&j| term(j)).sum::<f64>().sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureLibrary {
    #[serde(default = "format_tag")]
    pub format: String,
    pub version: u32,
    /// Feature names, in vector order.
    pub schema: Vec<String>,
    pub normalization: Vec<f64>,
    pub entries: Vec<FaultSignature>,
}

impl SignatureLibrary {
    pub fn new(schema: Vec<String>, normalization: Vec<f64>, entries: Vec<FaultSignature>) -> Result<Self> {
        let lib = Self {
            format: format_tag(),
            version: LIBRARY_VERSION,
            schema,
            normalization,
            entries,
        };
        lib.validate()?;
        Ok(lib)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != LIBRARY_FORMAT {
            return Err(Error::param(
                "format",
                format!("expected `{LIBRARY_FORMAT}`, got `{}`", self.format),
            ));
        }
        let n = self.schema.len();
        if self.normalization.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} normalization scales for {n} features",
                self.normalization.len()
            )));
        }
        if self.normalization.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::param("normalization", "scales must be positive and finite"));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.label.as_str()) {
                return Err(Error::param("entries", format!("duplicate label `{}`", e.label)));
            }
            if e.template.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "template `{}` has {} entries, schema has {n}",
                    e.label,
                    e.template.len()
                )));
            }
            if !(e.tolerance_radius > 0.0) || !e.tolerance_radius.is_finite() {
                return Err(Error::param(
                    "tolerance_radius",
                    format!("`{}` needs a positive radius", e.label),
                ));
            }
            if e.active_features.iter().any(|&j| j >= n) {
                return Err(Error::param(
                    "active_features",
                    format!("`{}` indexes past the schema", e.label),
                ));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }

    fn check_schema(&self, v: &FeatureVector) -> Result<()> {
        if v.schema != self.schema {
            return Err(Error::DimensionMismatch(format!(
                "feature schema ({} entries) does not match library schema ({} entries)",
                v.len(),
                self.schema.len()
            )));
        }
        Ok(())
    }

    /// Normalized distance to every template, in entry order.
    pub fn distances(&self, v: &FeatureVector) -> Result<Vec<(String, f64)>> {
        self.check_schema(v)?;
        Ok(self
            .entries
            .iter()
            .map(|e| (e.label.clone(), e.distance(&v.values, &self.normalization)))
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lib: Self = serde_json::from_str(text).map_err(|e| Error::param("library", e.to_string()))?;
        if lib.version != LIBRARY_VERSION {
            return Err(Error::param(
                "version",
                format!(
                    "library version {} is not supported (expected {LIBRARY_VERSION})",
                    lib.version
                ),
            ));
        }
        lib.validate()?;
        Ok(lib)
    }
}

/// Labels whose template lies within its tolerance radius, best first.
///
/// Score is `exp(-d²)`. Equal scores order by label. At most `max_labels`
/// entries are returned; an empty list means no known fault matched.
pub fn classify(v: &FeatureVector, lib: &SignatureLibrary, max_labels: usize) -> Result<Vec<(String, f64)>> {
    let mut hits: Vec<(String, f64)> = lib
        .distances(v)?
        .into_iter()
        .zip(&lib.entries)
        .filter(|((_, d), e)| *d <= e.tolerance_radius)
        .map(|((label, d), _)| (label, (-d * d).exp()))
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    hits.truncate(max_labels);
    Ok(hits)
}

/// The closest template regardless of radius; `None` for an empty library.
pub fn nearest_template(v: &FeatureVector, lib: &SignatureLibrary) -> Result<Option<(String, f64)>> {
    Ok(lib
        .distances(v)?
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0))))
}

/// A labelled feature vector for building a library. No labels means healthy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub labels: Vec<String>,
    pub features: FeatureVector,
}

fn column_std(rows: &[&[f64]], j: usize) -> f64 {
    let n = rows.len() as f64;
    let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    (rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt()
}

struct Separation {
    in_max: f64,
    out_min: f64,
}

impl Separation {
    fn ratio(&self) -> f64 {
        if self.in_max <= 0.0 {
            if self.out_min > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            self.out_min / self.in_max
        }
    }
}

fn separation(z_in: &[Vec<f64>], z_out: &[Vec<f64>], features: &[usize]) -> Separation {
    let norm = |z: &Vec<f64>| features.iter().map(|&j| z[j] * z[j]).sum::<f64>().sqrt();
    Separation {
        in_max: z_in.iter().map(norm).fold(0.0, f64::max),
        out_min: z_out.iter().map(norm).fold(f64::INFINITY, f64::min),
    }
}

/// Builds a library from labelled feature vectors.
///
/// - normalization: per-feature standard deviation over the whole corpus,
///   floored at [`MIN_NORMALIZATION`];
/// - template: mean over samples carrying only that label (all samples
///   carrying it when there are no single-label ones);
/// - active features: grown greedily from the empty set, each time adding
///   the feature that most increases the ratio of the nearest out-of-class
///   distance to the farthest in-class distance, and stopping when no
///   feature improves it;
/// - tolerance radius: geometric mean of those two distances, or the
///   farthest in-class distance when the classes overlap.
///
/// "In-class" means every sample whose label set contains the label, so
/// multi-fault samples constrain each of their labels.
pub fn calibrate(samples: &[CalibrationSample]) -> Result<SignatureLibrary> {
    let first = samples
        .first()
        .ok_or_else(|| Error::param("samples", "calibration needs at least one sample"))?;
    let schema = first.features.schema.clone();
    if let Some(i) = samples.iter().position(|s| s.features.schema != schema) {
        return Err(Error::DimensionMismatch(format!(
            "calibration sample {i} has a different schema"
        )));
    }
    let n = schema.len();
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.values.as_slice()).collect();
    let normalization: Vec<f64> = (0..n).map(|j| column_std(&rows, j).max(MIN_NORMALIZATION)).collect();

    let labels: BTreeSet<&str> = samples
        .iter()
        .flat_map(|s| s.labels.iter().map(String::as_str))
        .collect();
    let mut entries = Vec::new();
    for label in labels {
        let has = |s: &CalibrationSample| s.labels.iter().any(|l| l == label);
        let singles: Vec<&[f64]> = samples
            .iter()
            .filter(|s| s.labels.len() == 1 && has(s))
            .map(|s| s.features.values.as_slice())
            .collect();
        let pool: Vec<&[f64]> = if singles.is_empty() {
            samples
                .iter()
                .filter(|s| has(s))
                .map(|s| s.features.values.as_slice())
                .collect()
        } else {
            singles
        };
        let template: Vec<f64> = (0..n)
            .map(|j| pool.iter().map(|r| r[j]).sum::<f64>() / pool.len() as f64)
            .collect();
        let z = |s: &CalibrationSample| -> Vec<f64> {
            (0..n)
                .map(|j| (s.features.values[j] - template[j]) / normalization[j])
                .collect()
        };
        let z_in: Vec<Vec<f64>> = samples.iter().filter(|s| has(s)).map(z).collect();
        let z_out: Vec<Vec<f64>> = samples.iter().filter(|s| !has(s)).map(z).collect();

        let (active, sep) = if z_out.is_empty() {
            let all: Vec<usize> = (0..n).collect();
            let sep = separation(&z_in, &z_out, &all);
            (all, sep)
        } else {
            let mut active: Vec<usize> = Vec::new();
            let mut best = Separation {
                in_max: 0.0,
                out_min: 0.0,
            };
            loop {
                let candidate = (0..n)
                    .filter(|j| !active.contains(j))
                    .map(|j| {
                        let mut trial = active.clone();
                        trial.push(j);
                        (j, separation(&z_in, &z_out, &trial))
                    })
                    .max_by(|a, b| a.1.ratio().total_cmp(&b.1.ratio()).then(b.0.cmp(&a.0)));
                match candidate {
                    Some((j, sep)) if active.is_empty() || sep.ratio() > best.ratio() * (1.0 + 1e-9) => {
                        active.push(j);
                        best = sep;
                    }
                    _ => break,
                }
            }
            active.sort_unstable();
            (active, best)
        };

        let radius = if sep.out_min.is_finite() && sep.out_min > sep.in_max {
            if sep.in_max > 0.0 {
                (sep.in_max * sep.out_min).sqrt()
            } else {
                0.5 * sep.out_min
            }
        } else if sep.in_max > 0.0 {
            sep.in_max
        } else {
            1.0
        };
        entries.push(FaultSignature {
            label: label.to_string(),
            template,
            tolerance_radius: radius,
            active_features: active,
            calibration_margin: Some(sep.ratio()).filter(|r| r.is_finite()),
        });
    }
    SignatureLibrary::new(schema, normalization, entries)
}
