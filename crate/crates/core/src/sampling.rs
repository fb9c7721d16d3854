//! Seeded non-parametric noise.
//!
//! Every source of randomness in the crate goes through [`draw_noise`], which
//! is a pure function of `(spec, seed, dimension)`. Streams that must stay
//! independent (planning noise vs. executed noise, one stream per obstacle)
//! get their own seed from [`derive_seed`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::check_count;
use crate::{Error, Result, Vec2};

/// Sample count used when a noise spec does not set one.
pub const DEFAULT_SAMPLE_COUNT: usize = 25;

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// One Gaussian component of a mixture. `mean` and `spread` hold one entry
/// per dimension, or a single entry broadcast to every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub spread: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseModel {
    Gaussian { mean: Vec<f64>, spread: Vec<f64> },
    GaussianMixture { components: Vec<MixtureComponent> },
    Uniform { low: Vec<f64>, high: Vec<f64> },
    /// Raw samples read from a text file, one sample per line with
    /// whitespace-separated components. Draws resample lines with
    /// replacement.
    ExternalSamples { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub model: NoiseModel,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLE_COUNT
}

impl NoiseSpec {
    /// Point mass at the origin.
    pub fn zero(samples: usize) -> Self {
        NoiseSpec {
            model: NoiseModel::Gaussian {
                mean: vec![0.0],
                spread: vec![0.0],
            },
            samples,
        }
    }

    pub fn gaussian(mean: Vec<f64>, spread: Vec<f64>, samples: usize) -> Self {
        NoiseSpec {
            model: NoiseModel::Gaussian { mean, spread },
            samples,
        }
    }

    pub fn uniform(low: Vec<f64>, high: Vec<f64>, samples: usize) -> Self {
        NoiseSpec {
            model: NoiseModel::Uniform { low, high },
            samples,
        }
    }

    pub fn mixture(components: Vec<MixtureComponent>, samples: usize) -> Self {
        NoiseSpec {
            model: NoiseModel::GaussianMixture { components },
            samples,
        }
    }

    /// Checks the invariants for a draw of the given dimension. Errors name
    /// the offending field.
    pub fn validate(&self, dimension: usize) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("samples", "sample count must be at least 1"));
        }
        match &self.model {
            NoiseModel::Gaussian { mean, spread } => {
                check_params("mean", mean, dimension)?;
                check_params("spread", spread, dimension)?;
                check_non_negative("spread", spread)
            }
            NoiseModel::GaussianMixture { components } => {
                if components.is_empty() {
                    return Err(Error::config("components", "mixture has no components"));
                }
                let mut total = 0.0;
                for c in components {
                    if !(c.weight >= 0.0) || !c.weight.is_finite() {
                        return Err(Error::config(
                            "components.weight",
                            format!("weight {} is negative or not finite", c.weight),
                        ));
                    }
                    total += c.weight;
                    check_params("components.mean", &c.mean, dimension)?;
                    check_params("components.spread", &c.spread, dimension)?;
                    check_non_negative("components.spread", &c.spread)?;
                }
                if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(Error::config(
                        "components.weight",
                        format!("mixture weights sum to {total}, expected 1"),
                    ));
                }
                Ok(())
            }
            NoiseModel::Uniform { low, high } => {
                check_params("low", low, dimension)?;
                check_params("high", high, dimension)?;
                for k in 0..dimension {
                    if param(low, k) > param(high, k) {
                        return Err(Error::config("low", "lower bound exceeds upper bound"));
                    }
                }
                Ok(())
            }
            NoiseModel::ExternalSamples { path } => {
                let rows = load_rows(path)?;
                if rows.is_empty() {
                    return Err(Error::config("path", "external sample file is empty"));
                }
                for (line, row) in &rows {
                    if row.len() != dimension {
                        return Err(Error::Parse {
                            path: path.clone(),
                            line: *line,
                            reason: format!("expected {dimension} components, found {}", row.len()),
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Resolves a relative external-samples path against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let NoiseModel::ExternalSamples { path } = &mut self.model {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

fn check_params(field: &str, values: &[f64], dimension: usize) -> Result<()> {
    if values.len() != 1 && values.len() != dimension {
        return Err(Error::config(
            field,
            format!("expected 1 or {dimension} entries, found {}", values.len()),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(field, "entries must be finite"));
    }
    Ok(())
}

fn check_non_negative(field: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|&v| v < 0.0) {
        return Err(Error::config(field, "spreads must be non-negative"));
    }
    Ok(())
}

fn param(values: &[f64], k: usize) -> f64 {
    if values.len() == 1 {
        values[0]
    } else {
        values[k]
    }
}

/// A weighted empirical distribution. Weights are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSamples<T> {
    values: Vec<T>,
    weights: Vec<f64>,
}

impl<T> WeightedSamples<T> {
    pub fn new(values: Vec<T>, weights: Vec<f64>) -> Result<Self> {
        check_count("weighted samples", values.len(), weights.len())?;
        validate_weights(&weights)?;
        Ok(WeightedSamples { values, weights })
    }

    /// Uniform weights `1/n`. Panics on an empty set.
    pub fn uniform(values: Vec<T>) -> Self {
        assert!(!values.is_empty(), "weighted sample set must be non-empty");
        let n = values.len();
        WeightedSamples {
            weights: vec![1.0 / n as f64; n],
            values,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.values.iter().zip(self.weights.iter().copied())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> WeightedSamples<U> {
        WeightedSamples {
            values: self.values.iter().map(f).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<f64>) {
        (self.values, self.weights)
    }
}

impl WeightedSamples<f64> {
    pub fn mean(&self) -> f64 {
        self.iter().map(|(v, w)| v * w).sum()
    }

    /// Weighted population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(v, w)| w * (v - m).powi(2)).sum()
    }
}

impl WeightedSamples<Vec2> {
    pub fn mean(&self) -> Vec2 {
        self.iter().fold(Vec2::zeros(), |acc, (v, w)| acc + v * w)
    }
}

pub(crate) fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::config("weights", "sample set must be non-empty"));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::config("weights", "weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::config("weights", format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Draws `spec.samples` samples of the given dimension with uniform weights.
/// Identical `(spec, seed, dimension)` always give identical output.
pub fn draw_noise(spec: &NoiseSpec, seed: u64, dimension: usize) -> Result<WeightedSamples<Vec<f64>>> {
    if dimension == 0 {
        return Err(Error::config("dimension", "dimension must be at least 1"));
    }
    spec.validate(dimension)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.samples;
    let values: Vec<Vec<f64>> = match &spec.model {
        NoiseModel::Gaussian { mean, spread } => (0..n)
            .map(|_| gaussian_row(&mut rng, mean, spread, dimension))
            .collect(),
        NoiseModel::GaussianMixture { components } => {
            let picker = WeightedIndex::new(components.iter().map(|c| c.weight))
                .map_err(|e| Error::config("components.weight", e.to_string()))?;
            (0..n)
                .map(|_| {
                    let c = &components[picker.sample(&mut rng)];
                    gaussian_row(&mut rng, &c.mean, &c.spread, dimension)
                })
                .collect()
        }
        NoiseModel::Uniform { low, high } => (0..n)
            .map(|_| {
                (0..dimension)
                    .map(|k| {
                        let (lo, hi) = (param(low, k), param(high, k));
                        lo + (hi - lo) * rng.random::<f64>()
                    })
                    .collect()
            })
            .collect(),
        NoiseModel::ExternalSamples { path } => {
            let rows = load_external_samples(path)?;
            (0..n)
                .map(|_| rows[rng.random_range(0..rows.len())].clone())
                .collect()
        }
    };
    Ok(WeightedSamples::uniform(values))
}

fn gaussian_row(rng: &mut ChaCha8Rng, mean: &[f64], spread: &[f64], dimension: usize) -> Vec<f64> {
    (0..dimension)
        .map(|k| {
            let z: f64 = rng.sample(StandardNormal);
            param(mean, k) + param(spread, k) * z
        })
        .collect()
}

pub fn draw_scalar(spec: &NoiseSpec, seed: u64) -> Result<WeightedSamples<f64>> {
    let (values, weights) = draw_noise(spec, seed, 1)?.into_parts();
    WeightedSamples::new(values.into_iter().map(|v| v[0]).collect(), weights)
}

pub fn draw_planar(spec: &NoiseSpec, seed: u64) -> Result<WeightedSamples<Vec2>> {
    let (values, weights) = draw_noise(spec, seed, 2)?.into_parts();
    WeightedSamples::new(values.into_iter().map(|v| Vec2::new(v[0], v[1])).collect(), weights)
}

/// Reads an external-samples file: one sample per line, whitespace-separated
/// decimal components. Blank lines and lines starting with `#` are skipped.
pub fn load_external_samples(path: &Path) -> Result<Vec<Vec<f64>>> {
    Ok(load_rows(path)?.into_iter().map(|(_, row)| row).collect())
}

/// Sample rows with their 1-based line numbers in the file.
fn load_rows(path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("`{tok}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((i + 1, row));
    }
    Ok(rows)
}

/// Mixes a base seed with a stream tag and an index (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
