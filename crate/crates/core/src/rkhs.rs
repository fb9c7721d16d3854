//! Maximum mean discrepancy between weighted sample sets under the
//! polynomial kernel `k(x, y) = (a·⟨x, y⟩ + l)^d`.
//!
//! With `l > 0` the kernel's feature map spans every monomial up to degree
//! `d`, so a zero discrepancy means the two sets agree on all moments up to
//! that order. Degree 1 only sees the means.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::sampling::WeightedSamples;
use crate::{Error, Result, Vec2};

/// Negative results above this are rounding noise and are clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub degree: u32,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "one")]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            degree: 3,
            scale: 1.0,
            offset: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn with_degree(degree: u32) -> Self {
        KernelConfig {
            degree,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::config("kernel.degree", "degree must be at least 1"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::config("kernel.scale", "scale must be positive"));
        }
        if !(self.offset >= 0.0) || !self.offset.is_finite() {
            return Err(Error::config("kernel.offset", "offset must be non-negative"));
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, inner: f64) -> f64 {
        (self.scale * inner + self.offset).powi(self.degree as i32)
    }
}

/// Sample types the kernel can consume.
pub trait KernelInput: Copy {
    fn inner(&self, other: &Self) -> f64;
    fn magnitude(&self) -> f64;
    fn scaled(&self, factor: f64) -> Self;
    fn total_cmp(&self, other: &Self) -> Ordering;
}

impl KernelInput for f64 {
    fn inner(&self, other: &Self) -> f64 {
        self * other
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn scaled(&self, factor: f64) -> Self {
        self / factor
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        f64::total_cmp(self, other)
    }
}

impl KernelInput for Vec2 {
    fn inner(&self, other: &Self) -> f64 {
        self.dot(other)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn scaled(&self, factor: f64) -> Self {
        self / factor
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.x.total_cmp(&other.x).then(self.y.total_cmp(&other.y))
    }
}

/// Gram matrix with entry `(i, j) = k(x_i, y_j)`. No rescaling is applied.
pub fn polynomial_gram<T: KernelInput>(x: &[T], y: &[T], cfg: &KernelConfig) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), y.len(), |i, j| cfg.eval(x[i].inner(&y[j])))
}

/// Squared MMD `αᵀK_xxα − 2αᵀK_xyβ + βᵀK_yyβ` with the sample weights as
/// `α`, `β`.
///
/// Both sets are divided by a shared factor `max(1, largest magnitude)` before
/// the kernel is applied so high degrees do not overflow; the factor is common
/// to both sets so the zero set of the discrepancy is unchanged. The result is
/// bitwise symmetric in its arguments.
pub fn mmd_squared<T: KernelInput>(x: &WeightedSamples<T>, y: &WeightedSamples<T>, cfg: &KernelConfig) -> f64 {
    let (first, second) = if canonical_order(x, y) == Ordering::Greater {
        (y, x)
    } else {
        (x, y)
    };
    let factor = shared_scale(first, second);
    let kff = weighted_kernel_sum(first, first, cfg, factor);
    let kss = weighted_kernel_sum(second, second, cfg, factor);
    let kfs = weighted_kernel_sum(first, second, cfg, factor);
    let raw = kff + kss - 2.0 * kfs;
    if raw < 0.0 && raw > -CLAMP_TOLERANCE {
        0.0
    } else {
        raw
    }
}

/// Unclamped, unscaled squared MMD computed from explicit Gram matrices.
/// Slow; kept as the reference path for tests and diagnostics.
pub fn mmd_squared_reference<T: KernelInput>(
    x: &WeightedSamples<T>,
    y: &WeightedSamples<T>,
    cfg: &KernelConfig,
) -> f64 {
    let a = nalgebra::DVector::from_column_slice(x.weights());
    let b = nalgebra::DVector::from_column_slice(y.weights());
    let kxx = (a.transpose() * polynomial_gram(x.values(), x.values(), cfg) * &a)[0];
    let kxy = (a.transpose() * polynomial_gram(x.values(), y.values(), cfg) * &b)[0];
    let kyy = (b.transpose() * polynomial_gram(y.values(), y.values(), cfg) * &b)[0];
    kxx - 2.0 * kxy + kyy
}

fn shared_scale<T: KernelInput>(x: &WeightedSamples<T>, y: &WeightedSamples<T>) -> f64 {
    x.values()
        .iter()
        .chain(y.values())
        .map(KernelInput::magnitude)
        .fold(1.0, f64::max)
}

fn weighted_kernel_sum<T: KernelInput>(
    x: &WeightedSamples<T>,
    y: &WeightedSamples<T>,
    cfg: &KernelConfig,
    factor: f64,
) -> f64 {
    let ys: Vec<T> = y.values().iter().map(|v| v.scaled(factor)).collect();
    x.iter()
        .map(|(xi, wi)| {
            let xi = xi.scaled(factor);
            let row: f64 = ys
                .iter()
                .zip(y.weights())
                .map(|(yj, wj)| wj * cfg.eval(xi.inner(yj)))
                .sum();
            wi * row
        })
        .sum()
}

fn canonical_order<T: KernelInput>(x: &WeightedSamples<T>, y: &WeightedSamples<T>) -> Ordering {
    x.len()
        .cmp(&y.len())
        .then_with(|| {
            x.values()
                .iter()
                .zip(y.values())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| {
            x.weights()
                .iter()
                .zip(y.weights())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(degree: u32, scale: f64, offset: f64) -> KernelConfig {
        KernelConfig { degree, scale, offset }
    }

    #[test]
    fn gram_examples() {
        assert_eq!(polynomial_gram(&[0.0], &[0.0], &cfg(3, 1.0, 1.0))[(0, 0)], 1.0);
        let g = polynomial_gram(&[1.0, 2.0], &[1.0], &cfg(1, 1.0, 0.0));
        assert_eq!((g.nrows(), g.ncols()), (2, 1));
        assert_eq!((g[(0, 0)], g[(1, 0)]), (1.0, 2.0));
        assert_eq!(polynomial_gram(&[1.0], &[2.0], &cfg(2, 1.0, 1.0))[(0, 0)], 9.0);
    }

    #[test]
    fn vector_gram_uses_dot_product() {
        let g = polynomial_gram(&[Vec2::new(1.0, 2.0)], &[Vec2::new(3.0, -1.0)], &cfg(2, 1.0, 1.0));
        assert_eq!(g[(0, 0)], 4.0);
    }

    #[test]
    fn mmd_examples() {
        let x = WeightedSamples::uniform(vec![0.0]);
        let y = WeightedSamples::uniform(vec![1.0]);
        // K_xx = 1, K_xy = 1, K_yy = 2
        assert_abs_diff_eq!(mmd_squared(&x, &y, &cfg(1, 1.0, 1.0)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mmd_squared_reference(&x, &y, &cfg(1, 1.0, 1.0)), 1.0, epsilon = 1e-12);

        let x = WeightedSamples::uniform(vec![0.0, 2.0]);
        let y = WeightedSamples::uniform(vec![1.0, 1.0]);
        assert_abs_diff_eq!(mmd_squared(&x, &y, &cfg(1, 1.0, 1.0)), 0.0, epsilon = 1e-9);
        assert!(mmd_squared(&x, &y, &cfg(2, 1.0, 1.0)) > 1e-6);
    }

    #[test]
    fn identical_sets_are_zero() {
        let x = WeightedSamples::new(vec![-3.0, 0.5, 7.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert_abs_diff_eq!(mmd_squared(&x, &x.clone(), &cfg(4, 1.0, 1.0)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rescaling_matches_reference_on_small_values() {
        // all magnitudes <= 1, so the shared factor is 1
        let x = WeightedSamples::uniform(vec![-0.4, 0.1, 0.9]);
        let y = WeightedSamples::new(vec![0.3, -0.8], vec![0.6, 0.4]).unwrap();
        let c = cfg(3, 0.7, 0.5);
        assert_abs_diff_eq!(mmd_squared(&x, &y, &c), mmd_squared_reference(&x, &y, &c), epsilon = 1e-12);
    }

    #[test]
    fn large_values_stay_finite() {
        let x = WeightedSamples::uniform(vec![-1e6, 2e6]);
        let y = WeightedSamples::uniform(vec![5e5]);
        let m = mmd_squared(&x, &y, &cfg(8, 1.0, 1.0));
        assert!(m.is_finite() && m > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0, 1.0, 1.0).validate().is_err());
        assert!(cfg(2, 0.0, 1.0).validate().is_err());
        assert!(cfg(2, 1.0, -0.1).validate().is_err());
        assert!(KernelConfig::default().validate().is_ok());
    }
}
