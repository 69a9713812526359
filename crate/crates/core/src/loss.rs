//! Huber loss, its derivative, regression error metrics and the Sørensen–Dice
//! overlap index used to score label removal.

use std::collections::BTreeSet;

use crate::error::{HlrError, Result};

/// Transition point between the quadratic and linear branches of the Huber loss.
///
/// Always strictly positive. [`HuberThreshold::INFINITE`] stands for the
/// purely quadratic limit and is only used for the initial solve.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HuberThreshold(f64);

impl HuberThreshold {
    pub const INFINITE: HuberThreshold = HuberThreshold(f64::INFINITY);

    pub fn new(xi: f64) -> Result<Self> {
        if !xi.is_finite() || xi <= 0.0 {
            return Err(HlrError::domain(format!(
                "Huber threshold must be finite and positive, got {xi}"
            )));
        }
        Ok(HuberThreshold(xi))
    }

    /// Accepts `+inf` in addition to finite positive values.
    pub fn new_or_infinite(xi: f64) -> Result<Self> {
        if xi == f64::INFINITY {
            Ok(Self::INFINITE)
        } else {
            Self::new(xi)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

fn check_finite(y: f64) -> Result<()> {
    if y.is_finite() {
        Ok(())
    } else {
        Err(HlrError::domain(format!("loss argument must be finite, got {y}")))
    }
}

/// `y²/2` inside `[-xi, xi]`, `xi·|y| − xi²/2` outside.
pub fn huber(xi: HuberThreshold, y: f64) -> Result<f64> {
    check_finite(y)?;
    let a = y.abs();
    if a <= xi.0 {
        Ok(0.5 * y * y)
    } else {
        Ok(xi.0 * a - 0.5 * xi.0 * xi.0)
    }
}

/// Derivative of [`huber`]: the identity clamped to `[-xi, xi]`.
pub fn huber_deriv(xi: HuberThreshold, y: f64) -> Result<f64> {
    check_finite(y)?;
    Ok(y.clamp(-xi.0, xi.0))
}

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(HlrError::dimension(format!(
            "metric inputs differ in length: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(HlrError::domain("metric over an empty vector"));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let sum: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p).abs()).sum();
    Ok(sum / truth.len() as f64)
}

/// Mean squared error.
pub fn mse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let sum: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(sum / truth.len() as f64)
}

/// Mean relative error `(1/n) Σ |y − ŷ| / |y|`.
///
/// Fails with [`HlrError::Divergence`] as soon as a target is exactly zero
/// instead of silently skipping it.
pub fn mre(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(truth, pred)?;
    let mut sum = 0.0;
    for (index, (y, p)) in truth.iter().zip(pred).enumerate() {
        if *y == 0.0 {
            return Err(HlrError::Divergence { index });
        }
        sum += (y - p).abs() / y.abs();
    }
    Ok(sum / truth.len() as f64)
}

/// Sørensen–Dice overlap `2|C∩R| / (|C|+|R|)` between the truly corrupted
/// and the removed label indices. Two empty sets score 1.
pub fn dice(corrupted: &BTreeSet<usize>, removed: &BTreeSet<usize>) -> f64 {
    let total = corrupted.len() + removed.len();
    if total == 0 {
        return 1.0;
    }
    let common = corrupted.intersection(removed).count();
    2.0 * common as f64 / total as f64
}
