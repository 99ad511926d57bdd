//! Private label-prior estimation with the Laplace mechanism.
//!
//! Each class count receives independent `Lap(2/ε)` noise, is clamped at
//! zero, and the clamped counts are normalized over classes.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::types::{Label, PriorDistribution};

/// Sensitivity of the class histogram under a single label change.
pub const HISTOGRAM_SENSITIVITY: f64 = 2.0;

/// Inverse CDF of the zero-centered Laplace distribution.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let centered = u - 0.5;
    -scale * centered.signum() * (-2.0 * centered.abs()).ln_1p()
}

pub fn sample_laplace(scale: f64, stream: &mut RandomStream) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::NonpositiveScale(scale));
    }
    Ok(laplace_from_uniform(stream.next_open_uniform(), scale))
}

/// Raw and noisy class counts behind a prior estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramEstimate {
    pub raw_counts: Vec<u64>,
    /// Clamped at zero.
    pub noisy_counts: Vec<f64>,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorEstimate {
    pub prior: PriorDistribution,
    pub histogram: HistogramEstimate,
    /// Every noisy count clamped to zero; the prior fell back to uniform.
    pub degenerate: bool,
}

pub fn laplace_scale(epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::NonpositiveEpsilon(epsilon));
    }
    Ok(HISTOGRAM_SENSITIVITY / epsilon)
}

pub fn class_counts(labels: &[Label], k: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; k];
    for &y in labels {
        match counts.get_mut(y) {
            Some(c) => *c += 1,
            None => return Err(Error::LabelOutOfRange { label: y, k }),
        }
    }
    Ok(counts)
}

fn finish(raw_counts: Vec<u64>, noisy_counts: Vec<f64>, scale: f64) -> Result<PriorEstimate> {
    let total: f64 = noisy_counts.iter().sum();
    let (prior, degenerate) = if total > 0.0 {
        (PriorDistribution::from_weights(&noisy_counts)?, false)
    } else {
        warn!("all noisy class counts clamped to zero; falling back to the uniform prior");
        (PriorDistribution::uniform(raw_counts.len())?, true)
    };
    Ok(PriorEstimate {
        prior,
        histogram: HistogramEstimate {
            raw_counts,
            noisy_counts,
            scale,
        },
        degenerate,
    })
}

/// Estimates the label prior of `labels` under budget `epsilon`.
///
/// Noise is drawn class by class in label order, so class `y` always consumes
/// the `y`-th draw of `stream`.
pub fn estimate_prior(
    labels: &[Label],
    epsilon: f64,
    k: usize,
    stream: &mut RandomStream,
) -> Result<PriorEstimate> {
    let scale = laplace_scale(epsilon)?;
    let raw = class_counts(labels, k)?;
    let noisy = raw
        .iter()
        .map(|&h| Ok((h as f64 + sample_laplace(scale, stream)?).max(0.0)))
        .collect::<Result<Vec<_>>>()?;
    finish(raw, noisy, scale)
}

/// The estimator with the noise term removed. Only for oracle comparisons.
#[cfg(feature = "test-hooks")]
pub fn estimate_prior_without_noise(labels: &[Label], epsilon: f64, k: usize) -> Result<PriorEstimate> {
    let scale = laplace_scale(epsilon)?;
    let raw = class_counts(labels, k)?;
    let noisy = raw.iter().map(|&h| h as f64).collect();
    finish(raw, noisy, scale)
}
