//! Regression error and agreement measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series is empty")]
    Empty,
    #[error("series lengths differ: {predicted} predicted vs {desired} desired")]
    LengthMismatch { predicted: usize, desired: usize },
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("correlation needs at least two points")]
    TooShort,
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
}

/// Predicted values `y` paired with desired values `d`.
#[derive(Clone, Copy, Debug)]
pub struct PairedSeries<'a> {
    predicted: &'a [f64],
    desired: &'a [f64],
}

impl<'a> PairedSeries<'a> {
    pub fn new(predicted: &'a [f64], desired: &'a [f64]) -> Result<Self, MetricsError> {
        if predicted.len() != desired.len() {
            return Err(MetricsError::LengthMismatch {
                predicted: predicted.len(),
                desired: desired.len(),
            });
        }
        if predicted.is_empty() {
            return Err(MetricsError::Empty);
        }
        if predicted.iter().chain(desired).any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        Ok(Self { predicted, desired })
    }

    pub fn predicted(&self) -> &'a [f64] {
        self.predicted
    }

    pub fn desired(&self) -> &'a [f64] {
        self.desired
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }
}

pub fn rmse(s: &PairedSeries<'_>) -> f64 {
    let sse: f64 = s
        .predicted
        .iter()
        .zip(s.desired)
        .map(|(y, d)| (y - d) * (y - d))
        .sum();
    (sse / s.len() as f64).sqrt()
}

/// Convenience wrapper validating raw slices.
pub fn rmse_of(predicted: &[f64], desired: &[f64]) -> Result<f64, MetricsError> {
    Ok(rmse(&PairedSeries::new(predicted, desired)?))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation coefficient.
pub fn correlation(s: &PairedSeries<'_>) -> Result<f64, MetricsError> {
    if s.len() < 2 {
        return Err(MetricsError::TooShort);
    }
    let my = mean(s.predicted);
    let md = mean(s.desired);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (y, d) in s.predicted.iter().zip(s.desired) {
        let dy = y - my;
        let dd = d - md;
        sxy += dy * dd;
        sxx += dy * dy;
        syy += dd * dd;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    // sqrt(sxx) * sqrt(syy) rather than sqrt(sxx * syy) avoids overflow
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn correlation_of(predicted: &[f64], desired: &[f64]) -> Result<f64, MetricsError> {
    correlation(&PairedSeries::new(predicted, desired)?)
}

pub fn r_squared(s: &PairedSeries<'_>) -> Result<f64, MetricsError> {
    correlation(s).map(|r| r * r)
}

/// Mean and population (divisor N) standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Result<Summary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Ok(Summary {
        mean: m,
        std: var.sqrt(),
    })
}
