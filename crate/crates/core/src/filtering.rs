//! Moving-average smoothing of RSS streams.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("raw accuracy is zero; gain undefined")]
    UndefinedGain,
}

/// Trailing-window configuration; window counts samples, not time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub window: usize,
}

impl FilterConfig {
    pub fn new(window: usize) -> Result<Self, FilterError> {
        if window == 0 {
            return Err(FilterError::ZeroWindow);
        }
        Ok(Self { window })
    }

    /// Window 1: the identity filter (raw data).
    pub fn raw() -> Self {
        Self { window: 1 }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { window: 100 }
    }
}

/// Trailing moving average: `out[i] = mean(values[max(0, i-window+1) ..= i])`,
/// partial windows at the head, output length equals input length.
///
/// Each window is summed directly rather than maintained as a running sum so
/// long streams cannot accumulate rounding drift.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be >= 1");
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let lo = i + 1 - window.min(i + 1);
        let span = &values[lo..=i];
        out.push(span.iter().sum::<f64>() / span.len() as f64);
    }
    out
}

/// Relative accuracy change from filtering: `(filtered - raw) / raw`.
pub fn performance_gain(acc_filtered: f64, acc_raw: f64) -> Result<f64, FilterError> {
    if acc_raw <= 0.0 {
        return Err(FilterError::UndefinedGain);
    }
    Ok((acc_filtered - acc_raw) / acc_raw)
}
