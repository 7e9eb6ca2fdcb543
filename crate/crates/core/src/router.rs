//! Rule-based routing of devices into continuous and intermittent classes.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    /// Length of the prefix inspected for initial inactivity.
    pub prefix_len: usize,
    pub occupancy_threshold: f64,
    pub derivative_variance_threshold: f64,
    pub smoothing_window: usize,
    /// Divide the squared deviations of the `T - 1` differences by `T - 1`
    /// instead of `T - 2`.
    pub population_variance: bool,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            prefix_len: 100,
            occupancy_threshold: 0.7,
            derivative_variance_threshold: 0.1,
            smoothing_window: 7,
            population_variance: true,
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prefix_len == 0 {
            return Err(CoreError::Config("prefix_len must be >= 1".into()));
        }
        if !(self.occupancy_threshold > 0.0 && self.occupancy_threshold < 1.0) {
            return Err(CoreError::Config("occupancy_threshold must lie in (0, 1)".into()));
        }
        if !(self.derivative_variance_threshold > 0.0) || !self.derivative_variance_threshold.is_finite() {
            return Err(CoreError::Config("derivative_variance_threshold must be positive".into()));
        }
        if self.smoothing_window == 0 || self.smoothing_window % 2 == 0 {
            return Err(CoreError::Config("smoothing_window must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingStats {
    pub r0: bool,
    pub p_nz: f64,
    pub var_smoothed_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Continuous,
    Intermittent,
}

impl DeviceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceClass::Continuous => "continuous",
            DeviceClass::Intermittent => "intermittent",
        }
    }
}

impl std::fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Centered moving average (window shrinks symmetrically near the ends),
/// followed by first differences. Output length is `x.len() - 1`.
pub fn smoothed_diff(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(CoreError::InsufficientData(format!(
            "smoothed difference needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if window == 0 || window % 2 == 0 {
        return Err(CoreError::Config(format!("smoothing window {window} is not odd")));
    }
    let n = x.len();
    let half = window / 2;
    let smooth: Vec<f64> = (0..n)
        .map(|t| {
            let r = half.min(t).min(n - 1 - t);
            let w = &x[t - r..=t + r];
            // Averaging offsets from the centre keeps constant runs exact.
            x[t] + w.iter().map(|v| v - x[t]).sum::<f64>() / w.len() as f64
        })
        .collect();
    Ok(smooth.windows(2).map(|w| w[1] - w[0]).collect())
}

pub fn routing_stats(x: &[f64], cfg: &RoutingConfig) -> Result<RoutingStats> {
    let t = x.len();
    let diffs = smoothed_diff(x, cfg.smoothing_window)?;
    let r0 = x[..cfg.prefix_len.min(t)].iter().all(|&v| v == 0.0);
    let p_nz = x.iter().filter(|&&v| v != 0.0).count() as f64 / t as f64;
    let m = diffs.len();
    let mean = diffs.iter().sum::<f64>() / m as f64;
    let ss: f64 = diffs.iter().map(|d| (d - mean).powi(2)).sum();
    let divisor = if cfg.population_variance { m } else { m.saturating_sub(1) };
    let var_smoothed_diff = if divisor == 0 { 0.0 } else { ss / divisor as f64 };
    Ok(RoutingStats {
        r0,
        p_nz,
        var_smoothed_diff,
    })
}

pub fn classify(stats: &RoutingStats, cfg: &RoutingConfig) -> DeviceClass {
    let steady = stats.p_nz > cfg.occupancy_threshold
        && stats.var_smoothed_diff < cfg.derivative_variance_threshold;
    if stats.r0 || steady {
        DeviceClass::Continuous
    } else {
        DeviceClass::Intermittent
    }
}

/// Convenience wrapper returning both the statistics and the class.
pub fn route(x: &[f64], cfg: &RoutingConfig) -> Result<(RoutingStats, DeviceClass)> {
    let stats = routing_stats(x, cfg)?;
    Ok((stats, classify(&stats, cfg)))
}
