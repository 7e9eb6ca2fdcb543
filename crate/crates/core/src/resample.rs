//! Block-average compression of long continuous traces, windowing of the
//! compressed surrogate, and block-replication reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousConfig {
    /// Longest surrogate modelled as a single window.
    pub max_surrogate_len: usize,
    pub window_len: usize,
    /// Explicit compression factor; derived with [`choose_factor`] when unset.
    pub factor: Option<usize>,
}

impl Default for ContinuousConfig {
    fn default() -> Self {
        Self {
            max_surrogate_len: 1000,
            window_len: 2000,
            factor: None,
        }
    }
}

impl ContinuousConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_surrogate_len == 0 {
            return Err(CoreError::Config("max_surrogate_len must be >= 1".into()));
        }
        if self.window_len < self.max_surrogate_len {
            return Err(CoreError::Config("window_len must be >= max_surrogate_len".into()));
        }
        if self.factor == Some(0) {
            return Err(CoreError::Config("factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn factor_for(&self, t: usize) -> usize {
        self.factor.unwrap_or_else(|| choose_factor(t, self.max_surrogate_len))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub values: Vec<f64>,
    pub factor: usize,
    pub original_len: usize,
}

pub fn downsample(x: &[f64], factor: usize) -> Result<Surrogate> {
    if factor == 0 {
        return Err(CoreError::Config("downsample factor must be >= 1".into()));
    }
    if x.len() < factor {
        return Err(CoreError::InsufficientData(format!(
            "series of length {} is shorter than factor {factor}",
            x.len()
        )));
    }
    let values = if factor == 1 {
        x.to_vec()
    } else {
        // Offsetting by the first sample keeps constant blocks exact.
        x.chunks_exact(factor)
            .map(|b| b[0] + b.iter().map(|v| v - b[0]).sum::<f64>() / factor as f64)
            .collect()
    };
    Ok(Surrogate {
        values,
        factor,
        original_len: x.len(),
    })
}

/// Smallest `F >= 1` with `floor(t / F) <= u`.
pub fn choose_factor(t: usize, u: usize) -> usize {
    if t <= u {
        return 1;
    }
    // floor(t/F) <= u  <=>  t < (u+1)F  <=>  F > t/(u+1).
    t / (u + 1) + 1
}

/// Start offsets of the windows covering a series of length `len`.
///
/// Series no longer than `u` (or `w`) form one window. Otherwise windows of
/// length `w` start every `stride` samples and the last one is right-aligned.
pub fn window_starts(len: usize, u: usize, w: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 || w == 0 {
        return Err(CoreError::Config("window length and stride must be >= 1".into()));
    }
    if len <= u || len <= w {
        return Ok(vec![0]);
    }
    let last = len - w;
    let mut starts: Vec<usize> = (0..last).step_by(stride).collect();
    starts.push(last);
    Ok(starts)
}

pub fn make_windows(x: &[f64], u: usize, w: usize, stride: usize) -> Result<Vec<Vec<f64>>> {
    let starts = window_starts(x.len(), u, w, stride)?;
    let width = w.min(x.len());
    Ok(starts.iter().map(|&s| x[s..s + width].to_vec()).collect())
}

/// Reassembles windows generated at `starts`, averaging overlaps.
pub fn stitch(windows: &[Vec<f64>], starts: &[usize], len: usize) -> Result<Vec<f64>> {
    if windows.len() != starts.len() {
        return Err(CoreError::Shape("window and start counts differ".into()));
    }
    let mut sum = vec![0.0; len];
    let mut count = vec![0usize; len];
    for (win, &s) in windows.iter().zip(starts) {
        for (i, &v) in win.iter().enumerate() {
            if let Some(slot) = sum.get_mut(s + i) {
                *slot += v;
                count[s + i] += 1;
            }
        }
    }
    if let Some(i) = count.iter().position(|&c| c == 0) {
        return Err(CoreError::Shape(format!("sample {i} is not covered by any window")));
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
}

/// Repeats each value `factor` times, then crops to `t` or pads with the
/// final value.
pub fn reconstruct(y: &[f64], factor: usize, t: usize) -> Result<Vec<f64>> {
    let last = *y
        .last()
        .ok_or_else(|| CoreError::NoData("nothing to reconstruct".into()))?;
    if factor == 0 {
        return Err(CoreError::Config("reconstruct factor must be >= 1".into()));
    }
    let mut out: Vec<f64> = y
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, factor))
        .take(t)
        .collect();
    out.resize(t, last);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_examples() {
        assert_eq!(downsample(&[1.0, 3.0, 5.0, 7.0], 2).unwrap().values, vec![2.0, 6.0]);
        assert_eq!(downsample(&[1.0, 2.0], 1).unwrap().values, vec![1.0, 2.0]);
        assert_eq!(downsample(&[1.0, 3.0, 5.0], 2).unwrap().values, vec![2.0]);
        assert!(downsample(&[1.0], 2).is_err());
    }

    #[test]
    fn factor_examples() {
        assert_eq!(choose_factor(1000, 1000), 1);
        assert_eq!(choose_factor(10000, 1000), 10);
        assert_eq!(choose_factor(10001, 1000), 10);
        assert_eq!(choose_factor(11000, 1000), 11);
        assert_eq!(choose_factor(11011, 1000), 12);
    }

    #[test]
    fn window_examples() {
        assert_eq!(window_starts(900, 1000, 2000, 1000).unwrap(), vec![0]);
        assert_eq!(window_starts(2000, 1000, 2000, 1000).unwrap(), vec![0]);
        assert_eq!(window_starts(5000, 1000, 2000, 1000).unwrap(), vec![0, 1000, 2000, 3000]);
        assert_eq!(window_starts(4500, 1000, 2000, 1000).unwrap(), vec![0, 1000, 2000, 2500]);
    }

    #[test]
    fn stitch_averages_overlaps() {
        let out = stitch(&[vec![1.0, 1.0, 1.0], vec![3.0, 3.0, 3.0]], &[0, 2], 5).unwrap();
        assert_eq!(out, vec![1.0, 1.0, 2.0, 3.0, 3.0]);
        assert!(stitch(&[vec![1.0]], &[0], 2).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        assert_eq!(reconstruct(&[2.0, 6.0], 2, 4).unwrap(), vec![2.0, 2.0, 6.0, 6.0]);
        assert_eq!(reconstruct(&[5.0], 3, 5).unwrap(), vec![5.0; 5]);
        assert_eq!(reconstruct(&[1.0, 2.0], 3, 4).unwrap(), vec![1.0, 1.0, 1.0, 2.0]);
    }
}
