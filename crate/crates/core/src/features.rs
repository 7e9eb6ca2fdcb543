//! Segmentation, per-segment normalization and the 30-dimensional shape
//! feature map used for clustering and feature-space evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::spectrum::dominant_bin;

pub const SHAPE_SAMPLES: usize = 20;
pub const FEATURE_DIM: usize = 10 + SHAPE_SAMPLES;
/// Standard deviations below this are treated as zero.
pub const STD_FLOOR: f64 = 1e-12;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "mean", "std", "skewness", "kurtosis", "trend", "dominant_freq", "peak_count",
    "valley_count", "roughness", "energy", "shape_1", "shape_2", "shape_3", "shape_4",
    "shape_5", "shape_6", "shape_7", "shape_8", "shape_9", "shape_10", "shape_11",
    "shape_12", "shape_13", "shape_14", "shape_15", "shape_16", "shape_17", "shape_18",
    "shape_19", "shape_20",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub values: Vec<f64>,
    pub parent_device: String,
    pub index: usize,
}

/// Non-overlapping windows of length `len`; a trailing remainder is dropped.
pub fn segment(x: &[f64], len: usize, device: &str) -> Result<Vec<Segment>> {
    if len < 2 {
        return Err(CoreError::Config(format!("segment length must be >= 2, got {len}")));
    }
    Ok(x.chunks_exact(len)
        .enumerate()
        .map(|(index, w)| Segment {
            values: w.to_vec(),
            parent_device: device.to_string(),
            index,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSegment {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    // Offsetting by the first value keeps constant inputs exact.
    let x0 = x[0];
    x0 + x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64
}

fn population_var(x: &[f64], mu: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / x.len() as f64
}

/// Z-scores a segment with its own mean and population standard deviation.
pub fn normalize_segment(s: &[f64]) -> NormSegment {
    let mu = mean(s);
    let sigma = population_var(s, mu).sqrt();
    if sigma < STD_FLOOR {
        return NormSegment {
            values: vec![0.0; s.len()],
            mean: mu,
            std: 0.0,
        };
    }
    NormSegment {
        values: s.iter().map(|v| (v - mu) / sigma).collect(),
        mean: mu,
        std: sigma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn extract_features(s: &NormSegment) -> Result<FeatureVector> {
    let x = &s.values;
    let n = x.len();
    if n < 4 {
        return Err(CoreError::InsufficientData(format!(
            "features need at least 4 samples, got {n}"
        )));
    }
    let mut f = [0.0; FEATURE_DIM];
    let mu = mean(x);
    let var = population_var(x, mu);
    let sd = var.sqrt();
    f[0] = mu;
    f[1] = sd;
    if sd >= STD_FLOOR {
        let m3 = x.iter().map(|v| (v - mu).powi(3)).sum::<f64>() / n as f64;
        let m4 = x.iter().map(|v| (v - mu).powi(4)).sum::<f64>() / n as f64;
        f[2] = m3 / sd.powi(3);
        f[3] = m4 / (var * var);
    }

    let t_mean = (n - 1) as f64 / 2.0;
    let t_var = (n * n - 1) as f64 / 12.0;
    let cov = x
        .iter()
        .enumerate()
        .map(|(t, v)| (t as f64 - t_mean) * (v - mu))
        .sum::<f64>()
        / n as f64;
    f[4] = cov / t_var;
    f[5] = dominant_bin(x).unwrap_or(0) as f64;
    f[6] = x.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count() as f64;
    f[7] = x.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count() as f64;
    let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    f[8] = population_var(&diffs, mean(&diffs));
    f[9] = x.iter().map(|v| v * v).sum();
    for k in 0..SHAPE_SAMPLES {
        let idx = (k as f64 * (n - 1) as f64 / (SHAPE_SAMPLES - 1) as f64).round() as usize;
        f[10 + k] = x[idx];
    }
    Ok(FeatureVector(f))
}

/// Normalizes then featurizes each raw series.
pub fn featurize_all<S: AsRef<[f64]>>(series: &[S]) -> Result<Vec<FeatureVector>> {
    series
        .iter()
        .map(|s| extract_features(&normalize_segment(s.as_ref())))
        .collect()
}

/// Per-component z-score statistics over a feature population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit<P: AsRef<[f64]>>(features: &[P]) -> Result<Self> {
        if features.len() < 2 {
            return Err(CoreError::InsufficientData(format!(
                "scaler needs at least 2 vectors, got {}",
                features.len()
            )));
        }
        let d = features[0].as_ref().len();
        if features.iter().any(|f| f.as_ref().len() != d) {
            return Err(CoreError::Shape("feature vectors differ in length".into()));
        }
        let mut mean_v = Vec::with_capacity(d);
        let mut std_v = Vec::with_capacity(d);
        let mut column = Vec::with_capacity(features.len());
        for c in 0..d {
            column.clear();
            column.extend(features.iter().map(|f| f.as_ref()[c]));
            let mu = mean(&column);
            mean_v.push(mu);
            std_v.push(population_var(&column, mu).sqrt());
        }
        Ok(Self {
            mean: mean_v,
            std: std_v,
        })
    }

    /// Components whose population std is effectively zero; they scale to 0.
    pub fn degenerate(&self) -> Vec<bool> {
        self.std.iter().map(|&s| s < STD_FLOOR).collect()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s < STD_FLOOR { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn apply_all<P: AsRef<[f64]>>(&self, features: &[P]) -> Vec<Vec<f64>> {
        features.iter().map(|f| self.apply(f.as_ref())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn segmentation_counts() {
        let x: Vec<f64> = (0..1000).map(f64::from).collect();
        let segs = segment(&x, 436, "d").unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(1000 - 2 * 436, 128);
        let segs = segment(&x[..10], 3, "d").unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2].values, vec![6.0, 7.0, 8.0]);
        assert_eq!(segment(&x[..5], 5, "d").unwrap()[0].values, x[..5].to_vec());
        assert!(segment(&x[..3], 5, "d").unwrap().is_empty());
    }

    #[test]
    fn normalization_definition() {
        let n = normalize_segment(&[2.0, 4.0, 6.0]);
        assert_eq!(n.mean, 4.0);
        assert!((n.std - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(n.values.iter().sum::<f64>().abs() < 1e-12);
        let c = normalize_segment(&[7.1; 9]);
        assert_eq!(c.std, 0.0);
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_segment_has_zero_features() {
        let f = extract_features(&normalize_segment(&[0.0; 64])).unwrap();
        assert!(f.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sine_cycle() {
        let l = 436;
        let x: Vec<f64> = (0..l).map(|t| (2.0 * PI * t as f64 / l as f64).sin()).collect();
        let f = extract_features(&normalize_segment(&x)).unwrap();
        assert_eq!(f.0[5], 1.0);
        assert_eq!(f.0[6], 1.0);
        assert_eq!(f.0[7], 1.0);
    }

    #[test]
    fn ramp_has_positive_trend_and_no_extrema() {
        let x: Vec<f64> = (0..50).map(|t| (t as f64).powf(1.3)).collect();
        let f = extract_features(&normalize_segment(&x)).unwrap();
        assert!(f.0[4] > 0.0);
        assert_eq!((f.0[6], f.0[7]), (0.0, 0.0));
    }

    #[test]
    fn shape_samples_hit_both_ends() {
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let n = normalize_segment(&x);
        let f = extract_features(&n).unwrap();
        assert_eq!(f.0[10], n.values[0]);
        assert_eq!(f.0[29], n.values[99]);
    }

    #[test]
    fn too_short_for_kurtosis() {
        assert!(extract_features(&normalize_segment(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn scaler_two_point_population() {
        let s = FeatureScaler::fit(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(s.apply(&[0.0, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(s.apply(&[2.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(s.degenerate(), vec![false, true]);
        assert!(FeatureScaler::fit(&[vec![1.0]]).is_err());
    }
}
