//! Square-wave detection and the spike pipeline for continuous devices that
//! a recurrent model handles poorly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gan::{self, Branch, GanModel, TrainConfig};
use crate::resample::downsample;
use crate::seed::sub_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    /// Center separation, in units of the series std, that marks a square wave.
    pub gamma: f64,
    pub quantile: f64,
    pub spike_window: usize,
    pub square_downsample: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            quantile: 0.9,
            spike_window: 64,
            square_downsample: 10,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(CoreError::Config("gamma must be positive".into()));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(CoreError::Config("spike quantile must lie in (0, 1)".into()));
        }
        if self.spike_window == 0 || self.square_downsample == 0 {
            return Err(CoreError::Config(
                "spike window and square downsample factor must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareWaveTest {
    pub is_square: bool,
    /// Low and high 2-means centers.
    pub centers: (f64, f64),
    /// Full on/off cycle in original samples, when at least one complete
    /// run lies between midpoint crossings.
    pub cycle_len: Option<f64>,
}

fn two_means(x: &[f64]) -> (f64, f64) {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut c0, mut c1) = (lo, hi);
    for _ in 0..100 {
        let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
        for &v in x {
            if (v - c0).abs() <= (v - c1).abs() {
                s0 += v;
                n0 += 1;
            } else {
                s1 += v;
                n1 += 1;
            }
        }
        let next = (
            if n0 > 0 { s0 / n0 as f64 } else { c0 },
            if n1 > 0 { s1 / n1 as f64 } else { c1 },
        );
        if next == (c0, c1) {
            break;
        }
        (c0, c1) = next;
    }
    (c0.min(c1), c0.max(c1))
}

fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Twice the mean length of the runs strictly between the first and last
/// crossing of `mid`; the truncated runs at either end are ignored.
fn cycle_length(x: &[f64], mid: f64) -> Option<f64> {
    let high: Vec<bool> = x.iter().map(|&v| v > mid).collect();
    let crossings: Vec<usize> = (1..high.len()).filter(|&i| high[i] != high[i - 1]).collect();
    if crossings.len() < 2 {
        return None;
    }
    let span = (crossings[crossings.len() - 1] - crossings[0]) as f64;
    Some(2.0 * span / (crossings.len() - 1) as f64)
}

pub fn detect_square_wave(x: &[f64], cfg: &HybridConfig) -> Result<SquareWaveTest> {
    if x.len() < 4 {
        return Err(CoreError::InsufficientData(format!(
            "square-wave test needs at least 4 samples, got {}",
            x.len()
        )));
    }
    let factor = cfg.square_downsample.min(x.len() / 2).max(1);
    let reduced = downsample(x, factor)?;
    let centers = two_means(&reduced.values);
    let std = population_std(x);
    let is_square = std > 0.0 && (centers.1 - centers.0) > cfg.gamma * std;
    Ok(SquareWaveTest {
        is_square,
        centers,
        cycle_len: cycle_length(x, 0.5 * (centers.0 + centers.1)),
    })
}

/// q-quantile of the strictly positive samples, linearly interpolated
/// between order statistics at position `(n - 1) q`.
pub fn spike_threshold(x: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(CoreError::Config(format!("quantile {q} is outside [0, 1]")));
    }
    let mut pos: Vec<f64> = x.iter().copied().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return Err(CoreError::NoSpikes("series has no positive samples".into()));
    }
    pos.sort_by(f64::total_cmp);
    let h = (pos.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    Ok(match pos.get(i + 1) {
        Some(&next) => pos[i] + frac * (next - pos[i]),
        None => pos[i],
    })
}

/// Indices of local maxima at or above `threshold`, at least `separation`
/// samples apart. Flat tops count once, at their midpoint; samples beyond
/// the ends count as lower. Taller peaks claim their neighbourhood first.
pub fn find_peaks(x: &[f64], threshold: f64, separation: usize) -> Vec<usize> {
    let mut candidates = Vec::new();
    let mut i = 0;
    while i < x.len() {
        let mut j = i;
        while j + 1 < x.len() && x[j + 1] == x[i] {
            j += 1;
        }
        let left_lower = i == 0 || x[i - 1] < x[i];
        let right_lower = j + 1 == x.len() || x[j + 1] < x[i];
        if left_lower && right_lower && x[i] >= threshold {
            candidates.push((i + j) / 2);
        }
        i = j + 1;
    }
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= separation) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSet {
    pub peaks: Vec<usize>,
    /// Length-`S` windows starting `S / 2` samples before each peak.
    pub windows: Vec<Vec<f64>>,
    pub gap_mean: f64,
    pub gap_std: f64,
}

pub fn extract_spikes(x: &[f64], threshold: f64, window: usize) -> Result<SpikeSet> {
    if window == 0 {
        return Err(CoreError::Config("spike window must be >= 1".into()));
    }
    let peaks = find_peaks(x, threshold, window);
    if peaks.is_empty() {
        return Err(CoreError::NoSpikes(format!("no peaks at or above {threshold}")));
    }
    let half = window / 2;
    let windows = peaks
        .iter()
        .map(|&p| {
            (0..window)
                .map(|i| (p + i).checked_sub(half).and_then(|t| x.get(t)).copied().unwrap_or(0.0))
                .collect()
        })
        .collect();
    let (gap_mean, gap_std) = if peaks.len() < 2 {
        (x.len() as f64, 0.0)
    } else {
        let gaps: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - m).powi(2)).sum::<f64>() / gaps.len() as f64;
        (m, var.sqrt())
    };
    Ok(SpikeSet {
        peaks,
        windows,
        gap_mean,
        gap_std,
    })
}

/// Spike centers in `[0, T)`: the first lies one gap in, each next one a
/// further gap on; gaps are `N(mean, std)` rounded and clipped to >= 1.
pub fn draw_placements<R: Rng + ?Sized>(gap_mean: f64, gap_std: f64, t: usize, rng: &mut R) -> Vec<usize> {
    let normal = Normal::new(gap_mean, gap_std.max(0.0)).ok();
    let mut draw = || {
        let g = normal.map_or(gap_mean, |n| n.sample(&mut *rng));
        g.round().max(1.0) as usize
    };
    let mut out = Vec::new();
    let mut pos = draw();
    while pos < t {
        out.push(pos);
        pos += draw();
    }
    out
}

#[derive(Debug, Clone)]
pub struct SpikeModel {
    pub gan: GanModel,
    pub gap_mean: f64,
    pub gap_std: f64,
    pub threshold: f64,
    pub window: usize,
}

impl SpikeModel {
    pub fn extra_json(&self) -> serde_json::Value {
        serde_json::json!({
            "gap_mean": self.gap_mean,
            "gap_std": self.gap_std,
            "threshold": self.threshold,
            "window": self.window,
        })
    }

    pub fn from_parts(gan: GanModel, extra: &serde_json::Value) -> Result<Self> {
        let field = |k: &str| {
            extra[k]
                .as_f64()
                .ok_or_else(|| CoreError::Format(format!("spike checkpoint lacks `{k}`")))
        };
        Ok(Self {
            window: field("window")? as usize,
            gap_mean: field("gap_mean")?,
            gap_std: field("gap_std")?,
            threshold: field("threshold")?,
            gan,
        })
    }
}

pub fn train_spike_model(x: &[f64], hcfg: &HybridConfig, cfg: &TrainConfig) -> Result<SpikeModel> {
    hcfg.validate()?;
    let threshold = spike_threshold(x, hcfg.quantile)?;
    let mut spikes = extract_spikes(x, threshold, hcfg.spike_window)?;
    if spikes.windows.len() == 1 {
        spikes.windows.push(spikes.windows[0].clone());
    }
    let gan = gan::train_conv_gan(&spikes.windows, Branch::Spike, cfg)?;
    Ok(SpikeModel {
        gan,
        gap_mean: spikes.gap_mean,
        gap_std: spikes.gap_std,
        threshold,
        window: hcfg.spike_window,
    })
}

/// Zero baseline with generated spike windows centered on drawn placements;
/// overlaps keep the larger value. Returns the series and the placements.
pub fn interleave_spikes(model: &mut SpikeModel, t: usize, seed: u64) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placements = draw_placements(model.gap_mean, model.gap_std, t, &mut rng);
    let windows = gan::sample(&mut model.gan, placements.len(), sub_seed(seed, "spike-windows", 0))?;
    let mut out = vec![0.0; t];
    let half = model.window / 2;
    for (&p, w) in placements.iter().zip(&windows) {
        for (i, &v) in w.iter().enumerate() {
            if let Some(slot) = (p + i).checked_sub(half).and_then(|j| out.get_mut(j)) {
                *slot = f64::max(*slot, v);
            }
        }
    }
    Ok((out, placements))
}

/// Training segments for the square branch: consecutive pieces of about two
/// cycles, at most half the surrogate so that at least two pieces exist.
/// Surrogates shorter than 16 samples yield overlapping unit-stride pieces.
pub fn square_segments(surrogate: &[f64], cycle_len: Option<f64>) -> (usize, Vec<Vec<f64>>) {
    let n = surrogate.len();
    let lo = 8.min(n);
    let seg = cycle_len
        .map_or(n / 4, |c| (2.0 * c).round() as usize)
        .clamp(lo, (n / 2).max(lo));
    let mut pieces: Vec<Vec<f64>> = surrogate.chunks_exact(seg.max(1)).map(<[f64]>::to_vec).collect();
    if pieces.len() < 2 && n > seg {
        pieces = surrogate.windows(seg).map(<[f64]>::to_vec).collect();
    }
    (seg, pieces)
}

/// Concatenates generated pieces until `len` samples are filled.
pub fn generate_concatenated(model: &mut GanModel, len: usize, seed: u64) -> Result<Vec<f64>> {
    let per = model.output_len.max(1);
    let count = len.div_ceil(per);
    let mut out: Vec<f64> = gan::sample(model, count, seed)?.into_iter().flatten().collect();
    out.truncate(len);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{make_fixture, FixtureKind, FixtureSpec};

    #[test]
    fn threshold_examples() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((spike_threshold(&x, 0.9).unwrap() - 90.1).abs() < 1e-12);
        assert_eq!(spike_threshold(&[0.0, 4.0, 4.0, 0.0], 0.3).unwrap(), 4.0);
        assert_eq!(spike_threshold(&[0.0, 3.0, 1.0, 0.0, 2.0], 0.5).unwrap(), 2.0);
        assert!(matches!(spike_threshold(&[0.0, -1.0], 0.5), Err(CoreError::NoSpikes(_))));
    }

    #[test]
    fn two_delta_spikes() {
        let mut x = vec![0.0; 1000];
        x[200] = 50.0;
        x[500] = 50.0;
        let s = extract_spikes(&x, 50.0, 64).unwrap();
        assert_eq!(s.peaks, vec![200, 500]);
        assert_eq!(s.windows.len(), 2);
        assert_eq!(s.windows[0][32], 50.0);
        assert_eq!((s.gap_mean, s.gap_std), (300.0, 0.0));
    }

    #[test]
    fn single_spike_and_edges() {
        let mut x = vec![0.0; 100];
        x[3] = 9.0;
        let s = extract_spikes(&x, 1.0, 16).unwrap();
        assert_eq!((s.gap_mean, s.gap_std), (100.0, 0.0));
        assert_eq!(s.windows[0][..5], [0.0; 5]);
        assert_eq!(s.windows[0][8], 9.0);
        assert!(extract_spikes(&x, 10.0, 16).is_err());
    }

    #[test]
    fn peaks_respect_separation_and_plateaus() {
        let x = [0.0, 5.0, 5.0, 5.0, 0.0, 7.0, 0.0, 0.0, 0.0, 6.0, 0.0];
        assert_eq!(find_peaks(&x, 1.0, 1), vec![2, 5, 9]);
        assert_eq!(find_peaks(&x, 1.0, 4), vec![5, 9]);
        assert_eq!(find_peaks(&x, 6.5, 1), vec![5]);
    }

    #[test]
    fn square_fixture_detected() {
        let x = make_fixture(&FixtureSpec::new(
            FixtureKind::SquareWave {
                lo: 0.0,
                hi: 100.0,
                half_period: 25,
            },
            2000,
            0,
        ))
        .unwrap();
        let r = detect_square_wave(x.samples(), &HybridConfig::default()).unwrap();
        assert!(r.is_square);
        assert!(r.centers.0 < 20.0 && r.centers.1 > 80.0, "{:?}", r.centers);
        assert!((r.cycle_len.unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn constant_and_noise_rejected() {
        let cfg = HybridConfig::default();
        assert!(!detect_square_wave(&[3.0; 50], &cfg).unwrap().is_square);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..2000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        assert!(!detect_square_wave(&noise, &cfg).unwrap().is_square);
        assert!(detect_square_wave(&[1.0, 2.0, 3.0], &cfg).is_err());
    }

    #[test]
    fn regular_placements() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = draw_placements(100.0, 0.0, 1000, &mut rng);
        assert_eq!(p, (1..10).map(|i| i * 100).collect::<Vec<_>>());
        assert!(draw_placements(500.0, 0.0, 300, &mut rng).is_empty());
        assert_eq!(draw_placements(0.2, 0.0, 3, &mut rng), vec![1, 2]);
    }

    #[test]
    fn square_segments_cover_two_pieces() {
        let s: Vec<f64> = (0..100).map(f64::from).collect();
        let (seg, pieces) = square_segments(&s, Some(10.0));
        assert_eq!((seg, pieces.len()), (20, 5));
        let (seg, pieces) = square_segments(&s, Some(80.0));
        assert_eq!((seg, pieces.len()), (50, 2));
        let (seg, pieces) = square_segments(&s[..12], Some(80.0));
        assert_eq!((seg, pieces.len()), (8, 5));
    }
}
