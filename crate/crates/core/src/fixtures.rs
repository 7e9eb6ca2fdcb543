//! Deterministic synthetic traces for tests, demos and acceptance runs.
//!
//! Every generator is a pure function of its spec: the same spec (including
//! seed) always yields bit-identical samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::trace::DeviceTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureKind {
    Constant {
        level: f64,
    },
    /// Starts at `lo` and toggles every `half_period` samples.
    SquareWave {
        lo: f64,
        hi: f64,
        half_period: usize,
    },
    /// Triangular spikes of half-width `width` on a flat `baseline`, spaced
    /// by `min_gap` plus an exponential excess with mean `mean_gap - min_gap`.
    Spiky {
        baseline: f64,
        height: f64,
        width: usize,
        min_gap: usize,
        mean_gap: f64,
    },
    NoisySine {
        offset: f64,
        amplitude: f64,
        period: f64,
        noise_std: f64,
    },
    /// On/off bursts at roughly `level` watts; occupancy stays below 0.3
    /// because gaps are at least four burst lengths on average.
    IntermittentBursts {
        level: f64,
        burst_len: usize,
        mean_gap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    pub length: usize,
    pub seed: u64,
}

impl FixtureSpec {
    pub fn new(kind: FixtureKind, length: usize, seed: u64) -> Self {
        Self { kind, length, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(format!("fixture: {m}")));
        if self.length == 0 {
            return bad("length must be >= 1");
        }
        match self.kind {
            FixtureKind::SquareWave { half_period: 0, .. } => bad("half_period must be >= 1"),
            FixtureKind::Spiky {
                min_gap, mean_gap, ..
            } if min_gap == 0 || mean_gap < min_gap as f64 => bad("need 1 <= min_gap <= mean_gap"),
            FixtureKind::NoisySine { period, noise_std, .. } if period <= 0.0 || noise_std < 0.0 => {
                bad("period must be positive and noise_std non-negative")
            }
            FixtureKind::IntermittentBursts {
                burst_len,
                mean_gap,
                ..
            } if burst_len == 0 || mean_gap < 4 * burst_len => {
                bad("bursts need burst_len >= 1 and mean_gap >= 4 * burst_len")
            }
            _ => Ok(()),
        }
    }
}

/// Samples plus the planted event positions (spike peaks or burst starts).
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub samples: Vec<f64>,
    pub events: Vec<usize>,
}

pub fn make_fixture(spec: &FixtureSpec) -> Result<DeviceTrace> {
    let f = make_fixture_detailed(spec)?;
    DeviceTrace::new(fixture_name(&spec.kind), f.samples)
}

fn fixture_name(kind: &FixtureKind) -> &'static str {
    match kind {
        FixtureKind::Constant { .. } => "constant",
        FixtureKind::SquareWave { .. } => "square_wave",
        FixtureKind::Spiky { .. } => "spiky",
        FixtureKind::NoisySine { .. } => "noisy_sine",
        FixtureKind::IntermittentBursts { .. } => "intermittent_bursts",
    }
}

pub fn make_fixture_detailed(spec: &FixtureSpec) -> Result<Fixture> {
    spec.validate()?;
    let n = spec.length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut events = Vec::new();
    let samples = match spec.kind {
        FixtureKind::Constant { level } => vec![level; n],
        FixtureKind::SquareWave { lo, hi, half_period } => (0..n)
            .map(|t| if (t / half_period) % 2 == 0 { lo } else { hi })
            .collect(),
        FixtureKind::Spiky {
            baseline,
            height,
            width,
            min_gap,
            mean_gap,
        } => {
            let mut x = vec![baseline; n];
            let excess = mean_gap - min_gap as f64;
            let exp = (excess > 0.0).then(|| Exp::new(1.0 / excess).expect("positive rate"));
            let mut pos = rng.random_range(width..=width + min_gap / 2);
            while pos + width < n {
                let h = height * rng.random_range(0.6..=1.0);
                for d in 0..=width {
                    let v = baseline + h * (1.0 - d as f64 / (width + 1) as f64);
                    x[pos + d] = x[pos + d].max(v);
                    if d <= pos {
                        x[pos - d] = x[pos - d].max(v);
                    }
                }
                events.push(pos);
                let extra = exp.map_or(0.0, |e| e.sample(&mut rng)).round() as usize;
                pos += min_gap + extra;
            }
            x
        }
        FixtureKind::NoisySine {
            offset,
            amplitude,
            period,
            noise_std,
        } => {
            let noise = Normal::new(0.0, noise_std).expect("validated std");
            (0..n)
                .map(|t| {
                    offset
                        + amplitude * (2.0 * std::f64::consts::PI * t as f64 / period).sin()
                        + noise.sample(&mut rng)
                })
                .collect()
        }
        FixtureKind::IntermittentBursts {
            level,
            burst_len,
            mean_gap,
        } => {
            let mut x = vec![0.0; n];
            // First burst starts inside the first burst length.
            let mut pos = rng.random_range(0..burst_len);
            while pos < n {
                let len = burst_len;
                let amp = level * rng.random_range(0.9..=1.1);
                for v in x.iter_mut().skip(pos).take(len) {
                    *v = amp;
                }
                events.push(pos);
                let gap = (mean_gap as f64 * rng.random_range(0.8..=1.2)).round() as usize;
                pos += len + gap.max(1);
            }
            x
        }
    };
    Ok(Fixture { samples, events })
}

/// Shape templates for planted-mode traces, each spanning `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ModeShape {
    /// Rectangular pulse covering `[start, start + width)` as fractions of
    /// the segment.
    Pulse { start: f64, width: f64 },
    Ramp,
    Sine { cycles: f64 },
    /// Exponential decay from the first sample.
    Decay { rate: f64 },
    Sawtooth { teeth: usize },
}

impl ModeShape {
    /// Shape value at segment phase `u` (0 at the first sample, 1 one past
    /// the last); phases beyond 1 continue the pattern, ramps saturate.
    pub fn value_at(&self, u: f64) -> f64 {
        match *self {
            ModeShape::Pulse { start, width } => f64::from(u >= start && u < start + width),
            ModeShape::Ramp => u.min(1.0),
            ModeShape::Sine { cycles } => 0.5 + 0.5 * (2.0 * std::f64::consts::PI * cycles * u).sin(),
            ModeShape::Decay { rate } => (-rate * u).exp(),
            ModeShape::Sawtooth { teeth } => (u * teeth as f64).fract(),
        }
    }

    /// `len` samples at phases `t / len`; a ramp ends exactly at 1.
    pub fn template(&self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|t| match self {
                ModeShape::Ramp => t as f64 / (n - 1.0).max(1.0),
                _ => self.value_at(t as f64 / n),
            })
            .collect()
    }
}

/// Segment-level modes planted in one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModes {
    pub modes: Vec<ModeShape>,
    pub counts: Vec<usize>,
    pub segment_len: usize,
    /// Peak power of each mode, in watts.
    pub levels: Vec<f64>,
    pub noise_std: f64,
    /// Each segment's time axis is stretched by a factor drawn from
    /// `U(1 - j, 1 + j)`, so event durations vary between segments.
    pub stretch_jitter: f64,
    pub seed: u64,
}

/// Concatenation of `counts[m]` segments of each mode in a seeded shuffled
/// order. Each segment is `level * amplitude * template + noise` with the
/// amplitude jittered by ±10%, clamped at zero.
///
/// Returns the trace and the planted mode label of each segment.
pub fn planted_mode_trace(device_id: &str, spec: &PlantedModes) -> Result<(DeviceTrace, Vec<usize>)> {
    let PlantedModes {
        ref modes,
        ref counts,
        segment_len,
        ref levels,
        noise_std,
        stretch_jitter,
        seed,
    } = *spec;
    if modes.is_empty() || modes.len() != counts.len() || modes.len() != levels.len() || segment_len < 2 {
        return Err(CoreError::Config(
            "planted modes need matching modes/counts/levels and segment_len >= 2".into(),
        ));
    }
    if !(0.0..1.0).contains(&stretch_jitter) {
        return Err(CoreError::Config("stretch_jitter must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(m, &c)| std::iter::repeat_n(m, c))
        .collect();
    // Fisher-Yates with the fixture RNG keeps the order reproducible.
    for i in (1..labels.len()).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    let mut samples = Vec::with_capacity(labels.len() * segment_len);
    for &m in &labels {
        let amp = levels[m] * rng.random_range(0.9..=1.1);
        let stretch = if stretch_jitter > 0.0 {
            rng.random_range(1.0 - stretch_jitter..=1.0 + stretch_jitter)
        } else {
            1.0
        };
        let span = segment_len as f64 * stretch;
        samples.extend((0..segment_len).map(|t| {
            let v = modes[m].value_at(t as f64 / span);
            (amp * v + noise.sample(&mut rng)).max(0.0)
        }));
    }
    Ok((DeviceTrace::new(device_id, samples)?, labels))
}
