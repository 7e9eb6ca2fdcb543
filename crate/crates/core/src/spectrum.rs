use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Magnitudes below this count as "no oscillation".
pub const MAGNITUDE_FLOOR: f64 = 1e-9;

/// DFT magnitudes `|X_k|` for bins `0..=n/2`.
pub fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.truncate(n / 2 + 1);
    buf.iter().map(|c| c.norm()).collect()
}

/// Index of the largest magnitude among bins `1..=n/2`, lowest bin on ties.
/// `None` when every such magnitude is below [`MAGNITUDE_FLOOR`].
pub fn dominant_bin(x: &[f64]) -> Option<usize> {
    let mags = dft_magnitudes(x);
    let mut best: Option<(usize, f64)> = None;
    for (k, &m) in mags.iter().enumerate().skip(1) {
        if m >= MAGNITUDE_FLOOR && best.is_none_or(|(_, b)| m > b) {
            best = Some((k, m));
        }
    }
    best.map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_magnitudes(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                re.hypot(im)
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<f64> = (0..37).map(|t| ((t * t) % 11) as f64 - 3.0).collect();
        for (a, b) in dft_magnitudes(&x).iter().zip(naive_magnitudes(&x)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn dominant_bin_of_pure_tone() {
        let x: Vec<f64> = (0..500).map(|t| (2.0 * PI * 5.0 * t as f64 / 500.0).sin()).collect();
        assert_eq!(dominant_bin(&x), Some(5));
        assert_eq!(dominant_bin(&[4.0; 64]), None);
    }
}
