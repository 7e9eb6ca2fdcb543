use rand::Rng;

/// Glorot-uniform samples in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    fan_in: usize,
    fan_out: usize,
) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, len, limit)
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, len: usize, limit: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
}
