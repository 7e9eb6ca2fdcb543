//! Logistic (binary cross-entropy) adversarial losses on sigmoid outputs.
//!
//! Discriminator outputs are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before
//! taking logs, so every loss and gradient is finite.

/// Lower clamp applied to discriminator probabilities.
pub const PROB_CLAMP: f64 = 1e-7;

/// Scalar loss plus dLoss/dProbability for every batch element.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `mean(-log D(x))` for samples labelled real.
pub fn bce_real(d_out: &[f64]) -> LossGrad {
    let n = d_out.len().max(1) as f64;
    let loss = d_out.iter().map(|&p| -clamp(p).ln()).sum::<f64>() / n;
    let grad = d_out.iter().map(|&p| -1.0 / (clamp(p) * n)).collect();
    LossGrad { loss, grad }
}

/// `mean(-log(1 - D(G(z))))` for samples labelled fake.
pub fn bce_fake(d_out: &[f64]) -> LossGrad {
    let n = d_out.len().max(1) as f64;
    let loss = d_out.iter().map(|&p| -(1.0 - clamp(p)).ln()).sum::<f64>() / n;
    let grad = d_out.iter().map(|&p| 1.0 / ((1.0 - clamp(p)) * n)).collect();
    LossGrad { loss, grad }
}

/// Discriminator loss `½ bce_real(real) + ½ bce_fake(fake)` with the
/// gradients for the real and fake halves.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let r = bce_real(d_real);
    let f = bce_fake(d_fake);
    let half = |v: Vec<f64>| v.into_iter().map(|g| 0.5 * g).collect::<Vec<_>>();
    (0.5 * r.loss + 0.5 * f.loss, half(r.grad), half(f.grad))
}

/// Non-saturating generator loss `mean(-log D(G(z)))`.
pub fn generator_loss(d_fake: &[f64]) -> LossGrad {
    bce_real(d_fake)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn coin_flip_discriminator_costs_log_two() {
        let (ld, _, _) = discriminator_loss(&[0.5; 4], &[0.5; 4]);
        assert!((ld - LN2).abs() < 1e-15);
        assert!((generator_loss(&[0.5; 3]).loss - LN2).abs() < 1e-15);
    }

    #[test]
    fn confident_discriminator_loss_matches_hand_value() {
        let (ld, _, _) = discriminator_loss(&[0.9], &[0.1]);
        let expected = 0.5 * -(0.9f64).ln() + 0.5 * -(0.9f64).ln();
        assert!((ld - expected).abs() < 1e-15);
        assert!((ld - 0.1054).abs() < 1e-4);
    }

    #[test]
    fn saturated_outputs_stay_finite() {
        let (ld, gr, gf) = discriminator_loss(&[0.0, 1.0], &[1.0, 0.0]);
        assert!(ld.is_finite());
        assert!(gr.iter().chain(&gf).all(|g| g.is_finite()));
        assert!(generator_loss(&[0.0]).loss.is_finite());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = [0.3, 0.8];
        let lg = bce_fake(&p);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = p;
            let mut dn = p;
            up[i] += h;
            dn[i] -= h;
            let fd = (bce_fake(&up).loss - bce_fake(&dn).loss) / (2.0 * h);
            assert!((fd - lg.grad[i]).abs() < 1e-7);
        }
    }
}
