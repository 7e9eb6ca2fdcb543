use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NeuralError::InvalidSpec(format!("invalid Adam config {self:?}")))
        }
    }
}

/// First and second moment accumulators, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_network(net: &Network) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// Bias-corrected Adam update of every parameter in `net`, then clears the
/// gradients. Nothing is modified if any gradient is non-finite.
pub fn adam_step(net: &mut Network, state: &mut AdamState, cfg: &OptimConfig) -> Result<()> {
    let mut params = net.params_mut();
    if state.m.len() != params.len() {
        return Err(NeuralError::Checkpoint(format!(
            "optimizer tracks {} tensors but network has {}",
            state.m.len(),
            params.len()
        )));
    }
    if let Some(bad) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
        return Err(NeuralError::Divergence(bad.name.clone()));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.values.len() {
            let g = p.grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p.values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            p.grad[i] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        Network::new(vec![LayerSpec::Dense { inputs: 3, units: 2 }], &mut rng).unwrap()
    }

    #[test]
    fn defaults_follow_the_reference_configuration() {
        let c = OptimConfig::default();
        assert_eq!((c.learning_rate, c.beta1, c.beta2), (2e-4, 0.5, 0.999));
    }

    #[test]
    fn zero_gradient_leaves_parameters_alone() {
        let mut n = net();
        let before: Vec<Vec<f64>> = n.params().iter().map(|p| p.values.clone()).collect();
        let mut st = AdamState::for_network(&n);
        adam_step(&mut n, &mut st, &OptimConfig::default()).unwrap();
        let after: Vec<Vec<f64>> = n.params().iter().map(|p| p.values.clone()).collect();
        assert_eq!(before, after);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let mut n = net();
        let cfg = OptimConfig::default();
        let g = [0.37, -2.5, 1e-3, 4.0, -0.01, 0.5];
        n.params_mut()[0].grad.copy_from_slice(&g);
        let before = n.params()[0].values.clone();
        let mut st = AdamState::for_network(&n);
        adam_step(&mut n, &mut st, &cfg).unwrap();
        for (i, gi) in g.iter().enumerate() {
            let delta = n.params()[0].values[i] - before[i];
            let expected = -cfg.learning_rate * gi / (gi.abs() + cfg.epsilon);
            assert!((delta - expected).abs() < 1e-15, "{delta} vs {expected}");
            assert_eq!(n.params()[0].grad[i], 0.0);
        }
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let mut n = net();
        n.params_mut()[1].grad[0] = f64::NAN;
        let mut st = AdamState::for_network(&n);
        match adam_step(&mut n, &mut st, &OptimConfig::default()) {
            Err(NeuralError::Divergence(name)) => assert_eq!(name, "0.dense.bias"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(st.step, 0);
    }
}
