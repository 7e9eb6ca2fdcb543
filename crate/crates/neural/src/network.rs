use rand::Rng;

use crate::error::{NeuralError, Result};
use crate::layer::Layer;
use crate::param::ParamTensor;
use crate::spec::LayerSpec;
use crate::Tensor;

/// A sequential stack of layers built from [`LayerSpec`]s.
#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    forwarded: bool,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(NeuralError::InvalidSpec("network has no layers".into()));
        }
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, s)| Layer::build(i, s, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            specs,
            layers,
            forwarded: false,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Runs the stack and caches what [`Network::backward`] needs.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        self.forwarded = true;
        Ok(x)
    }

    /// Inference pass that leaves no cached activations behind.
    pub fn predict(&mut self, input: &Tensor) -> Result<Tensor> {
        let out = self.forward(input);
        self.clear_cache();
        out
    }

    /// Accumulates parameter gradients for `upstream` (dLoss/dOutput) and
    /// returns dLoss/dInput. Parameters are not modified.
    pub fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        if !self.forwarded {
            return Err(NeuralError::MissingCache("network".into()));
        }
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn clear_cache(&mut self) {
        self.forwarded = false;
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(ParamTensor::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Overwrites every parameter tensor, in [`Network::params`] order.
    pub fn set_values(&mut self, values: Vec<Vec<f64>>) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(NeuralError::Checkpoint(format!(
                "expected {} tensors, found {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.len() != v.len() {
                return Err(NeuralError::Checkpoint(format!(
                    "tensor `{}` expects {} values, found {}",
                    p.name,
                    p.len(),
                    v.len()
                )));
            }
            p.values = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let mut net = Network::new(vec![LayerSpec::Dense { inputs: 3, units: 3 }], &mut rng()).unwrap();
        let eye = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        net.set_values(vec![eye, vec![0.0; 3]]).unwrap();
        let x = Array3::from_shape_vec((2, 3, 1), vec![1.0, -2.0, 3.0, 0.5, 0.25, -4.0]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut net = Network::new(
            vec![LayerSpec::Activation {
                function: Activation::Tanh,
            }],
            &mut rng(),
        )
        .unwrap();
        let x = Array3::zeros((2, 4, 5));
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn conv_delta_kernel_shifts_signal() {
        // Taps [1, 0, 0] read x[t - 1]; taps [0, 0, 1] read x[t + 1].
        let x = Array3::from_shape_vec((1, 1, 8), (1..=8).map(f64::from).collect()).unwrap();
        let spec = vec![LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 2,
            kernel: 3,
        }];
        let mut net = Network::new(spec, &mut rng()).unwrap();
        net.set_values(vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]])
            .unwrap();
        let y = net.forward(&x).unwrap();
        let lag: Vec<f64> = y.slice(ndarray::s![0, 0, ..]).to_vec();
        let lead: Vec<f64> = y.slice(ndarray::s![0, 1, ..]).to_vec();
        assert_eq!(lag, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(lead, vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let mut net = Network::new(vec![LayerSpec::Dense { inputs: 4, units: 2 }], &mut rng()).unwrap();
        let err = net.forward(&Array3::zeros((1, 3, 1))).unwrap_err();
        assert!(matches!(err, NeuralError::Dimension { .. }));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut net = Network::new(vec![LayerSpec::Dense { inputs: 2, units: 2 }], &mut rng()).unwrap();
        let err = net.backward(&Array3::zeros((1, 2, 1))).unwrap_err();
        assert!(matches!(err, NeuralError::MissingCache(_)));
    }

    #[test]
    fn squared_error_gradient_matches_analytic_form() {
        // loss = |Wx - y|^2  =>  dW = 2 (Wx - y) x^T
        let mut net = Network::new(vec![LayerSpec::Dense { inputs: 3, units: 2 }], &mut rng()).unwrap();
        let x = Array3::from_shape_vec((1, 3, 1), vec![0.5, -1.0, 2.0]).unwrap();
        let y = [0.3, -0.7];
        let out = net.forward(&x).unwrap();
        let resid: Vec<f64> = (0..2).map(|i| out[[0, i, 0]] - y[i]).collect();
        let upstream = Array3::from_shape_fn((1, 2, 1), |(_, i, _)| 2.0 * resid[i]);
        net.backward(&upstream).unwrap();
        let w_grad = &net.params()[0].grad;
        for i in 0..2 {
            for j in 0..3 {
                let expected = 2.0 * resid[i] * x[[0, j, 0]];
                assert!((w_grad[i * 3 + j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let specs = vec![
            LayerSpec::Conv1d {
                in_channels: 2,
                out_channels: 3,
                kernel: 3,
            },
            LayerSpec::Lstm {
                input: 3,
                hidden: 4,
                layers: 2,
                return_sequences: false,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 4, units: 1 },
        ];
        let mut net = Network::new(specs, &mut rng()).unwrap();
        let x = Array3::from_shape_fn((2, 2, 5), |(a, b, c)| (a + 2 * b + 3 * c) as f64 * 0.1);
        let out = net.forward(&x).unwrap();
        net.backward(&Array3::zeros(out.dim())).unwrap();
        assert!(net.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn even_kernel_is_rejected() {
        let err = Network::new(
            vec![LayerSpec::Conv1d {
                in_channels: 1,
                out_channels: 1,
                kernel: 4,
            }],
            &mut rng(),
        )
        .unwrap_err();
        assert!(matches!(err, NeuralError::InvalidSpec(_)));
    }
}
