use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::Tensor;

/// Negative slope used by [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if y > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ActivationLayer {
    pub function: Activation,
    output: Option<Tensor>,
}

impl ActivationLayer {
    pub fn new(function: Activation) -> Self {
        Self {
            function,
            output: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let f = self.function;
        let y = x.mapv(|v| f.apply(v));
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let y = self
            .output
            .as_ref()
            .ok_or_else(|| NeuralError::MissingCache("activation".into()))?;
        if y.dim() != grad.dim() {
            return Err(crate::error::dim_err(
                "activation",
                format!("{:?}", y.dim()),
                format!("{:?}", grad.dim()),
            ));
        }
        let f = self.function;
        let mut out = grad.clone();
        out.zip_mut_with(y, |g, &yv| *g *= f.derivative_from_output(yv));
        Ok(out)
    }

    pub fn clear_cache(&mut self) {
        self.output = None;
    }
}
