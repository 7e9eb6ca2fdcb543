use ndarray::Axis;

use crate::error::{dim_err, NeuralError, Result};
use crate::Tensor;

fn reshaped(x: &Tensor, shape: (usize, usize, usize), layer: &str) -> Result<Tensor> {
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order(shape)
        .map_err(|e| dim_err(layer, format!("{shape:?}"), e))
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Flatten {
    input_dim: Option<(usize, usize, usize)>,
}

impl Flatten {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (b, c, l) = x.dim();
        self.input_dim = Some((b, c, l));
        reshaped(x, (b, c * l, 1), "flatten")
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let dim = self
            .input_dim
            .ok_or_else(|| NeuralError::MissingCache("flatten".into()))?;
        reshaped(grad, dim, "flatten")
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Reshape {
    pub channels: usize,
    pub length: usize,
    seen: bool,
}

impl Reshape {
    pub fn new(channels: usize, length: usize) -> Self {
        Self {
            channels,
            length,
            seen: false,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (b, f, l) = x.dim();
        if f * l != self.channels * self.length {
            return Err(dim_err(
                "reshape",
                format!("(_, {}, 1)", self.channels * self.length),
                format!("{:?}", x.dim()),
            ));
        }
        self.seen = true;
        reshaped(x, (b, self.channels, self.length), "reshape")
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if !self.seen {
            return Err(NeuralError::MissingCache("reshape".into()));
        }
        let (b, c, l) = grad.dim();
        reshaped(grad, (b, c * l, 1), "reshape")
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Repeat {
    pub length: usize,
    seen: bool,
}

impl Repeat {
    pub fn new(length: usize) -> Self {
        Self {
            length,
            seen: false,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (b, f, l) = x.dim();
        if l != 1 {
            return Err(dim_err("repeat", "(_, _, 1)", format!("{:?}", x.dim())));
        }
        self.seen = true;
        Ok(x
            .broadcast((b, f, self.length))
            .expect("length-1 axis broadcasts")
            .to_owned())
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        if !self.seen {
            return Err(NeuralError::MissingCache("repeat".into()));
        }
        Ok(grad.sum_axis(Axis(2)).insert_axis(Axis(2)))
    }
}
