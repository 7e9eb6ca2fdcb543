use rand::Rng;

use crate::activation::ActivationLayer;
use crate::conv::Conv1d;
use crate::dense::Dense;
use crate::error::Result;
use crate::lstm::Lstm;
use crate::param::ParamTensor;
use crate::reshape::{Flatten, Repeat, Reshape};
use crate::spec::LayerSpec;
use crate::Tensor;

#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    Lstm(Lstm),
    Activation(ActivationLayer),
    Flatten(Flatten),
    Reshape(Reshape),
    Repeat(Repeat),
}

impl Layer {
    pub fn build<R: Rng + ?Sized>(index: usize, spec: &LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let prefix = format!("{index}.{}", spec.short_name());
        Ok(match *spec {
            LayerSpec::Dense { inputs, units } => Layer::Dense(Dense::new(&prefix, inputs, units, rng)),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => Layer::Conv1d(Conv1d::new(&prefix, in_channels, out_channels, kernel, rng)),
            LayerSpec::Lstm {
                input,
                hidden,
                layers,
                return_sequences,
            } => Layer::Lstm(Lstm::new(&prefix, input, hidden, layers, return_sequences, rng)),
            LayerSpec::Activation { function } => Layer::Activation(ActivationLayer::new(function)),
            LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
            LayerSpec::Reshape { channels, length } => Layer::Reshape(Reshape::new(channels, length)),
            LayerSpec::Repeat { length } => Layer::Repeat(Repeat::new(length)),
        })
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv1d(l) => l.forward(x),
            Layer::Lstm(l) => l.forward(x),
            Layer::Activation(l) => Ok(l.forward(x)),
            Layer::Flatten(l) => l.forward(x),
            Layer::Reshape(l) => l.forward(x),
            Layer::Repeat(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::Conv1d(l) => l.backward(grad),
            Layer::Lstm(l) => l.backward(grad),
            Layer::Activation(l) => l.backward(grad),
            Layer::Flatten(l) => l.backward(grad),
            Layer::Reshape(l) => l.backward(grad),
            Layer::Repeat(l) => l.backward(grad),
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        match self {
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Conv1d(l) => vec![&l.weight, &l.bias],
            Layer::Lstm(l) => l.params(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Lstm(l) => l.params_mut(),
            _ => Vec::new(),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Dense(l) => l.clear_cache(),
            Layer::Conv1d(l) => l.clear_cache(),
            Layer::Lstm(l) => l.clear_cache(),
            Layer::Activation(l) => l.clear_cache(),
            Layer::Flatten(_) | Layer::Reshape(_) | Layer::Repeat(_) => {}
        }
    }
}
