use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{NeuralError, Result};

/// Declarative description of one layer.
///
/// A network is a plain list of these; the same list is persisted in
/// checkpoints so a model can be rebuilt without code changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Affine map on `(batch, inputs, 1)` to `(batch, units, 1)`.
    Dense { inputs: usize, units: usize },
    /// Same-padded, stride-1 convolution over the length axis.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    /// Stacked LSTM reading `(batch, input, time)` left to right.
    Lstm {
        input: usize,
        hidden: usize,
        layers: usize,
        return_sequences: bool,
    },
    Activation { function: Activation },
    /// `(batch, c, l)` to `(batch, c * l, 1)`.
    Flatten,
    /// `(batch, c * l, 1)` to `(batch, c, l)`.
    Reshape { channels: usize, length: usize },
    /// `(batch, f, 1)` to `(batch, f, length)` by copying along time.
    Repeat { length: usize },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NeuralError::InvalidSpec(msg));
        match *self {
            LayerSpec::Dense { inputs, units } if inputs == 0 || units == 0 => {
                bad(format!("dense needs nonzero sizes, got {inputs}->{units}"))
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
            } => {
                if kernel % 2 == 0 {
                    bad(format!("conv1d kernel must be odd, got {kernel}"))
                } else if in_channels == 0 || out_channels == 0 {
                    bad("conv1d needs nonzero channel counts".into())
                } else {
                    Ok(())
                }
            }
            LayerSpec::Lstm {
                input,
                hidden,
                layers,
                ..
            } if input == 0 || hidden == 0 || layers == 0 => bad(format!(
                "lstm needs input, hidden and layers >= 1, got {input}/{hidden}/{layers}"
            )),
            LayerSpec::Reshape { channels, length } if channels == 0 || length == 0 => {
                bad("reshape needs nonzero dimensions".into())
            }
            LayerSpec::Repeat { length: 0 } => bad("repeat length must be >= 1".into()),
            _ => Ok(()),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Repeat { .. } => "repeat",
        }
    }
}
