use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng;

use crate::error::{dim_err, NeuralError, Result};
use crate::init::glorot_uniform;
use crate::param::ParamTensor;
use crate::Tensor;

/// `y = W x + b` applied per batch row. `W` is stored `(units, inputs)`.
#[derive(Debug, Clone)]
pub(crate) struct Dense {
    pub inputs: usize,
    pub units: usize,
    pub weight: ParamTensor,
    pub bias: ParamTensor,
    input: Option<Array2<f64>>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(prefix: &str, inputs: usize, units: usize, rng: &mut R) -> Self {
        let w = glorot_uniform(rng, inputs * units, inputs, units);
        Self {
            inputs,
            units,
            weight: ParamTensor::new(format!("{prefix}.weight"), vec![units, inputs], w),
            bias: ParamTensor::zeros(format!("{prefix}.bias"), vec![units]),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (batch, feats, len) = x.dim();
        if feats != self.inputs || len != 1 {
            return Err(dim_err(
                "dense",
                format!("(_, {}, 1)", self.inputs),
                format!("{:?}", x.dim()),
            ));
        }
        let x2 = x
            .view()
            .into_shape_with_order((batch, feats))
            .map_err(|e| dim_err("dense", "contiguous input", e))?
            .to_owned();
        let mut y = Array2::<f64>::zeros((batch, self.units));
        general_mat_mul(1.0, &x2, &self.weight.matrix().t(), 0.0, &mut y);
        y += &self.bias.vector();
        self.input = Some(x2);
        Ok(y.insert_axis(Axis(2)))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| NeuralError::MissingCache("dense".into()))?;
        let batch = x.nrows();
        if grad.dim() != (batch, self.units, 1) {
            return Err(dim_err(
                "dense",
                format!("({batch}, {}, 1)", self.units),
                format!("{:?}", grad.dim()),
            ));
        }
        let g = grad.index_axis(Axis(2), 0);
        general_mat_mul(1.0, &g.t(), x, 1.0, &mut self.weight.grad_matrix_mut());
        for (db, col) in self.bias.grad.iter_mut().zip(g.axis_iter(Axis(1))) {
            *db += col.sum();
        }
        let mut dx = Array2::<f64>::zeros((batch, self.inputs));
        general_mat_mul(1.0, &g, &self.weight.matrix(), 0.0, &mut dx);
        Ok(dx.insert_axis(Axis(2)))
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}
