use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use crate::activation::sigmoid;
use crate::error::{dim_err, NeuralError, Result};
use crate::init::uniform;
use crate::param::ParamTensor;
use crate::Tensor;

/// One LSTM cell layer. Gate blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone)]
struct Cell {
    input: usize,
    hidden: usize,
    w_ih: ParamTensor,
    w_hh: ParamTensor,
    bias: ParamTensor,
    cache: Option<CellCache>,
}

/// Time-major cached activations of one cell.
#[derive(Debug, Clone)]
struct CellCache {
    /// `(T, B, input)`
    x: Array3<f64>,
    /// `(T + 1, B, H)`; index 0 is the zero initial state.
    h: Array3<f64>,
    c: Array3<f64>,
    /// Post-nonlinearity gates, `(T, B, 4H)`.
    gates: Array3<f64>,
    /// `tanh(c_t)`, `(T, B, H)`.
    tanh_c: Array3<f64>,
}

fn flat(a: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (t, b, f) = a.dim();
    a.view()
        .into_shape_with_order((t * b, f))
        .expect("time-major arrays are contiguous")
}

impl Cell {
    fn new<R: Rng + ?Sized>(prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let limit = 1.0 / (hidden as f64).sqrt();
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Self {
            input,
            hidden,
            w_ih: ParamTensor::new(
                format!("{prefix}.w_ih"),
                vec![4 * hidden, input],
                uniform(rng, 4 * hidden * input, limit),
            ),
            w_hh: ParamTensor::new(
                format!("{prefix}.w_hh"),
                vec![4 * hidden, hidden],
                uniform(rng, 4 * hidden * hidden, limit),
            ),
            bias: ParamTensor::new(format!("{prefix}.bias"), vec![4 * hidden], bias),
            cache: None,
        }
    }

    /// `x` is `(T, B, input)`; returns hidden states `(T, B, H)`.
    fn forward(&mut self, x: Array3<f64>) -> Array3<f64> {
        let (steps, batch, _) = x.dim();
        let hd = self.hidden;
        let mut proj = Array2::<f64>::zeros((steps * batch, 4 * hd));
        general_mat_mul(1.0, &flat(&x), &self.w_ih.matrix().t(), 0.0, &mut proj);
        proj += &self.bias.vector();

        let mut h = Array3::<f64>::zeros((steps + 1, batch, hd));
        let mut c = Array3::<f64>::zeros((steps + 1, batch, hd));
        let mut gates = Array3::<f64>::zeros((steps, batch, 4 * hd));
        let mut tanh_c = Array3::<f64>::zeros((steps, batch, hd));
        let w_hh = self.w_hh.matrix();
        let mut pre = Array2::<f64>::zeros((batch, 4 * hd));

        for t in 0..steps {
            pre.assign(&proj.slice(s![t * batch..(t + 1) * batch, ..]));
            general_mat_mul(1.0, &h.index_axis(Axis(0), t), &w_hh.t(), 1.0, &mut pre);
            for b in 0..batch {
                for j in 0..hd {
                    let i_g = sigmoid(pre[[b, j]]);
                    let f_g = sigmoid(pre[[b, hd + j]]);
                    let g_g = pre[[b, 2 * hd + j]].tanh();
                    let o_g = sigmoid(pre[[b, 3 * hd + j]]);
                    let c_new = f_g * c[[t, b, j]] + i_g * g_g;
                    let tc = c_new.tanh();
                    c[[t + 1, b, j]] = c_new;
                    h[[t + 1, b, j]] = o_g * tc;
                    tanh_c[[t, b, j]] = tc;
                    gates[[t, b, j]] = i_g;
                    gates[[t, b, hd + j]] = f_g;
                    gates[[t, b, 2 * hd + j]] = g_g;
                    gates[[t, b, 3 * hd + j]] = o_g;
                }
            }
        }
        let out = h.slice(s![1.., .., ..]).to_owned();
        self.cache = Some(CellCache {
            x,
            h,
            c,
            gates,
            tanh_c,
        });
        out
    }

    /// `dh_out` is `(T, B, H)`; returns the gradient w.r.t. the input.
    fn backward(&mut self, dh_out: &Array3<f64>) -> Result<Array3<f64>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| NeuralError::MissingCache("lstm".into()))?;
        let (steps, batch, _) = cache.x.dim();
        let hd = self.hidden;
        let w_hh = self.w_hh.matrix();
        let mut dgates = Array3::<f64>::zeros((steps, batch, 4 * hd));
        let mut dh_next = Array2::<f64>::zeros((batch, hd));
        let mut dc_next = Array2::<f64>::zeros((batch, hd));

        for t in (0..steps).rev() {
            for b in 0..batch {
                for j in 0..hd {
                    let i_g = cache.gates[[t, b, j]];
                    let f_g = cache.gates[[t, b, hd + j]];
                    let g_g = cache.gates[[t, b, 2 * hd + j]];
                    let o_g = cache.gates[[t, b, 3 * hd + j]];
                    let tc = cache.tanh_c[[t, b, j]];
                    let dh = dh_out[[t, b, j]] + dh_next[[b, j]];
                    let d_o = dh * tc;
                    let dc = dc_next[[b, j]] + dh * o_g * (1.0 - tc * tc);
                    let d_i = dc * g_g;
                    let d_g = dc * i_g;
                    let d_f = dc * cache.c[[t, b, j]];
                    dc_next[[b, j]] = dc * f_g;
                    dgates[[t, b, j]] = d_i * i_g * (1.0 - i_g);
                    dgates[[t, b, hd + j]] = d_f * f_g * (1.0 - f_g);
                    dgates[[t, b, 2 * hd + j]] = d_g * (1.0 - g_g * g_g);
                    dgates[[t, b, 3 * hd + j]] = d_o * o_g * (1.0 - o_g);
                }
            }
            general_mat_mul(1.0, &dgates.index_axis(Axis(0), t), &w_hh, 0.0, &mut dh_next);
        }

        let dg = flat(&dgates);
        let h_prev = cache.h.slice(s![..steps, .., ..]);
        let h_prev = h_prev
            .into_shape_with_order((steps * batch, hd))
            .expect("leading slice of a standard array is contiguous");
        general_mat_mul(1.0, &dg.t(), &h_prev, 1.0, &mut self.w_hh.grad_matrix_mut());
        general_mat_mul(1.0, &dg.t(), &flat(&cache.x), 1.0, &mut self.w_ih.grad_matrix_mut());
        for (db, col) in self.bias.grad.iter_mut().zip(dg.axis_iter(Axis(1))) {
            *db += col.sum();
        }
        let mut dx = Array2::<f64>::zeros((steps * batch, self.input));
        general_mat_mul(1.0, &dg, &self.w_ih.matrix(), 0.0, &mut dx);
        Ok(dx
            .into_shape_with_order((steps, batch, self.input))
            .expect("sizes match"))
    }
}

/// Stacked LSTM over `(batch, features, time)` tensors.
#[derive(Debug, Clone)]
pub(crate) struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub return_sequences: bool,
    cells: Vec<Cell>,
    steps: Option<usize>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        return_sequences: bool,
        rng: &mut R,
    ) -> Self {
        let cells = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                Cell::new(&format!("{prefix}.cell{l}"), inp, hidden, rng)
            })
            .collect();
        Self {
            input,
            hidden,
            return_sequences,
            cells,
            steps: None,
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        self.cells
            .iter()
            .flat_map(|c| [&c.w_ih, &c.w_hh, &c.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.cells
            .iter_mut()
            .flat_map(|c| [&mut c.w_ih, &mut c.w_hh, &mut c.bias])
            .collect()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (_, feats, steps) = x.dim();
        if feats != self.input || steps == 0 {
            return Err(dim_err(
                "lstm",
                format!("(_, {}, T>=1)", self.input),
                format!("{:?}", x.dim()),
            ));
        }
        let mut seq = x.view().permuted_axes([2, 0, 1]).as_standard_layout().to_owned();
        for cell in &mut self.cells {
            seq = cell.forward(seq);
        }
        self.steps = Some(steps);
        // seq: (T, B, H) -> (B, H, T)
        let out = seq.permuted_axes([1, 2, 0]).as_standard_layout().to_owned();
        if self.return_sequences {
            Ok(out)
        } else {
            Ok(out.slice(s![.., .., steps - 1..]).to_owned())
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let steps = self
            .steps
            .ok_or_else(|| NeuralError::MissingCache("lstm".into()))?;
        let (batch, hd, glen) = grad.dim();
        let expected_len = if self.return_sequences { steps } else { 1 };
        if hd != self.hidden || glen != expected_len {
            return Err(dim_err(
                "lstm",
                format!("(_, {}, {expected_len})", self.hidden),
                format!("{:?}", grad.dim()),
            ));
        }
        let mut dh = Array3::<f64>::zeros((steps, batch, hd));
        if self.return_sequences {
            dh.assign(&grad.view().permuted_axes([2, 0, 1]));
        } else {
            dh.index_axis_mut(Axis(0), steps - 1)
                .assign(&grad.index_axis(Axis(2), 0));
        }
        for cell in self.cells.iter_mut().rev() {
            dh = cell.backward(&dh)?;
        }
        Ok(dh.permuted_axes([1, 2, 0]).as_standard_layout().to_owned())
    }

    pub fn clear_cache(&mut self) {
        self.steps = None;
        for c in &mut self.cells {
            c.cache = None;
        }
    }
}
