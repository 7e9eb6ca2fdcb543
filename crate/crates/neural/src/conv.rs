use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng;

use crate::error::{dim_err, NeuralError, Result};
use crate::init::glorot_uniform;
use crate::param::ParamTensor;
use crate::Tensor;

/// Same-padded, stride-1 1-D convolution computed as im2col + GEMM.
///
/// The kernel is stored `(out_channels, in_channels * kernel)` with the tap
/// index varying fastest, so output `y[o, t] = b[o] + sum_{c,j} W[o, c*k + j]
/// * x[c, t + j - k/2]` with zero padding outside the signal.
#[derive(Debug, Clone)]
pub(crate) struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: ParamTensor,
    pub bias: ParamTensor,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    cols: Array2<f64>,
    batch: usize,
    len: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel;
        let fan_out = out_channels * kernel;
        let w = glorot_uniform(rng, out_channels * fan_in, fan_in, fan_out);
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: ParamTensor::new(format!("{prefix}.weight"), vec![out_channels, fan_in], w),
            bias: ParamTensor::zeros(format!("{prefix}.bias"), vec![out_channels]),
            cache: None,
        }
    }

    fn im2col(&self, x: &Tensor) -> Array2<f64> {
        let (batch, cin, len) = x.dim();
        let k = self.kernel;
        let pad = k / 2;
        let width = batch * len;
        let mut cols = vec![0.0; cin * k * width];
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().expect("standard layout");
        for c in 0..cin {
            for j in 0..k {
                let row = &mut cols[(c * k + j) * width..(c * k + j + 1) * width];
                for b in 0..batch {
                    let src = &xs[(b * cin + c) * len..(b * cin + c + 1) * len];
                    let dst = &mut row[b * len..(b + 1) * len];
                    // dst[t] = src[t + j - pad]
                    if j >= pad {
                        let shift = j - pad;
                        if shift < len {
                            dst[..len - shift].copy_from_slice(&src[shift..]);
                        }
                    } else {
                        let shift = pad - j;
                        if shift < len {
                            dst[shift..].copy_from_slice(&src[..len - shift]);
                        }
                    }
                }
            }
        }
        Array2::from_shape_vec((cin * k, width), cols).expect("im2col shape")
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (batch, cin, len) = x.dim();
        if cin != self.in_channels {
            return Err(dim_err(
                "conv1d",
                format!("(_, {}, _)", self.in_channels),
                format!("{:?}", x.dim()),
            ));
        }
        let cols = self.im2col(x);
        let mut y2 = Array2::<f64>::zeros((self.out_channels, batch * len));
        general_mat_mul(1.0, &self.weight.matrix(), &cols, 0.0, &mut y2);
        let mut y = Tensor::zeros((batch, self.out_channels, len));
        for o in 0..self.out_channels {
            let bias = self.bias.values[o];
            let row = y2.row(o);
            let row = row.as_slice().expect("row contiguous");
            for b in 0..batch {
                let mut dst = y.slice_mut(ndarray::s![b, o, ..]);
                for (d, &v) in dst.iter_mut().zip(&row[b * len..(b + 1) * len]) {
                    *d = v + bias;
                }
            }
        }
        self.cache = Some(ConvCache { cols, batch, len });
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| NeuralError::MissingCache("conv1d".into()))?;
        let (batch, len) = (cache.batch, cache.len);
        if grad.dim() != (batch, self.out_channels, len) {
            return Err(dim_err(
                "conv1d",
                format!("({batch}, {}, {len})", self.out_channels),
                format!("{:?}", grad.dim()),
            ));
        }
        let width = batch * len;
        let mut g2 = Array2::<f64>::zeros((self.out_channels, width));
        for o in 0..self.out_channels {
            for b in 0..batch {
                let src = grad.slice(ndarray::s![b, o, ..]);
                let mut dst = g2.slice_mut(ndarray::s![o, b * len..(b + 1) * len]);
                dst.assign(&src);
            }
        }
        general_mat_mul(
            1.0,
            &g2,
            &cache.cols.t(),
            1.0,
            &mut self.weight.grad_matrix_mut(),
        );
        for (db, row) in self.bias.grad.iter_mut().zip(g2.axis_iter(Axis(0))) {
            *db += row.sum();
        }
        let mut dcols = Array2::<f64>::zeros((self.in_channels * self.kernel, width));
        general_mat_mul(1.0, &self.weight.matrix().t(), &g2, 0.0, &mut dcols);

        let k = self.kernel;
        let pad = k / 2;
        let mut dx = Tensor::zeros((batch, self.in_channels, len));
        {
            let dxs = dx.as_slice_mut().expect("fresh tensor");
            let dc = dcols.as_slice().expect("fresh matrix");
            for c in 0..self.in_channels {
                for j in 0..k {
                    let row = &dc[(c * k + j) * width..(c * k + j + 1) * width];
                    for b in 0..batch {
                        let src = &row[b * len..(b + 1) * len];
                        let dst = &mut dxs[(b * self.in_channels + c) * len
                            ..(b * self.in_channels + c + 1) * len];
                        // forward read x[t + j - pad] into column t
                        if j >= pad {
                            let shift = j - pad;
                            if shift < len {
                                for (d, s) in dst[shift..].iter_mut().zip(&src[..len - shift]) {
                                    *d += s;
                                }
                            }
                        } else {
                            let shift = pad - j;
                            if shift < len {
                                for (d, s) in dst[..len - shift].iter_mut().zip(&src[shift..]) {
                                    *d += s;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
