use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};

/// A learnable tensor with its accumulated gradient.
///
/// Values are stored flat in row-major order; `shape` never changes after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        let len: usize = shape.iter().product();
        assert_eq!(len, values.len(), "parameter values do not match shape");
        Self {
            name: name.into(),
            shape,
            grad: vec![0.0; len],
            values,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(name, shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub(crate) fn matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.values)
            .expect("parameter is not a matrix")
    }

    pub(crate) fn grad_matrix_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.grad)
            .expect("parameter is not a matrix")
    }

    pub(crate) fn vector(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[..])
    }
}
