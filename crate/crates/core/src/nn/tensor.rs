use crate::error::{Error, Result};

/// Dense row-major array of rank ≤ 3 with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        assert!(dims.len() <= 3, "rank {} > 3", dims.len());
        Tensor { dims: dims.to_vec(), data: vec![value; dims.iter().product()], grad: None }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        if dims.len() > 3 {
            return Err(Error::Shape(format!("rank {} exceeds 3", dims.len())));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Tensor { dims: dims.to_vec(), data, grad: None })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { dims: vec![], data: vec![value], grad: None }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::Shape(format!("gradient of length {} for tensor {:?}", grad.len(), self.dims)));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Vec<f64>> {
        self.grad.take()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Extent of dimension `i`.
    pub fn dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub(crate) fn expect_dims(&self, what: &str, rank: usize) -> Result<()> {
        if self.dims.len() != rank {
            return Err(Error::Shape(format!("{what}: expected rank {rank}, got dims {:?}", self.dims)));
        }
        Ok(())
    }
}
