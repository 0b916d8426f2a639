use rand::Rng;

use super::matrix::gemm_slices;
use super::{Matrix, NnError, Scalar};

/// A named trainable array with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self, NnError> {
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(NnError::ShapeMismatch {
                expected: shape,
                found: vec![values.len()],
            });
        }
        Ok(Self {
            name: name.into(),
            shape,
            grad: vec![T::zero(); len],
            values,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            values: vec![T::zero(); len],
            grad: vec![T::zero(); len],
        }
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
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn cast<U: Scalar>(&self) -> Param<U> {
        Param {
            name: self.name.clone(),
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| U::of(v.as_f64())).collect(),
            grad: self.grad.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Fully connected layer `y = x W + b`, with `W` stored `[in, out]`.
///
/// Applied row-wise, so the same layer serves as a kernel-size-1 convolution
/// over the points of a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Dense<T> {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let values = (0..fan_in * fan_out)
            .map(|_| T::of(rng.gen_range(-limit..=limit)))
            .collect();
        Self {
            weight: Param {
                name: "weight".into(),
                shape: vec![fan_in, fan_out],
                grad: vec![T::zero(); fan_in * fan_out],
                values,
            },
            bias: Param::zeros("bias", vec![fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        if x.cols() != self.fan_in() {
            return Err(NnError::ShapeMismatch {
                expected: vec![x.rows(), self.fan_in()],
                found: x.shape().to_vec(),
            });
        }
        let mut y = Matrix::zeros(x.rows(), self.fan_out());
        for r in 0..x.rows() {
            y.row_mut(r).copy_from_slice(&self.bias.values);
        }
        let (rows, cols) = (y.rows(), y.cols());
        gemm_slices(
            (x.as_slice(), x.rows(), x.cols()),
            false,
            (&self.weight.values, self.fan_in(), self.fan_out()),
            false,
            (y.as_mut_slice(), rows, cols),
            true,
        )?;
        Ok(y)
    }

    /// `dx = dy W^T`.
    pub fn input_grad(&self, dy: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        if dy.cols() != self.fan_out() {
            return Err(NnError::ShapeMismatch {
                expected: vec![dy.rows(), self.fan_out()],
                found: dy.shape().to_vec(),
            });
        }
        let mut dx = Matrix::zeros(dy.rows(), self.fan_in());
        let (rows, cols) = (dx.rows(), dx.cols());
        gemm_slices(
            (dy.as_slice(), dy.rows(), dy.cols()),
            false,
            (&self.weight.values, self.fan_in(), self.fan_out()),
            true,
            (dx.as_mut_slice(), rows, cols),
            false,
        )?;
        Ok(dx)
    }

    /// `dW += x^T dy`, `db += sum_rows(dy)`.
    pub fn accumulate_grads(&mut self, x: &Matrix<T>, dy: &Matrix<T>) -> Result<(), NnError> {
        if x.rows() != dy.rows() || x.cols() != self.fan_in() || dy.cols() != self.fan_out() {
            return Err(NnError::ShapeMismatch {
                expected: vec![x.rows(), self.fan_in(), self.fan_out()],
                found: vec![dy.rows(), x.cols(), dy.cols()],
            });
        }
        let (fi, fo) = (self.fan_in(), self.fan_out());
        gemm_slices(
            (x.as_slice(), x.rows(), x.cols()),
            true,
            (dy.as_slice(), dy.rows(), dy.cols()),
            false,
            (&mut self.weight.grad, fi, fo),
            true,
        )?;
        for r in 0..dy.rows() {
            for (g, &d) in self.bias.grad.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        Ok(())
    }
}

/// The closed set of layer kinds the pipeline's networks are built from.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    /// Dense layer over a batch of samples.
    Dense(Dense<T>),
    /// Dense layer shared across the points (rows) of one cloud.
    PointwiseConv(Dense<T>),
    Relu,
    Tanh,
    /// Elementwise maximum over rows: `N x C -> 1 x C`.
    MaxPoolOverPoints,
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::PointwiseConv(_) => "pointwise_conv",
            Layer::Relu => "relu",
            Layer::Tanh => "tanh",
            Layer::MaxPoolOverPoints => "max_pool_over_points",
        }
    }

    pub fn dense(&self) -> Option<&Dense<T>> {
        match self {
            Layer::Dense(d) | Layer::PointwiseConv(d) => Some(d),
            _ => None,
        }
    }

    pub fn dense_mut(&mut self) -> Option<&mut Dense<T>> {
        match self {
            Layer::Dense(d) | Layer::PointwiseConv(d) => Some(d),
            _ => None,
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        match self {
            Layer::Dense(d) | Layer::PointwiseConv(d) => d.forward(x),
            Layer::Relu => Ok(x.map(|v| if v > T::zero() { v } else { T::zero() })),
            Layer::Tanh => Ok(x.map(|v| v.tanh())),
            Layer::MaxPoolOverPoints => Ok(max_pool(x)?.0),
        }
    }

    /// Gradient with respect to the layer input, given the cached input `x`,
    /// output `y` and the upstream gradient `dy`. Does not touch parameter grads.
    pub fn input_grad(
        &self,
        x: &Matrix<T>,
        y: &Matrix<T>,
        dy: &Matrix<T>,
    ) -> Result<Matrix<T>, NnError> {
        match self {
            Layer::Dense(d) | Layer::PointwiseConv(d) => d.input_grad(dy),
            Layer::Relu => {
                check_same(x, dy)?;
                let mut dx = dy.clone();
                for (g, &v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if v <= T::zero() {
                        *g = T::zero();
                    }
                }
                Ok(dx)
            }
            Layer::Tanh => {
                check_same(y, dy)?;
                let mut dx = dy.clone();
                for (g, &t) in dx.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *g *= T::one() - t * t;
                }
                Ok(dx)
            }
            Layer::MaxPoolOverPoints => {
                let (_, argmax) = max_pool(x)?;
                max_pool_backward(x.rows(), &argmax, dy)
            }
        }
    }
}

fn check_same<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch {
            expected: a.shape().to_vec(),
            found: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Column-wise maximum over rows and the winning row per column
/// (ties resolved to the lowest row index).
pub fn max_pool<T: Scalar>(x: &Matrix<T>) -> Result<(Matrix<T>, Vec<usize>), NnError> {
    if x.rows() == 0 {
        return Err(NnError::EmptyInput);
    }
    let mut out = x.row(0).to_vec();
    let mut argmax = vec![0usize; x.cols()];
    for r in 1..x.rows() {
        for (c, &v) in x.row(r).iter().enumerate() {
            if v > out[c] {
                out[c] = v;
                argmax[c] = r;
            }
        }
    }
    Ok((Matrix::from_vec(1, x.cols(), out)?, argmax))
}

pub fn max_pool_backward<T: Scalar>(
    rows: usize,
    argmax: &[usize],
    dy: &Matrix<T>,
) -> Result<Matrix<T>, NnError> {
    if dy.rows() != 1 || dy.cols() != argmax.len() {
        return Err(NnError::ShapeMismatch {
            expected: vec![1, argmax.len()],
            found: dy.shape().to_vec(),
        });
    }
    let mut dx = Matrix::zeros(rows, argmax.len());
    for (c, &r) in argmax.iter().enumerate() {
        dx.row_mut(r)[c] += dy.get(0, c);
    }
    Ok(dx)
}
