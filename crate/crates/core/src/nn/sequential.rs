use std::borrow::Cow;

use super::layers::{max_pool, Dense, Layer};
use super::{Matrix, NnError, Param, Scalar};

/// A feed-forward stack of layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

/// Cached activations from a training forward pass.
///
/// `acts[0]` is the input and `acts[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    acts: Vec<Matrix<T>>,
    argmax: Vec<Option<Vec<usize>>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.acts.last().expect("trace holds at least the input")
    }

    pub fn input(&self) -> &Matrix<T> {
        &self.acts[0]
    }

    /// Input of layer `i`.
    pub fn activation(&self, i: usize) -> &Matrix<T> {
        &self.acts[i]
    }
}

/// Gradient flowing backwards. When `rows` is set, `grad` only holds the listed
/// rows of the full activation; every other row is exactly zero.
struct RowGrad<T> {
    rows: Option<Vec<usize>>,
    grad: Matrix<T>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    /// Dense stack `widths[0] -> widths[1] -> ...` with `hidden` after every
    /// layer but the last and `head` (if any) after the last.
    pub fn mlp<R: rand::Rng + ?Sized>(
        widths: &[usize],
        hidden: Layer<T>,
        head: Option<Layer<T>>,
        pointwise: bool,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::new();
        for (i, w) in widths.windows(2).enumerate() {
            let d = Dense::glorot(w[0], w[1], rng);
            layers.push(if pointwise {
                Layer::PointwiseConv(d)
            } else {
                Layer::Dense(d)
            });
            if i + 2 < widths.len() {
                layers.push(hidden.clone());
            } else if let Some(h) = &head {
                layers.push(h.clone());
            }
        }
        Self { layers }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        let mut cur = Cow::Borrowed(x);
        for layer in &self.layers {
            cur = Cow::Owned(layer.forward(&cur)?);
        }
        Ok(cur.into_owned())
    }

    pub fn forward_trace(&self, x: &Matrix<T>) -> Result<Trace<T>, NnError> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for layer in &self.layers {
            let input = acts.last().expect("non-empty");
            let (out, arg) = match layer {
                Layer::MaxPoolOverPoints => {
                    let (y, a) = max_pool(input)?;
                    (y, Some(a))
                }
                _ => (layer.forward(input)?, None),
            };
            acts.push(out);
            argmax.push(arg);
        }
        Ok(Trace { acts, argmax })
    }

    /// Backpropagates `dy`, accumulating parameter gradients, and returns the
    /// gradient with respect to the network input.
    pub fn backward(&mut self, trace: &Trace<T>, dy: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        let mut g = RowGrad {
            rows: None,
            grad: dy.clone(),
        };
        for i in (0..self.layers.len()).rev() {
            if let Some(d) = self.layers[i].dense_mut() {
                let x = rows_of(&trace.acts[i], g.rows.as_deref());
                d.accumulate_grads(&x, &g.grad)?;
            }
            g = step_back(&self.layers[i], i, trace, g)?;
        }
        Ok(scatter(g, trace.acts[0].rows()))
    }

    /// Input gradient only; parameter gradients are left untouched.
    pub fn input_grad(&self, trace: &Trace<T>, dy: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        let mut g = RowGrad {
            rows: None,
            grad: dy.clone(),
        };
        for i in (0..self.layers.len()).rev() {
            g = step_back(&self.layers[i], i, trace, g)?;
        }
        Ok(scatter(g, trace.acts[0].rows()))
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers
            .iter()
            .filter_map(|l| l.dense())
            .flat_map(|d| [&d.weight, &d.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers
            .iter_mut()
            .filter_map(|l| l.dense_mut())
            .flat_map(|d| [&mut d.weight, &mut d.bias])
            .collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Sequential<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => Layer::Dense(cast_dense(d)),
                Layer::PointwiseConv(d) => Layer::PointwiseConv(cast_dense(d)),
                Layer::Relu => Layer::Relu,
                Layer::Tanh => Layer::Tanh,
                Layer::MaxPoolOverPoints => Layer::MaxPoolOverPoints,
            })
            .collect();
        Sequential { layers }
    }

    /// The last dense layer, if any.
    pub fn head_mut(&mut self) -> Option<&mut Dense<T>> {
        self.layers.iter_mut().rev().find_map(|l| l.dense_mut())
    }
}

fn cast_dense<T: Scalar, U: Scalar>(d: &Dense<T>) -> Dense<U> {
    Dense {
        weight: d.weight.cast(),
        bias: d.bias.cast(),
    }
}

fn step_back<T: Scalar>(
    layer: &Layer<T>,
    i: usize,
    trace: &Trace<T>,
    g: RowGrad<T>,
) -> Result<RowGrad<T>, NnError> {
    if let Layer::MaxPoolOverPoints = layer {
        let full = scatter(g, trace.acts[i + 1].rows());
        let argmax = trace.argmax[i]
            .as_ref()
            .expect("max-pool trace records argmax");
        // Only winning rows receive gradient; keep the rest implicit.
        let mut active: Vec<usize> = argmax.clone();
        active.sort_unstable();
        active.dedup();
        let mut grad = Matrix::zeros(active.len(), argmax.len());
        for (c, &r) in argmax.iter().enumerate() {
            let slot = active.binary_search(&r).expect("argmax row is active");
            grad.row_mut(slot)[c] += full.get(0, c);
        }
        return Ok(RowGrad {
            rows: Some(active),
            grad,
        });
    }
    let x = rows_of(&trace.acts[i], g.rows.as_deref());
    let y = rows_of(&trace.acts[i + 1], g.rows.as_deref());
    let grad = layer.input_grad(&x, &y, &g.grad)?;
    Ok(RowGrad { rows: g.rows, grad })
}

fn rows_of<'a, T: Scalar>(m: &'a Matrix<T>, rows: Option<&[usize]>) -> Cow<'a, Matrix<T>> {
    match rows {
        Some(r) => Cow::Owned(m.gather_rows(r)),
        None => Cow::Borrowed(m),
    }
}

fn scatter<T: Scalar>(g: RowGrad<T>, n_rows: usize) -> Matrix<T> {
    match g.rows {
        None => g.grad,
        Some(rows) => {
            let mut full = Matrix::zeros(n_rows, g.grad.cols());
            for (k, &r) in rows.iter().enumerate() {
                full.row_mut(r).copy_from_slice(g.grad.row(k));
            }
            full
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pointnet(rng: &mut ChaCha8Rng) -> Sequential<f64> {
        let mut net = Sequential::mlp(&[3, 8, 6], Layer::Relu, Some(Layer::Relu), true, rng);
        net.layers.push(Layer::MaxPoolOverPoints);
        net
    }

    #[test]
    fn sparse_backward_matches_dense_routing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = pointnet(&mut rng);
        let x =
            Matrix::from_vec(20, 3, (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let trace = net.forward_trace(&x).unwrap();
        let dy = Matrix::from_vec(1, 6, (0..6).map(|i| i as f64 - 2.5).collect()).unwrap();
        let sparse = net.input_grad(&trace, &dy).unwrap();

        // Reference: route through every layer with full matrices.
        let mut g = dy.clone();
        for i in (0..net.layers.len()).rev() {
            g = net.layers[i]
                .input_grad(&trace.acts[i], &trace.acts[i + 1], &g)
                .unwrap();
        }
        assert_eq!(sparse, g);
    }

    #[test]
    fn input_grad_leaves_params_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Sequential::<f64>::mlp(&[4, 5, 2], Layer::Tanh, None, false, &mut rng);
        let x = Matrix::from_vec(3, 4, vec![0.1; 12]).unwrap();
        let t = net.forward_trace(&x).unwrap();
        let dy = Matrix::from_vec(3, 2, vec![1.0; 6]).unwrap();
        let a = net.input_grad(&t, &dy).unwrap();
        assert!(net
            .params()
            .iter()
            .all(|p| p.grad.iter().all(|&g| g == 0.0)));
        let b = net.backward(&t, &dy).unwrap();
        assert_eq!(a, b);
        assert!(net
            .params()
            .iter()
            .any(|p| p.grad.iter().any(|&g| g != 0.0)));
        net.zero_grad();
        assert!(net
            .params()
            .iter()
            .all(|p| p.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn trace_output_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = pointnet(&mut rng);
        let x = Matrix::from_vec(7, 3, (0..21).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        assert_eq!(
            net.forward(&x).unwrap(),
            *net.forward_trace(&x).unwrap().output()
        );
    }
}
