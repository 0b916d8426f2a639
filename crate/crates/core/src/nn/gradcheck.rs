//! Central finite-difference gradient checking in 64-bit arithmetic.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, NnError, Param, Sequential};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients at or below this magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Location of the worst entry, e.g. `"3.weight[17]"` or `"input[4]"`.
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_rel_error: 0.0,
            worst: String::new(),
            checked: 0,
        }
    }

    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = self.max_rel_error.max(err);
            self.worst = label();
        }
    }

    pub fn merge(mut self, other: GradCheckReport) -> Self {
        if other.max_rel_error > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` around `point`.
pub fn check_vector(
    point: &[f64],
    analytic: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    h: f64,
    label: &str,
) -> GradCheckReport {
    assert_eq!(point.len(), analytic.len());
    let mut x = point.to_vec();
    let mut report = GradCheckReport::empty();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        report.record(
            || format!("{label}[{i}]"),
            analytic[i],
            (up - down) / (2.0 * h),
        );
    }
    report
}

/// Checks parameter gradients of any model exposing its `f64` parameters.
///
/// `loss_and_grad` must zero, then fill, parameter gradients and return the
/// loss; `loss` evaluates the loss only. At most `max_per_param` entries of
/// each array are probed, chosen by `seed`.
pub fn check_params<M>(
    model: &mut M,
    params: impl Fn(&mut M) -> Vec<&mut Param<f64>>,
    mut loss_and_grad: impl FnMut(&mut M) -> f64,
    mut loss: impl FnMut(&M) -> f64,
    h: f64,
    max_per_param: usize,
    seed: u64,
) -> GradCheckReport {
    loss_and_grad(model);
    let analytic: Vec<Vec<f64>> = params(model).iter().map(|p| p.grad.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::empty();
    for (pi, grads) in analytic.iter().enumerate() {
        let n = grads.len();
        let picks: Vec<usize> = if n <= max_per_param {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, max_per_param).into_vec();
            v.sort_unstable();
            v
        };
        for j in picks {
            let orig = params(model)[pi].values[j];
            params(model)[pi].values[j] = orig + h;
            let up = loss(model);
            params(model)[pi].values[j] = orig - h;
            let down = loss(model);
            params(model)[pi].values[j] = orig;
            let name = params(model)[pi].name.clone();
            report.record(
                || format!("{pi}.{name}[{j}]"),
                grads[j],
                (up - down) / (2.0 * h),
            );
        }
    }
    report
}

/// Checks every parameter and input gradient of `net` under the scalar loss
/// `sum(output * c)` for a fixed random projection `c`.
pub fn finite_difference_check(
    net: &mut Sequential<f64>,
    input: &Matrix<f64>,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    let out_shape = net.forward(input)?.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = Matrix::from_vec(
        out_shape[0],
        out_shape[1],
        (0..out_shape[0] * out_shape[1])
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )?;
    let dot = |m: &Matrix<f64>| -> f64 {
        m.as_slice()
            .iter()
            .zip(proj.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    };

    net.zero_grad();
    let trace = net.forward_trace(input)?;
    let dx = net.backward(&trace, &proj)?;
    let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();

    let mut report = GradCheckReport::empty();
    {
        let net_ref = &*net;
        report = report.merge(check_vector(
            input.as_slice(),
            dx.as_slice(),
            |x| {
                let m =
                    Matrix::from_vec(input.rows(), input.cols(), x.to_vec()).expect("same shape");
                dot(&net_ref.forward(&m).expect("checked shape"))
            },
            h,
            "input",
        ));
    }
    for (pi, grads) in analytic.iter().enumerate() {
        for j in 0..grads.len() {
            let orig = net.params()[pi].values[j];
            net.params_mut()[pi].values[j] = orig + h;
            let up = dot(&net.forward(input)?);
            net.params_mut()[pi].values[j] = orig - h;
            let down = dot(&net.forward(input)?);
            net.params_mut()[pi].values[j] = orig;
            let name = net.params()[pi].name.clone();
            report.record(
                || format!("{pi}.{name}[{j}]"),
                grads[j],
                (up - down) / (2.0 * h),
            );
        }
    }
    net.zero_grad();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    #[test]
    fn identity_network_has_zero_error() {
        let mut net = Sequential::<f64>::new(vec![]);
        let x = Matrix::from_vec(2, 3, vec![0.3, -0.1, 0.7, 1.2, -2.0, 0.05]).unwrap();
        let r = finite_difference_check(&mut net, &x, FD_STEP, 1).unwrap();
        assert_eq!(r.checked, 6);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn dense_tanh_stack_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Sequential::mlp(
            &[5, 7, 4, 3],
            Layer::Tanh,
            Some(Layer::Tanh),
            false,
            &mut rng,
        );
        let x =
            Matrix::from_vec(4, 5, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let r = finite_difference_check(&mut net, &x, FD_STEP, 2).unwrap();
        assert!(r.passes(1e-4), "{r:?}");
    }

    #[test]
    fn corrupted_backward_rule_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Sequential::<f64>::mlp(&[3, 4, 2], Layer::Tanh, None, false, &mut rng);
        let x = Matrix::from_vec(2, 3, vec![0.1, 0.2, -0.3, 0.5, -0.7, 0.9]).unwrap();
        let dy = Matrix::from_vec(2, 2, vec![1.0; 4]).unwrap();
        let mut model = net;
        let report = check_params(
            &mut model,
            |m| m.params_mut(),
            |m| {
                m.zero_grad();
                let t = m.forward_trace(&x).unwrap();
                m.backward(&t, &dy).unwrap();
                // fault injection: flip the bias gradient of the first layer
                for g in m.params_mut()[1].grad.iter_mut() {
                    *g = -*g;
                }
                m.forward(&x).unwrap().as_slice().iter().sum()
            },
            |m| m.forward(&x).unwrap().as_slice().iter().sum(),
            FD_STEP,
            usize::MAX,
            0,
        );
        assert!(report.max_rel_error > 1e-2, "{report:?}");
        assert!(report.worst.starts_with("1.bias"), "{report:?}");
    }
}
