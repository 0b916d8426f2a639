use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::GFV_DIM;
use crate::error::Result;
use crate::gan::Z_DIM;
use crate::nn::{Checkpoint, Layer, Matrix, NnError, Scalar, Sequential, Trace};

/// Deterministic policy: GFV state to a seed in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor<T = f32> {
    pub net: Sequential<T>,
}

impl<T: Scalar> Actor<T> {
    pub fn new(hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![GFV_DIM];
        widths.extend(hidden);
        widths.push(Z_DIM);
        Self {
            net: Sequential::mlp(&widths, Layer::Relu, Some(Layer::Tanh), false, &mut rng),
        }
    }

    pub fn forward(&self, states: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.net.forward(states)?)
    }

    pub fn cast<U: Scalar>(&self) -> Actor<U> {
        Actor {
            net: self.net.cast(),
        }
    }
}

/// Action-value network. The state passes one dense layer before the action
/// is concatenated onto its features.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<T = f32> {
    pub state_net: Sequential<T>,
    pub head: Sequential<T>,
}

pub struct QTrace<T> {
    state: Trace<T>,
    head: Trace<T>,
}

impl<T: Scalar> QTrace<T> {
    pub fn q(&self) -> &Matrix<T> {
        self.head.output()
    }
}

impl<T: Scalar> QNetwork<T> {
    /// `widths[0]` is the state layer; the rest follow the concatenation.
    pub fn new(widths: &[usize], seed: u64) -> Self {
        assert!(!widths.is_empty(), "critic needs at least one hidden layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state_net = Sequential::mlp(
            &[GFV_DIM, widths[0]],
            Layer::Relu,
            Some(Layer::Relu),
            false,
            &mut rng,
        );
        let mut head_widths = vec![widths[0] + Z_DIM];
        head_widths.extend(&widths[1..]);
        head_widths.push(1);
        let head = Sequential::mlp(&head_widths, Layer::Relu, None, false, &mut rng);
        Self { state_net, head }
    }

    fn check(states: &Matrix<T>, actions: &Matrix<T>) -> Result<()> {
        if actions.cols() != Z_DIM || actions.rows() != states.rows() {
            return Err(NnError::ShapeMismatch {
                expected: vec![states.rows(), Z_DIM],
                found: actions.shape().to_vec(),
            }
            .into());
        }
        Ok(())
    }

    pub fn forward(&self, states: &Matrix<T>, actions: &Matrix<T>) -> Result<Matrix<T>> {
        Self::check(states, actions)?;
        let h = self.state_net.forward(states)?;
        Ok(self.head.forward(&h.hcat(actions)?)?)
    }

    pub fn forward_trace(&self, states: &Matrix<T>, actions: &Matrix<T>) -> Result<QTrace<T>> {
        Self::check(states, actions)?;
        let state = self.state_net.forward_trace(states)?;
        let head = self.head.forward_trace(&state.output().hcat(actions)?)?;
        Ok(QTrace { state, head })
    }

    /// Accumulates parameter gradients of `sum(dq * Q)`; returns `dQ/da`.
    pub fn backward(&mut self, trace: &QTrace<T>, dq: &Matrix<T>) -> Result<Matrix<T>> {
        let d_cat = self.head.backward(&trace.head, dq)?;
        let split = self.state_net_width();
        let (d_h, d_a) = d_cat.hsplit(split);
        self.state_net.backward(&trace.state, &d_h)?;
        Ok(d_a)
    }

    /// `dQ/da` weighted by `dq`, without touching parameter gradients.
    pub fn action_grad(&self, trace: &QTrace<T>, dq: &Matrix<T>) -> Result<Matrix<T>> {
        let d_cat = self.head.input_grad(&trace.head, dq)?;
        Ok(d_cat.hsplit(self.state_net_width()).1)
    }

    fn state_net_width(&self) -> usize {
        self.head
            .layers
            .iter()
            .find_map(|l| l.dense())
            .map(|d| d.fan_in() - Z_DIM)
            .expect("head has a dense layer")
    }

    pub fn params_mut(&mut self) -> Vec<&mut crate::nn::Param<T>> {
        let mut p = self.state_net.params_mut();
        p.extend(self.head.params_mut());
        p
    }

    pub fn zero_grad(&mut self) {
        self.state_net.zero_grad();
        self.head.zero_grad();
    }

    pub fn cast<U: Scalar>(&self) -> QNetwork<U> {
        QNetwork {
            state_net: self.state_net.cast(),
            head: self.head.cast(),
        }
    }

    pub fn save_to(&self, ck: &mut Checkpoint, prefix: &str) -> Result<()> {
        ck.add_network(&format!("{prefix}.state"), &self.state_net)?;
        ck.add_network(&format!("{prefix}.head"), &self.head)?;
        Ok(())
    }

    pub fn load_from(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        ck.load_network(&format!("{prefix}.state"), &mut self.state_net)?;
        ck.load_network(&format!("{prefix}.head"), &mut self.head)?;
        Ok(())
    }
}

/// `target <- tau * online + (1 - tau) * target`, parameter by parameter.
pub fn soft_update<T: Scalar>(target: &mut Sequential<T>, online: &Sequential<T>, tau: f64) {
    let tau_t = T::of(tau);
    let keep = T::of(1.0 - tau);
    for (t, o) in target.params_mut().into_iter().zip(online.params()) {
        for (tv, &ov) in t.values.iter_mut().zip(&o.values) {
            *tv = tau_t * ov + keep * *tv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_vector, FD_STEP};
    use rand::Rng;

    const ACTOR: [usize; 3] = [400, 400, 300];
    const CRITIC: [usize; 4] = [400, 432, 300, 300];

    fn states(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(
            n,
            GFV_DIM,
            (0..n * GFV_DIM).map(|_| rng.gen_range(0.0..2.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn actor_output_is_bounded_and_deterministic() {
        let actor = Actor::<f64>::new(&ACTOR, 1);
        let mut s = states(16, 2);
        s.as_mut_slice().iter_mut().for_each(|v| *v *= 1e3);
        let a = actor.forward(&s).unwrap();
        assert_eq!(a.shape(), [16, 1]);
        assert!(a.as_slice().iter().all(|v| v.abs() <= 1.0));
        assert_eq!(a, actor.forward(&s).unwrap());
    }

    #[test]
    fn zero_head_gives_zero_action() {
        let mut actor = Actor::<f32>::new(&ACTOR, 1);
        let head = actor.net.head_mut().unwrap();
        head.weight.values.iter_mut().for_each(|w| *w = 0.0);
        let s = states(4, 3).cast::<f32>();
        assert!(actor
            .forward(&s)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn critic_layout() {
        let q = QNetwork::<f32>::new(&CRITIC, 0);
        let widths: Vec<[usize; 2]> = q
            .state_net
            .layers
            .iter()
            .chain(&q.head.layers)
            .filter_map(|l| l.dense())
            .map(|d| [d.fan_in(), d.fan_out()])
            .collect();
        assert_eq!(
            widths,
            vec![[128, 400], [401, 432], [432, 300], [300, 300], [300, 1]]
        );
    }

    #[test]
    fn twin_critics_differ() {
        let s = states(3, 1).cast::<f32>();
        let a = Matrix::from_vec(3, 1, vec![0.1f32, -0.5, 0.9]).unwrap();
        let q1 = QNetwork::<f32>::new(&CRITIC, 1).forward(&s, &a).unwrap();
        let q2 = QNetwork::<f32>::new(&CRITIC, 2).forward(&s, &a).unwrap();
        assert_ne!(q1, q2);
    }

    #[test]
    fn action_gradient_matches_finite_differences() {
        let q = QNetwork::<f64>::new(&CRITIC, 4);
        let s = states(6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let am = Matrix::from_vec(6, 1, a.clone()).unwrap();
        let t = q.forward_trace(&s, &am).unwrap();
        let ones = Matrix::from_vec(6, 1, vec![1.0; 6]).unwrap();
        let da = q.action_grad(&t, &ones).unwrap();
        let report = check_vector(
            &a,
            da.as_slice(),
            |x| {
                let m = Matrix::from_vec(6, 1, x.to_vec()).unwrap();
                q.forward(&s, &m).unwrap().as_slice().iter().sum()
            },
            FD_STEP,
            "action",
        );
        assert!(report.passes(1e-4), "{report:?}");
    }

    #[test]
    fn soft_update_rules() {
        let online = Actor::<f32>::new(&[8], 1).net;
        let mut target = Actor::<f32>::new(&[8], 2).net;
        soft_update(&mut target, &online, 1.0);
        assert_eq!(target, online);

        let mut t = Sequential::<f32>::mlp(
            &[1, 1],
            Layer::Relu,
            None,
            false,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        let mut o = t.clone();
        t.params_mut()[0].values[0] = 0.0;
        o.params_mut()[0].values[0] = 1.0;
        soft_update(&mut t, &o, 0.005);
        assert_eq!(t.params()[0].values[0], 0.005);
    }

    #[test]
    fn soft_updates_drift_monotonically() {
        let online = Actor::<f64>::new(&[16], 1).net;
        let mut target = Actor::<f64>::new(&[16], 2).net;
        let dist = |a: &Sequential<f64>, b: &Sequential<f64>| -> f64 {
            a.params()
                .iter()
                .zip(b.params())
                .flat_map(|(p, q)| {
                    p.values
                        .iter()
                        .zip(&q.values)
                        .map(|(x, y)| (x - y) * (x - y))
                })
                .sum::<f64>()
                .sqrt()
        };
        let mut prev = dist(&target, &online);
        for _ in 0..200 {
            soft_update(&mut target, &online, 0.005);
            let d = dist(&target, &online);
            assert!(d <= prev);
            prev = d;
        }
    }
}
