//! Latent-space WGAN-GP: a generator mapping a 1-D seed to a GFV and a critic
//! scoring GFVs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::{Gfv, GFV_DIM};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Checkpoint, Layer, Matrix, NnError, Scalar, Sequential};

/// Dimension of the generator seed (and of the agent's action).
pub const Z_DIM: usize = 1;

/// Generator input: a `Z_DIM` vector with components in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSeed(Vec<f32>);

impl LatentSeed {
    pub fn new(z: Vec<f32>) -> Result<Self> {
        if z.len() != Z_DIM {
            return Err(NnError::ShapeMismatch {
                expected: vec![Z_DIM],
                found: vec![z.len()],
            }
            .into());
        }
        if z.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::Invalid(format!("latent seed {z:?} outside [-1, 1]")));
        }
        Ok(Self(z))
    }

    pub fn scalar(z: f32) -> Result<Self> {
        Self::new(vec![z])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub lambda_gp: f64,
    pub n_critic: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    /// Generator updates; each is preceded by `n_critic` critic updates.
    pub iterations: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub log_every: usize,
    /// Critic updates used to fit the probe critics behind the reported gaps.
    pub probe_critic_steps: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            lambda_gp: 10.0,
            n_critic: 5,
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            batch_size: 50,
            iterations: 20_000,
            generator_hidden: vec![64, 128],
            critic_hidden: vec![128, 64],
            log_every: 100,
            probe_critic_steps: PROBE_CRITIC_STEPS,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_gp > 0.0) || self.n_critic == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "gan: lambda_gp must be > 0, n_critic and batch_size >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T = f32> {
    pub net: Sequential<T>,
}

impl<T: Scalar> Generator<T> {
    pub fn new(config: &GanConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![Z_DIM];
        widths.extend(&config.generator_hidden);
        widths.push(GFV_DIM);
        Self {
            net: Sequential::mlp(&widths, Layer::Relu, None, false, &mut rng),
        }
    }

    /// `B x Z_DIM` seeds to `B x GFV_DIM` feature vectors.
    pub fn forward(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        if z.cols() != Z_DIM {
            return Err(NnError::ShapeMismatch {
                expected: vec![z.rows(), Z_DIM],
                found: z.shape().to_vec(),
            }
            .into());
        }
        Ok(self.net.forward(z)?)
    }

    pub fn zero_output_head(&mut self) {
        if let Some(head) = self.net.head_mut() {
            head.weight.values.iter_mut().for_each(|w| *w = T::zero());
            head.bias.values.iter_mut().for_each(|b| *b = T::zero());
        }
    }
}

impl Generator<f32> {
    pub fn generate(&self, z: &LatentSeed) -> Result<Gfv> {
        let m = Matrix::from_vec(1, Z_DIM, z.0.clone())?;
        Gfv::new(self.forward(&m)?.into_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic<T = f32> {
    pub net: Sequential<T>,
}

impl<T: Scalar> Critic<T> {
    pub fn new(config: &GanConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![GFV_DIM];
        widths.extend(&config.critic_hidden);
        widths.push(1);
        Self {
            net: Sequential::mlp(&widths, Layer::Relu, None, false, &mut rng),
        }
    }

    /// Unbounded scores, one per row.
    pub fn score(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        if !x.is_finite() {
            return Err(NnError::NonFinite.into());
        }
        Ok(self.net.forward(x)?.into_vec())
    }
}

impl Critic<f32> {
    pub fn discriminate(&self, gfv: &Gfv) -> Result<f32> {
        Ok(self.score(&gfv.to_matrix())?[0])
    }
}

/// WGAN-GP penalty `lambda * mean_b (|grad_x D(x_b)| - 1)^2` at the
/// interpolates `x_b = eps_b real_b + (1 - eps_b) fake_b`.
///
/// `critic` must be a dense/ReLU stack with a scalar linear head. With
/// `accumulate`, the penalty gradient is added to the critic's parameter
/// gradients; ReLU masks are piecewise constant, so only the weights receive
/// gradient.
pub fn gradient_penalty<T: Scalar>(
    critic: &mut Sequential<T>,
    real: &Matrix<T>,
    fake: &Matrix<T>,
    eps: &[T],
    lambda: f64,
    accumulate: bool,
) -> Result<f64> {
    if real.shape() != fake.shape() || eps.len() != real.rows() {
        return Err(NnError::ShapeMismatch {
            expected: real.shape().to_vec(),
            found: vec![fake.rows(), fake.cols(), eps.len()],
        }
        .into());
    }
    let b = real.rows();
    if b == 0 {
        return Err(NnError::EmptyInput.into());
    }
    let mut interp = Matrix::zeros(b, real.cols());
    for r in 0..b {
        let e = eps[r];
        for ((x, &re), &fa) in interp
            .row_mut(r)
            .iter_mut()
            .zip(real.row(r))
            .zip(fake.row(r))
        {
            *x = e * re + (T::one() - e) * fa;
        }
    }
    let trace = critic.forward_trace(&interp)?;
    if trace.output().cols() != 1 {
        return Err(Error::Invalid(
            "gradient penalty needs a scalar critic".into(),
        ));
    }

    // Adjoint chain of the input-gradient computation: deltas[i] is dD/d(out of layer i).
    let n = critic.layers.len();
    let mut deltas: Vec<Matrix<T>> = vec![Matrix::zeros(0, 0); n];
    let mut d = Matrix::from_vec(b, 1, vec![T::one(); b])?;
    let mut masks: Vec<Option<Matrix<T>>> = vec![None; n];
    for i in (0..n).rev() {
        deltas[i] = d.clone();
        d = match &critic.layers[i] {
            Layer::Dense(dense) => dense.input_grad(&d)?,
            Layer::Relu => {
                let x = trace.activation(i);
                let m = x.map(|v| if v > T::zero() { T::one() } else { T::zero() });
                let mut out = d.clone();
                for (o, &k) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *o *= k;
                }
                masks[i] = Some(m);
                out
            }
            other => {
                return Err(Error::Invalid(format!(
                    "gradient penalty does not support `{}` layers",
                    other.kind()
                )))
            }
        };
    }
    let grad_x = d;

    let lam = T::of(lambda);
    let bt = T::of(b as f64);
    let mut penalty = 0.0;
    let mut adj = Matrix::zeros(b, grad_x.cols());
    for r in 0..b {
        let norm = grad_x.row(r).iter().map(|&g| g * g).sum::<T>().sqrt();
        let dev = norm - T::one();
        penalty += (dev * dev).as_f64();
        if norm > T::zero() {
            let k = lam * T::of(2.0) * dev / (norm * bt);
            for (a, &g) in adj.row_mut(r).iter_mut().zip(grad_x.row(r)) {
                *a = k * g;
            }
        }
    }
    let penalty = lambda * penalty / b as f64;
    if !accumulate {
        return Ok(penalty);
    }

    // Forward sweep of the adjoint: `adj` is dP/d(input of layer i).
    for i in 0..n {
        match &mut critic.layers[i] {
            Layer::Dense(dense) => {
                let (fi, fo) = (dense.fan_in(), dense.fan_out());
                let mut dw = Matrix::from_vec(fi, fo, std::mem::take(&mut dense.weight.grad))?;
                crate::nn::matmul_into(&adj, true, &deltas[i], false, &mut dw, true)?;
                dense.weight.grad = dw.into_vec();
                let w = Matrix::from_vec(fi, fo, dense.weight.values.clone())?;
                adj = crate::nn::matmul(&adj, false, &w, false)?;
            }
            Layer::Relu => {
                let m = masks[i].as_ref().expect("mask recorded in backward sweep");
                for (a, &k) in adj.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *a *= k;
                }
            }
            _ => unreachable!("rejected above"),
        }
    }
    Ok(penalty)
}

/// One logged row of critic statistics on the training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GanLogRow {
    pub iter: usize,
    pub d_real: f64,
    pub d_fake: f64,
    pub gp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanReport {
    pub history: Vec<GanLogRow>,
    pub critic_steps: usize,
    pub generator_steps: usize,
    /// Gap of the initial generator under a critic fitted to it.
    pub initial_gap: f64,
    /// Gap of the trained generator under a critic fitted the same way.
    pub final_gap: f64,
}

/// `|mean D(real) - mean D(G(z))|` over the given real set and seeds.
pub fn critic_gap(
    gen: &Generator,
    critic: &Critic,
    real: &Matrix<f32>,
    z: &Matrix<f32>,
) -> Result<f64> {
    let mean = |v: Vec<f32>| v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    let r = mean(critic.score(real)?);
    let f = mean(critic.score(&gen.forward(z)?)?);
    Ok((r - f).abs())
}

pub fn gfv_matrix(gfvs: &[Gfv]) -> Matrix<f32> {
    let rows: Vec<&[f32]> = gfvs.iter().map(Gfv::as_slice).collect();
    Matrix::from_rows(&rows).expect("GFVs share a dimension")
}

/// Uniform seeds on `[-1, 1]^Z_DIM`.
pub fn sample_z<R: Rng>(rng: &mut R, n: usize) -> Matrix<f32> {
    Matrix::from_vec(
        n,
        Z_DIM,
        (0..n * Z_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
    )
    .expect("sized buffer")
}

/// One WGAN-GP critic update on a random real batch and fresh fakes.
/// Returns `(mean D(real), mean D(fake), penalty)`.
fn critic_step<R: Rng>(
    gen: &Generator,
    critic: &mut Critic,
    opt: &mut Adam<f32>,
    real_all: &Matrix<f32>,
    config: &GanConfig,
    rng: &mut R,
) -> Result<(f64, f64, f64)> {
    let bsz = config.batch_size;
    let inv_b = 1.0 / bsz as f32;
    let idx: Vec<usize> = (0..bsz)
        .map(|_| rng.gen_range(0..real_all.rows()))
        .collect();
    let real = real_all.gather_rows(&idx);
    let fake = gen.forward(&sample_z(rng, bsz))?;
    let eps: Vec<f32> = (0..bsz).map(|_| rng.gen::<f32>()).collect();

    critic.net.zero_grad();
    let tr = critic.net.forward_trace(&real)?;
    let d_real = mean_f64(tr.output().as_slice());
    critic
        .net
        .backward(&tr, &Matrix::from_vec(bsz, 1, vec![-inv_b; bsz])?)?;
    let tf = critic.net.forward_trace(&fake)?;
    let d_fake = mean_f64(tf.output().as_slice());
    critic
        .net
        .backward(&tf, &Matrix::from_vec(bsz, 1, vec![inv_b; bsz])?)?;
    let gp = gradient_penalty(&mut critic.net, &real, &fake, &eps, config.lambda_gp, true)?;
    opt.step(critic.net.params_mut())?;
    Ok((d_real, d_fake, gp))
}

/// Critic updates used to fit a probe critic to a frozen generator.
pub const PROBE_CRITIC_STEPS: usize = 1000;

/// Gap of a frozen generator under a copy of `critic` trained for `steps`
/// further updates against it. An untrained critic cannot tell real from
/// fake, so its raw gap says nothing about the generator.
pub fn fitted_critic_gap(
    gen: &Generator,
    critic: &Critic,
    real: &Matrix<f32>,
    probe_z: &Matrix<f32>,
    config: &GanConfig,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = critic.clone();
    let mut opt = Adam::new(AdamConfig::new(
        config.learning_rate,
        config.beta1,
        config.beta2,
    ));
    for _ in 0..steps {
        critic_step(gen, &mut probe, &mut opt, real, config, &mut rng)?;
    }
    critic_gap(gen, &probe, real, probe_z)
}

/// Alternating WGAN-GP training on encoder GFVs.
pub fn train_gan(
    gen: &mut Generator,
    critic: &mut Critic,
    data: &[Gfv],
    config: &GanConfig,
    seed: u64,
    mut on_log: impl FnMut(&GanLogRow),
) -> Result<GanReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adam = AdamConfig::new(config.learning_rate, config.beta1, config.beta2);
    let mut g_opt = Adam::new(adam);
    let mut d_opt = Adam::new(adam);
    let all_real = gfv_matrix(data);
    let probe_z = sample_z(&mut rng, 256);
    let probe_seed: u64 = rng.gen();
    let initial_gap = fitted_critic_gap(
        gen,
        critic,
        &all_real,
        &probe_z,
        config,
        config.probe_critic_steps,
        probe_seed,
    )?;

    let bsz = config.batch_size;
    let inv_b = 1.0 / bsz as f32;
    let mut history = Vec::new();
    let (mut critic_steps, mut generator_steps) = (0, 0);
    for iter in 1..=config.iterations {
        let mut last = (0.0, 0.0, 0.0);
        for _ in 0..config.n_critic {
            last = critic_step(gen, critic, &mut d_opt, &all_real, config, &mut rng)?;
            critic_steps += 1;
        }

        gen.net.zero_grad();
        let z = sample_z(&mut rng, bsz);
        let tg = gen.net.forward_trace(&z)?;
        let td = critic.net.forward_trace(tg.output())?;
        let d_fake = critic
            .net
            .input_grad(&td, &Matrix::from_vec(bsz, 1, vec![-inv_b; bsz])?)?;
        gen.net.backward(&tg, &d_fake)?;
        g_opt.step(gen.net.params_mut())?;
        generator_steps += 1;

        if iter % config.log_every.max(1) == 0 || iter == config.iterations {
            let row = GanLogRow {
                iter,
                d_real: last.0,
                d_fake: last.1,
                gp: last.2,
            };
            on_log(&row);
            history.push(row);
        }
    }
    let final_gap = fitted_critic_gap(
        gen,
        critic,
        &all_real,
        &probe_z,
        config,
        config.probe_critic_steps,
        probe_seed,
    )?;
    Ok(GanReport {
        history,
        critic_steps,
        generator_steps,
        initial_gap,
        final_gap,
    })
}

fn mean_f64(v: &[f32]) -> f64 {
    v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64
}

pub fn save_gan(ck: &mut Checkpoint, gen: &Generator, critic: &Critic) -> Result<()> {
    ck.add_network("generator", &gen.net)?;
    ck.add_network("critic", &critic.net)?;
    Ok(())
}

pub fn load_gan(config: &GanConfig, ck: &Checkpoint) -> Result<(Generator, Critic)> {
    let mut gen = Generator::new(config, 0);
    let mut critic = Critic::new(config, 0);
    ck.load_network("generator", &mut gen.net)?;
    ck.load_network("critic", &mut critic.net)?;
    Ok((gen, critic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_params, FD_STEP};
    use crate::nn::{Dense, Param};

    fn linear_critic(c: Vec<f64>) -> Sequential<f64> {
        let n = c.len();
        Sequential::new(vec![Layer::Dense(Dense {
            weight: Param::new("weight", vec![n, 1], c).unwrap(),
            bias: Param::zeros("bias", vec![1]),
        })])
    }

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_critic_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let real = rand_matrix(&mut rng, 6, 4);
        let fake = rand_matrix(&mut rng, 6, 4);
        let eps: Vec<f64> = (0..6).map(|_| rng.gen()).collect();
        let mut unit = linear_critic(vec![0.6, 0.0, -0.8, 0.0]);
        let p = gradient_penalty(&mut unit, &real, &fake, &eps, 10.0, false).unwrap();
        assert!(p.abs() < 1e-24, "{p}");
        let mut two = linear_critic(vec![1.2, 0.0, -1.6, 0.0]);
        let p = gradient_penalty(&mut two, &real, &fake, &eps, 10.0, false).unwrap();
        assert!((p - 10.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GanConfig {
            critic_hidden: vec![16, 8],
            ..GanConfig::default()
        };
        let mut critic = Critic::<f64>::new(&cfg, 2).net;
        // a 128-wide input keeps the default architecture's shape
        let real = rand_matrix(&mut rng, 5, GFV_DIM);
        let fake = rand_matrix(&mut rng, 5, GFV_DIM);
        let eps: Vec<f64> = (0..5).map(|_| rng.gen()).collect();
        let report = check_params(
            &mut critic,
            |m| m.params_mut(),
            |m| {
                m.zero_grad();
                gradient_penalty(m, &real, &fake, &eps, 10.0, true).unwrap()
            },
            |m| gradient_penalty(&mut m.clone(), &real, &fake, &eps, 10.0, false).unwrap(),
            FD_STEP,
            200,
            3,
        );
        assert!(report.passes(1e-4), "{report:?}");
    }

    #[test]
    fn penalty_symmetric_under_endpoint_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut critic = Critic::<f64>::new(&GanConfig::default(), 6).net;
        let real = rand_matrix(&mut rng, 8, GFV_DIM);
        let fake = rand_matrix(&mut rng, 8, GFV_DIM);
        // dyadic eps so that 1 - (1 - eps) == eps exactly
        let eps: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) / 8.0).collect();
        let flipped: Vec<f64> = eps.iter().map(|e| 1.0 - e).collect();
        let a = gradient_penalty(&mut critic, &real, &fake, &eps, 10.0, false).unwrap();
        let b = gradient_penalty(&mut critic, &fake, &real, &flipped, 10.0, false).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn penalty_rejects_mismatched_batches() {
        let mut critic = Critic::<f64>::new(&GanConfig::default(), 0).net;
        let a = Matrix::zeros(3, GFV_DIM);
        let b = Matrix::zeros(2, GFV_DIM);
        assert!(gradient_penalty(&mut critic, &a, &b, &[0.5; 3], 10.0, false).is_err());
    }

    #[test]
    fn generator_contract() {
        let cfg = GanConfig::default();
        let mut g = Generator::<f32>::new(&cfg, 1);
        let z = LatentSeed::scalar(0.3).unwrap();
        let a = g.generate(&z).unwrap();
        assert_eq!(a.as_slice().len(), GFV_DIM);
        assert_eq!(a, g.generate(&z).unwrap());
        assert!(LatentSeed::new(vec![0.1, 0.2]).is_err());
        assert!(LatentSeed::scalar(1.5).is_err());
        g.zero_output_head();
        let c0 = g.generate(&LatentSeed::scalar(-1.0).unwrap()).unwrap();
        let c1 = g.generate(&LatentSeed::scalar(1.0).unwrap()).unwrap();
        assert_eq!(c0, c1);
        assert!(g.forward(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn critic_scores_are_batch_independent() {
        let cfg = GanConfig::default();
        let d = Critic::<f32>::new(&cfg, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch =
            Matrix::from_vec(50, GFV_DIM, (0..50 * GFV_DIM).map(|_| rng.gen()).collect()).unwrap();
        let all = d.score(&batch).unwrap();
        for r in [0, 17, 49] {
            let alone = d.score(&batch.gather_rows(&[r])).unwrap();
            assert_eq!(alone[0].to_bits(), all[r].to_bits());
        }
        let gfv = Gfv::new(batch.row(3).to_vec()).unwrap();
        assert_eq!(d.discriminate(&gfv).unwrap(), d.discriminate(&gfv).unwrap());
        let nan = Matrix::from_vec(1, GFV_DIM, vec![f32::NAN; GFV_DIM]).unwrap();
        assert!(d.score(&nan).is_err());
    }

    #[test]
    fn training_accounting_and_determinism() {
        let cfg = GanConfig {
            iterations: 30,
            batch_size: 8,
            log_every: 10,
            probe_critic_steps: 5,
            ..GanConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<Gfv> = (0..20)
            .map(|_| Gfv::new((0..GFV_DIM).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap())
            .collect();
        let run = || {
            let mut g = Generator::new(&cfg, 1);
            let mut d = Critic::new(&cfg, 2);
            train_gan(&mut g, &mut d, &data, &cfg, 3, |_| {}).unwrap()
        };
        let a = run();
        assert_eq!(a.generator_steps, 30);
        assert_eq!(a.critic_steps, 5 * 30);
        assert_eq!(a.history.len(), 3);
        assert_eq!(a, run());
        let mut g = Generator::new(&cfg, 1);
        let mut d = Critic::new(&cfg, 2);
        assert!(matches!(
            train_gan(&mut g, &mut d, &[], &cfg, 0, |_| {}),
            Err(Error::EmptyDataset)
        ));
    }
}
