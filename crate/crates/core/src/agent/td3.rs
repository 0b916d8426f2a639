//! Deterministic policy-gradient training with twin critics, target policy
//! smoothing and delayed actor updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autoencoder::{Gfv, GFV_DIM};
use crate::error::{Error, Result};
use crate::gan::{LatentSeed, Z_DIM};
use crate::geometry::PointCloud;
use crate::nn::{Adam, AdamConfig, Checkpoint, Matrix};

use super::env::{Environment, RewardBreakdown};
use super::nets::{soft_update, Actor, QNetwork};
use super::replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub max_steps: usize,
    /// Steps acting uniformly at random before the policy takes over.
    pub warmup_steps: usize,
    pub exploration_noise: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: usize,
    pub replay_capacity: usize,
    pub eval_frequency: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: 4_000,
            warmup_steps: 1_000,
            exploration_noise: 0.1,
            batch_size: 100,
            gamma: 0.9,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            replay_capacity: 100_000,
            eval_frequency: 500,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            actor_hidden: vec![400, 400, 300],
            critic_hidden: vec![400, 432, 300, 300],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("agent: {m}")));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if self.batch_size == 0 || self.policy_delay == 0 || self.replay_capacity == 0 {
            return bad("batch_size, policy_delay and replay_capacity must be positive");
        }
        if self.exploration_noise < 0.0 || self.policy_noise < 0.0 || self.noise_clip < 0.0 {
            return bad("noise scales must be non-negative");
        }
        if self.critic_hidden.is_empty() {
            return bad("critic needs at least one hidden layer");
        }
        Ok(())
    }
}

/// Actor, twin critics, their target copies and optimizers.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub config: AgentConfig,
    pub actor: Actor,
    pub actor_target: Actor,
    pub critics: [QNetwork; 2],
    pub critic_targets: [QNetwork; 2],
    actor_opt: Adam<f32>,
    critic_opts: [Adam<f32>; 2],
    critic_updates: usize,
    actor_updates: usize,
}

/// Diagnostics of one training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// Bellman targets used for this batch.
    pub targets: Vec<f32>,
    pub rewards: Vec<f32>,
    pub actor_updated: bool,
}

impl Td3Agent {
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Actor::new(&config.actor_hidden, rng.gen());
        let critics = [
            QNetwork::new(&config.critic_hidden, rng.gen()),
            QNetwork::new(&config.critic_hidden, rng.gen()),
        ];
        let adam = |lr| Adam::new(AdamConfig::new(lr, 0.9, 0.999));
        Ok(Self {
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
            actor_opt: adam(config.actor_lr),
            critic_opts: [adam(config.critic_lr), adam(config.critic_lr)],
            critic_updates: 0,
            actor_updates: 0,
            config,
        })
    }

    pub fn critic_updates(&self) -> usize {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> usize {
        self.actor_updates
    }

    pub fn act(&self, state: &Gfv) -> Result<LatentSeed> {
        let a = self.actor.forward(&state.to_matrix())?;
        LatentSeed::new(a.into_vec())
    }

    /// Uniform random before warm-up ends; afterwards the actor output plus
    /// Gaussian noise when exploring, clipped to `[-1, 1]`.
    pub fn select_action<R: Rng>(
        &self,
        state: &Gfv,
        step: usize,
        explore: bool,
        rng: &mut R,
    ) -> Result<LatentSeed> {
        if !explore {
            return self.act(state);
        }
        if step < self.config.warmup_steps {
            return LatentSeed::new((0..Z_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect());
        }
        let mean = self.actor.forward(&state.to_matrix())?;
        let sigma = self.config.exploration_noise;
        let noisy = mean
            .as_slice()
            .iter()
            .map(|&a| {
                let n = if sigma > 0.0 {
                    Normal::new(0.0, sigma).expect("sigma > 0").sample(rng)
                } else {
                    0.0
                };
                (a as f64 + n).clamp(-1.0, 1.0) as f32
            })
            .collect();
        LatentSeed::new(noisy)
    }

    /// One critic update and, every `policy_delay` critic updates, one actor
    /// update followed by soft target updates.
    pub fn train_step<R: Rng>(
        &mut self,
        replay: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        let batch = replay.sample(self.config.batch_size, rng)?;
        let n = batch.len();
        let (states, actions, rewards, next_states, not_done) = stack(&batch)?;

        let mut targets = rewards.clone();
        if not_done.iter().any(|&m| m != 0.0) {
            let smoothing = Normal::new(0.0, self.config.policy_noise.max(f64::MIN_POSITIVE))
                .expect("finite sigma");
            let clip = self.config.noise_clip;
            let mut next_a = self.actor_target.forward(&next_states)?;
            for a in next_a.as_mut_slice() {
                let eps = if self.config.policy_noise > 0.0 {
                    smoothing.sample(rng).clamp(-clip, clip)
                } else {
                    0.0
                };
                *a = (*a as f64 + eps).clamp(-1.0, 1.0) as f32;
            }
            let q1 = self.critic_targets[0].forward(&next_states, &next_a)?;
            let q2 = self.critic_targets[1].forward(&next_states, &next_a)?;
            let gamma = self.config.gamma as f32;
            for i in 0..n {
                targets[i] += gamma * not_done[i] * q1.get(i, 0).min(q2.get(i, 0));
            }
        }

        let mut critic_loss = 0.0;
        for k in 0..2 {
            let critic = &mut self.critics[k];
            critic.zero_grad();
            let trace = critic.forward_trace(&states, &actions)?;
            let q = trace.q();
            let mut dq = Matrix::zeros(n, 1);
            for i in 0..n {
                let diff = q.get(i, 0) - targets[i];
                critic_loss += (diff as f64).powi(2) / n as f64;
                dq.as_mut_slice()[i] = 2.0 * diff / n as f32;
            }
            critic.backward(&trace, &dq)?;
            self.critic_opts[k].step(critic.params_mut())?;
        }
        self.critic_updates += 1;

        let mut actor_updated = false;
        if self.critic_updates % self.config.policy_delay == 0 {
            self.actor_step(&states)?;
            let tau = self.config.tau;
            soft_update(&mut self.actor_target.net, &self.actor.net, tau);
            for k in 0..2 {
                soft_update(
                    &mut self.critic_targets[k].state_net,
                    &self.critics[k].state_net,
                    tau,
                );
                soft_update(&mut self.critic_targets[k].head, &self.critics[k].head, tau);
            }
            actor_updated = true;
        }
        Ok(UpdateStats {
            critic_loss,
            targets,
            rewards,
            actor_updated,
        })
    }

    /// Deterministic policy-gradient step: ascend `mean Q1(s, actor(s))`.
    /// Returns the batch mean Q before the step.
    pub fn actor_step(&mut self, states: &Matrix<f32>) -> Result<f64> {
        let n = states.rows();
        self.actor.net.zero_grad();
        let at = self.actor.net.forward_trace(states)?;
        let qt = self.critics[0].forward_trace(states, at.output())?;
        let mean_q = qt.q().as_slice().iter().map(|&q| q as f64).sum::<f64>() / n as f64;
        let dq = Matrix::from_vec(n, 1, vec![-1.0 / n as f32; n])?;
        let da = self.critics[0].action_grad(&qt, &dq)?;
        self.actor.net.backward(&at, &da)?;
        self.actor_opt.step(self.actor.net.params_mut())?;
        self.actor_updates += 1;
        Ok(mean_q)
    }

    pub fn save_to(&self, ck: &mut Checkpoint) -> Result<()> {
        ck.add_network("actor", &self.actor.net)?;
        ck.add_network("actor_target", &self.actor_target.net)?;
        for k in 0..2 {
            self.critics[k].save_to(ck, &format!("critic{k}"))?;
            self.critic_targets[k].save_to(ck, &format!("critic{k}_target"))?;
        }
        Ok(())
    }

    pub fn load_from(config: AgentConfig, ck: &Checkpoint) -> Result<Self> {
        let mut agent = Self::new(config, 0)?;
        ck.load_network("actor", &mut agent.actor.net)?;
        ck.load_network("actor_target", &mut agent.actor_target.net)?;
        for k in 0..2 {
            agent.critics[k].load_from(ck, &format!("critic{k}"))?;
            agent.critic_targets[k].load_from(ck, &format!("critic{k}_target"))?;
        }
        Ok(agent)
    }
}

type Batch = (Matrix<f32>, Matrix<f32>, Vec<f32>, Matrix<f32>, Vec<f32>);

fn stack(batch: &[&Transition]) -> Result<Batch> {
    let n = batch.len();
    let mut s = Matrix::zeros(n, GFV_DIM);
    let mut a = Matrix::zeros(n, Z_DIM);
    let mut s2 = Matrix::zeros(n, GFV_DIM);
    let mut r = Vec::with_capacity(n);
    let mut not_done = Vec::with_capacity(n);
    for (i, t) in batch.iter().enumerate() {
        s.row_mut(i).copy_from_slice(t.state.as_slice());
        a.row_mut(i).copy_from_slice(t.action.as_slice());
        s2.row_mut(i).copy_from_slice(t.next_state.as_slice());
        r.push(t.reward as f32);
        not_done.push(if t.done { 0.0 } else { 1.0 });
    }
    Ok((s, a, r, s2, not_done))
}

/// Per-step record of the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub breakdown: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentReport {
    pub steps: Vec<StepLog>,
    /// `(step, mean evaluation reward)` of the deterministic policy.
    pub evaluations: Vec<(usize, f64)>,
    pub final_eval_reward: f64,
    pub critic_updates: usize,
    pub actor_updates: usize,
}

/// Mean reward of the deterministic policy over pre-encoded episodes.
pub fn evaluate_policy(
    agent: &Td3Agent,
    env: &Environment,
    episodes: &[(PointCloud, Gfv)],
) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (p, s) in episodes {
        let a = agent.act(s)?;
        total += env.reward_with_state(p, s, &a)?.0.reward;
    }
    Ok(total / episodes.len() as f64)
}

/// Mean reward of uniformly random seeds over the same episodes.
pub fn evaluate_random(
    env: &Environment,
    episodes: &[(PointCloud, Gfv)],
    seed: u64,
) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for (p, s) in episodes {
        let a = LatentSeed::new((0..Z_DIM).map(|_| rng.gen_range(-1.0..=1.0)).collect())?;
        total += env.reward_with_state(p, s, &a)?.0.reward;
    }
    Ok(total / episodes.len() as f64)
}

pub fn encode_episodes(env: &Environment, clouds: &[PointCloud]) -> Result<Vec<(PointCloud, Gfv)>> {
    clouds
        .iter()
        .map(|c| Ok((c.clone(), env.observe(c)?)))
        .collect()
}

/// The full loop: sample a partial cloud, act once, store the transition,
/// then update from replay; evaluate every `eval_frequency` steps.
pub fn train_agent(
    agent: &mut Td3Agent,
    env: &Environment,
    train: &[PointCloud],
    eval: &[PointCloud],
    seed: u64,
    mut on_step: impl FnMut(&StepLog),
) -> Result<AgentReport> {
    if train.is_empty() || eval.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cfg = agent.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episodes = encode_episodes(env, train)?;
    let eval_eps = encode_episodes(env, eval)?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity)?;
    let mut steps = Vec::with_capacity(cfg.max_steps);
    let mut evaluations = Vec::new();
    for step in 0..cfg.max_steps {
        let (partial, state) = &episodes[rng.gen_range(0..episodes.len())];
        let action = agent.select_action(state, step, true, &mut rng)?;
        let (transition, _, breakdown) = env.step_with_state(partial, state.clone(), &action)?;
        replay.push(transition);
        let log = StepLog { step, breakdown };
        on_step(&log);
        steps.push(log);
        if step >= cfg.warmup_steps && replay.len() >= cfg.batch_size {
            agent.train_step(&replay, &mut rng)?;
        }
        if cfg.eval_frequency > 0 && (step + 1) % cfg.eval_frequency == 0 {
            evaluations.push((step + 1, evaluate_policy(agent, env, &eval_eps)?));
        }
    }
    let final_eval_reward = match evaluations.last() {
        Some(&(s, r)) if s == cfg.max_steps => r,
        _ => {
            let r = evaluate_policy(agent, env, &eval_eps)?;
            evaluations.push((cfg.max_steps, r));
            r
        }
    };
    Ok(AgentReport {
        steps,
        evaluations,
        final_eval_reward,
        critic_updates: agent.critic_updates,
        actor_updates: agent.actor_updates,
    })
}
