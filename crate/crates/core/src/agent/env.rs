use crate::autoencoder::{AutoEncoder, Gfv};
use crate::error::{Error, Result};
use crate::gan::{Critic, Generator, LatentSeed};
use crate::geometry::{chamfer_normalized, PointCloud};

use super::replay::Transition;

/// Weights of the three reward terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub chamfer: f64,
    pub gfv: f64,
    pub discriminator: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            chamfer: 100.0,
            gfv: 10.0,
            discriminator: 0.01,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.chamfer, self.gfv, self.discriminator]
            .iter()
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(Error::Config(format!(
                "reward weights must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// `r = -w_ch L_ch - w_gfv L_gfv + w_d D`.
    pub fn combine(&self, l_ch: f64, l_gfv: f64, d_score: f64) -> f64 {
        -self.chamfer * l_ch - self.gfv * l_gfv + self.discriminator * d_score
    }
}

/// Reward together with the raw terms it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub reward: f64,
    /// Normalized Chamfer between the partial input and the decoded output.
    pub l_ch: f64,
    /// Squared distance between the generated and the input GFV.
    pub l_gfv: f64,
    /// Critic score of the generated GFV; the discriminator loss is its negation.
    pub d_score: f64,
}

/// Frozen pretrained networks that make up the agent's environment.
///
/// Holds its networks by value and only lends them out immutably, so nothing
/// can update them while an agent trains against it.
#[derive(Debug, Clone)]
pub struct Environment {
    ae: AutoEncoder,
    gen: Generator,
    critic: Critic,
    weights: RewardWeights,
}

impl Environment {
    pub fn new(
        ae: AutoEncoder,
        gen: Generator,
        critic: Critic,
        weights: RewardWeights,
    ) -> Result<Self> {
        weights.validate()?;
        Ok(Self {
            ae,
            gen,
            critic,
            weights,
        })
    }

    pub fn autoencoder(&self) -> &AutoEncoder {
        &self.ae
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn critic(&self) -> &Critic {
        &self.critic
    }

    pub fn weights(&self) -> RewardWeights {
        self.weights
    }

    pub fn observe(&self, partial: &PointCloud) -> Result<Gfv> {
        self.ae.encode(partial)
    }

    /// Reward of seed `z` for `partial`, whose encoding is `state`.
    pub fn reward_with_state(
        &self,
        partial: &PointCloud,
        state: &Gfv,
        z: &LatentSeed,
    ) -> Result<(RewardBreakdown, Gfv, PointCloud)> {
        let generated = self.gen.generate(z)?;
        let completed = self.ae.decode(&generated)?;
        let l_ch = chamfer_normalized(partial, &completed)?;
        let l_gfv = generated.distance_sq(state);
        let d_score = self.critic.discriminate(&generated)? as f64;
        let reward = self.weights.combine(l_ch, l_gfv, d_score);
        Ok((
            RewardBreakdown {
                reward,
                l_ch,
                l_gfv,
                d_score,
            },
            generated,
            completed,
        ))
    }

    pub fn compute_reward(&self, partial: &PointCloud, z: &LatentSeed) -> Result<RewardBreakdown> {
        let state = self.observe(partial)?;
        Ok(self.reward_with_state(partial, &state, z)?.0)
    }

    /// Single-step episode: act once, score, terminate.
    pub fn step(
        &self,
        partial: &PointCloud,
        action: &LatentSeed,
    ) -> Result<(Transition, PointCloud, RewardBreakdown)> {
        let state = self.observe(partial)?;
        self.step_with_state(partial, state, action)
    }

    pub fn step_with_state(
        &self,
        partial: &PointCloud,
        state: Gfv,
        action: &LatentSeed,
    ) -> Result<(Transition, PointCloud, RewardBreakdown)> {
        let (breakdown, generated, completed) = self.reward_with_state(partial, &state, action)?;
        let t = Transition {
            state,
            action: action.clone(),
            reward: breakdown.reward,
            next_state: generated,
            done: true,
        };
        Ok((t, completed, breakdown))
    }
}
