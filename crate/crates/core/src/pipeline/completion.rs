use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::agent::Actor;
use crate::autoencoder::{AutoEncoder, Gfv};
use crate::error::{Error, Result};
use crate::gan::{Critic, Generator, LatentSeed};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompletionMode {
    /// Plain autoencoder reconstruction.
    Ae,
    /// Encoder, actor, generator, decoder.
    Vanilla,
    /// Whichever of the two GFVs the critic scores higher.
    Hybrid,
}

impl CompletionMode {
    pub const ALL: [CompletionMode; 3] = [
        CompletionMode::Ae,
        CompletionMode::Vanilla,
        CompletionMode::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CompletionMode::Ae => "ae",
            CompletionMode::Vanilla => "vanilla",
            CompletionMode::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for CompletionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompletionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown completion mode {s:?} (expected ae, vanilla or hybrid)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathTaken {
    Ae,
    Gan,
}

/// Switch rule: the higher critic score wins, ties go to the GAN path.
pub fn select_path(d_score_ae: f32, d_score_gan: f32) -> PathTaken {
    if d_score_gan >= d_score_ae {
        PathTaken::Gan
    } else {
        PathTaken::Ae
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub output: PointCloud,
    pub path_taken: PathTaken,
    pub seed: Option<LatentSeed>,
    pub d_score_ae: Option<f32>,
    pub d_score_gan: Option<f32>,
    /// Actor plus generator forward time; zero on the AE path.
    pub latency_ms: f64,
    /// Encode plus decode time.
    pub codec_ms: f64,
}

/// Trained networks used at completion time.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub ae: AutoEncoder,
    pub generator: Generator,
    pub critic: Critic,
    pub actor: Actor,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Pipeline {
    /// Seed chosen by the actor and the generated GFV, with their timing.
    pub fn act_and_generate(&self, state: &Gfv) -> Result<(LatentSeed, Gfv, f64)> {
        let t = Instant::now();
        let z = LatentSeed::new(self.actor.forward(&state.to_matrix())?.into_vec())?;
        let gfv = self.generator.generate(&z)?;
        Ok((z, gfv, ms(t)))
    }

    pub fn complete_ae(&self, input: &PointCloud) -> Result<CompletionResult> {
        let t = Instant::now();
        let output = self.ae.reconstruct(input)?;
        Ok(CompletionResult {
            output,
            path_taken: PathTaken::Ae,
            seed: None,
            d_score_ae: None,
            d_score_gan: None,
            latency_ms: 0.0,
            codec_ms: ms(t),
        })
    }

    pub fn complete_vanilla(&self, input: &PointCloud) -> Result<CompletionResult> {
        let t = Instant::now();
        let state = self.ae.encode(input)?;
        let mut codec_ms = ms(t);
        let (z, gfv, latency_ms) = self.act_and_generate(&state)?;
        let d_gan = self.critic.discriminate(&gfv)?;
        let t = Instant::now();
        let output = self.ae.decode(&gfv)?;
        codec_ms += ms(t);
        Ok(CompletionResult {
            output,
            path_taken: PathTaken::Gan,
            seed: Some(z),
            d_score_ae: None,
            d_score_gan: Some(d_gan),
            latency_ms,
            codec_ms,
        })
    }

    pub fn complete_hybrid(&self, input: &PointCloud) -> Result<CompletionResult> {
        let t = Instant::now();
        let gfv_ae = self.ae.encode(input)?;
        let mut codec_ms = ms(t);
        let (z, gfv_gan, latency_ms) = self.act_and_generate(&gfv_ae)?;
        let d_ae = self.critic.discriminate(&gfv_ae)?;
        let d_gan = self.critic.discriminate(&gfv_gan)?;
        let path_taken = select_path(d_ae, d_gan);
        let chosen = match path_taken {
            PathTaken::Gan => &gfv_gan,
            PathTaken::Ae => &gfv_ae,
        };
        let t = Instant::now();
        let output = self.ae.decode(chosen)?;
        codec_ms += ms(t);
        Ok(CompletionResult {
            output,
            path_taken,
            seed: Some(z),
            d_score_ae: Some(d_ae),
            d_score_gan: Some(d_gan),
            latency_ms,
            codec_ms,
        })
    }

    pub fn complete(&self, input: &PointCloud, mode: CompletionMode) -> Result<CompletionResult> {
        match mode {
            CompletionMode::Ae => self.complete_ae(input),
            CompletionMode::Vanilla => self.complete_vanilla(input),
            CompletionMode::Hybrid => self.complete_hybrid(input),
        }
    }
}
