//! Run configuration: a flat `key = value` file whose values can be
//! overridden individually from the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agent::{AgentConfig, RewardWeights};
use crate::autoencoder::AeConfig;
use crate::error::{Error, Result};
use crate::gan::GanConfig;
use crate::seed;

use super::classifier::ClassifierConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub train_per_category: usize,
    pub test_per_category: usize,
    /// Points sampled per complete synthetic shape.
    pub points_per_shape: usize,
    /// Missing ratios as fractions in `(0, 1)`.
    pub ratios: Vec<f64>,
    /// Standard deviation of evaluation input jitter; 0 disables it.
    pub jitter: f64,
    pub bench_shapes: usize,
    pub ae: AeConfig,
    pub gan: GanConfig,
    pub agent: AgentConfig,
    pub reward: RewardWeights,
    pub classifier: ClassifierConfig,
    pub data_dir: Option<PathBuf>,
    pub ae_checkpoint: Option<PathBuf>,
    pub gan_checkpoint: Option<PathBuf>,
    pub agent_checkpoint: Option<PathBuf>,
    pub classifier_checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("run"),
            train_per_category: 100,
            test_per_category: 25,
            points_per_shape: 512,
            ratios: vec![0.2, 0.3, 0.4, 0.5, 0.7],
            jitter: 0.0,
            bench_shapes: 1000,
            ae: AeConfig::default(),
            gan: GanConfig::default(),
            agent: AgentConfig::default(),
            reward: RewardWeights::default(),
            classifier: ClassifierConfig::default(),
            data_dir: None,
            ae_checkpoint: None,
            gan_checkpoint: None,
            agent_checkpoint: None,
            classifier_checkpoint: None,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Parses `20,30,70` (percent) into fractions.
pub fn parse_ratios(value: &str) -> Result<Vec<f64>> {
    let pct: Vec<f64> = list("ratios", value)?;
    if pct.is_empty() {
        return Err(Error::Config("ratios: empty list".into()));
    }
    pct.iter()
        .map(|&p| {
            if p > 0.0 && p < 100.0 {
                Ok(p / 100.0)
            } else {
                Err(Error::Config(format!(
                    "ratios: {p} is not a percentage in (0, 100)"
                )))
            }
        })
        .collect()
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "seed" => self.seed = num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "train_per_category" => self.train_per_category = num(key, value)?,
            "test_per_category" => self.test_per_category = num(key, value)?,
            "points_per_shape" => self.points_per_shape = num(key, value)?,
            "ratios" => self.ratios = parse_ratios(value)?,
            "jitter" => self.jitter = num(key, value)?,
            "bench_shapes" => self.bench_shapes = num(key, value)?,
            "data_dir" => self.data_dir = path(),
            "ae_checkpoint" => self.ae_checkpoint = path(),
            "gan_checkpoint" => self.gan_checkpoint = path(),
            "agent_checkpoint" => self.agent_checkpoint = path(),
            "classifier_checkpoint" => self.classifier_checkpoint = path(),

            "ae.encoder_channels" => self.ae.encoder_channels = list(key, value)?,
            "ae.decoder_widths" => self.ae.decoder_widths = list(key, value)?,
            "ae.num_points" => self.ae.num_points = num(key, value)?,
            "ae.epochs" => self.ae.epochs = num(key, value)?,
            "ae.batch_size" => self.ae.batch_size = num(key, value)?,
            "ae.learning_rate" => self.ae.learning_rate = num(key, value)?,

            "gan.lambda_gp" => self.gan.lambda_gp = num(key, value)?,
            "gan.n_critic" => self.gan.n_critic = num(key, value)?,
            "gan.learning_rate" => self.gan.learning_rate = num(key, value)?,
            "gan.beta1" => self.gan.beta1 = num(key, value)?,
            "gan.beta2" => self.gan.beta2 = num(key, value)?,
            "gan.batch_size" => self.gan.batch_size = num(key, value)?,
            "gan.iterations" => self.gan.iterations = num(key, value)?,
            "gan.generator_hidden" => self.gan.generator_hidden = list(key, value)?,
            "gan.critic_hidden" => self.gan.critic_hidden = list(key, value)?,
            "gan.log_every" => self.gan.log_every = num(key, value)?,
            "gan.probe_critic_steps" => self.gan.probe_critic_steps = num(key, value)?,

            "agent.max_steps" => self.agent.max_steps = num(key, value)?,
            "agent.warmup_steps" => self.agent.warmup_steps = num(key, value)?,
            "agent.exploration_noise" => self.agent.exploration_noise = num(key, value)?,
            "agent.batch_size" => self.agent.batch_size = num(key, value)?,
            "agent.gamma" => self.agent.gamma = num(key, value)?,
            "agent.tau" => self.agent.tau = num(key, value)?,
            "agent.policy_noise" => self.agent.policy_noise = num(key, value)?,
            "agent.noise_clip" => self.agent.noise_clip = num(key, value)?,
            "agent.policy_delay" => self.agent.policy_delay = num(key, value)?,
            "agent.replay_capacity" => self.agent.replay_capacity = num(key, value)?,
            "agent.eval_frequency" => self.agent.eval_frequency = num(key, value)?,
            "agent.actor_lr" => self.agent.actor_lr = num(key, value)?,
            "agent.critic_lr" => self.agent.critic_lr = num(key, value)?,
            "agent.actor_hidden" => self.agent.actor_hidden = list(key, value)?,
            "agent.critic_hidden" => self.agent.critic_hidden = list(key, value)?,

            "reward.chamfer" => self.reward.chamfer = num(key, value)?,
            "reward.gfv" => self.reward.gfv = num(key, value)?,
            "reward.discriminator" => self.reward.discriminator = num(key, value)?,

            "classifier.epochs" => self.classifier.epochs = num(key, value)?,
            "classifier.batch_size" => self.classifier.batch_size = num(key, value)?,
            "classifier.learning_rate" => self.classifier.learning_rate = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_per_category == 0 || self.test_per_category == 0 {
            return Err(Error::Config("dataset sizes must be positive".into()));
        }
        if self.points_per_shape < crate::geometry::MIN_SHAPE_POINTS {
            return Err(Error::Config(format!(
                "points_per_shape must be >= {}",
                crate::geometry::MIN_SHAPE_POINTS
            )));
        }
        if self.ratios.is_empty() || self.ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::Config(format!(
                "ratios must lie in (0, 1): {:?}",
                self.ratios
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config("jitter must be finite and >= 0".into()));
        }
        self.ae.validate()?;
        self.gan.validate()?;
        self.agent.validate()?;
        self.reward.validate()?;
        self.classifier.validate()
    }

    /// Seed of the random stream `label` of this run.
    pub fn stream_seed(&self, label: &str) -> u64 {
        seed::derive(self.seed, label)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("data"))
    }

    fn checkpoint(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit
            .clone()
            .unwrap_or_else(|| self.out_dir.join("checkpoints").join(name))
    }

    pub fn ae_checkpoint(&self) -> PathBuf {
        self.checkpoint(&self.ae_checkpoint, "ae.ckpt")
    }

    pub fn gan_checkpoint(&self) -> PathBuf {
        self.checkpoint(&self.gan_checkpoint, "gan.ckpt")
    }

    pub fn agent_checkpoint(&self) -> PathBuf {
        self.checkpoint(&self.agent_checkpoint, "agent.ckpt")
    }

    pub fn classifier_checkpoint(&self) -> PathBuf {
        self.checkpoint(&self.classifier_checkpoint, "classifier.ckpt")
    }

    /// Renders every setting in the file format; `apply_text` reads it back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("train_per_category", self.train_per_category.to_string());
        kv("test_per_category", self.test_per_category.to_string());
        kv("points_per_shape", self.points_per_shape.to_string());
        kv(
            "ratios",
            join(
                &self
                    .ratios
                    .iter()
                    .map(|r| (r * 1e11).round() / 1e9)
                    .collect::<Vec<_>>(),
            ),
        );
        kv("jitter", self.jitter.to_string());
        kv("bench_shapes", self.bench_shapes.to_string());
        for (k, p) in [
            ("data_dir", &self.data_dir),
            ("ae_checkpoint", &self.ae_checkpoint),
            ("gan_checkpoint", &self.gan_checkpoint),
            ("agent_checkpoint", &self.agent_checkpoint),
            ("classifier_checkpoint", &self.classifier_checkpoint),
        ] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        let ae = &self.ae;
        kv("ae.encoder_channels", join(&ae.encoder_channels));
        kv("ae.decoder_widths", join(&ae.decoder_widths));
        kv("ae.num_points", ae.num_points.to_string());
        kv("ae.epochs", ae.epochs.to_string());
        kv("ae.batch_size", ae.batch_size.to_string());
        kv("ae.learning_rate", ae.learning_rate.to_string());
        let g = &self.gan;
        kv("gan.lambda_gp", g.lambda_gp.to_string());
        kv("gan.n_critic", g.n_critic.to_string());
        kv("gan.learning_rate", g.learning_rate.to_string());
        kv("gan.beta1", g.beta1.to_string());
        kv("gan.beta2", g.beta2.to_string());
        kv("gan.batch_size", g.batch_size.to_string());
        kv("gan.iterations", g.iterations.to_string());
        kv("gan.generator_hidden", join(&g.generator_hidden));
        kv("gan.critic_hidden", join(&g.critic_hidden));
        kv("gan.log_every", g.log_every.to_string());
        kv("gan.probe_critic_steps", g.probe_critic_steps.to_string());
        let a = &self.agent;
        kv("agent.max_steps", a.max_steps.to_string());
        kv("agent.warmup_steps", a.warmup_steps.to_string());
        kv("agent.exploration_noise", a.exploration_noise.to_string());
        kv("agent.batch_size", a.batch_size.to_string());
        kv("agent.gamma", a.gamma.to_string());
        kv("agent.tau", a.tau.to_string());
        kv("agent.policy_noise", a.policy_noise.to_string());
        kv("agent.noise_clip", a.noise_clip.to_string());
        kv("agent.policy_delay", a.policy_delay.to_string());
        kv("agent.replay_capacity", a.replay_capacity.to_string());
        kv("agent.eval_frequency", a.eval_frequency.to_string());
        kv("agent.actor_lr", a.actor_lr.to_string());
        kv("agent.critic_lr", a.critic_lr.to_string());
        kv("agent.actor_hidden", join(&a.actor_hidden));
        kv("agent.critic_hidden", join(&a.critic_hidden));
        kv("reward.chamfer", self.reward.chamfer.to_string());
        kv("reward.gfv", self.reward.gfv.to_string());
        kv(
            "reward.discriminator",
            self.reward.discriminator.to_string(),
        );
        kv("classifier.epochs", self.classifier.epochs.to_string());
        kv(
            "classifier.batch_size",
            self.classifier.batch_size.to_string(),
        );
        kv(
            "classifier.learning_rate",
            self.classifier.learning_rate.to_string(),
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 7;
        cfg.ratios = vec![0.2, 0.3, 0.25, 0.7];
        cfg.ae.decoder_widths = vec![64, 32];
        cfg.gan_checkpoint = Some("x/g.ckpt".into());
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# header\n\nseed = 9 # trailing\nae.epochs=3\n")
            .unwrap();
        assert_eq!((cfg.seed, cfg.ae.epochs), (9, 3));
        cfg.set("seed", "11").unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_text("bogus = 1").is_err());
        assert!(cfg.apply_text("seed").is_err());
        assert!(cfg.set("seed", "-3").is_err());
        assert!(cfg.set("ratios", "20,100").is_err());
        assert_eq!(parse_ratios("20, 30,70").unwrap(), vec![0.2, 0.3, 0.7]);
    }

    #[test]
    fn default_paths_live_under_out_dir() {
        let cfg = RunConfig {
            out_dir: "r".into(),
            ..RunConfig::default()
        };
        assert_eq!(cfg.ae_checkpoint(), Path::new("r/checkpoints/ae.ckpt"));
        assert_eq!(cfg.data_dir(), Path::new("r/data"));
        assert!(cfg.validate().is_ok());
    }
}
