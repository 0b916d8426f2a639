//! File-backed pipeline stages. Each stage reads its inputs from the run
//! directory, writes its checkpoint and CSV log there, and returns a summary.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{encode_episodes, evaluate_random, train_agent, Environment, Td3Agent};
use crate::autoencoder::{train_ae, AutoEncoder, Gfv};
use crate::error::{Error, Result};
use crate::gan::{load_gan, save_gan, train_gan, Critic, Generator};
use crate::geometry::{corrupt_cloud, sample_shape, CorruptionSpec, PointCloud, ShapeCategory};
use crate::nn::Checkpoint;
use crate::seed;

use super::classifier::{evaluate_accuracy, train_classifier, Classifier};
use super::completion::{CompletionMode, Pipeline};
use super::config::RunConfig;
use super::dataset::Dataset;
use super::evaluate::{
    bench_latency, evaluate_completion, nearest_shape_threshold, write_csv, write_json,
    EvalOptions, EvalRow, LatencyStats,
};

pub type Progress<'a> = &'a mut dyn FnMut(&str);

fn csv_writer(path: &Path, header: &str) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    Ok(w)
}

fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    ck.save(path)?;
    Ok(())
}

fn load_checkpoint(path: &Path, what: &str) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "missing {what} checkpoint {}",
            path.display()
        )));
    }
    Ok(Checkpoint::load(path)?)
}

fn write_summary<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_summary<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn gen_data(cfg: &RunConfig) -> Result<Dataset> {
    cfg.validate()?;
    let ds = Dataset::generate(
        cfg.stream_seed("data"),
        cfg.train_per_category,
        cfg.test_per_category,
        cfg.points_per_shape,
    )?;
    let dir = cfg.data_dir();
    if dir.exists() {
        for split in ["train", "test"] {
            let d = dir.join(split);
            if d.exists() {
                fs::remove_dir_all(d)?;
            }
        }
    }
    ds.save(&dir)?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeSummary {
    pub first_epoch_loss: f64,
    pub final_epoch_loss: f64,
    /// See [`nearest_shape_threshold`].
    pub nearest_shape_threshold: f64,
}

pub fn ae_summary_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("ae_summary.json")
}

pub fn train_ae_stage(cfg: &RunConfig, progress: Progress) -> Result<AeSummary> {
    cfg.validate()?;
    let ds = Dataset::load(cfg.data_dir())?;
    let train = ds.train_clouds();
    let mut ae = AutoEncoder::new(&cfg.ae, cfg.stream_seed("ae/init"))?;
    let mut log = csv_writer(&cfg.out_dir.join("ae_loss.csv"), "epoch,mean_chamfer")?;
    let mut io = Ok(());
    let history = train_ae(
        &mut ae,
        &train,
        &cfg.ae,
        cfg.stream_seed("ae/train"),
        |epoch, loss| {
            if io.is_ok() {
                io = writeln!(log, "{epoch},{loss}");
            }
            progress(&format!("ae epoch {epoch}: mean chamfer {loss:.6}"));
        },
    )?;
    io?;
    log.flush()?;
    let mut ck = Checkpoint::new();
    ae.save_to(&mut ck)?;
    save_checkpoint(&ck, &cfg.ae_checkpoint())?;
    let summary = AeSummary {
        first_epoch_loss: history.first().copied().unwrap_or(f64::NAN),
        final_epoch_loss: history.last().copied().unwrap_or(f64::NAN),
        nearest_shape_threshold: nearest_shape_threshold(&ae, &train)?,
    };
    write_summary(&summary, &ae_summary_path(cfg))?;
    Ok(summary)
}

pub fn load_ae(cfg: &RunConfig) -> Result<AutoEncoder> {
    AutoEncoder::load_from(
        &cfg.ae,
        &load_checkpoint(&cfg.ae_checkpoint(), "autoencoder")?,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanSummary {
    pub initial_gap: f64,
    pub final_gap: f64,
    pub critic_steps: usize,
    pub generator_steps: usize,
}

pub fn encode_all(ae: &AutoEncoder, clouds: &[PointCloud]) -> Result<Vec<Gfv>> {
    clouds.iter().map(|c| ae.encode(c)).collect()
}

pub fn train_gan_stage(cfg: &RunConfig, progress: Progress) -> Result<GanSummary> {
    cfg.validate()?;
    let ds = Dataset::load(cfg.data_dir())?;
    let ae = load_ae(cfg)?;
    let gfvs = encode_all(&ae, &ds.train_clouds())?;
    let mut gen = Generator::new(&cfg.gan, cfg.stream_seed("gan/generator"));
    let mut critic = Critic::new(&cfg.gan, cfg.stream_seed("gan/critic"));
    let mut log = csv_writer(&cfg.out_dir.join("gan_log.csv"), "iter,d_real,d_fake,gp")?;
    let mut io = Ok(());
    let report = train_gan(
        &mut gen,
        &mut critic,
        &gfvs,
        &cfg.gan,
        cfg.stream_seed("gan/train"),
        |r| {
            if io.is_ok() {
                io = writeln!(log, "{},{},{},{}", r.iter, r.d_real, r.d_fake, r.gp);
            }
            progress(&format!(
                "gan iter {}: d_real {:.4} d_fake {:.4} gp {:.4}",
                r.iter, r.d_real, r.d_fake, r.gp
            ));
        },
    )?;
    io?;
    log.flush()?;
    let mut ck = Checkpoint::new();
    save_gan(&mut ck, &gen, &critic)?;
    save_checkpoint(&ck, &cfg.gan_checkpoint())?;
    let summary = GanSummary {
        initial_gap: report.initial_gap,
        final_gap: report.final_gap,
        critic_steps: report.critic_steps,
        generator_steps: report.generator_steps,
    };
    write_summary(&summary, &cfg.out_dir.join("gan_summary.json"))?;
    Ok(summary)
}

/// Every shape corrupted at every ratio, with seeds derived from `label`.
pub fn partial_set(
    clouds: &[PointCloud],
    ratios: &[f64],
    base: u64,
    label: &str,
) -> Result<Vec<PointCloud>> {
    let mut out = Vec::with_capacity(clouds.len() * ratios.len());
    for &r in ratios {
        for (i, c) in clouds.iter().enumerate() {
            let s = seed::derive_indexed(base, &format!("{label}/{r}"), i as u64);
            out.push(corrupt_cloud(c, &CorruptionSpec::new(r, s)?)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub final_eval_reward: f64,
    pub random_baseline_reward: f64,
    pub critic_updates: usize,
    pub actor_updates: usize,
    pub evaluations: Vec<(usize, f64)>,
}

pub fn load_environment(cfg: &RunConfig) -> Result<Environment> {
    let ae = load_ae(cfg)?;
    let (gen, critic) = load_gan(&cfg.gan, &load_checkpoint(&cfg.gan_checkpoint(), "GAN")?)?;
    Environment::new(ae, gen, critic, cfg.reward)
}

pub fn train_agent_stage(cfg: &RunConfig, progress: Progress) -> Result<AgentSummary> {
    cfg.validate()?;
    let ds = Dataset::load(cfg.data_dir())?;
    let env = load_environment(cfg)?;
    let train = partial_set(&ds.train_clouds(), &cfg.ratios, cfg.seed, "agent/train")?;
    let eval = partial_set(&ds.test_clouds(), &cfg.ratios, cfg.seed, "agent/eval")?;
    let mut agent = Td3Agent::new(cfg.agent.clone(), cfg.stream_seed("agent/init"))?;
    let mut log = csv_writer(
        &cfg.out_dir.join("agent_log.csv"),
        "step,reward,L_CH,L_GFV,D_score",
    )?;
    let mut io = Ok(());
    let report = train_agent(
        &mut agent,
        &env,
        &train,
        &eval,
        cfg.stream_seed("agent/train"),
        |s| {
            let b = &s.breakdown;
            if io.is_ok() {
                io = writeln!(
                    log,
                    "{},{},{},{},{}",
                    s.step, b.reward, b.l_ch, b.l_gfv, b.d_score
                );
            }
            if (s.step + 1) % 500 == 0 {
                progress(&format!(
                    "agent step {}: reward {:.4}",
                    s.step + 1,
                    b.reward
                ));
            }
        },
    )?;
    io?;
    log.flush()?;
    let mut ck = Checkpoint::new();
    agent.save_to(&mut ck)?;
    save_checkpoint(&ck, &cfg.agent_checkpoint())?;
    let episodes = encode_episodes(&env, &eval)?;
    let summary = AgentSummary {
        final_eval_reward: report.final_eval_reward,
        random_baseline_reward: evaluate_random(&env, &episodes, cfg.stream_seed("agent/random"))?,
        critic_updates: report.critic_updates,
        actor_updates: report.actor_updates,
        evaluations: report.evaluations,
    };
    write_summary(&summary, &cfg.out_dir.join("agent_summary.json"))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    pub final_epoch_loss: f64,
    /// Accuracy on the complete held-out shapes.
    pub test_accuracy: f64,
}

pub fn train_classifier_stage(cfg: &RunConfig, progress: Progress) -> Result<ClassifierSummary> {
    cfg.validate()?;
    let ds = Dataset::load(cfg.data_dir())?;
    let mut clf = Classifier::untrained(cfg.stream_seed("classifier/init"));
    let mut log = csv_writer(
        &cfg.out_dir.join("classifier_loss.csv"),
        "epoch,mean_cross_entropy",
    )?;
    let mut io = Ok(());
    let history = train_classifier(
        &mut clf,
        &ds.train,
        &cfg.classifier,
        cfg.stream_seed("classifier/train"),
        |e, l| {
            if io.is_ok() {
                io = writeln!(log, "{e},{l}");
            }
            progress(&format!("classifier epoch {e}: cross entropy {l:.5}"));
        },
    )?;
    io?;
    log.flush()?;
    let mut ck = Checkpoint::new();
    clf.save_to(&mut ck)?;
    save_checkpoint(&ck, &cfg.classifier_checkpoint())?;
    let summary = ClassifierSummary {
        final_epoch_loss: history.last().copied().unwrap_or(f64::NAN),
        test_accuracy: evaluate_accuracy(&clf, ds.test.iter().map(|l| (&l.cloud, l.category)))?,
    };
    write_summary(&summary, &cfg.out_dir.join("classifier_summary.json"))?;
    Ok(summary)
}

pub fn load_pipeline(cfg: &RunConfig) -> Result<Pipeline> {
    let env = load_environment(cfg)?;
    let agent = Td3Agent::load_from(
        cfg.agent.clone(),
        &load_checkpoint(&cfg.agent_checkpoint(), "agent")?,
    )?;
    Ok(Pipeline {
        ae: env.autoencoder().clone(),
        generator: env.generator().clone(),
        critic: env.critic().clone(),
        actor: agent.actor,
    })
}

/// Loads only what `mode` needs, so `ae` works without GAN or agent checkpoints.
pub fn load_pipeline_for(cfg: &RunConfig, mode: CompletionMode) -> Result<Pipeline> {
    match mode {
        CompletionMode::Ae => {
            let ae = load_ae(cfg)?;
            Ok(Pipeline {
                ae,
                generator: Generator::new(&cfg.gan, 0),
                critic: Critic::new(&cfg.gan, 0),
                actor: crate::agent::Actor::new(&cfg.agent.actor_hidden, 0),
            })
        }
        _ => load_pipeline(cfg),
    }
}

pub fn load_classifier(cfg: &RunConfig) -> Result<Option<Classifier>> {
    let path = cfg.classifier_checkpoint();
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(Classifier::load_from(&Checkpoint::load(path)?)?))
}

pub fn evaluate_stage(cfg: &RunConfig) -> Result<Vec<EvalRow>> {
    cfg.validate()?;
    let ds = Dataset::load(cfg.data_dir())?;
    let pipeline = load_pipeline(cfg)?;
    let clf = load_classifier(cfg)?;
    let opts = EvalOptions {
        ratios: cfg.ratios.clone(),
        modes: CompletionMode::ALL.to_vec(),
        jitter: cfg.jitter,
        seed: cfg.stream_seed("evaluate"),
    };
    let rows = evaluate_completion(&pipeline, clf.as_ref(), &ds.test, &opts)?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_csv(&rows, cfg.out_dir.join("eval.csv"))?;
    write_json(&rows, cfg.out_dir.join("eval.json"))?;
    Ok(rows)
}

/// Fresh synthetic shapes, corrupted at the largest configured ratio.
pub fn bench_shapes(cfg: &RunConfig) -> Result<Vec<PointCloud>> {
    let ratio = cfg.ratios.iter().cloned().fold(f64::NAN, f64::max);
    (0..cfg.bench_shapes)
        .map(|i| {
            let cat = ShapeCategory::ALL[i % ShapeCategory::ALL.len()];
            let c = sample_shape(
                cat,
                cfg.points_per_shape,
                seed::derive_indexed(cfg.seed, "bench/shape", i as u64),
            )?;
            let spec = CorruptionSpec::new(
                ratio,
                seed::derive_indexed(cfg.seed, "bench/corrupt", i as u64),
            )?;
            Ok(corrupt_cloud(&c, &spec)?)
        })
        .collect()
}

pub fn bench_stage(cfg: &RunConfig) -> Result<LatencyStats> {
    cfg.validate()?;
    let pipeline = load_pipeline(cfg)?;
    let stats = bench_latency(&pipeline, &bench_shapes(cfg)?)?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_summary(&stats, &cfg.out_dir.join("bench.json"))?;
    Ok(stats)
}

pub fn read_ae_summary(cfg: &RunConfig) -> Result<AeSummary> {
    read_summary(&ae_summary_path(cfg))
}
