use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rlgan::geometry::xyz;
use rlgan::pipeline::stages::{self, Progress};
use rlgan::pipeline::{parse_ratios, CompletionMode, PathTaken, RunConfig};

/// Point-cloud shape completion: autoencoder, latent GAN and seed-selecting agent.
#[derive(Debug, Parser)]
#[command(name = "rlgan", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic train/test shape dataset.
    GenData,
    /// Train the point-cloud autoencoder.
    TrainAe,
    /// Train the latent GAN on encoded training shapes.
    TrainGan,
    /// Train the seed-selecting agent against the frozen networks.
    TrainAgent,
    /// Train the shape classifier on complete shapes.
    TrainClassifier,
    /// Complete one partial cloud.
    Complete {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "hybrid")]
        mode: CompletionMode,
        /// Defaults to `<out>/completed.xyz`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate completion quality over missing ratios.
    Evaluate {
        /// Missing ratios in percent, e.g. `20,30,40,50,70`.
        #[arg(long)]
        ratios: Option<String>,
        /// Standard deviation of Gaussian input jitter (clipped at 5 sigma).
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Time actor plus generator inference per shape.
    Bench {
        #[arg(long)]
        shapes: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    match &cli.command {
        Command::Evaluate { ratios, jitter } => {
            if let Some(r) = ratios {
                cfg.ratios = parse_ratios(r)?;
            }
            if let Some(j) = jitter {
                cfg.jitter = *j;
            }
        }
        Command::Bench { shapes: Some(n) } => cfg.bench_shapes = *n,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let quiet = cli.quiet;
    let mut report = |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    let progress: Progress = &mut report;
    match cli.command {
        Command::GenData => {
            let ds = stages::gen_data(&cfg)?;
            println!(
                "wrote {} train and {} test shapes to {}",
                ds.train.len(),
                ds.test.len(),
                cfg.data_dir().display()
            );
        }
        Command::TrainAe => {
            let s = stages::train_ae_stage(&cfg, progress)?;
            println!(
                "autoencoder: epoch-1 chamfer {:.6}, final {:.6}, nearest-shape threshold {:.6}",
                s.first_epoch_loss, s.final_epoch_loss, s.nearest_shape_threshold
            );
        }
        Command::TrainGan => {
            let s = stages::train_gan_stage(&cfg, progress)?;
            println!(
                "gan: critic gap {:.5} -> {:.5} after {} generator updates",
                s.initial_gap, s.final_gap, s.generator_steps
            );
        }
        Command::TrainAgent => {
            let s = stages::train_agent_stage(&cfg, progress)?;
            println!(
                "agent: evaluation reward {:.5} (random seeds {:.5})",
                s.final_eval_reward, s.random_baseline_reward
            );
        }
        Command::TrainClassifier => {
            let s = stages::train_classifier_stage(&cfg, progress)?;
            println!("classifier: held-out accuracy {:.4}", s.test_accuracy);
        }
        Command::Complete {
            input,
            mode,
            output,
        } => {
            let cloud =
                xyz::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let pipeline = stages::load_pipeline_for(&cfg, mode)?;
            let r = pipeline.complete(&cloud, mode)?;
            let output = output.unwrap_or_else(|| cfg.out_dir.join("completed.xyz"));
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            xyz::write(&output, &r.output)?;
            let path = match r.path_taken {
                PathTaken::Ae => "ae",
                PathTaken::Gan => "gan",
            };
            let score = |s: Option<f32>| s.map_or("-".to_string(), |v| format!("{v:.5}"));
            println!(
                "{}: {} points via {path} path, D(ae) {} D(gan) {}, action time {:.3} ms",
                output.display(),
                r.output.len(),
                score(r.d_score_ae),
                score(r.d_score_gan),
                r.latency_ms
            );
        }
        Command::Evaluate { .. } => {
            let rows = stages::evaluate_stage(&cfg)?;
            println!("ratio,mode,mean_chamfer_normalized,accuracy,latency_ms_mean");
            for r in &rows {
                let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
                println!(
                    "{},{},{:.6},{},{}",
                    r.ratio,
                    r.mode,
                    r.mean_chamfer_normalized,
                    opt(r.accuracy),
                    opt(r.latency_ms_mean)
                );
            }
        }
        Command::Bench { .. } => {
            let s = stages::bench_stage(&cfg)?;
            println!(
                "actor+generator over {} shapes: mean {:.4} ms, p99 {:.4} ms, max {:.4} ms; encode+decode mean {:.4} ms",
                s.shapes, s.mean_ms, s.p99_ms, s.max_ms, s.codec_mean_ms
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
