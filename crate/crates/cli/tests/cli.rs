use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = "\
train_per_category = 2
test_per_category = 1
points_per_shape = 64
bench_shapes = 8
ae.encoder_channels = 16,128
ae.decoder_widths = 32
ae.num_points = 64
ae.epochs = 2
ae.batch_size = 4
gan.iterations = 5
gan.batch_size = 4
gan.log_every = 2
gan.probe_critic_steps = 3
agent.max_steps = 30
agent.warmup_steps = 10
agent.batch_size = 8
agent.eval_frequency = 10
agent.actor_hidden = 16
agent.critic_hidden = 16,16
classifier.epochs = 1
";

fn rlgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlgan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rlgan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.cfg");
    fs::write(&p, TINY).unwrap();
    p
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[
        "gen-data",
        "--config",
        cfg,
        "--seed",
        "7",
        "--out",
        a.to_str().unwrap(),
    ]);
    ok(&[
        "gen-data",
        "--config",
        cfg,
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap(),
    ]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 12);
    assert_eq!(ta, tb);
    assert!(a.join("data/train/airplane_0001.xyz").exists());
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = rlgan(&["gen-data", "--no-such-flag"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(!rlgan(&["no-such-command"]).status.success());
    assert!(!rlgan(&["complete", "--input", "x.xyz", "--mode", "gan"])
        .status
        .success());
}

#[test]
fn runtime_errors_are_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rlgan(&["train-ae", "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));

    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "nonsense_key = 1\n").unwrap();
    let out = rlgan(&["gen-data", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense_key"));
}

#[test]
fn end_to_end_tiny_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let run = tmp.path().join("run");
    let common = [
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--seed",
        "3",
        "-q",
    ];
    let with = |cmd: &[&str]| -> Vec<String> {
        cmd.iter()
            .chain(common.iter())
            .map(|s| s.to_string())
            .collect()
    };
    let call = |cmd: &[&str]| {
        let args = with(cmd);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    call(&["gen-data"]);
    call(&["train-ae"]);
    let input = run.join("data/test/chair_0000.xyz");
    let input = input.to_str().unwrap();

    // The AE mode needs no GAN or agent checkpoint.
    let out_ae = tmp.path().join("ae.xyz");
    call(&[
        "complete",
        "--input",
        input,
        "--mode",
        "ae",
        "--output",
        out_ae.to_str().unwrap(),
    ]);
    assert_eq!(fs::read_to_string(&out_ae).unwrap().lines().count(), 64);
    let failed = rlgan(
        &with(&["complete", "--input", input, "--mode", "vanilla"])
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
    );
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stderr).contains("checkpoint"));

    call(&["train-gan"]);
    call(&["train-agent"]);
    call(&["train-classifier"]);
    for f in ["ae_loss.csv", "gan_log.csv", "agent_log.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(run.join("agent_log.csv")).unwrap();
    assert_eq!(
        header.lines().next(),
        Some("step,reward,L_CH,L_GFV,D_score")
    );
    assert_eq!(header.lines().count(), 31);

    let hybrid = tmp.path().join("h.xyz");
    let line = call(&[
        "complete",
        "--input",
        input,
        "--mode",
        "hybrid",
        "--output",
        hybrid.to_str().unwrap(),
    ]);
    assert!(line.contains("64 points"));

    call(&["evaluate", "--ratios", "20,70", "--jitter", "0.01"]);
    let json: Value =
        serde_json::from_str(&fs::read_to_string(run.join("eval.json")).unwrap()).unwrap();
    let rows = json.as_array().expect("array of rows");
    assert_eq!(rows.len(), 1 + 2 * 4);
    for row in rows {
        let obj = row.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "accuracy",
                "latency_ms_mean",
                "mean_chamfer_normalized",
                "mode",
                "ratio"
            ]
        );
        assert!(obj["ratio"].is_number());
        assert!(
            ["gt", "partial", "ae", "vanilla", "hybrid"].contains(&obj["mode"].as_str().unwrap())
        );
        assert!(obj["mean_chamfer_normalized"].as_f64().unwrap() >= 0.0);
        let acc = obj["accuracy"].as_f64().expect("classifier was trained");
        assert!((0.0..=1.0).contains(&acc));
        assert!(
            obj["latency_ms_mean"].is_null() || obj["latency_ms_mean"].as_f64().unwrap() >= 0.0
        );
    }
    assert!(run.join("eval.csv").exists());

    let bench = call(&["bench"]);
    assert!(bench.contains("over 8 shapes"));
    let stats: Value =
        serde_json::from_str(&fs::read_to_string(run.join("bench.json")).unwrap()).unwrap();
    assert!(stats["p99_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn training_is_reproducible_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let logs: Vec<String> = ["x", "y"]
        .iter()
        .map(|name| {
            let run = tmp.path().join(name);
            let common = [
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                run.to_str().unwrap(),
                "-q",
            ];
            for cmd in ["gen-data", "train-ae", "train-gan", "train-agent"] {
                let mut args = vec![cmd];
                args.extend(common);
                ok(&args);
            }
            fs::read_to_string(run.join("agent_log.csv")).unwrap()
                + &fs::read_to_string(run.join("ae_loss.csv")).unwrap()
                + &fs::read_to_string(run.join("gan_log.csv")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}
