use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoEncoder;
use crate::error::{Error, Result};
use crate::gan::Generator;
use crate::geometry::{chamfer_normalized, corrupt_cloud, CorruptionSpec, PointCloud};
use crate::seed;

use super::classifier::Classifier;
use super::completion::{CompletionMode, Pipeline};
use super::dataset::LabeledCloud;

/// One line of the evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Missing ratio as a fraction; 0 for the ground-truth row.
    pub ratio: f64,
    /// `gt`, `partial`, `ae`, `vanilla` or `hybrid`.
    pub mode: String,
    pub mean_chamfer_normalized: f64,
    /// Classification accuracy of the mode's output, when a classifier is given.
    pub accuracy: Option<f64>,
    /// Mean actor plus generator time; only for modes that run them.
    pub latency_ms_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub ratios: Vec<f64>,
    pub modes: Vec<CompletionMode>,
    /// Gaussian jitter standard deviation added to the partial input; 0 disables it.
    pub jitter: f64,
    pub seed: u64,
}

/// Adds `N(0, sigma)` noise clipped at `5 sigma` to every coordinate.
pub fn jitter_cloud(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(format!("jitter: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clip = 5.0 * sigma;
    let pts = cloud
        .points()
        .iter()
        .map(|p| p.map(|c| c + normal.sample(&mut rng).clamp(-clip, clip)))
        .collect();
    Ok(PointCloud::new(pts)?)
}

/// Partial version of test shape `index` at `ratio`, jittered if requested.
pub fn make_partial(
    cloud: &PointCloud,
    ratio: f64,
    index: usize,
    opts: &EvalOptions,
) -> Result<PointCloud> {
    let label = format!("eval/{ratio}");
    let spec = CorruptionSpec::new(ratio, seed::derive_indexed(opts.seed, &label, index as u64))?;
    let partial = corrupt_cloud(cloud, &spec)?;
    jitter_cloud(
        &partial,
        opts.jitter,
        seed::derive_indexed(opts.seed, &format!("{label}/jitter"), index as u64),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Completion quality per ratio and mode, against the complete test shapes.
///
/// Rows: one ground-truth row, then per ratio a `partial` baseline row
/// followed by one row per requested mode.
pub fn evaluate_completion(
    pipeline: &Pipeline,
    classifier: Option<&Classifier>,
    test: &[LabeledCloud],
    opts: &EvalOptions,
) -> Result<Vec<EvalRow>> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let accuracy = |outs: &[PointCloud]| -> Result<Option<f64>> {
        classifier
            .map(|c| {
                super::classifier::evaluate_accuracy(
                    c,
                    outs.iter().zip(test).map(|(o, l)| (o, l.category)),
                )
            })
            .transpose()
    };
    let gts: Vec<PointCloud> = test.iter().map(|l| l.cloud.clone()).collect();
    let gt_ch: Vec<f64> = gts
        .iter()
        .map(|g| chamfer_normalized(g, g))
        .collect::<Result<_, _>>()?;
    let mut rows = vec![EvalRow {
        ratio: 0.0,
        mode: "gt".into(),
        mean_chamfer_normalized: mean(&gt_ch),
        accuracy: accuracy(&gts)?,
        latency_ms_mean: None,
    }];
    for &ratio in &opts.ratios {
        let partials: Vec<PointCloud> = gts
            .iter()
            .enumerate()
            .map(|(i, g)| make_partial(g, ratio, i, opts))
            .collect::<Result<_>>()?;
        let ch: Vec<f64> = partials
            .iter()
            .zip(&gts)
            .map(|(p, g)| chamfer_normalized(p, g))
            .collect::<Result<_, _>>()?;
        rows.push(EvalRow {
            ratio,
            mode: "partial".into(),
            mean_chamfer_normalized: mean(&ch),
            accuracy: accuracy(&partials)?,
            latency_ms_mean: None,
        });
        for &mode in &opts.modes {
            let mut outs = Vec::with_capacity(gts.len());
            let mut ch = Vec::with_capacity(gts.len());
            let mut lat = Vec::with_capacity(gts.len());
            for (p, g) in partials.iter().zip(&gts) {
                let r = pipeline.complete(p, mode)?;
                ch.push(chamfer_normalized(&r.output, g)?);
                lat.push(r.latency_ms);
                outs.push(r.output);
            }
            rows.push(EvalRow {
                ratio,
                mode: mode.name().into(),
                mean_chamfer_normalized: mean(&ch),
                accuracy: accuracy(&outs)?,
                latency_ms_mean: (mode != CompletionMode::Ae).then(|| mean(&lat)),
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[EvalRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "ratio,mode,mean_chamfer_normalized,accuracy,latency_ms_mean"
    )?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.ratio,
            r.mode,
            r.mean_chamfer_normalized,
            opt(r.accuracy),
            opt(r.latency_ms_mean)
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_json(rows: &[EvalRow], path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(rows)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Worst-case distance from a reconstructed training shape to its nearest
/// training shape: `max_i min_j chamfer_n(decode(encode(P_i)), P_j)`.
pub fn nearest_shape_threshold(ae: &AutoEncoder, train: &[PointCloud]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut worst: f64 = 0.0;
    for p in train {
        worst = worst.max(nearest_shape_distance(&ae.reconstruct(p)?, train)?);
    }
    Ok(worst)
}

/// Normalized Chamfer from `cloud` to the closest shape in `shapes`.
pub fn nearest_shape_distance(cloud: &PointCloud, shapes: &[PointCloud]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for s in shapes {
        best = best.min(chamfer_normalized(cloud, s)?);
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::EmptyDataset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub shapes: usize,
    pub mean_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    /// Encode plus decode time, reported separately.
    pub codec_mean_ms: f64,
}

/// Times actor plus generator per shape; the encoder and decoder are timed
/// separately and excluded from the headline numbers.
pub fn bench_latency(pipeline: &Pipeline, shapes: &[PointCloud]) -> Result<LatencyStats> {
    if shapes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut lat = Vec::with_capacity(shapes.len());
    let mut codec = Vec::with_capacity(shapes.len());
    for s in shapes {
        let t = Instant::now();
        let state = pipeline.ae.encode(s)?;
        let enc = t.elapsed().as_secs_f64() * 1e3;
        let (_, gfv, ms) = pipeline.act_and_generate(&state)?;
        let t = Instant::now();
        pipeline.ae.decode(&gfv)?;
        codec.push(enc + t.elapsed().as_secs_f64() * 1e3);
        lat.push(ms);
    }
    let mut sorted = lat.clone();
    sorted.sort_by(f64::total_cmp);
    // Nearest-rank percentile.
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(LatencyStats {
        shapes: shapes.len(),
        mean_ms: mean(&lat),
        p99_ms: sorted[rank - 1],
        max_ms: *sorted.last().expect("non-empty"),
        codec_mean_ms: mean(&codec),
    })
}

/// Decodes of generated GFVs for the given seeds.
pub fn decode_generated(
    ae: &AutoEncoder,
    gen: &Generator,
    seeds: &[crate::gan::LatentSeed],
) -> Result<Vec<PointCloud>> {
    seeds.iter().map(|z| ae.decode(&gen.generate(z)?)).collect()
}
