use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dist2, GeometryError, PointCloud};

/// How much of a cloud to remove, and the seed choosing where the hole goes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub missing_ratio: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(missing_ratio: f64, seed: u64) -> Result<Self, GeometryError> {
        if !(missing_ratio > 0.0 && missing_ratio < 1.0) {
            return Err(GeometryError::BadRatio(missing_ratio));
        }
        Ok(Self {
            missing_ratio,
            seed,
        })
    }

    /// Number of points removed from a cloud of `n` points.
    pub fn removed(&self, n: usize) -> usize {
        (self.missing_ratio * n as f64).round() as usize
    }
}

/// Removes the `round(m * N)` points nearest to a uniformly chosen seed point.
///
/// Distance ties are broken by ascending index; survivors keep their
/// original order. The result is not re-normalized.
pub fn corrupt_cloud(
    cloud: &PointCloud,
    spec: &CorruptionSpec,
) -> Result<PointCloud, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center = rng.gen_range(0..cloud.len());
    corrupt_around(cloud, spec, center)
}

/// [`corrupt_cloud`] with an explicit seed point index.
pub fn corrupt_around(
    cloud: &PointCloud,
    spec: &CorruptionSpec,
    center: usize,
) -> Result<PointCloud, GeometryError> {
    if !(spec.missing_ratio > 0.0 && spec.missing_ratio < 1.0) {
        return Err(GeometryError::BadRatio(spec.missing_ratio));
    }
    let n = cloud.len();
    let k = spec.removed(n);
    if k >= n {
        return Err(GeometryError::RemovesAll {
            remove: k,
            total: n,
        });
    }
    let seed_pt = cloud.points()[center];
    let mut by_dist: Vec<(f64, usize)> = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| (dist2(p, &seed_pt), i))
        .collect();
    by_dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut removed = vec![false; n];
    for &(_, i) in &by_dist[..k] {
        removed[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
    cloud.select(&keep)
}
