//! Point clouds, synthetic shape generation, corruption and Chamfer distance.

mod chamfer;
mod corrupt;
pub mod kdtree;
mod shapes;
pub mod xyz;

use thiserror::Error;

pub use chamfer::{
    chamfer_distance, chamfer_distance_brute, chamfer_loss_grad, chamfer_normalized,
    chamfer_normalized_brute,
};
pub use corrupt::{corrupt_cloud, CorruptionSpec};
pub use shapes::{sample_shape, ShapeCategory, MIN_SHAPE_POINTS};

pub type Point = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    Empty,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("cannot normalize: bounding box is degenerate")]
    Degenerate,
    #[error("missing ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("removing {remove} of {total} points would leave nothing")]
    RemovesAll { remove: usize, total: usize },
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
}

/// An ordered, non-empty list of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite(i));
        }
        Ok(Self { points })
    }

    /// Builds a cloud from a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat<T: Copy + Into<f64>>(flat: &[T]) -> Result<Self, GeometryError> {
        Self::new(
            flat.chunks_exact(3)
                .map(|c| [c[0].into(), c[1].into(), c[2].into()])
                .collect(),
        )
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Coordinates as `f32`, row-major `N x 3`.
    pub fn to_f32_flat(&self) -> Vec<f32> {
        self.points.iter().flatten().map(|&c| c as f32).collect()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist2(&lo, &hi).sqrt()
    }

    /// Returns a new cloud with the listed points in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self, GeometryError> {
        Self::new(idx.iter().map(|&i| self.points[i]).collect())
    }
}

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Centers the bounding box at the origin and scales its diagonal to 1.
pub fn normalize_cloud(cloud: &PointCloud) -> Result<PointCloud, GeometryError> {
    let (lo, hi) = cloud.bounding_box();
    let diag = dist2(&lo, &hi).sqrt();
    if !(diag > 0.0) {
        return Err(GeometryError::Degenerate);
    }
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    PointCloud::new(
        cloud
            .points
            .iter()
            .map(|p| {
                [
                    (p[0] - center[0]) / diag,
                    (p[1] - center[1]) / diag,
                    (p[2] - center[2]) / diag,
                ]
            })
            .collect(),
    )
}
