//! Parametric synthetic shape categories.
//!
//! Each shape is a union of at most six boxes, cylinders and ellipsoids with
//! per-shape randomized dimensions; points are drawn uniformly by surface area.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize_cloud, GeometryError, Point, PointCloud};

/// Minimum number of points a generated shape may have.
pub const MIN_SHAPE_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeCategory {
    Table,
    Chair,
    Airplane,
    Car,
}

impl ShapeCategory {
    pub const ALL: [ShapeCategory; 4] = [
        ShapeCategory::Table,
        ShapeCategory::Chair,
        ShapeCategory::Airplane,
        ShapeCategory::Car,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeCategory::Table => "table",
            ShapeCategory::Chair => "chair",
            ShapeCategory::Airplane => "airplane",
            ShapeCategory::Car => "car",
        }
    }

    fn primitives<R: Rng>(self, rng: &mut R) -> Vec<Primitive> {
        match self {
            ShapeCategory::Table => table(rng),
            ShapeCategory::Chair => chair(rng),
            ShapeCategory::Airplane => airplane(rng),
            ShapeCategory::Car => car(rng),
        }
    }
}

impl fmt::Display for ShapeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown shape category `{s}`"))
    }
}

/// Samples `n_points` points on a random instance of `category`, normalized.
pub fn sample_shape(
    category: ShapeCategory,
    n_points: usize,
    seed: u64,
) -> Result<PointCloud, GeometryError> {
    if n_points < MIN_SHAPE_POINTS {
        return Err(GeometryError::TooFewPoints {
            min: MIN_SHAPE_POINTS,
            got: n_points,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prims = category.primitives(&mut rng);
    let pick = WeightedIndex::new(prims.iter().map(Primitive::area))
        .expect("primitive areas are positive");
    let points = (0..n_points)
        .map(|_| prims[pick.sample(&mut rng)].sample(&mut rng))
        .collect();
    normalize_cloud(&PointCloud::new(points)?)
}

#[derive(Debug, Clone, Copy)]
enum Primitive {
    Cuboid {
        center: Point,
        half: Point,
    },
    /// Closed cylinder along coordinate axis `axis`.
    Cylinder {
        center: Point,
        axis: usize,
        radius: f64,
        half_len: f64,
    },
    Ellipsoid {
        center: Point,
        radii: Point,
    },
}

impl Primitive {
    fn area(&self) -> f64 {
        match *self {
            Primitive::Cuboid { half: h, .. } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            Primitive::Cylinder {
                radius, half_len, ..
            } => 2.0 * PI * radius * (2.0 * half_len) + 2.0 * PI * radius * radius,
            Primitive::Ellipsoid {
                radii: [a, b, c], ..
            } => {
                // Knud Thomsen's approximation; only used as a sampling weight.
                let p = 1.6075;
                let m = ((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0;
                4.0 * PI * m.powf(1.0 / p)
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        match *self {
            Primitive::Cuboid { center, half } => {
                let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                let face = WeightedIndex::new(areas)
                    .expect("positive extents")
                    .sample(rng);
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = if k == face {
                        sign * half[k]
                    } else {
                        rng.gen_range(-half[k]..=half[k])
                    };
                }
                add(center, p)
            }
            Primitive::Cylinder {
                center,
                axis,
                radius,
                half_len,
            } => {
                let side = 2.0 * half_len;
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let theta = rng.gen_range(0.0..2.0 * PI);
                let mut p = [0.0; 3];
                if rng.gen_range(0.0..side + radius) < side {
                    p[axis] = rng.gen_range(-half_len..=half_len);
                    p[u] = radius * theta.cos();
                    p[v] = radius * theta.sin();
                } else {
                    let r = radius * rng.gen::<f64>().sqrt();
                    p[axis] = if rng.gen::<bool>() {
                        half_len
                    } else {
                        -half_len
                    };
                    p[u] = r * theta.cos();
                    p[v] = r * theta.sin();
                }
                add(center, p)
            }
            Primitive::Ellipsoid {
                center,
                radii: [a, b, c],
            } => {
                let g_max = (b * c).max(a * c).max(a * b);
                loop {
                    let u = unit_vector(rng);
                    let g =
                        ((b * c * u[0]).powi(2) + (a * c * u[1]).powi(2) + (a * b * u[2]).powi(2))
                            .sqrt();
                    if rng.gen::<f64>() * g_max <= g {
                        return add(center, [a * u[0], b * u[1], c * u[2]]);
                    }
                }
            }
        }
    }
}

fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn unit_vector<R: Rng>(rng: &mut R) -> Point {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

fn cuboid(center: Point, size: Point) -> Primitive {
    Primitive::Cuboid {
        center,
        half: [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0],
    }
}

/// Four square legs of side `leg` and height `h`, inset `inset` from the
/// corners of a `w x d` footprint, standing on y = 0.
fn legs(w: f64, d: f64, h: f64, leg: f64, inset: f64) -> Vec<Primitive> {
    let x = w / 2.0 - inset - leg / 2.0;
    let z = d / 2.0 - inset - leg / 2.0;
    [(x, z), (x, -z), (-x, z), (-x, -z)]
        .into_iter()
        .map(|(cx, cz)| cuboid([cx, h / 2.0, cz], [leg, h, leg]))
        .collect()
}

fn table<R: Rng>(rng: &mut R) -> Vec<Primitive> {
    let w = rng.gen_range(1.0..1.6);
    let d = rng.gen_range(0.6..1.0);
    let t = rng.gen_range(0.04..0.08);
    let h = rng.gen_range(0.6..0.9);
    let leg = rng.gen_range(0.05..0.1);
    let inset = rng.gen_range(0.02..0.1);
    let mut p = vec![cuboid([0.0, h - t / 2.0, 0.0], [w, t, d])];
    p.extend(legs(w, d, h - t, leg, inset));
    p
}

fn chair<R: Rng>(rng: &mut R) -> Vec<Primitive> {
    let w = rng.gen_range(0.45..0.6);
    let d = rng.gen_range(0.45..0.6);
    let sh = rng.gen_range(0.4..0.5);
    let t = rng.gen_range(0.04..0.08);
    let bh = rng.gen_range(0.4..0.7);
    let bt = rng.gen_range(0.03..0.07);
    let leg = rng.gen_range(0.03..0.06);
    let mut p = vec![
        cuboid([0.0, sh - t / 2.0, 0.0], [w, t, d]),
        cuboid([0.0, sh + bh / 2.0, -d / 2.0 + bt / 2.0], [w, bh, bt]),
    ];
    p.extend(legs(w, d, sh - t, leg, 0.0));
    p
}

fn airplane<R: Rng>(rng: &mut R) -> Vec<Primitive> {
    let len = rng.gen_range(0.8..1.2);
    let r = rng.gen_range(0.06..0.1);
    let chord = rng.gen_range(0.12..0.22);
    let span = rng.gen_range(0.7..1.1);
    let wing_x = rng.gen_range(-0.1..0.1);
    let tail_span = rng.gen_range(0.2..0.35);
    let fin_h = rng.gen_range(0.12..0.22);
    let tail_x = -0.4 * len;
    vec![
        Primitive::Ellipsoid {
            center: [0.0, 0.0, 0.0],
            radii: [len / 2.0, r, r],
        },
        cuboid([wing_x, 0.0, 0.0], [chord, 0.02, span]),
        cuboid([tail_x, 0.0, 0.0], [chord * 0.6, 0.015, tail_span]),
        cuboid(
            [tail_x, r + fin_h / 2.0 - 0.02, 0.0],
            [chord * 0.6, fin_h, 0.015],
        ),
    ]
}

fn car<R: Rng>(rng: &mut R) -> Vec<Primitive> {
    let len = rng.gen_range(0.9..1.2);
    let h = rng.gen_range(0.18..0.28);
    let w = rng.gen_range(0.4..0.55);
    let wheel_r = rng.gen_range(0.09..0.13);
    let wheel_w = rng.gen_range(0.03..0.05);
    let cabin_len = len * rng.gen_range(0.4..0.6);
    let cabin_h = rng.gen_range(0.12..0.2);
    let cabin_x = rng.gen_range(-0.1..0.05);
    let body_y = wheel_r + h / 2.0 - 0.05;
    let mut p = vec![
        cuboid([0.0, body_y, 0.0], [len, h, w]),
        cuboid(
            [cabin_x, body_y + h / 2.0 + cabin_h / 2.0, 0.0],
            [cabin_len, cabin_h, w * 0.9],
        ),
    ];
    for (x, z) in [(0.35, 0.5), (0.35, -0.5), (-0.35, 0.5), (-0.35, -0.5)] {
        p.push(Primitive::Cylinder {
            center: [x * len, wheel_r, z * w],
            axis: 2,
            radius: wheel_r,
            half_len: wheel_w / 2.0,
        });
    }
    p
}
