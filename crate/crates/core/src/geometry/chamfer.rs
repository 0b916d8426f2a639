use super::kdtree::KdTree;
use super::{dist2, GeometryError, Point, PointCloud};

/// Sum over `from` of the squared distance to the nearest point of `to`,
/// accumulated in index order.
fn one_way_brute(from: &[Point], to: &[Point]) -> f64 {
    let mut total = 0.0;
    for a in from {
        let mut best = f64::INFINITY;
        for b in to {
            best = best.min(dist2(a, b));
        }
        total += best;
    }
    total
}

fn one_way_tree(from: &[Point], to: &KdTree<'_>) -> f64 {
    from.iter()
        .map(|a| to.nearest(a).1)
        .fold(0.0, |acc, d| acc + d)
}

/// Chamfer distance: the sum of squared nearest-neighbour distances in both
/// directions (no averaging, no square root). Uses a k-d tree per cloud.
pub fn chamfer_distance(p1: &PointCloud, p2: &PointCloud) -> Result<f64, GeometryError> {
    check(p1, p2)?;
    let t1 = KdTree::build(p1.points());
    let t2 = KdTree::build(p2.points());
    Ok(one_way_tree(p1.points(), &t2) + one_way_tree(p2.points(), &t1))
}

/// Quadratic-time reference implementation of [`chamfer_distance`].
pub fn chamfer_distance_brute(p1: &PointCloud, p2: &PointCloud) -> Result<f64, GeometryError> {
    check(p1, p2)?;
    Ok(one_way_brute(p1.points(), p2.points()) + one_way_brute(p2.points(), p1.points()))
}

/// Chamfer distance divided by `|P1| + |P2|`; the reporting metric.
pub fn chamfer_normalized(p1: &PointCloud, p2: &PointCloud) -> Result<f64, GeometryError> {
    Ok(chamfer_distance(p1, p2)? / (p1.len() + p2.len()) as f64)
}

pub fn chamfer_normalized_brute(p1: &PointCloud, p2: &PointCloud) -> Result<f64, GeometryError> {
    Ok(chamfer_distance_brute(p1, p2)? / (p1.len() + p2.len()) as f64)
}

fn check(p1: &PointCloud, p2: &PointCloud) -> Result<(), GeometryError> {
    if p1.is_empty() || p2.is_empty() {
        return Err(GeometryError::Empty);
    }
    Ok(())
}

/// Chamfer distance between a predicted point set and a target cloud, with
/// its gradient with respect to the predicted coordinates.
///
/// The nearest-neighbour pairing is held fixed for the gradient, which is
/// exact wherever every nearest neighbour is unique.
pub fn chamfer_loss_grad(
    pred: &[Point],
    target: &PointCloud,
) -> Result<(f64, Vec<Point>), GeometryError> {
    if pred.is_empty() {
        return Err(GeometryError::Empty);
    }
    let tgt = target.points();
    let pred_tree = KdTree::build(pred);
    let tgt_tree = KdTree::build(tgt);
    let mut grad = vec![[0.0; 3]; pred.len()];
    let mut forward = 0.0;
    for a in tgt {
        let (j, d) = pred_tree.nearest(a);
        forward += d;
        for k in 0..3 {
            grad[j][k] += 2.0 * (pred[j][k] - a[k]);
        }
    }
    let mut backward = 0.0;
    for (j, b) in pred.iter().enumerate() {
        let (i, d) = tgt_tree.nearest(b);
        backward += d;
        for k in 0..3 {
            grad[j][k] += 2.0 * (b[k] - tgt[i][k]);
        }
    }
    Ok((forward + backward, grad))
}
