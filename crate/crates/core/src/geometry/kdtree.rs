//! Static 3D k-d tree for exact nearest-neighbour queries.
//!
//! Pruning uses `>` against the best squared distance, so equidistant
//! candidates are still visited and ties resolve to the lowest point index.

use super::{dist2, Point};

const LEAF_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Point],
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Point]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = build_node(points, &mut order, 0);
        Self {
            points,
            order,
            root,
        }
    }

    /// Index and squared distance of the nearest point to `q`.
    ///
    /// Panics if the tree was built over no points.
    pub fn nearest(&self, q: &Point) -> (usize, f64) {
        assert!(!self.points.is_empty(), "nearest() on an empty tree");
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(&self.root, q, &mut best);
        best
    }

    fn search(&self, node: &Node, q: &Point, best: &mut (usize, f64)) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d = dist2(q, &self.points[i]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build_node(points: &[Point], order: &mut [usize], offset: usize) -> Node {
    if order.len() <= LEAF_SIZE {
        return Node::Leaf {
            start: offset,
            end: offset + order.len(),
        };
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(points[i][k]);
            hi[k] = hi[k].max(points[i][k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .expect("three axes");
    if hi[axis] == lo[axis] {
        return Node::Leaf {
            start: offset,
            end: offset + order.len(),
        };
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let value = points[order[mid]][axis];
    let (l, r) = order.split_at_mut(mid);
    // Left holds coordinates <= value, right holds >= value.
    Node::Split {
        axis,
        value,
        left: Box::new(build_node(points, l, offset)),
        right: Box::new(build_node(points, r, offset + mid)),
    }
}
