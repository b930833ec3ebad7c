//! Static kd-tree for nearest-neighbor queries over 3D point sets.
//!
//! Built once over an immutable slice, median-split along the widest axis.
//! Ties in the median selection are broken by original index so that the
//! tree layout, and therefore every query result, is deterministic for a
//! given input ordering.

use crate::math::Vec3;

struct Node {
    /// Split coordinate along `axis`; leaves use `axis = 3`.
    split: f64,
    axis: u8,
    left: u32,
    right: u32,
    /// Range into `order` for leaf nodes.
    start: u32,
    end: u32,
}

const LEAF_SIZE: usize = 12;
const NO_CHILD: u32 = u32::MAX;

pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: u32,
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> KdTree {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            points: points.to_vec(),
            order: Vec::new(),
            nodes: Vec::new(),
            root: NO_CHILD,
        };
        if !points.is_empty() {
            let n = order.len();
            tree.root = tree.split(&mut order, 0, n);
        }
        tree.order = order;
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn split(&mut self, order: &mut [u32], start: usize, end: usize) -> u32 {
        let count = end - start;
        if count <= LEAF_SIZE {
            self.nodes.push(Node {
                split: 0.0,
                axis: 3,
                left: NO_CHILD,
                right: NO_CHILD,
                start: start as u32,
                end: end as u32,
            });
            return (self.nodes.len() - 1) as u32;
        }
        let slice = &mut order[start..end];
        let mut lo = Vec3::ZERO;
        let mut hi = Vec3::ZERO;
        for (k, &idx) in slice.iter().enumerate() {
            let p = self.points[idx as usize];
            if k == 0 {
                lo = p;
                hi = p;
            } else {
                lo = lo.min_components(p);
                hi = hi.max_components(p);
            }
        }
        let extent = hi - lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = count / 2;
        let points = &self.points;
        slice.select_nth_unstable_by(mid, |&a, &b| {
            let ka = (points[a as usize][axis], a);
            let kb = (points[b as usize][axis], b);
            ka.partial_cmp(&kb).expect("non-finite coordinate in kd-tree")
        });
        let split = self.points[slice[mid] as usize][axis];
        let left = self.split(order, start, start + mid);
        let right = self.split(order, start + mid, end);
        self.nodes.push(Node {
            split,
            axis: axis as u8,
            left,
            right,
            start: 0,
            end: 0,
        });
        (self.nodes.len() - 1) as u32
    }

    /// Index and squared distance of the nearest stored point.
    ///
    /// Panics on an empty tree; callers guard with `is_empty`.
    pub fn nearest(&self, query: Vec3) -> (usize, f64) {
        assert!(!self.is_empty(), "nearest() on empty kd-tree");
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, query, &mut best);
        best
    }

    fn search(&self, node_id: u32, query: Vec3, best: &mut (usize, f64)) {
        let node = &self.nodes[node_id as usize];
        if node.axis == 3 {
            for &idx in &self.order[node.start as usize..node.end as usize] {
                let d = (self.points[idx as usize] - query).norm_squared();
                // Strict improvement keeps the lowest-index point on ties
                // only through deterministic traversal order.
                if d < best.1 {
                    *best = (idx as usize, d);
                }
            }
            return;
        }
        let axis = node.axis as usize;
        let delta = query[axis] - node.split;
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, query, best);
        if delta * delta < best.1 {
            self.search(far, query, best);
        }
    }
}
