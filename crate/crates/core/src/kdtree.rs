//! Static 3D kd-tree over a point set.
//!
//! All queries break distance ties by the smaller point index so that
//! results are identical to an exhaustive scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::Vec3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, points.len(), &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn dist2(&self, q: &[f64; 3], i: usize) -> f64 {
        let p = &self.points[i];
        let (dx, dy, dz) = (p[0] - q[0], p[1] - q[1], p[2] - q[2]);
        dx * dx + dy * dy + dz * dz
    }

    /// Nearest point to `q`, ties resolved to the smaller index.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.knn(q, 1, None).into_iter().next()
    }

    /// The `k` nearest points to `q` (skipping `exclude`), ascending by
    /// `(distance, index)`.
    pub fn knn(&self, q: &Vec3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, &q, k, exclude, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|c| (c.index, c.dist2.sqrt()))
            .collect()
    }

    fn knn_rec(
        &self,
        node: usize,
        q: &[f64; 3],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let c = Candidate {
                        dist2: self.dist2(q, i),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[axis] - value;
                let (near, far) = if delta <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_rec(near, q, k, exclude, heap);
                let full = heap.len() == k;
                if !full || delta * delta <= heap.peek().unwrap().dist2 {
                    self.knn_rec(far, q, k, exclude, heap);
                }
            }
        }
    }

    /// The `k` points ranked smallest by `metric(i)` (skipping `exclude`),
    /// ascending by `(metric, index)`. `metric(i)` must be at least
    /// `scale * |points[i] - q|`; that bound prunes subtrees, so the result
    /// equals an exhaustive scan.
    pub fn knn_by(
        &self,
        q: &Vec3,
        k: usize,
        exclude: Option<usize>,
        scale: f64,
        metric: impl Fn(usize) -> f64,
    ) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let q = [q.x, q.y, q.z];
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        let mut search = MetricSearch {
            tree: self,
            q,
            k,
            exclude,
            scale,
            metric,
            heap: &mut heap,
        };
        search.visit(0, [0.0; 3]);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        // `dist2` holds the metric value itself here.
        out.into_iter().map(|c| (c.index, c.dist2)).collect()
    }

    /// Indices of all points with distance `<= radius` from `q`, ascending.
    pub fn within_radius(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let q = [q.x, q.y, q.z];
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            match self.nodes[node] {
                Node::Leaf { start, end } => {
                    out.extend(
                        self.order[start..end]
                            .iter()
                            .copied()
                            .filter(|&i| self.dist2(&q, i) <= r2),
                    );
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let delta = q[axis] - value;
                    if delta <= radius {
                        stack.push(left);
                    }
                    if -delta <= radius {
                        stack.push(right);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

struct MetricSearch<'a, F> {
    tree: &'a KdTree,
    q: [f64; 3],
    k: usize,
    exclude: Option<usize>,
    scale: f64,
    metric: F,
    heap: &'a mut BinaryHeap<Candidate>,
}

impl<F: Fn(usize) -> f64> MetricSearch<'_, F> {
    /// `offset` is the per-axis distance from `q` to the node's cell.
    fn visit(&mut self, node: usize, offset: [f64; 3]) {
        match self.tree.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.tree.order[start..end] {
                    if Some(i) == self.exclude {
                        continue;
                    }
                    let c = Candidate {
                        dist2: (self.metric)(i),
                        index: i,
                    };
                    if self.heap.len() < self.k {
                        self.heap.push(c);
                    } else if c < *self.heap.peek().unwrap() {
                        self.heap.pop();
                        self.heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = self.q[axis] - value;
                let (near, far) = if delta <= 0.0 { (left, right) } else { (right, left) };
                self.visit(near, offset);
                let mut far_offset = offset;
                far_offset[axis] = delta.abs();
                let bound = self.scale * far_offset.iter().map(|d| d * d).sum::<f64>().sqrt();
                if self.heap.len() < self.k || bound <= self.heap.peek().unwrap().dist2 {
                    self.visit(far, far_offset);
                }
            }
        }
    }
}

fn build(
    points: &[[f64; 3]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    if hi[axis] - lo[axis] == 0.0 {
        // all points coincide
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .total_cmp(&points[b][axis])
            .then(a.cmp(&b))
    });
    let value = points[slice[mid]][axis];
    nodes.push(Node::Leaf { start, end }); // placeholder
    // left holds coordinates <= value, right holds >= value
    let left = build(points, order, start, start + mid, nodes);
    let right = build(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}
