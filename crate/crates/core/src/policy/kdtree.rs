//! Exact k-nearest-neighbor search over row-major points.
//!
//! Results are ordered by `(squared distance, row index)`, so equal distances
//! resolve to the lowest row, identically to a brute-force scan.

use alloc::vec::Vec;

const LEAF_SIZE: usize = 16;
const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    /// Split dimension, or `LEAF`.
    dim: u32,
    split: f64,
    /// Children for inner nodes; `perm` range for leaves.
    a: u32,
    b: u32,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dims: usize,
    perm: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

fn before(a: &Neighbor, b: &Neighbor) -> bool {
    a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index)
}

struct Best {
    k: usize,
    items: Vec<Neighbor>,
}

impl Best {
    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.items.len() - 1].dist2
        }
    }

    fn offer(&mut self, n: Neighbor) {
        if self.items.len() == self.k && !before(&n, &self.items[self.k - 1]) {
            return;
        }
        let pos = self.items.iter().position(|x| before(&n, x)).unwrap_or(self.items.len());
        self.items.insert(pos, n);
        self.items.truncate(self.k);
    }
}

impl KdTree {
    pub fn build(points: &[f64], dims: usize) -> KdTree {
        assert!(dims > 0 && points.len() % dims == 0);
        let n = points.len() / dims;
        let mut tree = KdTree { dims, perm: (0..n as u32).collect(), nodes: Vec::new() };
        if n > 0 {
            tree.build_node(points, 0, n);
        }
        tree
    }

    fn build_node(&mut self, points: &[f64], start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { dim: LEAF, split: 0.0, a: start as u32, b: end as u32 });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let d = self.dims;
        let mut best_dim = 0;
        let mut best_spread = -1.0;
        for k in 0..d {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in &self.perm[start..end] {
                let v = points[i as usize * d + k];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_dim = k;
            }
        }
        if best_spread <= 0.0 {
            return id;
        }
        let mid = (start + end) / 2;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
            let vx = points[x as usize * d + best_dim];
            let vy = points[y as usize * d + best_dim];
            vx.total_cmp(&vy).then(x.cmp(&y))
        });
        let split = points[self.perm[mid] as usize * d + best_dim];
        let left = self.build_node(points, start, mid);
        let right = self.build_node(points, mid, end);
        debug_assert_eq!(left, id + 1);
        self.nodes[id as usize] = Node { dim: best_dim as u32, split, a: left, b: right };
        id
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// The `k` nearest rows to `query`, nearest first.
    pub fn nearest(&self, points: &[f64], query: &[f64], k: usize) -> Vec<Neighbor> {
        let mut best = Best { k: k.max(1), items: Vec::with_capacity(k + 1) };
        if !self.nodes.is_empty() {
            let mut off = alloc::vec![0.0; self.dims];
            self.search(points, query, 0, 0.0, &mut off, &mut best);
        }
        best.items
    }

    /// `rd` is a lower bound on the squared distance from `q` to any point
    /// under `node`; `off` holds its per-dimension terms.
    fn search(&self, points: &[f64], q: &[f64], node: u32, rd: f64, off: &mut [f64], best: &mut Best) {
        let n = &self.nodes[node as usize];
        if n.dim == LEAF {
            for &i in &self.perm[n.a as usize..n.b as usize] {
                let i = i as usize;
                let dist2 = squared_distance(q, &points[i * self.dims..(i + 1) * self.dims]);
                best.offer(Neighbor { index: i, dist2 });
            }
            return;
        }
        let d = n.dim as usize;
        let diff = q[d] - n.split;
        let (near, far) = if diff < 0.0 { (n.a, n.b) } else { (n.b, n.a) };
        self.search(points, q, near, rd, off, best);
        let old = off[d];
        let far_rd = rd - old * old + diff * diff;
        // Slack keeps rounding in the bound from pruning exact ties.
        if far_rd <= best.worst() * (1.0 + 1e-12) {
            off[d] = diff;
            self.search(points, q, far, far_rd, off, best);
            off[d] = old;
        }
    }
}

/// Reference scan used to cross-check the tree.
pub fn brute_force(points: &[f64], dims: usize, query: &[f64], k: usize) -> Vec<Neighbor> {
    let mut best = Best { k: k.max(1), items: Vec::new() };
    for i in 0..points.len() / dims {
        best.offer(Neighbor { index: i, dist2: squared_distance(query, &points[i * dims..(i + 1) * dims]) });
    }
    best.items
}
