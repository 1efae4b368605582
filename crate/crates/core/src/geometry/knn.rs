use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Point;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    lo: Point,
    hi: Point,
    start: u32,
    end: u32,
    left: u32,
    right: u32,
    parent: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.left == NONE
    }

    fn dist2(&self, q: Point) -> f64 {
        let dx = (self.lo.x - q.x).max(0.0).max(q.x - self.hi.x);
        let dy = (self.lo.y - q.y).max(0.0).max(q.y - self.hi.y);
        let dz = (self.lo.z - q.z).max(0.0).max(q.z - self.hi.z);
        dx * dx + dy * dy + dz * dz
    }
}

/// k-d tree over a fixed set of points answering k-nearest-neighbor queries.
///
/// Results are ordered by squared Euclidean distance, ties broken by lower point index.
/// Index-based queries always report the query point first.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    leaf_of: Vec<u32>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    idx: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.d2.total_cmp(&o.d2).then(self.idx.cmp(&o.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Tracks which points of a [`NeighborIndex`] are still available to queries.
///
/// Deactivated points are skipped, and subtrees without live points are pruned.
#[derive(Debug, Clone)]
pub struct ActiveMask {
    alive: Vec<bool>,
    node_alive: Vec<u32>,
    remaining: usize,
}

impl ActiveMask {
    pub fn new(index: &NeighborIndex) -> Self {
        let node_alive = index.nodes.iter().map(|n| n.end - n.start).collect();
        ActiveMask { alive: vec![true; index.len()], node_alive, remaining: index.len() }
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.alive[i]
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn deactivate(&mut self, index: &NeighborIndex, i: usize) {
        if !std::mem::replace(&mut self.alive[i], false) {
            return;
        }
        self.remaining -= 1;
        let mut node = index.leaf_of[i];
        while node != NONE {
            self.node_alive[node as usize] -= 1;
            node = index.nodes[node as usize].parent;
        }
    }
}

impl NeighborIndex {
    pub fn build(points: &[Point]) -> Self {
        assert!(points.len() < NONE as usize, "too many points for the index");
        let mut index = NeighborIndex {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            leaf_of: vec![NONE; points.len()],
        };
        if !points.is_empty() {
            index.build_node(0, points.len(), NONE);
        }
        index
    }

    fn build_node(&mut self, start: usize, end: usize, parent: u32) -> u32 {
        let slice = &self.order[start..end];
        let first = self.points[slice[0] as usize];
        let (lo, hi) = slice.iter().fold((first, first), |(lo, hi), &i| {
            let p = self.points[i as usize];
            (
                Point::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Point::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        });
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo,
            hi,
            start: start as u32,
            end: end as u32,
            left: NONE,
            right: NONE,
            parent,
        });
        if end - start <= LEAF_SIZE {
            for &i in &self.order[start..end] {
                self.leaf_of[i as usize] = id;
            }
            return id;
        }
        let span = hi - lo;
        let axis = if span.x >= span.y && span.x >= span.z {
            0
        } else if span.y >= span.z {
            1
        } else {
            2
        };
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize]
                .axis(axis)
                .total_cmp(&points[b as usize].axis(axis))
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, mid, id);
        let right = self.build_node(mid, end, id);
        let node = &mut self.nodes[id as usize];
        node.left = left;
        node.right = right;
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// The `min(k, P)` nearest points to point `seed`, starting with `seed` itself.
    pub fn knn(&self, seed: usize, k: usize) -> Result<Vec<usize>> {
        self.check(seed)?;
        Ok(self.knn_from(seed, k, None))
    }

    /// Like [`knn`](Self::knn) but only over points still active in `mask`.
    /// The seed is always reported first, even if it was deactivated.
    pub fn knn_active(&self, seed: usize, k: usize, mask: &ActiveMask) -> Result<Vec<usize>> {
        self.check(seed)?;
        Ok(self.knn_from(seed, k, Some(mask)))
    }

    /// The `min(k, P)` nearest indexed points to an arbitrary location.
    pub fn knn_point(&self, q: Point, k: usize) -> Vec<usize> {
        self.search(q, k, None, None)
    }

    fn check(&self, seed: usize) -> Result<()> {
        if seed >= self.len() {
            return Err(Error::InvalidIndex { index: seed, len: self.len() });
        }
        Ok(())
    }

    fn knn_from(&self, seed: usize, k: usize, mask: Option<&ActiveMask>) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(k.min(self.len()));
        out.push(seed);
        out.extend(self.search(self.points[seed], k - 1, mask, Some(seed)));
        out
    }

    fn search(&self, q: Point, k: usize, mask: Option<&ActiveMask>, skip: Option<usize>) -> Vec<usize> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.visit(0, q, k, mask, skip, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        found.into_iter().map(|c| c.idx as usize).collect()
    }

    fn visit(
        &self,
        node_id: u32,
        q: Point,
        k: usize,
        mask: Option<&ActiveMask>,
        skip: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        let node = &self.nodes[node_id as usize];
        if let Some(m) = mask {
            if m.node_alive[node_id as usize] == 0 {
                return;
            }
        }
        if heap.len() == k && node.dist2(q) > heap.peek().map_or(f64::INFINITY, |c| c.d2) {
            return;
        }
        if node.is_leaf() {
            for &i in &self.order[node.start as usize..node.end as usize] {
                let iu = i as usize;
                if skip == Some(iu) || mask.is_some_and(|m| !m.alive[iu]) {
                    continue;
                }
                let cand = Candidate { d2: self.points[iu].dist2(q), idx: i };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().expect("heap is full") {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        let (l, r) = (node.left, node.right);
        let dl = self.nodes[l as usize].dist2(q);
        let dr = self.nodes[r as usize].dist2(q);
        let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
        self.visit(first, q, k, mask, skip, heap);
        self.visit(second, q, k, mask, skip, heap);
    }
}
