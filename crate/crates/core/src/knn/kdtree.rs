//! Exact nearest-neighbour search: a k-d tree over flat arrays for low
//! dimension and a linear scan above [`TREE_MAX_DIM`].

use rand::Rng;

/// Highest dimension served by the tree.
pub const TREE_MAX_DIM: usize = 16;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// Range `start..end` into the permuted point arrays.
    start: u32,
    end: u32,
    /// `u32::MAX` for leaves.
    left: u32,
    right: u32,
    split_dim: u16,
    split: f64,
}

/// Point set in `dim` coordinates supporting exact k-nearest queries.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dim: usize,
    /// Row-major coordinates, reordered so that every node owns a contiguous range.
    points: Vec<f64>,
    /// Original row id of each stored point.
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

/// Bounded max-heap of the best candidates seen so far, kept as a sorted array.
#[derive(Debug, Clone)]
pub struct Candidates {
    cap: usize,
    items: Vec<(f64, u32)>,
}

impl Candidates {
    pub fn new(cap: usize) -> Self {
        Self { cap, items: Vec::with_capacity(cap + 1) }
    }

    fn reset(&mut self, cap: usize) {
        self.cap = cap;
        self.items.clear();
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.items.len() < self.cap {
            f64::INFINITY
        } else {
            self.items[self.items.len() - 1].0
        }
    }

    #[inline]
    fn offer(&mut self, d2: f64, id: u32) {
        if d2 >= self.worst() {
            return;
        }
        let pos = self.items.partition_point(|&(d, _)| d <= d2);
        if self.items.len() == self.cap {
            self.items.pop();
        }
        self.items.insert(pos, (d2, id));
    }
}

impl NeighborIndex {
    /// Builds an index over `n` rows stored row-major in `points`.
    pub fn build(points: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim), "bad point layout");
        let n = points.len() / dim;
        let mut ids: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::new();
        if dim <= TREE_MAX_DIM && n > LEAF_SIZE {
            build_node(&points, dim, &mut ids, 0, n, &mut nodes);
        } else {
            nodes.push(Node { start: 0, end: n as u32, left: u32::MAX, right: u32::MAX, split_dim: 0, split: 0.0 });
        }
        let mut permuted = Vec::with_capacity(points.len());
        for &id in &ids {
            let i = id as usize * dim;
            permuted.extend_from_slice(&points[i..i + dim]);
        }
        Self { dim, points: permuted, ids, nodes }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of original row `row`; linear in `n`, meant for tests.
    pub fn point_of(&self, row: usize) -> &[f64] {
        let pos = self.ids.iter().position(|&i| i as usize == row).expect("row in index");
        &self.points[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Original row ids in storage order; iterating queries in this order
    /// keeps successive queries close in memory.
    pub fn storage_order(&self) -> &[u32] {
        &self.ids
    }

    pub fn stored_point(&self, pos: usize) -> &[f64] {
        &self.points[pos * self.dim..(pos + 1) * self.dim]
    }

    #[inline]
    fn dist2(&self, pos: usize, q: &[f64]) -> f64 {
        let p = &self.points[pos * self.dim..(pos + 1) * self.dim];
        let mut s = 0.0;
        for (a, b) in p.iter().zip(q) {
            let t = a - b;
            s += t * t;
        }
        s
    }

    fn search(&self, node: usize, q: &[f64], best: &mut Candidates) {
        let nd = self.nodes[node];
        if nd.left == u32::MAX {
            for pos in nd.start as usize..nd.end as usize {
                let d2 = self.dist2(pos, q);
                best.offer(d2, self.ids[pos]);
            }
            return;
        }
        let diff = q[nd.split_dim as usize] - nd.split;
        let (near, far) = if diff <= 0.0 { (nd.left, nd.right) } else { (nd.right, nd.left) };
        self.search(near as usize, q, best);
        if diff * diff < best.worst() {
            self.search(far as usize, q, best);
        }
    }

    fn within(&self, node: usize, q: &[f64], r2: f64, out: &mut Vec<(f64, u32)>) {
        let nd = self.nodes[node];
        if nd.left == u32::MAX {
            for pos in nd.start as usize..nd.end as usize {
                let d2 = self.dist2(pos, q);
                if d2 <= r2 {
                    out.push((d2, self.ids[pos]));
                }
            }
            return;
        }
        let diff = q[nd.split_dim as usize] - nd.split;
        let (near, far) = if diff <= 0.0 { (nd.left, nd.right) } else { (nd.right, nd.left) };
        self.within(near as usize, q, r2, out);
        if diff * diff <= r2 {
            self.within(far as usize, q, r2, out);
        }
    }

    /// The `k` rows nearest to `q`, closest first, written to `out`.
    ///
    /// When several rows share the distance of the `k`-th neighbour, the ones
    /// kept are a uniform random choice among them drawn from `tie_rng`,
    /// which is only invoked in that case.
    pub fn knn_into<R, F>(&self, q: &[f64], k: usize, scratch: &mut Candidates, tie_rng: F, out: &mut Vec<u32>)
    where
        R: Rng,
        F: FnOnce() -> R,
    {
        debug_assert_eq!(q.len(), self.dim);
        out.clear();
        let n = self.len();
        let k = k.min(n);
        if k == 0 {
            return;
        }
        let want = if k < n { k + 1 } else { k };
        scratch.reset(want);
        self.search(0, q, scratch);
        let items = &scratch.items;
        if want == k || items[k - 1].0 < items[k].0 {
            out.extend(items[..k].iter().map(|&(_, id)| id));
            return;
        }
        // Boundary tie: keep every row strictly inside the k-th distance and
        // draw the rest uniformly from the rows exactly at it.
        let r2 = items[k - 1].0;
        let mut ball = Vec::new();
        self.within(0, q, r2, &mut ball);
        ball.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let inside = ball.partition_point(|&(d, _)| d < r2);
        out.extend(ball[..inside].iter().map(|&(_, id)| id));
        let mut boundary: Vec<u32> = ball[inside..].iter().map(|&(_, id)| id).collect();
        let need = k - inside;
        let mut rng = tie_rng();
        // partial Fisher-Yates
        for i in 0..need {
            let j = rng.random_range(i..boundary.len());
            boundary.swap(i, j);
        }
        out.extend_from_slice(&boundary[..need]);
    }
}

fn build_node(points: &[f64], dim: usize, ids: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let me = nodes.len();
    nodes.push(Node { start: start as u32, end: end as u32, left: u32::MAX, right: u32::MAX, split_dim: 0, split: 0.0 });
    if end - start <= LEAF_SIZE {
        return me as u32;
    }
    let slice = &mut ids[start..end];
    let mut best_dim = 0;
    let mut best_spread = -1.0;
    for c in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &id in slice.iter() {
            let v = points[id as usize * dim + c];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_dim = c;
        }
    }
    if best_spread <= 0.0 {
        // all points coincide
        return me as u32;
    }
    let mid = slice.len() / 2;
    let key = |id: &u32| points[*id as usize * dim + best_dim];
    slice.select_nth_unstable_by(mid, |a, b| key(a).total_cmp(&key(b)));
    let split = key(&slice[mid]);
    // Points equal to the split value may sit on either side, so the
    // search visits the far side whenever the plane is not farther than the
    // current worst candidate.
    let left = build_node(points, dim, ids, start, start + mid, nodes);
    let right = build_node(points, dim, ids, start + mid, end, nodes);
    let node = &mut nodes[me];
    node.left = left;
    node.right = right;
    node.split_dim = best_dim as u16;
    node.split = split;
    me as u32
}
