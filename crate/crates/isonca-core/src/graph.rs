//! Trained rules on non-regular grids.
//!
//! Points come from Poisson-disk sampling, cells from the Voronoi diagram
//! clipped to the domain rectangle, and the per-channel stencil is replaced
//! by a weighted graph Laplacian whose neighbor weights are proportional to
//! shared Voronoi edge lengths.
//!
//! Each Voronoi cell is built directly by clipping the domain rectangle
//! against the perpendicular-bisector half-plane of every nearby point,
//! processed in distance order with a security-radius cutoff. This is robust
//! on cocircular inputs (a degenerate contact shows up as a near-zero-length
//! edge and is dropped from both sides), and boundary cells come out clipped
//! to the rectangle with no special casing.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::grid::{StructuredSeed, ALIVE_THRESHOLD, ALPHA_CHANNEL};
use crate::real::Real;
use crate::rng::{StepRng, Stream};
use crate::rule::{forward_rows, RuleParams};

/// Shared-edge threshold: shorter contacts are treated as degenerate.
pub const MIN_EDGE_LEN: f64 = 1e-9;

/// Stencil-equivalent gain for the graph Laplacian. The square-grid stencil
/// equals 12 times (weighted neighbor average minus self), so transferred
/// rules expect this scale; 1.0 gives the unscaled textbook operator.
pub const LAPLACIAN_GAIN: f64 = 12.0;

/// Errors from graph construction and seeding.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphError {
    DegenerateDomain,
    TooFewPoints { got: usize },
    CollinearPoints,
    DuplicatePoints { a: usize, b: usize },
    SeedOutOfDomain { x: f64, y: f64 },
    SeedCollision { node: usize },
    ChannelMismatch { expected: usize, got: usize },
}

impl core::fmt::Display for GraphError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GraphError::DegenerateDomain => write!(f, "domain must have positive area and radius"),
            GraphError::TooFewPoints { got } => write!(f, "need >= 3 points, got {got}"),
            GraphError::CollinearPoints => write!(f, "points are collinear"),
            GraphError::DuplicatePoints { a, b } => write!(f, "points {a} and {b} coincide"),
            GraphError::SeedOutOfDomain { x, y } => {
                write!(f, "seed position ({x}, {y}) is outside the domain")
            }
            GraphError::SeedCollision { node } => {
                write!(f, "two seed points map to node {node}")
            }
            GraphError::ChannelMismatch { expected, got } => {
                write!(f, "channel mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl core::error::Error for GraphError {}

/// Points in a rectangular domain with a guaranteed minimum separation.
#[derive(Clone, Debug)]
pub struct PointSet {
    pub points: Vec<[f64; 2]>,
    pub width: f64,
    pub height: f64,
    /// Minimum pairwise distance the sampler guaranteed.
    pub r_min: f64,
}

/// Bridson dart throwing over a background acceleration grid. Deterministic
/// for a given stream; every output pair is at least `r_pd` apart.
pub fn poisson_disk_sample(
    width: f64,
    height: f64,
    r_pd: f64,
    k_attempts: usize,
    stream: &mut Stream,
) -> Result<PointSet, GraphError> {
    if !(width > 0.0) || !(height > 0.0) || !(r_pd > 0.0) {
        return Err(GraphError::DegenerateDomain);
    }
    let cell = r_pd / core::f64::consts::SQRT_2;
    let gw = Float::ceil(width / cell) as usize;
    let gh = Float::ceil(height / cell) as usize;
    let mut occupancy: Vec<i64> = vec![-1; gw * gh];
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut active: Vec<usize> = Vec::new();

    let cell_of = |p: [f64; 2]| {
        let cx = ((p[0] / cell) as usize).min(gw - 1);
        let cy = ((p[1] / cell) as usize).min(gh - 1);
        (cx, cy)
    };
    let fits = |p: [f64; 2], points: &[[f64; 2]], occupancy: &[i64]| {
        let (cx, cy) = cell_of(p);
        let x0 = cx.saturating_sub(2);
        let y0 = cy.saturating_sub(2);
        for gy in y0..=(cy + 2).min(gh - 1) {
            for gx in x0..=(cx + 2).min(gw - 1) {
                let slot = occupancy[gy * gw + gx];
                if slot >= 0 {
                    let q = points[slot as usize];
                    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                    if dx * dx + dy * dy < r_pd * r_pd {
                        return false;
                    }
                }
            }
        }
        true
    };

    let first = [stream.next_f64() * width, stream.next_f64() * height];
    let (fx, fy) = cell_of(first);
    occupancy[fy * gw + fx] = 0;
    active.push(0);
    points.push(first);

    while !active.is_empty() {
        let pick = stream.next_below(active.len());
        let base = points[active[pick]];
        let mut placed = false;
        for _ in 0..k_attempts {
            let radius = r_pd * (1.0 + stream.next_f64());
            let angle = core::f64::consts::TAU * stream.next_f64();
            let cand = [
                base[0] + radius * Float::cos(angle),
                base[1] + radius * Float::sin(angle),
            ];
            if cand[0] < 0.0 || cand[1] < 0.0 || cand[0] >= width || cand[1] >= height {
                continue;
            }
            if fits(cand, &points, &occupancy) {
                let (cx, cy) = cell_of(cand);
                occupancy[cy * gw + cx] = points.len() as i64;
                active.push(points.len());
                points.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            active.swap_remove(pick);
        }
    }
    Ok(PointSet { points, width, height, r_min: r_pd })
}

/// One neighbor of a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// Length of the shared Voronoi edge.
    pub edge_len: f64,
    /// `edge_len / sum of this node's edge lengths`.
    pub weight: f64,
}

/// Voronoi-cell graph with per-node state vectors.
#[derive(Clone, Debug)]
pub struct IrregularGrid<T> {
    points: Vec<[f64; 2]>,
    pub width: f64,
    pub height: f64,
    adjacency: Vec<Vec<Neighbor>>,
    /// Clipped Voronoi polygon per node.
    cells: Vec<Vec<[f64; 2]>>,
    /// Nodes whose cell retains a piece of the domain rectangle boundary.
    boundary: Vec<bool>,
    states: Vec<T>,
    channels: usize,
    /// Gain applied to the weighted-average-minus-self operator.
    pub laplacian_gain: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum EdgeLabel {
    Boundary,
    Neighbor(usize),
}

/// Clip a labeled convex polygon by the half-plane `n . x <= d`, labeling the
/// newly created edge with `label`. Edge `k` runs from vertex `k` to vertex
/// `k+1` and carries `labels[k]`.
fn clip_halfplane(
    verts: &mut Vec<[f64; 2]>,
    labels: &mut Vec<EdgeLabel>,
    n: [f64; 2],
    d: f64,
    label: EdgeLabel,
) {
    let len = verts.len();
    if len == 0 {
        return;
    }
    let side: Vec<f64> = verts.iter().map(|v| n[0] * v[0] + n[1] * v[1] - d).collect();
    if side.iter().all(|s| *s <= 0.0) {
        return;
    }
    let mut out_v: Vec<[f64; 2]> = Vec::with_capacity(len + 2);
    let mut out_l: Vec<EdgeLabel> = Vec::with_capacity(len + 2);
    for k in 0..len {
        let k2 = (k + 1) % len;
        let (a, b) = (verts[k], verts[k2]);
        let (sa, sb) = (side[k], side[k2]);
        let a_in = sa <= 0.0;
        let b_in = sb <= 0.0;
        let cross = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        if a_in {
            out_v.push(a);
            out_l.push(labels[k]);
            if !b_in {
                let t = sa / (sa - sb);
                out_v.push(cross(t));
                out_l.push(label); // new edge runs along the clip line
            }
        } else if b_in {
            let t = sa / (sa - sb);
            out_v.push(cross(t));
            out_l.push(labels[k]); // remainder of the original edge
        }
    }
    *verts = out_v;
    *labels = out_l;
}

/// Build the Voronoi adjacency of a point set (states zeroed).
///
/// Every cell is the domain rectangle clipped by the bisector half-planes of
/// other points in increasing distance order, stopping once the next
/// candidate is farther than twice the cell's current vertex radius.
/// Directed edge lengths from both endpoints are reconciled: a pair is kept
/// only when both sides see a contact of at least [`MIN_EDGE_LEN`].
pub fn build_voronoi_adjacency<T: Real>(
    set: &PointSet,
    channels: usize,
) -> Result<IrregularGrid<T>, GraphError> {
    let pts = &set.points;
    let n = pts.len();
    if n < 3 {
        return Err(GraphError::TooFewPoints { got: n });
    }
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
            if dx * dx + dy * dy < 1e-24 {
                return Err(GraphError::DuplicatePoints { a: i, b: j });
            }
        }
    }
    {
        let p0 = pts[0];
        let far = pts
            .iter()
            .max_by(|a, b| {
                let da = (a[0] - p0[0]).powi(2) + (a[1] - p0[1]).powi(2);
                let db = (b[0] - p0[0]).powi(2) + (b[1] - p0[1]).powi(2);
                da.partial_cmp(&db).unwrap()
            })
            .copied()
            .unwrap();
        let (ex, ey) = (far[0] - p0[0], far[1] - p0[1]);
        let scale = (ex * ex + ey * ey).sqrt().max(1e-12);
        let collinear = pts
            .iter()
            .all(|p| (ex * (p[1] - p0[1]) - ey * (p[0] - p0[0])).abs() / scale < 1e-9);
        if collinear {
            return Err(GraphError::CollinearPoints);
        }
    }

    let mut directed: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut cells: Vec<Vec<[f64; 2]>> = Vec::with_capacity(n);
    let mut boundary = vec![false; n];

    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let p = pts[i];
        let mut verts = vec![
            [0.0, 0.0],
            [set.width, 0.0],
            [set.width, set.height],
            [0.0, set.height],
        ];
        let mut labels = vec![EdgeLabel::Boundary; 4];

        order.clear();
        order.extend((0..n).filter(|j| *j != i));
        let d2 = |j: usize| (pts[j][0] - p[0]).powi(2) + (pts[j][1] - p[1]).powi(2);
        order.sort_by(|a, b| d2(*a).partial_cmp(&d2(*b)).unwrap().then(a.cmp(b)));

        for &j in order.iter() {
            let dist2 = d2(j);
            // security radius: a farther point's bisector cannot cut the cell
            let max_r2 = verts
                .iter()
                .map(|v| (v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2))
                .fold(0.0, f64::max);
            if dist2 > 4.0 * max_r2 {
                break;
            }
            let q = pts[j];
            let nvec = [q[0] - p[0], q[1] - p[1]];
            let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
            let d = nvec[0] * mid[0] + nvec[1] * mid[1];
            clip_halfplane(&mut verts, &mut labels, nvec, d, EdgeLabel::Neighbor(j));
        }

        for (k, label) in labels.iter().enumerate() {
            let a = verts[k];
            let b = verts[(k + 1) % verts.len()];
            let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            match label {
                EdgeLabel::Boundary => {
                    if len > MIN_EDGE_LEN {
                        boundary[i] = true;
                    }
                }
                EdgeLabel::Neighbor(j) => {
                    if len >= MIN_EDGE_LEN {
                        match directed[i].iter_mut().find(|(jj, _)| jj == j) {
                            Some((_, acc)) => *acc += len,
                            None => directed[i].push((*j, len)),
                        }
                    }
                }
            }
        }
        cells.push(verts);
    }

    // keep an edge only when both directions observed it; average the lengths
    let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, len_ij) in &directed[i] {
            if j < i {
                continue;
            }
            if let Some(&(_, len_ji)) = directed[j].iter().find(|(k, _)| *k == i) {
                let len = 0.5 * (len_ij + len_ji);
                adjacency[i].push(Neighbor { index: j, edge_len: len, weight: 0.0 });
                adjacency[j].push(Neighbor { index: i, edge_len: len, weight: 0.0 });
            }
        }
    }
    for nbrs in &mut adjacency {
        nbrs.sort_by_key(|nb| nb.index);
        let total: f64 = nbrs.iter().map(|nb| nb.edge_len).sum();
        if total > 0.0 {
            for nb in nbrs.iter_mut() {
                nb.weight = nb.edge_len / total;
            }
        }
    }

    Ok(IrregularGrid {
        points: pts.clone(),
        width: set.width,
        height: set.height,
        adjacency,
        cells,
        boundary,
        states: vec![T::zero(); n * channels],
        channels,
        laplacian_gain: LAPLACIAN_GAIN,
    })
}

impl<T: Real> IrregularGrid<T> {
    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    #[inline]
    pub fn cell_polygon(&self, i: usize) -> &[[f64; 2]] {
        &self.cells[i]
    }

    /// Whether node `i`'s cell touches the domain rectangle.
    #[inline]
    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    #[inline]
    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub fn state_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.channels;
        &mut self.states[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn states(&self) -> &[T] {
        &self.states
    }

    #[inline]
    pub fn states_mut(&mut self) -> &mut [T] {
        &mut self.states
    }

    pub fn zero_states(&mut self) {
        self.states.fill(T::zero());
    }
}

/// Weighted graph Laplacian: `gain * (sum_j w_ij s_j - s_i)` per channel;
/// isolated nodes map to zero.
pub fn graph_laplacian<T: Real>(grid: &IrregularGrid<T>) -> Vec<T> {
    let c = grid.channels;
    let gain = T::of(grid.laplacian_gain);
    let mut out = vec![T::zero(); grid.states.len()];
    for i in 0..grid.len() {
        let nbrs = grid.neighbors(i);
        if nbrs.is_empty() {
            continue;
        }
        for nb in nbrs {
            let w = T::of(nb.weight);
            let src = nb.index * c;
            for ch in 0..c {
                out[i * c + ch] += w * grid.states[src + ch];
            }
        }
        for ch in 0..c {
            out[i * c + ch] = gain * (out[i * c + ch] - grid.states[i * c + ch]);
        }
    }
    out
}

/// One CA step on the graph: perception is `concat(s_i, laplacian_i)`, a node
/// is alive when its own or any adjacent alpha exceeds the threshold, and
/// empty nodes are zeroed exactly as on the square grid.
pub fn graph_nca_step<T: Real>(
    grid: &IrregularGrid<T>,
    params: &RuleParams<T>,
    rng: StepRng,
) -> Result<IrregularGrid<T>, GraphError> {
    let c = grid.channels;
    if params.channels() != c {
        return Err(GraphError::ChannelMismatch { expected: c, got: params.channels() });
    }
    let n = grid.len();
    let thr = T::of(ALIVE_THRESHOLD);
    let alive = |states: &[T], i: usize| -> bool {
        states[i * c + ALPHA_CHANNEL] > thr
            || grid.neighbors(i).iter().any(|nb| states[nb.index * c + ALPHA_CHANNEL] > thr)
    };
    let pre: Vec<bool> = (0..n).map(|i| alive(&grid.states, i)).collect();
    let lap = graph_laplacian(grid);

    let alive_nodes: Vec<usize> = (0..n).filter(|i| pre[*i]).collect();
    let mut packed = vec![T::zero(); alive_nodes.len() * 2 * c];
    for (row, &i) in alive_nodes.iter().enumerate() {
        packed[row * 2 * c..row * 2 * c + c].copy_from_slice(&grid.states[i * c..(i + 1) * c]);
        packed[row * 2 * c + c..(row + 1) * 2 * c].copy_from_slice(&lap[i * c..(i + 1) * c]);
    }
    let (delta, _) = forward_rows(&packed, alive_nodes.len(), params, false);

    let mut next = grid.clone();
    for (row, &i) in alive_nodes.iter().enumerate() {
        if rng.bernoulli(i, 0, params.p_upd) {
            let dst = next.state_mut(i);
            for (d, v) in dst.iter_mut().zip(&delta[row * c..(row + 1) * c]) {
                *d += *v;
            }
        }
    }
    let post: Vec<bool> = (0..n).map(|i| alive(&next.states, i)).collect();
    for i in 0..n {
        if !(pre[i] && post[i]) {
            next.state_mut(i).fill(T::zero());
        }
    }
    Ok(next)
}

/// Seed placement on the graph.
pub enum GraphSeed<'a, T> {
    /// Alpha 1 at the node nearest the domain center.
    Single,
    /// Each structured point written to the node nearest
    /// `center + (dx, dy)` in domain units.
    Structured(&'a StructuredSeed<T>),
}

/// Write a seed into zeroed node states. Ties in the nearest-node search
/// resolve to the lowest index.
pub fn seed_irregular<T: Real>(
    grid: &mut IrregularGrid<T>,
    seed: &GraphSeed<'_, T>,
) -> Result<(), GraphError> {
    grid.zero_states();
    let (cx, cy) = (grid.width / 2.0, grid.height / 2.0);
    let nearest = |points: &[[f64; 2]], x: f64, y: f64| -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d = (p[0] - x).powi(2) + (p[1] - y).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    };
    match seed {
        GraphSeed::Single => {
            let node = nearest(&grid.points, cx, cy);
            grid.state_mut(node)[ALPHA_CHANNEL] = T::one();
        }
        GraphSeed::Structured(s) => {
            let mut used: Vec<usize> = Vec::with_capacity(s.points.len());
            for p in &s.points {
                let (x, y) = (cx + p.dx as f64, cy + p.dy as f64);
                if x < 0.0 || y < 0.0 || x >= grid.width || y >= grid.height {
                    return Err(GraphError::SeedOutOfDomain { x, y });
                }
                let node = nearest(&grid.points, x, y);
                if used.contains(&node) {
                    return Err(GraphError::SeedCollision { node });
                }
                used.push(node);
                let channels = grid.channels;
                let take = p.encoding.len().min(channels);
                grid.state_mut(node)[..take].copy_from_slice(&p.encoding[..take]);
            }
        }
    }
    Ok(())
}
