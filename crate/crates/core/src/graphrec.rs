//! Weighted pixel graph over the structured score map, shortest paths, the
//! 2-sweep diameter heuristic and progressive path reconstruction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{BinaryMap, Pixel, Raster};

const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// How the structured score map becomes a graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    /// Pixels with a score strictly above this become vertices.
    pub threshold: f64,
    /// Use `1 - mean(Π)/max(Π)` in place of `mean(Π)` as the per-edge factor,
    /// so that high scores are cheap to traverse.
    pub invert_weights: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            threshold: 0.0,
            invert_weights: false,
        }
    }
}

/// Undirected weighted graph whose vertices are pixels.
///
/// Vertex ids follow row-major pixel order. Adjacency is stored in
/// compressed-row form with each undirected edge present in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGraph {
    width: usize,
    height: usize,
    pixels: Vec<Pixel>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl PixelGraph {
    fn from_adjacency(
        width: usize,
        height: usize,
        pixels: Vec<Pixel>,
        mut adjacency: Vec<Vec<(usize, f64)>>,
    ) -> Self {
        let mut offsets = Vec::with_capacity(pixels.len() + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for list in &mut adjacency {
            list.sort_by_key(|&(t, _)| t);
            for &(t, w) in list.iter() {
                targets.push(t);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        Self {
            width,
            height,
            pixels,
            offsets,
            targets,
            weights,
        }
    }

    /// Builds a graph from explicit vertices and undirected weighted edges.
    /// Edges need not join 8-neighbors.
    pub fn from_edges(
        width: usize,
        height: usize,
        pixels: &[Pixel],
        edges: &[(Pixel, Pixel, f64)],
    ) -> Result<Self> {
        let mut sorted = pixels.to_vec();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate graph vertex".into()));
        }
        if let Some(p) = sorted.iter().find(|p| p.row >= height || p.col >= width) {
            return Err(Error::InvalidInput(format!(
                "vertex ({}, {}) outside {width}x{height}",
                p.row, p.col
            )));
        }
        let id = |p: &Pixel| {
            sorted
                .binary_search(p)
                .map_err(|_| Error::InvalidInput(format!("edge endpoint ({}, {}) is not a vertex", p.row, p.col)))
        };
        let mut adjacency = vec![Vec::new(); sorted.len()];
        for (a, b, w) in edges {
            let (ia, ib) = (id(a)?, id(b)?);
            if ia == ib {
                return Err(Error::InvalidInput("self-loop edge".into()));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidInput(format!("edge weight {w} must be finite and non-negative")));
            }
            if adjacency[ia].iter().any(|&(t, _)| t == ib) {
                return Err(Error::InvalidInput("duplicate edge".into()));
            }
            adjacency[ia].push((ib, *w));
            adjacency[ib].push((ia, *w));
        }
        Ok(Self::from_adjacency(width, height, sorted, adjacency))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vertex_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn pixel(&self, id: usize) -> Pixel {
        self.pixels[id]
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.pixels
    }

    pub fn vertex_id(&self, p: Pixel) -> Option<usize> {
        self.pixels.binary_search(&p).ok()
    }

    /// `(neighbor, weight)` pairs in increasing neighbor id.
    pub fn neighbors(&self, id: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[id]..self.offsets[id + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.neighbors(a).find(|&(t, _)| t == b).map(|(_, w)| w)
    }

    /// Every undirected edge once, as `(a, b, weight)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        (0..self.vertex_count())
            .flat_map(|a| self.neighbors(a).filter(move |&(b, _)| a < b).map(move |(b, w)| (a, b, w)))
            .collect()
    }

    fn set_weight(&mut self, a: usize, b: usize, w: f64) {
        for (from, to) in [(a, b), (b, a)] {
            let range = self.offsets[from]..self.offsets[from + 1];
            if let Some(k) = self.targets[range.clone()].iter().position(|&t| t == to) {
                self.weights[range.start + k] = w;
            }
        }
    }

    /// Connected components as sorted id lists, ordered by their lowest id.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.vertex_count();
        let mut label = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let c = out.len();
            let mut members = vec![start];
            label[start] = c;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for (v, _) in self.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = c;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// Graph induced by the pixels of `pi` above the threshold, 8-connected,
/// with `w(u,v) = |u - v| * (Π(u) + Π(v)) / 2`.
pub fn build_graph(pi: &Raster, options: &GraphOptions) -> Result<PixelGraph> {
    if !(options.threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "graph threshold must be non-negative, got {}",
            options.threshold
        )));
    }
    let (w, h) = (pi.width(), pi.height());
    let mut id_of = vec![usize::MAX; w * h];
    let mut pixels = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if pi.get(r, c) > options.threshold {
                id_of[r * w + c] = pixels.len();
                pixels.push(Pixel::new(r, c));
            }
        }
    }
    let max = pixels.iter().map(|p| pi.get(p.row, p.col)).fold(0.0, f64::max);
    let factor = |a: f64, b: f64| {
        let m = (a + b) / 2.0;
        if options.invert_weights {
            (1.0 - m / max).max(0.0)
        } else {
            m
        }
    };
    let adjacency = pixels
        .iter()
        .map(|p| {
            let here = pi.get(p.row, p.col);
            NEIGHBOR_OFFSETS
                .iter()
                .filter_map(|&(dr, dc)| {
                    let r = p.row as isize + dr;
                    let c = p.col as isize + dc;
                    if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                        return None;
                    }
                    let t = id_of[r as usize * w + c as usize];
                    if t == usize::MAX {
                        return None;
                    }
                    let len = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                    Some((t, len * factor(here, pi.get(r as usize, c as usize))))
                })
                .collect()
        })
        .collect();
    Ok(PixelGraph::from_adjacency(w, h, pixels, adjacency))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    id: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed so the max-heap pops the smallest distance, then smallest id
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances and predecessors from one source. Unreachable vertices have
/// infinite distance and no predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pub pred: Vec<Option<usize>>,
}

impl ShortestPaths {
    /// Vertex ids from the source to `target`, or `None` if unreachable.
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut path = vec![target];
        let mut cur = target;
        while let Some(p) = self.pred[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

/// Reusable buffers; only touched entries are reset between runs.
struct Workspace {
    dist: Vec<f64>,
    pred: Vec<Option<usize>>,
    done: Vec<bool>,
    touched: Vec<usize>,
    heap: BinaryHeap<HeapEntry>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            dist: vec![f64::INFINITY; n],
            pred: vec![None; n],
            done: vec![false; n],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.dist[v] = f64::INFINITY;
            self.pred[v] = None;
            self.done[v] = false;
        }
        self.touched.clear();
        self.heap.clear();
    }

    fn run(&mut self, g: &PixelGraph, source: usize) {
        self.reset();
        self.dist[source] = 0.0;
        self.touched.push(source);
        self.heap.push(HeapEntry { dist: 0.0, id: source });
        while let Some(HeapEntry { dist, id: u }) = self.heap.pop() {
            if self.done[u] || dist > self.dist[u] {
                continue;
            }
            self.done[u] = true;
            for (v, w) in g.neighbors(u) {
                if self.done[v] {
                    continue;
                }
                let nd = dist + w;
                if nd < self.dist[v] {
                    if self.dist[v].is_infinite() {
                        self.touched.push(v);
                    }
                    self.dist[v] = nd;
                    self.pred[v] = Some(u);
                    self.heap.push(HeapEntry { dist: nd, id: v });
                } else if nd == self.dist[v] && self.pred[v].is_some_and(|p| u < p) {
                    self.pred[v] = Some(u);
                }
            }
        }
    }

    /// Reached vertex with the largest distance; ties go to the smaller id.
    fn farthest(&self) -> usize {
        let mut best = self.touched[0];
        for &v in &self.touched {
            if self.dist[v] > self.dist[best] || (self.dist[v] == self.dist[best] && v < best) {
                best = v;
            }
        }
        best
    }

    fn path_to(&self, target: usize) -> Vec<usize> {
        let mut path = vec![target];
        let mut cur = target;
        while let Some(p) = self.pred[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}

/// Single-source shortest paths with a binary heap. Among equal-length
/// routes the predecessor with the smaller vertex id wins.
pub fn dijkstra(g: &PixelGraph, source: usize) -> Result<ShortestPaths> {
    if source >= g.vertex_count() {
        return Err(Error::MissingVertex(source));
    }
    let mut ws = Workspace::new(g.vertex_count());
    ws.run(g, source);
    Ok(ShortestPaths {
        source,
        dist: ws.dist,
        pred: ws.pred,
    })
}

/// A shortest path between two vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub vertex_ids: Vec<usize>,
    pub vertices: Vec<Pixel>,
    pub weighted_length: f64,
    /// Vertices not covered by any earlier extracted path.
    pub new_vertex_count: usize,
}

fn sweep_from(g: &PixelGraph, ws: &mut Workspace, start: usize) -> (Vec<usize>, f64) {
    ws.run(g, start);
    let u = ws.farthest();
    ws.run(g, u);
    let v = ws.farthest();
    (ws.path_to(v), ws.dist[v])
}

fn make_path(g: &PixelGraph, ids: Vec<usize>, length: f64, extracted: &[bool]) -> GeodesicPath {
    GeodesicPath {
        vertices: ids.iter().map(|&i| g.pixel(i)).collect(),
        new_vertex_count: ids.iter().filter(|&&i| !extracted[i]).count(),
        vertex_ids: ids,
        weighted_length: length,
    }
}

/// 2-sweep from an explicit start vertex: the farthest vertex `u` from
/// `start`, then the shortest path from `u` to the vertex farthest from `u`.
pub fn two_sweep_from(g: &PixelGraph, start: usize) -> Result<GeodesicPath> {
    if start >= g.vertex_count() {
        return Err(Error::MissingVertex(start));
    }
    let mut ws = Workspace::new(g.vertex_count());
    let (ids, len) = sweep_from(g, &mut ws, start);
    Ok(make_path(g, ids, len, &vec![false; g.vertex_count()]))
}

/// 2-sweep within the largest component. Without a seed the sweep starts
/// at the component's lowest id; with one, at a seeded random member.
pub fn two_sweep(g: &PixelGraph, seed: Option<u64>) -> Result<GeodesicPath> {
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let components = g.components();
    let largest = components
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        .map(|(_, c)| c)
        .expect("non-empty graph has a component");
    let start = match seed {
        None => largest[0],
        Some(s) => largest[ChaCha8Rng::seed_from_u64(s).gen_range(0..largest.len())],
    };
    two_sweep_from(g, start)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    /// Minimum number of new vertices for a path to be kept.
    pub min_length: usize,
    pub max_iter: usize,
    /// Start-vertex seed; `None` starts every sweep at the lowest id of
    /// its component.
    pub seed: Option<u64>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            min_length: 40,
            max_iter: usize::MAX,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedPath {
    /// One-based extraction round.
    pub iteration: usize,
    pub path: GeodesicPath,
    /// Length of the same vertex sequence under the original edge weights.
    pub initial_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub width: usize,
    pub height: usize,
    pub paths: Vec<ReconstructedPath>,
}

impl Reconstruction {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            paths: Vec::new(),
        }
    }

    /// Union of all path vertices.
    pub fn vertex_set(&self) -> BinaryMap {
        BinaryMap::from_pixels(
            self.width,
            self.height,
            self.paths.iter().flat_map(|p| p.path.vertices.iter().copied()),
        )
    }
}

/// Progressive reconstruction.
///
/// Each round runs the 2-sweep in every component that still holds at least
/// `min_length` unextracted vertices, keeps the longest resulting path among
/// those adding at least `min_length` new vertices, and zeroes the weights
/// of its edges. Stops when no component yields such a path.
pub fn reconstruct(g: &PixelGraph, options: &ReconstructOptions) -> Result<Reconstruction> {
    if options.min_length == 0 {
        return Err(Error::InvalidParameter("minimum path length must be at least 1".into()));
    }
    let mut out = Reconstruction::empty(g.width(), g.height());
    if g.is_empty() {
        return Ok(out);
    }
    let original = g;
    let mut g = g.clone();
    let n = g.vertex_count();
    let components = g.components();
    let mut extracted = vec![false; n];
    let mut rng = options.seed.map(ChaCha8Rng::seed_from_u64);

    for iteration in 1..=options.max_iter {
        let live: Vec<(usize, usize)> = components
            .iter()
            .filter(|c| c.iter().filter(|&&v| !extracted[v]).count() >= options.min_length)
            .map(|c| {
                let start = match rng.as_mut() {
                    Some(r) => c[r.gen_range(0..c.len())],
                    None => c[0],
                };
                (start, c.len())
            })
            .collect();
        if live.is_empty() {
            break;
        }
        let graph = &g;
        let candidates: Vec<(Vec<usize>, f64)> = live
            .par_iter()
            .map_init(|| Workspace::new(n), |ws, &(start, _)| sweep_from(graph, ws, start))
            .collect();
        let mut best: Option<GeodesicPath> = None;
        for (ids, len) in candidates {
            let path = make_path(&g, ids, len, &extracted);
            if path.new_vertex_count < options.min_length {
                continue;
            }
            if best.as_ref().map_or(true, |b| path.weighted_length > b.weighted_length) {
                best = Some(path);
            }
        }
        let Some(path) = best else { break };
        let mut initial_length = 0.0;
        for pair in path.vertex_ids.windows(2) {
            initial_length += original.weight(pair[0], pair[1]).unwrap_or(0.0);
            g.set_weight(pair[0], pair[1], 0.0);
        }
        for &v in &path.vertex_ids {
            extracted[v] = true;
        }
        log::debug!(
            "iteration {iteration}: {} vertices ({} new), length {:.3}",
            path.vertex_ids.len(),
            path.new_vertex_count,
            path.weighted_length
        );
        out.paths.push(ReconstructedPath {
            iteration,
            path,
            initial_length,
        });
    }
    Ok(out)
}
