//! Independent reference implementations used as test oracles. Nothing here
//! calls into the code under test except for plain data types.

#![allow(dead_code)]

use linenet_core::graphrec::PixelGraph;
use linenet_core::imaging::{feature_map, normalize_image, FilterBank, Polarity};
use linenet_core::{Pixel, Raster};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Undirected weighted edge list over vertex ids `0..n`.
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl EdgeList {
    /// Edge list with vertex ids given by the rank of each pixel in
    /// row-major order, matching the numbering used by `PixelGraph`.
    pub fn from_pixels(pixels: &[Pixel], edges: &[(Pixel, Pixel, f64)]) -> Self {
        let mut sorted = pixels.to_vec();
        sorted.sort_by_key(|p| (p.row, p.col));
        let id = |p: &Pixel| sorted.iter().position(|q| q == p).expect("edge endpoint is a vertex");
        Self {
            n: sorted.len(),
            edges: edges.iter().map(|(a, b, w)| (id(a), id(b), *w)).collect(),
        }
    }
}

pub fn bellman_ford(list: &EdgeList, source: usize) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; list.n];
    d[source] = 0.0;
    for _ in 0..list.n {
        let mut changed = false;
        for &(a, b, w) in &list.edges {
            if d[a] + w < d[b] {
                d[b] = d[a] + w;
                changed = true;
            }
            if d[b] + w < d[a] {
                d[a] = d[b] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}

/// All-pairs distances by Floyd-Warshall.
pub fn floyd_warshall(list: &EdgeList) -> Vec<Vec<f64>> {
    let n = list.n;
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, w) in &list.edges {
        d[a][b] = d[a][b].min(w);
        d[b][a] = d[b][a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i][k];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let v = dik + d[k][j];
                if v < d[i][j] {
                    d[i][j] = v;
                }
            }
        }
    }
    d
}

/// Largest finite distance among vertices of the component holding `v`.
pub fn component_diameter(all_pairs: &[Vec<f64>], v: usize) -> f64 {
    let members: Vec<usize> = (0..all_pairs.len()).filter(|&u| all_pairs[v][u].is_finite()).collect();
    let mut best = 0.0f64;
    for &a in &members {
        for &b in &members {
            best = best.max(all_pairs[a][b]);
        }
    }
    best
}

/// Tree distances from `source` by depth-first traversal.
pub fn tree_distances(list: &EdgeList, source: usize) -> Vec<f64> {
    let mut adj = vec![Vec::new(); list.n];
    for &(a, b, w) in &list.edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let mut d = vec![f64::INFINITY; list.n];
    d[source] = 0.0;
    let mut stack = vec![source];
    while let Some(u) = stack.pop() {
        for &(v, w) in &adj[u] {
            if d[v].is_infinite() {
                d[v] = d[u] + w;
                stack.push(v);
            }
        }
    }
    d
}

pub fn tree_diameter(list: &EdgeList) -> f64 {
    (0..list.n)
        .map(|s| tree_distances(list, s).into_iter().filter(|d| d.is_finite()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Full grid of `h x w` pixels where each 8-neighbour edge is kept with
/// probability `keep`, weights uniform in (0, 1].
pub fn random_grid_graph(rng: &mut ChaCha8Rng, w: usize, h: usize, keep: f64) -> (PixelGraph, EdgeList) {
    let pixels: Vec<Pixel> = (0..h).flat_map(|r| (0..w).map(move |c| Pixel::new(r, c))).collect();
    let mut edges = Vec::new();
    for r in 0..h {
        for c in 0..w {
            for (dr, dc) in [(0isize, 1isize), (1, -1), (1, 0), (1, 1)] {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                if rng.gen_bool(keep) {
                    let wt = 1.0 - rng.gen::<f64>(); // (0, 1]
                    edges.push((Pixel::new(r, c), Pixel::new(nr as usize, nc as usize), wt));
                }
            }
        }
    }
    let g = PixelGraph::from_edges(w, h, &pixels, &edges).expect("valid grid graph");
    (g, EdgeList::from_pixels(&pixels, &edges))
}

/// Random tree of `n` pixels grown inside a `side x side` grid by attaching
/// random unused 8-neighbours of already placed pixels. Weights in (0, 1].
pub fn random_pixel_tree(rng: &mut ChaCha8Rng, side: usize, n: usize) -> (PixelGraph, EdgeList) {
    let mut used = vec![false; side * side];
    let start = Pixel::new(rng.gen_range(0..side), rng.gen_range(0..side));
    used[start.row * side + start.col] = true;
    let mut pixels = vec![start];
    let mut edges = Vec::new();
    let mut attempts = 0;
    while pixels.len() < n && attempts < 100 * n {
        attempts += 1;
        let from = pixels[rng.gen_range(0..pixels.len())];
        let dr = rng.gen_range(-1isize..=1);
        let dc = rng.gen_range(-1isize..=1);
        let (r, c) = (from.row as isize + dr, from.col as isize + dc);
        if (dr, dc) == (0, 0) || r < 0 || c < 0 || r >= side as isize || c >= side as isize {
            continue;
        }
        let p = Pixel::new(r as usize, c as usize);
        if used[p.row * side + p.col] {
            continue;
        }
        used[p.row * side + p.col] = true;
        pixels.push(p);
        edges.push((from, p, 1.0 - rng.gen::<f64>()));
    }
    let g = PixelGraph::from_edges(side, side, &pixels, &edges).expect("valid tree");
    (g, EdgeList::from_pixels(&pixels, &edges))
}

/// Objective of the 1-slack ranking problem at `w`, with the slack found by
/// literally enumerating every indicator vector `c` over `pairs`.
///
/// Constraint for `c`: `(1/|P|) sum c_ij w.(z_i - z_j) >= (1/|P|) sum c_ij m_ij - xi`.
pub fn enumerated_objective(w: &[f64], diffs: &[Vec<f64>], margins: &[f64], c: f64) -> f64 {
    let p = diffs.len();
    assert!(p <= 20, "enumeration limited to 20 pairs");
    let mut xi = 0.0f64;
    for mask in 0u32..(1 << p) {
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for k in 0..p {
            if mask >> k & 1 == 1 {
                lhs += dot(w, &diffs[k]);
                rhs += margins[k];
            }
        }
        xi = xi.max((rhs - lhs) / p as f64);
    }
    0.5 * dot(w, w) + c * xi
}

/// Same objective written with per-pair hinges.
pub fn hinge_objective(w: &[f64], diffs: &[Vec<f64>], margins: &[f64], c: f64) -> f64 {
    let p = diffs.len() as f64;
    let loss: f64 = diffs
        .iter()
        .zip(margins)
        .map(|(d, &m)| (m - dot(w, d)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * loss / p
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact minimizer of the hinge form via its box-constrained dual,
/// `max sum a_k m_k - 1/2 |sum a_k d_k|^2` with `0 <= a_k <= C/|P|`,
/// solved by cyclic exact coordinate ascent. Returns `(w, dual value)`.
pub fn hinge_dual_solve(diffs: &[Vec<f64>], margins: &[f64], c: f64) -> (Vec<f64>, f64) {
    let p = diffs.len();
    let dim = diffs[0].len();
    let cap = c / p as f64;
    let mut alpha = vec![0.0; p];
    let mut w = vec![0.0; dim];
    for _sweep in 0..200_000 {
        let mut moved = 0.0f64;
        for k in 0..p {
            let q = dot(&diffs[k], &diffs[k]);
            if q == 0.0 {
                let target = if margins[k] > 0.0 { cap } else { 0.0 };
                alpha[k] = target;
                continue;
            }
            let grad = margins[k] - dot(&w, &diffs[k]);
            let next = (alpha[k] + grad / q).clamp(0.0, cap);
            let step = next - alpha[k];
            if step != 0.0 {
                for (wi, di) in w.iter_mut().zip(&diffs[k]) {
                    *wi += step * di;
                }
                alpha[k] = next;
                moved = moved.max(step.abs());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    let dual = alpha.iter().zip(margins).map(|(a, m)| a * m).sum::<f64>() - 0.5 * dot(&w, &w);
    (w, dual)
}

/// Image of a bright bar of the given thickness through the center along
/// direction `(cos a, sin a)` in (column, row) coordinates, over a dark
/// background. Coverage is antialiased by the distance to the center line.
pub fn bar_image(size: usize, angle_deg: f64, thickness: f64) -> Raster {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mid = (size / 2) as f64;
    Raster::from_fn(size, size, |r, col| {
        let (x, y) = (col as f64 - mid, r as f64 - mid);
        let dist = (x * s - y * c).abs();
        0.2 + 0.6 * (thickness / 2.0 + 0.5 - dist).clamp(0.0, 1.0)
    })
}

/// Unit-range feature map of a bright-structure image.
pub fn bright_features(img: &Raster, bank: &FilterBank) -> Raster {
    let n = normalize_image(img).unwrap().with_polarity(Polarity::Bright);
    feature_map(&n, bank).unit_range().into_raster()
}

/// Structured score map of a T: a horizontal trunk of `trunk` pixels with
/// value 1 and a vertical branch of `branch` pixels with value 0.5 hanging
/// from the trunk's middle pixel. Returns the map and the trunk and branch
/// pixel lists.
pub fn t_shape(trunk: usize, branch: usize) -> (Raster, Vec<Pixel>, Vec<Pixel>) {
    let (w, h) = (trunk + 20, branch + 20);
    let row = 5;
    let trunk_px: Vec<Pixel> = (10..10 + trunk).map(|c| Pixel::new(row, c)).collect();
    let mid = 10 + trunk / 2;
    let branch_px: Vec<Pixel> = (row + 1..row + 1 + branch).map(|r| Pixel::new(r, mid)).collect();
    let mut pi = Raster::filled(w, h, 0.0);
    for p in &trunk_px {
        pi.set(p.row, p.col, 1.0);
    }
    for p in &branch_px {
        pi.set(p.row, p.col, 0.5);
    }
    (pi, trunk_px, branch_px)
}

/// 8-connected edge list of the pixels of `pi` above zero with
/// `w = |u - v| (pi(u) + pi(v)) / 2`, written out directly.
pub fn induced_edges(pi: &Raster) -> (Vec<Pixel>, Vec<(Pixel, Pixel, f64)>) {
    let on = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < pi.height() && (c as usize) < pi.width() && pi.get(r as usize, c as usize) > 0.0
    };
    let mut pixels = Vec::new();
    let mut edges = Vec::new();
    for r in 0..pi.height() {
        for c in 0..pi.width() {
            if !on(r as isize, c as isize) {
                continue;
            }
            pixels.push(Pixel::new(r, c));
            for (dr, dc) in [(0isize, 1isize), (1, -1), (1, 0), (1, 1)] {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if on(nr, nc) {
                    let len = if dr != 0 && dc != 0 { 2f64.sqrt() } else { 1.0 };
                    let wt = len * (pi.get(r, c) + pi.get(nr as usize, nc as usize)) / 2.0;
                    edges.push((Pixel::new(r, c), Pixel::new(nr as usize, nc as usize), wt));
                }
            }
        }
    }
    (pixels, edges)
}

/// Ordered pairs of a ranking instance written out directly: for every
/// `(i, j)` with `loss_i < loss_j - 1e-6`, the difference `z_i - z_j` and
/// the margin (`loss_j - loss_i`, or 1 when `unit`).
pub fn ranking_pairs(z: &[Vec<f64>], loss: &[f64], unit: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut diffs = Vec::new();
    let mut margins = Vec::new();
    for i in 0..z.len() {
        for j in 0..z.len() {
            if loss[i] < loss[j] - 1e-6 {
                diffs.push(z[i].iter().zip(&z[j]).map(|(a, b)| a - b).collect());
                margins.push(if unit { 1.0 } else { loss[j] - loss[i] });
            }
        }
    }
    (diffs, margins)
}

/// Random ranking instance with losses on a 0.1 grid (so some tie).
pub fn random_ranking_instance(rng: &mut ChaCha8Rng, k: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    loop {
        let z: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let loss: Vec<f64> = (0..k).map(|_| (rng.gen_range(0..=10) as f64) / 10.0).collect();
        if loss.iter().any(|&l| l != loss[0]) {
            return (z, loss);
        }
    }
}
