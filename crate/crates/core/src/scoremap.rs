//! Rank scores on a subsampled grid, top-rank selection, and blending of
//! inverse-score template patches into a structured score map.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::tolerant_f1;
use crate::imaging::FeatureMap;
use crate::patch::{estimate_orientation, extract_rotated_patch, feature_vector, BasisPattern};
use crate::raster::{BinaryMap, Pixel, Raster};
use crate::ranking::RankingModel;

/// Patches scoring at or below this fraction of the best selected score are
/// left out of synthesis.
pub const MIN_SCORE_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub center: Pixel,
    pub score: f64,
    /// Estimated local orientation, degrees.
    pub angle: f64,
}

/// Scores on the stride-spaced grid, in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankScoreMap {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub points: Vec<GridPoint>,
}

impl RankScoreMap {
    /// Dense raster with each grid score written at its center, zero elsewhere.
    pub fn to_raster(&self) -> Raster {
        let mut r = Raster::filled(self.width, self.height, 0.0);
        for p in &self.points {
            r.set(p.center.row, p.center.col, p.score);
        }
        r
    }
}

/// Grid centers `stride/2, stride/2 + stride, ...` along each axis (clamped
/// into the image), row-major.
pub fn grid_centers(width: usize, height: usize, stride: usize) -> Vec<Pixel> {
    let stride = stride.max(1);
    let start_r = (stride / 2).min(height - 1);
    let start_c = (stride / 2).min(width - 1);
    let mut out = Vec::new();
    for r in (start_r..height).step_by(stride) {
        for c in (start_c..width).step_by(stride) {
            out.push(Pixel::new(r, c));
        }
    }
    out
}

/// Orientation, masked feature vector and model score at every grid point.
///
/// `feature` should be the unit-range feature map.
pub fn infer_scores(
    feature: &FeatureMap,
    model: &RankingModel,
    basis: &BasisPattern,
    angles: &[f64],
    stride: usize,
) -> Result<RankScoreMap> {
    if model.dim() != basis.popcount() {
        return Err(Error::DimensionMismatch {
            expected: basis.popcount(),
            actual: model.dim(),
        });
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("grid stride must be positive".into()));
    }
    let raster = feature.raster();
    let centers = grid_centers(raster.width(), raster.height(), stride);
    let points = centers
        .par_iter()
        .map(|&center| -> Result<GridPoint> {
            let angle = estimate_orientation(raster, center, basis, angles)?;
            let patch = extract_rotated_patch(raster, center, angle, basis.side())?;
            let z = feature_vector(&patch, basis)?;
            Ok(GridPoint {
                center,
                score: model.score(&z.values)?,
                angle,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankScoreMap {
        width: raster.width(),
        height: raster.height(),
        stride,
        points,
    })
}

/// Grid points retained by rank, and their pixels marked on a full-size mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TopRankBinaryMap {
    pub mask: BinaryMap,
    /// Indices into [`RankScoreMap::points`], best first.
    pub selected: Vec<usize>,
}

impl TopRankBinaryMap {
    pub fn from_selection(scores: &RankScoreMap, selected: Vec<usize>) -> Self {
        let mask = BinaryMap::from_pixels(
            scores.width,
            scores.height,
            selected.iter().map(|&i| scores.points[i].center),
        );
        Self { mask, selected }
    }
}

/// Number of grid points kept for proportion `rho`: `floor(rho * W * H)`,
/// capped by the grid size.
fn retained_count(scores: &RankScoreMap, rho: f64) -> usize {
    let n = (rho * (scores.width * scores.height) as f64 + 1e-9).floor() as usize;
    n.min(scores.points.len())
}

/// Grid indices ordered by descending score; equal scores keep row-major order.
fn ranked_indices(scores: &RankScoreMap) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.points.len()).collect();
    idx.sort_by(|&a, &b| scores.points[b].score.total_cmp(&scores.points[a].score));
    idx
}

/// Keeps the grid points ranked from the top down to rank `rho * |I|`,
/// where `|I|` counts every image pixel.
pub fn top_rank_binary_map(scores: &RankScoreMap, rho: f64) -> Result<TopRankBinaryMap> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!("rho must be in (0, 1], got {rho}")));
    }
    let mut ranked = ranked_indices(scores);
    ranked.truncate(retained_count(scores, rho));
    Ok(TopRankBinaryMap::from_selection(scores, ranked))
}

/// Candidate proportions: 0.001 to 0.05 in steps of 0.001, then 0.06 to 0.5
/// in steps of 0.01.
pub fn rho_grid() -> Vec<f64> {
    (1..=50)
        .map(|i| i as f64 / 1000.0)
        .chain((6..=50).map(|i| i as f64 / 100.0))
        .collect()
}

/// Picks the proportion from [`rho_grid`] that maximizes the mean tolerant
/// F1 of the top-rank maps against the ground truth; ties go to the smaller.
pub fn calibrate_rho(scores: &[RankScoreMap], gts: &[BinaryMap], tolerance: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no training score maps to calibrate on".into()));
    }
    if scores.len() != gts.len() {
        return Err(Error::InvalidInput(format!(
            "{} score maps but {} ground-truth maps",
            scores.len(),
            gts.len()
        )));
    }
    let grid = rho_grid();
    let ranked: Vec<Vec<usize>> = scores.iter().map(ranked_indices).collect();
    let means = grid
        .par_iter()
        .map(|&rho| -> Result<f64> {
            let mut total = 0.0;
            for ((s, gt), order) in scores.iter().zip(gts).zip(&ranked) {
                let n = retained_count(s, rho);
                let pred = BinaryMap::from_pixels(
                    s.width,
                    s.height,
                    order[..n].iter().map(|&i| s.points[i].center),
                );
                total += tolerant_f1(&pred, gt, tolerance)?.f1;
            }
            Ok(total / scores.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &m) in means.iter().enumerate() {
        if m > means[best] {
            best = i;
        }
    }
    Ok(grid[best])
}

/// Non-negative per-pixel structure map; zero wherever no patch contributed.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredScoreMap(Raster);

impl StructuredScoreMap {
    pub fn from_raster(raster: Raster) -> Result<Self> {
        if raster.data().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("structured score map must be non-negative".into()));
        }
        Ok(Self(raster))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }
}

impl std::ops::Deref for StructuredScoreMap {
    type Target = Raster;

    fn deref(&self) -> &Raster {
        &self.0
    }
}

/// Image pixels covered by the template's set pixels when it is placed at
/// `center` and rotated by `angle_deg`. A pixel is covered when its
/// back-rotated offset rounds onto a set template pixel.
pub fn template_footprint(
    center: Pixel,
    angle_deg: f64,
    basis: &BasisPattern,
    width: usize,
    height: usize,
) -> Vec<Pixel> {
    let h = (basis.side() / 2) as isize;
    let reach = ((h as f64) * std::f64::consts::SQRT_2).ceil() as isize + 1;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut out = Vec::new();
    for dr in -reach..=reach {
        let r = center.row as isize + dr;
        if r < 0 || r >= height as isize {
            continue;
        }
        for dc in -reach..=reach {
            let c = center.col as isize + dc;
            if c < 0 || c >= width as isize {
                continue;
            }
            let u = (dc as f64 * cos + dr as f64 * sin).round() as isize;
            let v = (dr as f64 * cos - dc as f64 * sin).round() as isize;
            if u.abs() <= h && v.abs() <= h && basis.is_set((v + h) as usize, (u + h) as usize) {
                out.push(Pixel::new(r as usize, c as usize));
            }
        }
    }
    out
}

/// Synthesizes the structured score map from the selected grid points.
///
/// Each retained patch contributes the per-patch least-squares estimate
/// `b / score` on its template footprint. Where footprints overlap the
/// contributions are averaged, which minimizes the summed squared deviation
/// of the shared pixel from every patch estimate.
pub fn synthesize(
    scores: &RankScoreMap,
    selected: &TopRankBinaryMap,
    basis: &BasisPattern,
) -> Result<StructuredScoreMap> {
    if selected.selected.is_empty() {
        return Err(Error::InvalidInput("no grid points selected for synthesis".into()));
    }
    let (w, h) = (scores.width, scores.height);
    let best = selected
        .selected
        .iter()
        .map(|&i| scores.points[i].score)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = vec![0.0; w * h];
    let mut count = vec![0u32; w * h];
    if best <= 0.0 {
        log::warn!("every selected score is non-positive; structured score map is empty");
        return Ok(StructuredScoreMap(Raster::filled(w, h, 0.0)));
    }
    let floor = MIN_SCORE_FRACTION * best;
    for &i in &selected.selected {
        let p = scores.points[i];
        if p.score <= floor {
            continue;
        }
        let value = 1.0 / p.score;
        for px in template_footprint(p.center, p.angle, basis, w, h) {
            let k = px.index(w);
            sum[k] += value;
            count[k] += 1;
        }
    }
    let data = sum
        .into_iter()
        .zip(count)
        .map(|(s, n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    Ok(StructuredScoreMap(Raster::from_vec_unchecked(w, h, data)))
}
