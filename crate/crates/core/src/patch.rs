//! Basis line pattern, rotated patch sampling, chi-square orientation
//! estimation, masked feature vectors and the overlap loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Pixel, Raster};

/// Number of histogram bins used by the orientation test.
pub const HISTOGRAM_BINS: usize = 32;

/// Binary `side x side` template: the `thickness` center rows set, i.e. a
/// horizontal bar at the baseline orientation of 0 degrees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisPattern {
    side: usize,
    thickness: usize,
    mask: Vec<bool>,
}

impl BasisPattern {
    pub fn new(side: usize, thickness: usize) -> Result<Self> {
        if side % 2 == 0 || thickness % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "patch side ({side}) and thickness ({thickness}) must be odd"
            )));
        }
        if thickness >= side {
            return Err(Error::InvalidParameter(format!(
                "thickness {thickness} must be smaller than patch side {side}"
            )));
        }
        let (mid, half) = (side / 2, thickness / 2);
        let mask = (0..side * side)
            .map(|i| {
                let r = i / side;
                r + half >= mid && r <= mid + half
            })
            .collect();
        Ok(Self {
            side,
            thickness,
            mask,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn thickness(&self) -> usize {
        self.thickness
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_set(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.side + col]
    }

    /// Number of set pixels, the feature dimension.
    pub fn popcount(&self) -> usize {
        self.side * self.thickness
    }

    /// The template as a 0/1 vector in row-major order.
    pub fn to_vector(&self) -> Vec<f64> {
        self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Patch of a raster sampled on a grid rotated by `angle` degrees about `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedPatch {
    pub center: Pixel,
    pub angle: f64,
    side: usize,
    values: Vec<f64>,
}

impl OrientedPatch {
    pub fn new(center: Pixel, angle: f64, side: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                actual: values.len(),
            });
        }
        Ok(Self {
            center,
            angle,
            side,
            values,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }
}

/// Patch-local offset `(u, v)` (u along columns, v along rows) mapped into
/// image coordinates `(row, col)` for a rotation by `angle_deg`.
fn rotated_offset(u: f64, v: f64, sin: f64, cos: f64) -> (f64, f64) {
    (u * sin + v * cos, u * cos - v * sin)
}

/// Snaps coordinates that are integers up to rounding noise, so axis-aligned
/// rotations copy pixels exactly.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Samples `map(center + R(angle) (u, v))` on the centered `side x side`
/// offset grid with bilinear interpolation and reflect padding.
///
/// The patch's horizontal axis follows the direction `(cos angle, sin angle)`
/// in (column, row) coordinates, so a line running along that direction
/// through `center` becomes a horizontal bar.
pub fn extract_rotated_patch(
    map: &Raster,
    center: Pixel,
    angle_deg: f64,
    side: usize,
) -> Result<OrientedPatch> {
    if side % 2 == 0 {
        return Err(Error::InvalidParameter(format!("patch side must be odd, got {side}")));
    }
    let h = (side / 2) as isize;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (cr, cc) = (center.row as f64, center.col as f64);
    let mut values = Vec::with_capacity(side * side);
    for pr in -h..=h {
        for pc in -h..=h {
            let (dr, dc) = rotated_offset(pc as f64, pr as f64, sin, cos);
            values.push(map.bilinear(snap(cr + dr), snap(cc + dc)));
        }
    }
    Ok(OrientedPatch {
        center,
        angle: angle_deg,
        side,
        values,
    })
}

/// Normalized histogram of values in `[0, 1]` over [`HISTOGRAM_BINS`] bins;
/// out-of-range values fall into the end bins. Empty input gives all zeros.
pub fn histogram(values: impl IntoIterator<Item = f64>) -> [f64; HISTOGRAM_BINS] {
    let mut counts = [0usize; HISTOGRAM_BINS];
    let mut total = 0usize;
    for v in values {
        let bin = (v * HISTOGRAM_BINS as f64).floor();
        let bin = bin.clamp(0.0, (HISTOGRAM_BINS - 1) as f64) as usize;
        counts[bin] += 1;
        total += 1;
    }
    let mut out = [0.0; HISTOGRAM_BINS];
    if total > 0 {
        for (o, c) in out.iter_mut().zip(counts) {
            *o = c as f64 / total as f64;
        }
    }
    out
}

/// `0.5 * sum (p - q)^2 / (p + q)`, skipping bins where both are empty.
pub fn chi_square(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q)
        .filter(|(a, b)| *a + *b > 0.0)
        .map(|(a, b)| (a - b) * (a - b) / (a + b))
        .sum::<f64>()
}

/// Chi-square distance between the on-template and off-template histograms
/// of the patch.
pub fn template_contrast(patch: &OrientedPatch, basis: &BasisPattern) -> Result<f64> {
    check_side(patch, basis)?;
    let on = patch
        .values
        .iter()
        .zip(basis.mask())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v);
    let off = patch
        .values
        .iter()
        .zip(basis.mask())
        .filter(|(_, &m)| !m)
        .map(|(&v, _)| v);
    Ok(chi_square(&histogram(on), &histogram(off)))
}

/// Chi-square contrast for every candidate angle, in the given order.
pub fn orientation_scores(
    feature: &Raster,
    center: Pixel,
    basis: &BasisPattern,
    angles: &[f64],
) -> Result<Vec<f64>> {
    angles
        .iter()
        .map(|&a| {
            let patch = extract_rotated_patch(feature, center, a, basis.side())?;
            template_contrast(&patch, basis)
        })
        .collect()
}

/// Angle whose rotated patch best separates on-template from off-template
/// value distributions. Expects feature values in `[0, 1]` (see
/// [`crate::imaging::FeatureMap::unit_range`]). Ties go to the earliest angle.
pub fn estimate_orientation(
    feature: &Raster,
    center: Pixel,
    basis: &BasisPattern,
    angles: &[f64],
) -> Result<f64> {
    if angles.is_empty() {
        return Err(Error::InvalidParameter("angle set is empty".into()));
    }
    let scores = orientation_scores(feature, center, basis, angles)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(angles[best])
}

/// Patch values under the template, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub center: Pixel,
    pub angle: f64,
}

fn check_side(patch: &OrientedPatch, basis: &BasisPattern) -> Result<()> {
    if patch.side != basis.side {
        return Err(Error::InvalidInput(format!(
            "patch side {} does not match template side {}",
            patch.side, basis.side
        )));
    }
    Ok(())
}

pub fn feature_vector(patch: &OrientedPatch, basis: &BasisPattern) -> Result<FeatureVector> {
    check_side(patch, basis)?;
    let values = patch
        .values
        .iter()
        .zip(basis.mask())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    Ok(FeatureVector {
        values,
        center: patch.center,
        angle: patch.angle,
    })
}

/// One minus the intersection-over-union between the ground-truth patch
/// (binarized at 0.5) and the template. An empty union counts as fully
/// dissimilar.
pub fn patch_loss(gt_patch: &OrientedPatch, basis: &BasisPattern) -> Result<f64> {
    check_side(gt_patch, basis)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&v, &m) in gt_patch.values.iter().zip(basis.mask()) {
        let g = v >= 0.5;
        inter += (g && m) as usize;
        union += (g || m) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - inter as f64 / union as f64)
}

/// Binary masks as IoU loss; used for symmetric checks.
pub fn mask_loss(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}
