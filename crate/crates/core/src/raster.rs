//! Dense row-major rasters and binary masks shared by every stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Row-major linear index in an image of the given width.
    pub fn index(self, width: usize) -> usize {
        self.row * width + self.col
    }
}

/// Maps an arbitrary integer coordinate into `0..n` by mirroring about the
/// first and last samples (`... c b | a b c d | c b ...`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Real-valued image. Width and height are at least one and every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Raw input intensities.
pub type GrayImage = Raster;

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "raster must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "raster must be non-empty");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "raster must be non-empty");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Value at a possibly out-of-range coordinate, using reflect padding.
    pub fn get_reflect(&self, row: isize, col: isize) -> f64 {
        let r = reflect_index(row, self.height);
        let c = reflect_index(col, self.width);
        self.data[r * self.width + c]
    }

    /// Bilinear sample at fractional `(row, col)`; neighbours outside the
    /// image are reflected back inside.
    pub fn bilinear(&self, row: f64, col: f64) -> f64 {
        let r0 = row.floor();
        let c0 = col.floor();
        let fr = row - r0;
        let fc = col - c0;
        let (r0, c0) = (r0 as isize, c0 as isize);
        let v00 = self.get_reflect(r0, c0);
        let v01 = self.get_reflect(r0, c0 + 1);
        let v10 = self.get_reflect(r0 + 1, c0);
        let v11 = self.get_reflect(r0 + 1, c0 + 1);
        let top = v00 + (v01 - v00) * fc;
        let bottom = v10 + (v11 - v10) * fc;
        top + (bottom - top) * fr
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Rescales values to `[0, 1]`; a constant raster maps to all zeros.
    pub fn unit_range(&self) -> Raster {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        if span <= 0.0 {
            return Raster::filled(self.width, self.height, 0.0);
        }
        self.map(|v| (v - lo) / span)
    }

    /// Rotates the raster a quarter turn counter-clockwise as displayed
    /// (row 0 at the top): pixel `(r, c)` moves to `(W-1-c, r)`.
    pub fn rotate90(&self) -> Raster {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                out[(w - 1 - c) * h + r] = self.data[r * w + c];
            }
        }
        Raster {
            width: h,
            height: w,
            data: out,
        }
    }

    pub fn transpose(&self) -> Raster {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                out[c * h + r] = self.data[r * w + c];
            }
        }
        Raster {
            width: h,
            height: w,
            data: out,
        }
    }
}

/// Binary raster. Ground-truth maps, top-rank maps and predictions all use it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

/// Ground-truth curvilinear structure: `true` where a pixel lies on it.
pub type GroundTruthMap = BinaryMap;

impl BinaryMap {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "mask must be non-empty, got {width}x{height}"
            )));
        }
        if mask.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: mask.len(),
            });
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask must be non-empty");
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: impl IntoIterator<Item = Pixel>) -> Self {
        let mut m = Self::empty(width, height);
        for p in pixels {
            m.set(p.row, p.col, true);
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.mask[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Pixel::new(i / w, i % w))
    }

    /// 0/1 raster, used when rotating ground truth with bilinear sampling.
    pub fn to_raster(&self) -> Raster {
        Raster::from_vec_unchecked(
            self.width,
            self.height,
            self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn union(&self, other: &BinaryMap) -> Result<BinaryMap> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(BinaryMap {
            width: self.width,
            height: self.height,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_mirrors_without_repeating_edges() {
        let got: Vec<usize> = (-4..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect_index(-7, 1), 0);
    }

    #[test]
    fn rotate90_four_times_is_identity() {
        let r = Raster::from_fn(3, 2, |r, c| (r * 3 + c) as f64);
        let once = r.rotate90();
        assert_eq!((once.width(), once.height()), (2, 3));
        assert_eq!(once.get(2, 0), r.get(0, 0));
        assert_eq!(once.get(0, 1), r.get(1, 2));
        assert_eq!(r.rotate90().rotate90().rotate90().rotate90(), r);
    }

    #[test]
    fn bilinear_at_integer_coordinates_is_exact() {
        let r = Raster::from_fn(4, 3, |r, c| (r * 10 + c) as f64);
        assert_eq!(r.bilinear(1.0, 2.0), 12.0);
        assert!((r.bilinear(0.5, 0.5) - 5.5).abs() < 1e-12);
        // -1 reflects to 1
        assert_eq!(r.bilinear(-1.0, 0.0), 10.0);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(Raster::new(0, 1, vec![]).is_err());
        assert!(Raster::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Raster::new(2, 1, vec![1.0]).is_err());
    }
}
