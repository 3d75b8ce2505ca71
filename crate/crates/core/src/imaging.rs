//! Illumination normalization, the steerable second-derivative filter bank
//! and the per-pixel curvilinear feature map.
//!
//! The feature map averages, over orientations, the strongest response
//! across scales:
//!
//! ```text
//! phi(x) = 1/|angles| * sum_theta max_sigma (f_{theta,sigma} * I)(x)
//! ```
//!
//! where `f_{theta,sigma}` is the second directional derivative of an
//! isotropic Gaussian. Because that derivative is steerable,
//! `f_theta = cos^2 Gxx + 2 cos sin Gxy + sin^2 Gyy`, the bank is evaluated
//! with three separable basis responses per scale instead of one dense 2-D
//! convolution per (orientation, scale) pair. The direct route is kept in
//! [`convolve`] and used by the tests to check the separable path.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{reflect_index, GrayImage, Raster};

/// Image after logistic illumination normalization; every value lies in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage(Raster);

impl NormalizedImage {
    pub fn raster(&self) -> &Raster {
        &self.0
    }

    /// `1 - value` per pixel. With zero-sum kernels this is the same as
    /// negating the image, and keeps values inside `(0, 1)`.
    pub fn inverted(&self) -> NormalizedImage {
        NormalizedImage(self.0.map(|v| 1.0 - v))
    }

    pub fn with_polarity(self, polarity: Polarity) -> NormalizedImage {
        match polarity {
            Polarity::Dark => self,
            Polarity::Bright => self.inverted(),
        }
    }
}

impl std::ops::Deref for NormalizedImage {
    type Target = Raster;

    fn deref(&self) -> &Raster {
        &self.0
    }
}

/// Curvilinear feature map, same dimensions as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(Raster);

impl FeatureMap {
    pub fn from_raster(raster: Raster) -> Self {
        FeatureMap(raster)
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    /// Min-max rescaled copy in `[0, 1]`, the domain used for orientation
    /// histograms and patch features.
    pub fn unit_range(&self) -> FeatureMap {
        FeatureMap(self.0.unit_range())
    }
}

impl std::ops::Deref for FeatureMap {
    type Target = Raster;

    fn deref(&self) -> &Raster {
        &self.0
    }
}

/// Which intensity polarity the structures have.
///
/// The second-derivative response is positive across a dark ridge, so
/// bright structures are inverted before filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Dark structures on a lighter background (retinal vessels, cracks).
    #[default]
    Dark,
    /// Bright structures on a darker background.
    Bright,
}

/// Logistic illumination normalization:
/// `1 / (1 + exp(-(I - mean) / (max - min)))`.
///
/// A constant image has no range; every pixel maps to 0.5, the logistic of zero.
pub fn normalize_image(img: &GrayImage) -> Result<NormalizedImage> {
    if img.is_empty() {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let mean = img.mean();
    let (lo, hi) = img.min_max();
    let range = hi - lo;
    if range <= 0.0 {
        return Ok(NormalizedImage(Raster::filled(img.width(), img.height(), 0.5)));
    }
    Ok(NormalizedImage(
        img.map(|v| 1.0 / (1.0 + (-(v - mean) / range).exp())),
    ))
}

/// Square convolution kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    data: Vec<f64>,
    dc_offset: f64,
}

impl Kernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mean that was subtracted from the sampled derivative to make the
    /// kernel sum to zero.
    pub fn dc_offset(&self) -> f64 {
        self.dc_offset
    }

    pub fn transpose(&self) -> Kernel {
        let n = self.size;
        let mut data = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                data[c * n + r] = self.data[r * n + c];
            }
        }
        Kernel {
            size: n,
            data,
            dc_offset: self.dc_offset,
        }
    }
}

fn check_kernel_params(variance: f64, size: usize) -> Result<()> {
    if size % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "kernel size must be odd, got {size}"
        )));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Gaussian variance must be positive, got {variance}"
        )));
    }
    Ok(())
}

/// 1-D Gaussian and its first two derivatives sampled at `-h..=h`.
struct GaussianTaps {
    g: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl GaussianTaps {
    fn new(variance: f64, size: usize) -> Self {
        let h = (size / 2) as isize;
        let norm = 1.0 / (2.0 * PI * variance).sqrt();
        let mut g = Vec::with_capacity(size);
        let mut d1 = Vec::with_capacity(size);
        let mut d2 = Vec::with_capacity(size);
        for i in -h..=h {
            let x = i as f64;
            let v = norm * (-x * x / (2.0 * variance)).exp();
            g.push(v);
            d1.push(-x / variance * v);
            d2.push((x * x / (variance * variance) - 1.0 / variance) * v);
        }
        Self { g, d1, d2 }
    }
}

/// Raw steered kernel `cos^2 Gxx + 2 cos sin Gxy + sin^2 Gyy` with `x` along
/// columns and `y` along rows, before DC removal.
fn steered_raw(taps: &GaussianTaps, theta_deg: f64) -> Vec<f64> {
    let n = taps.g.len();
    let (s, c) = theta_deg.to_radians().sin_cos();
    let (cc, cs, ss) = (c * c, 2.0 * c * s, s * s);
    let mut data = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let gxx = taps.d2[col] * taps.g[row];
            let gxy = taps.d1[col] * taps.d1[row];
            let gyy = taps.g[col] * taps.d2[row];
            data.push(cc * gxx + cs * gxy + ss * gyy);
        }
    }
    data
}

/// Second directional derivative of the isotropic Gaussian `G(x, y; variance)`
/// along direction `theta_deg`, sampled on a `size x size` integer grid and
/// shifted to sum to zero.
///
/// Direction `theta` is the unit vector `(cos theta, sin theta)` in
/// (column, row) coordinates.
pub fn steerable_kernel(theta_deg: f64, variance: f64, size: usize) -> Result<Kernel> {
    check_kernel_params(variance, size)?;
    let taps = GaussianTaps::new(variance, size);
    let mut data = steered_raw(&taps, theta_deg);
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    for v in &mut data {
        *v -= mean;
    }
    Ok(Kernel {
        size,
        data,
        dc_offset: mean,
    })
}

/// Direct 2-D correlation with reflect padding. The steerable kernels are
/// point-symmetric, so this equals convolution for them.
pub fn convolve(img: &Raster, kernel: &Kernel) -> Raster {
    let (w, h) = (img.width(), img.height());
    let n = kernel.size() as isize;
    let half = n / 2;
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|r| {
            (0..w)
                .map(|c| {
                    let mut acc = 0.0;
                    for kr in 0..n {
                        for kc in 0..n {
                            acc += kernel.get(kr as usize, kc as usize)
                                * img.get_reflect(
                                    r as isize + kr - half,
                                    c as isize + kc - half,
                                );
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Raster::from_vec_unchecked(w, h, rows.concat())
}

/// Separable correlation: `horizontal` along columns, then `vertical` along rows.
fn correlate_separable(img: &Raster, horizontal: &[f64], vertical: &[f64]) -> Raster {
    let (w, h) = (img.width(), img.height());
    let hh = (horizontal.len() / 2) as isize;
    let hv = (vertical.len() / 2) as isize;
    let col_idx: Vec<Vec<usize>> = (0..w)
        .map(|c| {
            (0..horizontal.len() as isize)
                .map(|k| reflect_index(c as isize + k - hh, w))
                .collect()
        })
        .collect();
    let data = img.data();
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        let row = &data[r * w..(r + 1) * w];
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &ci) in col_idx[c].iter().enumerate() {
                acc += horizontal[k] * row[ci];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for (k, &coef) in vertical.iter().enumerate() {
            let ri = reflect_index(r as isize + k as isize - hv, h);
            let src = &tmp[ri * w..(ri + 1) * w];
            let dst = &mut out[r * w..(r + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += coef * s;
            }
        }
    }
    Raster::from_vec_unchecked(w, h, out)
}

/// Orientations (degrees), Gaussian variances and kernel size of the bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    orientations: Vec<f64>,
    scales: Vec<f64>,
    kernel_size: usize,
}

/// Eight orientations spaced 22.5 degrees apart.
pub fn default_orientations() -> Vec<f64> {
    (0..8).map(|i| i as f64 * 22.5).collect()
}

impl FilterBank {
    pub fn new(orientations: Vec<f64>, scales: Vec<f64>, kernel_size: usize) -> Result<Self> {
        if orientations.is_empty() {
            return Err(Error::InvalidParameter("filter bank needs at least one orientation".into()));
        }
        if scales.is_empty() {
            return Err(Error::InvalidParameter("filter bank needs at least one scale".into()));
        }
        if let Some(a) = orientations.iter().find(|a| !(0.0..180.0).contains(*a)) {
            return Err(Error::InvalidParameter(format!(
                "orientation {a} outside [0, 180)"
            )));
        }
        for &s in &scales {
            check_kernel_params(s, kernel_size)?;
        }
        Ok(Self {
            orientations,
            scales,
            kernel_size,
        })
    }

    pub fn orientations(&self) -> &[f64] {
        &self.orientations
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }
}

impl Default for FilterBank {
    fn default() -> Self {
        Self::new(default_orientations(), vec![2.0, 4.0, 8.0], 21).expect("valid default bank")
    }
}

/// Basis responses of one scale: `Gxx*I`, `Gxy*I`, `Gyy*I`.
struct ScaleResponses {
    xx: Raster,
    xy: Raster,
    yy: Raster,
    taps: GaussianTaps,
}

/// Response of the zero-sum steered kernel for one (orientation, scale).
fn steered_response(s: &ScaleResponses, box_sum: &Raster, theta_deg: f64) -> Vec<f64> {
    let raw = steered_raw(&s.taps, theta_deg);
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let (sn, cs) = theta_deg.to_radians().sin_cos();
    let (a, b, c) = (cs * cs, 2.0 * cs * sn, sn * sn);
    s.xx
        .data()
        .iter()
        .zip(s.xy.data())
        .zip(s.yy.data())
        .zip(box_sum.data())
        .map(|(((xx, xy), yy), bx)| a * xx + b * xy + c * yy - mean * bx)
        .collect()
}

/// Curvilinear feature map: per orientation the maximum response over
/// scales, then the mean over orientations. Responses are signed.
pub fn feature_map(img: &NormalizedImage, bank: &FilterBank) -> FeatureMap {
    let raster = img.raster();
    let n = bank.kernel_size;
    let ones = vec![1.0; n];
    let box_sum = correlate_separable(raster, &ones, &ones);

    let per_scale: Vec<ScaleResponses> = bank
        .scales
        .par_iter()
        .map(|&variance| {
            let taps = GaussianTaps::new(variance, n);
            ScaleResponses {
                xx: correlate_separable(raster, &taps.d2, &taps.g),
                xy: correlate_separable(raster, &taps.d1, &taps.d1),
                yy: correlate_separable(raster, &taps.g, &taps.d2),
                taps,
            }
        })
        .collect();

    let per_orientation: Vec<Vec<f64>> = bank
        .orientations
        .par_iter()
        .map(|&theta| {
            let mut best = vec![f64::NEG_INFINITY; raster.len()];
            for s in &per_scale {
                let resp = steered_response(s, &box_sum, theta);
                for (b, r) in best.iter_mut().zip(resp) {
                    if r > *b {
                        *b = r;
                    }
                }
            }
            best
        })
        .collect();

    let inv = 1.0 / bank.orientations.len() as f64;
    let mut phi = vec![0.0; raster.len()];
    for resp in &per_orientation {
        for (p, r) in phi.iter_mut().zip(resp) {
            *p += r;
        }
    }
    for p in &mut phi {
        *p *= inv;
    }
    FeatureMap(Raster::from_vec_unchecked(raster.width(), raster.height(), phi))
}

/// Reference implementation of [`feature_map`] through dense per-kernel
/// convolutions. Slow; kept for verification.
pub fn feature_map_direct(img: &NormalizedImage, bank: &FilterBank) -> Result<FeatureMap> {
    let raster = img.raster();
    let mut phi = vec![0.0; raster.len()];
    for &theta in &bank.orientations {
        let mut best = vec![f64::NEG_INFINITY; raster.len()];
        for &variance in &bank.scales {
            let k = steerable_kernel(theta, variance, bank.kernel_size)?;
            let resp = convolve(raster, &k);
            for (b, &r) in best.iter_mut().zip(resp.data()) {
                *b = b.max(r);
            }
        }
        for (p, b) in phi.iter_mut().zip(best) {
            *p += b;
        }
    }
    let inv = 1.0 / bank.orientations.len() as f64;
    Ok(FeatureMap(Raster::from_vec_unchecked(
        raster.width(),
        raster.height(),
        phi.into_iter().map(|v| v * inv).collect(),
    )))
}
