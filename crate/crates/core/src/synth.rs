//! Synthetic line-network images with exact ground truth: random trees of
//! polylines rendered at a fixed thickness over a shaded background with
//! additive Gaussian noise.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::write_mask_png;
use crate::raster::{BinaryMap, Raster};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub width: usize,
    pub height: usize,
    /// Stroke width in pixels.
    pub thickness: usize,
    /// Standard deviation of the additive noise, intensities in `[0, 1]`.
    pub noise: f64,
    pub background: f64,
    pub foreground: f64,
    /// Side branches off the trunk.
    pub branches: std::ops::RangeInclusive<usize>,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            thickness: 5,
            noise: 0.1,
            background: 0.3,
            foreground: 0.7,
            branches: 2..=4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    /// Intensities clamped to `[0, 1]`.
    pub image: Raster,
    pub ground_truth: BinaryMap,
    pub polylines: Vec<Vec<(f64, f64)>>,
}

/// Random walk from `start` with slowly drifting heading, as `(row, col)`
/// points. Stops at `length` or when it reaches the margin.
fn walk(
    rng: &mut ChaCha8Rng,
    start: (f64, f64),
    mut heading: f64,
    length: f64,
    bounds: (f64, f64),
    margin: f64,
) -> Vec<(f64, f64)> {
    const STEP: f64 = 6.0;
    let turn = Normal::new(0.0, 8f64.to_radians()).expect("valid sigma");
    let mut pts = vec![start];
    let mut travelled = 0.0;
    let (mut r, mut c) = start;
    while travelled < length {
        heading += turn.sample(rng);
        let (nr, nc) = (r + STEP * heading.sin(), c + STEP * heading.cos());
        if nr < margin || nc < margin || nr > bounds.0 - margin || nc > bounds.1 - margin {
            break;
        }
        pts.push((nr, nc));
        (r, c) = (nr, nc);
        travelled += STEP;
    }
    pts
}

fn heading_at(line: &[(f64, f64)], i: usize) -> f64 {
    let j = (i + 1).min(line.len() - 1);
    let i = j - 1;
    (line[j].0 - line[i].0).atan2(line[j].1 - line[i].1)
}

fn random_tree(rng: &mut ChaCha8Rng, opts: &SynthOptions) -> Vec<Vec<(f64, f64)>> {
    let (h, w) = (opts.height as f64, opts.width as f64);
    let margin = opts.thickness as f64;
    let size = h.min(w);
    // trunk enters from a random side, heading roughly inward
    let side = rng.gen_range(0..4);
    let t = rng.gen_range(0.25..0.75);
    let (start, inward) = match side {
        0 => ((margin, t * w), PI / 2.0),
        1 => ((h - margin, t * w), -PI / 2.0),
        2 => ((t * h, margin), 0.0),
        _ => ((t * h, w - margin), PI),
    };
    let heading = inward + rng.gen_range(-0.4..0.4);
    let trunk_len = rng.gen_range(0.7..1.0) * size;
    let trunk = walk(rng, start, heading, trunk_len, (h, w), margin);
    let mut lines = vec![trunk];
    let n_branches = rng.gen_range(opts.branches.clone());
    for _ in 0..n_branches {
        let parent = lines[rng.gen_range(0..lines.len())].clone();
        if parent.len() < 6 {
            continue;
        }
        let at = rng.gen_range(parent.len() / 5..parent.len() * 4 / 5);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let heading = heading_at(&parent, at) + sign * rng.gen_range(0.6..1.2);
        let len = rng.gen_range(0.25..0.45) * size;
        let branch = walk(rng, parent[at], heading, len, (h, w), margin);
        if branch.len() >= 4 {
            lines.push(branch);
        }
    }
    lines
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dr, dc) = (b.0 - a.0, b.1 - a.1);
    let len2 = dr * dr + dc * dc;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dr + (p.1 - a.1) * dc) / len2).clamp(0.0, 1.0)
    };
    let (qr, qc) = (a.0 + t * dr, a.1 + t * dc);
    ((p.0 - qr).powi(2) + (p.1 - qc).powi(2)).sqrt()
}

/// Distance from every pixel center to the nearest polyline, capped at `cap`.
fn distance_field(lines: &[Vec<(f64, f64)>], width: usize, height: usize, cap: f64) -> Vec<f64> {
    let mut d = vec![cap; width * height];
    for line in lines {
        for seg in line.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let r0 = (a.0.min(b.0) - cap).floor().max(0.0) as usize;
            let r1 = ((a.0.max(b.0) + cap).ceil() as usize).min(height - 1);
            let c0 = (a.1.min(b.1) - cap).floor().max(0.0) as usize;
            let c1 = ((a.1.max(b.1) + cap).ceil() as usize).min(width - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let v = segment_distance((r as f64, c as f64), a, b);
                    let k = r * width + c;
                    if v < d[k] {
                        d[k] = v;
                    }
                }
            }
        }
    }
    d
}

/// Renders one image from `rng`.
pub fn generate_image(rng: &mut ChaCha8Rng, opts: &SynthOptions) -> Result<SynthImage> {
    if opts.width < 4 * opts.thickness || opts.height < 4 * opts.thickness {
        return Err(Error::InvalidParameter(format!(
            "{}x{} is too small for thickness {}",
            opts.width, opts.height, opts.thickness
        )));
    }
    if !(opts.noise >= 0.0) {
        return Err(Error::InvalidParameter("noise must be non-negative".into()));
    }
    let lines = random_tree(rng, opts);
    let (w, h) = (opts.width, opts.height);
    let radius = opts.thickness as f64 / 2.0;
    let dist = distance_field(&lines, w, h, radius + 2.0);
    let ground_truth = BinaryMap::new(w, h, dist.iter().map(|&d| d <= radius).collect())?;
    let noise = Normal::new(0.0, opts.noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let contrast = opts.foreground - opts.background;
    let data = dist
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            // antialiased stroke over a gentle horizontal shading
            let coverage = (radius + 0.5 - d).clamp(0.0, 1.0);
            let shade = 0.1 * ((k % w) as f64 / w as f64 - 0.5);
            let v = opts.background + shade + contrast * coverage;
            let n = if opts.noise > 0.0 { noise.sample(rng) } else { 0.0 };
            (v + n).clamp(0.0, 1.0)
        })
        .collect();
    Ok(SynthImage {
        image: Raster::new(w, h, data)?,
        ground_truth,
        polylines: lines,
    })
}

fn write_gray8(path: &Path, raster: &Raster) -> Result<()> {
    // values are already in [0, 1]; keep them unstretched
    let bytes: Vec<u8> = raster.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let img = image::GrayImage::from_raw(raster.width() as u32, raster.height() as u32, bytes)
        .expect("buffer matches dimensions");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `train/{images,gt}` and `test/{images,gt}` under `out`, with
/// files named `img_NNN.png`. Images are drawn from one seeded stream, train
/// split first.
pub fn generate_dataset(out: &Path, n_train: usize, n_test: usize, opts: &SynthOptions) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for (split, n) in [("train", n_train), ("test", n_test)] {
        for i in 0..n {
            let s = generate_image(&mut rng, opts)?;
            let name = format!("img_{i:03}.png");
            write_gray8(&out.join(split).join("images").join(&name), &s.image)?;
            write_mask_png(&out.join(split).join("gt").join(&name), &s.ground_truth, "synthetic")?;
        }
    }
    Ok(())
}
