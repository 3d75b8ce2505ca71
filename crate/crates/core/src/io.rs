//! File formats: gray images and masks, float rasters (`CFM1`), ranking
//! models (`CRSV`) with a text sidecar, reconstruction JSON and overlays.
//!
//! Every writer takes the run's config hash and embeds it: a trailer for
//! the binary formats, a `tEXt` chunk for PNG, a field for JSON and a line
//! for the sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::config::Channel;
use crate::error::{Error, Result};
use crate::graphrec::Reconstruction;
use crate::ranking::{RankingModel, Standardizer, TrainStats};
use crate::raster::{BinaryMap, Raster};

pub const RASTER_MAGIC: &[u8; 4] = b"CFM1";
pub const MODEL_MAGIC: &[u8; 4] = b"CRSV";
pub const MODEL_VERSION: u32 = 1;
const HASH_MAGIC: &[u8; 4] = b"HASH";
/// `tEXt` keyword carrying the config hash in written PNGs.
pub const PNG_HASH_KEY: &str = "config_hash";

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Reads an 8- or 16-bit image as intensities in `[0, 1]`. Color images
/// become luma or their green channel.
pub fn read_gray(path: &Path, channel: Channel) -> Result<Raster> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if img.color().has_color() {
        img.to_rgb32f()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f64::from);
                match channel {
                    Channel::Luma => 0.299 * r + 0.587 * g + 0.114 * b,
                    Channel::Green => g,
                }
            })
            .collect()
    } else {
        img.to_luma32f().pixels().map(|p| f64::from(p.0[0])).collect()
    };
    Raster::new(w, h, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a mask; any nonzero channel marks structure.
pub fn read_mask(path: &Path) -> Result<BinaryMap> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mask = img
        .to_rgb32f()
        .pixels()
        .map(|p| p.0.iter().any(|&v| v > 0.0))
        .collect();
    BinaryMap::new(w, h, mask).map_err(|e| Error::format(path, e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
    hash: &str,
) -> Result<()> {
    let png_err = |e: png::EncodingError| Error::format(path, e.to_string());
    let out = create(path)?;
    let mut enc = png::Encoder::new(out, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    enc.add_text_chunk(PNG_HASH_KEY.into(), hash.into()).map_err(png_err)?;
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(data).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Writes a mask as 8-bit gray, structure 255.
pub fn write_mask_png(path: &Path, mask: &BinaryMap, hash: &str) -> Result<()> {
    let data: Vec<u8> = mask.mask().iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_png(path, mask.width(), mask.height(), png::ColorType::Grayscale, &data, hash)
}

/// Writes a raster rescaled to `[0, 255]` for inspection.
pub fn write_gray_png(path: &Path, raster: &Raster, hash: &str) -> Result<()> {
    let data: Vec<u8> = raster
        .unit_range()
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_png(path, raster.width(), raster.height(), png::ColorType::Grayscale, &data, hash)
}

const PALETTE: [[u8; 3]; 6] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
];

/// Color for a one-based extraction round.
pub fn iteration_color(iteration: usize) -> [u8; 3] {
    PALETTE[(iteration.max(1) - 1) % PALETTE.len()]
}

/// Paths drawn over a dimmed gray background, one color per round.
pub fn render_overlay(background: &Raster, rec: &Reconstruction) -> Result<Vec<u8>> {
    if background.width() != rec.width || background.height() != rec.height {
        return Err(Error::DimensionMismatch {
            expected: background.len(),
            actual: rec.width * rec.height,
        });
    }
    let mut rgb: Vec<u8> = background
        .unit_range()
        .data()
        .iter()
        .flat_map(|&v| {
            let g = (v * 160.0).round().clamp(0.0, 255.0) as u8;
            [g, g, g]
        })
        .collect();
    for p in &rec.paths {
        let color = iteration_color(p.iteration);
        for px in &p.path.vertices {
            let k = 3 * px.index(rec.width);
            rgb[k..k + 3].copy_from_slice(&color);
        }
    }
    Ok(rgb)
}

pub fn write_overlay_png(path: &Path, background: &Raster, rec: &Reconstruction, hash: &str) -> Result<()> {
    let rgb = render_overlay(background, rec)?;
    write_png(path, rec.width, rec.height, png::ColorType::Rgb, &rgb, hash)
}

/// Config hash stored in a PNG written by this crate, if any.
pub fn read_png_hash(path: &Path) -> Result<Option<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == PNG_HASH_KEY)
        .map(|t| t.text.clone()))
}

fn write_hash_trailer(out: &mut impl Write, hash: &str) -> std::io::Result<()> {
    out.write_all(HASH_MAGIC)?;
    out.write_all(&(hash.len() as u32).to_le_bytes())?;
    out.write_all(hash.as_bytes())
}

/// Byte cursor over a file held in memory.
struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        if self.take(4)? != expected {
            return Err(Error::format(
                self.path,
                format!("bad magic, expected {}", String::from_utf8_lossy(expected)),
            ));
        }
        Ok(())
    }

    /// Optional hash trailer; anything else left over is an error.
    fn trailer(&mut self) -> Result<Option<String>> {
        if self.pos == self.bytes.len() {
            return Ok(None);
        }
        self.magic(HASH_MAGIC)?;
        let n = self.u32()? as usize;
        let s = std::str::from_utf8(self.take(n)?)
            .map_err(|_| Error::format(self.path, "config hash is not UTF-8"))?
            .to_string();
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.path, "trailing bytes after config hash"));
        }
        Ok(Some(s))
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

/// Writes a float raster: `CFM1`, u32 width, u32 height, u32 reserved (0),
/// then width*height little-endian f32 values, then the hash trailer.
pub fn write_raster(path: &Path, raster: &Raster, hash: &str) -> Result<()> {
    let mut out = create(path)?;
    let mut body = || -> std::io::Result<()> {
        out.write_all(RASTER_MAGIC)?;
        out.write_all(&(raster.width() as u32).to_le_bytes())?;
        out.write_all(&(raster.height() as u32).to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        for &v in raster.data() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
        write_hash_trailer(&mut out, hash)?;
        out.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Reads a `CFM1` raster and its config hash, if present.
pub fn read_raster(path: &Path) -> Result<(Raster, Option<String>)> {
    let bytes = read_all(path)?;
    let mut c = Cursor { path, bytes: &bytes, pos: 0 };
    c.magic(RASTER_MAGIC)?;
    let w = c.u32()? as usize;
    let h = c.u32()? as usize;
    let _reserved = c.u32()?;
    let data = (0..w * h).map(|_| c.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
    let hash = c.trailer()?;
    let raster = Raster::new(w, h, data).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((raster, hash))
}

/// A model together with the patch geometry it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: RankingModel,
    pub patch_side: usize,
    pub thickness: usize,
    pub orientations: Vec<f64>,
    pub config_hash: Option<String>,
}

/// Writes `CRSV`, u32 version, u32 N, f64 C, f64[N] weights, f64[N] means,
/// f64[N] stds, u32 side, u32 thickness, u32 angle count, f64 angles, then
/// the hash trailer.
pub fn write_model(path: &Path, file: &ModelFile, hash: &str) -> Result<()> {
    let m = &file.model;
    let mut out = create(path)?;
    let mut body = || -> std::io::Result<()> {
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        out.write_all(&(m.dim() as u32).to_le_bytes())?;
        out.write_all(&m.c.to_le_bytes())?;
        for v in m.weights.iter().chain(&m.standardizer.mean).chain(&m.standardizer.std) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&(file.patch_side as u32).to_le_bytes())?;
        out.write_all(&(file.thickness as u32).to_le_bytes())?;
        out.write_all(&(file.orientations.len() as u32).to_le_bytes())?;
        for a in &file.orientations {
            out.write_all(&a.to_le_bytes())?;
        }
        write_hash_trailer(&mut out, hash)?;
        out.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let bytes = read_all(path)?;
    let mut c = Cursor { path, bytes: &bytes, pos: 0 };
    c.magic(MODEL_MAGIC)?;
    let version = c.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::format(path, format!("unsupported model version {version}")));
    }
    let n = c.u32()? as usize;
    let cost = c.f64()?;
    let weights = c.f64s(n)?;
    let mean = c.f64s(n)?;
    let std = c.f64s(n)?;
    let patch_side = c.u32()? as usize;
    let thickness = c.u32()? as usize;
    let n_angles = c.u32()? as usize;
    let orientations = c.f64s(n_angles)?;
    let config_hash = c.trailer()?;
    let model = RankingModel::new(weights, cost, Standardizer { mean, std })
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(ModelFile {
        model,
        patch_side,
        thickness,
        orientations,
        config_hash,
    })
}

/// Ordered `key = value` lines written next to a model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sidecar {
    pub entries: Vec<(String, String)>,
}

impl Sidecar {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn from_stats(stats: &TrainStats, samples: usize, rho: f64, hash: &str) -> Self {
        let mut s = Self::default();
        s.push("config_hash", hash);
        s.push("samples", samples);
        s.push("pairs", stats.pairs);
        s.push("iterations", stats.iterations);
        s.push("converged", stats.converged);
        s.push("constraints", stats.constraints);
        s.push("slack", stats.slack);
        s.push("objective", stats.objective);
        s.push("lower_bound", stats.lower_bound);
        s.push("rho", rho);
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text: String = self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let mut out = create(path)?;
        out.write_all(text.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Self::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("expected key = value, got '{line}'")))?;
            s.push(k.trim(), v.trim());
        }
        Ok(s)
    }
}

/// Sidecar path for a model file: the same path with a `.txt` extension.
pub fn sidecar_path(model_path: &Path) -> std::path::PathBuf {
    model_path.with_extension("txt")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub iteration: usize,
    /// `[row, col]` pairs in path order.
    pub vertices: Vec<[usize; 2]>,
    pub weighted_length: f64,
    pub initial_length: f64,
    pub new_vertex_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRecord {
    pub config_hash: String,
    pub width: usize,
    pub height: usize,
    pub rho: f64,
    pub paths: Vec<PathRecord>,
}

impl ReconstructionRecord {
    pub fn new(rec: &Reconstruction, rho: f64, hash: &str) -> Self {
        Self {
            config_hash: hash.to_string(),
            width: rec.width,
            height: rec.height,
            rho,
            paths: rec
                .paths
                .iter()
                .map(|p| PathRecord {
                    iteration: p.iteration,
                    vertices: p.path.vertices.iter().map(|v| [v.row, v.col]).collect(),
                    weighted_length: p.path.weighted_length,
                    initial_length: p.initial_length,
                    new_vertex_count: p.path.new_vertex_count,
                })
                .collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, self)
            .map_err(|e| Error::format(path, e.to_string()))?;
        out.write_all(b"\n")
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphrec::{build_graph, reconstruct, GraphOptions, ReconstructOptions};
    use crate::raster::Pixel;

    #[test]
    fn raster_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.cfm");
        let r = Raster::from_fn(5, 3, |r, c| r as f64 * 0.5 - c as f64);
        write_raster(&p, &r, "abc").unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"CFM1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0);
        let (back, hash) = read_raster(&p).unwrap();
        assert_eq!(back, r);
        assert_eq!(hash.as_deref(), Some("abc"));

        std::fs::write(&p, &bytes[..16 + 4 * 15]).unwrap();
        assert_eq!(read_raster(&p).unwrap().1, None);
        std::fs::write(&p, &bytes[..20]).unwrap();
        assert!(matches!(read_raster(&p), Err(Error::Format { .. })));
        std::fs::write(&p, b"XXXX").unwrap();
        assert!(read_raster(&p).is_err());
    }

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.crsv");
        let model = RankingModel::new(
            vec![1.0, -2.5, 0.25],
            0.1,
            Standardizer { mean: vec![0.1, 0.2, 0.3], std: vec![1.0, 2.0, 3.0] },
        )
        .unwrap();
        let file = ModelFile {
            model,
            patch_side: 3,
            thickness: 1,
            orientations: vec![0.0, 90.0],
            config_hash: Some("h".into()),
        };
        write_model(&p, &file, "h").unwrap();
        assert_eq!(read_model(&p).unwrap(), file);
        assert!(read_model(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        let s = Sidecar::from_stats(&TrainStats::default(), 10, 0.02, "h");
        s.write(&p).unwrap();
        let back = Sidecar::read(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.get("rho"), Some("0.02"));
        assert_eq!(sidecar_path(Path::new("x/m.crsv")), Path::new("x/m.txt"));
    }

    #[test]
    fn masks_and_hash_chunk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = BinaryMap::from_pixels(4, 3, [Pixel::new(0, 1), Pixel::new(2, 3)]);
        write_mask_png(&p, &m, "deadbeef").unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);
        assert_eq!(read_png_hash(&p).unwrap().as_deref(), Some("deadbeef"));
        let g = read_gray(&p, Channel::Luma).unwrap();
        assert_eq!(g.get(0, 1), 1.0);
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn color_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let mut img = image::RgbImage::new(2, 1);
        img.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        img.put_pixel(1, 0, image::Rgb([0, 255, 0]));
        img.save(&p).unwrap();
        let luma = read_gray(&p, Channel::Luma).unwrap();
        assert!((luma.get(0, 0) - 0.299).abs() < 1e-6);
        assert!((luma.get(0, 1) - 0.587).abs() < 1e-6);
        let green = read_gray(&p, Channel::Green).unwrap();
        assert_eq!(green.data(), &[0.0, 1.0]);
    }

    #[test]
    fn sixteen_bit_gray() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g16.png");
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![0u16, 65535]).unwrap();
        img.save(&p).unwrap();
        assert_eq!(read_gray(&p, Channel::Luma).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn reconstruction_json_and_overlay() {
        let dir = tempfile::tempdir().unwrap();
        let pi = Raster::from_fn(20, 3, |r, _| if r == 1 { 1.0 } else { 0.0 });
        let g = build_graph(&pi, &GraphOptions::default()).unwrap();
        let rec = reconstruct(&g, &ReconstructOptions { min_length: 5, ..Default::default() }).unwrap();
        let rec_file = ReconstructionRecord::new(&rec, 0.01, "h");
        let p = dir.path().join("r.json");
        rec_file.write(&p).unwrap();
        let back = ReconstructionRecord::read(&p).unwrap();
        assert_eq!(back, rec_file);
        assert_eq!(back.paths[0].vertices.len(), 20);

        let rgb = render_overlay(&pi, &rec).unwrap();
        assert_eq!(&rgb[3 * 20..3 * 21], &iteration_color(1));
        let o = dir.path().join("o.png");
        write_overlay_png(&o, &pi, &rec, "h").unwrap();
        assert_eq!(read_png_hash(&o).unwrap().as_deref(), Some("h"));
    }
}
