//! Stage orchestration: dataset discovery, feature computation, balanced
//! patch sampling, training with proportion calibration, per-image
//! reconstruction and evaluation.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{RhoSetting, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{mean_row, metrics_csv, tolerant_f1, MetricsRow};
use crate::graphrec::{build_graph, reconstruct, GraphOptions, ReconstructOptions, Reconstruction};
use crate::imaging::{feature_map, normalize_image, FeatureMap};
use crate::io;
use crate::patch::{estimate_orientation, extract_rotated_patch, feature_vector, patch_loss, BasisPattern};
use crate::ranking::{train, RankingModel, Sample, TrainingSet};
use crate::raster::{BinaryMap, GrayImage, Pixel, Raster};
use crate::scoremap::{
    calibrate_rho, infer_scores, synthesize, top_rank_binary_map, RankScoreMap, StructuredScoreMap,
    TopRankBinaryMap,
};

/// Feature maps whose raw range is below this are treated as flat.
const FLAT_RANGE: f64 = 1e-9;

const IMAGE_EXTENSIONS: [&str; 8] = ["png", "pgm", "pnm", "ppm", "tif", "tiff", "gif", "pbm"];

/// Images paired with ground truth by file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub images: Vec<PathBuf>,
    pub ground_truth: Vec<PathBuf>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Image files in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Pairs every image with the ground-truth file whose stem matches, or
/// whose stem starts with the image's numeric prefix (`21_training` with
/// `21_manual1`).
pub fn load_dataset(images_dir: &Path, gt_dir: &Path) -> Result<Dataset> {
    let images = list_images(images_dir)?;
    if images.is_empty() {
        return Err(Error::InvalidInput(format!("no images in {}", images_dir.display())));
    }
    let gts = list_images(gt_dir)?;
    let mut out = Dataset {
        names: Vec::new(),
        images: Vec::new(),
        ground_truth: Vec::new(),
    };
    let prefix = |p: &Path| {
        let s = stem(p);
        s.split(['_', '-']).next().unwrap_or(&s).to_string()
    };
    for img in &images {
        let name = stem(img);
        let pre = prefix(img);
        // prefix fallback only when the prefix identifies one image and one file
        let unique = |files: &[PathBuf]| files.iter().filter(|g| prefix(g) == pre).count() == 1;
        let gt = gts
            .iter()
            .find(|g| stem(g) == name)
            .or_else(|| {
                (unique(&images) && unique(&gts))
                    .then(|| gts.iter().find(|g| prefix(g) == pre))
                    .flatten()
            })
            .ok_or_else(|| Error::InvalidInput(format!("no ground truth for {}", img.display())))?;
        out.ground_truth.push(gt.clone());
        out.images.push(img.clone());
        out.names.push(name);
    }
    Ok(out)
}

/// Unit-range feature map of an image under the configured polarity and
/// filter bank. A flat response (e.g. a constant image) gives all zeros.
pub fn compute_features(img: &GrayImage, cfg: &RunConfig) -> Result<FeatureMap> {
    let normalized = normalize_image(img)?.with_polarity(cfg.polarity);
    let phi = feature_map(&normalized, &cfg.filter_bank()?);
    let (lo, hi) = phi.min_max();
    if hi - lo < FLAT_RANGE {
        return Ok(FeatureMap::from_raster(Raster::filled(img.width(), img.height(), 0.0)));
    }
    Ok(phi.unit_range())
}

pub fn load_features(path: &Path, cfg: &RunConfig) -> Result<FeatureMap> {
    compute_features(&io::read_gray(path, cfg.channel)?, cfg)
}

/// Feature vector and loss of one sampled location.
pub fn labelled_sample(
    feature: &FeatureMap,
    gt: &Raster,
    center: Pixel,
    basis: &BasisPattern,
    angles: &[f64],
) -> Result<Sample> {
    let angle = estimate_orientation(feature.raster(), center, basis, angles)?;
    let z = feature_vector(&extract_rotated_patch(feature.raster(), center, angle, basis.side())?, basis)?;
    let loss = patch_loss(&extract_rotated_patch(gt, center, angle, basis.side())?, basis)?;
    Ok(Sample { z: z.values, loss })
}

/// Draws `count` locations, half on structure and half off (pooled over all
/// images, without replacement), and labels each with its patch loss.
pub fn sample_training_set(
    items: &[(FeatureMap, BinaryMap)],
    count: usize,
    basis: &BasisPattern,
    angles: &[f64],
    seed: u64,
) -> Result<TrainingSet> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!(
            "insufficient samples: need at least 2, configured {count}"
        )));
    }
    for (f, gt) in items {
        if f.width() != gt.width() || f.height() != gt.height() {
            return Err(Error::DimensionMismatch {
                expected: f.len(),
                actual: gt.len(),
            });
        }
    }
    let mut on = Vec::new();
    let mut off = Vec::new();
    for (i, (_, gt)) in items.iter().enumerate() {
        for (k, &m) in gt.mask().iter().enumerate() {
            if m { on.push((i, k)) } else { off.push((i, k)) }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let want_on = (count / 2).min(on.len());
    let want_off = (count - want_on).min(off.len());
    let mut picks: Vec<(usize, usize)> = sample(&mut rng, on.len(), want_on).into_iter().map(|j| on[j]).collect();
    picks.extend(sample(&mut rng, off.len(), want_off).into_iter().map(|j| off[j]));
    if picks.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "insufficient samples: only {} locations available",
            picks.len()
        )));
    }
    let gt_rasters: Vec<Raster> = items.iter().map(|(_, gt)| gt.to_raster()).collect();
    let samples = picks
        .par_iter()
        .map(|&(i, k)| {
            let w = items[i].0.width();
            labelled_sample(&items[i].0, &gt_rasters[i], Pixel::new(k / w, k % w), basis, angles)
        })
        .collect::<Result<Vec<_>>>()?;
    TrainingSet::new(samples)
}

/// Trained model plus the top-rank proportion used at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RankingModel,
    pub rho: f64,
    pub samples: usize,
}

/// Samples, trains and (with `rho = auto`) calibrates the proportion on
/// the training images.
pub fn train_on(items: &[(FeatureMap, BinaryMap)], cfg: &RunConfig) -> Result<TrainOutcome> {
    if items.is_empty() {
        return Err(Error::InvalidInput("no training images".into()));
    }
    let basis = cfg.basis()?;
    let data = sample_training_set(items, cfg.samples, &basis, &cfg.orientations, cfg.seed)?;
    let samples = data.len();
    let model = train(&data, &cfg.train_options())?;
    let rho = match cfg.rho {
        RhoSetting::Fixed(r) => r,
        RhoSetting::Auto => {
            let stride = cfg.effective_stride();
            let scores = items
                .iter()
                .map(|(f, _)| infer_scores(f, &model, &basis, &cfg.orientations, stride))
                .collect::<Result<Vec<_>>>()?;
            let gts: Vec<BinaryMap> = items.iter().map(|(_, g)| g.clone()).collect();
            calibrate_rho(&scores, &gts, cfg.effective_tolerance())?
        }
    };
    Ok(TrainOutcome { model, rho, samples })
}

/// Intermediate and final products for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutput {
    pub scores: Option<RankScoreMap>,
    pub selected: Option<TopRankBinaryMap>,
    pub structured: StructuredScoreMap,
    pub reconstruction: Reconstruction,
}

/// Scores, selects, synthesizes and reconstructs one image.
pub fn infer_image(feature: &FeatureMap, model: &RankingModel, rho: f64, cfg: &RunConfig) -> Result<ImageOutput> {
    let basis = cfg.basis()?;
    let (w, h) = (feature.width(), feature.height());
    let empty = || -> Result<ImageOutput> {
        Ok(ImageOutput {
            scores: None,
            selected: None,
            structured: StructuredScoreMap::from_raster(Raster::filled(w, h, 0.0))?,
            reconstruction: Reconstruction::empty(w, h),
        })
    };
    if model.dim() != basis.popcount() {
        return Err(Error::DimensionMismatch {
            expected: basis.popcount(),
            actual: model.dim(),
        });
    }
    if feature.min_max().1 <= 0.0 {
        log::info!("flat feature map; no structure to reconstruct");
        return empty();
    }
    let scores = infer_scores(feature, model, &basis, &cfg.orientations, cfg.effective_stride())?;
    let selected = top_rank_binary_map(&scores, rho)?;
    if selected.selected.is_empty() {
        log::warn!("rho {rho} keeps no grid point of a {w}x{h} image");
        return empty();
    }
    let structured = synthesize(&scores, &selected, &basis)?;
    let graph = build_graph(
        structured.raster(),
        &GraphOptions {
            threshold: cfg.graph_threshold,
            invert_weights: cfg.invert_weights,
        },
    )?;
    let reconstruction = reconstruct(
        &graph,
        &ReconstructOptions {
            min_length: cfg.min_length,
            max_iter: cfg.reconstruct_max_iter,
            seed: cfg.sweep_seed,
        },
    )?;
    Ok(ImageOutput {
        scores: Some(scores),
        selected: Some(selected),
        structured,
        reconstruction,
    })
}

/// Wall-clock time of one named stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub rows: Vec<MetricsRow>,
    pub mean: MetricsRow,
    pub rho: f64,
    pub model: RankingModel,
    pub timings: Vec<StageTiming>,
}

fn load_pairs(data: &Dataset, cfg: &RunConfig) -> Result<Vec<(FeatureMap, BinaryMap)>> {
    data.images
        .par_iter()
        .zip(&data.ground_truth)
        .map(|(img, gt)| {
            let f = load_features(img, cfg)?;
            let g = io::read_mask(gt)?;
            if (g.width(), g.height()) != (f.width(), f.height()) {
                return Err(Error::format(
                    gt,
                    format!("ground truth is {}x{}, image is {}x{}", g.width(), g.height(), f.width(), f.height()),
                ));
            }
            Ok((f, g))
        })
        .collect()
}

/// Full run: train on `train`, reconstruct and score every `test` image.
/// With `out`, writes the model and sidecar, per-image JSON, mask and
/// overlay, and `metrics.csv`.
pub fn run_pipeline(train_set: &Dataset, test_set: &Dataset, cfg: &RunConfig, out: Option<&Path>) -> Result<PipelineReport> {
    let hash = cfg.hash();
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &'static str, timings: &mut Vec<StageTiming>| {
        let elapsed = clock.elapsed();
        log::info!("{stage}: {:.2?}", elapsed);
        timings.push(StageTiming { stage, elapsed });
        clock = Instant::now();
    };

    let train_items = load_pairs(train_set, cfg)?;
    lap("features", &mut timings);
    let outcome = train_on(&train_items, cfg)?;
    log::info!(
        "trained on {} samples in {} iterations, rho {}",
        outcome.samples,
        outcome.model.stats.iterations,
        outcome.rho
    );
    lap("train", &mut timings);
    drop(train_items);

    if let Some(dir) = out {
        let model_path = dir.join("model.crsv");
        io::write_model(
            &model_path,
            &io::ModelFile {
                model: outcome.model.clone(),
                patch_side: cfg.patch_side,
                thickness: cfg.thickness,
                orientations: cfg.orientations.clone(),
                config_hash: Some(hash.clone()),
            },
            &hash,
        )?;
        io::Sidecar::from_stats(&outcome.model.stats, outcome.samples, outcome.rho, &hash)
            .write(&io::sidecar_path(&model_path))?;
    }

    let rows = test_set
        .images
        .iter()
        .zip(&test_set.ground_truth)
        .zip(&test_set.names)
        .map(|((img_path, gt_path), name)| -> Result<MetricsRow> {
            let img = io::read_gray(img_path, cfg.channel)?;
            let feature = compute_features(&img, cfg)?;
            let gt = io::read_mask(gt_path)?;
            let result = infer_image(&feature, &outcome.model, outcome.rho, cfg)?;
            let pred = result.reconstruction.vertex_set();
            let report = tolerant_f1(&pred, &gt, cfg.effective_tolerance())?;
            if let Some(dir) = out {
                io::ReconstructionRecord::new(&result.reconstruction, outcome.rho, &hash)
                    .write(&dir.join(format!("{name}.json")))?;
                io::write_mask_png(&dir.join(format!("{name}_mask.png")), &pred, &hash)?;
                io::write_overlay_png(&dir.join(format!("{name}_overlay.png")), &img, &result.reconstruction, &hash)?;
            }
            log::info!("{name}: {} paths, F1 {:.3}", result.reconstruction.paths.len(), report.f1);
            Ok(MetricsRow::new(name.clone(), &report, &pred))
        })
        .collect::<Result<Vec<_>>>()?;
    lap("reconstruct", &mut timings);

    if let Some(dir) = out {
        let path = dir.join("metrics.csv");
        std::fs::write(&path, metrics_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(PipelineReport {
        mean: mean_row(&rows),
        rows,
        rho: outcome.rho,
        model: outcome.model,
        timings,
    })
}
