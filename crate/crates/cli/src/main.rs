//! `linenet` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 internal error.
//! Log verbosity comes from `LINENET_LOG` (`error`, `warn`, `info`, `debug`).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use linenet_core::config::{RhoSetting, RunConfig};
use linenet_core::eval::{mean_row, metrics_csv, metrics_table, tolerant_f1, MetricsRow};
use linenet_core::pipeline::{self, Dataset};
use linenet_core::synth::{generate_dataset, SynthOptions};
use linenet_core::{io, Error};

#[derive(Parser, Debug)]
#[command(name = "linenet", version, about = "Curvilinear structure reconstruction")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset preset: drive, reca, aerial, cracks, synthetic.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Override one setting, e.g. `--set rho=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the feature map of each image as a CFM1 raster.
    Features {
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write an 8-bit PNG preview.
        #[arg(long)]
        png: bool,
    },
    /// Sample patches, train the ranking model and calibrate rho.
    Train {
        /// Training images; defaults to the `images` config key.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Ground-truth masks; defaults to the `ground_truth` config key.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Model file; the sidecar goes next to it with a `.txt` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write rank scores, the top-rank mask and the structured score map.
    Infer {
        #[arg(long)]
        model: PathBuf,
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract paths and write JSON, mask and overlay per image.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted masks against ground truth.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        gt: Vec<PathBuf>,
        /// Match radius; defaults to the configured tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Accept predictions written under different configs.
        #[arg(long)]
        force: bool,
        /// Write CSV here as well as printing the table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on one split, then reconstruct and evaluate another.
    Pipeline {
        /// Directory with `images/` and `gt/`.
        #[arg(long)]
        train: PathBuf,
        /// Directory with `images/` and `gt/`.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a labelled synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        train: usize,
        #[arg(long, default_value_t = 4)]
        test: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        thickness: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Bad arguments or input that the user can fix.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::MissingVertex(_) | Error::EmptyGraph => 3,
                _ => 2,
            };
        }
    }
    3
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(_), Some(_)) => return Err(usage("--config and --preset are mutually exclusive")),
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn require_inputs(paths: &[PathBuf]) -> Result<()> {
    if paths.is_empty() {
        return Err(usage("no input images given"));
    }
    for p in paths {
        if !p.is_file() {
            return Err(usage(format!("{}: no such file", p.display())));
        }
    }
    Ok(())
}

/// Loads a model and its sidecar, adopting the model's patch geometry and,
/// under `rho = auto`, the calibrated proportion.
fn load_model(path: &Path, cfg: &mut RunConfig) -> Result<(io::ModelFile, f64)> {
    if !path.is_file() {
        return Err(usage(format!("{}: no such model file", path.display())));
    }
    let file = io::read_model(path)?;
    cfg.patch_side = file.patch_side;
    cfg.thickness = file.thickness;
    cfg.orientations = file.orientations.clone();
    let rho = match cfg.rho {
        RhoSetting::Fixed(r) => r,
        RhoSetting::Auto => {
            let side = io::sidecar_path(path);
            let sidecar = io::Sidecar::read(&side)
                .with_context(|| "rho = auto needs the model sidecar")?;
            sidecar
                .get("rho")
                .ok_or_else(|| usage(format!("{}: no rho entry", side.display())))?
                .parse()
                .map_err(|_| usage(format!("{}: rho is not a number", side.display())))?
        }
    };
    if file.config_hash.is_some() && file.config_hash.as_deref() != Some(cfg.hash().as_str()) {
        log::warn!("model was trained under a different config");
    }
    Ok((file, rho))
}

fn dataset_from_split(dir: &Path) -> Result<Dataset> {
    let (images, gt) = (dir.join("images"), dir.join("gt"));
    if !images.is_dir() || !gt.is_dir() {
        return Err(usage(format!("{} must contain images/ and gt/", dir.display())));
    }
    Ok(pipeline::load_dataset(&images, &gt)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.config)?;
    let hash = cfg.hash();
    match cli.command {
        Command::Features { images, out, png } => {
            require_inputs(&images)?;
            for path in &images {
                let phi = pipeline::load_features(path, &cfg)?;
                let stem = file_stem(path);
                io::write_raster(&out.join(format!("{stem}.cfm")), phi.raster(), &hash)?;
                if png {
                    io::write_gray_png(&out.join(format!("{stem}.png")), phi.raster(), &hash)?;
                }
                log::info!("{}: features written", path.display());
            }
        }
        Command::Train { images, gt, out } => {
            let images = images
                .or(cfg.images.clone())
                .ok_or_else(|| usage("no training images: pass --images or set images"))?;
            let gt = gt
                .or(cfg.ground_truth.clone())
                .ok_or_else(|| usage("no ground truth: pass --gt or set ground_truth"))?;
            if !gt.is_dir() {
                return Err(usage(format!("{}: ground-truth directory not found", gt.display())));
            }
            if cfg.samples < 2 {
                return Err(usage(format!("insufficient samples: need at least 2, configured {}", cfg.samples)));
            }
            let data = pipeline::load_dataset(&images, &gt)?;
            let items = data
                .images
                .iter()
                .zip(&data.ground_truth)
                .map(|(i, g)| Ok((pipeline::load_features(i, &cfg)?, io::read_mask(g)?)))
                .collect::<Result<Vec<_>>>()?;
            let outcome = pipeline::train_on(&items, &cfg)?;
            io::write_model(
                &out,
                &io::ModelFile {
                    model: outcome.model.clone(),
                    patch_side: cfg.patch_side,
                    thickness: cfg.thickness,
                    orientations: cfg.orientations.clone(),
                    config_hash: Some(hash.clone()),
                },
                &hash,
            )?;
            let sidecar = io::Sidecar::from_stats(&outcome.model.stats, outcome.samples, outcome.rho, &hash);
            sidecar.write(&io::sidecar_path(&out))?;
            println!(
                "trained on {} samples ({} iterations, slack {:.3e}), rho {}",
                outcome.samples, outcome.model.stats.iterations, outcome.model.stats.slack, outcome.rho
            );
        }
        Command::Infer { model, images, out } => {
            require_inputs(&images)?;
            let (file, rho) = load_model(&model, &mut cfg)?;
            let hash = cfg.hash();
            for path in &images {
                let phi = pipeline::load_features(path, &cfg)?;
                let result = pipeline::infer_image(&phi, &file.model, rho, &cfg)?;
                let stem = file_stem(path);
                if let (Some(scores), Some(selected)) = (&result.scores, &result.selected) {
                    io::write_raster(&out.join(format!("{stem}_scores.cfm")), &scores.to_raster(), &hash)?;
                    io::write_mask_png(&out.join(format!("{stem}_selected.png")), &selected.mask, &hash)?;
                }
                io::write_raster(&out.join(format!("{stem}_pi.cfm")), result.structured.raster(), &hash)?;
            }
        }
        Command::Reconstruct { model, images, out } => {
            require_inputs(&images)?;
            let (file, rho) = load_model(&model, &mut cfg)?;
            let hash = cfg.hash();
            for path in &images {
                let img = io::read_gray(path, cfg.channel)?;
                let phi = pipeline::compute_features(&img, &cfg)?;
                let result = pipeline::infer_image(&phi, &file.model, rho, &cfg)?;
                let rec = &result.reconstruction;
                let stem = file_stem(path);
                io::ReconstructionRecord::new(rec, rho, &hash).write(&out.join(format!("{stem}.json")))?;
                io::write_mask_png(&out.join(format!("{stem}_mask.png")), &rec.vertex_set(), &hash)?;
                io::write_overlay_png(&out.join(format!("{stem}_overlay.png")), &img, rec, &hash)?;
                println!("{}: {} paths", path.display(), rec.paths.len());
            }
        }
        Command::Eval { pred, gt, tolerance, force, out } => {
            if pred.len() != gt.len() {
                return Err(usage(format!("{} predictions but {} ground-truth files", pred.len(), gt.len())));
            }
            require_inputs(&pred)?;
            require_inputs(&gt)?;
            let hashes: BTreeSet<Option<String>> = pred
                .iter()
                .map(|p| io::read_png_hash(p).unwrap_or(None))
                .collect();
            if hashes.len() > 1 && !force {
                return Err(usage("predictions come from different configs (use --force to compare anyway)"));
            }
            let tol = tolerance.unwrap_or(cfg.effective_tolerance());
            let rows = pred
                .iter()
                .zip(&gt)
                .map(|(p, g)| {
                    let pm = io::read_mask(p)?;
                    let report = tolerant_f1(&pm, &io::read_mask(g)?, tol)?;
                    Ok(MetricsRow::new(file_stem(p), &report, &pm))
                })
                .collect::<Result<Vec<_>>>()?;
            print!("{}", metrics_table(&rows));
            if let Some(path) = out {
                std::fs::write(&path, metrics_csv(&rows)).with_context(|| path.display().to_string())?;
            }
            log::info!("mean F1 {:.4}", mean_row(&rows).f1);
        }
        Command::Pipeline { train, test, out } => {
            let train_set = dataset_from_split(&train)?;
            let test_set = dataset_from_split(&test)?;
            if cfg.samples < 2 {
                return Err(usage(format!("insufficient samples: need at least 2, configured {}", cfg.samples)));
            }
            let report = pipeline::run_pipeline(&train_set, &test_set, &cfg, Some(&out))?;
            print!("{}", metrics_table(&report.rows));
            println!("rho {}", report.rho);
            for t in &report.timings {
                println!("{}: {:.2?}", t.stage, t.elapsed);
            }
        }
        Command::Synth { out, train, test, size, thickness, noise, seed } => {
            if train + test == 0 {
                bail!(UsageError("nothing to generate".into()));
            }
            let opts = SynthOptions {
                width: size,
                height: size,
                thickness,
                noise,
                seed,
                ..Default::default()
            };
            generate_dataset(&out, train, test, &opts)?;
            println!("wrote {train} train and {test} test images to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LINENET_LOG", "warn")).init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
        Err(_) => ExitCode::from(3),
    }
}
