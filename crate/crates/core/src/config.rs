//! Run configuration: flat `key = value` files, per-dataset presets and a
//! stable hash of every output-affecting setting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{default_orientations, FilterBank, Polarity};
use crate::patch::BasisPattern;
use crate::ranking::{PairMargin, TrainOptions};

/// Which channel of a color image becomes the gray input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Channel {
    /// `0.299 R + 0.587 G + 0.114 B`.
    #[default]
    Luma,
    Green,
}

/// Fixed top-rank proportion or calibration on the training set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RhoSetting {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub images: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub orientations: Vec<f64>,
    pub scales: Vec<f64>,
    pub kernel_size: usize,
    pub patch_side: usize,
    pub thickness: usize,
    pub c: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub pair_margin: PairMargin,
    pub standardize: bool,
    /// Patches sampled for training.
    pub samples: usize,
    pub rho: RhoSetting,
    /// Grid stride; `None` uses the thickness.
    pub stride: Option<usize>,
    /// Minimum new vertices per reconstructed path.
    pub min_length: usize,
    pub reconstruct_max_iter: usize,
    pub seed: u64,
    /// Start-vertex seed for the 2-sweep; `None` starts at the lowest id.
    pub sweep_seed: Option<u64>,
    pub polarity: Polarity,
    pub channel: Channel,
    pub graph_threshold: f64,
    pub invert_weights: bool,
    /// Evaluation radius; `None` uses the thickness.
    pub tolerance: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            images: None,
            ground_truth: None,
            orientations: default_orientations(),
            scales: vec![2.0, 4.0, 8.0],
            kernel_size: 21,
            patch_side: 33,
            thickness: 5,
            c: 0.1,
            epsilon: 1e-3,
            max_iter: 1000,
            pair_margin: PairMargin::LossRescaled,
            standardize: true,
            samples: 2000,
            rho: RhoSetting::Auto,
            stride: None,
            min_length: 40,
            reconstruct_max_iter: 10_000,
            seed: 0,
            sweep_seed: None,
            polarity: Polarity::Dark,
            channel: Channel::Luma,
            graph_threshold: 0.0,
            invert_weights: false,
            tolerance: None,
        }
    }
}

pub const PRESETS: [&str; 5] = ["drive", "reca", "aerial", "cracks", "synthetic"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse::<f64>(key, s.trim()))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Settings for a named dataset.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        let cfg = match name.to_ascii_lowercase().as_str() {
            "drive" => Self {
                min_length: 40,
                scales: vec![2.0, 4.0, 8.0],
                thickness: 5,
                channel: Channel::Green,
                polarity: Polarity::Dark,
                ..base
            },
            "reca" => Self {
                min_length: 30,
                scales: vec![4.0, 8.0, 12.0],
                thickness: 5,
                ..base
            },
            "aerial" => Self {
                min_length: 80,
                scales: vec![4.0, 8.0, 12.0],
                thickness: 9,
                kernel_size: 25,
                ..base
            },
            "cracks" => Self {
                min_length: 30,
                scales: vec![2.0, 4.0, 8.0],
                thickness: 3,
                ..base
            },
            "synthetic" => Self {
                min_length: 40,
                scales: vec![2.0, 4.0, 8.0],
                thickness: 5,
                polarity: Polarity::Bright,
                ..base
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "images" => self.images = Some(PathBuf::from(value)),
            "ground_truth" => self.ground_truth = Some(PathBuf::from(value)),
            "orientations" => self.orientations = parse_list(key, value)?,
            "scales" => self.scales = parse_list(key, value)?,
            "kernel_size" => self.kernel_size = parse(key, value)?,
            "patch_side" => self.patch_side = parse(key, value)?,
            "thickness" => self.thickness = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "pair_margin" => {
                self.pair_margin = match value {
                    "loss" => PairMargin::LossRescaled,
                    "unit" => PairMargin::Unit,
                    _ => return Err(Error::Config(format!("pair_margin: expected loss or unit, got '{value}'"))),
                }
            }
            "standardize" => self.standardize = parse_bool(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "rho" => {
                self.rho = match parse_auto::<f64>(key, value)? {
                    None => RhoSetting::Auto,
                    Some(r) => RhoSetting::Fixed(r),
                }
            }
            "stride" => self.stride = parse_auto(key, value)?,
            "min_length" => self.min_length = parse(key, value)?,
            "reconstruct_max_iter" => self.reconstruct_max_iter = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "sweep_seed" => self.sweep_seed = parse_auto(key, value)?,
            "polarity" => {
                self.polarity = match value {
                    "dark" => Polarity::Dark,
                    "bright" => Polarity::Bright,
                    _ => return Err(Error::Config(format!("polarity: expected dark or bright, got '{value}'"))),
                }
            }
            "channel" => {
                self.channel = match value {
                    "luma" => Channel::Luma,
                    "green" => Channel::Green,
                    _ => return Err(Error::Config(format!("channel: expected luma or green, got '{value}'"))),
                }
            }
            "graph_threshold" => self.graph_threshold = parse(key, value)?,
            "invert_weights" => self.invert_weights = parse_bool(key, value)?,
            "tolerance" => self.tolerance = parse_auto(key, value)?,
            "preset" => {
                return Err(Error::Config("preset must be the first line of a config file".into()))
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a config file body. An optional leading `preset = name` line
    /// selects the base settings; later lines override them. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut first = true;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            if key.trim() == "preset" && first {
                cfg = Self::preset(value.trim())?;
            } else {
                cfg.set(key, value)
                    .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            }
            first = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        FilterBank::new(self.orientations.clone(), self.scales.clone(), self.kernel_size)
            .map_err(|e| Error::Config(e.to_string()))?;
        BasisPattern::new(self.patch_side, self.thickness).map_err(|e| Error::Config(e.to_string()))?;
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.to_string())) };
        check(self.c > 0.0 && self.c.is_finite(), "c must be positive")?;
        check(self.epsilon > 0.0, "epsilon must be positive")?;
        check(self.max_iter >= 1, "max_iter must be at least 1")?;
        check(self.min_length >= 1, "min_length must be at least 1")?;
        check(self.stride != Some(0), "stride must be positive")?;
        check(self.graph_threshold >= 0.0, "graph_threshold must be non-negative")?;
        check(self.tolerance.map_or(true, |t| t >= 0.0), "tolerance must be non-negative")?;
        if let RhoSetting::Fixed(r) = self.rho {
            check(r > 0.0 && r <= 1.0, "rho must be in (0, 1]")?;
        }
        Ok(())
    }

    pub fn filter_bank(&self) -> Result<FilterBank> {
        FilterBank::new(self.orientations.clone(), self.scales.clone(), self.kernel_size)
    }

    pub fn basis(&self) -> Result<BasisPattern> {
        BasisPattern::new(self.patch_side, self.thickness)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            c: self.c,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            margin: self.pair_margin,
            standardize: self.standardize,
        }
    }

    pub fn effective_stride(&self) -> usize {
        self.stride.unwrap_or(self.thickness)
    }

    pub fn effective_tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(self.thickness as f64)
    }

    /// Canonical text of every setting except dataset paths, one
    /// `key = value` per line in a fixed order.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let _ = writeln!(s, "orientations = {}", fmt_list(&self.orientations));
        let _ = writeln!(s, "scales = {}", fmt_list(&self.scales));
        let _ = writeln!(s, "kernel_size = {}", self.kernel_size);
        let _ = writeln!(s, "patch_side = {}", self.patch_side);
        let _ = writeln!(s, "thickness = {}", self.thickness);
        let _ = writeln!(s, "c = {}", self.c);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let margin = match self.pair_margin {
            PairMargin::LossRescaled => "loss",
            PairMargin::Unit => "unit",
        };
        let _ = writeln!(s, "pair_margin = {margin}");
        let _ = writeln!(s, "standardize = {}", self.standardize);
        let _ = writeln!(s, "samples = {}", self.samples);
        let rho = match self.rho {
            RhoSetting::Auto => "auto".to_string(),
            RhoSetting::Fixed(r) => r.to_string(),
        };
        let _ = writeln!(s, "rho = {rho}");
        let _ = writeln!(s, "stride = {}", opt(self.stride.map(|v| v.to_string())));
        let _ = writeln!(s, "min_length = {}", self.min_length);
        let _ = writeln!(s, "reconstruct_max_iter = {}", self.reconstruct_max_iter);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "sweep_seed = {}", self.sweep_seed.map_or("none".into(), |v| v.to_string()));
        let polarity = match self.polarity {
            Polarity::Dark => "dark",
            Polarity::Bright => "bright",
        };
        let _ = writeln!(s, "polarity = {polarity}");
        let channel = match self.channel {
            Channel::Luma => "luma",
            Channel::Green => "green",
        };
        let _ = writeln!(s, "channel = {channel}");
        let _ = writeln!(s, "graph_threshold = {}", self.graph_threshold);
        let _ = writeln!(s, "invert_weights = {}", self.invert_weights);
        let _ = writeln!(s, "tolerance = {}", opt(self.tolerance.map(|v| v.to_string())));
        s
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }
}
