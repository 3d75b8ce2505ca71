//! Reconstruction of tree-like curvilinear structures (vessels, roads,
//! cracks, filaments) from grayscale images.
//!
//! The pipeline stages are:
//!
//! 1. **imaging** – logistic illumination normalization and a steerable
//!    second-derivative-of-Gaussian filter bank producing a feature map.
//! 2. **patch** – a horizontal bar template, rotated patch sampling,
//!    chi-square orientation estimation and the overlap loss.
//! 3. **ranking** – a 1-slack structured SVM trained by cutting planes to
//!    rank oriented patches by their similarity to the template.
//! 4. **scoremap** – dense rank scores, top-rank selection and
//!    least-squares blending into a structured score map.
//! 5. **graphrec** – 8-connected pixel graph, Dijkstra, the 2-sweep
//!    diameter heuristic and progressive path extraction.
//! 6. **eval** – tolerant precision/recall/F1, pixel proportion and k-fold
//!    cross-validation.
//!
//! Around them, [`config`] holds run settings and dataset presets, [`io`]
//! the file formats, [`synth`] a generator of labelled synthetic networks
//! and [`pipeline`] the orchestration used by the command-line tool.

pub mod config;
pub mod error;
pub mod eval;
pub mod graphrec;
pub mod imaging;
pub mod io;
pub mod patch;
pub mod pipeline;
pub mod ranking;
pub mod raster;
pub mod scoremap;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{BinaryMap, GrayImage, GroundTruthMap, Pixel, Raster};
