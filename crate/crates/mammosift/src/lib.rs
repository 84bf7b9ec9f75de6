//! Pseudo-color mammogram (PCM) pipeline.
//!
//! The crate turns raw 16-bit mammograms into pseudo-color composites via
//! multi-scale morphological sifting, runs a baseline blob detector over the
//! sift bands (or imports externally produced detections), and scores the
//! results with FROC analysis and Dice similarity. Stages:
//!
//! 1. [`preprocess`] — breast-region extraction, crop, normalization,
//!    square padding, wavelet downsampling.
//! 2. [`sifting`] — oriented multi-scale morphological sifting and PCM
//!    composition, built on the [`morphology`] line-structuring-element
//!    kernel.
//! 3. [`detection`] — baseline blob detection over sift bands plus an
//!    importer for external detection files.
//! 4. [`evaluation`] — Dice similarity, detection/ground-truth matching,
//!    FROC curves, and report emission.
//!
//! [`imgdata`] holds the shared raster types and file formats; [`cli`]
//! wires everything into the `mammosift` command-line tool.

pub mod cli;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod imgdata;
pub mod morphology;
pub mod preprocess;
pub mod sifting;

pub use error::{Error, ErrorKind, Result};
