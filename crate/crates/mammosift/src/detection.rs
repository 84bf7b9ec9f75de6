//! Candidate-mass detection over sift bands, plus an importer so
//! externally produced detections can be scored by the same harness.
//!
//! The built-in blob detector is deliberately simple plumbing — quantile
//! threshold, connected components, physical-area filter, greedy IoU
//! suppression — and makes no claim to match a learned detector; it
//! exists so the pipeline runs end to end and so the evaluation code has
//! a native producer. External model outputs enter through
//! [`import_detections`] using the JSON schema below and are scored
//! identically.
//!
//! Detection JSON: `{ "image": stem, "detections": [ { "score": s,
//! "mask_rle": [..] | "mask_png": "path", "bbox": [r0,c0,r1,c1]? } ] }`.
//! Masks are run-length encoded row-major as alternating run lengths
//! starting with a zero-run; bounding boxes are recomputed from the mask
//! on import, never trusted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgdata::{connected_components, BinaryMask, Connectivity};
use crate::sifting::SiftOutput;

/// Where a detection came from: a 1-based sift scale, or an external
/// model via [`import_detections`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DetectionSource {
    Band(usize),
    External,
}

/// One scored candidate mass at working resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Full-frame candidate mask.
    pub mask: BinaryMask,
    /// Tight bounding box of the mask, inclusive (row0, col0, row1, col1).
    pub bbox: (usize, usize, usize, usize),
    /// Confidence in [0, 1].
    pub score: f64,
    pub source_band: DetectionSource,
}

impl Detection {
    /// Builds a detection, recomputing the bbox and clamping the score
    /// into [0, 1]. Empty masks are rejected.
    pub fn new(mask: BinaryMask, score: f64, source_band: DetectionSource) -> Result<Detection> {
        let bbox = mask
            .bbox()
            .ok_or_else(|| Error::DegenerateInput("detection mask has no set pixels".into()))?;
        Ok(Detection { mask, bbox, score: score.clamp(0.0, 1.0), source_band })
    }
}

/// Detector knobs exposed in config files. Only the threshold quantile
/// and the suppression overlap are free parameters; the component-area
/// bounds always come from the sifting scale range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Per-band threshold quantile over breast pixels.
    pub quantile_q: f64,
    /// Greedy-suppression overlap threshold (mask IoU).
    pub nms_iou: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { quantile_q: 0.99, nms_iou: 0.5 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile_q > 0.0 && self.quantile_q < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile_q must lie in (0, 1), got {}",
                self.quantile_q
            )));
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::InvalidConfig(format!(
                "nms_iou must lie in [0, 1], got {}",
                self.nms_iou
            )));
        }
        Ok(())
    }
}

/// Blob-detector knobs. The pixel-area bounds are derived from the
/// physical mass-area range at the working pixel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Per-band threshold quantile over breast pixels.
    pub quantile_q: f64,
    /// Smallest component area kept, in pixels (possibly fractional).
    pub min_area_px: f64,
    /// Largest component area kept, in pixels.
    pub max_area_px: f64,
    /// Greedy-suppression overlap threshold (mask IoU).
    pub nms_iou: f64,
}

impl DetectorParams {
    /// Derives pixel-area bounds from physical areas in mm² at the given
    /// working spacing; quantile and suppression keep their defaults
    /// (0.99 and 0.5).
    pub fn from_physical(a_min_mm2: f64, a_max_mm2: f64, effective_pixel_size_mm: f64) -> Result<Self> {
        if !(effective_pixel_size_mm > 0.0 && effective_pixel_size_mm.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "effective pixel size must be positive, got {effective_pixel_size_mm}"
            )));
        }
        let px_area = effective_pixel_size_mm * effective_pixel_size_mm;
        let params = DetectorParams {
            quantile_q: 0.99,
            min_area_px: a_min_mm2 / px_area,
            max_area_px: a_max_mm2 / px_area,
            nms_iou: 0.5,
        };
        params.validate()?;
        Ok(params)
    }

    /// Like [`from_physical`](Self::from_physical) but with the free
    /// knobs taken from a [`DetectorConfig`].
    pub fn resolve(
        cfg: &DetectorConfig,
        a_min_mm2: f64,
        a_max_mm2: f64,
        effective_pixel_size_mm: f64,
    ) -> Result<Self> {
        let mut params = Self::from_physical(a_min_mm2, a_max_mm2, effective_pixel_size_mm)?;
        params.quantile_q = cfg.quantile_q;
        params.nms_iou = cfg.nms_iou;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quantile_q > 0.0 && self.quantile_q < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile_q must lie in (0, 1), got {}",
                self.quantile_q
            )));
        }
        if !(self.min_area_px >= 0.0 && self.min_area_px < self.max_area_px) {
            return Err(Error::InvalidConfig(format!(
                "area bounds must satisfy 0 <= min < max, got [{}, {}]",
                self.min_area_px, self.max_area_px
            )));
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::InvalidConfig(format!(
                "nms_iou must lie in [0, 1], got {}",
                self.nms_iou
            )));
        }
        Ok(())
    }
}

/// Nearest-rank quantile on an ascending-sorted slice:
/// element at index ceil(q·n) − 1.
fn quantile_nearest_rank(sorted: &[u32], q: f64) -> u32 {
    debug_assert!(!sorted.is_empty());
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Mask intersection-over-union; both masks must share dimensions.
fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    debug_assert_eq!((a.width, a.height), (b.width, b.height));
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Deterministic ordering: score descending, then bbox lexicographic,
/// then source band.
fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.bbox.cmp(&b.bbox))
            .then_with(|| a.source_band.cmp(&b.source_band))
    });
}

/// Greedy non-maximum suppression: walk detections best-first and drop
/// any whose mask IoU with an already-kept detection reaches `iou`.
/// Idempotent: kept detections are pairwise below the threshold.
fn suppress(mut dets: Vec<Detection>, iou: f64) -> Vec<Detection> {
    sort_detections(&mut dets);
    let mut kept: Vec<Detection> = Vec::new();
    for det in dets {
        if kept.iter().all(|k| mask_iou(&k.mask, &det.mask) < iou) {
            kept.push(det);
        }
    }
    kept
}

/// Thresholds each band at the q-quantile of its breast-pixel values,
/// keeps 8-connected components whose pixel area passes the physical
/// filter, scores them as mean-inside / max-over-breast, and merges
/// across bands by greedy IoU suppression. Returns detections sorted by
/// descending score.
///
/// Bands whose breast-region maximum is zero are skipped (nothing was
/// sifted; thresholding noise-free zeros would detect the whole breast).
pub fn blob_detect(
    bands: &SiftOutput,
    breast_mask: &BinaryMask,
    params: &DetectorParams,
) -> Result<Vec<Detection>> {
    params.validate()?;
    if !breast_mask.any() {
        return Err(Error::DegenerateInput("empty breast mask".into()));
    }
    let mut candidates = Vec::new();
    for (bi, band) in bands.bands.iter().enumerate() {
        assert_eq!(
            (band.width, band.height),
            (breast_mask.width, breast_mask.height),
            "band and mask dimensions must agree"
        );
        let mut breast_vals: Vec<u32> = band
            .pixels
            .iter()
            .zip(&breast_mask.bits)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect();
        breast_vals.sort_unstable();
        let breast_max = *breast_vals.last().unwrap();
        if breast_max == 0 {
            continue;
        }
        // A zero sift response is "nothing passed the band", never a
        // candidate: floor the threshold at 1 so a mostly-zero band
        // cannot flood the whole breast when the quantile lands on 0.
        let threshold = quantile_nearest_rank(&breast_vals, params.quantile_q).max(1);
        let mut hot = BinaryMask::filled(band.width, band.height, false);
        for (i, (&v, &m)) in band.pixels.iter().zip(&breast_mask.bits).enumerate() {
            if m && v >= threshold {
                hot.bits[i] = true;
            }
        }
        let (labels, n) = connected_components(&hot, Connectivity::Eight);
        let mut areas = vec![0usize; n as usize + 1];
        for &l in &labels {
            areas[l as usize] += 1;
        }
        for label in 1..=n {
            let area = areas[label as usize];
            if (area as f64) < params.min_area_px || (area as f64) > params.max_area_px {
                continue;
            }
            let mut mask = BinaryMask::filled(band.width, band.height, false);
            let mut sum = 0u64;
            for (i, &l) in labels.iter().enumerate() {
                if l == label {
                    mask.bits[i] = true;
                    sum += band.pixels[i] as u64;
                }
            }
            let score = sum as f64 / area as f64 / breast_max as f64;
            candidates.push(Detection::new(mask, score, DetectionSource::Band(bi + 1))?);
        }
    }
    Ok(suppress(candidates, params.nms_iou))
}

/// Row-major run-length encoding: alternating run lengths starting with
/// an unset-run (possibly 0), 32-bit counts summing to width·height.
pub fn rle_encode(mask: &BinaryMask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &b in &mask.bits {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    if mask.bits.is_empty() {
        runs.clear();
    }
    runs
}

/// Decodes [`rle_encode`]'s format; the run lengths must cover the
/// raster exactly.
pub fn rle_decode(runs: &[u32], width: usize, height: usize) -> Result<BinaryMask> {
    let mut bits = Vec::with_capacity(width * height);
    let mut value = false;
    for &run in runs {
        bits.resize(bits.len() + run as usize, value);
        value = !value;
    }
    if bits.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "run lengths cover {} pixels, raster is {width}x{height} = {}",
            bits.len(),
            width * height
        )));
    }
    BinaryMask::new(width, height, bits)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionDoc {
    image: String,
    detections: Vec<DetectionEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionEntry {
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_rle: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[usize; 4]>,
}

/// Writes detections for one image in the interchange schema (masks as
/// RLE, bbox included for human inspection).
pub fn export_detections(path: &Path, image_stem: &str, dets: &[Detection]) -> Result<()> {
    let doc = DetectionDoc {
        image: image_stem.to_string(),
        detections: dets
            .iter()
            .map(|d| DetectionEntry {
                score: d.score,
                mask_rle: Some(rle_encode(&d.mask)),
                mask_png: None,
                bbox: Some([d.bbox.0, d.bbox.1, d.bbox.2, d.bbox.3]),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc).expect("detection doc serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Reads a detection file, enforcing the schema: every entry carries
/// exactly one of `mask_rle` / `mask_png`, masks must be nonempty and
/// match the raster size, scores are clamped to [0, 1], and bounding
/// boxes are recomputed from the masks. `mask_png` paths resolve
/// relative to the file. Entries keep file order; their source is
/// [`DetectionSource::External`].
pub fn import_detections(path: &Path, width: usize, height: usize) -> Result<Vec<Detection>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut de = serde_json::Deserializer::from_slice(&raw);
    let doc: DetectionDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let schema_err = |detail: String| Error::Schema { path: path.to_path_buf(), detail };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::with_capacity(doc.detections.len());
    for (i, entry) in doc.detections.into_iter().enumerate() {
        let mask = match (entry.mask_rle, entry.mask_png) {
            (Some(runs), None) => rle_decode(&runs, width, height)
                .map_err(|e| schema_err(format!("detections[{i}]: {e}")))?,
            (None, Some(rel)) => load_mask_png(&base.join(rel), width, height)?,
            (Some(_), Some(_)) => {
                return Err(schema_err(format!(
                    "detections[{i}]: mask_rle and mask_png are mutually exclusive"
                )))
            }
            (None, None) => {
                return Err(schema_err(format!(
                    "detections[{i}]: one of mask_rle or mask_png is required"
                )))
            }
        };
        if !mask.any() {
            return Err(schema_err(format!("detections[{i}]: mask has no set pixels")));
        }
        out.push(Detection::new(mask, entry.score, DetectionSource::External)?);
    }
    Ok(out)
}

/// 8-bit PNG as a binary mask: nonzero means set.
fn load_mask_png(path: &Path, width: usize, height: usize) -> Result<BinaryMask> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&raw, image::ImageFormat::Png)
        .map_err(|e| Error::CorruptHeader { path: path.to_path_buf(), detail: e.to_string() })?;
    let image::DynamicImage::ImageLuma8(img) = decoded else {
        return Err(Error::UnsupportedBitDepth { path: path.to_path_buf() });
    };
    if (img.width() as usize, img.height() as usize) != (width, height) {
        return Err(Error::DimensionMismatch(format!(
            "{}: mask is {}x{}, raster is {width}x{height}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    let bits = img.pixels().map(|p| p.0[0] != 0).collect();
    BinaryMask::new(width, height, bits)
}
