//! Ground-truth annotation ingestion.
//!
//! Two encodings are accepted: an 8-bit label PNG (0 = background, each
//! distinct positive value is one mass) and a JSON document of closed
//! polygons in pixel coordinates. Polygons are rasterized with the
//! even-odd rule: a pixel belongs to the mass iff its centre
//! (col + 0.5, row + 0.5) lies inside the polygon.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::imgdata::BinaryMask;

/// One ground-truth mass: its pixel mask and derived physical area.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMass {
    pub mask: BinaryMask,
    /// (set-pixel count) × pixel_size_mm².
    pub area_mm2: f64,
}

impl GroundTruthMass {
    pub fn new(mask: BinaryMask, pixel_size_mm: f64) -> Result<Self> {
        let count = mask.count();
        if count == 0 {
            return Err(Error::DegenerateInput(
                "ground-truth mass rasterized to zero pixels".into(),
            ));
        }
        let area_mm2 = count as f64 * pixel_size_mm * pixel_size_mm;
        Ok(GroundTruthMass { mask, area_mm2 })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationDoc {
    masses: Vec<MassDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MassDoc {
    /// Closed polygon as [[x, y], ...]; x is the column, y the row.
    polygon: Vec<(f64, f64)>,
}

/// Loads ground-truth masses from a label PNG or polygon JSON file.
///
/// `width`/`height` give the raster the annotation refers to; a label
/// image of any other size is rejected. Every returned mass covers at
/// least one pixel.
pub fn load_annotation(
    path: &Path,
    width: usize,
    height: usize,
    pixel_size_mm: f64,
) -> Result<Vec<GroundTruthMass>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "json" => load_polygon_json(path, width, height, pixel_size_mm),
        "png" => load_label_png(path, width, height, pixel_size_mm),
        _ => Err(Error::Schema {
            path: path.to_path_buf(),
            detail: format!("unknown annotation extension {ext:?} (expected json or png)"),
        }),
    }
}

fn load_polygon_json(
    path: &Path,
    width: usize,
    height: usize,
    pixel_size_mm: f64,
) -> Result<Vec<GroundTruthMass>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let doc: AnnotationDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        Error::Schema { path: path.to_path_buf(), detail: format!("{}: {}", e.path(), e.inner()) }
    })?;

    let mut masses = Vec::with_capacity(doc.masses.len());
    for (i, mass) in doc.masses.iter().enumerate() {
        if mass.polygon.len() < 3 {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                detail: format!(
                    "masses[{i}].polygon has {} vertices, need at least 3",
                    mass.polygon.len()
                ),
            });
        }
        let mask = rasterize_polygon(&mass.polygon, width, height);
        masses.push(GroundTruthMass::new(mask, pixel_size_mm)?);
    }
    Ok(masses)
}

fn load_label_png(
    path: &Path,
    width: usize,
    height: usize,
    pixel_size_mm: f64,
) -> Result<Vec<GroundTruthMass>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::CorruptHeader { path: path.to_path_buf(), detail: e.to_string() })?;
    let labels = match decoded {
        image::DynamicImage::ImageLuma8(buf) => buf,
        _ => return Err(Error::UnsupportedBitDepth { path: path.to_path_buf() }),
    };
    if (labels.width() as usize, labels.height() as usize) != (width, height) {
        return Err(Error::DimensionMismatch(format!(
            "label image {} is {}x{}, image is {}x{}",
            path.display(),
            labels.width(),
            labels.height(),
            width,
            height
        )));
    }
    let raw = labels.into_raw();
    // One mask slot per possible label value, populated in a single pass;
    // label order (ascending value) fixes the output order.
    let mut by_label: Vec<Option<BinaryMask>> = vec![None; 256];
    for (idx, &v) in raw.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let mask =
            by_label[v as usize].get_or_insert_with(|| BinaryMask::filled(width, height, false));
        mask.bits[idx] = true;
    }
    by_label
        .into_iter()
        .flatten()
        .map(|mask| GroundTruthMass::new(mask, pixel_size_mm))
        .collect()
}

/// Even-odd rasterization over the polygon's bounding box, testing each
/// pixel centre with a ray-crossing parity count.
fn rasterize_polygon(poly: &[(f64, f64)], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::filled(width, height, false);
    if width == 0 || height == 0 {
        return mask;
    }
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in poly {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let c_lo = (min_x - 1.0).floor().max(0.0) as usize;
    let c_hi = (max_x.ceil().max(0.0) as usize).min(width - 1);
    let r_lo = (min_y - 1.0).floor().max(0.0) as usize;
    let r_hi = (max_y.ceil().max(0.0) as usize).min(height - 1);
    for r in r_lo..=r_hi {
        let py = r as f64 + 0.5;
        for c in c_lo..=c_hi {
            let px = c as f64 + 0.5;
            if center_inside(poly, px, py) {
                mask.set(r, c, true);
            }
        }
    }
    mask
}

fn center_inside(poly: &[(f64, f64)], px: f64, py: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) {
            let x_cross = xi + (py - yi) * (xj - xi) / (yj - yi);
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
