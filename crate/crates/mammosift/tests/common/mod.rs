//! Phantom dataset shared by the integration tests.
//!
//! Three 400×400 synthetic scans: a rectangular "breast" block with a
//! mild row gradient occupying the left 320 columns, and, in two of the
//! scans, a bright disc of radius 60 px. At the 4× working resolution
//! the discs are 30 px across — inside the first sifting pass band — so
//! the baseline detector must find them. One scan is mass-free.
//!
//! Annotations exercise both encodings: a polygon JSON for `scana`, a
//! label PNG for `scanc`. The manifest defines two splits that swap the
//! massy scans between the test and train folds.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use mammosift::detection::{export_detections, Detection, DetectionSource};
use mammosift::imgdata::{
    load_annotation, save_gray16, save_mask8, BinaryMask, DatasetManifest, FoldRole, GrayImage16,
};
use mammosift::preprocess::{transform_mask_to_working, PreprocessSidecar};

/// Original scan side in pixels.
pub const SIDE: usize = 400;
/// Columns covered by the breast block.
pub const BREAST_COLS: usize = 320;
/// Disc radius in original pixels (diameter 30 at working resolution).
pub const DISC_R: f64 = 60.0;
/// Disc centre of `scana` as (row, col).
pub const DISC_A: (usize, usize) = (200, 160);
/// Disc centre of `scanc` as (row, col).
pub const DISC_C: (usize, usize) = (150, 180);
/// Physical pixel spacing of the phantoms, mm.
pub const PIXEL_SIZE_MM: f64 = 0.07;

/// Breast block over a zero background, with an optional bright disc.
///
/// Massy scans carry a mild row gradient so normalization has real work
/// to do. The mass-free scan is flat on purpose: min–max normalization
/// of a breast whose only structure is the gradient would stretch that
/// gradient to full range and manufacture border responses.
pub fn scan_image(disc_centre: Option<(usize, usize)>) -> GrayImage16 {
    let mut pixels = vec![0u16; SIDE * SIDE];
    for r in 0..SIDE {
        for c in 0..BREAST_COLS {
            let gradient = if disc_centre.is_some() { r * 5 } else { 0 };
            pixels[r * SIDE + c] = (20000 + gradient) as u16;
        }
    }
    if let Some((cr, cc)) = disc_centre {
        for r in 0..SIDE {
            for c in 0..BREAST_COLS {
                let (dr, dc) = (r as f64 - cr as f64, c as f64 - cc as f64);
                if dr * dr + dc * dc <= DISC_R * DISC_R {
                    pixels[r * SIDE + c] = 40000;
                }
            }
        }
    }
    GrayImage16::new(SIDE, SIDE, pixels, PIXEL_SIZE_MM).unwrap()
}

fn disc_mask(centre: (usize, usize)) -> BinaryMask {
    let mut mask = BinaryMask::filled(SIDE, SIDE, false);
    for r in 0..SIDE {
        for c in 0..SIDE {
            let (dr, dc) = (r as f64 - centre.0 as f64, c as f64 - centre.1 as f64);
            if dr * dr + dc * dc <= DISC_R * DISC_R {
                mask.set(r, c, true);
            }
        }
    }
    mask
}

/// Writes images, annotations, a two-split manifest, and a pipeline
/// config into `dir`; returns (manifest_path, config_path).
///
/// The config lowers the detector quantile to 0.97: the phantom breast
/// holds only ~8000 working pixels, so the default top-1% cut would
/// keep too thin a sliver of the disc response for a stable overlap.
pub fn build_phantom_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let images = dir.join("images");
    let ann = dir.join("ann");
    fs::create_dir_all(&images).unwrap();
    fs::create_dir_all(&ann).unwrap();

    save_gray16(&images.join("scana.png"), &scan_image(Some(DISC_A))).unwrap();
    save_gray16(&images.join("scanb.png"), &scan_image(None)).unwrap();
    save_gray16(&images.join("scanc.png"), &scan_image(Some(DISC_C))).unwrap();

    // scana: 24-gon polygon annotation approximating its disc.
    let polygon: Vec<[f64; 2]> = (0..24)
        .map(|k| {
            let t = k as f64 / 24.0 * std::f64::consts::TAU;
            [DISC_A.1 as f64 + DISC_R * t.cos(), DISC_A.0 as f64 + DISC_R * t.sin()]
        })
        .collect();
    let doc = serde_json::json!({ "masses": [{ "polygon": polygon }] });
    fs::write(ann.join("scana.json"), serde_json::to_string_pretty(&doc).unwrap()).unwrap();

    // scanc: label PNG annotation (one mass, label 255).
    save_mask8(&ann.join("scanc.png"), &disc_mask(DISC_C)).unwrap();

    let manifest = serde_json::json!({
        "pixel_size_mm": PIXEL_SIZE_MM,
        "splits": [
            { "id": 0, "entries": [
                { "image": "images/scana.png", "annotation": "ann/scana.json", "role": "test" },
                { "image": "images/scanb.png", "role": "test" },
                { "image": "images/scanc.png", "role": "train" }
            ]},
            { "id": 1, "entries": [
                { "image": "images/scanc.png", "annotation": "ann/scanc.png", "role": "test" },
                { "image": "images/scanb.png", "role": "test" },
                { "image": "images/scana.png", "role": "train" }
            ]}
        ]
    });
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();

    let config_path = dir.join("cfg.json");
    fs::write(&config_path, r#"{ "detector": { "quantile_q": 0.97 } }"#).unwrap();

    (manifest_path, config_path)
}

/// Writes "perfect" external detections for every test-fold image: the
/// ground-truth masses themselves at working resolution, score 1.0
/// (mass-free images get an empty list). Requires the geometry sidecars
/// a previous preprocess run left in `pre_dir`.
pub fn write_perfect_detections(manifest_path: &Path, pre_dir: &Path, out_dir: &Path) {
    fs::create_dir_all(out_dir).unwrap();
    let manifest = DatasetManifest::load(manifest_path).unwrap();
    let mut done = BTreeSet::new();
    for split in &manifest.splits {
        for entry in split.entries.iter().filter(|e| e.fold_role == FoldRole::Test) {
            let stem = entry.stem();
            if !done.insert((stem.clone(), entry.annotation_path.clone())) {
                continue;
            }
            let sidecar = PreprocessSidecar::load(&pre_dir.join(format!("{stem}_pre.json"))).unwrap();
            let dets: Vec<Detection> = match &entry.annotation_path {
                None => Vec::new(),
                Some(ann) => {
                    let (oh, ow) = sidecar.original_size;
                    load_annotation(ann, ow, oh, manifest.pixel_size_mm)
                        .unwrap()
                        .into_iter()
                        .map(|gt| {
                            let working = transform_mask_to_working(
                                &gt.mask,
                                sidecar.crop_offset,
                                sidecar.crop_size,
                            );
                            Detection::new(working, 1.0, DetectionSource::External).unwrap()
                        })
                        .collect()
                }
            };
            export_detections(&out_dir.join(format!("{stem}_det.json")), &stem, &dets).unwrap();
        }
    }
}
