//! Breast-region extraction and factor-4 subsampling.
//!
//! The stage order is fixed: threshold the breast out of the background
//! (Otsu), crop to its bounding box, min–max normalize to the full 16-bit
//! range, zero-pad to a square, then shrink by 4 with a two-level db2
//! low-pass ([`wavelet_downsample`]). The breast mask rides along through
//! the same crop/pad geometry and is OR-decimated so detection and
//! evaluation can mask band responses at working resolution.

mod wavelet;

use std::path::Path;

pub use wavelet::wavelet_downsample;

use crate::error::{Error, Result};
use crate::imgdata::{connected_components, BinaryMask, Connectivity, GrayImage16};

/// Output of the full preprocessing chain.
#[derive(Debug, Clone)]
pub struct PreprocessResult {
    /// Subsampled, normalized, square working image.
    pub image: GrayImage16,
    /// Breast mask at working resolution (same side as `image`).
    pub breast_mask: BinaryMask,
    /// Top-left corner (row, col) of the breast crop in original
    /// coordinates; needed to map annotations into working space.
    pub crop_offset: (usize, usize),
    /// (height, width) of the breast crop before padding.
    pub crop_size: (usize, usize),
    /// Pixel spacing of `image`: 4× the input spacing.
    pub effective_pixel_size_mm: f64,
}

/// Per-image geometry sidecar written next to each working image so later
/// stages (evaluation in particular) can map full-resolution annotations
/// into working space without re-running preprocessing.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSidecar {
    /// (height, width) of the original image.
    pub original_size: (usize, usize),
    /// Top-left (row, col) of the breast crop in original coordinates.
    pub crop_offset: (usize, usize),
    /// (height, width) of the crop before padding.
    pub crop_size: (usize, usize),
    /// Square side after zero-padding, before subsampling.
    pub padded_side: usize,
    /// Square side of the working image.
    pub working_side: usize,
    /// Pixel spacing of the working image in millimetres.
    pub effective_pixel_size_mm: f64,
}

impl PreprocessSidecar {
    pub fn from_result(result: &PreprocessResult, original_size: (usize, usize)) -> Self {
        PreprocessSidecar {
            original_size,
            crop_offset: result.crop_offset,
            crop_size: result.crop_size,
            padded_side: result.crop_size.0.max(result.crop_size.1),
            working_side: result.image.width,
            effective_pixel_size_mm: result.effective_pixel_size_mm,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("sidecar serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut de = serde_json::Deserializer::from_slice(&bytes);
        let sidecar: PreprocessSidecar =
            serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                detail: format!("{}: {}", e.path(), e.inner()),
            })?;
        sidecar.validate().map_err(|detail| Error::Schema { path: path.to_path_buf(), detail })?;
        Ok(sidecar)
    }

    /// Internal-consistency checks; returns a description of the first
    /// violation found.
    fn validate(&self) -> std::result::Result<(), String> {
        let (ch, cw) = self.crop_size;
        if ch == 0 || cw == 0 {
            return Err("crop_size must be nonzero in both axes".into());
        }
        if self.crop_offset.0 + ch > self.original_size.0
            || self.crop_offset.1 + cw > self.original_size.1
        {
            return Err("crop extends outside the original image".into());
        }
        if self.padded_side != ch.max(cw) {
            return Err(format!(
                "padded_side {} does not match crop_size ({ch}, {cw})",
                self.padded_side
            ));
        }
        if self.working_side != self.padded_side.div_ceil(4) {
            return Err(format!(
                "working_side {} does not match padded_side {} subsampled by 4",
                self.working_side, self.padded_side
            ));
        }
        if !(self.effective_pixel_size_mm > 0.0 && self.effective_pixel_size_mm.is_finite()) {
            return Err("effective_pixel_size_mm must be positive".into());
        }
        Ok(())
    }
}

/// Otsu's threshold over the full 16-bit histogram: the value `t`
/// maximizing between-class variance for the split `≤ t` / `> t`
/// (smallest `t` on ties). `None` when no split separates two nonempty
/// classes, i.e. the image is constant.
fn otsu_threshold(img: &GrayImage16) -> Option<u16> {
    let mut hist = vec![0u64; 65536];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let total = img.pixels.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let mut best: Option<(f64, u16)> = None;
    for t in 0..=65534u16 {
        let c = hist[t as usize] as f64;
        w0 += c;
        sum0 += t as f64 * c;
        if w0 == 0.0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0.0 {
            break;
        }
        let d = sum0 / w0 - (sum_all - sum0) / w1;
        let score = w0 * w1 * d * d;
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, t));
        }
    }
    best.map(|(_, t)| t)
}

/// Segments the breast: pixels above the Otsu threshold, reduced to the
/// largest 8-connected component (smallest label on area ties), with
/// enclosed holes filled (complement regions not 4-connected to the
/// border).
pub fn extract_breast_region(img: &GrayImage16) -> Result<BinaryMask> {
    let t = otsu_threshold(img).ok_or_else(|| {
        Error::DegenerateInput("constant image: no threshold separates breast from background".into())
    })?;
    let mut fg = BinaryMask::filled(img.width, img.height, false);
    for r in 0..img.height {
        for c in 0..img.width {
            if img.get(r, c) > t {
                fg.set(r, c, true);
            }
        }
    }
    let (labels, n) = connected_components(&fg, Connectivity::Eight);
    let mut areas = vec![0u64; n as usize + 1];
    for &l in &labels {
        areas[l as usize] += 1;
    }
    let largest = (1..=n).max_by_key(|&l| (areas[l as usize], std::cmp::Reverse(l))).unwrap();

    let mut keep = BinaryMask::filled(img.width, img.height, false);
    let mut complement = BinaryMask::filled(img.width, img.height, false);
    for r in 0..img.height {
        for c in 0..img.width {
            let inside = labels[r * img.width + c] == largest;
            keep.set(r, c, inside);
            complement.set(r, c, !inside);
        }
    }
    // Background regions touching the border stay background; everything
    // else is an enclosed hole and gets filled.
    let (clabels, cn) = connected_components(&complement, Connectivity::Four);
    let mut touches_border = vec![false; cn as usize + 1];
    for r in 0..img.height {
        for c in 0..img.width {
            if r == 0 || c == 0 || r == img.height - 1 || c == img.width - 1 {
                touches_border[clabels[r * img.width + c] as usize] = true;
            }
        }
    }
    for r in 0..img.height {
        for c in 0..img.width {
            let l = clabels[r * img.width + c] as usize;
            keep.set(r, c, l == 0 || !touches_border[l]);
        }
    }
    Ok(keep)
}

/// Tight bounding-box crop of `img` around the mask's set pixels, plus
/// the crop's top-left (row, col) offset.
///
/// Panics if the mask is empty or shaped differently from the image.
pub fn crop_to_mask(img: &GrayImage16, mask: &BinaryMask) -> (GrayImage16, (usize, usize)) {
    assert_eq!((mask.width, mask.height), (img.width, img.height));
    let (r0, c0, r1, c1) = mask.bbox().expect("crop_to_mask requires a nonempty mask");
    let (h, w) = (r1 - r0 + 1, c1 - c0 + 1);
    let mut pixels = Vec::with_capacity(w * h);
    for r in r0..=r1 {
        pixels.extend_from_slice(&img.pixels[r * img.width + c0..r * img.width + c1 + 1]);
    }
    let cropped = GrayImage16 { width: w, height: h, pixels, pixel_size_mm: img.pixel_size_mm };
    (cropped, (r0, c0))
}

/// Linear min–max rescale onto [0, 65535], rounding half up. A constant
/// image maps to all zeros. Idempotent: a second application is the
/// identity.
pub fn normalize_16bit(img: &GrayImage16) -> GrayImage16 {
    let (lo, hi) = img
        .pixels
        .iter()
        .fold((u16::MAX, u16::MIN), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let pixels = if lo >= hi {
        vec![0u16; img.pixels.len()]
    } else {
        let span = (hi - lo) as f64;
        img.pixels
            .iter()
            .map(|&p| ((p - lo) as f64 * 65535.0 / span + 0.5).floor() as u16)
            .collect()
    };
    GrayImage16 { width: img.width, height: img.height, pixels, pixel_size_mm: img.pixel_size_mm }
}

/// Zero-pads on the bottom and right to side max(width, height); the
/// original content stays anchored at (0, 0).
pub fn pad_square(img: &GrayImage16) -> GrayImage16 {
    let side = img.width.max(img.height);
    let mut pixels = vec![0u16; side * side];
    for r in 0..img.height {
        pixels[r * side..r * side + img.width]
            .copy_from_slice(&img.pixels[r * img.width..(r + 1) * img.width]);
    }
    GrayImage16 { width: side, height: side, pixels, pixel_size_mm: img.pixel_size_mm }
}

/// Maps a full-resolution mask into working space: crop at
/// `crop_offset`/`crop_size`, zero-pad to a square, then decimate by 4
/// with logical OR over each 4×4 block (partial edge blocks included).
///
/// Used for the breast mask here and for ground-truth masks during
/// evaluation, so both land on exactly the working-image grid.
pub fn transform_mask_to_working(
    mask: &BinaryMask,
    crop_offset: (usize, usize),
    crop_size: (usize, usize),
) -> BinaryMask {
    let (h, w) = crop_size;
    let side = h.max(w);
    let mut padded = BinaryMask::filled(side, side, false);
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = (r + crop_offset.0, c + crop_offset.1);
            if sr < mask.height && sc < mask.width && mask.get(sr, sc) {
                padded.set(r, c, true);
            }
        }
    }
    decimate_mask_or(&padded, 4)
}

/// OR-decimation: output (r, c) is set iff any pixel of the
/// `factor`×`factor` source block is set.
fn decimate_mask_or(mask: &BinaryMask, factor: usize) -> BinaryMask {
    let oh = mask.height.div_ceil(factor);
    let ow = mask.width.div_ceil(factor);
    let mut out = BinaryMask::filled(ow, oh, false);
    for r in 0..mask.height {
        for c in 0..mask.width {
            if mask.get(r, c) {
                out.set(r / factor, c / factor, true);
            }
        }
    }
    out
}

/// Full chain: extract → crop → normalize → pad → subsample, with the
/// breast mask carried through the same geometry.
pub fn preprocess(img: &GrayImage16) -> Result<PreprocessResult> {
    let mask = extract_breast_region(img)?;
    let (cropped, crop_offset) = crop_to_mask(img, &mask);
    let crop_size = (cropped.height, cropped.width);
    let normalized = normalize_16bit(&cropped);
    let padded = pad_square(&normalized);
    let image = wavelet_downsample(&padded)?;
    let breast_mask = transform_mask_to_working(&mask, crop_offset, crop_size);
    debug_assert_eq!(breast_mask.width, image.width);
    debug_assert_eq!(breast_mask.height, image.height);
    Ok(PreprocessResult {
        effective_pixel_size_mm: image.pixel_size_mm,
        image,
        breast_mask,
        crop_offset,
        crop_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn image(w: usize, h: usize, pixels: Vec<u16>) -> GrayImage16 {
        GrayImage16 { width: w, height: h, pixels, pixel_size_mm: 0.07 }
    }

    fn paint_rect(img: &mut GrayImage16, r0: usize, c0: usize, r1: usize, c1: usize, v: u16) {
        for r in r0..=r1 {
            for c in c0..=c1 {
                img.set(r, c, v);
            }
        }
    }

    /// Independent hole-filling oracle: queue-based flood over unset
    /// pixels from every border seed, 4-connected; anything the flood
    /// never reaches is filled.
    fn oracle_fill(mask: &BinaryMask) -> BinaryMask {
        let (w, h) = (mask.width, mask.height);
        let mut reached = vec![false; w * h];
        let mut queue = std::collections::VecDeque::new();
        for r in 0..h {
            for c in 0..w {
                if (r == 0 || c == 0 || r == h - 1 || c == w - 1) && !mask.get(r, c) {
                    queue.push_back((r, c));
                    reached[r * w + c] = true;
                }
            }
        }
        while let Some((r, c)) = queue.pop_front() {
            let mut push = |r: usize, c: usize| {
                if !mask.get(r, c) && !reached[r * w + c] {
                    reached[r * w + c] = true;
                    queue.push_back((r, c));
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < h {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < w {
                push(r, c + 1);
            }
        }
        let mut out = BinaryMask::filled(w, h, false);
        for r in 0..h {
            for c in 0..w {
                out.set(r, c, !reached[r * w + c]);
            }
        }
        out
    }

    #[test]
    fn bright_square_on_black_is_extracted_exactly() {
        let mut img = image(64, 64, vec![0; 64 * 64]);
        paint_rect(&mut img, 10, 14, 29, 33, 30000);
        let mask = extract_breast_region(&img).unwrap();
        assert_eq!(mask.count(), 20 * 20);
        assert_eq!(mask.bbox(), Some((10, 14, 29, 33)));
    }

    #[test]
    fn largest_component_wins() {
        let mut img = image(80, 60, vec![0; 80 * 60]);
        paint_rect(&mut img, 5, 5, 9, 14, 25000); // 50 px
        paint_rect(&mut img, 30, 30, 49, 49, 25000); // 400 px
        let mask = extract_breast_region(&img).unwrap();
        assert_eq!(mask.count(), 400);
        assert_eq!(mask.bbox(), Some((30, 30, 49, 49)));
    }

    #[test]
    fn enclosed_holes_are_filled_but_border_background_is_not() {
        let mut img = image(40, 40, vec![0; 40 * 40]);
        paint_rect(&mut img, 8, 8, 31, 31, 20000);
        paint_rect(&mut img, 15, 15, 18, 19, 0); // hole inside the blob
        // Pre-fill state: the thresholded foreground itself has the hole.
        let t = otsu_threshold(&img).unwrap();
        let mut fg = BinaryMask::filled(40, 40, false);
        for r in 0..40 {
            for c in 0..40 {
                fg.set(r, c, img.get(r, c) > t);
            }
        }
        assert!(!fg.get(16, 16), "hole must be open before filling");
        let mask = extract_breast_region(&img).unwrap();
        assert!(mask.get(16, 16), "hole must be closed after filling");
        assert!(!mask.get(0, 0), "border background must stay background");
        assert_eq!(mask, oracle_fill(&fg), "must match the border-flood oracle");
    }

    #[test]
    fn crop_follows_the_mask_bounding_box() {
        let img = image(30, 20, (0..600).map(|i| i as u16).collect());
        let mut mask = BinaryMask::filled(30, 20, false);
        for r in 3..7 {
            for c in 10..21 {
                mask.set(r, c, true);
            }
        }
        let (crop, offset) = crop_to_mask(&img, &mask);
        assert_eq!((crop.height, crop.width), (4, 11));
        assert_eq!(offset, (3, 10));
        assert_eq!(crop.get(0, 0), img.get(3, 10));
        assert_eq!(crop.get(3, 10), img.get(6, 20));

        let (full, offset) = crop_to_mask(&img, &BinaryMask::filled(30, 20, true));
        assert_eq!(full, img);
        assert_eq!(offset, (0, 0));

        let mut single = BinaryMask::filled(30, 20, false);
        single.set(12, 7, true);
        let (one, offset) = crop_to_mask(&img, &single);
        assert_eq!((one.width, one.height), (1, 1));
        assert_eq!(offset, (12, 7));
        assert_eq!(one.get(0, 0), img.get(12, 7));
    }

    #[test]
    fn normalize_pins_endpoints_and_midpoint() {
        let img = image(3, 1, vec![0, 8191, 16383]);
        let out = normalize_16bit(&img);
        // round(65535 · 8191 / 16383) = round(32765.4999…) = 32765.
        assert_eq!(out.pixels, vec![0, 32765, 65535]);

        let spanning = image(2, 2, vec![0, 65535, 1234, 40000]);
        assert_eq!(normalize_16bit(&spanning), spanning);

        let constant = image(2, 2, vec![777; 4]);
        assert_eq!(normalize_16bit(&constant).pixels, vec![0; 4]);
    }

    proptest! {
        #[test]
        fn prop_normalize_is_idempotent(pixels in proptest::collection::vec(any::<u16>(), 1..64)) {
            let img = image(pixels.len(), 1, pixels);
            let once = normalize_16bit(&img);
            let twice = normalize_16bit(&once);
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn pad_square_anchors_content_top_left() {
        let img = image(5, 3, (1..=15).collect());
        let out = pad_square(&img);
        assert_eq!((out.width, out.height), (5, 5));
        for r in 0..3 {
            for c in 0..5 {
                assert_eq!(out.get(r, c), img.get(r, c));
            }
        }
        assert!(out.pixels[15..].iter().all(|&p| p == 0));

        let square = image(4, 4, (0..16).collect());
        assert_eq!(pad_square(&square), square);

        let row = image(4, 1, vec![9, 9, 9, 9]);
        let out = pad_square(&row);
        assert_eq!((out.width, out.height), (4, 4));
        assert_eq!(&out.pixels[..4], &[9, 9, 9, 9]);
        assert!(out.pixels[4..].iter().all(|&p| p == 0));
    }

    #[test]
    fn decimation_matches_blockwise_or_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(59);
        for _ in 0..20 {
            let w = rng.random_range(1..40);
            let h = rng.random_range(1..40);
            let mut mask = BinaryMask::filled(w, h, false);
            for r in 0..h {
                for c in 0..w {
                    mask.set(r, c, rng.random_bool(0.3));
                }
            }
            let dec = decimate_mask_or(&mask, 4);
            assert_eq!((dec.width, dec.height), (w.div_ceil(4), h.div_ceil(4)));
            for br in 0..dec.height {
                for bc in 0..dec.width {
                    let mut any = false;
                    for r in br * 4..((br + 1) * 4).min(h) {
                        for c in bc * 4..((bc + 1) * 4).min(w) {
                            any |= mask.get(r, c);
                        }
                    }
                    assert_eq!(dec.get(br, bc), any, "block ({br},{bc})");
                }
            }
        }
    }

    #[test]
    fn full_chain_on_a_phantom_produces_the_expected_geometry() {
        // Blob spans the full height, 350 columns wide: crop 512×350,
        // pad to 512, subsample to 128. A gentle vertical gradient keeps
        // the crop non-constant so normalization has a range to stretch,
        // while staying far enough from the background that the
        // threshold lands between them instead of inside the gradient.
        let mut img = image(400, 512, vec![0; 400 * 512]);
        for r in 0..512 {
            for c in 30..380 {
                img.set(r, c, 20000 + 10 * r as u16);
            }
        }
        let result = preprocess(&img).unwrap();
        assert_eq!((result.image.width, result.image.height), (128, 128));
        assert_eq!(result.crop_offset, (0, 30));
        assert!((result.effective_pixel_size_mm - 0.28).abs() < 1e-12);
        assert_eq!(result.breast_mask.width, 128);
        // Gradient stretched onto [0, 65535]: dark at the top, bright at
        // the bottom, zero in the right-side padding.
        assert!(result.image.get(10, 40) < 12000);
        assert!(result.image.get(120, 40) > 55000);
        assert_eq!(result.image.get(64, 120), 0);
        // Mask covers the blob's working-space footprint: 350/4 = 87.5.
        assert_eq!(result.breast_mask.bbox(), Some((0, 0, 127, 87)));
    }

    #[test]
    fn all_zero_image_is_degenerate() {
        let img = image(32, 32, vec![0; 32 * 32]);
        assert!(matches!(preprocess(&img), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn earlier_stages_are_identities_on_a_normalized_square_checkerboard() {
        // Bright cells of a checkerboard are one 8-connected component
        // whose enclosed dark cells all get hole-filled, the values span
        // the full range, and the frame is square - so preprocess reduces
        // to wavelet_downsample alone.
        let mut img = image(64, 64, vec![0; 64 * 64]);
        for r in 0..64 {
            for c in 0..64 {
                if (r + c) % 2 == 0 {
                    img.set(r, c, 65535);
                }
            }
        }
        let result = preprocess(&img).unwrap();
        assert_eq!(result.image, wavelet_downsample(&img).unwrap());
        assert_eq!(result.crop_offset, (0, 0));
        assert_eq!(result.breast_mask.count(), 16 * 16);
    }

    #[test]
    fn breast_mask_decimation_never_invents_pixels() {
        let mut img = image(96, 64, vec![0; 96 * 64]);
        paint_rect(&mut img, 5, 9, 60, 90, 22000);
        paint_rect(&mut img, 20, 30, 25, 40, 1000); // dent, below threshold
        let result = preprocess(&img).unwrap();
        let mask = extract_breast_region(&img).unwrap();
        let (_, offset) = crop_to_mask(&img, &mask);
        // Brute force: each set working pixel has a set source pixel in
        // its 4x4 block of the cropped/padded full-resolution mask.
        for br in 0..result.breast_mask.height {
            for bc in 0..result.breast_mask.width {
                if !result.breast_mask.get(br, bc) {
                    continue;
                }
                let mut any = false;
                for r in br * 4..(br + 1) * 4 {
                    for c in bc * 4..(bc + 1) * 4 {
                        let (sr, sc) = (r + offset.0, c + offset.1);
                        if sr < mask.height && sc < mask.width {
                            any |= mask.get(sr, sc);
                        }
                    }
                }
                assert!(any, "working pixel ({br},{bc}) has no source support");
            }
        }
    }

    #[test]
    fn sidecar_describes_the_result_and_round_trips() {
        let mut img = image(96, 64, vec![0; 96 * 64]);
        paint_rect(&mut img, 5, 9, 60, 90, 22000);
        let result = preprocess(&img).unwrap();
        let sidecar = PreprocessSidecar::from_result(&result, (64, 96));
        assert_eq!(sidecar.crop_offset, result.crop_offset);
        assert_eq!(sidecar.crop_size, result.crop_size);
        assert_eq!(sidecar.padded_side, result.crop_size.0.max(result.crop_size.1));
        assert_eq!(sidecar.working_side, result.image.width);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x_pre.json");
        sidecar.save(&path).unwrap();
        assert_eq!(PreprocessSidecar::load(&path).unwrap(), sidecar);
    }

    #[test]
    fn inconsistent_sidecars_are_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad_pre.json");
        let cases = [
            // working_side disagrees with padded_side / 4.
            r#"{"original_size":[64,96],"crop_offset":[0,0],"crop_size":[56,82],
                "padded_side":82,"working_side":22,"effective_pixel_size_mm":0.28}"#,
            // Crop escapes the original image.
            r#"{"original_size":[64,96],"crop_offset":[20,0],"crop_size":[56,82],
                "padded_side":82,"working_side":21,"effective_pixel_size_mm":0.28}"#,
            // padded_side is not the larger crop dimension.
            r#"{"original_size":[64,96],"crop_offset":[0,0],"crop_size":[56,82],
                "padded_side":56,"working_side":14,"effective_pixel_size_mm":0.28}"#,
            // Unknown field.
            r#"{"original_size":[64,96],"crop_offset":[0,0],"crop_size":[56,82],
                "padded_side":82,"working_side":21,"effective_pixel_size_mm":0.28,"x":1}"#,
        ];
        for body in cases {
            std::fs::write(&path, body).unwrap();
            let err = PreprocessSidecar::load(&path).unwrap_err();
            assert!(matches!(err, Error::Schema { .. }), "{body} gave {err:?}");
        }
    }
}
