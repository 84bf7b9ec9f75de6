//! Raster data model shared by all pipeline stages, plus image/annotation I/O
//! and dataset manifests.
//!
//! All types are plain owned buffers, immutable by convention after
//! construction, and safe to share across threads. Loaders are stateless.

mod annotation;
mod io;
mod manifest;

pub use annotation::{load_annotation, GroundTruthMass};
pub use io::{
    load_band_raw, load_gray16, load_mask8, save_band_raw, save_gray16, save_mask8, save_rgb8,
};
pub use manifest::{DatasetManifest, FoldRole, ManifestEntry, ManifestSplit};

use crate::error::{Error, Result};

/// Single-channel raster of 16-bit intensities with isotropic physical
/// pixel size. Pixels are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage16 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
    /// Physical edge length of one pixel in millimetres.
    pub pixel_size_mm: f64,
}

impl GrayImage16 {
    pub fn new(width: usize, height: usize, pixels: Vec<u16>, pixel_size_mm: f64) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Invariant(format!(
                "pixel buffer length {} != {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        if !(pixel_size_mm > 0.0) {
            return Err(Error::Invariant(format!(
                "pixel_size_mm must be positive, got {pixel_size_mm}"
            )));
        }
        Ok(GrayImage16 { width, height, pixels, pixel_size_mm })
    }

    /// Constant-valued image, mainly for tests and phantoms.
    pub fn splat(width: usize, height: usize, value: u16, pixel_size_mm: f64) -> Self {
        GrayImage16 { width, height, pixels: vec![value; width * height], pixel_size_mm }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u16) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Overflow-safe 32-bit accumulator raster (orientation sums of Eq-style
/// residues stay below N x 65535 << 2^32).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage32 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u32>,
}

impl GrayImage32 {
    pub fn new(width: usize, height: usize, pixels: Vec<u32>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Invariant(format!(
                "pixel buffer length {} != {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(GrayImage32 { width, height, pixels })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        GrayImage32 { width, height, pixels: vec![0; width * height] }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.pixels[row * self.width + col]
    }
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Invariant(format!(
                "mask buffer length {} != {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        BinaryMask { width, height, bits: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Tight bounding box of the set pixels as inclusive
    /// (row0, col0, row1, col1), or `None` for an empty mask.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut found = false;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    found = true;
                    r0 = r0.min(r);
                    c0 = c0.min(c);
                    r1 = r1.max(r);
                    c1 = c1.max(c);
                }
            }
        }
        found.then_some((r0, c0, r1, c1))
    }
}

/// Three-channel 8-bit raster; channels stored as separate planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoColorImage {
    pub width: usize,
    pub height: usize,
    pub r: Vec<u8>,
    pub g: Vec<u8>,
    pub b: Vec<u8>,
}

impl PseudoColorImage {
    pub fn new(width: usize, height: usize, r: Vec<u8>, g: Vec<u8>, b: Vec<u8>) -> Result<Self> {
        let n = width * height;
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::Invariant(format!(
                "channel lengths {}/{}/{} != {}x{}",
                r.len(),
                g.len(),
                b.len(),
                width,
                height
            )));
        }
        Ok(PseudoColorImage { width, height, r, g, b })
    }
}

/// Pixel connectivity used by component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Labels connected components of the set pixels in raster scan order.
///
/// Returns a row-major label raster (0 = background, components numbered
/// from 1 in order of first encounter) and the number of components.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start_r in 0..h {
        for start_c in 0..w {
            if !mask.get(start_r, start_c) || labels[start_r * w + start_c] != 0 {
                continue;
            }
            next += 1;
            labels[start_r * w + start_c] = next;
            stack.push((start_r, start_c));
            while let Some((r, c)) = stack.pop() {
                let r0 = r.saturating_sub(1);
                let r1 = (r + 1).min(h - 1);
                let c0 = c.saturating_sub(1);
                let c1 = (c + 1).min(w - 1);
                for nr in r0..=r1 {
                    for nc in c0..=c1 {
                        if (nr, nc) == (r, c) {
                            continue;
                        }
                        if conn == Connectivity::Four && nr != r && nc != c {
                            continue;
                        }
                        let idx = nr * w + nc;
                        if mask.bits[idx] && labels[idx] == 0 {
                            labels[idx] = next;
                            stack.push((nr, nc));
                        }
                    }
                }
            }
        }
    }
    (labels, next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows
            .iter()
            .flat_map(|r| r.chars().map(|ch| ch == '#'))
            .collect();
        BinaryMask::new(w, h, bits).unwrap()
    }

    #[test]
    fn image_invariants_are_enforced() {
        assert!(GrayImage16::new(2, 2, vec![0; 3], 0.07).is_err());
        assert!(GrayImage16::new(2, 2, vec![0; 4], 0.0).is_err());
        assert!(GrayImage16::new(2, 2, vec![0; 4], 0.07).is_ok());
        assert!(PseudoColorImage::new(2, 1, vec![0, 0], vec![0], vec![0, 0]).is_err());
    }

    #[test]
    fn bbox_finds_tight_box() {
        let m = mask_from(&["....", ".##.", ".#..", "...."]);
        assert_eq!(m.bbox(), Some((1, 1, 2, 2)));
        assert_eq!(BinaryMask::filled(3, 3, false).bbox(), None);
    }

    #[test]
    fn eight_connectivity_joins_diagonals_four_does_not() {
        let m = mask_from(&["#.", ".#"]);
        let (labels8, n8) = connected_components(&m, Connectivity::Eight);
        assert_eq!(n8, 1, "diagonal pixels are one 8-connected component");
        assert_eq!(labels8, vec![1, 0, 0, 1]);
        let (_, n4) = connected_components(&m, Connectivity::Four);
        assert_eq!(n4, 2, "diagonal pixels are separate 4-connected components");
    }

    #[test]
    fn components_are_labelled_in_scan_order() {
        let m = mask_from(&["#..#", "#...", "....", "..##"]);
        let (labels, n) = connected_components(&m, Connectivity::Eight);
        assert_eq!(n, 3);
        assert_eq!(labels[0], 1, "top-left component encountered first");
        assert_eq!(labels[3], 2);
        assert_eq!(labels[14], 3);
    }
}
