//! Multi-scale morphological sifting and pseudo-color composition.
//!
//! Each scale band keeps structures whose diameter falls between two
//! structuring-element lengths m1 < m2: opening with length-m2 lines
//! removes everything the band cares about (its residue isolates it),
//! and re-opening the residue with length-m1 lines erases what is too
//! small. Summing the re-opened residues over N line orientations makes
//! the response isotropic. The two lengths per scale come from a
//! geometric ladder between the smallest and largest mass areas
//! considered clinically relevant, converted from mm² to pixels at the
//! working resolution.
//!
//! The pseudo-color image packs the normalized working image into R, the
//! fine-scale band into G, and the coarse-scale band into B, so small
//! masses render yellow-ish (R+G) and large ones purple-ish (R+B).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgdata::{BinaryMask, GrayImage16, GrayImage32, PseudoColorImage};
use crate::morphology::{make_line_se, open_line};

/// Sifting parameters. `pixel_size_mm` is the original spacing P and
/// `resize_factor` the subsampling S, so working-resolution spacing is
/// P·S; the scale ladder only ever uses the product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiftConfig {
    /// Smallest mass area considered, mm².
    pub a_min_mm2: f64,
    /// Largest mass area considered, mm².
    pub a_max_mm2: f64,
    /// Number of scale bands I.
    pub num_scales: usize,
    /// Number of line orientations N per band.
    pub num_orientations: usize,
    /// Original pixel spacing P in mm.
    pub pixel_size_mm: f64,
    /// Subsampling factor S applied by preprocessing.
    pub resize_factor: u32,
}

impl Default for SiftConfig {
    fn default() -> Self {
        SiftConfig {
            a_min_mm2: 15.0,
            a_max_mm2: 3689.0,
            num_scales: 2,
            num_orientations: 18,
            pixel_size_mm: 0.07,
            resize_factor: 4,
        }
    }
}

impl SiftConfig {
    /// Checks the field invariants, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.a_min_mm2 > 0.0 && self.a_min_mm2.is_finite()) {
            return fail(format!("a_min_mm2 must be positive and finite, got {}", self.a_min_mm2));
        }
        if !(self.a_max_mm2 > self.a_min_mm2 && self.a_max_mm2.is_finite()) {
            return fail(format!(
                "a_max_mm2 must exceed a_min_mm2 ({}), got {}",
                self.a_min_mm2, self.a_max_mm2
            ));
        }
        if self.num_scales == 0 {
            return fail("num_scales must be at least 1".into());
        }
        if self.num_orientations == 0 {
            return fail("num_orientations must be at least 1".into());
        }
        if !(self.pixel_size_mm > 0.0 && self.pixel_size_mm.is_finite()) {
            return fail(format!(
                "pixel_size_mm must be positive and finite, got {}",
                self.pixel_size_mm
            ));
        }
        if self.resize_factor == 0 {
            return fail("resize_factor must be at least 1".into());
        }
        Ok(())
    }
}

/// One rung of the scale ladder: structuring-element magnitudes in
/// pixels, real-valued and rounded to the nearest odd integer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleBand {
    /// 1-based scale index.
    pub index: usize,
    pub m1_px: f64,
    pub m2_px: f64,
    pub m1_rounded: usize,
    pub m2_rounded: usize,
}

/// Orientation-summed residue bands, one per scale.
#[derive(Debug, Clone)]
pub struct SiftOutput {
    pub bands: Vec<GrayImage32>,
    pub config: SiftConfig,
}

/// Nearest odd integer, ties (even integers) rounding up.
fn nearest_odd(x: f64) -> usize {
    debug_assert!(x >= 0.0);
    let k = ((x - 1.0) / 2.0 + 0.5).floor().max(0.0) as usize;
    2 * k + 1
}

/// Builds the scale ladder: with D = 2·√(A/π)/(P·S) the pixel diameter
/// of an area-A mass at working resolution,
/// m1(i) = D(A_min)·(A_max/A_min)^((i−1)/(2I)) and m2(i) uses exponent
/// i/(2I), so consecutive bands share an edge: m1(i+1) == m2(i) exactly.
///
/// The config must already be validated.
pub fn compute_scale_bands(cfg: &SiftConfig) -> Vec<ScaleBand> {
    debug_assert!(cfg.validate().is_ok());
    let spacing = cfg.pixel_size_mm * cfg.resize_factor as f64;
    let base = 2.0 / spacing * (cfg.a_min_mm2 / std::f64::consts::PI).sqrt();
    let ratio = cfg.a_max_mm2 / cfg.a_min_mm2;
    let scales = cfg.num_scales as f64;
    (1..=cfg.num_scales)
        .map(|i| {
            // Written so the m1 exponent of scale i+1 is the bitwise-same
            // expression as the m2 exponent of scale i.
            let m1 = base * ratio.powf(0.5 * (i as f64 - 1.0) / scales);
            let m2 = base * ratio.powf(0.5 * i as f64 / scales);
            ScaleBand {
                index: i,
                m1_px: m1,
                m2_px: m2,
                m1_rounded: nearest_odd(m1),
                m2_rounded: nearest_odd(m2),
            }
        })
        .collect()
}

fn orientation_band(f: &GrayImage16, band: &ScaleBand, theta_deg: f64) -> Vec<u16> {
    let se2 = make_line_se(band.m2_rounded, theta_deg);
    let opened = open_line(f, &se2);
    let mut residue = f.clone();
    for (r, &o) in residue.pixels.iter_mut().zip(&opened.pixels) {
        debug_assert!(*r >= o, "opening must be anti-extensive");
        *r -= o;
    }
    let se1 = make_line_se(band.m1_rounded, theta_deg);
    open_line(&residue, &se1).pixels
}

/// One scale of the sift: Σ over n of
/// open(F − open(F, L(m2, θₙ)), L(m1, θₙ)) with θₙ = n·180°/N.
///
/// Each residue is nonnegative (opening is anti-extensive) and fits u16;
/// the orientation sum is accumulated in u32 (max N·65535 stays far
/// below 2³²). Orientations run in parallel; integer addition makes the
/// reduction order irrelevant.
pub fn mms_single_scale(f: &GrayImage16, band: &ScaleBand, n_orientations: usize) -> GrayImage32 {
    assert!(!f.is_empty(), "mms_single_scale requires a nonempty image");
    assert!(n_orientations >= 1);
    let pixels = (0..n_orientations)
        .into_par_iter()
        .map(|n| orientation_band(f, band, 180.0 * n as f64 / n_orientations as f64))
        .fold(
            || vec![0u32; f.pixels.len()],
            |mut acc, part| {
                for (a, &p) in acc.iter_mut().zip(&part) {
                    *a += p as u32;
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; f.pixels.len()],
            |mut a, b| {
                for (x, &y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );
    GrayImage32 { width: f.width, height: f.height, pixels }
}

/// Runs every scale of the ladder over the working image.
pub fn sift(f: &GrayImage16, cfg: &SiftConfig) -> Result<SiftOutput> {
    cfg.validate()?;
    let bands = compute_scale_bands(cfg)
        .iter()
        .map(|band| mms_single_scale(f, band, cfg.num_orientations))
        .collect();
    Ok(SiftOutput { bands, config: cfg.clone() })
}

/// Linear 8-bit display scaling: min/max are taken over `region` (or the
/// whole image when `None`), v → round(255·(v−min)/(max−min)), and
/// pixels outside the region go through the same affine map clamped to
/// [0, 255]. A constant (or empty) region yields all zeros.
pub fn scale_to_8bit<T: Copy + Into<u32>>(pixels: &[T], region: Option<&BinaryMask>) -> Vec<u8> {
    if let Some(mask) = region {
        assert_eq!(mask.bits.len(), pixels.len(), "region must match the raster");
    }
    let in_region = |i: usize| region.is_none_or(|m| m.bits[i]);
    let mut bounds: Option<(u32, u32)> = None;
    for (i, &p) in pixels.iter().enumerate() {
        if in_region(i) {
            let v = p.into();
            bounds = Some(bounds.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))));
        }
    }
    let Some((lo, hi)) = bounds else {
        return vec![0; pixels.len()];
    };
    if lo == hi {
        return vec![0; pixels.len()];
    }
    let span = (hi - lo) as f64;
    pixels
        .iter()
        .map(|&p| {
            let d = (p.into() as i64 - lo as i64) as f64;
            (d * 255.0 / span + 0.5).floor().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Packs the working image and the two sift bands into an RGB raster:
/// R ← working image, G ← scale-1 band, B ← scale-2 band, each
/// min–max-scaled over the breast mask.
///
/// The composition is defined for exactly two scales; other counts are
/// rejected. Dimensions must agree (panics otherwise).
pub fn compose_pcm(
    gm: &GrayImage16,
    bands: &SiftOutput,
    breast_mask: &BinaryMask,
) -> Result<PseudoColorImage> {
    if bands.bands.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "pseudo-color composition is defined for exactly 2 scale bands, got {}",
            bands.bands.len()
        )));
    }
    assert_eq!((gm.width, gm.height), (breast_mask.width, breast_mask.height));
    for band in &bands.bands {
        assert_eq!((gm.width, gm.height), (band.width, band.height));
    }
    Ok(PseudoColorImage {
        width: gm.width,
        height: gm.height,
        r: scale_to_8bit(&gm.pixels, Some(breast_mask)),
        g: scale_to_8bit(&bands.bands[0].pixels, Some(breast_mask)),
        b: scale_to_8bit(&bands.bands[1].pixels, Some(breast_mask)),
    })
}
