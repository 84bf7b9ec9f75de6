//! Two-level Daubechies-2 low-pass subsampling.
//!
//! Each level filters rows then columns with the 4-tap db2 analysis
//! low-pass and keeps even-indexed samples, so two levels shrink the side
//! by a factor of 4 (ceil division per level). The taps are
//! mean-normalized (they sum to 1, not √2) so the subband stays in the
//! input intensity range and constants pass through unchanged. Boundaries
//! use symmetric half-point extension (edge sample duplicated). All
//! intermediate arithmetic is f64; rounding to u16 happens once at the
//! end, half up, clamped to [0, 65535].

use crate::error::{Error, Result};
use crate::imgdata::GrayImage16;

/// Mean-normalized db2 analysis low-pass taps: (1±√3)/8 and (3±√3)/8.
fn lowpass_taps() -> [f64; 4] {
    let s3 = 3f64.sqrt();
    [(1.0 + s3) / 8.0, (3.0 + s3) / 8.0, (3.0 - s3) / 8.0, (1.0 - s3) / 8.0]
}

/// One analysis level along a signal:
/// `filtered[i] = Σ_j h[j] · ext(i + j − 1)` over the symmetric
/// half-point extension (`ext(−1) = s[0]`, `ext(n) = s[n−1]`, …), keeping
/// even-indexed samples. Output length is ceil(n/2).
fn lowpass_decimate(src: &[f64], dst: &mut Vec<f64>) {
    let n = src.len() as isize;
    debug_assert!(n >= 3, "extension below assumes a single reflection");
    let h = lowpass_taps();
    dst.clear();
    for k in 0..(src.len() + 1) / 2 {
        let mut acc = 0.0;
        for (j, &hj) in h.iter().enumerate() {
            let t = 2 * k as isize + j as isize - 1;
            let t = if t < 0 {
                -t - 1
            } else if t >= n {
                2 * n - 1 - t
            } else {
                t
            };
            acc += hj * src[t as usize];
        }
        dst.push(acc);
    }
}

/// One separable level on a row-major f64 matrix: rows first, then
/// columns. Returns the shrunk matrix and its dimensions.
fn level(mat: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let w2 = (w + 1) / 2;
    let h2 = (h + 1) / 2;
    let mut rows_done = vec![0.0; w2 * h];
    let mut buf = Vec::with_capacity(w2.max(h2));
    for r in 0..h {
        lowpass_decimate(&mat[r * w..(r + 1) * w], &mut buf);
        rows_done[r * w2..(r + 1) * w2].copy_from_slice(&buf);
    }
    let mut out = vec![0.0; w2 * h2];
    let mut col = Vec::with_capacity(h);
    for c in 0..w2 {
        col.clear();
        col.extend((0..h).map(|r| rows_done[r * w2 + c]));
        lowpass_decimate(&col, &mut buf);
        for (r, &v) in buf.iter().enumerate() {
            out[r * w2 + c] = v;
        }
    }
    (out, w2, h2)
}

/// Returns the level-2 low-pass subband of a square image: side shrinks
/// to ceil(ceil(side/2)/2) and the pixel spacing grows by 4×.
///
/// The input must already be square (callers pad first); sides below 8
/// are rejected as degenerate.
pub fn wavelet_downsample(img: &GrayImage16) -> Result<GrayImage16> {
    assert_eq!(img.width, img.height, "wavelet_downsample expects a padded square image");
    let side = img.width;
    if side < 8 {
        return Err(Error::DegenerateInput(format!(
            "image side {side} is too small to subsample (minimum 8)"
        )));
    }
    let mat: Vec<f64> = img.pixels.iter().map(|&p| p as f64).collect();
    let (mat, w, h) = level(&mat, side, side);
    let (mat, w, h) = level(&mat, w, h);
    debug_assert_eq!((w, h), ((side + 3) / 4, (side + 3) / 4));
    let pixels = mat
        .iter()
        .map(|&v| (v + 0.5).floor().clamp(0.0, 65535.0) as u16)
        .collect();
    Ok(GrayImage16 {
        width: w,
        height: h,
        pixels,
        pixel_size_mm: img.pixel_size_mm * 4.0,
    })
}
