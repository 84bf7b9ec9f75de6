//! Grayscale erosion, dilation, and opening with linear structuring
//! elements (LSEs) at arbitrary angles.
//!
//! Two implementations coexist deliberately: `erode_line`/`dilate_line`
//! are the naive per-pixel references, and [`open_line`] is the fast
//! running-extrema path. The fast path must be bit-identical to the naive
//! composition — `selftest` checks exactly that, and the oracle tests
//! below never share code between the two routes.
//!
//! Out-of-bounds samples are excluded from every min/max (±∞ identities),
//! the standard border-neutral convention.

mod fast;

use crate::imgdata::GrayImage16;

/// Linear structuring element: an odd-length 8-connected digital line
/// through the origin.
///
/// The digital line is built on a rational slope `p/q` chosen as the best
/// small-denominator approximation of the requested angle. This keeps the
/// offset pattern exactly periodic with period vector `step`, which is
/// what lets the fast path decompose the element into translated copies
/// of one period window. The canonical angles 0°, 45°, 90°, 135° have
/// exact slopes, and for pipeline-scale lengths the endpoint deviation
/// from the ideal line is kept at or below half a pixel whenever a
/// denominator ≤ 31 can achieve it.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSE {
    /// Number of pixels along the line; always odd.
    pub length_px: usize,
    /// Orientation in degrees, normalized to [0, 180).
    pub angle_deg: f64,
    /// (dy, dx) offsets centred on (0, 0), ordered by the dominant
    /// coordinate; point-symmetric about the origin.
    pub offsets: Vec<(i32, i32)>,
    /// Period vector `v`: `offsets[i + q] == offsets[i] + v` where `q` is
    /// the dominant component of `v`.
    pub(crate) step: (i32, i32),
}

const MAX_SLOPE_DEN: i64 = 31;

/// Best rational approximation `p/q` of `s` (|s| ≤ 1) with odd `q ≤ 31`:
/// the smallest `q` whose endpoint deviation `r·|s − p/q|` stays within
/// half a pixel, falling back to the global error minimum.
///
/// Only odd denominators are allowed because `k·p/q` then never lands
/// exactly on a half-integer, so rounding is tie-free and the offset
/// pattern is simultaneously point-symmetric (rounding is odd in `k`)
/// and exactly periodic (rounding commutes with shifts by `q`). With an
/// even `q`, a tie at `k·p/q = ±0.5` would break one of the two.
fn snap_slope(s: f64, half_len: i64) -> (i64, i64) {
    let mut best: Option<(f64, i64, i64)> = None;
    for q in (1..=MAX_SLOPE_DEN).step_by(2) {
        let p = (s * q as f64).round() as i64;
        let err = (s - p as f64 / q as f64).abs();
        if err * half_len as f64 <= 0.5 {
            return reduce(p, q);
        }
        if best.is_none_or(|(e, _, _)| err < e) {
            best = Some((err, p, q));
        }
    }
    let (_, p, q) = best.expect("q range is nonempty");
    reduce(p, q)
}

fn reduce(p: i64, q: i64) -> (i64, i64) {
    let g = gcd(p.unsigned_abs(), q.unsigned_abs()).max(1) as i64;
    (p / g, q / g)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// round-half-away-from-zero of `n/q` (`q > 0`) in pure integer
/// arithmetic. Odd in `n`, which is what makes the offsets
/// point-symmetric.
fn round_ratio(n: i64, q: i64) -> i64 {
    let m = (2 * n.abs() + q) / (2 * q);
    if n < 0 {
        -m
    } else {
        m
    }
}

/// Builds a linear structuring element of the given pixel length and
/// orientation.
///
/// Even lengths round up to the next odd integer so the element is
/// point-symmetric (self-reflective), making one element valid for both
/// halves of an opening. The line is traced from the origin in direction
/// (cos θ, −sin θ) — image rows grow downward — with unit steps along the
/// dominant axis. Angles are taken modulo 180°.
pub fn make_line_se(length_px: usize, angle_deg: f64) -> LineSE {
    assert!(length_px >= 1, "structuring element length must be >= 1");
    let length = if length_px % 2 == 0 { length_px + 1 } else { length_px };
    let half = (length as i64 - 1) / 2;
    let angle = angle_deg.rem_euclid(180.0);
    let (ux, uy) = (angle.to_radians().cos(), -angle.to_radians().sin());

    let x_dominant = ux.abs() >= uy.abs();
    let slope = if x_dominant { uy / ux } else { ux / uy };
    let (p, q) = snap_slope(slope, half.max(1));

    let mut offsets = Vec::with_capacity(length);
    for k in -half..=half {
        let b = round_ratio(k * p, q) as i32;
        let k = k as i32;
        offsets.push(if x_dominant { (b, k) } else { (k, b) });
    }
    let step = if x_dominant { (p as i32, q as i32) } else { (q as i32, p as i32) };

    debug_assert!(offsets.contains(&(0, 0)));
    debug_assert!(offsets.iter().all(|&(dy, dx)| offsets.contains(&(-dy, -dx))));
    LineSE { length_px: length, angle_deg: angle, offsets, step }
}

/// Naive reference erosion: out(p) = min over o of img(p + o), with
/// out-of-bounds samples excluded from the min.
pub fn erode_line(img: &GrayImage16, se: &LineSE) -> GrayImage16 {
    naive_extreme(img, se, u16::MAX, u16::min, 1)
}

/// Naive reference dilation: out(p) = max over o of img(p − o), with
/// out-of-bounds samples excluded from the max.
pub fn dilate_line(img: &GrayImage16, se: &LineSE) -> GrayImage16 {
    naive_extreme(img, se, 0, u16::max, -1)
}

fn naive_extreme(
    img: &GrayImage16,
    se: &LineSE,
    ident: u16,
    better: fn(u16, u16) -> u16,
    sign: isize,
) -> GrayImage16 {
    let (w, h) = (img.width as isize, img.height as isize);
    let mut out = Vec::with_capacity(img.pixels.len());
    for r in 0..h {
        for c in 0..w {
            let mut acc = ident;
            for &(dy, dx) in &se.offsets {
                let rr = r + sign * dy as isize;
                let cc = c + sign * dx as isize;
                if rr >= 0 && rr < h && cc >= 0 && cc < w {
                    acc = better(acc, img.pixels[(rr * w + cc) as usize]);
                }
            }
            out.push(acc);
        }
    }
    GrayImage16 {
        width: img.width,
        height: img.height,
        pixels: out,
        pixel_size_mm: img.pixel_size_mm,
    }
}

/// Morphological opening (erosion then dilation) via the fast
/// running-extrema path. Bit-identical to
/// `dilate_line(&erode_line(img, se), se)`.
pub fn open_line(img: &GrayImage16, se: &LineSE) -> GrayImage16 {
    fast::dilate(&fast::erode(img, se), se)
}

/// Outcome of the fast-vs-naive equivalence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelftestReport {
    pub cases: usize,
    pub failures: usize,
}

/// Runs the oracle-equivalence matrix: `n_images` random `side`×`side`
/// rasters × every length in `lengths` × `n_angles` evenly spaced angles,
/// comparing the fast opening against the naive composition pixel for
/// pixel.
pub fn selftest(
    n_images: usize,
    side: usize,
    lengths: &[usize],
    n_angles: usize,
    seed: u64,
) -> SelftestReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = SelftestReport { cases: 0, failures: 0 };
    for _ in 0..n_images {
        let pixels: Vec<u16> = (0..side * side).map(|_| rng.random()).collect();
        let img = GrayImage16 { width: side, height: side, pixels, pixel_size_mm: 1.0 };
        for &len in lengths {
            for a in 0..n_angles {
                let se = make_line_se(len, a as f64 * 180.0 / n_angles as f64);
                let fast_out = open_line(&img, &se);
                let naive_out = dilate_line(&erode_line(&img, &se), &se);
                report.cases += 1;
                if fast_out != naive_out {
                    report.failures += 1;
                }
            }
        }
    }
    report
}
