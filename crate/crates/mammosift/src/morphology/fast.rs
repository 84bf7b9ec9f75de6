//! Fast erosion/dilation engine behind [`super::open_line`].
//!
//! The structuring element's offset list is exactly periodic: offset
//! `i + q` equals offset `i` translated by the period vector `v`
//! (guaranteed by construction in `make_line_se`, where the digital line
//! has rational slope with odd denominator `q`). Splitting the `L`
//! offsets into `F = L / q` full period windows plus a remainder of
//! `ρ = L mod q` offsets turns one erosion into
//!
//! ```text
//! erode(P) = min( min_{j=0..F-1} W0(P + j·v),  Wlo(P + F·v) )
//! ```
//!
//! where `W0` is the min over the first `q` offsets and `Wlo` over the
//! first `ρ` (a prefix of `W0`, so both come out of one accumulation
//! pass). The `j`-minimum is folded by binary lifting — `log₂F` passes of
//! `D(X) = min(D(X), D(X + b·v))` — instead of a per-traversal running
//! window, so every pass is a contiguous row-slice operation that
//! vectorizes.
//!
//! Borders stay bit-exact through an extended grid: buffers live on the
//! raster enlarged by the base window's offset bounding box, the only
//! region where a window can still touch in-bounds pixels. Every position
//! outside that band would see out-of-bounds samples only, so clamping
//! reads beyond it to the fold identity (±∞) is exact, not approximate.

use crate::imgdata::GrayImage16;
use crate::morphology::LineSE;

trait Extremum {
    const IDENT: u16;
    fn better(a: u16, b: u16) -> u16;
}

enum MinOp {}
enum MaxOp {}

impl Extremum for MinOp {
    const IDENT: u16 = u16::MAX;
    #[inline(always)]
    fn better(a: u16, b: u16) -> u16 {
        a.min(b)
    }
}

impl Extremum for MaxOp {
    const IDENT: u16 = 0;
    #[inline(always)]
    fn better(a: u16, b: u16) -> u16 {
        a.max(b)
    }
}

pub(crate) fn erode(img: &GrayImage16, se: &LineSE) -> GrayImage16 {
    morph::<MinOp>(img, se)
}

/// Dilation reuses the erosion decomposition unchanged: the element is
/// point-symmetric, so max over img(p − o) equals max over img(p + o).
pub(crate) fn dilate(img: &GrayImage16, se: &LineSE) -> GrayImage16 {
    morph::<MaxOp>(img, se)
}

fn morph<E: Extremum>(img: &GrayImage16, se: &LineSE) -> GrayImage16 {
    let (w, h) = (img.width, img.height);
    let wrap = |pixels| GrayImage16 {
        width: w,
        height: h,
        pixels,
        pixel_size_mm: img.pixel_size_mm,
    };
    if w == 0 || h == 0 {
        return wrap(Vec::new());
    }

    let len = se.offsets.len();
    let (vy, vx) = (se.step.0 as isize, se.step.1 as isize);
    let q = (vy.unsigned_abs().max(vx.unsigned_abs())) as usize;
    debug_assert!(q >= 1, "period vector must be nonzero");
    debug_assert!(se.offsets.iter().skip(q).zip(&se.offsets).all(|(&(ay, ax), &(by, bx))| {
        (ay, ax) == (by + se.step.0, bx + se.step.1)
    }));
    let f = len / q;
    let rho = len % q;
    if f == 0 {
        // Element shorter than one period: plain streaming fold.
        return wrap(accumulate_raster::<E>(img, &se.offsets));
    }
    let w0_offsets = &se.offsets[..q];

    // Extended grid: raster united with the band of positions whose base
    // window still overlaps the raster.
    let (mut dy_min, mut dy_max, mut dx_min, mut dx_max) = (0i32, 0i32, 0i32, 0i32);
    for &(dy, dx) in w0_offsets {
        dy_min = dy_min.min(dy);
        dy_max = dy_max.max(dy);
        dx_min = dx_min.min(dx);
        dx_max = dx_max.max(dx);
    }
    let (wi, hi) = (w as isize, h as isize);
    let row_lo = 0isize.min(-(dy_max as isize));
    let row_hi = hi.max(hi - dy_min as isize);
    let col_lo = 0isize.min(-(dx_max as isize));
    let col_hi = wi.max(wi - dx_min as isize);
    let (he, we) = ((row_hi - row_lo) as usize, (col_hi - col_lo) as usize);
    let (oy, ox) = (-row_lo, -col_lo);

    // One accumulation pass builds W0, with Wlo snapshotted at its prefix.
    let mut cur = vec![E::IDENT; he * we];
    let mut wlo: Option<Vec<u16>> = None;
    for (i, &(dy, dx)) in w0_offsets.iter().enumerate() {
        if i == rho && rho != 0 {
            wlo = Some(cur.clone());
        }
        accumulate_ext::<E>(&mut cur, img, dy as isize, dx as isize, he, we, oy, ox);
    }

    // Binary lifting of the F-window: after each round, cur(X) holds the
    // fold of W0 over j in [0, b). The last partial shift overlaps ranges,
    // which is harmless for min/max.
    let mut scratch = vec![0u16; he * we];
    let mut b = 1usize;
    while b * 2 <= f {
        let s = b as isize;
        shift_combine::<E>(&cur, &mut scratch, s * vy, s * vx, he, we);
        std::mem::swap(&mut cur, &mut scratch);
        b *= 2;
    }
    if f > b {
        let s = (f - b) as isize;
        shift_combine::<E>(&cur, &mut scratch, s * vy, s * vx, he, we);
        std::mem::swap(&mut cur, &mut scratch);
    }
    if let Some(wlo_buf) = &wlo {
        let s = f as isize;
        fold_shifted::<E>(&mut cur, wlo_buf, s * vy, s * vx, he, we);
    }

    // Extract the raster-aligned region.
    let mut out = vec![0u16; w * h];
    for r in 0..h {
        let src = ((r as isize + oy) * we as isize + ox) as usize;
        out[r * w..(r + 1) * w].copy_from_slice(&cur[src..src + w]);
    }
    wrap(out)
}

/// Streaming offset-major fold over the plain raster:
/// acc(p) = fold over offsets of img(p + o), out-of-bounds excluded.
fn accumulate_raster<E: Extremum>(img: &GrayImage16, offsets: &[(i32, i32)]) -> Vec<u16> {
    let (w, h) = (img.width, img.height);
    let mut acc = vec![E::IDENT; w * h];
    for &(dy, dx) in offsets {
        accumulate_ext::<E>(&mut acc, img, dy as isize, dx as isize, h, w, 0, 0);
    }
    acc
}

/// Folds img(X + (dy, dx)) into an accumulator living on the extended
/// grid, where extended position (re, ce) is raster position
/// (re − oy, ce − ox). Rows run over contiguous slices.
fn accumulate_ext<E: Extremum>(
    acc: &mut [u16],
    img: &GrayImage16,
    dy: isize,
    dx: isize,
    he: usize,
    we: usize,
    oy: isize,
    ox: isize,
) {
    let (w, h) = (img.width as isize, img.height as isize);
    let r0 = (oy - dy).max(0);
    let r1 = (oy - dy + h).min(he as isize);
    let c0 = (ox - dx).max(0);
    let c1 = (ox - dx + w).min(we as isize);
    if r0 >= r1 || c0 >= c1 {
        return;
    }
    for re in r0..r1 {
        let dst_base = re as usize * we;
        let src_base = ((re - oy + dy) * w + (c0 - ox + dx)) as usize;
        let dst = &mut acc[dst_base + c0 as usize..dst_base + c1 as usize];
        let src = &img.pixels[src_base..src_base + (c1 - c0) as usize];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = E::better(*d, s);
        }
    }
}

/// dst(X) = better(src(X), src(X + (sy, sx))), with reads past the grid
/// treated as the identity (so those positions copy through unchanged).
fn shift_combine<E: Extremum>(
    src: &[u16],
    dst: &mut [u16],
    sy: isize,
    sx: isize,
    he: usize,
    we: usize,
) {
    let (hi, wi) = (he as isize, we as isize);
    let r0 = (-sy).max(0);
    let r1 = (hi - sy).min(hi);
    let c0 = (-sx).max(0);
    let c1 = (wi - sx).min(wi);
    for re in 0..he {
        let base = re * we;
        let dst_row = &mut dst[base..base + we];
        let src_row = &src[base..base + we];
        if (re as isize) < r0 || (re as isize) >= r1 || c0 >= c1 {
            dst_row.copy_from_slice(src_row);
            continue;
        }
        let (c0, c1) = (c0 as usize, c1 as usize);
        dst_row[..c0].copy_from_slice(&src_row[..c0]);
        dst_row[c1..].copy_from_slice(&src_row[c1..]);
        let sh_base = ((re as isize + sy) * wi + sx) as usize;
        let shifted = &src[sh_base + c0..sh_base + c1];
        for ((d, &a), &b) in dst_row[c0..c1].iter_mut().zip(&src_row[c0..c1]).zip(shifted) {
            *d = E::better(a, b);
        }
    }
}

/// acc(X) = better(acc(X), other(X + (sy, sx))), reads past the grid
/// excluded.
fn fold_shifted<E: Extremum>(
    acc: &mut [u16],
    other: &[u16],
    sy: isize,
    sx: isize,
    he: usize,
    we: usize,
) {
    let (hi, wi) = (he as isize, we as isize);
    let r0 = (-sy).max(0);
    let r1 = (hi - sy).min(hi);
    let c0 = (-sx).max(0);
    let c1 = (wi - sx).min(wi);
    if r0 >= r1 || c0 >= c1 {
        return;
    }
    for re in r0..r1 {
        let dst_base = re as usize * we;
        let src_base = ((re + sy) * wi + sx) as usize;
        let dst = &mut acc[dst_base + c0 as usize..dst_base + c1 as usize];
        let src = &other[src_base + c0 as usize..src_base + c1 as usize];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = E::better(*d, s);
        }
    }
}
