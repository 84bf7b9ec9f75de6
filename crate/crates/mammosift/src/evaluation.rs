//! Detection scoring: Dice similarity, TP/FP/FN matching, FROC curves,
//! and the report artifacts (CSV, JSON, SVG).
//!
//! A detection is a true positive when its Dice similarity index (DSI)
//! to an unclaimed ground-truth mass reaches 0.2; matching is greedy in
//! descending score order, and duplicates on an already-claimed mass
//! count as false positives. FROC curves sweep the threshold over every
//! distinct detection score (plus +∞ for the empty operating point);
//! TPR is pooled over all masses in a split and FPI over all images,
//! including mass-free ones. Summary metrics are TPR at a reference FPI
//! (linear interpolation), the partial area under the FROC curve over
//! FPI ∈ [0, 5] normalized to [0, 1], and the mean DSI over TP pairs at
//! the operating threshold whose FPI is closest to the reference from
//! below. Cross-split aggregation reports mean ± population standard
//! deviation.
//!
//! All masks here live at the pipeline's working (subsampled)
//! resolution; ground truth enters full-resolution and is mapped through
//! the same crop/pad/decimate geometry as the images, which report.json
//! records as `"dsi_resolution": "subsampled"`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{import_detections, Detection};
use crate::error::{Error, Result};
use crate::imgdata::{load_annotation, BinaryMask, FoldRole, GroundTruthMass, ManifestSplit};
use crate::preprocess::{transform_mask_to_working, PreprocessSidecar};

/// Default DSI threshold for counting a detection as a true positive.
pub const DEFAULT_DSI_THRESHOLD: f64 = 0.2;

/// FPI range of the partial area under the FROC curve.
pub const AUFC_FPI_RANGE: (f64, f64) = (0.0, 5.0);

/// Evaluation knobs shared by the library API and the CLI config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    /// DSI at or above which a detection counts as a true positive.
    pub dsi_threshold: f64,
    /// Reference FPI for the headline TPR and mean-DSI readouts.
    pub fpi_ref: f64,
    /// FPI integration range of the partial AUFC.
    pub aufc_range: (f64, f64),
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            dsi_threshold: DEFAULT_DSI_THRESHOLD,
            fpi_ref: 0.9,
            aufc_range: AUFC_FPI_RANGE,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dsi_threshold > 0.0 && self.dsi_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "dsi_threshold must be in (0, 1], got {}",
                self.dsi_threshold
            )));
        }
        if !(self.fpi_ref.is_finite() && self.fpi_ref >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "fpi_ref must be finite and >= 0, got {}",
                self.fpi_ref
            )));
        }
        let (lo, hi) = self.aufc_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(Error::InvalidConfig(format!(
                "aufc_range must satisfy 0 <= lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Dice similarity index: 2·|a∩b| / (|a|+|b|).
///
/// Comparing two empty masks is a caller bug (an evaluation never
/// compares two empty regions), so it is rejected rather than defined
/// as zero.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch(format!(
            "dice over {}x{} vs {}x{} masks",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        total += x as usize + y as usize;
    }
    if total == 0 {
        return Err(Error::DegenerateInput("dice of two empty masks".into()));
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Outcome of matching one image's detections against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// (detection index, ground-truth index, dsi), in claim order.
    pub tp_pairs: Vec<(usize, usize, f64)>,
    /// Indices of unmatched detections, ascending.
    pub fp_indices: Vec<usize>,
    /// Indices of unclaimed ground truths, ascending.
    pub fn_gt_indices: Vec<usize>,
}

/// Greedy matching in descending detection-score order: each detection
/// claims the unclaimed ground truth with the highest DSI, provided
/// that DSI reaches `dsi_threshold` (ties: the lower ground-truth
/// index). Detections that claim nothing are false positives — in
/// particular a second detection overlapping an already-claimed mass —
/// and unclaimed ground truths are false negatives.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthMass],
    dsi_threshold: f64,
) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let mut claimed = vec![false; gts.len()];
    let mut matched_det = vec![false; dets.len()];
    let mut tp_pairs = Vec::new();
    for &di in &order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if claimed[gi] {
                continue;
            }
            let d = dice(&dets[di].mask, &gt.mask).expect("nonempty masks of equal size");
            if d >= dsi_threshold && best.is_none_or(|(_, bd)| d > bd) {
                best = Some((gi, d));
            }
        }
        if let Some((gi, d)) = best {
            claimed[gi] = true;
            matched_det[di] = true;
            tp_pairs.push((di, gi, d));
        }
    }
    MatchResult {
        tp_pairs,
        fp_indices: (0..dets.len()).filter(|&i| !matched_det[i]).collect(),
        fn_gt_indices: (0..gts.len()).filter(|&i| !claimed[i]).collect(),
    }
}

/// A free-response operating characteristic curve: (FPI, TPR) points
/// with strictly increasing FPI and non-decreasing TPR.
#[derive(Debug, Clone, PartialEq)]
pub struct FrocCurve {
    pub points: Vec<(f64, f64)>,
}

impl FrocCurve {
    /// Validates the curve invariants.
    pub fn new(points: Vec<(f64, f64)>) -> Result<FrocCurve> {
        if points.is_empty() {
            return Err(Error::Invariant("FROC curve must have at least one point".into()));
        }
        for (i, &(fpi, tpr)) in points.iter().enumerate() {
            if !(fpi >= 0.0 && fpi.is_finite()) || !(0.0..=1.0).contains(&tpr) {
                return Err(Error::Invariant(format!(
                    "FROC point {i} = ({fpi}, {tpr}) outside the valid domain"
                )));
            }
            if i > 0 && (fpi <= points[i - 1].0 || tpr < points[i - 1].1) {
                return Err(Error::Invariant(format!(
                    "FROC points must have strictly increasing fpi and \
                     non-decreasing tpr; point {i} = ({fpi}, {tpr}) follows {:?}",
                    points[i - 1]
                )));
            }
        }
        Ok(FrocCurve { points })
    }
}

/// One threshold of the FROC sweep, before equal-FPI collapsing.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    /// Score cutoff; detections with score ≥ threshold are kept.
    /// `+∞` is the empty operating point.
    pub threshold: f64,
    pub fpi: f64,
    pub tpr: f64,
    /// DSI of every TP pair across the split at this threshold.
    pub tp_dsis: Vec<f64>,
}

/// Full FROC sweep over every distinct detection score (descending,
/// preceded by +∞), pooling TPs over all masses and FPs over all images
/// — mass-free images stay in the FPI denominator.
pub fn froc_detailed(
    dataset: &[(Vec<Detection>, Vec<GroundTruthMass>)],
    dsi_threshold: f64,
) -> Result<Vec<OperatingPoint>> {
    let n_masses: usize = dataset.iter().map(|(_, gts)| gts.len()).sum();
    if n_masses == 0 {
        return Err(Error::DegenerateInput(
            "FROC needs at least one ground-truth mass in the split".into(),
        ));
    }
    let n_images = dataset.len();

    let mut thresholds: Vec<f64> = dataset
        .iter()
        .flat_map(|(dets, _)| dets.iter().map(|d| d.score))
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds.insert(0, f64::INFINITY);

    let mut points = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let mut tps = 0usize;
        let mut fps = 0usize;
        let mut tp_dsis = Vec::new();
        for (dets, gts) in dataset {
            let kept: Vec<Detection> =
                dets.iter().filter(|d| d.score >= t).cloned().collect();
            let m = match_detections(&kept, gts, dsi_threshold);
            tps += m.tp_pairs.len();
            fps += m.fp_indices.len();
            tp_dsis.extend(m.tp_pairs.iter().map(|&(_, _, d)| d));
        }
        points.push(OperatingPoint {
            threshold: t,
            fpi: fps as f64 / n_images as f64,
            tpr: tps as f64 / n_masses as f64,
            tp_dsis,
        });
    }
    Ok(points)
}

/// FROC curve from the full sweep: points with equal FPI collapse to
/// the best TPR among them.
pub fn froc(
    dataset: &[(Vec<Detection>, Vec<GroundTruthMass>)],
    dsi_threshold: f64,
) -> Result<FrocCurve> {
    Ok(collapse(&froc_detailed(dataset, dsi_threshold)?))
}

/// Collapses a descending-threshold sweep into curve points: one point
/// per distinct FPI, keeping the maximum TPR.
fn collapse(sweep: &[OperatingPoint]) -> FrocCurve {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for p in sweep {
        match points.last_mut() {
            Some(last) if last.0 == p.fpi => last.1 = last.1.max(p.tpr),
            _ => points.push((p.fpi, p.tpr)),
        }
    }
    FrocCurve::new(points).expect("a descending-threshold sweep collapses to a valid curve")
}

/// TPR of the curve at an arbitrary FPI by linear interpolation.
///
/// The curve is extended left to (0, tpr of the zero-FP point if the
/// curve has one, else 0) and right with its final TPR, making this a
/// total function of `fpi_ref ≥ 0`.
pub fn tpr_at_fpi(curve: &FrocCurve, fpi_ref: f64) -> f64 {
    assert!(!curve.points.is_empty(), "FROC curve must be nonempty");
    assert!(fpi_ref >= 0.0, "FPI is nonnegative");
    let pts = &curve.points;
    let last = pts[pts.len() - 1];
    if fpi_ref >= last.0 {
        return last.1;
    }
    // Virtual left anchor at FPI 0.
    let left = if pts[0].0 == 0.0 { pts[0] } else { (0.0, 0.0) };
    let mut prev = left;
    for &p in pts {
        if fpi_ref <= p.0 {
            if p.0 == prev.0 {
                return p.1;
            }
            let w = (fpi_ref - prev.0) / (p.0 - prev.0);
            return prev.1 + w * (p.1 - prev.1);
        }
        prev = p;
    }
    unreachable!("fpi_ref < last.0 always brackets");
}

/// Partial area under the (extended, interpolated) FROC curve over
/// [`fpi_lo`, `fpi_hi`], divided by the range width so the result lies
/// in [0, 1].
pub fn partial_aufc(curve: &FrocCurve, fpi_lo: f64, fpi_hi: f64) -> Result<f64> {
    if !(fpi_hi > fpi_lo && fpi_lo >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "AUFC range must satisfy 0 <= lo < hi, got [{fpi_lo}, {fpi_hi}]"
        )));
    }
    // The integrand is piecewise linear with kinks only at curve points,
    // so trapezoids between consecutive breakpoints are exact.
    let mut xs = vec![fpi_lo];
    for &(fpi, _) in &curve.points {
        if fpi > fpi_lo && fpi < fpi_hi {
            xs.push(fpi);
        }
    }
    xs.push(fpi_hi);
    let mut area = 0.0;
    for w in xs.windows(2) {
        let (y0, y1) = (tpr_at_fpi(curve, w[0]), tpr_at_fpi(curve, w[1]));
        area += (w[1] - w[0]) * (y0 + y1) / 2.0;
    }
    Ok(area / (fpi_hi - fpi_lo))
}

/// Per-split summary metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitMetrics {
    pub split_id: u32,
    pub tpr_at_ref_fpi: f64,
    pub aufc: f64,
    /// Mean DSI over TP pairs at the operating threshold whose FPI is
    /// closest to the reference from below; 0 when that operating point
    /// has no TPs.
    pub mean_dsi: f64,
    pub n_images: usize,
    pub n_masses: usize,
}

/// Mean ± population standard deviation of one metric across splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateStat {
    pub mean: f64,
    pub std: f64,
}

impl AggregateStat {
    fn over(values: impl Iterator<Item = f64> + Clone) -> AggregateStat {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        AggregateStat { mean, std: var.sqrt() }
    }
}

/// Cross-split aggregates of the three summary metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateMetrics {
    pub tpr_at_ref_fpi: AggregateStat,
    pub aufc: AggregateStat,
    pub mean_dsi: AggregateStat,
}

/// Full evaluation report, serialized as report.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub fpi_ref: f64,
    /// Resolution at which DSI was computed; always "subsampled".
    pub dsi_resolution: String,
    pub splits: Vec<SplitMetrics>,
    pub aggregate: AggregateMetrics,
}

/// Evaluates every `role`-fold image of one split: loads its geometry
/// sidecar from `pre_dir` and detections from `det_dir` (both keyed by
/// image stem), maps annotations into working space, and computes the
/// FROC curve plus the summary metrics at `params.fpi_ref`.
///
/// Detection files missing for any image are enumerated in a single
/// error before anything is loaded.
pub fn evaluate_split(
    split: &ManifestSplit,
    role: FoldRole,
    pre_dir: &Path,
    det_dir: &Path,
    pixel_size_mm: f64,
    params: &EvalParams,
) -> Result<(SplitMetrics, FrocCurve)> {
    params.validate()?;
    let entries: Vec<_> = split.entries.iter().filter(|e| e.fold_role == role).collect();
    if entries.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "split {} has no {role} images",
            split.id
        )));
    }

    let missing: Vec<String> = entries
        .iter()
        .map(|e| det_dir.join(format!("{}_det.json", e.stem())))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingDetections(missing));
    }

    let mut dataset = Vec::with_capacity(entries.len());
    for entry in &entries {
        let stem = entry.stem();
        let sidecar = PreprocessSidecar::load(&pre_dir.join(format!("{stem}_pre.json")))?;
        let side = sidecar.working_side;
        let dets = import_detections(&det_dir.join(format!("{stem}_det.json")), side, side)?;
        let gts = match &entry.annotation_path {
            None => Vec::new(),
            Some(path) => {
                let (oh, ow) = sidecar.original_size;
                load_annotation(path, ow, oh, pixel_size_mm)?
                    .into_iter()
                    .map(|m| {
                        let working = transform_mask_to_working(
                            &m.mask,
                            sidecar.crop_offset,
                            sidecar.crop_size,
                        );
                        GroundTruthMass::new(working, sidecar.effective_pixel_size_mm)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        dataset.push((dets, gts));
    }

    let detailed = froc_detailed(&dataset, params.dsi_threshold)?;
    let curve = collapse(&detailed);
    let operating = detailed
        .iter()
        .filter(|p| p.fpi <= params.fpi_ref)
        .last()
        .expect("the +infinity threshold has FPI 0");
    let mean_dsi = if operating.tp_dsis.is_empty() {
        0.0
    } else {
        operating.tp_dsis.iter().sum::<f64>() / operating.tp_dsis.len() as f64
    };
    let metrics = SplitMetrics {
        split_id: split.id,
        tpr_at_ref_fpi: tpr_at_fpi(&curve, params.fpi_ref),
        aufc: partial_aufc(&curve, params.aufc_range.0, params.aufc_range.1)?,
        mean_dsi,
        n_images: entries.len(),
        n_masses: dataset.iter().map(|(_, g)| g.len()).sum(),
    };
    Ok((metrics, curve))
}

/// Aggregates per-split metrics into the final report.
pub fn aggregate(splits: Vec<SplitMetrics>, fpi_ref: f64) -> Result<EvalReport> {
    if splits.is_empty() {
        return Err(Error::DegenerateInput("no splits to aggregate".into()));
    }
    let stat = |f: fn(&SplitMetrics) -> f64| AggregateStat::over(splits.iter().map(f));
    Ok(EvalReport {
        fpi_ref,
        dsi_resolution: "subsampled".into(),
        aggregate: AggregateMetrics {
            tpr_at_ref_fpi: stat(|s| s.tpr_at_ref_fpi),
            aufc: stat(|s| s.aufc),
            mean_dsi: stat(|s| s.mean_dsi),
        },
        splits,
    })
}

/// Writes the report artifacts into `out_dir`: one `froc_split{k}.csv`
/// per curve (`fpi,tpr` rows), `report.json`, and `froc.svg` overlaying
/// the curves with each split's operating point at the reference FPI.
/// Output is byte-for-byte deterministic.
pub fn emit_report(
    report: &EvalReport,
    curves: &[(u32, FrocCurve)],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (k, curve) in curves {
        let mut csv = String::from("fpi,tpr\n");
        for &(fpi, tpr) in &curve.points {
            let _ = writeln!(csv, "{fpi},{tpr}");
        }
        let path = out_dir.join(format!("froc_split{k}.csv"));
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    let path = out_dir.join("report.json");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join("froc.svg");
    std::fs::write(&path, render_svg(report, curves)).map_err(|e| Error::io(&path, e))
}

const SVG_PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders the FROC overlay: one polyline per split (left/right extended
/// like the interpolation), a marker at (fpi_ref, TPR) each, axes with
/// fixed ticks, and a legend. Pure function of its inputs.
fn render_svg(report: &EvalReport, curves: &[(u32, FrocCurve)]) -> String {
    let (width, height) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);
    let x_max = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.0))
        .chain([AUFC_FPI_RANGE.1, report.fpi_ref])
        .fold(0.0f64, f64::max);
    let to_x = |fpi: f64| ml + fpi / x_max * pw;
    let to_y = |tpr: f64| mt + (1.0 - tpr) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
<rect width="{width}" height="{height}" fill="white"/>"#
    );
    // Gridlines and ticks: TPR every 0.2, FPI at unit steps.
    for i in 0..=5 {
        let tpr = i as f64 / 5.0;
        let y = to_y(tpr);
        let _ = writeln!(
            svg,
            r##"<line x1="{ml}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>
<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{tpr:.1}</text>"##,
            width - mr,
            ml - 6.0,
            y + 4.0
        );
    }
    let x_step = (x_max / 10.0).max(1.0).ceil();
    let mut fpi = 0.0;
    while fpi <= x_max + 1e-9 {
        let x = to_x(fpi);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>
<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">{fpi}</text>"##,
            height - mb,
            height - mb + 16.0
        );
        fpi += x_step;
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>
<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">false positives per image</text>
<text x="16" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 16 {:.2})">true positive rate</text>"#,
        ml + pw / 2.0,
        height - 10.0,
        mt + ph / 2.0,
        mt + ph / 2.0
    );

    for (i, (k, curve)) in curves.iter().enumerate() {
        let color = SVG_PALETTE[i % SVG_PALETTE.len()];
        // Extend to the plot edges exactly like the interpolation rule.
        let mut pts = vec![(0.0, tpr_at_fpi(curve, 0.0))];
        pts.extend(curve.points.iter().copied().filter(|p| p.0 > 0.0));
        let last = *pts.last().expect("at least the left anchor");
        if last.0 < x_max {
            pts.push((x_max, last.1));
        }
        let path: Vec<String> =
            pts.iter().map(|&(f, t)| format!("{:.2},{:.2}", to_x(f), to_y(t))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        let op_tpr = tpr_at_fpi(curve, report.fpi_ref);
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
            to_x(report.fpi_ref),
            to_y(op_tpr)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">split {k}</text>"#,
            ml + 10.0,
            mt + 16.0 + 14.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}
