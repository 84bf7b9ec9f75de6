//! Batch command-line interface.
//!
//! Six subcommands cover the pipeline stages individually and end to end:
//! `preprocess`, `sift`, `detect`, `evaluate`, `pipeline`, and the hidden
//! `morph-selftest`. Every invocation writes a `run.json` provenance
//! record — resolved configuration, input digests, and outcome — next to
//! its outputs, even when it fails. Exit codes: 0 success, 1 usage or
//! validation problem, 2 filesystem problem.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::detection::{
    blob_detect, export_detections, DetectorConfig, DetectorParams,
};
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::{aggregate, emit_report, evaluate_split, EvalParams, FrocCurve};
use crate::imgdata::{
    load_band_raw, load_gray16, load_mask8, save_band_raw, save_gray16, save_mask8, save_rgb8,
    DatasetManifest, FoldRole, GrayImage16, GrayImage32,
};
use crate::morphology;
use crate::preprocess::{preprocess, PreprocessResult, PreprocessSidecar};
use crate::sifting::{compose_pcm, sift, SiftConfig, SiftOutput};

/// Top-level configuration document accepted by `pipeline`, `detect`,
/// and `evaluate`. Every section has defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub sift: SiftConfig,
    pub detector: DetectorConfig,
    pub eval: EvalParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sift.validate()?;
        self.detector.validate()?;
        self.eval.validate()
    }
}

#[derive(Parser)]
#[command(
    name = "mammosift",
    version,
    about = "Pseudo-color mammogram pipeline: morphological sifting, blob detection, FROC scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the breast region of every manifest image and emit
    /// working-resolution images, masks, and geometry sidecars.
    Preprocess(PreprocessArgs),
    /// Run multi-scale morphological sifting over one working image.
    Sift(SiftArgs),
    /// Run the baseline blob detector over previously written sift bands.
    Detect(DetectArgs),
    /// Score per-image detections against manifest annotations.
    Evaluate(EvaluateArgs),
    /// Full run: preprocess, sift, detect (or import), evaluate.
    Pipeline(PipelineArgs),
    /// Compare the fast line opening against its naive composition.
    #[command(name = "morph-selftest", hide = true)]
    MorphSelftest(SelftestArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Output directory for `<stem>_pre.png`, `<stem>_mask.png`,
    /// `<stem>_pre.json`.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Override the manifest's pixel size (mm).
    #[arg(long, value_name = "MM")]
    pixel_size: Option<f64>,
    /// Worker threads (default: available cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SiftArgs {
    /// Preprocessed 16-bit working image.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Breast mask at working resolution (8-bit PNG).
    #[arg(long, value_name = "FILE")]
    mask: PathBuf,
    /// Sifting parameters (JSON); defaults used when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output prefix X for `X_band<i>.png`, `X_band<i>.raw`, `X_pcm.png`.
    #[arg(long, value_name = "PREFIX")]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Band prefix X written by `sift` (reads `X_band<i>.raw`).
    #[arg(long, value_name = "PREFIX")]
    bands: PathBuf,
    /// Breast mask at working resolution (8-bit PNG).
    #[arg(long, value_name = "FILE")]
    mask: PathBuf,
    /// Detection file to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Override the threshold quantile.
    #[arg(long, value_name = "Q")]
    quantile: Option<f64>,
    /// Pipeline configuration (JSON); defaults used when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Directory holding `<stem>_pre.json` geometry sidecars.
    #[arg(long, value_name = "DIR")]
    pre_dir: PathBuf,
    /// Directory holding `<stem>_det.json` detection files.
    #[arg(long, value_name = "DIR")]
    detections_dir: PathBuf,
    /// Output directory for report.json, FROC CSVs, and froc.svg.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Fold to score.
    #[arg(long, default_value = "test", value_parser = parse_role)]
    role: FoldRole,
    /// Override the reference FPI.
    #[arg(long, value_name = "FPI")]
    fpi_ref: Option<f64>,
    /// Override the true-positive DSI threshold.
    #[arg(long, value_name = "DSI")]
    dsi_threshold: Option<f64>,
    /// Pipeline configuration (JSON); defaults used when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Output root; stages write to pre/, sift/, det/ below it.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Pipeline configuration (JSON); defaults used when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Score externally produced `<stem>_det.json` files instead of
    /// running the baseline detector.
    #[arg(long, value_name = "DIR")]
    detections_dir: Option<PathBuf>,
    /// Fold to score.
    #[arg(long, default_value = "test", value_parser = parse_role)]
    role: FoldRole,
    /// Worker threads (default: available cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Random rasters per (length, angle) pair.
    #[arg(long, default_value_t = 100, value_name = "N")]
    images: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 9, value_name = "SEED")]
    seed: u64,
    /// Directory for run.json.
    #[arg(long, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,
}

/// Parses the CLI arguments (the first element is the binary name) and
/// runs the selected subcommand, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1; --help and --version exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Sift(a) => cmd_sift(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::MorphSelftest(a) => cmd_selftest(a),
    }
}

fn parse_role(s: &str) -> std::result::Result<FoldRole, String> {
    match s {
        "train" => Ok(FoldRole::Train),
        "validation" => Ok(FoldRole::Validation),
        "test" => Ok(FoldRole::Test),
        other => Err(format!("unknown role {other:?} (expected train, validation, or test)")),
    }
}

// ------------------------------------------------------------ provenance

/// Outcome of a command: `Err` carries the name of the failing stage.
type StageResult = std::result::Result<(), (String, Error)>;

/// Tags a stage result with its stage name for the provenance record.
fn stage<T>(name: &str, r: Result<T>) -> std::result::Result<T, (String, Error)> {
    r.map_err(|e| (name.to_string(), e))
}

/// Accumulates everything that goes into `run.json` and writes it when
/// the command finishes, successfully or not.
struct RunRecord {
    command: &'static str,
    dir: PathBuf,
    io: Value,
    config: Value,
    digests: BTreeMap<String, String>,
}

impl RunRecord {
    fn new(command: &'static str, dir: PathBuf, io: Value) -> Self {
        RunRecord { command, dir, io, config: Value::Null, digests: BTreeMap::new() }
    }

    /// Records the SHA-256 of an input file; unreadable files are simply
    /// absent (the stage that needs them reports the real error).
    fn digest(&mut self, path: &Path) {
        if let Some(hex) = sha256_hex(path) {
            self.digests.insert(path.display().to_string(), hex);
        }
    }

    /// Writes `run.json` (best effort) and maps the outcome to an exit
    /// code: validation failures exit 1, filesystem failures exit 2.
    fn finish(self, outcome: StageResult) -> i32 {
        let mut doc = serde_json::Map::new();
        doc.insert("command".into(), json!(self.command));
        doc.insert("io".into(), self.io);
        doc.insert("config".into(), self.config);
        doc.insert("inputs_sha256".into(), json!(self.digests));
        match &outcome {
            Ok(()) => {
                doc.insert("status".into(), json!("ok"));
            }
            Err((stage_name, err)) => {
                doc.insert("status".into(), json!("failed"));
                doc.insert("failed_stage".into(), json!(stage_name));
                doc.insert("error".into(), json!(err.to_string()));
            }
        }
        let text = serde_json::to_string_pretty(&Value::Object(doc))
            .expect("run record serializes") + "\n";
        let _ = fs::create_dir_all(&self.dir);
        let _ = fs::write(self.dir.join("run.json"), text);
        match outcome {
            Ok(()) => 0,
            Err((stage_name, err)) => {
                eprintln!("error: {} stage failed: {err}", stage_name);
                match err.kind() {
                    ErrorKind::Validation => 1,
                    ErrorKind::Io => 2,
                }
            }
        }
    }
}

fn sha256_hex(path: &Path) -> Option<String> {
    let bytes = fs::read(path).ok()?;
    Some(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

// --------------------------------------------------------------- helpers

/// `prefix` + literal `suffix` as a path: `out/scan` + `_band1.raw`
/// gives `out/scan_band1.raw`.
fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Directory that receives `run.json` for a file/prefix argument.
fn parent_or_dot(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Final path component of a band prefix, used as the image stem.
fn stem_of(prefix: &Path) -> Result<String> {
    prefix
        .file_name()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "prefix {} has no file-name component",
                prefix.display()
            ))
        })
}

/// Strict JSON loader: unknown keys and type mismatches are schema
/// errors carrying the offending path.
fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        detail: format!("{}: {}", e.path(), e.inner()),
    })
}

fn load_sift_config(path: Option<&Path>) -> Result<SiftConfig> {
    let cfg = match path {
        None => SiftConfig::default(),
        Some(p) => load_json(p)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_pipeline_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        None => PipelineConfig::default(),
        Some(p) => load_json(p)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Every distinct image in the manifest keyed by stem, in stem order.
/// The same stem naming two different files is rejected because all
/// per-image outputs are keyed by stem.
fn unique_images(manifest: &DatasetManifest) -> Result<Vec<(String, PathBuf)>> {
    let mut map: BTreeMap<String, PathBuf> = BTreeMap::new();
    for split in &manifest.splits {
        for entry in &split.entries {
            let stem = entry.stem();
            match map.get(&stem) {
                None => {
                    map.insert(stem, entry.image_path.clone());
                }
                Some(existing) if *existing == entry.image_path => {}
                Some(existing) => {
                    return Err(Error::InvalidConfig(format!(
                        "image stem {stem:?} names both {} and {}",
                        existing.display(),
                        entry.image_path.display()
                    )))
                }
            }
        }
    }
    Ok(map.into_iter().collect())
}

fn annotation_paths(manifest: &DatasetManifest) -> BTreeSet<PathBuf> {
    manifest
        .splits
        .iter()
        .flat_map(|s| &s.entries)
        .filter_map(|e| e.annotation_path.clone())
        .collect()
}

/// Resolves the worker-thread count and builds a scoped rayon pool.
fn build_pool(jobs: Option<usize>) -> Result<(usize, rayon::ThreadPool)> {
    let jobs = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build a {jobs}-thread pool: {e}")))?;
    Ok((jobs, pool))
}

/// 16-bit export of a response band: each orientation sum is divided by
/// the orientation count and rounded (half up), so the result fits u16.
fn band_to_png16(band: &GrayImage32, num_orientations: usize, pixel_size_mm: f64) -> GrayImage16 {
    let n = num_orientations.max(1) as u32;
    let pixels = band.pixels.iter().map(|&v| ((v + n / 2) / n).min(65535) as u16).collect();
    GrayImage16::new(band.width, band.height, pixels, pixel_size_mm)
        .expect("band dimensions carry over")
}

// ---------------------------------------------------------------- stages

/// Preprocesses every image into `out_dir`, returning the in-memory
/// results for downstream stages. Parallel over images; the first error
/// in stem order wins.
fn run_preprocess(
    images: &[(String, PathBuf)],
    pixel_size_mm: f64,
    out_dir: &Path,
) -> Result<Vec<(String, PreprocessResult)>> {
    create_dir(out_dir)?;
    let results: Vec<Result<(String, PreprocessResult)>> = images
        .par_iter()
        .map(|(stem, path)| {
            let img = load_gray16(path, pixel_size_mm)?;
            let res = preprocess(&img)?;
            save_gray16(&out_dir.join(format!("{stem}_pre.png")), &res.image)?;
            save_mask8(&out_dir.join(format!("{stem}_mask.png")), &res.breast_mask)?;
            PreprocessSidecar::from_result(&res, (img.height, img.width))
                .save(&out_dir.join(format!("{stem}_pre.json")))?;
            Ok((stem.clone(), res))
        })
        .collect();
    results.into_iter().collect()
}

/// Writes all sift artifacts for one image: lossless `_band<i>.raw`,
/// display `_band<i>.png` (orientation-averaged), and — when the scale
/// count is exactly two — the `_pcm.png` composite.
fn write_sift_outputs(
    prefix: &Path,
    out: &SiftOutput,
    working: &GrayImage16,
    breast_mask: &crate::imgdata::BinaryMask,
) -> Result<()> {
    for (i, band) in out.bands.iter().enumerate() {
        let k = i + 1;
        save_band_raw(&prefixed(prefix, &format!("_band{k}.raw")), band)?;
        let png = band_to_png16(band, out.config.num_orientations, working.pixel_size_mm);
        save_gray16(&prefixed(prefix, &format!("_band{k}.png")), &png)?;
    }
    if out.bands.len() == 2 {
        let pcm = compose_pcm(working, out, breast_mask)?;
        save_rgb8(&prefixed(prefix, "_pcm.png"), &pcm)?;
    }
    Ok(())
}

/// Sifts every preprocessed image into `out_dir` (prefix = stem).
fn run_sift(
    pre: &[(String, PreprocessResult)],
    cfg: &SiftConfig,
    out_dir: &Path,
) -> Result<Vec<(String, SiftOutput)>> {
    create_dir(out_dir)?;
    let results: Vec<Result<(String, SiftOutput)>> = pre
        .par_iter()
        .map(|(stem, res)| {
            let out = sift(&res.image, cfg)?;
            write_sift_outputs(&out_dir.join(stem), &out, &res.image, &res.breast_mask)?;
            Ok((stem.clone(), out))
        })
        .collect();
    results.into_iter().collect()
}

/// Runs the baseline detector over every sifted image and exports
/// `<stem>_det.json` files.
fn run_detect(
    sifted: &[(String, SiftOutput)],
    pre: &[(String, PreprocessResult)],
    params: &DetectorParams,
    out_dir: &Path,
) -> Result<()> {
    create_dir(out_dir)?;
    let results: Vec<Result<()>> = sifted
        .par_iter()
        .zip(pre.par_iter())
        .map(|((stem, out), (_, res))| {
            let dets = blob_detect(out, &res.breast_mask, params)?;
            export_detections(&out_dir.join(format!("{stem}_det.json")), stem, &dets)
        })
        .collect();
    results.into_iter().collect()
}

/// Scores every split of the manifest and emits report.json, per-split
/// FROC CSVs, and froc.svg into `out_dir`.
fn run_evaluate(
    manifest: &DatasetManifest,
    role: FoldRole,
    pre_dir: &Path,
    det_dir: &Path,
    params: &EvalParams,
    out_dir: &Path,
) -> Result<()> {
    let mut metrics = Vec::with_capacity(manifest.splits.len());
    let mut curves: Vec<(u32, FrocCurve)> = Vec::with_capacity(manifest.splits.len());
    for split in &manifest.splits {
        let (m, curve) =
            evaluate_split(split, role, pre_dir, det_dir, manifest.pixel_size_mm, params)?;
        curves.push((split.id, curve));
        metrics.push(m);
    }
    let report = aggregate(metrics, params.fpi_ref)?;
    emit_report(&report, &curves, out_dir)
}

// -------------------------------------------------------------- commands

fn cmd_preprocess(a: PreprocessArgs) -> i32 {
    let mut run = RunRecord::new(
        "preprocess",
        a.out_dir.clone(),
        json!({
            "manifest": a.manifest,
            "out_dir": a.out_dir,
            "pixel_size": a.pixel_size,
            "jobs": a.jobs,
        }),
    );
    run.digest(&a.manifest);
    let outcome = (|| {
        let manifest = stage("config", DatasetManifest::load(&a.manifest))?;
        let images = stage("config", unique_images(&manifest))?;
        let pixel_size_mm = a.pixel_size.unwrap_or(manifest.pixel_size_mm);
        let (jobs, pool) = stage("config", build_pool(a.jobs))?;
        run.config = json!({ "pixel_size_mm": pixel_size_mm, "jobs": jobs });
        for (_, path) in &images {
            run.digest(path);
        }
        stage(
            "preprocess",
            pool.install(|| run_preprocess(&images, pixel_size_mm, &a.out_dir)),
        )?;
        Ok(())
    })();
    run.finish(outcome)
}

fn cmd_sift(a: SiftArgs) -> i32 {
    let mut run = RunRecord::new(
        "sift",
        parent_or_dot(&a.out_prefix),
        json!({
            "in": a.input,
            "mask": a.mask,
            "config": a.config,
            "out_prefix": a.out_prefix,
        }),
    );
    run.digest(&a.input);
    run.digest(&a.mask);
    if let Some(cfg) = &a.config {
        run.digest(cfg);
    }
    let outcome = (|| {
        let cfg = stage("config", load_sift_config(a.config.as_deref()))?;
        run.config = json!({ "sift": cfg });
        let eff = cfg.pixel_size_mm * cfg.resize_factor as f64;
        let img = stage("sift", load_gray16(&a.input, eff))?;
        let mask = stage("sift", load_mask8(&a.mask))?;
        stage(
            "sift",
            check_dims("mask vs image", (mask.height, mask.width), (img.height, img.width)),
        )?;
        let out = stage("sift", sift(&img, &cfg))?;
        stage("sift", create_dir(&parent_or_dot(&a.out_prefix)))?;
        stage("sift", write_sift_outputs(&a.out_prefix, &out, &img, &mask))?;
        Ok(())
    })();
    run.finish(outcome)
}

fn cmd_detect(a: DetectArgs) -> i32 {
    let mut run = RunRecord::new(
        "detect",
        parent_or_dot(&a.out),
        json!({
            "bands": a.bands,
            "mask": a.mask,
            "out": a.out,
            "quantile": a.quantile,
            "config": a.config,
        }),
    );
    run.digest(&a.mask);
    if let Some(cfg) = &a.config {
        run.digest(cfg);
    }
    let outcome = (|| {
        let mut cfg = stage("config", load_pipeline_config(a.config.as_deref()))?;
        if let Some(q) = a.quantile {
            cfg.detector.quantile_q = q;
        }
        let eff = cfg.sift.pixel_size_mm * cfg.sift.resize_factor as f64;
        let params = stage(
            "config",
            DetectorParams::resolve(&cfg.detector, cfg.sift.a_min_mm2, cfg.sift.a_max_mm2, eff),
        )?;
        run.config = json!({
            "sift": cfg.sift,
            "detector": cfg.detector,
            "derived": {
                "effective_pixel_size_mm": eff,
                "min_area_px": params.min_area_px,
                "max_area_px": params.max_area_px,
            },
        });
        let image_stem = stage("config", stem_of(&a.bands))?;
        let mask = stage("detect", load_mask8(&a.mask))?;
        let mut bands = Vec::with_capacity(cfg.sift.num_scales);
        for k in 1..=cfg.sift.num_scales {
            let path = prefixed(&a.bands, &format!("_band{k}.raw"));
            run.digest(&path);
            let band = stage("detect", load_band_raw(&path))?;
            stage(
                "detect",
                check_dims(
                    &format!("band {k} vs mask"),
                    (band.height, band.width),
                    (mask.height, mask.width),
                ),
            )?;
            bands.push(band);
        }
        let out = SiftOutput { bands, config: cfg.sift.clone() };
        let dets = stage("detect", blob_detect(&out, &mask, &params))?;
        stage("detect", create_dir(&parent_or_dot(&a.out)))?;
        stage("detect", export_detections(&a.out, &image_stem, &dets))?;
        Ok(())
    })();
    run.finish(outcome)
}

fn cmd_evaluate(a: EvaluateArgs) -> i32 {
    let mut run = RunRecord::new(
        "evaluate",
        a.out_dir.clone(),
        json!({
            "manifest": a.manifest,
            "pre_dir": a.pre_dir,
            "detections_dir": a.detections_dir,
            "out_dir": a.out_dir,
            "role": a.role.to_string(),
            "fpi_ref": a.fpi_ref,
            "dsi_threshold": a.dsi_threshold,
            "config": a.config,
        }),
    );
    run.digest(&a.manifest);
    if let Some(cfg) = &a.config {
        run.digest(cfg);
    }
    let outcome = (|| {
        let manifest = stage("config", DatasetManifest::load(&a.manifest))?;
        let cfg = stage("config", load_pipeline_config(a.config.as_deref()))?;
        let mut eval = cfg.eval;
        if let Some(fpi) = a.fpi_ref {
            eval.fpi_ref = fpi;
        }
        if let Some(dsi) = a.dsi_threshold {
            eval.dsi_threshold = dsi;
        }
        stage("config", eval.validate())?;
        run.config = json!({ "eval": eval });
        for split in &manifest.splits {
            for entry in split.entries.iter().filter(|e| e.fold_role == a.role) {
                let stem = entry.stem();
                run.digest(&a.pre_dir.join(format!("{stem}_pre.json")));
                run.digest(&a.detections_dir.join(format!("{stem}_det.json")));
                if let Some(ann) = &entry.annotation_path {
                    run.digest(ann);
                }
            }
        }
        stage(
            "evaluate",
            run_evaluate(&manifest, a.role, &a.pre_dir, &a.detections_dir, &eval, &a.out_dir),
        )?;
        Ok(())
    })();
    run.finish(outcome)
}

fn cmd_pipeline(a: PipelineArgs) -> i32 {
    let pre_dir = a.out_dir.join("pre");
    let sift_dir = a.out_dir.join("sift");
    let det_out = a.out_dir.join("det");
    let mut run = RunRecord::new(
        "pipeline",
        a.out_dir.clone(),
        json!({
            "manifest": a.manifest,
            "out_dir": a.out_dir,
            "config": a.config,
            "detections_dir": a.detections_dir,
            "role": a.role.to_string(),
            "jobs": a.jobs,
        }),
    );
    run.digest(&a.manifest);
    if let Some(cfg) = &a.config {
        run.digest(cfg);
    }
    let outcome = (|| {
        let manifest = stage("config", DatasetManifest::load(&a.manifest))?;
        let mut cfg = stage("config", load_pipeline_config(a.config.as_deref()))?;
        // The manifest is authoritative for the physical spacing of its
        // own images.
        cfg.sift.pixel_size_mm = manifest.pixel_size_mm;
        stage("config", cfg.validate())?;
        let eff = cfg.sift.pixel_size_mm * cfg.sift.resize_factor as f64;
        let params = stage(
            "config",
            DetectorParams::resolve(&cfg.detector, cfg.sift.a_min_mm2, cfg.sift.a_max_mm2, eff),
        )?;
        let (jobs, pool) = stage("config", build_pool(a.jobs))?;
        run.config = json!({
            "sift": cfg.sift,
            "detector": cfg.detector,
            "eval": cfg.eval,
            "jobs": jobs,
            "derived": {
                "effective_pixel_size_mm": eff,
                "min_area_px": params.min_area_px,
                "max_area_px": params.max_area_px,
            },
        });
        let images = stage("config", unique_images(&manifest))?;
        for (_, path) in &images {
            run.digest(path);
        }
        for ann in annotation_paths(&manifest) {
            run.digest(&ann);
        }
        if let Some(dir) = &a.detections_dir {
            for split in &manifest.splits {
                for entry in split.entries.iter().filter(|e| e.fold_role == a.role) {
                    run.digest(&dir.join(format!("{}_det.json", entry.stem())));
                }
            }
        }
        pool.install(|| {
            let pre = stage(
                "preprocess",
                run_preprocess(&images, manifest.pixel_size_mm, &pre_dir),
            )?;
            let sifted = stage("sift", run_sift(&pre, &cfg.sift, &sift_dir))?;
            let det_dir = match &a.detections_dir {
                Some(external) => external.clone(),
                None => {
                    stage("detect", run_detect(&sifted, &pre, &params, &det_out))?;
                    det_out.clone()
                }
            };
            stage(
                "evaluate",
                run_evaluate(&manifest, a.role, &pre_dir, &det_dir, &cfg.eval, &a.out_dir),
            )?;
            Ok(())
        })
    })();
    run.finish(outcome)
}

fn cmd_selftest(a: SelftestArgs) -> i32 {
    const SIDE: usize = 32;
    const LENGTHS: [usize; 3] = [3, 9, 15];
    const ANGLES: usize = 18;
    let mut run = RunRecord::new(
        "morph-selftest",
        a.out_dir.clone(),
        json!({ "out_dir": a.out_dir }),
    );
    run.config = json!({
        "images": a.images,
        "side": SIDE,
        "lengths": LENGTHS,
        "angles": ANGLES,
        "seed": a.seed,
    });
    let report = morphology::selftest(a.images, SIDE, &LENGTHS, ANGLES, a.seed);
    println!(
        "morphology selftest: {} passed, {} failed ({} cases)",
        report.cases - report.failures,
        report.failures,
        report.cases
    );
    let outcome = if report.failures == 0 {
        Ok(())
    } else {
        stage(
            "selftest",
            Err(Error::Invariant(format!(
                "fast line opening disagreed with the naive composition in {} of {} cases",
                report.failures, report.cases
            ))),
        )
    };
    run.finish(outcome)
}
