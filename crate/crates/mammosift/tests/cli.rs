//! End-to-end tests of the `mammosift` binary: exit codes, artifact
//! layout, provenance records, determinism, and the equivalence of the
//! staged subcommands with the all-in-one pipeline.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mammosift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mammosift"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| {
        panic!("cannot read {}: {e}", path.display());
    }))
    .unwrap()
}

/// Parses a `fpi,tpr` CSV written by the evaluator.
fn read_froc_csv(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("fpi,tpr"), "CSV header");
    lines
        .map(|l| {
            let (fpi, tpr) = l.split_once(',').expect("two columns");
            (fpi.parse().unwrap(), tpr.parse().unwrap())
        })
        .collect()
}

#[test]
fn pipeline_reaches_full_sensitivity_on_the_phantom_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = common::build_phantom_dataset(dir.path());
    let out = dir.path().join("out");

    let run = mammosift(&[
        "pipeline",
        "--manifest",
        manifest.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_ok(&run);

    // Stage artifacts for every image, report files at the root.
    for stem in ["scana", "scanb", "scanc"] {
        for file in [
            format!("pre/{stem}_pre.png"),
            format!("pre/{stem}_mask.png"),
            format!("pre/{stem}_pre.json"),
            format!("sift/{stem}_band1.raw"),
            format!("sift/{stem}_band2.raw"),
            format!("sift/{stem}_band1.png"),
            format!("sift/{stem}_band2.png"),
            format!("sift/{stem}_pcm.png"),
            format!("det/{stem}_det.json"),
        ] {
            assert!(out.join(&file).is_file(), "{file} missing");
        }
    }
    for file in ["report.json", "froc_split0.csv", "froc_split1.csv", "froc.svg", "run.json"] {
        assert!(out.join(file).is_file(), "{file} missing");
    }

    // The massy scans yield detections, the mass-free one none.
    assert!(!json_file(&out.join("det/scana_det.json"))["detections"]
        .as_array()
        .unwrap()
        .is_empty());
    assert!(json_file(&out.join("det/scanb_det.json"))["detections"]
        .as_array()
        .unwrap()
        .is_empty());

    // Both splits reach TPR 1.0 within one false positive per image.
    let report = json_file(&out.join("report.json"));
    assert_eq!(report["dsi_resolution"], "subsampled");
    assert_eq!(report["splits"].as_array().unwrap().len(), 2);
    assert_eq!(report["aggregate"]["tpr_at_ref_fpi"]["mean"], 1.0);
    for split in [0, 1] {
        let curve = read_froc_csv(&out.join(format!("froc_split{split}.csv")));
        assert!(
            curve.iter().any(|&(fpi, tpr)| fpi <= 1.0 && tpr == 1.0),
            "split {split} never reaches TPR 1.0 below FPI 1.0: {curve:?}"
        );
    }

    // Provenance: resolved config and digests for every input.
    let record = json_file(&out.join("run.json"));
    assert_eq!(record["status"], "ok");
    assert_eq!(record["config"]["sift"]["num_orientations"], 18);
    assert_eq!(record["config"]["detector"]["quantile_q"], 0.97);
    assert_eq!(record["config"]["eval"]["fpi_ref"], 0.9);
    let digests = record["inputs_sha256"].as_object().unwrap();
    // manifest + config + 3 images + 2 annotations
    assert_eq!(digests.len(), 7, "digests: {digests:?}");
    assert!(digests.values().all(|v| v.as_str().unwrap().len() == 64));
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = common::build_phantom_dataset(dir.path());
    let (out1, out2) = (dir.path().join("run1"), dir.path().join("run2"));
    for out in [&out1, &out2] {
        assert_ok(&mammosift(&[
            "pipeline",
            "--manifest",
            manifest.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            // Different thread counts must not change any artifact.
            "--jobs",
            if out == &out1 { "1" } else { "3" },
        ]));
    }
    for file in [
        "report.json",
        "froc_split0.csv",
        "froc_split1.csv",
        "froc.svg",
        "det/scana_det.json",
        "det/scanb_det.json",
        "det/scanc_det.json",
        "sift/scana_band1.raw",
        "pre/scanc_pre.png",
    ] {
        assert_eq!(
            fs::read(out1.join(file)).unwrap(),
            fs::read(out2.join(file)).unwrap(),
            "{file} differs between reruns"
        );
    }
}

#[test]
fn staged_commands_reproduce_the_pipeline_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = common::build_phantom_dataset(dir.path());
    let out = dir.path().join("out");
    assert_ok(&mammosift(&[
        "pipeline",
        "--manifest",
        manifest.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));

    // preprocess alone reproduces the pipeline's pre/ artifacts.
    let pre = dir.path().join("staged_pre");
    assert_ok(&mammosift(&[
        "preprocess",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        pre.to_str().unwrap(),
    ]));
    for file in ["scana_pre.png", "scana_mask.png", "scana_pre.json"] {
        assert_eq!(
            fs::read(pre.join(file)).unwrap(),
            fs::read(out.join("pre").join(file)).unwrap(),
            "{file} differs from the pipeline's"
        );
    }

    // sift over the standalone outputs matches the pipeline's bands.
    let sift_prefix = dir.path().join("staged_sift").join("scana");
    assert_ok(&mammosift(&[
        "sift",
        "--in",
        pre.join("scana_pre.png").to_str().unwrap(),
        "--mask",
        pre.join("scana_mask.png").to_str().unwrap(),
        "--out-prefix",
        sift_prefix.to_str().unwrap(),
    ]));
    for suffix in ["_band1.raw", "_band2.raw", "_band1.png", "_pcm.png"] {
        let staged = format!("{}{suffix}", sift_prefix.display());
        assert_eq!(
            fs::read(staged).unwrap(),
            fs::read(out.join("sift").join(format!("scana{suffix}"))).unwrap(),
            "{suffix} differs from the pipeline's"
        );
    }

    // detect over those bands matches the pipeline's detections.
    let det = dir.path().join("staged_det").join("scana_det.json");
    assert_ok(&mammosift(&[
        "detect",
        "--bands",
        sift_prefix.to_str().unwrap(),
        "--mask",
        pre.join("scana_mask.png").to_str().unwrap(),
        "--quantile",
        "0.97",
        "--out",
        det.to_str().unwrap(),
    ]));
    assert_eq!(
        fs::read(&det).unwrap(),
        fs::read(out.join("det/scana_det.json")).unwrap(),
        "detections differ from the pipeline's"
    );

    // evaluate over the pipeline's intermediates matches its report.
    let eval = dir.path().join("staged_eval");
    assert_ok(&mammosift(&[
        "evaluate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--pre-dir",
        out.join("pre").to_str().unwrap(),
        "--detections-dir",
        out.join("det").to_str().unwrap(),
        "--out-dir",
        eval.to_str().unwrap(),
    ]));
    assert_eq!(
        fs::read(eval.join("report.json")).unwrap(),
        fs::read(out.join("report.json")).unwrap(),
        "report differs from the pipeline's"
    );
}

#[test]
fn external_detections_skip_the_detector_and_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = common::build_phantom_dataset(dir.path());

    // Preprocess once to obtain the geometry sidecars, then hand the
    // ground truth itself in as external detections.
    let pre = dir.path().join("pre");
    assert_ok(&mammosift(&[
        "preprocess",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        pre.to_str().unwrap(),
    ]));
    let external = dir.path().join("external");
    common::write_perfect_detections(&manifest, &pre, &external);

    let out = dir.path().join("out");
    assert_ok(&mammosift(&[
        "pipeline",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--detections-dir",
        external.to_str().unwrap(),
    ]));

    // No det/ directory of its own, but sift artifacts still exist.
    assert!(!out.join("det").exists());
    assert!(out.join("sift/scana_pcm.png").is_file());

    // Perfect detections: TPR 1.0 at FPI 0 with DSI 1.0 in both splits.
    let report = json_file(&out.join("report.json"));
    for split in report["splits"].as_array().unwrap() {
        assert_eq!(split["tpr_at_ref_fpi"], 1.0);
        assert_eq!(split["mean_dsi"], 1.0);
    }
    for split in [0, 1] {
        let curve = read_froc_csv(&out.join(format!("froc_split{split}.csv")));
        assert!(
            curve.iter().all(|&(fpi, _)| fpi == 0.0),
            "split {split} should have no false positives: {curve:?}"
        );
        assert!(curve.iter().any(|&(_, tpr)| tpr == 1.0));
    }
}

#[test]
fn config_overrides_are_recorded_and_change_the_bands() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = common::build_phantom_dataset(dir.path());
    let six = dir.path().join("six.json");
    fs::write(
        &six,
        r#"{ "sift": { "num_orientations": 6 }, "detector": { "quantile_q": 0.97 } }"#,
    )
    .unwrap();

    let (out18, out6) = (dir.path().join("out18"), dir.path().join("out6"));
    for (cfg, out) in [(&config, &out18), (&six, &out6)] {
        assert_ok(&mammosift(&[
            "pipeline",
            "--manifest",
            manifest.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]));
    }

    let record = json_file(&out6.join("run.json"));
    assert_eq!(record["config"]["sift"]["num_orientations"], 6);
    assert_ne!(
        fs::read(out18.join("sift/scana_band1.raw")).unwrap(),
        fs::read(out6.join("sift/scana_band1.raw")).unwrap(),
        "orientation count must change the band sums"
    );
}

#[test]
fn missing_detection_files_fail_the_evaluate_stage_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = common::build_phantom_dataset(dir.path());
    let pre = dir.path().join("pre");
    assert_ok(&mammosift(&[
        "preprocess",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        pre.to_str().unwrap(),
    ]));

    let empty = dir.path().join("no_detections");
    fs::create_dir_all(&empty).unwrap();
    let out = dir.path().join("out");
    let run = mammosift(&[
        "evaluate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--pre-dir",
        pre.to_str().unwrap(),
        "--detections-dir",
        empty.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(2));

    let record = json_file(&out.join("run.json"));
    assert_eq!(record["status"], "failed");
    assert_eq!(record["failed_stage"], "evaluate");
    let error = record["error"].as_str().unwrap();
    assert!(
        error.contains("scana_det.json") && error.contains("scanb_det.json"),
        "missing files should be enumerated: {error}"
    );
}

#[test]
fn usage_errors_exit_1_and_missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();

    let unknown = mammosift(&["pipeline", "--frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&unknown.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "usage not shown: {stderr}");

    let out = dir.path().join("out");
    let missing = mammosift(&[
        "pipeline",
        "--manifest",
        dir.path().join("absent.json").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let record = json_file(&out.join("run.json"));
    assert_eq!(record["status"], "failed");
    assert_eq!(record["failed_stage"], "config");
    assert!(record["error"].as_str().unwrap().contains("not found"));
}

#[test]
fn morph_selftest_prints_a_passing_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let run = mammosift(&[
        "morph-selftest",
        "--images",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_ok(&run);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("0 failed"), "unexpected summary: {stdout}");
    // 3 images × 3 lengths × 18 angles
    assert!(stdout.contains("162 cases"), "unexpected case count: {stdout}");
    assert_eq!(json_file(&dir.path().join("run.json"))["status"], "ok");
}
