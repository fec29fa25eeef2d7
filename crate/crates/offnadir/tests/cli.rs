use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use offnadir::checkpoint::Checkpoint;
use offnadir::format::{dataset_to_json, read_dataset};
use offnadir::report::{read_report, report_to_csv};
use offnadir_core::eval::{MetricsReport, TrackMetrics};
use tempfile::TempDir;

fn offnadir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offnadir")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small scene plus predictions with the given extra synth flags.
fn synth(dir: &TempDir, extra: &[&str]) -> (PathBuf, PathBuf) {
    let (gt, pred) = (p(dir, "gt.json"), p(dir, "pred.json"));
    let mut args = vec!["synth", "--out", s(&gt), "--pred-out", s(&pred), "--seed", "11"];
    args.extend_from_slice(&["--width", "256", "--height", "256", "--buildings", "15", "--images", "3"]);
    args.extend_from_slice(extra);
    let o = offnadir(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (gt, pred)
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&offnadir(&["--help"])), 0);
    assert_eq!(code(&offnadir(&["evaluate", "--help"])), 0);
    let o = offnadir(&["validate", "--dataset", "x.json", "--bogus"]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    let o = offnadir(&["validate", "--dataset", "/definitely/missing.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));
    assert_eq!(code(&offnadir(&["synth", "--out", "x.json"])), 2, "seed is required");
}

#[test]
fn synthetic_dataset_validates_cleanly() {
    let dir = TempDir::new().unwrap();
    let (gt, _) = synth(&dir, &[]);
    let o = offnadir(&["validate", "--dataset", s(&gt)]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 1);
    assert!(table.contains("annotation_id"));
}

#[test]
fn broken_dataset_fails_validation() {
    let dir = TempDir::new().unwrap();
    let path = p(&dir, "bad.json");
    fs::write(
        &path,
        r#"{"images": [{"id": 1, "file_name": "a.png", "width": 64, "height": 64}],
            "annotations": [{"id": 4, "image_id": 1, "roof": [[0,0],[10,0],[10,10],[0,10]],
                             "offset": [3, 4], "footprint": [[3,4],[13,4],[13,14],[3,15]]}]}"#,
    )
    .unwrap();
    let o = offnadir(&["validate", "--dataset", s(&path)]);
    assert_eq!(code(&o), 1);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.lines().nth(1).unwrap().contains("footprint-consistency"), "{table}");
}

#[test]
fn malformed_json_reports_position() {
    let dir = TempDir::new().unwrap();
    let path = p(&dir, "bad.json");
    fs::write(&path, "{\"images\": [}\n").unwrap();
    let o = offnadir(&["validate", "--dataset", s(&path)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1 column"));
}

#[test]
fn derive_fills_fields_and_never_touches_input() {
    let dir = TempDir::new().unwrap();
    let input = p(&dir, "in.json");
    let text = r#"{"images": [{"id": 1, "file_name": "a.png", "width": 64, "height": 64}],
        "annotations": [{"id": 1, "image_id": 1, "roof": [[0,0],[0,10],[10,10],[10,0]], "offset": [0.1, 2.5]}]}"#;
    fs::write(&input, text).unwrap();
    let out = p(&dir, "out.json");
    assert_eq!(code(&offnadir(&["derive", "--dataset", s(&input), "--out", s(&out)])), 0);
    assert_eq!(fs::read_to_string(&input).unwrap(), text);
    let derived = fs::read_to_string(&out).unwrap();
    assert!(derived.contains("building_bbox") && derived.contains("footprint"));
    assert_eq!(dataset_to_json(&read_dataset(&out).unwrap()), derived);
    assert_eq!(code(&offnadir(&["derive", "--dataset", s(&input), "--out", s(&input)])), 2);
    assert_eq!(fs::read_to_string(&input).unwrap(), text);
}

#[test]
fn exact_predictions_score_100_on_both_tracks() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = synth(&dir, &[]);
    let (out, csv) = (p(&dir, "r.json"), p(&dir, "r.csv"));
    let before = (fs::read(&gt).unwrap(), fs::read(&pred).unwrap());
    let o = offnadir(&["evaluate", "--gt", s(&gt), "--pred", s(&pred), "--out", s(&out), "--csv", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(before, (fs::read(&gt).unwrap(), fs::read(&pred).unwrap()));
    let r = read_report(&out).unwrap();
    for t in [r.roof, r.footprint] {
        assert_eq!((t.f1, t.precision, t.recall, t.boundary_ap50, t.fp, t.fn_), (100.0, 100.0, 100.0, 100.0, 0, 0));
    }
    assert_eq!(r.mean_epe, Some(0.0));
    assert_eq!(fs::read_to_string(&csv).unwrap(), report_to_csv(&r.metrics()));
}

#[test]
fn evaluation_ignores_prediction_order_and_job_count() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = synth(&dir, &["--vertex-jitter", "1.5", "--offset-noise", "3", "--drop-rate", "0.2", "--spurious-rate", "2"]);
    let mut value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&pred).unwrap()).unwrap();
    value["annotations"].as_array_mut().unwrap().reverse();
    let reversed = p(&dir, "reversed.json");
    fs::write(&reversed, serde_json::to_string(&value).unwrap()).unwrap();
    let mut outputs = Vec::new();
    for space in ["raster", "polygon"] {
        outputs.clear();
        for (file, jobs) in [(&pred, "1"), (&reversed, "1"), (&pred, "4"), (&reversed, "3")] {
            let out = p(&dir, &format!("r{}.json", outputs.len()));
            let o = offnadir(&["evaluate", "--gt", s(&gt), "--pred", s(file), "--out", s(&out), "--jobs", jobs, "--iou-space", space]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            outputs.push(fs::read(&out).unwrap());
        }
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
        assert!(String::from_utf8_lossy(&outputs[0]).contains(&format!("\"iou_space\": \"{space}\"")));
    }
    let out = p(&dir, "bad.json");
    assert_eq!(code(&offnadir(&["evaluate", "--gt", s(&gt), "--pred", s(&pred), "--out", s(&out), "--iou-space", "vector"])), 2);
    let r = read_report(&p(&dir, "r0.json")).unwrap();
    assert!(r.footprint.f1 < 100.0 && r.footprint.fp > 0);
}

#[test]
fn unwritable_report_path_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = synth(&dir, &[]);
    let out = p(&dir, "missing/dir/r.json");
    assert_eq!(code(&offnadir(&["evaluate", "--gt", s(&gt), "--pred", s(&pred), "--out", s(&out)])), 2);
}

#[test]
fn prediction_for_unknown_image_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = synth(&dir, &[]);
    let text = fs::read_to_string(&pred).unwrap().replace("\"image_id\": 2", "\"image_id\": 99");
    fs::write(&pred, text).unwrap();
    let out = p(&dir, "r.json");
    let o = offnadir(&["evaluate", "--gt", s(&gt), "--pred", s(&pred), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("99"));
}

#[test]
fn csv_rows_carry_values_verbatim() {
    let track = |f1| TrackMetrics { f1, ..TrackMetrics::default() };
    let r = MetricsReport { roof: track(67.17), footprint: track(61.78), ..MetricsReport::default() };
    let csv = report_to_csv(&r);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "track,f1,precision,recall,ap50_boundary,mean_epe,tp,fp,fn");
    assert!(lines[1].starts_with("roof,67.17,"));
    assert!(lines[2].starts_with("footprint,61.78,"));
}

#[test]
fn synth_is_byte_deterministic_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let config = p(&dir, "scene.json");
    fs::write(&config, r#"{"width": 300, "height": 200, "n_buildings": 8, "footprint_kind": "l_shape", "images": 2}"#).unwrap();
    let noise = p(&dir, "noise.json");
    fs::write(&noise, r#"{"vertex_jitter_sigma": 1, "offset_noise_sigma": 2, "spurious_rate": 1}"#).unwrap();
    let run = |seed: &str, tag: &str| {
        let (gt, pred) = (p(&dir, &format!("gt{tag}.json")), p(&dir, &format!("pred{tag}.json")));
        let o = offnadir(&["synth", "--config", s(&config), "--noise", s(&noise), "--out", s(&gt), "--pred-out", s(&pred), "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (fs::read(gt).unwrap(), fs::read(pred).unwrap())
    };
    let a = run("5", "a");
    assert_eq!(a, run("5", "b"));
    assert_ne!(a.0, run("6", "c").0);
    let d = read_dataset(&p(&dir, "gta.json")).unwrap();
    assert_eq!(d.images().len(), 2);
    assert_eq!(d.annotations().len(), 16);
}

#[test]
fn bad_scene_config_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = p(&dir, "scene.json");
    fs::write(&config, r#"{"nadir_angle": 75}"#).unwrap();
    let o = offnadir(&["synth", "--config", s(&config), "--out", s(&p(&dir, "g.json")), "--seed", "1"]);
    assert_eq!(code(&o), 2);
    fs::write(&config, r#"{"n_buildings": 5000, "width": 64, "height": 64}"#).unwrap();
    let o = offnadir(&["synth", "--config", s(&config), "--out", s(&p(&dir, "g.json")), "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("5000"));
}

#[test]
fn train_toy_is_deterministic_and_checkpoints_round_trip() {
    let dir = TempDir::new().unwrap();
    let run = |tag: &str| {
        let (ck, rep) = (p(&dir, &format!("{tag}.ckpt")), p(&dir, &format!("{tag}.json")));
        let o = offnadir(&["train-toy", "--angles", "0,90,180,270", "--fusion", "max_norm", "--steps", "400", "--seed", "3", "--out", s(&ck), "--report", s(&rep)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (ck, rep)
    };
    let (ck1, rep1) = run("a");
    let (ck2, rep2) = run("b");
    assert_eq!(fs::read(&rep1).unwrap(), fs::read(&rep2).unwrap());
    assert_eq!(fs::read(&ck1).unwrap(), fs::read(&ck2).unwrap());

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&rep1).unwrap()).unwrap();
    let configs = report["configurations"].as_array().unwrap();
    assert_eq!(configs.len(), 2);
    assert_eq!(configs[1]["angles_deg"], serde_json::json!([0.0]));
    assert!(report["rotated_ratio"].as_f64().unwrap() > 0.0);

    let loaded = Checkpoint::load(&ck1).unwrap();
    assert_eq!(loaded.header.angles_deg, vec![0.0, 90.0, 180.0, 270.0]);
    let resaved = p(&dir, "c.ckpt");
    loaded.save(&resaved).unwrap();
    assert_eq!(fs::read(&resaved).unwrap(), fs::read(&ck1).unwrap());
    assert_eq!(Checkpoint::load(&resaved).unwrap(), loaded);
}

#[test]
fn train_toy_rejects_bad_arguments() {
    let dir = TempDir::new().unwrap();
    let (ck, rep) = (p(&dir, "a.ckpt"), p(&dir, "a.json"));
    let base = ["train-toy", "--seed", "1", "--out", s(&ck), "--report", s(&rep)];
    let with = |extra: &[&str]| code(&offnadir(&[&base[..], extra].concat()));
    assert_eq!(with(&["--fusion", "median"]), 2);
    assert_eq!(with(&["--angles", "0,abc"]), 2);
    assert_eq!(code(&offnadir(&["train-toy", "--out", s(&ck), "--report", s(&rep)])), 2, "seed is required");
}

#[test]
fn masks_are_written_per_annotation() {
    let dir = TempDir::new().unwrap();
    let (gt, _) = synth(&dir, &[]);
    let out = p(&dir, "masks");
    assert_eq!(code(&offnadir(&["masks", "--dataset", s(&gt), "--out-dir", s(&out), "--track", "roof"])), 0);
    let n = read_dataset(&gt).unwrap().annotations().len();
    let files: Vec<_> = fs::read_dir(&out).unwrap().collect();
    assert_eq!(files.len(), n);
    let first = fs::read(files[0].as_ref().unwrap().path()).unwrap();
    assert!(first.starts_with(b"P4\n256 256\n"));
    assert_eq!(first.len(), b"P4\n256 256\n".len() + 32 * 256);
}
