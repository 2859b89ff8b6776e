use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use trailnav::mask::{load_mask, save_mask, SegClass, SegMask};

fn trailnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trailnav")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = trailnav(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn band(w: usize, h: usize, lo: usize, hi: usize) -> SegMask {
    SegMask::from_fn(w, h, |x, _| if (lo..=hi).contains(&x) { SegClass::Traversable } else { SegClass::Untraversable })
        .unwrap()
}

fn mask_dir(tmp: &TempDir, frames: usize) -> PathBuf {
    let dir = tmp.path().join("masks");
    fs::create_dir_all(&dir).unwrap();
    for i in 0..frames {
        save_mask(&band(640, 480, 280, 359), dir.join(format!("frame_{i:03}.png"))).unwrap();
    }
    dir
}

fn world_file(tmp: &TempDir) -> PathBuf {
    let path = tmp.path().join("garden.json");
    fs::write(
        &path,
        r#"{"trail_width_m": 0.6, "segments": [
            {"type": "line", "length_m": 2.0},
            {"type": "arc", "length_m": 2.0, "radius_m": 6.0, "turn_dir": "right"}
        ]}"#,
    )
    .unwrap();
    path
}

fn last_row(csv: &str) -> Vec<String> {
    csv.lines().last().unwrap().split(',').map(String::from).collect()
}

#[test]
fn replay_of_centered_band_settles_at_zero_yaw() {
    let tmp = TempDir::new().unwrap();
    let dir = mask_dir(&tmp, 12);
    let out = tmp.path().join("out");
    ok(&["replay", p(&dir), "--out", p(&out)]);
    let csv = fs::read_to_string(out.join("commands.csv")).unwrap();
    assert!(csv.starts_with("seq,time_s,yaw_rate,lat_vel,fwd_vel,safety_stop,applied_w1,alpha,latency_ms\n"));
    assert_eq!(csv.lines().count(), 13);
    let row = last_row(&csv);
    assert_eq!(row[0], "11");
    assert_eq!(row[1], "2.75");
    assert!(row[2].parse::<f64>().unwrap().abs() < 1e-9);
    assert!(row[8].parse::<f64>().unwrap() < 250.0);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["frames"], 12);
    assert_eq!(summary["rejects"], 0);
    assert_eq!(summary["config"]["planner.k_yaw"], 1.5);
    assert_eq!(summary["seed"], 0);
}

#[test]
fn corrupt_frame_is_one_reject() {
    let tmp = TempDir::new().unwrap();
    let dir = mask_dir(&tmp, 6);
    fs::write(dir.join("frame_002.png"), b"garbage").unwrap();
    let out = tmp.path().join("out");
    let res = ok(&["replay", p(&dir), "--out", p(&out)]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("frame_002.png"));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["rejects"], 1);
    assert_eq!(summary["load_errors"][0]["file"], "frame_002.png");
}

#[test]
fn replay_is_byte_identical_without_latency_column() {
    let tmp = TempDir::new().unwrap();
    let dir = mask_dir(&tmp, 8);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&["replay", p(&dir), "--out", p(out), "--set", "io.log_latency=false"]);
    }
    for f in ["commands.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "planner.k_yaw = 2.0\n# comment\nseed = 5\n").unwrap();
    let out = ok(&["config", "--config", p(&cfg), "--set", "planner.k_lat=0.25"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("planner.k_yaw = 2.0"));
    assert!(text.contains("planner.k_lat = 0.25"));
    assert!(text.contains("seed = 5"));

    let json_cfg = tmp.path().join("run.json");
    fs::write(&json_cfg, r#"{"planner": {"k_yaw": 2.0}}"#).unwrap();
    ok(&["config", "--config", p(&json_cfg)]);
}

#[test]
fn exit_codes_by_error_class() {
    let tmp = TempDir::new().unwrap();
    let dir = mask_dir(&tmp, 2);
    let out = tmp.path().join("out");
    let code = |args: &[&str]| trailnav(args).status.code().unwrap();

    assert_eq!(code(&["replay", p(&dir), "--out", p(&out), "--set", "planner.bogus=1"]), 3);
    assert_eq!(code(&["replay", p(&dir), "--out", p(&out), "--set", "planner.forward_speed=3"]), 3);
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(code(&["replay", p(&empty), "--out", p(&out)]), 4);
    assert_eq!(code(&["replay", p(&tmp.path().join("missing")), "--out", p(&out)]), 4);

    let bad_world = tmp.path().join("bad.json");
    fs::write(&bad_world, r#"{"segments": [{"type": "spiral", "length_m": 1}]}"#).unwrap();
    assert_eq!(code(&["simulate", p(&bad_world), "--out", p(&out)]), 4);

    let gt = tmp.path().join("gt");
    let pred = tmp.path().join("pred");
    save_mask(&band(8, 8, 2, 4), gt.join("a.png")).unwrap();
    save_mask(&band(9, 8, 2, 4), pred.join("a.png")).unwrap();
    assert_eq!(code(&["eval", p(&gt), p(&pred), "--out", p(&out)]), 5);

    assert_eq!(code(&["no-such-command"]), 2);
}

#[test]
fn simulate_single_speed_and_plot() {
    let tmp = TempDir::new().unwrap();
    let world = world_file(&tmp);
    let out = tmp.path().join("sim");
    ok(&["simulate", p(&world), "--speed", "0.8", "--out", p(&out), "--emit-plots", "--set", "sim.blob_failure_prob=0"]);
    let metrics = read_json(&out.join("metrics.json"));
    assert!(metrics["metrics"]["completed"].as_bool().unwrap());
    assert_eq!(metrics["speed"], 0.8);
    assert_eq!(metrics["config"]["planner.forward_speed"], 0.8);
    assert_eq!(metrics["world"]["segments"].as_array().unwrap().len(), 2);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("time_s,x,y,heading,lat_dev\n"));
    assert!(trace.lines().count() > 2);
    assert!(fs::read_to_string(out.join("commands.csv")).unwrap().starts_with("seq,"));
    let plot = image::open(out.join("trajectory.png")).unwrap();
    assert_eq!((plot.width(), plot.height()), (800, 800));
}

#[test]
fn sweep_writes_five_records() {
    let tmp = TempDir::new().unwrap();
    let world = world_file(&tmp);
    let out = tmp.path().join("sweep");
    ok(&["simulate", p(&world), "--sweep", "--out", p(&out), "--set", "sim.duration_s=4"]);
    let metrics = read_json(&out.join("metrics.json"));
    let records = metrics["records"].as_array().unwrap();
    let speeds: Vec<f64> = records.iter().map(|r| r["speed"].as_f64().unwrap()).collect();
    assert_eq!(speeds, vec![0.2, 0.4, 0.6, 0.8, 1.0]);
    for dir in ["speed_0.2", "speed_0.4", "speed_0.6", "speed_0.8", "speed_1.0"] {
        assert!(out.join(dir).join("trace.csv").exists());
    }
}

#[test]
fn paired_seed_runs_differ_only_in_compensation() {
    let tmp = TempDir::new().unwrap();
    let world = world_file(&tmp);
    let (on, off) = (tmp.path().join("on"), tmp.path().join("off"));
    ok(&["simulate", p(&world), "--seed", "7", "--out", p(&on), "--set", "sim.duration_s=3"]);
    ok(&["simulate", p(&world), "--seed", "7", "--no-compensation", "--out", p(&off), "--set", "sim.duration_s=3"]);
    let (a, b) = (read_json(&on.join("metrics.json")), read_json(&off.join("metrics.json")));
    assert_eq!(a["seed"], 7);
    assert_eq!(b["seed"], 7);
    assert_eq!(a["config"]["comp.enabled"], true);
    assert_eq!(b["config"]["comp.enabled"], false);
    assert!(a["metrics"]["completed"].is_boolean() && b["metrics"]["completed"].is_boolean());
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let world = world_file(&tmp);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&["simulate", p(&world), "--seed", "3", "--out", p(out), "--set", "io.log_latency=false", "--set", "sim.duration_s=3"]);
    }
    for f in ["metrics.json", "trace.csv", "commands.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn dataprep_relabel_boxes_augment() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("labels");
    fs::create_dir_all(&src).unwrap();
    // Road (7) on the left half, vegetation (21) on the right, sky (23) on top.
    let ids: Vec<u8> = (0..6 * 4).map(|i| if i < 6 { 23 } else if i % 6 < 3 { 7 } else { 21 }).collect();
    image::GrayImage::from_raw(6, 4, ids).unwrap().save(src.join("city.png")).unwrap();
    let relabeled = tmp.path().join("relabeled");
    ok(&["dataprep", "relabel", p(&src), "--out", p(&relabeled)]);
    let m = load_mask(relabeled.join("city.png")).unwrap();
    assert_eq!((m.count(SegClass::Traversable), m.count(SegClass::Untraversable), m.count(SegClass::Void)), (9, 9, 6));

    let map = tmp.path().join("map.json");
    fs::write(&map, r#"{"name": "partial", "mapping": {"7": "traversable"}}"#).unwrap();
    assert_eq!(trailnav(&["dataprep", "relabel", p(&src), "--map", p(&map), "--out", p(&relabeled)]).status.code(), Some(5));

    let csv = tmp.path().join("boxes.csv");
    fs::write(&csv, "image,x,y,w,h\ngarden_01.jpg,0,0,10,10\ngarden_01.jpg,5,5,10,10\n").unwrap();
    let boxes = tmp.path().join("boxes");
    ok(&["dataprep", "boxes", p(&csv), "--width", "20", "--height", "20", "--out", p(&boxes)]);
    let m = load_mask(boxes.join("garden_01.png")).unwrap();
    assert_eq!(m.count(SegClass::Traversable), 175);
    assert_eq!(m.count(SegClass::Void), 225);

    let (a, b) = (tmp.path().join("aug_a"), tmp.path().join("aug_b"));
    for out in [&a, &b] {
        ok(&["dataprep", "augment", p(&boxes), "--seed", "11", "--out", p(out)]);
    }
    assert_eq!(fs::read(a.join("garden_01.png")).unwrap(), fs::read(b.join("garden_01.png")).unwrap());
    let record = read_json(&a.join("augment.json"));
    assert_eq!(record["seed"], 11);
    let deg = record["items"][0]["record"]["rotation_deg"].as_f64().unwrap();
    assert!((-5.0..=5.0).contains(&deg));
}

#[test]
fn eval_reports_per_image_and_aggregate() {
    let tmp = TempDir::new().unwrap();
    let (gt, pred) = (tmp.path().join("gt"), tmp.path().join("pred"));
    save_mask(&band(10, 4, 0, 4), gt.join("a.png")).unwrap();
    save_mask(&band(10, 4, 0, 4), pred.join("a.png")).unwrap();
    save_mask(&band(10, 4, 0, 4), gt.join("b.png")).unwrap();
    save_mask(&band(10, 4, 5, 9), pred.join("b.png")).unwrap();
    let out = tmp.path().join("eval");
    ok(&["eval", p(&gt), p(&pred), "--out", p(&out)]);
    let csv = fs::read_to_string(out.join("per_image.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "image,evaluated_pixels,cross_entropy,iou_traversable,iou_untraversable,pixel_accuracy");
    assert_eq!(rows[1], "a.png,40,0,1,1,1");
    assert!(rows[2].starts_with("b.png,40,"));
    assert!(rows[2].ends_with(",0,0,0"));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["images"], 2);
    assert_eq!(report["evaluated_pixels"], 80);
    assert_eq!(report["pixel_accuracy"], 0.5);
    assert_eq!(report["mean_iou_traversable"], 0.5);
}

#[test]
fn shipped_scenario_loads() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("scenario");
    ok(&[
        "simulate",
        p(&root.join("curved_30m.json")),
        "--config",
        p(&root.join("blob_failure.cfg")),
        "--set",
        "sim.duration_s=5",
        "--out",
        p(&out),
    ]);
    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["config"]["comp.ego_motion_gain"], 1.0);
    assert_eq!(metrics["config"]["sim.blob_hold_frames"], 2);
    assert_eq!(metrics["world"]["trail_width_m"], 0.25);
}
