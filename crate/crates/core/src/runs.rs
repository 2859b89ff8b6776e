//! File-level drivers behind the `replay` and `simulate` commands, and the
//! CSV/JSON artifact formats they write.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::mask::{load_mask, FrameStamp};
use crate::planner::{NavCommand, Pipeline};
use crate::sim::{run_episode, CommandRecord, EpisodeOutput, SimError, TraceRecord, TrailWorld};

pub const COMMAND_LOG_HEADER: &str = "seq,time_s,yaw_rate,lat_vel,fwd_vel,safety_stop,applied_w1,alpha,latency_ms";
pub const TRACE_HEADER: &str = "time_s,x,y,heading,lat_dev";

/// Forward speeds visited by a sweep, m/s.
pub const SWEEP_SPEEDS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("no mask files (.png, .pgm) in {0}")]
    EmptyDirectory(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("i/o failure on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidWorld(m) => RunError::InvalidWorld(m),
            SimError::ConfigInvalid(m) => RunError::Config(ConfigError::Invalid(m)),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io { path: path.display().to_string(), reason: e.to_string() }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_file(path, &text)
}

/// Command log rows under [`COMMAND_LOG_HEADER`].
pub fn command_log_csv(records: &[CommandRecord], log_latency: bool) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(COMMAND_LOG_HEADER);
    out.push('\n');
    for r in records {
        let c = &r.command;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},",
            c.stamp.sequence,
            c.stamp.time,
            c.yaw_rate,
            c.lateral_velocity,
            c.forward_velocity,
            u8::from(c.safety_stop),
            r.applied_w1,
            r.alpha
        );
        if log_latency {
            let _ = write!(out, "{:.3}", r.latency_ms);
        }
        out.push('\n');
    }
    out
}

/// Pose trace rows under [`TRACE_HEADER`].
pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(48 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for t in trace {
        let _ = writeln!(out, "{},{},{},{},{}", t.time_s, t.pose.x, t.pose.y, t.pose.heading, t.lat_dev);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameError {
    pub file: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutput {
    pub frames: Vec<String>,
    pub commands: Vec<CommandRecord>,
    pub rejects: usize,
    pub safety_stops: usize,
    pub load_errors: Vec<FrameError>,
}

impl ReplayOutput {
    pub fn final_command(&self) -> Option<&NavCommand> {
        self.commands.last().map(|r| &r.command)
    }

    pub fn max_latency_ms(&self) -> f64 {
        self.commands.iter().map(|r| r.latency_ms).fold(0.0, f64::max)
    }
}

fn is_mask_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
}

/// Mask files of `dir` in file-name order.
pub fn list_masks(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if is_mask_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Runs the pipeline over every mask in `dir`, one frame per file at the
/// planner rate. Unreadable files become rejected frames.
pub fn replay(dir: &Path, cfg: &RunConfig) -> Result<ReplayOutput, RunError> {
    cfg.validate()?;
    let files = list_masks(dir)?;
    if files.is_empty() {
        return Err(RunError::EmptyDirectory(dir.display().to_string()));
    }
    let mut pipeline = Pipeline::new(cfg.pipeline.clone());
    let mut out = ReplayOutput {
        frames: Vec::with_capacity(files.len()),
        commands: Vec::with_capacity(files.len()),
        rejects: 0,
        safety_stops: 0,
        load_errors: Vec::new(),
    };
    let mut stopped = false;
    for (seq, path) in files.iter().enumerate() {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let stamp = FrameStamp::at_rate(seq as u64, cfg.pipeline.planner.rate_hz);
        let report = match load_mask(path) {
            Ok(mask) => pipeline.step(&mask, stamp),
            Err(e) => {
                out.load_errors.push(FrameError { file: name.clone(), error: e.to_string() });
                pipeline.step_failed(stamp)
            }
        };
        if report.rejected {
            out.rejects += 1;
        }
        if report.command.safety_stop && !stopped {
            out.safety_stops += 1;
        }
        stopped = report.command.safety_stop;
        out.commands.push(CommandRecord {
            command: report.command,
            applied_w1: report.plan.as_ref().map_or(0.0, |p| p.applied_w1),
            alpha: report.plan.as_ref().map_or(0.0, |p| p.alpha),
            latency_ms: report.latency_ms,
            rejected: report.rejected,
        });
        out.frames.push(name);
    }
    Ok(out)
}

/// Summary document written next to a replay command log.
pub fn replay_summary(out: &ReplayOutput, cfg: &RunConfig) -> Value {
    let mut summary = json!({
        "config": cfg.effective(),
        "seed": cfg.seed,
        "frames": out.frames.len(),
        "rejects": out.rejects,
        "safety_stops": out.safety_stops,
        "load_errors": out.load_errors,
        "final_command": out.final_command(),
    });
    if cfg.log_latency {
        summary["max_latency_ms"] = json!(out.max_latency_ms());
    }
    summary
}

/// Replays `dir` and writes `commands.csv` and `summary.json` into `out_dir`.
pub fn write_replay(dir: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<ReplayOutput, RunError> {
    let out = replay(dir, cfg)?;
    write_file(&out_dir.join("commands.csv"), &command_log_csv(&out.commands, cfg.log_latency))?;
    write_json(&out_dir.join("summary.json"), &replay_summary(&out, cfg))?;
    Ok(out)
}

/// One simulated episode together with the settings that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub speed: f64,
    pub duration_s: f64,
    pub output: EpisodeOutput,
}

/// Runs one episode per requested speed (in parallel when there are several).
pub fn simulate(world: &TrailWorld, cfg: &RunConfig, speeds: &[f64]) -> Result<Vec<SimRun>, RunError> {
    cfg.validate()?;
    speeds
        .par_iter()
        .map(|&speed| {
            let mut run_cfg = cfg.clone();
            run_cfg.pipeline.planner.forward_speed = speed;
            run_cfg.validate()?;
            let duration_s = run_cfg.duration_for(world);
            let output = run_episode(world, &run_cfg.sim, &run_cfg.pipeline, duration_s, cfg.seed)?;
            Ok(SimRun { speed, duration_s, output })
        })
        .collect()
}

fn metrics_record(run: &SimRun) -> Value {
    json!({
        "speed": run.speed,
        "duration_s": run.duration_s,
        "frames": run.output.commands.len(),
        "metrics": run.output.metrics,
    })
}

/// Metrics document for a single run or a sweep.
pub fn metrics_document(runs: &[SimRun], world: &TrailWorld, cfg: &RunConfig) -> Value {
    let mut doc = json!({
        "config": cfg.effective(),
        "seed": cfg.seed,
        "world": world.spec(),
    });
    if let [single] = runs {
        let record = metrics_record(single);
        for (k, v) in record.as_object().into_iter().flatten() {
            doc[k] = v.clone();
        }
    } else {
        doc["records"] = Value::Array(runs.iter().map(metrics_record).collect());
    }
    doc
}

fn speed_tag(speed: f64) -> String {
    format!("speed_{speed:.1}")
}

/// Simulates and writes `metrics.json` plus per-run `trace.csv` and
/// `commands.csv`. Sweeps put each run's CSVs under `speed_<v>/`.
pub fn write_simulation(
    world: &TrailWorld,
    out_dir: &Path,
    cfg: &RunConfig,
    speeds: &[f64],
) -> Result<Vec<SimRun>, RunError> {
    let runs = simulate(world, cfg, speeds)?;
    for run in &runs {
        let dir = run_dir(out_dir, &runs, run);
        write_file(&dir.join("trace.csv"), &trace_csv(&run.output.trace))?;
        write_file(&dir.join("commands.csv"), &command_log_csv(&run.output.commands, cfg.log_latency))?;
    }
    write_json(&out_dir.join("metrics.json"), &metrics_document(&runs, world, cfg))?;
    Ok(runs)
}

/// Subdirectory holding a sweep run's CSVs.
pub fn run_dir(out_dir: &Path, runs: &[SimRun], run: &SimRun) -> PathBuf {
    if runs.len() == 1 {
        out_dir.to_path_buf()
    } else {
        out_dir.join(speed_tag(run.speed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{save_mask, SegClass, SegMask};
    use crate::sim::RobotPose;

    fn band(w: usize, h: usize, lo: usize, hi: usize) -> SegMask {
        SegMask::from_fn(w, h, |x, _| if (lo..=hi).contains(&x) { SegClass::Traversable } else { SegClass::Untraversable })
            .unwrap()
    }

    #[test]
    fn command_log_layout() {
        let rec = CommandRecord {
            command: NavCommand {
                yaw_rate: 0.25,
                lateral_velocity: -0.1,
                forward_velocity: 0.7,
                stamp: FrameStamp::new(3, 0.75),
                safety_stop: false,
            },
            applied_w1: 0.6,
            alpha: 0.5,
            latency_ms: 1.23456,
            rejected: false,
        };
        let csv = command_log_csv(&[rec], true);
        assert_eq!(csv, format!("{COMMAND_LOG_HEADER}\n3,0.75,0.25,-0.1,0.7,0,0.6,0.5,1.235\n"));
        assert!(command_log_csv(&[rec], false).ends_with("0.5,\n"));
    }

    #[test]
    fn trace_layout() {
        let t = TraceRecord { time_s: 0.5, pose: RobotPose::new(1.0, -0.5, 0.25), lat_dev: -0.5 };
        assert_eq!(trace_csv(&[t]), format!("{TRACE_HEADER}\n0.5,1,-0.5,0.25,-0.5\n"));
    }

    #[test]
    fn replay_counts_corrupt_frame_as_reject() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..6 {
            save_mask(&band(64, 48, 24, 39), dir.path().join(format!("f{i:02}.png"))).unwrap();
        }
        fs::write(dir.path().join("f03.png"), b"not an image").unwrap();
        fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let mut cfg = RunConfig::default();
        cfg.set("midline.downsample_factor", "4").unwrap();
        let out = replay(dir.path(), &cfg).unwrap();
        assert_eq!(out.frames.len(), 6);
        assert_eq!(out.rejects, 1);
        assert_eq!(out.load_errors.len(), 1);
        assert_eq!(out.load_errors[0].file, "f03.png");
        assert!(out.final_command().unwrap().yaw_rate.abs() < 1e-9);
        let times: Vec<f64> = out.commands.iter().map(|c| c.command.stamp.time).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25]);
    }

    #[test]
    fn replay_of_empty_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("readme.txt"), b"x").unwrap();
        assert!(matches!(replay(dir.path(), &RunConfig::default()), Err(RunError::EmptyDirectory(_))));
    }

    #[test]
    fn sweep_yields_one_record_per_speed() {
        let world = TrailWorld::straight(2.0, 0.6).unwrap();
        let mut cfg = RunConfig::default();
        cfg.set("sim.blob_failure_prob", "0").unwrap();
        cfg.set("sim.duration_s", "1").unwrap();
        let runs = simulate(&world, &cfg, &SWEEP_SPEEDS).unwrap();
        let doc = metrics_document(&runs, &world, &cfg);
        let records = doc["records"].as_array().unwrap();
        assert_eq!(records.len(), 5);
        for (r, v) in records.iter().zip(SWEEP_SPEEDS) {
            assert_eq!(r["speed"], json!(v));
            assert!(r["metrics"]["completed"].is_boolean());
        }
        assert_eq!(doc["config"]["seed"], json!(0));
    }
}
