//! Closed-loop 2D trail-following simulator.
//!
//! Each perception frame renders the ground-truth mask from the current pose,
//! corrupts it with the configured failure model, runs the full pipeline and
//! then integrates the resulting command at the control substep until the next
//! frame.

mod camera;
mod noise;
mod world;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{render_mask, render_with_table, CameraModel};
pub use noise::{inject_noise, NoiseModel};
pub use world::{wrap_angle, Projection, SegmentSpec, TrailWorld, TurnDir, WorldSpec, DEFAULT_TRAIL_WIDTH_M};

use crate::mask::FrameStamp;
use crate::planner::{pipeline_step, NavCommand, PipelineConfig, PipelineState};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    /// Wrapped to (-pi, pi].
    pub heading: f64,
}

impl RobotPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading) }
    }
}

/// Planar rigid-body step: rotate by `yaw_rate * dt`, then translate by the
/// body-frame velocity expressed in the new heading.
pub fn step_kinematics(pose: &RobotPose, cmd: &NavCommand, dt: f64) -> RobotPose {
    let heading = pose.heading + cmd.yaw_rate * dt;
    let (sin, cos) = heading.sin_cos();
    let (v, lat) = (cmd.forward_velocity, cmd.lateral_velocity);
    RobotPose {
        x: pose.x + (v * cos - lat * sin) * dt,
        y: pose.y + (v * sin + lat * cos) * dt,
        heading: wrap_angle(heading),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub camera: CameraModel,
    pub noise: NoiseModel,
    /// Downsample factor used on simulator renders (replaces the midline
    /// factor, which targets full-resolution camera masks).
    pub downsample_factor: usize,
    pub substep_s: f64,
    /// Initial lateral offset from the centerline, metres, positive right.
    pub start_lateral_m: f64,
    /// Initial heading relative to the trail, radians.
    pub start_heading_rad: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            noise: NoiseModel::default(),
            downsample_factor: 2,
            substep_s: 0.002,
            start_lateral_m: 0.0,
            start_heading_rad: 0.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.camera.validate()?;
        self.noise.validate()?;
        if self.downsample_factor == 0 {
            return Err(SimError::ConfigInvalid("downsample_factor must be >= 1".into()));
        }
        if !(self.substep_s > 0.0 && self.substep_s.is_finite()) {
            return Err(SimError::ConfigInvalid("substep_s must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub completed: bool,
    /// Furthest arclength reached along the centerline.
    pub distance_covered: f64,
    pub max_lateral_dev: f64,
    pub rms_lateral_dev: f64,
    /// Number of times the body center left the trail.
    pub off_trail_events: u32,
    /// Number of transitions into safety stop.
    pub safety_stops: u32,
}

/// One row of the command log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: NavCommand,
    pub applied_w1: f64,
    pub alpha: f64,
    pub latency_ms: f64,
    pub rejected: bool,
}

/// One row of the pose trace, sampled at every perception frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_s: f64,
    pub pose: RobotPose,
    pub lat_dev: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutput {
    pub metrics: RunMetrics,
    pub commands: Vec<CommandRecord>,
    pub trace: Vec<TraceRecord>,
}

/// Suggested episode length: 1.5x the nominal traversal time plus 10 s.
pub fn auto_duration(world: &TrailWorld, forward_speed: f64) -> f64 {
    if forward_speed <= 0.0 {
        return 10.0;
    }
    1.5 * world.length() / forward_speed + 10.0
}

/// Runs one closed-loop episode. `seed` overrides the noise model's seed.
pub fn run_episode(
    world: &TrailWorld,
    sim: &SimConfig,
    pipeline: &PipelineConfig,
    duration_s: f64,
    seed: u64,
) -> Result<EpisodeOutput, SimError> {
    sim.validate()?;
    pipeline.planner.validate().map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
    pipeline.compensator.validate().map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
    pipeline.midline.validate().map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(SimError::ConfigInvalid("duration must be >= 0".into()));
    }

    let mut pcfg = pipeline.clone();
    pcfg.midline.downsample_factor = sim.downsample_factor;
    let noise = NoiseModel { seed, ..sim.noise.clone() };
    let table = sim.camera.ground_table();
    let frame_dt = 1.0 / pcfg.planner.rate_hz;
    let substeps = ((frame_dt / sim.substep_s).round() as usize).max(1);
    let dt = frame_dt / substeps as f64;
    let half_width = world.trail_width() / 2.0;

    let (sx, sy, sh) = world.pose_at(0.0);
    let mut pose = RobotPose::new(
        sx - sim.start_lateral_m * sh.sin(),
        sy + sim.start_lateral_m * sh.cos(),
        sh + sim.start_heading_rad,
    );

    let mut state = PipelineState::new(&pcfg);
    let mut commands = Vec::new();
    let mut trace = Vec::new();
    let mut metrics = RunMetrics::default();
    let mut sum_sq = 0.0;
    let mut samples = 0usize;
    let mut off_trail = false;
    let mut stopped = false;
    let mut reached_end = false;

    let mut seq = 0u64;
    loop {
        let t = seq as f64 * frame_dt;
        if t >= duration_s || reached_end {
            break;
        }
        let stamp = FrameStamp::new(seq, t);
        let clean = render_with_table(world, &pose, &sim.camera, &table);
        let observed = inject_noise(&clean, &noise, stamp);
        let (report, next) = pipeline_step(Some(&observed), &state, &pcfg, stamp);
        state = next;
        let cmd = report.command;
        if cmd.safety_stop && !stopped {
            metrics.safety_stops += 1;
        }
        stopped = cmd.safety_stop;
        commands.push(CommandRecord {
            command: cmd,
            applied_w1: report.plan.as_ref().map_or(0.0, |p| p.applied_w1),
            alpha: report.plan.as_ref().map_or(0.0, |p| p.alpha),
            latency_ms: report.latency_ms,
            rejected: report.rejected,
        });
        trace.push(TraceRecord { time_s: t, pose, lat_dev: world.project(pose.x, pose.y).lateral });

        let steps_this_frame = if t + frame_dt > duration_s {
            (((duration_s - t) / dt).round() as usize).min(substeps)
        } else {
            substeps
        };
        for _ in 0..steps_this_frame {
            pose = step_kinematics(&pose, &cmd, dt);
            let proj = world.project(pose.x, pose.y);
            let dev = proj.distance;
            sum_sq += dev * dev;
            samples += 1;
            metrics.max_lateral_dev = metrics.max_lateral_dev.max(dev);
            metrics.distance_covered = metrics.distance_covered.max(proj.s);
            let outside = dev > half_width;
            if outside && !off_trail {
                metrics.off_trail_events += 1;
            }
            off_trail = outside;
            if world.past_end(pose.x, pose.y) && !outside {
                reached_end = true;
                metrics.distance_covered = world.length();
                break;
            }
        }
        seq += 1;
    }

    metrics.rms_lateral_dev = if samples > 0 { (sum_sq / samples as f64).sqrt() } else { 0.0 };
    metrics.completed = reached_end && metrics.off_trail_events == 0;
    Ok(EpisodeOutput { metrics, commands, trace })
}

/// Runs one episode per seed in parallel; results are in seed order.
pub fn run_batch(
    world: &TrailWorld,
    sim: &SimConfig,
    pipeline: &PipelineConfig,
    duration_s: f64,
    seeds: &[u64],
) -> Result<Vec<EpisodeOutput>, SimError> {
    seeds
        .par_iter()
        .map(|&seed| run_episode(world, sim, pipeline, duration_s, seed))
        .collect()
}
