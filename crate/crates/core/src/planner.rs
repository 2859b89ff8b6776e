//! Command generation and the per-frame perception pipeline.
//!
//! Sign conventions follow the image: a trail lying to the image right gives
//! positive yaw rate and positive lateral velocity. The simulator's world
//! frame is chosen so that positive values turn and move the robot to its
//! right.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compensator::{self, CompensatedPlan, CompensatorConfig, CompensatorError, CompensatorState};
use crate::mask::{downsample, FrameStamp, SegMask};
use crate::midline::{center_column, compute_yaw, extract_midline, MidlineConfig};
use crate::pathfit::{eval_poly, fit_poly};

/// Perception budget per frame, milliseconds.
pub const LATENCY_BUDGET_MS: f64 = 250.0;

/// A consumer that has not seen a fresh command for this long stops the robot.
pub const COMMAND_STALENESS_S: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("invalid planner config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub k_yaw: f64,
    pub k_lat: f64,
    pub yaw_rate_limit: f64,
    pub lat_vel_limit: f64,
    pub forward_speed: f64,
    pub rate_hz: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { k_yaw: 1.5, k_lat: 0.5, yaw_rate_limit: 1.0, lat_vel_limit: 0.3, forward_speed: 0.7, rate_hz: 4.0 }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let err = |m: &str| Err(PlannerError::Config(m.to_string()));
        if !(self.k_yaw >= 0.0 && self.k_lat >= 0.0) {
            return err("gains must be >= 0");
        }
        if !(self.yaw_rate_limit >= 0.0 && self.lat_vel_limit >= 0.0) {
            return err("limits must be >= 0");
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return err("rate_hz must be > 0");
        }
        if !(0.0..=1.0).contains(&self.forward_speed) {
            return err("forward_speed must be in [0, 1.0] m/s");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavCommand {
    pub yaw_rate: f64,
    pub lateral_velocity: f64,
    pub forward_velocity: f64,
    pub stamp: FrameStamp,
    pub safety_stop: bool,
}

impl NavCommand {
    pub fn stop(stamp: FrameStamp) -> Self {
        Self { yaw_rate: 0.0, lateral_velocity: 0.0, forward_velocity: 0.0, stamp, safety_stop: true }
    }
}

/// Proportional mapping of a compensated plan to velocity commands.
pub fn make_command(
    plan: &CompensatedPlan,
    mask_width: usize,
    cfg: &PlannerConfig,
    stamp: FrameStamp,
    consecutive_rejects: u32,
    max_consecutive_rejects: u32,
) -> NavCommand {
    if consecutive_rejects > max_consecutive_rejects {
        return NavCommand::stop(stamp);
    }
    let yaw_rate = (cfg.k_yaw * plan.alpha).clamp(-cfg.yaw_rate_limit, cfg.yaw_rate_limit);
    let half = mask_width as f64 / 2.0;
    let offset = ((eval_poly(&plan.beta, 0.0) - center_column(mask_width)) / half).clamp(-1.0, 1.0);
    let lateral_velocity = (cfg.k_lat * offset).clamp(-cfg.lat_vel_limit, cfg.lat_vel_limit);
    NavCommand { yaw_rate, lateral_velocity, forward_velocity: cfg.forward_speed, stamp, safety_stop: false }
}

/// Everything the per-frame pipeline needs to know.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub midline: MidlineConfig,
    pub degree: usize,
    pub compensator: CompensatorConfig,
    pub planner: PlannerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            midline: MidlineConfig::default(),
            degree: crate::pathfit::DEFAULT_DEGREE,
            compensator: CompensatorConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn new(midline: MidlineConfig, degree: usize, compensator: CompensatorConfig, planner: PlannerConfig) -> Self {
        Self { midline, degree, compensator, planner }
    }
}

/// Mutable state carried between frames; owned by the producer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub compensator: CompensatorState,
    pub consecutive_rejects: u32,
    /// Width of the mask the current plan was fitted in.
    pub plan_width: usize,
}

impl PipelineState {
    pub fn new(config: &PipelineConfig) -> Self {
        Self { compensator: CompensatorState::new(config.compensator.clone()), consecutive_rejects: 0, plan_width: 0 }
    }
}

/// Outcome of one pipeline frame.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub command: NavCommand,
    /// `None` until the first usable frame has been seen.
    pub plan: Option<CompensatedPlan>,
    pub midline_valid: bool,
    pub rejected: bool,
    pub latency_ms: f64,
}

/// downsample -> midline -> yaw -> fit -> compensate -> command.
pub fn pipeline_step(
    mask: Option<&SegMask>,
    state: &PipelineState,
    cfg: &PipelineConfig,
    stamp: FrameStamp,
) -> (StepReport, PipelineState) {
    let started = Instant::now();
    let mut next = state.clone();

    let estimate = mask.and_then(|m| {
        let small = downsample(m, cfg.midline.downsample_factor.max(1)).ok()?;
        let midline = extract_midline(&small, &cfg.midline);
        Some((small.width(), midline))
    });
    let midline_valid = estimate.as_ref().is_some_and(|(_, m)| m.valid);
    let observation = estimate.and_then(|(width, midline)| {
        let alpha = compute_yaw(&midline).ok()?;
        let beta = fit_poly(&midline, cfg.degree).ok()?;
        Some((width, beta, alpha))
    });

    let (beta, alpha, width) = match &observation {
        Some((w, b, a)) => (Some(b), Some(*a), Some(*w)),
        None => (None, None, None),
    };
    let (plan, rejected) = match compensator::step(beta, alpha, &state.compensator) {
        Ok((plan, comp)) => {
            next.compensator = comp;
            let rejected = plan.rejected;
            (Some(plan), rejected)
        }
        Err(CompensatorError::Uninitialized) => (None, true),
        // Config errors are caught at validation; treat anything else as a lost frame.
        Err(_) => (None, true),
    };
    if rejected {
        next.consecutive_rejects = state.consecutive_rejects.saturating_add(1);
    } else {
        next.consecutive_rejects = 0;
        if let Some(w) = width {
            next.plan_width = w;
        }
    }

    let command = match &plan {
        Some(p) => make_command(
            p,
            next.plan_width,
            &cfg.planner,
            stamp,
            next.consecutive_rejects,
            cfg.compensator.max_consecutive_rejects,
        ),
        None => NavCommand::stop(stamp),
    };
    if next.compensator.initialized {
        next.compensator.prev_alpha -= cfg.compensator.ego_motion_gain * command.yaw_rate / cfg.planner.rate_hz;
    }
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;
    (StepReport { command, plan, midline_valid, rejected, latency_ms }, next)
}

/// Convenience wrapper owning config and state.
#[derive(Clone, Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    state: PipelineState,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let state = PipelineState::new(&config);
        Self { config, state }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn step(&mut self, mask: &SegMask, stamp: FrameStamp) -> StepReport {
        self.advance(Some(mask), stamp)
    }

    /// Frame whose mask could not be produced (load error, camera drop).
    pub fn step_failed(&mut self, stamp: FrameStamp) -> StepReport {
        self.advance(None, stamp)
    }

    fn advance(&mut self, mask: Option<&SegMask>, stamp: FrameStamp) -> StepReport {
        let (report, next) = pipeline_step(mask, &self.state, &self.config, stamp);
        self.state = next;
        report
    }
}

/// Single-slot, last-writer-wins command mailbox shared between the
/// perception producer and any number of control-rate readers.
#[derive(Clone, Debug, Default)]
pub struct CommandMailbox {
    slot: Arc<Mutex<Option<NavCommand>>>,
}

impl CommandMailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, cmd: NavCommand) {
        *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(cmd);
    }

    pub fn latest(&self) -> Option<NavCommand> {
        *self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Latest command, or a stop when nothing was published within
    /// [`COMMAND_STALENESS_S`] of `now` (seconds on the producer clock).
    pub fn command_at(&self, now: f64) -> NavCommand {
        match self.latest() {
            Some(cmd) if now - cmd.stamp.time <= COMMAND_STALENESS_S => cmd,
            Some(cmd) => NavCommand::stop(FrameStamp::new(cmd.stamp.sequence, now)),
            None => NavCommand::stop(FrameStamp::new(0, now)),
        }
    }
}
