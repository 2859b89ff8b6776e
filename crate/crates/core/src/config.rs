//! Flat `section.key` run configuration shared by every command.
//!
//! Files are either `key = value` lines (`#` starts a comment) or a JSON
//! object whose nested objects are flattened with dots. Unknown keys are
//! errors. [`RunConfig::effective`] lists every key with its current value.

use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::compensator::CompensatorConfig;
use crate::planner::PipelineConfig;
use crate::sim::{auto_duration, SimConfig, TrailWorld};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("config syntax error at line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Episode length: fixed seconds or derived from trail length and speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Duration {
    Auto,
    Seconds(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    /// Compensator settings used while `comp_enabled` is true.
    pub compensator: CompensatorConfig,
    pub comp_enabled: bool,
    pub sim: SimConfig,
    pub duration: Duration,
    /// When false the latency column of command logs is left empty so that
    /// logs are byte-for-byte reproducible.
    pub log_latency: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        Self {
            compensator: pipeline.compensator.clone(),
            pipeline,
            comp_enabled: true,
            sim: SimConfig::default(),
            duration: Duration::Auto,
            log_latency: true,
            seed: 0,
        }
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("midline.min_run_width", "narrowest traversable run accepted as a midpoint, pixels"),
    ("midline.min_rows", "accepted rows needed for a valid midline"),
    ("midline.downsample_factor", "block-majority factor applied before midline extraction"),
    ("pathfit.degree", "polynomial degree of the lateral path"),
    ("comp.enabled", "false replaces the compensator with a pass-through"),
    ("comp.base_w1", "weight of a fresh path fit at zero deviation"),
    ("comp.base_w_alpha_hat", "weight of a fresh yaw at zero deviation"),
    ("comp.lambda_beta", "path weight attenuation per pixel of RMS deviation"),
    ("comp.lambda_alpha", "yaw weight attenuation per radian of change"),
    ("comp.w_min", "floor of both attenuated weights"),
    ("comp.max_consecutive_rejects", "rejected frames tolerated before a safety stop"),
    ("comp.ego_motion_gain", "share of the commanded turn removed from the stored yaw each frame"),
    ("planner.k_yaw", "yaw rate per radian of yaw estimate, 1/s"),
    ("planner.k_lat", "lateral velocity per unit normalized offset, m/s"),
    ("planner.yaw_rate_limit", "yaw rate clamp, rad/s"),
    ("planner.lat_vel_limit", "lateral velocity clamp, m/s"),
    ("planner.forward_speed", "forward velocity setpoint, m/s"),
    ("planner.rate_hz", "perception and planning rate, Hz"),
    ("sim.camera_height_m", "camera height above ground"),
    ("sim.camera_pitch_rad", "downward camera pitch"),
    ("sim.camera_hfov_rad", "horizontal field of view"),
    ("sim.image_width", "rendered mask width, pixels"),
    ("sim.image_height", "rendered mask height, pixels"),
    ("sim.downsample_factor", "block-majority factor applied to rendered masks"),
    ("sim.substep_s", "kinematics integration step, s"),
    ("sim.duration_s", "episode length in seconds, or `auto`"),
    ("sim.start_lateral_m", "initial offset from the centerline, positive right"),
    ("sim.start_heading_rad", "initial heading relative to the trail"),
    ("sim.blob_failure_prob", "per-frame probability of a false traversable blob"),
    ("sim.blob_size", "blob radius, pixels"),
    ("sim.blob_hold_frames", "consecutive frames sharing one blob draw"),
    ("sim.pixel_flip_prob", "per-pixel traversable/untraversable flip probability"),
    ("sim.dropout_prob", "per-frame probability of an all-void mask"),
    ("io.log_latency", "write measured latency into command logs"),
    ("seed", "base random seed"),
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::InvalidValue { key: key.into(), value: value.into(), reason: "not finite".into() })
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.pipeline;
        let c = &mut self.compensator;
        let s = &mut self.sim;
        match key {
            "midline.min_run_width" => p.midline.min_run_width = parse(key, value)?,
            "midline.min_rows" => p.midline.min_rows = parse(key, value)?,
            "midline.downsample_factor" => p.midline.downsample_factor = parse(key, value)?,
            "pathfit.degree" => p.degree = parse(key, value)?,
            "comp.enabled" => self.comp_enabled = parse(key, value)?,
            "comp.base_w1" => c.base_w1 = parse_f64(key, value)?,
            "comp.base_w_alpha_hat" => c.base_w_alpha_hat = parse_f64(key, value)?,
            "comp.lambda_beta" => c.lambda_beta = parse_f64(key, value)?,
            "comp.lambda_alpha" => c.lambda_alpha = parse_f64(key, value)?,
            "comp.w_min" => c.w_min = parse_f64(key, value)?,
            "comp.max_consecutive_rejects" => c.max_consecutive_rejects = parse(key, value)?,
            "comp.ego_motion_gain" => c.ego_motion_gain = parse_f64(key, value)?,
            "planner.k_yaw" => p.planner.k_yaw = parse_f64(key, value)?,
            "planner.k_lat" => p.planner.k_lat = parse_f64(key, value)?,
            "planner.yaw_rate_limit" => p.planner.yaw_rate_limit = parse_f64(key, value)?,
            "planner.lat_vel_limit" => p.planner.lat_vel_limit = parse_f64(key, value)?,
            "planner.forward_speed" => p.planner.forward_speed = parse_f64(key, value)?,
            "planner.rate_hz" => p.planner.rate_hz = parse_f64(key, value)?,
            "sim.camera_height_m" => s.camera.height_above_ground = parse_f64(key, value)?,
            "sim.camera_pitch_rad" => s.camera.pitch = parse_f64(key, value)?,
            "sim.camera_hfov_rad" => s.camera.horizontal_fov = parse_f64(key, value)?,
            "sim.image_width" => s.camera.image_width = parse(key, value)?,
            "sim.image_height" => s.camera.image_height = parse(key, value)?,
            "sim.downsample_factor" => s.downsample_factor = parse(key, value)?,
            "sim.substep_s" => s.substep_s = parse_f64(key, value)?,
            "sim.duration_s" => {
                self.duration = if value.trim() == "auto" {
                    Duration::Auto
                } else {
                    Duration::Seconds(parse_f64(key, value)?)
                }
            }
            "sim.start_lateral_m" => s.start_lateral_m = parse_f64(key, value)?,
            "sim.start_heading_rad" => s.start_heading_rad = parse_f64(key, value)?,
            "sim.blob_failure_prob" => s.noise.blob_failure_prob = parse_f64(key, value)?,
            "sim.blob_size" => s.noise.blob_size = parse_f64(key, value)?,
            "sim.blob_hold_frames" => s.noise.blob_hold_frames = parse(key, value)?,
            "sim.pixel_flip_prob" => s.noise.pixel_flip_prob = parse_f64(key, value)?,
            "sim.dropout_prob" => s.noise.dropout_prob = parse_f64(key, value)?,
            "io.log_latency" => self.log_latency = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        self.sync();
        Ok(())
    }

    fn sync(&mut self) {
        self.pipeline.compensator = if self.comp_enabled {
            self.compensator.clone()
        } else {
            CompensatorConfig {
                max_consecutive_rejects: self.compensator.max_consecutive_rejects,
                ..CompensatorConfig::disabled()
            }
        };
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: 0, reason: format!("expected key=value, got `{assignment}`") })?;
        self.set(key.trim(), value.trim())
    }

    /// Applies `key = value` lines.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, reason: format!("expected key = value, got `{line}`") })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies a JSON object, flattening nested objects with dots.
    pub fn apply_json(&mut self, text: &str) -> Result<(), ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Syntax { line: e.line(), reason: e.to_string() })?;
        let Value::Object(map) = value else {
            return Err(ConfigError::Syntax { line: 1, reason: "top level must be an object".into() });
        };
        let mut flat = Vec::new();
        flatten("", &map, &mut flat)?;
        for (key, value) in flat {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Loads a file, picking JSON when it starts with `{`.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        if text.trim_start().starts_with('{') {
            self.apply_json(&text)
        } else {
            self.apply_text(&text)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.pipeline.midline.validate().map_err(|e| invalid(&e))?;
        self.pipeline.planner.validate().map_err(|e| invalid(&e))?;
        self.compensator.validate().map_err(|e| invalid(&e))?;
        self.sim.validate().map_err(|e| invalid(&e))?;
        if let Duration::Seconds(d) = self.duration {
            if d < 0.0 {
                return Err(ConfigError::Invalid("sim.duration_s must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Episode length for `world` under this config.
    pub fn duration_for(&self, world: &TrailWorld) -> f64 {
        match self.duration {
            Duration::Auto => auto_duration(world, self.pipeline.planner.forward_speed),
            Duration::Seconds(d) => d,
        }
    }

    /// Every key with its current value, in [`KEYS`] order.
    pub fn effective(&self) -> Map<String, Value> {
        let p = &self.pipeline;
        let c = &self.compensator;
        let s = &self.sim;
        let duration = match self.duration {
            Duration::Auto => Value::from("auto"),
            Duration::Seconds(d) => Value::from(d),
        };
        let values: Vec<Value> = vec![
            p.midline.min_run_width.into(),
            p.midline.min_rows.into(),
            p.midline.downsample_factor.into(),
            p.degree.into(),
            self.comp_enabled.into(),
            c.base_w1.into(),
            c.base_w_alpha_hat.into(),
            c.lambda_beta.into(),
            c.lambda_alpha.into(),
            c.w_min.into(),
            c.max_consecutive_rejects.into(),
            c.ego_motion_gain.into(),
            p.planner.k_yaw.into(),
            p.planner.k_lat.into(),
            p.planner.yaw_rate_limit.into(),
            p.planner.lat_vel_limit.into(),
            p.planner.forward_speed.into(),
            p.planner.rate_hz.into(),
            s.camera.height_above_ground.into(),
            s.camera.pitch.into(),
            s.camera.horizontal_fov.into(),
            s.camera.image_width.into(),
            s.camera.image_height.into(),
            s.downsample_factor.into(),
            s.substep_s.into(),
            duration,
            s.start_lateral_m.into(),
            s.start_heading_rad.into(),
            s.noise.blob_failure_prob.into(),
            s.noise.blob_size.into(),
            s.noise.blob_hold_frames.into(),
            s.noise.pixel_flip_prob.into(),
            s.noise.dropout_prob.into(),
            self.log_latency.into(),
            self.seed.into(),
        ];
        KEYS.iter().map(|(k, _)| k.to_string()).zip(values).collect()
    }
}

fn flatten(prefix: &str, map: &Map<String, Value>, out: &mut Vec<(String, String)>) -> Result<(), ConfigError> {
    for (k, v) in map {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(inner) => flatten(&key, inner, out)?,
            Value::String(s) => out.push((key, s.clone())),
            Value::Number(n) => out.push((key, n.to_string())),
            Value::Bool(b) => out.push((key, b.to_string())),
            Value::Null | Value::Array(_) => {
                return Err(ConfigError::InvalidValue { key, value: v.to_string(), reason: "expected a scalar".into() })
            }
        }
    }
    Ok(())
}
