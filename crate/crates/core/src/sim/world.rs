//! Trail centerline geometry.
//!
//! World frame: `x` forward at the trail start, `y` to the right, heading
//! measured from `+x` toward `+y`. With this (z-down) convention a positive
//! yaw rate turns the robot right and a positive lateral velocity moves it
//! right, matching the image-space sign of the planner's commands.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;

pub const DEFAULT_TRAIL_WIDTH_M: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnDir {
    Left,
    Right,
}

/// One entry of a world file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SegmentSpec {
    Line { length_m: f64 },
    Arc { length_m: f64, radius_m: f64, turn_dir: TurnDir },
}

impl SegmentSpec {
    pub fn length(&self) -> f64 {
        match *self {
            SegmentSpec::Line { length_m } | SegmentSpec::Arc { length_m, .. } => length_m,
        }
    }
}

fn default_width() -> f64 {
    DEFAULT_TRAIL_WIDTH_M
}

/// On-disk world description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default = "default_width")]
    pub trail_width_m: f64,
    pub segments: Vec<SegmentSpec>,
}

/// Segment placed in the world: start point, start heading, signed curvature
/// (positive turns right).
#[derive(Clone, Copy, Debug, PartialEq)]
struct Placed {
    x0: f64,
    y0: f64,
    heading0: f64,
    length: f64,
    curvature: f64,
    s0: f64,
}

/// Nearest-point query result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    /// Arclength of the nearest centerline point.
    pub s: f64,
    pub distance: f64,
    /// Signed offset, positive when the query point is right of the centerline.
    pub lateral: f64,
}

impl Placed {
    fn pose_at(&self, s: f64) -> (f64, f64, f64) {
        let k = self.curvature;
        let h = self.heading0 + k * s;
        if k == 0.0 {
            (self.x0 + s * self.heading0.cos(), self.y0 + s * self.heading0.sin(), h)
        } else {
            let (s0, c0) = self.heading0.sin_cos();
            (self.x0 + (h.sin() - s0) / k, self.y0 - (h.cos() - c0) / k, h)
        }
    }

    /// Nearest point on this segment as (local arclength, squared distance).
    fn nearest(&self, x: f64, y: f64) -> (f64, f64) {
        let k = self.curvature;
        if k == 0.0 {
            let (sin, cos) = self.heading0.sin_cos();
            let t = ((x - self.x0) * cos + (y - self.y0) * sin).clamp(0.0, self.length);
            let (px, py) = (self.x0 + t * cos, self.y0 + t * sin);
            return (t, (x - px).powi(2) + (y - py).powi(2));
        }
        let r = 1.0 / k.abs();
        let (sin, cos) = self.heading0.sin_cos();
        // Center sits on the turning side of the start normal.
        let (cx, cy) = (self.x0 - sin / k, self.y0 + cos / k);
        let (ux, uy) = ((x - cx) * k.signum(), (y - cy) * k.signum());
        let dist_c = ux.hypot(uy);
        let heading_q = ux.atan2(-uy);
        let sweep = ((heading_q - self.heading0) * k.signum()).rem_euclid(TAU);
        if sweep * r <= self.length {
            return (sweep * r, (dist_c - r).powi(2));
        }
        let (ex, ey, _) = self.pose_at(self.length);
        let d_end = (x - ex).powi(2) + (y - ey).powi(2);
        let d_start = (x - self.x0).powi(2) + (y - self.y0).powi(2);
        if d_start <= d_end {
            (0.0, d_start)
        } else {
            (self.length, d_end)
        }
    }
}

/// A trail: centerline made of tangent-continuous lines and arcs, starting at
/// the origin heading along `+x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrailWorld {
    spec: WorldSpec,
    placed: Vec<Placed>,
    length: f64,
}

impl TrailWorld {
    pub fn new(spec: WorldSpec) -> Result<Self, SimError> {
        if !(spec.trail_width_m > 0.0 && spec.trail_width_m.is_finite()) {
            return Err(SimError::InvalidWorld("trail_width_m must be > 0".into()));
        }
        if spec.segments.is_empty() {
            return Err(SimError::InvalidWorld("world has no segments".into()));
        }
        let mut placed = Vec::with_capacity(spec.segments.len());
        let (mut x, mut y, mut h, mut s) = (0.0, 0.0, 0.0, 0.0);
        for (i, seg) in spec.segments.iter().enumerate() {
            let length = seg.length();
            if !(length > 0.0 && length.is_finite()) {
                return Err(SimError::InvalidWorld(format!("segment {i}: length_m must be > 0")));
            }
            let curvature = match *seg {
                SegmentSpec::Line { .. } => 0.0,
                SegmentSpec::Arc { radius_m, turn_dir, .. } => {
                    if !(radius_m > 0.0 && radius_m.is_finite()) {
                        return Err(SimError::InvalidWorld(format!("segment {i}: radius_m must be > 0")));
                    }
                    match turn_dir {
                        TurnDir::Right => 1.0 / radius_m,
                        TurnDir::Left => -1.0 / radius_m,
                    }
                }
            };
            let p = Placed { x0: x, y0: y, heading0: h, length, curvature, s0: s };
            (x, y, h) = p.pose_at(length);
            s += length;
            placed.push(p);
        }
        Ok(Self { spec, placed, length: s })
    }

    pub fn straight(length_m: f64, trail_width_m: f64) -> Result<Self, SimError> {
        Self::new(WorldSpec { trail_width_m, segments: vec![SegmentSpec::Line { length_m }] })
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let spec: WorldSpec = serde_json::from_str(text).map_err(|e| SimError::InvalidWorld(e.to_string()))?;
        Self::new(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidWorld(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn trail_width(&self) -> f64 {
        self.spec.trail_width_m
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Centerline point and tangent heading at arclength `s` (clamped to the trail).
    pub fn pose_at(&self, s: f64) -> (f64, f64, f64) {
        let s = s.clamp(0.0, self.length);
        let seg = self
            .placed
            .iter()
            .rev()
            .find(|p| p.s0 <= s)
            .unwrap_or(&self.placed[0]);
        seg.pose_at(s - seg.s0)
    }

    pub fn end_pose(&self) -> (f64, f64, f64) {
        self.pose_at(self.length)
    }

    /// Squared distance from `(x, y)` to the centerline.
    pub fn distance_sq(&self, x: f64, y: f64) -> f64 {
        self.placed.iter().map(|p| p.nearest(x, y).1).fold(f64::INFINITY, f64::min)
    }

    pub fn on_trail(&self, x: f64, y: f64) -> bool {
        let half = self.spec.trail_width_m / 2.0;
        self.distance_sq(x, y) <= half * half
    }

    pub fn project(&self, x: f64, y: f64) -> Projection {
        let (seg, (t, d2)) = self
            .placed
            .iter()
            .map(|p| (p, p.nearest(x, y)))
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("world has at least one segment");
        let (px, py, h) = seg.pose_at(t);
        // Right-hand normal in the z-down frame is (-sin h, cos h).
        let side = -(x - px) * h.sin() + (y - py) * h.cos();
        let distance = d2.sqrt();
        Projection { s: seg.s0 + t, distance, lateral: if side < 0.0 { -distance } else { distance } }
    }

    /// True once `(x, y)` has crossed the line through the trail end
    /// perpendicular to the final tangent.
    pub fn past_end(&self, x: f64, y: f64) -> bool {
        let (ex, ey, h) = self.end_pose();
        (x - ex) * h.cos() + (y - ey) * h.sin() >= 0.0
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}
