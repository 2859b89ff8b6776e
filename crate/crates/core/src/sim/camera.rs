//! Pinhole camera pitched down toward a flat ground plane, and ground-truth
//! mask rendering by per-pixel ray casting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::world::TrailWorld;
use super::{RobotPose, SimError};
use crate::mask::{SegClass, SegMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub height_above_ground: f64,
    /// Downward tilt of the optical axis.
    pub pitch: f64,
    pub horizontal_fov: f64,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { height_above_ground: 0.26, pitch: 0.35, horizontal_fov: 1.2, image_width: 160, image_height: 120 }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.height_above_ground > 0.0) {
            return Err(SimError::ConfigInvalid("camera height must be > 0".into()));
        }
        if !(self.pitch > 0.0 && self.pitch < std::f64::consts::FRAC_PI_2) {
            return Err(SimError::ConfigInvalid("camera pitch must be in (0, pi/2)".into()));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < std::f64::consts::PI) {
            return Err(SimError::ConfigInvalid("horizontal fov must be in (0, pi)".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(SimError::ConfigInvalid("image size must be >= 1x1".into()));
        }
        Ok(())
    }

    /// Focal length in pixels (square pixels).
    pub fn focal(&self) -> f64 {
        (self.image_width as f64 / 2.0) / (self.horizontal_fov / 2.0).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        ((self.image_width as f64 - 1.0) / 2.0, (self.image_height as f64 - 1.0) / 2.0)
    }

    /// Ground intersection of pixel `(u, v)` in the body frame as
    /// `(forward, right)` metres, or `None` above the horizon.
    pub fn ground_hit(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let f = self.focal();
        let (cx, cy) = self.principal_point();
        let right = (u - cx) / f;
        let down = (v - cy) / f;
        let (sp, cp) = self.pitch.sin_cos();
        let ray_fwd = cp - down * sp;
        let ray_down = sp + down * cp;
        if ray_down <= 1e-9 {
            return None;
        }
        let t = self.height_above_ground / ray_down;
        Some((t * ray_fwd, t * right))
    }

    /// Ground hit of every pixel, row-major.
    pub fn ground_table(&self) -> Vec<Option<(f64, f64)>> {
        let mut table = Vec::with_capacity(self.image_width * self.image_height);
        for v in 0..self.image_height {
            for u in 0..self.image_width {
                table.push(self.ground_hit(u as f64, v as f64));
            }
        }
        table
    }
}

/// Renders with a precomputed ground table from [`CameraModel::ground_table`].
pub fn render_with_table(
    world: &TrailWorld,
    pose: &RobotPose,
    cam: &CameraModel,
    table: &[Option<(f64, f64)>],
) -> SegMask {
    let (sin, cos) = pose.heading.sin_cos();
    let half = world.trail_width() / 2.0;
    let half_sq = half * half;
    let data: Vec<SegClass> = table
        .par_iter()
        .map(|hit| match hit {
            None => SegClass::Void,
            Some((fwd, right)) => {
                let x = pose.x + fwd * cos - right * sin;
                let y = pose.y + fwd * sin + right * cos;
                if world.distance_sq(x, y) <= half_sq {
                    SegClass::Traversable
                } else {
                    SegClass::Untraversable
                }
            }
        })
        .collect();
    SegMask::new(cam.image_width, cam.image_height, data).expect("camera dimensions validated")
}

/// Ground-truth segmentation seen from `pose`.
pub fn render_mask(world: &TrailWorld, pose: &RobotPose, cam: &CameraModel) -> SegMask {
    render_with_table(world, pose, cam, &cam.ground_table())
}
