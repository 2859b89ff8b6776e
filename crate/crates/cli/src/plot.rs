//! Top-down trajectory plot: trail band, centerline and the robot's path.

use image::{Rgb, RgbImage};
use trailnav::sim::{TraceRecord, TrailWorld};

const SIZE: u32 = 800;
const MARGIN: f64 = 30.0;
const GRASS: Rgb<u8> = Rgb([214, 232, 200]);
const TRAIL: Rgb<u8> = Rgb([196, 170, 130]);
const CENTER: Rgb<u8> = Rgb([120, 100, 70]);
const PATH: Rgb<u8> = Rgb([200, 30, 30]);

struct Frame {
    min_x: f64,
    min_y: f64,
    scale: f64,
}

impl Frame {
    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        (MARGIN + (x - self.min_x) * self.scale, MARGIN + (y - self.min_y) * self.scale)
    }

    fn to_world(&self, px: f64, py: f64) -> (f64, f64) {
        ((px - MARGIN) / self.scale + self.min_x, (py - MARGIN) / self.scale + self.min_y)
    }
}

fn dot(img: &mut RgbImage, px: f64, py: f64, radius: i64, color: Rgb<u8>) {
    let (cx, cy) = (px.round() as i64, py.round() as i64);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = (cx + dx, cy + dy);
            if dx * dx + dy * dy <= radius * radius && x >= 0 && y >= 0 && x < SIZE as i64 && y < SIZE as i64 {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn polyline(img: &mut RgbImage, frame: &Frame, points: &[(f64, f64)], radius: i64, color: Rgb<u8>) {
    for pair in points.windows(2) {
        let (a, b) = (frame.to_px(pair[0].0, pair[0].1), frame.to_px(pair[1].0, pair[1].1));
        let steps = ((b.0 - a.0).hypot(b.1 - a.1).ceil() as usize).max(1);
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            dot(img, a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), radius, color);
        }
    }
}

/// Renders the world (x to the right, y down) with the robot trace on top.
pub fn trajectory(world: &TrailWorld, trace: &[TraceRecord]) -> RgbImage {
    let n = ((world.length() / 0.02).ceil() as usize).max(2);
    let centerline: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let (x, y, _) = world.pose_at(world.length() * i as f64 / n as f64);
            (x, y)
        })
        .collect();
    let path: Vec<(f64, f64)> = trace.iter().map(|t| (t.pose.x, t.pose.y)).collect();

    let pad = world.trail_width();
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in centerline.iter().chain(&path) {
        min_x = min_x.min(x - pad);
        max_x = max_x.max(x + pad);
        min_y = min_y.min(y - pad);
        max_y = max_y.max(y + pad);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1e-6);
    let frame = Frame { min_x, min_y, scale: (SIZE as f64 - 2.0 * MARGIN) / span };

    let mut img = RgbImage::from_pixel(SIZE, SIZE, GRASS);
    for py in 0..SIZE {
        for px in 0..SIZE {
            let (x, y) = frame.to_world(px as f64, py as f64);
            if world.on_trail(x, y) {
                img.put_pixel(px, py, TRAIL);
            }
        }
    }
    polyline(&mut img, &frame, &centerline, 1, CENTER);
    polyline(&mut img, &frame, &path, 2, PATH);
    img
}
