//! Seeded segmentation-failure injection.
//!
//! Every frame draws from its own ChaCha stream selected by the frame
//! sequence number, so the noise applied to frame `k` does not depend on how
//! many random numbers earlier frames consumed. Blob failures are drawn per
//! block of `blob_hold_frames` consecutive frames from a second family of
//! streams, so one misread grass patch persists across the block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::mask::{FrameStamp, SegClass, SegMask};

const BLOB_STREAM: u64 = 1 << 63;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-frame probability of painting a false traversable blob.
    pub blob_failure_prob: f64,
    /// Blob radius in pixels.
    pub blob_size: f64,
    /// Frames a blob decision and placement is held for (>= 1).
    pub blob_hold_frames: u64,
    pub pixel_flip_prob: f64,
    pub dropout_prob: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { blob_failure_prob: 0.2, blob_size: 24.0, blob_hold_frames: 1, pixel_flip_prob: 0.0, dropout_prob: 0.0, seed: 0 }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { blob_failure_prob: 0.0, pixel_flip_prob: 0.0, dropout_prob: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [
            ("blob_failure_prob", self.blob_failure_prob),
            ("pixel_flip_prob", self.pixel_flip_prob),
            ("dropout_prob", self.dropout_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::ConfigInvalid(format!("{name} = {p} not in [0, 1]")));
            }
        }
        if !(self.blob_size >= 0.0 && self.blob_size.is_finite()) {
            return Err(SimError::ConfigInvalid("blob_size must be >= 0".into()));
        }
        if self.blob_hold_frames == 0 {
            return Err(SimError::ConfigInvalid("blob_hold_frames must be >= 1".into()));
        }
        Ok(())
    }

    pub fn frame_rng(&self, frame: FrameStamp) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame.sequence);
        rng
    }

    /// Stream for the blob block containing `frame`.
    pub fn blob_rng(&self, frame: FrameStamp) -> ChaCha8Rng {
        let block = frame.sequence / self.blob_hold_frames.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(BLOB_STREAM | block);
        rng
    }
}

/// Untraversable pixels bordering the traversable region (4-neighbourhood).
fn trail_border(mask: &SegMask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) != SegClass::Untraversable {
                continue;
            }
            let touches = (x > 0 && mask.get(x - 1, y) == SegClass::Traversable)
                || (x + 1 < w && mask.get(x + 1, y) == SegClass::Traversable)
                || (y > 0 && mask.get(x, y - 1) == SegClass::Traversable)
                || (y + 1 < h && mask.get(x, y + 1) == SegClass::Traversable);
            if touches {
                out.push((x, y));
            }
        }
    }
    out
}

fn paint_blob(mask: &mut SegMask, cx: usize, cy: usize, radius: f64) {
    let r = radius.ceil() as isize;
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) > radius * radius {
                continue;
            }
            let (x, y) = (cx as isize + dx, cy as isize + dy);
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let (x, y) = (x as usize, y as usize);
            if mask.get(x, y) == SegClass::Untraversable {
                mask.set(x, y, SegClass::Traversable);
            }
        }
    }
}

/// Applies, in order: whole-frame dropout (all void), a false traversable
/// blob grown from the trail border into the grass, and independent
/// traversable/untraversable pixel flips.
pub fn inject_noise(mask: &SegMask, noise: &NoiseModel, frame: FrameStamp) -> SegMask {
    let mut rng = noise.frame_rng(frame);
    let mut blob_rng = noise.blob_rng(frame);
    let dropout = rng.random::<f64>() < noise.dropout_prob;
    let blob = blob_rng.random::<f64>() < noise.blob_failure_prob;
    if dropout {
        return SegMask::filled(mask.width(), mask.height(), SegClass::Void).expect("non-empty mask");
    }
    let mut out = mask.clone();
    if blob && noise.blob_size > 0.0 {
        let border = trail_border(mask);
        let seeds: Vec<(usize, usize)> = if border.is_empty() {
            (0..mask.len())
                .filter(|&i| mask.data()[i] == SegClass::Untraversable)
                .map(|i| (i % mask.width(), i / mask.width()))
                .collect()
        } else {
            border
        };
        if !seeds.is_empty() {
            let pick = ((blob_rng.random::<f64>() * seeds.len() as f64) as usize).min(seeds.len() - 1);
            let (cx, cy) = seeds[pick];
            paint_blob(&mut out, cx, cy, noise.blob_size);
        }
    }
    if noise.pixel_flip_prob > 0.0 {
        for c in out.data_mut() {
            if rng.random::<f64>() < noise.pixel_flip_prob {
                *c = match *c {
                    SegClass::Traversable => SegClass::Untraversable,
                    SegClass::Untraversable => SegClass::Traversable,
                    SegClass::Void => SegClass::Void,
                };
            }
        }
    }
    out
}
