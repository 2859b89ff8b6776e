//! Trail midline extraction and the start-point yaw estimate.
//!
//! Coordinates: `x` is the image column (lateral, increasing to the right) and
//! the forward coordinate is the number of rows above the bottom image row.
//! The start point `p0` sits on the bottom row at the horizontal pixel center
//! `(width - 1) / 2`, so a mask and its mirror image produce exactly negated
//! lateral offsets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{SegClass, SegMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidlineConfig {
    pub min_run_width: usize,
    pub min_rows: usize,
    pub downsample_factor: usize,
}

impl Default for MidlineConfig {
    fn default() -> Self {
        Self { min_run_width: 3, min_rows: 5, downsample_factor: 8 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MidlineError {
    #[error("midline estimate is not valid")]
    InvalidMidline,
    #[error("midpoints have no forward extent (sum of forward offsets = {0})")]
    DegenerateGeometry(f64),
    #[error("invalid midline config: {0}")]
    Config(String),
}

impl MidlineConfig {
    pub fn validate(&self) -> Result<(), MidlineError> {
        if self.min_run_width < 1 {
            return Err(MidlineError::Config("min_run_width must be >= 1".into()));
        }
        if self.min_rows < 2 {
            return Err(MidlineError::Config("min_rows must be >= 2".into()));
        }
        if self.downsample_factor < 1 {
            return Err(MidlineError::Config("downsample_factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// One accepted row of the midline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidRow {
    /// Rows above the bottom image row (bottom row = 0).
    pub row_index: usize,
    pub mid_x: f64,
    pub run_width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MidlineEstimate {
    pub rows: Vec<MidRow>,
    /// `p0` as (x, forward); forward is always 0.
    pub start_point: (f64, f64),
    pub image_width: usize,
    pub image_height: usize,
    pub valid: bool,
}

impl MidlineEstimate {
    /// Forward offset of every accepted row from `p0`, in rows.
    pub fn forward_offsets(&self) -> impl Iterator<Item = f64> + '_ {
        let y0 = self.start_point.1;
        self.rows.iter().map(move |r| r.row_index as f64 - y0)
    }

    pub fn lateral_offsets(&self) -> impl Iterator<Item = f64> + '_ {
        let x0 = self.start_point.0;
        self.rows.iter().map(move |r| r.mid_x - x0)
    }
}

/// Horizontal pixel center of an image `width` pixels wide.
pub fn center_column(width: usize) -> f64 {
    (width as f64 - 1.0) / 2.0
}

/// Inclusive `[left, right]` column spans of contiguous traversable pixels.
pub(crate) fn traversable_runs(row: &[SegClass]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (x, &c) in row.iter().enumerate() {
        match (c == SegClass::Traversable, start) {
            (true, None) => start = Some(x),
            (false, Some(s)) => {
                runs.push((s, x - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, row.len() - 1));
    }
    runs
}

/// Scans rows bottom-up and records the midpoint of the traversable run that
/// best continues the trail. Never fails: an unusable mask yields
/// `valid == false`.
pub fn extract_midline(mask: &SegMask, cfg: &MidlineConfig) -> MidlineEstimate {
    let (width, height) = (mask.width(), mask.height());
    let center = center_column(width);
    let mut rows: Vec<MidRow> = Vec::new();

    for row_index in 0..height {
        let y = height - 1 - row_index;
        let reference = rows.last().map_or(center, |r| r.mid_x);
        let best = traversable_runs(mask.row(y))
            .into_iter()
            .map(|(l, r)| ((l + r) as f64 / 2.0, r - l + 1, l))
            .min_by(|a, b| {
                let da = (a.0 - reference).abs();
                let db = (b.0 - reference).abs();
                da.total_cmp(&db)
                    .then(b.1.cmp(&a.1))
                    .then(a.2.cmp(&b.2))
            });
        if let Some((mid_x, run_width, _)) = best {
            if run_width >= cfg.min_run_width {
                rows.push(MidRow { row_index, mid_x, run_width });
            }
        }
    }

    let valid = rows.len() >= cfg.min_rows;
    MidlineEstimate {
        rows,
        start_point: (center, 0.0),
        image_width: width,
        image_height: height,
        valid,
    }
}

/// Heading correction toward the averaged midpoint:
/// `atan(sum(x_i - x0) / sum(y_i - y0))`. Positive means the trail lies
/// toward the image right.
pub fn compute_yaw(midline: &MidlineEstimate) -> Result<f64, MidlineError> {
    if !midline.valid {
        return Err(MidlineError::InvalidMidline);
    }
    let lateral: f64 = midline.lateral_offsets().sum();
    let forward: f64 = midline.forward_offsets().sum();
    if forward <= 0.0 || !forward.is_finite() {
        return Err(MidlineError::DegenerateGeometry(forward));
    }
    Ok((lateral / forward).atan())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::SegClass::{Traversable as T, Untraversable as U, Void as V};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn band(width: usize, height: usize, edges: impl Fn(usize) -> (usize, usize)) -> SegMask {
        SegMask::from_fn(width, height, |x, y| {
            let (l, r) = edges(y);
            if x >= l && x <= r {
                T
            } else {
                U
            }
        })
        .unwrap()
    }

    fn estimate(rows: Vec<(usize, f64)>, width: usize) -> MidlineEstimate {
        MidlineEstimate {
            rows: rows
                .into_iter()
                .map(|(row_index, mid_x)| MidRow { row_index, mid_x, run_width: 5 })
                .collect(),
            start_point: (center_column(width), 0.0),
            image_width: width,
            image_height: 100,
            valid: true,
        }
    }

    #[test]
    fn constant_band_midpoints() {
        let m = band(40, 30, |_| (10, 20));
        let est = extract_midline(&m, &MidlineConfig::default());
        assert!(est.valid);
        assert_eq!(est.rows.len(), 30);
        assert!(est.rows.iter().all(|r| r.mid_x == 15.0 && r.run_width == 11));
        let idx: Vec<_> = est.rows.iter().map(|r| r.row_index).collect();
        assert_eq!(idx, (0..30).collect::<Vec<_>>());
        assert_eq!(est.start_point, (19.5, 0.0));
    }

    #[test]
    fn no_trail_is_invalid() {
        let m = SegMask::filled(20, 20, U).unwrap();
        let est = extract_midline(&m, &MidlineConfig::default());
        assert!(!est.valid);
        assert!(est.rows.is_empty());
        assert_eq!(compute_yaw(&est), Err(MidlineError::InvalidMidline));
    }

    #[test]
    fn diagonal_band_matches_row_scan() {
        let (w, h) = (60, 40);
        let m = band(w, h, |y| (y / 2, y / 2 + 10));
        let est = extract_midline(&m, &MidlineConfig::default());
        // Brute-force oracle: first and last traversable pixel of each row.
        for r in &est.rows {
            let y = h - 1 - r.row_index;
            let row: Vec<_> = (0..w).map(|x| m.get(x, y)).collect();
            let first = row.iter().position(|&c| c == T).unwrap();
            let last = row.iter().rposition(|&c| c == T).unwrap();
            assert_eq!(r.mid_x, (first + last) as f64 / 2.0);
        }
        assert_eq!(est.rows.len(), h);
    }

    #[test]
    fn narrow_runs_rejected_and_min_rows_enforced() {
        let cfg = MidlineConfig { min_run_width: 3, min_rows: 5, downsample_factor: 1 };
        // Only four rows with a wide enough run.
        let m = band(20, 10, |y| if y >= 6 { (5, 9) } else { (5, 6) });
        let est = extract_midline(&m, &cfg);
        assert_eq!(est.rows.len(), 4);
        assert!(!est.valid);
    }

    #[test]
    fn run_selection_prefers_continuity_then_width_then_left() {
        let cfg = MidlineConfig { min_run_width: 1, min_rows: 2, downsample_factor: 1 };
        // Bottom row: two runs equidistant from center 9.5 -> wider one wins.
        let mut m = SegMask::filled(20, 3, U).unwrap();
        for x in 3..=6 {
            m.set(x, 2, T); // center 4.5, width 4
        }
        for x in 14..=16 {
            m.set(x, 2, T); // center 15, width 3: farther
        }
        // Middle row: runs at 4 and 15; continuity picks the one near 4.5.
        m.set(4, 1, T);
        m.set(15, 1, T);
        // Top row: two runs at equal distance from 4 with equal width -> leftmost.
        m.set(2, 0, T);
        m.set(6, 0, T);
        let est = extract_midline(&m, &cfg);
        let mids: Vec<_> = est.rows.iter().map(|r| r.mid_x).collect();
        assert_eq!(mids, vec![4.5, 4.0, 2.0]);

        let mut m = SegMask::filled(21, 1, U).unwrap();
        m.set(6, 0, T); // distance 4 from 10, width 1
        for x in 13..=15 {
            m.set(x, 0, T); // center 14, distance 4, width 3
        }
        let est = extract_midline(&m, &cfg);
        assert_eq!(est.rows[0].mid_x, 14.0);
    }

    #[test]
    fn void_placement_outside_runs_is_irrelevant() {
        let base = band(30, 20, |y| (8 + y / 4, 16 + y / 4));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut noisy = base.clone();
        for y in 0..20 {
            for x in 0..30 {
                if noisy.get(x, y) == U && rng.random_bool(0.4) {
                    noisy.set(x, y, V);
                }
            }
        }
        let cfg = MidlineConfig::default();
        assert_eq!(extract_midline(&base, &cfg), extract_midline(&noisy, &cfg));
    }

    #[test]
    fn yaw_zero_when_straight_ahead() {
        let est = estimate((1..10).map(|r| (r, 19.5)).collect(), 40);
        assert_eq!(compute_yaw(&est).unwrap(), 0.0);
    }

    #[test]
    fn yaw_unit_diagonal_is_quarter_pi() {
        let est = estimate(vec![(1, 20.5)], 40);
        assert!((compute_yaw(&est).unwrap() - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn yaw_degenerate_when_only_bottom_row() {
        let est = estimate(vec![(0, 3.0), (0, 4.0)], 40);
        assert!(matches!(compute_yaw(&est), Err(MidlineError::DegenerateGeometry(_))));
    }

    #[test]
    fn yaw_matches_two_sum_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let w = 80;
            let rows: Vec<_> = (0..30)
                .map(|i| (i + 1, rng.random_range(0.0..(w as f64 - 1.0))))
                .collect();
            let est = estimate(rows.clone(), w);
            let x0 = (w as f64 - 1.0) / 2.0;
            let num: f64 = rows.iter().map(|r| r.1).sum::<f64>() - x0 * rows.len() as f64;
            let den: f64 = rows.iter().map(|r| r.0 as f64).sum();
            let reference = (num / den).atan();
            assert!((compute_yaw(&est).unwrap() - reference).abs() < 1e-12);
        }
    }

    #[test]
    fn flipped_mask_negates_yaw() {
        let m = band(60, 40, |y| (10 + y / 3, 22 + y / 3));
        let cfg = MidlineConfig::default();
        let a = compute_yaw(&extract_midline(&m, &cfg)).unwrap();
        let flipped = extract_midline(&m.flip_horizontal(), &cfg);
        let original = extract_midline(&m, &cfg);
        for (f, o) in flipped.rows.iter().zip(&original.rows) {
            assert_eq!(f.mid_x, 59.0 - o.mid_x);
        }
        assert_eq!(compute_yaw(&flipped).unwrap(), -a);
        assert!(a.abs() < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn yaw_invariant_under_joint_scaling() {
        let rows = vec![(3, 30.0), (7, 33.5), (12, 38.0), (20, 41.0)];
        let est = estimate(rows, 40);
        let a = compute_yaw(&est).unwrap();
        let x0 = center_column(40);
        for k in [2usize, 3, 5] {
            let mut scaled = est.clone();
            for r in scaled.rows.iter_mut() {
                r.mid_x = x0 + k as f64 * (r.mid_x - x0);
                r.row_index *= k;
            }
            assert!((compute_yaw(&scaled).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let m = band(50, 50, |y| (y / 3, y / 3 + 7));
        let cfg = MidlineConfig::default();
        assert_eq!(extract_midline(&m, &cfg), extract_midline(&m, &cfg));
    }
}
