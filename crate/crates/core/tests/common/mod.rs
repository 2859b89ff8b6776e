//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use trailnav::sim::{CameraModel, RobotPose};

/// Unevaluated sum `hi + lo` carrying roughly 106 bits of mantissa.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2) + Dd::from(q3)
    }
}

/// Least squares through the normal equations `(P^T P) b = P^T y`, formed and
/// solved by Gaussian elimination in double-double arithmetic.
pub fn normal_equations_fit(params: &[f64], values: &[f64], degree: usize) -> Vec<f64> {
    let n = degree + 1;
    let rows: Vec<Vec<Dd>> = params
        .iter()
        .map(|&p| {
            let mut row = vec![Dd::ONE; n];
            for k in 1..n {
                row[k] = row[k - 1] * Dd::from(p);
            }
            row
        })
        .collect();
    let mut a = vec![vec![Dd::ZERO; n + 1]; n];
    for (row, &y) in rows.iter().zip(values) {
        for i in 0..n {
            for j in 0..n {
                a[i][j] = a[i][j] + row[i] * row[j];
            }
            a[i][n] = a[i][n] + row[i] * Dd::from(y);
        }
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().hi.total_cmp(&a[y][col].abs().hi)).unwrap();
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in a.iter_mut().skip(col + 1) {
            let factor = row[col] / pivot_row[col];
            for (v, p) in row.iter_mut().zip(&pivot_row).skip(col) {
                *v = *v - factor * *p;
            }
        }
    }
    let mut x = vec![Dd::ZERO; n];
    for i in (0..n).rev() {
        let mut acc = a[i][n];
        for j in i + 1..n {
            acc = acc - a[i][j] * x[j];
        }
        x[i] = acc / a[i][i];
    }
    x.into_iter().map(Dd::to_f64).collect()
}

/// Euclidean relative error of `got` against `want`.
pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(g, w)| (g - w).powi(2)).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Predicted midpoint column of image row `v` for a straight trail along the
/// world x axis (centerline y = 0, half width `half`), derived from the pinhole
/// ray-ground intersection. `None` when the row is above the horizon or either
/// trail edge falls outside the image.
pub fn straight_trail_mid_column(cam: &CameraModel, pose: &RobotPose, half: f64, v: usize) -> Option<f64> {
    let w = cam.image_width as f64;
    let f = (w / 2.0) / (cam.horizontal_fov / 2.0).tan();
    let cx = (w - 1.0) / 2.0;
    let cy = (cam.image_height as f64 - 1.0) / 2.0;
    let d = (v as f64 - cy) / f;
    let (sp, cp) = cam.pitch.sin_cos();
    let down = sp + d * cp;
    if down <= 1e-9 {
        return None;
    }
    let t = cam.height_above_ground / down;
    let forward = t * (cp - d * sp);
    let (sh, ch) = pose.heading.sin_cos();
    // World y of column u is linear: y(u) = pose.y + forward*sh + ch*t*(u - cx)/f.
    let slope = ch * t / f;
    if slope.abs() < 1e-12 {
        return None;
    }
    let at_cx = pose.y + forward * sh;
    let u_a = cx + (-half - at_cx) / slope;
    let u_b = cx + (half - at_cx) / slope;
    let (lo, hi) = if u_a < u_b { (u_a, u_b) } else { (u_b, u_a) };
    let (first, last) = (lo.ceil(), hi.floor());
    if first < 1.0 || last > w - 2.0 || last - first < 2.0 {
        return None;
    }
    Some((first + last) / 2.0)
}
