//! Least-squares polynomial fit of the midline.
//!
//! The lateral midpoint position is modelled as a polynomial in the
//! normalized forward parameter `p = rows_above_bottom / image_height`, which
//! keeps every parameter in `[0, 1)` and bounds the Vandermonde condition
//! number. The system is solved with Householder QR; when the number of
//! midpoints equals `degree + 1` this is plain interpolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midline::MidlineEstimate;

pub const DEFAULT_DEGREE: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("{points} points cannot determine a degree-{degree} polynomial")]
    Underdetermined { points: usize, degree: usize },
    #[error("only {distinct} distinct parameters for a degree-{degree} polynomial")]
    DuplicateParams { distinct: usize, degree: usize },
    #[error("parameter and value lengths differ ({params} vs {values})")]
    LengthMismatch { params: usize, values: usize },
    #[error("midline estimate is not valid")]
    InvalidMidline,
    #[error("rank-deficient or non-finite least-squares system")]
    NumericalFailure,
}

/// Polynomial coefficients `beta[k]` multiplying `p^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    beta: Vec<f64>,
}

impl PolyCoeffs {
    /// Returns `None` when `beta` is empty or holds a non-finite entry.
    pub fn new(beta: Vec<f64>) -> Option<Self> {
        if beta.is_empty() || beta.iter().any(|b| !b.is_finite()) {
            return None;
        }
        Some(Self { beta })
    }

    pub fn constant(value: f64) -> Self {
        Self { beta: vec![value] }
    }

    pub fn degree(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.beta
    }

    /// Coefficient `k`, zero beyond the stored degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.beta.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, p: f64) -> f64 {
        eval_poly(self, p)
    }
}

/// Vandermonde design matrix, row-major, including the constant column.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.entries[i * self.cols + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn build_design(params: &[f64], degree: usize) -> Result<DesignMatrix, FitError> {
    let cols = degree + 1;
    if params.len() < cols {
        return Err(FitError::Underdetermined { points: params.len(), degree });
    }
    let mut sorted = params.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < cols {
        return Err(FitError::DuplicateParams { distinct: sorted.len(), degree });
    }
    let mut entries = Vec::with_capacity(params.len() * cols);
    for &p in params {
        let mut power = 1.0;
        for _ in 0..cols {
            entries.push(power);
            power *= p;
        }
    }
    Ok(DesignMatrix { rows: params.len(), cols, entries })
}

/// Horner evaluation of `sum beta_k p^k`.
pub fn eval_poly(beta: &PolyCoeffs, p: f64) -> f64 {
    beta.beta.iter().rev().fold(0.0, |acc, &b| acc * p + b)
}

/// Least-squares polynomial through `(params[i], values[i])`.
pub fn fit_points(params: &[f64], values: &[f64], degree: usize) -> Result<PolyCoeffs, FitError> {
    if params.len() != values.len() {
        return Err(FitError::LengthMismatch { params: params.len(), values: values.len() });
    }
    let design = build_design(params, degree)?;
    let beta = householder_solve(&design, values)?;
    PolyCoeffs::new(beta).ok_or(FitError::NumericalFailure)
}

/// Normalized forward parameters of the accepted midline rows.
pub fn midline_params(midline: &MidlineEstimate) -> Vec<f64> {
    let h = midline.image_height.max(1) as f64;
    midline.forward_offsets().map(|f| f / h).collect()
}

pub fn fit_poly(midline: &MidlineEstimate, degree: usize) -> Result<PolyCoeffs, FitError> {
    if !midline.valid {
        return Err(FitError::InvalidMidline);
    }
    let params = midline_params(midline);
    let values: Vec<f64> = midline.rows.iter().map(|r| r.mid_x).collect();
    fit_points(&params, &values, degree)
}

/// Solves `min ||A x - b||` by Householder QR on a working copy of `A`.
fn householder_solve(a: &DesignMatrix, b: &[f64]) -> Result<Vec<f64>, FitError> {
    let (m, n) = (a.rows, a.cols);
    let mut r = a.entries.clone();
    let mut rhs = b.to_vec();
    let at = |i: usize, j: usize| i * n + j;

    let scale = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for k in 0..n {
        let norm = (k..m).map(|i| r[at(i, k)].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(FitError::NumericalFailure);
        }
        let alpha = if r[at(k, k)] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in column k below the diagonal.
        let mut v: Vec<f64> = (k..m).map(|i| r[at(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i - k] * r[at(i, j)]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..m {
                    r[at(i, j)] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..m).map(|i| v[i - k] * rhs[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                rhs[i] -= f * v[i - k];
            }
        }
        if r[at(k, k)].abs() <= scale * 1e-13 * m as f64 {
            return Err(FitError::NumericalFailure);
        }
    }

    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let tail: f64 = (k + 1..n).map(|j| r[at(k, j)] * x[j]).sum();
        x[k] = (rhs[k] - tail) / r[at(k, k)];
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(FitError::NumericalFailure)
    }
}
