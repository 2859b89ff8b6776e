//! Temporal trajectory compensation.
//!
//! Each frame's fitted coefficients and yaw are blended with the previous
//! compensated values by a convex combination. The weight given to the new
//! frame shrinks exponentially with how far it deviates from history, down to
//! a floor `w_min`, so a single mis-segmented frame can only pull the plan a
//! bounded distance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pathfit::{eval_poly, PolyCoeffs};

/// Samples used by [`deviation_metric`], one at the center of each of this
/// many equal bins of `[0, 1]`.
pub const DEVIATION_SAMPLES: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum CompensatorError {
    #[error("blend weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("no plan yet: the first frame carried no estimate")]
    Uninitialized,
    #[error("invalid compensator config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensatorConfig {
    pub base_w1: f64,
    pub base_w_alpha_hat: f64,
    /// Attenuation per pixel of RMS curve deviation.
    pub lambda_beta: f64,
    /// Attenuation per radian of yaw change.
    pub lambda_alpha: f64,
    pub w_min: f64,
    pub max_consecutive_rejects: u32,
    /// Fraction of the commanded turn between frames subtracted from the stored yaw,
    /// so history is compared in the camera frame the next mask is taken in.
    pub ego_motion_gain: f64,
}

impl Default for CompensatorConfig {
    fn default() -> Self {
        Self {
            base_w1: 0.6,
            base_w_alpha_hat: 0.6,
            lambda_beta: 0.05,
            lambda_alpha: 2.0,
            w_min: 0.05,
            max_consecutive_rejects: 8,
            ego_motion_gain: 0.0,
        }
    }
}

impl CompensatorConfig {
    /// Pass-through configuration: every new estimate is adopted as-is.
    pub fn disabled() -> Self {
        Self { base_w1: 1.0, base_w_alpha_hat: 1.0, lambda_beta: 0.0, lambda_alpha: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), CompensatorError> {
        for (name, w) in [("base_w1", self.base_w1), ("base_w_alpha_hat", self.base_w_alpha_hat), ("w_min", self.w_min)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(CompensatorError::Config(format!("{name} = {w} not in [0, 1]")));
            }
        }
        if self.w_min > self.base_w1 || self.w_min > self.base_w_alpha_hat {
            return Err(CompensatorError::Config("w_min exceeds a base weight".into()));
        }
        if !(self.ego_motion_gain >= 0.0 && self.ego_motion_gain.is_finite()) {
            return Err(CompensatorError::Config("ego_motion_gain must be finite and >= 0".into()));
        }
        if !(self.lambda_beta >= 0.0 && self.lambda_alpha >= 0.0) {
            return Err(CompensatorError::Config("attenuation rates must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensatorState {
    pub config: CompensatorConfig,
    pub prev_beta: PolyCoeffs,
    pub prev_alpha: f64,
    pub initialized: bool,
}

impl CompensatorState {
    pub fn new(config: CompensatorConfig) -> Self {
        Self { config, prev_beta: PolyCoeffs::constant(0.0), prev_alpha: 0.0, initialized: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensatedPlan {
    pub beta: PolyCoeffs,
    pub alpha: f64,
    pub applied_w1: f64,
    pub applied_w_alpha_hat: f64,
    /// The frame carried no usable estimate and the previous plan was held.
    pub rejected: bool,
}

/// RMS distance in pixels between two curves, sampled at
/// [`DEVIATION_SAMPLES`] evenly spaced bin centers in `[0, 1]`.
pub fn deviation_metric(new_beta: &PolyCoeffs, prev_beta: &PolyCoeffs) -> f64 {
    let n = DEVIATION_SAMPLES;
    let sum: f64 = (0..n)
        .map(|i| {
            let p = (i as f64 + 0.5) / n as f64;
            (eval_poly(new_beta, p) - eval_poly(prev_beta, p)).powi(2)
        })
        .sum();
    (sum / n as f64).sqrt()
}

fn check_weight(w: f64) -> Result<(), CompensatorError> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(CompensatorError::WeightOutOfRange(w))
    }
}

/// `w1 * new + (1 - w1) * prev`, coefficient-wise after zero-padding.
pub fn blend_coeffs(new_beta: &PolyCoeffs, state: &CompensatorState, w1: f64) -> Result<PolyCoeffs, CompensatorError> {
    check_weight(w1)?;
    let prev = &state.prev_beta;
    let len = new_beta.as_slice().len().max(prev.as_slice().len());
    let w2 = 1.0 - w1;
    let blended = (0..len).map(|k| w1 * new_beta.coeff(k) + w2 * prev.coeff(k)).collect();
    PolyCoeffs::new(blended).ok_or(CompensatorError::WeightOutOfRange(w1))
}

/// `w_hat * new + (1 - w_hat) * prev`. Both angles lie in (-pi/2, pi/2) so no
/// wrap-around handling is needed.
pub fn blend_yaw(new_alpha: f64, state: &CompensatorState, w_hat: f64) -> Result<f64, CompensatorError> {
    check_weight(w_hat)?;
    Ok(w_hat * new_alpha + (1.0 - w_hat) * state.prev_alpha)
}

/// `max(w_min, base * exp(-lambda * deviation))`.
pub fn attenuated_weight(base: f64, lambda: f64, deviation: f64, w_min: f64) -> f64 {
    (base * (-lambda * deviation).exp()).max(w_min)
}

/// Advances the filter by one frame. A frame missing either estimate is
/// rejected as a whole and the previous plan is held.
pub fn step(
    new_beta: Option<&PolyCoeffs>,
    new_alpha: Option<f64>,
    state: &CompensatorState,
) -> Result<(CompensatedPlan, CompensatorState), CompensatorError> {
    let cfg = &state.config;
    let (beta, alpha) = match (new_beta, new_alpha) {
        (Some(b), Some(a)) => (b, a),
        _ if !state.initialized => return Err(CompensatorError::Uninitialized),
        _ => {
            let plan = CompensatedPlan {
                beta: state.prev_beta.clone(),
                alpha: state.prev_alpha,
                applied_w1: cfg.w_min,
                applied_w_alpha_hat: cfg.w_min,
                rejected: true,
            };
            return Ok((plan, state.clone()));
        }
    };

    if !state.initialized {
        let plan = CompensatedPlan {
            beta: beta.clone(),
            alpha,
            applied_w1: 1.0,
            applied_w_alpha_hat: 1.0,
            rejected: false,
        };
        let next = CompensatorState {
            config: cfg.clone(),
            prev_beta: beta.clone(),
            prev_alpha: alpha,
            initialized: true,
        };
        return Ok((plan, next));
    }

    let deviation = deviation_metric(beta, &state.prev_beta);
    let w1 = attenuated_weight(cfg.base_w1, cfg.lambda_beta, deviation, cfg.w_min);
    let w_hat = attenuated_weight(cfg.base_w_alpha_hat, cfg.lambda_alpha, (alpha - state.prev_alpha).abs(), cfg.w_min);
    let blended_beta = blend_coeffs(beta, state, w1)?;
    let blended_alpha = blend_yaw(alpha, state, w_hat)?;

    let plan = CompensatedPlan {
        beta: blended_beta.clone(),
        alpha: blended_alpha,
        applied_w1: w1,
        applied_w_alpha_hat: w_hat,
        rejected: false,
    };
    let next = CompensatorState {
        config: cfg.clone(),
        prev_beta: blended_beta,
        prev_alpha: blended_alpha,
        initialized: true,
    };
    Ok((plan, next))
}
