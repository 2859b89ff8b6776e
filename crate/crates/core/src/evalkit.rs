//! Offline scoring of predicted masks against ground truth.
//!
//! Ground-truth void pixels are unlabeled and excluded from every metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{SegClass, SegMask};

/// Floor applied to predicted probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;
pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("dimension mismatch: ground truth {gt:?}, prediction {pred:?}")]
    DimensionMismatch { gt: (usize, usize), pred: (usize, usize) },
    #[error("ground truth has no non-void pixels")]
    NoEvaluablePixels,
    #[error("invalid probability mask: {0}")]
    InvalidProbabilities(String),
}

/// Per-pixel class probabilities, indexed by [`SegClass::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMask {
    width: usize,
    height: usize,
    probs: Vec<[f64; NUM_CLASSES]>,
}

impl ProbMask {
    pub fn new(width: usize, height: usize, probs: Vec<[f64; NUM_CLASSES]>) -> Result<Self, EvalError> {
        if width == 0 || height == 0 || probs.len() != width * height {
            return Err(EvalError::InvalidProbabilities(format!(
                "{} vectors for a {width}x{height} mask",
                probs.len()
            )));
        }
        for (i, p) in probs.iter().enumerate() {
            if p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return Err(EvalError::InvalidProbabilities(format!("pixel {i}: {p:?}")));
            }
        }
        Ok(Self { width, height, probs })
    }

    /// All probability on the predicted class of each pixel.
    pub fn one_hot(mask: &SegMask) -> Self {
        let probs = mask
            .data()
            .iter()
            .map(|c| {
                let mut p = [0.0; NUM_CLASSES];
                p[c.index()] = 1.0;
                p
            })
            .collect();
        Self { width: mask.width(), height: mask.height(), probs }
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        Self { width, height, probs: vec![[1.0 / 3.0; NUM_CLASSES]; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probs(&self) -> &[[f64; NUM_CLASSES]] {
        &self.probs
    }
}

fn check_dims(gt: &SegMask, w: usize, h: usize) -> Result<(), EvalError> {
    if (gt.width(), gt.height()) != (w, h) {
        return Err(EvalError::DimensionMismatch { gt: (gt.width(), gt.height()), pred: (w, h) });
    }
    Ok(())
}

/// Mean negative log-probability of the true class over non-void pixels, in
/// nats per pixel.
pub fn cross_entropy(gt: &SegMask, pred: &ProbMask) -> Result<f64, EvalError> {
    check_dims(gt, pred.width, pred.height)?;
    let (sum, n) = gt
        .data()
        .iter()
        .zip(&pred.probs)
        .filter(|(c, _)| **c != SegClass::Void)
        .fold((0.0, 0usize), |(s, n), (c, p)| (s - p[c.index()].max(PROB_FLOOR).ln(), n + 1));
    if n == 0 {
        return Err(EvalError::NoEvaluablePixels);
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapMetrics {
    /// IoU per class index; `None` when the class is absent from both masks
    /// over the evaluated pixels. Void is never scored.
    pub per_class_iou: [Option<f64>; NUM_CLASSES],
    pub pixel_accuracy: f64,
    pub evaluated_pixels: usize,
}

pub fn overlap_metrics(gt: &SegMask, pred: &SegMask) -> Result<OverlapMetrics, EvalError> {
    check_dims(gt, pred.width(), pred.height())?;
    let mut inter = [0usize; NUM_CLASSES];
    let mut union = [0usize; NUM_CLASSES];
    let mut correct = 0usize;
    let mut n = 0usize;
    for (&g, &p) in gt.data().iter().zip(pred.data()) {
        if g == SegClass::Void {
            continue;
        }
        n += 1;
        if g == p {
            correct += 1;
            inter[g.index()] += 1;
            union[g.index()] += 1;
        } else {
            union[g.index()] += 1;
            union[p.index()] += 1;
        }
    }
    let mut per_class_iou = [None; NUM_CLASSES];
    for class in [SegClass::Traversable, SegClass::Untraversable] {
        let k = class.index();
        if union[k] > 0 {
            per_class_iou[k] = Some(inter[k] as f64 / union[k] as f64);
        }
    }
    Ok(OverlapMetrics {
        per_class_iou,
        pixel_accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        evaluated_pixels: n,
    })
}

/// Complete score for one ground-truth / prediction pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cross_entropy: f64,
    pub per_class_iou: [Option<f64>; NUM_CLASSES],
    pub pixel_accuracy: f64,
    pub evaluated_pixels: usize,
}

pub fn evaluate(gt: &SegMask, probs: &ProbMask, hard: &SegMask) -> Result<EvalReport, EvalError> {
    let cross_entropy = cross_entropy(gt, probs)?;
    let o = overlap_metrics(gt, hard)?;
    Ok(EvalReport {
        cross_entropy,
        per_class_iou: o.per_class_iou,
        pixel_accuracy: o.pixel_accuracy,
        evaluated_pixels: o.evaluated_pixels,
    })
}

/// Scores a hard prediction, treating it as one-hot probabilities.
pub fn evaluate_hard(gt: &SegMask, pred: &SegMask) -> Result<EvalReport, EvalError> {
    evaluate(gt, &ProbMask::one_hot(pred), pred)
}
