//! Mask-branch losses: BCE, the differentiable IoU surrogate, their convex
//! combination with an annealed mixing weight, and the auxiliary
//! classification / box losses.
//!
//! The value-level functions here are also used by the tape nodes in
//! [`crate::autodiff`], so the forward formula has a single home.

use std::sync::Once;

use crate::error::{Error, Result};
use crate::num::{real, Real};
use crate::tensor::Tensor;

const BCE_EPS: f64 = 1e-12;

static CLAMP_WARNING: Once = Once::new();

#[inline]
fn clamp_prob<S: Real>(p: S) -> S {
    let eps = real::<S>(BCE_EPS);
    let hi = S::one() - eps;
    if p < eps || p > hi {
        CLAMP_WARNING.call_once(|| {
            log::warn!("bce input outside (0,1); clamping to [{BCE_EPS}, 1-{BCE_EPS}]");
        });
        p.max(eps).min(hi)
    } else {
        p
    }
}

pub(crate) fn bce_raw<S: Real>(pred: &[S], gt: &[S]) -> S {
    let n = real::<S>(pred.len() as f64);
    let mut acc = S::zero();
    for (&p, &y) in pred.iter().zip(gt) {
        let p = clamp_prob(p);
        acc -= y * p.ln() + (S::one() - y) * (S::one() - p).ln();
    }
    acc / n
}

pub(crate) fn bce_grad_raw<S: Real>(pred: &[S], gt: &[S]) -> Vec<S> {
    let n = real::<S>(pred.len() as f64);
    pred.iter()
        .zip(gt)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            (-(y / p) + (S::one() - y) / (S::one() - p)) / n
        })
        .collect()
}

pub(crate) fn iou_hat_raw<S: Real>(pred: &[S], gt: &[S]) -> Result<S> {
    let mut inter = S::zero();
    let mut union = S::zero();
    for (&x, &y) in pred.iter().zip(gt) {
        inter += x * y;
        union += x + y - x * y;
    }
    if union <= S::zero() {
        return Err(Error::UndefinedRatio(
            "iou_hat denominator is zero (empty prediction and ground truth)".into(),
        ));
    }
    Ok(inter / union)
}

pub(crate) fn iou_hat_grad_raw<S: Real>(pred: &[S], gt: &[S]) -> Vec<S> {
    let mut inter = S::zero();
    let mut union = S::zero();
    for (&x, &y) in pred.iter().zip(gt) {
        inter += x * y;
        union += x + y - x * y;
    }
    let u2 = union * union;
    pred.iter()
        .zip(gt)
        .map(|(_, &y)| (y * union - inter * (S::one() - y)) / u2)
        .collect()
}

pub(crate) fn softmax_ce_raw<S: Real>(logits: &[S], label: usize) -> S {
    let max = logits.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
    let log_z = logits.iter().map(|&l| (l - max).exp()).sum::<S>().ln() + max;
    log_z - logits[label]
}

pub(crate) fn softmax_ce_grad_raw<S: Real>(logits: &[S], label: usize) -> Vec<S> {
    let max = logits.iter().fold(S::neg_infinity(), |a, &b| a.max(b));
    let z: S = logits.iter().map(|&l| (l - max).exp()).sum();
    logits
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let p = (l - max).exp() / z;
            if i == label {
                p - S::one()
            } else {
                p
            }
        })
        .collect()
}

pub(crate) fn smooth_l1_raw<S: Real>(pred: &[S], target: &[S]) -> S {
    let n = real::<S>(pred.len() as f64);
    let half = real::<S>(0.5);
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = (p - t).abs();
            if d < S::one() {
                half * d * d
            } else {
                d - half
            }
        })
        .sum::<S>()
        / n
}

pub(crate) fn smooth_l1_grad_raw<S: Real>(pred: &[S], target: &[S]) -> Vec<S> {
    let n = real::<S>(pred.len() as f64);
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| (p - t).max(-S::one()).min(S::one()) / n)
        .collect()
}

/// Mean binary cross-entropy of predictions in `(0,1)` against 0/1 targets.
/// Saturated predictions are clamped to `[1e-12, 1-1e-12]`, not rejected.
pub fn bce<S: Real>(pred: &Tensor<S>, gt: &Tensor<S>) -> Result<S> {
    pred.check_same_shape(gt, "bce operands")?;
    Ok(bce_raw(pred.data(), gt.data()))
}

/// Differentiable IoU surrogate `Σ XY / Σ (X + Y − XY)`.
pub fn iou_hat<S: Real>(pred: &Tensor<S>, gt: &Tensor<S>) -> Result<S> {
    pred.check_same_shape(gt, "iou_hat operands")?;
    iou_hat_raw(pred.data(), gt.data())
}

/// Augmented mask loss `α·BCE + (1−α)·(1 − iou_hat)`.
///
/// With `strict_paper` the IoU term enters in its raw form, without the `1 −`
/// flip; that variant rewards overlap loss-increasingly and exists only for
/// comparison.
pub fn mask_loss<S: Real>(
    pred: &Tensor<S>,
    gt: &Tensor<S>,
    alpha: S,
    strict_paper: bool,
) -> Result<S> {
    if alpha < S::zero() || alpha > S::one() {
        return Err(Error::Contract(format!("alpha must lie in [0,1], got {alpha}")));
    }
    let b = bce(pred, gt)?;
    let i = iou_hat(pred, gt)?;
    let term = if strict_paper { i } else { S::one() - i };
    Ok(alpha * b + (S::one() - alpha) * term)
}

/// Sparse softmax cross-entropy with max-subtraction for stability.
pub fn softmax_ce<S: Real>(logits: &Tensor<S>, label: usize) -> Result<S> {
    if label >= logits.numel() {
        return Err(Error::Contract(format!(
            "label {label} out of range for {} logits",
            logits.numel()
        )));
    }
    Ok(softmax_ce_raw(logits.data(), label))
}

/// Smooth-L1 (Huber) loss, mean over coordinates.
pub fn smooth_l1<S: Real>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<S> {
    pred.check_same_shape(target, "smooth_l1 operands")?;
    Ok(smooth_l1_raw(pred.data(), target.data()))
}

/// Stepwise-decaying mixing weight for the augmented mask loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSchedule {
    pub initial: f64,
    pub decrement: f64,
    /// Iterations between consecutive decrements.
    pub period: usize,
    pub floor: f64,
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        AlphaSchedule {
            initial: 0.7,
            decrement: 0.01,
            period: 10,
            floor: 0.0,
        }
    }
}

impl AlphaSchedule {
    pub fn new(initial: f64, decrement: f64, period: usize, floor: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&initial) {
            return Err(Error::Config(format!(
                "alpha initial must lie in [0,1], got {initial}"
            )));
        }
        if decrement < 0.0 {
            return Err(Error::Config(format!(
                "alpha decrement must be non-negative, got {decrement}"
            )));
        }
        if period == 0 {
            return Err(Error::Config("alpha period must be positive".into()));
        }
        if floor < 0.0 || floor > initial {
            return Err(Error::Config(format!(
                "alpha floor must lie in [0, initial], got {floor}"
            )));
        }
        Ok(AlphaSchedule {
            initial,
            decrement,
            period,
            floor,
        })
    }

    /// Re-checks the constructor invariants on a hand-built schedule.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.initial, self.decrement, self.period, self.floor).map(|_| ())
    }

    /// Mixing weight at a given iteration:
    /// `max(floor, initial − decrement·⌊iteration/period⌋)`.
    pub fn alpha_at(&self, iteration: usize) -> f64 {
        let steps = (iteration / self.period) as f64;
        (self.initial - self.decrement * steps).max(self.floor)
    }
}
