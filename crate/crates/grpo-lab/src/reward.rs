//! Deterministic reward kernels.
//!
//! Every kernel here is a pure function: temporal 1D IoU, box 2D IoU, exact
//! match after canonical normalization, format compliance, and the weighted
//! combination into a total reward. Degenerate *predictions* score 0 rather
//! than erroring (the policy may emit them); degenerate *ground truth* is an
//! input error, because it signals a corrupt dataset.
//!
//! ```
//! use grpo_lab::reward::{combined_reward, RewardWeights};
//!
//! let w = RewardWeights::default(); // accuracy 0.9, format 0.1
//! let r = combined_reward(0.5, true, &w).unwrap();
//! assert!((r.total - 0.55).abs() < 1e-15);
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A time segment in seconds. Ground-truth intervals must satisfy
/// `end > start >= 0`; predicted intervals may be degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: f64,
    pub end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    /// Length, clamped to 0 for degenerate intervals.
    pub fn length(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.end <= self.start
    }
}

/// An axis-aligned box in normalized `[0,1]` coordinates. Ground-truth boxes
/// must have positive extent on both axes; predicted boxes may be degenerate
/// (area 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Area, 0 for degenerate boxes.
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.x_max <= self.x_min || self.y_max <= self.y_min
    }
}

/// Weights for combining accuracy and format rewards. The defaults are
/// `accuracy = 0.9`, `format = 0.1`; for a valid configuration both are
/// non-negative and they sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub accuracy: f64,
    pub format: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            accuracy: 0.9,
            format: 0.1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.accuracy < 0.0 || self.format < 0.0 {
            return Err(Error::Config("reward weights must be non-negative".into()));
        }
        if (self.accuracy + self.format - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "reward weights must sum to 1, got {} + {}",
                self.accuracy, self.format
            )));
        }
        Ok(())
    }
}

/// Per-component reward for one scored output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: f64,
    pub format: f64,
    pub total: f64,
}

/// 1D IoU of a predicted time interval against the ground truth.
///
/// Returns 0 for degenerate or disjoint predictions. A degenerate ground
/// truth is an input error.
pub fn temporal_iou(pred: &TimeInterval, gt: &TimeInterval) -> Result<f64> {
    if gt.is_degenerate() || gt.start < 0.0 {
        return Err(Error::InvalidInput(format!(
            "degenerate ground-truth interval [{}, {}]",
            gt.start, gt.end
        )));
    }
    if pred.is_degenerate() {
        return Ok(0.0);
    }
    let inter = (pred.end.min(gt.end) - pred.start.max(gt.start)).max(0.0);
    if inter <= 0.0 {
        return Ok(0.0);
    }
    let union = pred.length() + gt.length() - inter;
    Ok(inter / union)
}

/// 2D IoU of a predicted box against the ground truth.
///
/// Returns 0 for degenerate or disjoint predictions. A degenerate ground
/// truth is an input error.
pub fn box_iou(pred: &BoundingBox, gt: &BoundingBox) -> Result<f64> {
    if gt.is_degenerate() {
        return Err(Error::InvalidInput(format!(
            "degenerate ground-truth box ({}, {}, {}, {})",
            gt.x_min, gt.y_min, gt.x_max, gt.y_max
        )));
    }
    if pred.is_degenerate() {
        return Ok(0.0);
    }
    let ix = (pred.x_max.min(gt.x_max) - pred.x_min.max(gt.x_min)).max(0.0);
    let iy = (pred.y_max.min(gt.y_max) - pred.y_min.max(gt.y_min)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return Ok(0.0);
    }
    let union = pred.area() + gt.area() - inter;
    Ok(inter / union)
}

/// Canonical answer normalization: trim, collapse internal whitespace,
/// case-fold. Applied to both sides before exact-match comparison so scoring
/// is deterministic.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Binary exact-match indicator over normalized answers.
pub fn exact_match(pred: &str, gt: &str) -> f64 {
    if normalize_answer(pred) == normalize_answer(gt) {
        1.0
    } else {
        0.0
    }
}

const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

/// Binary format-compliance reward: 1 iff the raw output contains exactly one
/// well-formed `<answer>...</answer>` pair enclosing a non-empty payload.
pub fn format_reward(raw_output: &str) -> f64 {
    let opens: Vec<usize> = raw_output
        .match_indices(ANSWER_OPEN)
        .map(|(i, _)| i)
        .collect();
    let closes: Vec<usize> = raw_output
        .match_indices(ANSWER_CLOSE)
        .map(|(i, _)| i)
        .collect();
    if opens.len() != 1 || closes.len() != 1 {
        return 0.0;
    }
    let (open, close) = (opens[0], closes[0]);
    if close < open + ANSWER_OPEN.len() {
        return 0.0;
    }
    let payload = &raw_output[open + ANSWER_OPEN.len()..close];
    if payload.trim().is_empty() {
        0.0
    } else {
        1.0
    }
}

/// Extract the payload of a well-formed answer, if any.
pub fn extract_answer(raw_output: &str) -> Option<&str> {
    if format_reward(raw_output) == 0.0 {
        return None;
    }
    let open = raw_output.find(ANSWER_OPEN)? + ANSWER_OPEN.len();
    let close = raw_output.find(ANSWER_CLOSE)?;
    Some(&raw_output[open..close])
}

/// Weighted total reward: `w.accuracy * r_acc + w.format * r_fmt`.
pub fn combined_reward(
    r_acc: f64,
    r_fmt: bool,
    weights: &RewardWeights,
) -> Result<RewardBreakdown> {
    if !(0.0..=1.0).contains(&r_acc) {
        return Err(Error::InvalidInput(format!(
            "accuracy reward {r_acc} outside [0, 1]"
        )));
    }
    let fmt = if r_fmt { 1.0 } else { 0.0 };
    Ok(RewardBreakdown {
        accuracy: r_acc,
        format: fmt,
        total: weights.accuracy * r_acc + weights.format * fmt,
    })
}
