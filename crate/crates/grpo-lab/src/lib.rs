//! Desk-scale group-relative policy optimization (GRPO) lab.
//!
//! This crate implements the complete two-stage SFT → RL training loop at a
//! scale where every quantity is checkable: a linear-softmax policy over an
//! enumerated candidate set, deterministic multi-task reward kernels
//! (temporal IoU, box IoU, exact match, format compliance), group-normalized
//! advantages, the clipped surrogate objective with an exact KL penalty,
//! difficulty-aware data filtering, and a per-category F1 evaluation harness.
//!
//! The design trade is deliberate: instead of an autoregressive model whose
//! probabilities are opaque, the policy is a categorical distribution over a
//! small candidate grid. Log-probabilities, gradients, and KL divergences are
//! all available in closed form, so every training-loop quantity can be
//! verified against finite differences or an independent oracle.
//!
//! A quick tour:
//!
//! ```
//! use grpo_lab::reward::{temporal_iou, TimeInterval};
//!
//! let pred = TimeInterval::new(0.0, 10.0);
//! let gt = TimeInterval::new(5.0, 15.0);
//! let iou = temporal_iou(&pred, &gt).unwrap();
//! assert!((iou - 1.0 / 3.0).abs() < 1e-12);
//! ```
//!
//! See the `book/` guide for a narrative walk-through of each stage.

pub mod candidates;
pub mod config;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod grpo;
pub mod pipeline;
pub mod policy;
pub mod reward;
pub mod seed;
pub mod sft;
pub mod tasks;

pub use error::{Error, Result};
