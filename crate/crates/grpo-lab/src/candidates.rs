//! Enumerated candidate outputs.
//!
//! The policy is a categorical distribution over a fixed, ordered candidate
//! set per task kind: discretized time intervals, a position grid of boxes,
//! or enumerated answer strings. Each candidate carries a `well_formed` flag
//! that deterministically fixes its format reward, standing in for whether
//! the raw output wrapped its answer in the required delimiters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{
    box_iou, combined_reward, exact_match, temporal_iou, BoundingBox, RewardBreakdown,
    RewardWeights, TimeInterval,
};

/// The four toy task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Temporal,
    Box,
    Match,
    Activity,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Temporal => "temporal",
            TaskKind::Box => "box",
            TaskKind::Match => "match",
            TaskKind::Activity => "activity",
        }
    }
}

/// Structured payload of one candidate output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Interval(TimeInterval),
    Box(BoundingBox),
    /// Final answer string; also used for activity class labels.
    Answer {
        value: String,
    },
}

/// One enumerable output the policy can emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub payload: Payload,
    pub well_formed: bool,
}

/// Ground truth for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GroundTruth {
    Interval(TimeInterval),
    Box(BoundingBox),
    Answer { value: String },
}

/// How a sample's candidate set is defined: a shared parametric grid or an
/// inline list. Grid specs keep dataset files small and carry their own
/// version via the grid parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "spec", rename_all = "snake_case")]
pub enum CandidateSpec {
    /// All (start, end) bin pairs with end > start on a uniform time axis,
    /// each in a well-formed and a malformed variant.
    TemporalGrid { bins: usize, horizon: f64 },
    /// A `grid x grid` layout of fixed-size boxes plus one degenerate
    /// (malformed) candidate.
    BoxGrid { grid: usize, size: f64 },
    /// Explicit candidate list (match and activity tasks).
    Inline { candidates: Vec<Candidate> },
}

impl CandidateSpec {
    /// Build the ordered candidate list. Ordering is stable: it defines the
    /// index space the policy head is trained over.
    pub fn materialize(&self) -> Result<Vec<Candidate>> {
        match self {
            CandidateSpec::TemporalGrid { bins, horizon } => {
                if *bins < 2 || *horizon <= 0.0 {
                    return Err(Error::Config(format!(
                        "temporal grid needs bins >= 2 and horizon > 0, got {bins}, {horizon}"
                    )));
                }
                // `bins` grid points on [0, horizon]; intervals are all
                // ordered point pairs, so bins = 10 gives 45 of them.
                let step = horizon / (*bins as f64 - 1.0);
                let mut out = Vec::with_capacity(bins * (bins - 1));
                for s in 0..(*bins - 1) {
                    for e in (s + 1)..*bins {
                        let iv = TimeInterval::new(s as f64 * step, e as f64 * step);
                        out.push(Candidate {
                            payload: Payload::Interval(iv),
                            well_formed: true,
                        });
                        out.push(Candidate {
                            payload: Payload::Interval(iv),
                            well_formed: false,
                        });
                    }
                }
                Ok(out)
            }
            CandidateSpec::BoxGrid { grid, size } => {
                if *grid < 2 || !(0.0..1.0).contains(size) || *size <= 0.0 {
                    return Err(Error::Config(format!(
                        "box grid needs grid >= 2 and size in (0, 1), got {grid}, {size}"
                    )));
                }
                let pitch = (1.0 - size) / (*grid as f64 - 1.0);
                let mut out = Vec::with_capacity(grid * grid + 1);
                for gy in 0..*grid {
                    for gx in 0..*grid {
                        let x = gx as f64 * pitch;
                        let y = gy as f64 * pitch;
                        out.push(Candidate {
                            payload: Payload::Box(BoundingBox::new(x, y, x + size, y + size)),
                            well_formed: true,
                        });
                    }
                }
                // Degenerate escape hatch the policy can emit; never correct.
                out.push(Candidate {
                    payload: Payload::Box(BoundingBox::new(0.0, 0.0, 0.0, 0.0)),
                    well_formed: false,
                });
                Ok(out)
            }
            CandidateSpec::Inline { candidates } => {
                if candidates.is_empty() {
                    return Err(Error::Config("inline candidate set is empty".into()));
                }
                Ok(candidates.clone())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            CandidateSpec::TemporalGrid { bins, .. } => bins * (bins - 1),
            CandidateSpec::BoxGrid { grid, .. } => grid * grid + 1,
            CandidateSpec::Inline { candidates } => candidates.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Accuracy reward of a candidate against the ground truth, dispatched on
/// the payload/truth pairing.
pub fn accuracy_reward(candidate: &Candidate, truth: &GroundTruth) -> Result<f64> {
    match (&candidate.payload, truth) {
        (Payload::Interval(pred), GroundTruth::Interval(gt)) => temporal_iou(pred, gt),
        (Payload::Box(pred), GroundTruth::Box(gt)) => box_iou(pred, gt),
        (Payload::Answer { value: pred }, GroundTruth::Answer { value: gt }) => {
            Ok(exact_match(pred, gt))
        }
        _ => Err(Error::InvalidInput(
            "candidate payload does not match ground-truth type".into(),
        )),
    }
}

/// Full reward breakdown for a candidate: accuracy from the payload, format
/// from the `well_formed` flag, combined with `weights`.
pub fn score_candidate(
    candidate: &Candidate,
    truth: &GroundTruth,
    weights: &RewardWeights,
) -> Result<RewardBreakdown> {
    let acc = accuracy_reward(candidate, truth)?;
    combined_reward(acc, candidate.well_formed, weights)
}
