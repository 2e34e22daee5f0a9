//! Evaluation harness: per-class precision/recall/F1 from a multi-class
//! confusion matrix, plus per-task-kind mean total reward.
//!
//! F1 is one-vs-rest from a single confusion matrix, with the 0/0 -> 0
//! convention for undefined precision, recall, or F1.
//!
//! ```
//! use grpo_lab::eval::{confusion, per_class_f1};
//!
//! let preds = ["a", "b", "b"].map(String::from);
//! let gts = ["a", "b", "a"].map(String::from);
//! let classes = ["a", "b"].map(String::from);
//! let cm = confusion(&preds, &gts, &classes).unwrap();
//! let metrics = per_class_f1(&cm);
//! assert_eq!(metrics[0].recall, 0.5); // one of the two "a" samples found
//! ```

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{score_candidate, Payload, TaskKind};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::reward::RewardWeights;
use crate::seed::derive_seed;
use crate::tasks::TaskSample;

/// Multi-class confusion matrix: `counts[t][p]` is the number of samples
/// with true class `t` predicted as class `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts
            .iter()
            .map(|row| row.iter().sum::<usize>())
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_class");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(c);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Count predictions into a confusion matrix. Every label must belong to the
/// class set and the two lists must have equal length.
pub fn confusion(preds: &[String], gts: &[String], classes: &[String]) -> Result<ConfusionMatrix> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidInput(format!(
            "prediction and truth lengths differ: {} vs {}",
            preds.len(),
            gts.len()
        )));
    }
    let index = |label: &String| -> Result<usize> {
        classes.iter().position(|c| c == label).ok_or_else(|| {
            Error::InvalidInput(format!("label {label:?} not in class set {classes:?}"))
        })
    };
    let mut counts = vec![vec![0usize; classes.len()]; classes.len()];
    for (p, t) in preds.iter().zip(gts) {
        counts[index(t)?][index(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
    })
}

/// Per-class precision, recall, and F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of samples whose true class this is.
    pub support: usize,
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// One-vs-rest precision/recall/F1 per class; any 0/0 scores 0.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let n = cm.classes.len();
    (0..n)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let fp: f64 = (0..n)
                .filter(|&t| t != c)
                .map(|t| cm.counts[t][c] as f64)
                .sum();
            let fne: f64 = (0..n)
                .filter(|&p| p != c)
                .map(|p| cm.counts[c][p] as f64)
                .sum();
            let precision = safe_div(tp, tp + fp);
            let recall = safe_div(tp, tp + fne);
            let f1 = safe_div(2.0 * precision * recall, precision + recall);
            ClassMetrics {
                class: cm.classes[c].clone(),
                precision,
                recall,
                f1,
                support: cm.counts[c].iter().sum(),
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1 scores.
pub fn macro_f1(metrics: &[ClassMetrics]) -> f64 {
    if metrics.is_empty() {
        return 0.0;
    }
    metrics.iter().map(|m| m.f1).sum::<f64>() / metrics.len() as f64
}

/// How to turn the categorical distribution into a single prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Decode {
    /// Greedy: highest-probability candidate, lowest index on ties.
    #[default]
    Argmax,
    /// One seeded draw from the distribution.
    Sample,
}

/// Aggregated evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub decode: Decode,
    pub mean_reward_by_kind: BTreeMap<String, f64>,
    pub sample_count_by_kind: BTreeMap<String, usize>,
    /// Per-class metrics for activity samples; empty when none were evaluated.
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub confusion: Option<ConfusionMatrix>,
}

impl MetricsReport {
    /// Human-readable summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::from("task        n      mean_reward\n");
        for (kind, reward) in &self.mean_reward_by_kind {
            let n = self.sample_count_by_kind.get(kind).copied().unwrap_or(0);
            out.push_str(&format!("{kind:<10}  {n:<5}  {reward:.4}\n"));
        }
        if !self.per_class.is_empty() {
            out.push_str("\nclass                precision  recall  f1      support\n");
            for m in &self.per_class {
                out.push_str(&format!(
                    "{:<20} {:<10.4} {:<7.4} {:<7.4} {}\n",
                    m.class, m.precision, m.recall, m.f1, m.support
                ));
            }
            out.push_str(&format!("macro F1: {:.4}\n", self.macro_f1));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn answer_value(payload: &Payload) -> Option<&str> {
    match payload {
        Payload::Answer { value } => Some(value),
        _ => None,
    }
}

/// Mean total reward under the policy's full distribution: `sum_i p_i r_i`.
/// Smooth in the parameters, so handy for learning curves.
pub fn expected_reward(
    policy: &Policy,
    sample: &TaskSample,
    weights: &RewardWeights,
) -> Result<f64> {
    let cands = sample.candidate_list()?;
    let lps = policy.log_probs(sample.kind, &sample.features)?;
    if lps.len() != cands.len() {
        return Err(Error::InvalidInput(format!(
            "policy head K = {} does not match candidate count {} for {}",
            lps.len(),
            cands.len(),
            sample.id
        )));
    }
    let mut total = 0.0;
    for (lp, cand) in lps.iter().zip(cands) {
        total += lp.exp() * score_candidate(cand, &sample.truth, weights)?.total;
    }
    Ok(total)
}

/// Score every sample under the policy, aggregate mean total reward per task
/// kind, and build the activity confusion matrix and per-class F1.
///
/// Activity classes are taken from the candidate list of the first activity
/// sample, in candidate order.
pub fn evaluate_policy(
    policy: &Policy,
    samples: &[TaskSample],
    decode: Decode,
    seed: u64,
    weights: &RewardWeights,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty evaluation set".into()));
    }
    let mut reward_sum: BTreeMap<String, f64> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut activity_preds: Vec<String> = Vec::new();
    let mut activity_truths: Vec<String> = Vec::new();
    let mut classes: Vec<String> = Vec::new();

    for sample in samples {
        let cands = sample.candidate_list()?;
        let idx = match decode {
            Decode::Argmax => argmax(&policy.log_probs(sample.kind, &sample.features)?),
            Decode::Sample => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("eval/{}", sample.id)));
                policy.sample_group(sample.kind, &sample.features, 1, &mut rng)?[0]
            }
        };
        let cand = cands.get(idx).ok_or_else(|| {
            Error::InvalidInput(format!(
                "decoded index {idx} beyond candidate set of {}",
                sample.id
            ))
        })?;
        let score = score_candidate(cand, &sample.truth, weights)?;
        *reward_sum
            .entry(sample.kind.as_str().to_string())
            .or_default() += score.total;
        *counts.entry(sample.kind.as_str().to_string()).or_default() += 1;

        if sample.kind == TaskKind::Activity {
            if classes.is_empty() {
                for c in cands {
                    if let Some(v) = answer_value(&c.payload) {
                        if !classes.iter().any(|x| x == v) {
                            classes.push(v.to_string());
                        }
                    }
                }
            }
            let pred = answer_value(&cand.payload).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "activity candidate of {} is not a label",
                    sample.id
                ))
            })?;
            let truth = match &sample.truth {
                crate::candidates::GroundTruth::Answer { value } => value.clone(),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "activity sample {} has non-label ground truth",
                        sample.id
                    )))
                }
            };
            activity_preds.push(pred.to_string());
            activity_truths.push(truth);
        }
    }

    let mean_reward_by_kind: BTreeMap<String, f64> = reward_sum
        .iter()
        .map(|(k, s)| (k.clone(), s / counts[k] as f64))
        .collect();

    let (per_class, f1, cm) = if activity_preds.is_empty() {
        (Vec::new(), 0.0, None)
    } else {
        let cm = confusion(&activity_preds, &activity_truths, &classes)?;
        let per_class = per_class_f1(&cm);
        let f1 = macro_f1(&per_class);
        (per_class, f1, Some(cm))
    };

    Ok(MetricsReport {
        decode,
        mean_reward_by_kind,
        sample_count_by_kind: counts,
        per_class,
        macro_f1: f1,
        confusion: cm,
    })
}
