//! Supervised fine-tuning stage.
//!
//! Cross-entropy training on demonstrations. The resulting checkpoint is
//! both the initialization and the KL reference for the GRPO stage.
//!
//! ```
//! use grpo_lab::candidates::TaskKind;
//! use grpo_lab::policy::{HeadShape, Policy};
//! use grpo_lab::reward::RewardWeights;
//! use grpo_lab::sft::{oracle_demos, sft_train, SftConfig};
//! use grpo_lab::tasks::gen_match;
//!
//! let samples = gen_match(50, 1, 4, 0.0).unwrap();
//! let demos = oracle_demos(&samples, &RewardWeights::default()).unwrap();
//! let init = Policy::uniform(&[(TaskKind::Match, HeadShape { k: 4, dim: 5 })]);
//! let (policy, losses) = sft_train(&SftConfig::default(), &demos, init).unwrap();
//! assert!(losses.last().unwrap() < losses.first().unwrap());
//! # let _ = policy;
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{score_candidate, TaskKind};
use crate::error::{Error, Result};
use crate::grpo::PolicyGrad;
use crate::policy::Policy;
use crate::reward::RewardWeights;
use crate::seed::derive_seed;
use crate::tasks::TaskSample;

/// One supervised example: a query context and the index of a well-formed,
/// correct candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub kind: TaskKind,
    pub features: Vec<f64>,
    pub target: usize,
}

/// SFT hyperparameters. Desk-scale defaults; plain gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.batch_size == 0 {
            return Err(Error::Config(
                "sft learning_rate must be positive and batch_size >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Mean negative log-probability of the targets, with its gradient (in loss
/// direction: descend with `theta -= lr * grad`).
pub fn sft_loss(policy: &Policy, batch: &[Demonstration]) -> Result<(f64, PolicyGrad)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty demonstration batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = PolicyGrad::zeros_like(policy);
    for demo in batch {
        loss -= policy.log_prob(demo.kind, &demo.features, demo.target)? * scale;
        let glp = policy.grad_log_prob(demo.kind, &demo.features, demo.target)?;
        grad.heads
            .get_mut(&demo.kind)
            .expect("grad initialized from policy heads")
            .axpy(-scale, &glp);
    }
    Ok((loss, grad))
}

/// Minibatch gradient descent on [`sft_loss`]. Returns the trained policy and
/// the full-dataset loss recorded after every epoch.
pub fn sft_train(
    config: &SftConfig,
    demos: &[Demonstration],
    init: Policy,
) -> Result<(Policy, Vec<f64>)> {
    config.validate()?;
    if demos.is_empty() {
        return Err(Error::InvalidInput("empty demonstration set".into()));
    }
    for demo in demos {
        let head = init.head(demo.kind)?;
        if demo.target >= head.k || demo.features.len() != head.dim {
            return Err(Error::InvalidInput(format!(
                "demonstration (kind {}, target {}) inconsistent with head K = {}, d = {}",
                demo.kind.as_str(),
                demo.target,
                head.k,
                head.dim
            )));
        }
    }
    let mut policy = init;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "sft/shuffle"));
    let mut order: Vec<usize> = (0..demos.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Demonstration> = chunk.iter().map(|&i| demos[i].clone()).collect();
            let (loss, grad) = sft_loss(&policy, &batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "sft loss or gradient non-finite at epoch {epoch}"
                )));
            }
            for (kind, head_grad) in &grad.heads {
                let head = policy.heads.get_mut(kind).expect("head exists");
                for (w, g) in head.weights.iter_mut().zip(&head_grad.d_weights) {
                    *w -= config.learning_rate * g;
                }
                for (b, g) in head.bias.iter_mut().zip(&head_grad.d_bias) {
                    *b -= config.learning_rate * g;
                }
            }
        }
        losses.push(sft_loss(&policy, demos)?.0);
    }
    Ok((policy, losses))
}

/// Build demonstrations from samples by picking the highest-total-reward
/// candidate (first on ties). With default weights the format bonus breaks
/// ties toward well-formed candidates.
pub fn oracle_demos(samples: &[TaskSample], weights: &RewardWeights) -> Result<Vec<Demonstration>> {
    let mut out = Vec::with_capacity(samples.len());
    for sample in samples {
        let cands = sample.candidate_list()?;
        let mut best = 0usize;
        let mut best_total = f64::NEG_INFINITY;
        for (i, cand) in cands.iter().enumerate() {
            let total = score_candidate(cand, &sample.truth, weights)?.total;
            if total > best_total {
                best_total = total;
                best = i;
            }
        }
        out.push(Demonstration {
            kind: sample.kind,
            features: sample.features.clone(),
            target: best,
        });
    }
    Ok(out)
}

/// Serialize an epoch loss log as CSV.
pub fn loss_log_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    out
}
