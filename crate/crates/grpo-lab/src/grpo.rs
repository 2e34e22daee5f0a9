//! Group-relative policy optimization.
//!
//! Per iteration: snapshot the old policy, sample a group of G candidate
//! outputs per query, score them with the reward kernels, standardize the
//! rewards within each group (mean 0, population std 1), and take one
//! gradient-ascent step on the clipped surrogate objective with an exact KL
//! penalty against the frozen reference policy.
//!
//! ```
//! use grpo_lab::grpo::normalize_advantages;
//!
//! let adv = normalize_advantages(&[1.0, 0.0, 1.0, 0.0]);
//! assert_eq!(adv, vec![1.0, -1.0, 1.0, -1.0]);
//! assert_eq!(normalize_advantages(&[0.3; 4]), vec![0.0; 4]);
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{score_candidate, TaskKind};
use crate::error::{Error, Result};
use crate::pipeline::atomic_write;
use crate::policy::{HeadGrad, Policy, PolicyVersion};
use crate::reward::RewardWeights;
use crate::seed::{derive_seed, derive_seed_indexed};
use crate::tasks::TaskSample;

/// Gradient-ascent rule for the update step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient ascent with a fixed learning rate.
    #[default]
    Sgd,
    /// Adam-style adaptive moments (beta1 0.9, beta2 0.999, eps 1e-8).
    Adam,
}

/// Hyperparameters of the GRPO loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_coef: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_coef: 0.04,
            learning_rate: 0.5,
            iterations: 200,
            batch_size: 16,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::Config("group_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.clip_epsilon) || self.clip_epsilon == 0.0 {
            return Err(Error::Config(format!(
                "clip_epsilon must lie in (0, 1), got {}",
                self.clip_epsilon
            )));
        }
        if self.kl_coef < 0.0 {
            return Err(Error::Config("kl_coef must be non-negative".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::Config(
                "batch_size and iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Standardize rewards within one group: `(r_i - mean) / std` with the
/// population standard deviation. All-equal groups yield all-zero advantages.
pub fn normalize_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    // An all-equal group carries no learning signal. Short-circuit before
    // the mean is computed: rounding in the mean of identical values can
    // otherwise manufacture a tiny nonzero std and saturated advantages.
    if rewards.iter().all(|r| *r == rewards[0]) {
        return vec![0.0; rewards.len()];
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// `min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// One query's frozen rollout group: sampled indices, old-policy log-probs,
/// raw rewards, and standardized advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGroup {
    pub sample_id: String,
    pub kind: TaskKind,
    pub features: Vec<f64>,
    pub indices: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl SampleGroup {
    /// Roll out `g` samples for one query under `old_policy` and score them.
    pub fn rollout<R: Rng>(
        sample: &TaskSample,
        old_policy: &Policy,
        g: usize,
        weights: &RewardWeights,
        rng: &mut R,
    ) -> Result<SampleGroup> {
        let cands = sample.candidate_list()?;
        let indices = old_policy.sample_group(sample.kind, &sample.features, g, rng)?;
        let log_probs = old_policy.log_probs(sample.kind, &sample.features)?;
        let mut old_log_probs = Vec::with_capacity(g);
        let mut rewards = Vec::with_capacity(g);
        for &idx in &indices {
            old_log_probs.push(log_probs[idx]);
            let cand = cands.get(idx).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "sampled index {idx} beyond candidate set of {}",
                    sample.id
                ))
            })?;
            rewards.push(score_candidate(cand, &sample.truth, weights)?.total);
        }
        let advantages = normalize_advantages(&rewards);
        Ok(SampleGroup {
            sample_id: sample.id.clone(),
            kind: sample.kind,
            features: sample.features.clone(),
            indices,
            old_log_probs,
            rewards,
            advantages,
        })
    }
}

/// Full-policy gradient, one [`HeadGrad`] per task kind.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrad {
    pub heads: BTreeMap<TaskKind, HeadGrad>,
}

impl PolicyGrad {
    pub fn zeros_like(policy: &Policy) -> Self {
        Self {
            heads: policy
                .heads
                .iter()
                .map(|(kind, head)| (*kind, HeadGrad::zeros(head.shape())))
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.heads.values_mut() {
            g.scale(s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.heads
            .values()
            .map(HeadGrad::squared_norm)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.heads.values().all(HeadGrad::is_finite)
    }
}

/// Value, gradient, and diagnostics of the surrogate objective on one batch.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad: PolicyGrad,
    pub mean_kl: f64,
    /// Fraction of rollouts whose importance ratio fell outside the clip band.
    pub clip_fraction: f64,
}

/// Evaluate the clipped surrogate objective with KL penalty on a batch of
/// frozen groups, returning its value and analytic gradient.
///
/// The min is differentiated through the active branch: where the clipped
/// branch is selected (and is constant in the parameters) its contribution
/// is zero. The KL term is applied once per group context.
pub fn evaluate_objective(
    policy: &Policy,
    ref_policy: &Policy,
    groups: &[SampleGroup],
    eps: f64,
    beta: f64,
) -> Result<ObjectiveEval> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("empty batch of groups".into()));
    }
    let mut value = 0.0;
    let mut grad = PolicyGrad::zeros_like(policy);
    let mut kl_sum = 0.0;
    let mut clipped_count = 0usize;
    let mut rollout_count = 0usize;

    for group in groups {
        let head = policy.head(group.kind)?;
        let log_probs = head.log_probs(&group.features)?;
        let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
        let k = probs.len();
        let g = group.indices.len() as f64;

        // Per-logit gradient accumulator for this group's context.
        let mut d_logits = vec![0.0; k];
        let mut group_value = 0.0;

        for ((&idx, &old_lp), &adv) in group
            .indices
            .iter()
            .zip(&group.old_log_probs)
            .zip(&group.advantages)
        {
            let new_lp = *log_probs.get(idx).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "rollout index {idx} out of range for K = {k} (group {})",
                    group.sample_id
                ))
            })?;
            let ratio = (new_lp - old_lp).exp();
            rollout_count += 1;
            if ratio < 1.0 - eps || ratio > 1.0 + eps {
                clipped_count += 1;
            }
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
            group_value += unclipped.min(clipped);
            if unclipped <= clipped {
                // d(ratio * A)/d logit_j = ratio * A * (onehot_j(idx) - p_j)
                let coeff = unclipped / g;
                for (j, p) in probs.iter().enumerate() {
                    d_logits[j] += coeff * (if j == idx { 1.0 - p } else { -p });
                }
            }
        }
        value += group_value / g;

        if beta != 0.0 {
            let ref_lp = ref_policy.log_probs(group.kind, &group.features)?;
            if ref_lp.len() != k {
                return Err(Error::InvalidInput(format!(
                    "candidate counts differ between policy and reference: {k} vs {}",
                    ref_lp.len()
                )));
            }
            let kl: f64 = log_probs
                .iter()
                .zip(&ref_lp)
                .map(|(lp, lq)| lp.exp() * (lp - lq))
                .sum();
            kl_sum += kl;
            value -= beta * kl;
            for (j, (lp, lq)) in log_probs.iter().zip(&ref_lp).enumerate() {
                d_logits[j] -= beta * lp.exp() * ((lp - lq) - kl);
            }
        } else {
            // Still report KL for the log; it does not affect the objective.
            kl_sum += policy.kl_divergence(ref_policy, group.kind, &group.features)?;
        }

        let head_grad = grad
            .heads
            .get_mut(&group.kind)
            .expect("grad initialized from policy heads");
        for (j, dz) in d_logits.iter().enumerate() {
            head_grad.d_bias[j] += dz;
            for (col, f) in group.features.iter().enumerate() {
                head_grad.d_weights[j * head.dim + col] += dz * f;
            }
        }
    }

    let scale = 1.0 / groups.len() as f64;
    value *= scale;
    grad.scale(scale);
    Ok(ObjectiveEval {
        value,
        grad,
        mean_kl: kl_sum * scale,
        clip_fraction: clipped_count as f64 / rollout_count as f64,
    })
}

/// Objective value and gradient only (see [`evaluate_objective`]).
pub fn grpo_objective(
    policy: &Policy,
    ref_policy: &Policy,
    groups: &[SampleGroup],
    eps: f64,
    beta: f64,
) -> Result<(f64, PolicyGrad)> {
    let eval = evaluate_objective(policy, ref_policy, groups, eps, beta)?;
    Ok((eval.value, eval.grad))
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub mean_reward: f64,
    pub objective: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Append-only per-iteration training log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<IterRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("iteration,mean_reward,objective,mean_kl,clip_fraction,grad_norm\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.mean_reward, r.objective, r.mean_kl, r.clip_fraction, r.grad_norm
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv().as_bytes())
    }
}

struct AdamState {
    m: PolicyGrad,
    v: PolicyGrad,
    t: usize,
}

/// Stateful GRPO training loop. `step` runs one iteration so callers can
/// interleave evaluation with training; `run` drives it to completion.
pub struct GrpoTrainer {
    config: GrpoConfig,
    weights: RewardWeights,
    dataset: Vec<TaskSample>,
    policy: Policy,
    ref_policy: Policy,
    batch_rng: ChaCha8Rng,
    log: TrainLog,
    iteration: usize,
    adam: Option<AdamState>,
}

impl GrpoTrainer {
    /// The reference policy is frozen to a snapshot of `init` (the SFT
    /// checkpoint in the two-stage pipeline).
    pub fn new(
        config: GrpoConfig,
        weights: RewardWeights,
        dataset: Vec<TaskSample>,
        init: Policy,
    ) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        if dataset.is_empty() {
            return Err(Error::InvalidInput("empty training dataset".into()));
        }
        for sample in &dataset {
            let head = init.head(sample.kind)?;
            if head.k != sample.candidate_count() || head.dim != sample.features.len() {
                return Err(Error::InvalidInput(format!(
                    "sample {} has K = {}, d = {} but the {} head expects K = {}, d = {}",
                    sample.id,
                    sample.candidate_count(),
                    sample.features.len(),
                    sample.kind.as_str(),
                    head.k,
                    head.dim
                )));
            }
        }
        let adam = match config.optimizer {
            Optimizer::Sgd => None,
            Optimizer::Adam => Some(AdamState {
                m: PolicyGrad::zeros_like(&init),
                v: PolicyGrad::zeros_like(&init),
                t: 0,
            }),
        };
        let batch_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "grpo/batch"));
        let ref_policy = init.snapshot(PolicyVersion::Reference);
        Ok(Self {
            config,
            weights,
            dataset,
            policy: init,
            ref_policy,
            batch_rng,
            log: TrainLog::default(),
            iteration: 0,
            adam,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    /// Run one iteration: rollout a batch under the old-policy snapshot,
    /// score, normalize, and take one ascent step.
    pub fn step(&mut self) -> Result<&IterRecord> {
        let old = self.policy.snapshot(PolicyVersion::OldSnapshot);
        let mut groups = Vec::with_capacity(self.config.batch_size);
        let mut reward_sum = 0.0;
        let mut reward_count = 0usize;
        for _ in 0..self.config.batch_size {
            let pick = self.batch_rng.gen_range(0..self.dataset.len());
            let sample = &self.dataset[pick];
            let mut rollout_rng = ChaCha8Rng::seed_from_u64(derive_seed_indexed(
                self.config.seed,
                &format!("grpo/rollout/{}", sample.id),
                self.iteration as u64,
            ));
            let group = SampleGroup::rollout(
                sample,
                &old,
                self.config.group_size,
                &self.weights,
                &mut rollout_rng,
            )?;
            reward_sum += group.rewards.iter().sum::<f64>();
            reward_count += group.rewards.len();
            groups.push(group);
        }

        let eval = evaluate_objective(
            &self.policy,
            &self.ref_policy,
            &groups,
            self.config.clip_epsilon,
            self.config.kl_coef,
        )?;
        if !eval.value.is_finite() || !eval.grad.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective or gradient non-finite at iteration {}",
                self.iteration
            )));
        }

        let grad_norm = eval.grad.norm();
        self.ascend(&eval.grad);

        self.log.records.push(IterRecord {
            iteration: self.iteration,
            mean_reward: reward_sum / reward_count as f64,
            objective: eval.value,
            mean_kl: eval.mean_kl,
            clip_fraction: eval.clip_fraction,
            grad_norm,
        });
        self.iteration += 1;
        Ok(self.log.records.last().expect("record just pushed"))
    }

    fn ascend(&mut self, grad: &PolicyGrad) {
        let lr = self.config.learning_rate;
        match &mut self.adam {
            None => {
                for (kind, head_grad) in &grad.heads {
                    let head = self.policy.heads.get_mut(kind).expect("head exists");
                    for (w, g) in head.weights.iter_mut().zip(&head_grad.d_weights) {
                        *w += lr * g;
                    }
                    for (b, g) in head.bias.iter_mut().zip(&head_grad.d_bias) {
                        *b += lr * g;
                    }
                }
            }
            Some(state) => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                state.t += 1;
                let c1 = 1.0 - B1.powi(state.t as i32);
                let c2 = 1.0 - B2.powi(state.t as i32);
                for (kind, head_grad) in &grad.heads {
                    let m = state.m.heads.get_mut(kind).expect("head exists");
                    let v = state.v.heads.get_mut(kind).expect("head exists");
                    let head = self.policy.heads.get_mut(kind).expect("head exists");
                    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                        *m = B1 * *m + (1.0 - B1) * g;
                        *v = B2 * *v + (1.0 - B2) * g * g;
                        *p += lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                    };
                    for ((p, m), (v, g)) in head
                        .weights
                        .iter_mut()
                        .zip(&mut m.d_weights)
                        .zip(v.d_weights.iter_mut().zip(&head_grad.d_weights))
                    {
                        update(p, m, v, *g);
                    }
                    for ((p, m), (v, g)) in head
                        .bias
                        .iter_mut()
                        .zip(&mut m.d_bias)
                        .zip(v.d_bias.iter_mut().zip(&head_grad.d_bias))
                    {
                        update(p, m, v, *g);
                    }
                }
            }
        }
    }

    /// Run all configured iterations and return the trained policy and log.
    pub fn run(mut self) -> Result<(Policy, TrainLog)> {
        for _ in self.iteration..self.config.iterations {
            self.step()?;
        }
        Ok((self.policy, self.log))
    }
}

/// Train a policy with GRPO from `init` on `dataset`.
pub fn train_grpo(
    config: &GrpoConfig,
    weights: &RewardWeights,
    dataset: &[TaskSample],
    init: Policy,
) -> Result<(Policy, TrainLog)> {
    GrpoTrainer::new(config.clone(), *weights, dataset.to_vec(), init)?.run()
}
