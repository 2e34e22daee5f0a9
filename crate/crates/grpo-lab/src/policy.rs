//! Linear-softmax policy over enumerated candidates.
//!
//! Each task kind owns one head: logits = `W . features + b` with `W` of
//! shape `K x d`. Probabilities, log-probability gradients, and the KL
//! divergence against a reference head are all available in closed form,
//! which is what makes the surrounding training loop checkable.
//!
//! ```
//! use grpo_lab::candidates::TaskKind;
//! use grpo_lab::policy::{HeadShape, Policy};
//!
//! let policy = Policy::uniform(&[(TaskKind::Match, HeadShape { k: 4, dim: 5 })]);
//! let lp = policy.log_prob(TaskKind::Match, &[0.0; 5], 0).unwrap();
//! assert!((lp - (0.25f64).ln()).abs() < 1e-12);
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::TaskKind;
use crate::error::{Error, Result};
use crate::pipeline::atomic_write;

/// Which stage of the loop a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVersion {
    Current,
    OldSnapshot,
    Reference,
}

/// Dimensions of one head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadShape {
    /// Number of candidates.
    pub k: usize,
    /// Feature dimension.
    pub dim: usize,
}

/// One linear-softmax head: `K x d` weights (row-major) and a `K` bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub k: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Head {
    pub fn zeros(shape: HeadShape) -> Self {
        Self {
            k: shape.k,
            dim: shape.dim,
            weights: vec![0.0; shape.k * shape.dim],
            bias: vec![0.0; shape.k],
        }
    }

    pub fn shape(&self) -> HeadShape {
        HeadShape {
            k: self.k,
            dim: self.dim,
        }
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "feature dimension {} does not match head dimension {}",
                features.len(),
                self.dim
            )));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let mut out = self.bias.clone();
        for (row, slot) in out.iter_mut().enumerate() {
            let w = &self.weights[row * self.dim..(row + 1) * self.dim];
            *slot += w.iter().zip(features).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(out)
    }

    /// Max-subtracted log-softmax of the logits.
    pub fn log_probs(&self, features: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(features)?;
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        for v in &mut z {
            *v -= log_sum;
        }
        Ok(z)
    }

    pub fn probs(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .log_probs(features)?
            .iter()
            .map(|lp| lp.exp())
            .collect())
    }
}

/// Gradient with respect to one head's parameters; same layout as [`Head`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
}

impl HeadGrad {
    pub fn zeros(shape: HeadShape) -> Self {
        Self {
            d_weights: vec![0.0; shape.k * shape.dim],
            d_bias: vec![0.0; shape.k],
        }
    }

    pub fn axpy(&mut self, scale: f64, other: &HeadGrad) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += scale * b;
        }
        for (a, b) in self.d_bias.iter_mut().zip(&other.d_bias) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.d_weights {
            *v *= s;
        }
        for v in &mut self.d_bias {
            *v *= s;
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.d_weights.iter().map(|v| v * v).sum::<f64>()
            + self.d_bias.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.d_weights.iter().all(|v| v.is_finite()) && self.d_bias.iter().all(|v| v.is_finite())
    }
}

const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// The full policy: one head per task kind plus a version tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub format_version: u32,
    pub version: PolicyVersion,
    pub heads: BTreeMap<TaskKind, Head>,
}

impl Policy {
    /// Zero-weight policy: uniform over every candidate set.
    pub fn uniform(shapes: &[(TaskKind, HeadShape)]) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            version: PolicyVersion::Current,
            heads: shapes
                .iter()
                .map(|(kind, shape)| (*kind, Head::zeros(*shape)))
                .collect(),
        }
    }

    pub fn head(&self, kind: TaskKind) -> Result<&Head> {
        self.heads.get(&kind).ok_or_else(|| {
            Error::InvalidInput(format!(
                "policy has no head for task kind {}",
                kind.as_str()
            ))
        })
    }

    pub fn head_mut(&mut self, kind: TaskKind) -> Result<&mut Head> {
        self.heads.get_mut(&kind).ok_or_else(|| {
            Error::InvalidInput(format!(
                "policy has no head for task kind {}",
                kind.as_str()
            ))
        })
    }

    pub fn log_probs(&self, kind: TaskKind, features: &[f64]) -> Result<Vec<f64>> {
        self.head(kind)?.log_probs(features)
    }

    /// Log-probability of candidate `idx` under this policy.
    pub fn log_prob(&self, kind: TaskKind, features: &[f64], idx: usize) -> Result<f64> {
        let lp = self.log_probs(kind, features)?;
        lp.get(idx).copied().ok_or_else(|| {
            Error::InvalidInput(format!(
                "candidate index {idx} out of range for K = {}",
                lp.len()
            ))
        })
    }

    /// Draw `g` independent candidate indices from the categorical
    /// distribution. Deterministic given the generator state.
    pub fn sample_group<R: Rng>(
        &self,
        kind: TaskKind,
        features: &[f64],
        g: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let probs = self.head(kind)?.probs(features)?;
        let mut out = Vec::with_capacity(g);
        for _ in 0..g {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            out.push(pick);
        }
        Ok(out)
    }

    /// Analytic gradient of `log pi(idx | features)` with respect to the
    /// head's parameters: `d/db = onehot(idx) - p`, `d/dW = (onehot - p) (x) features`.
    pub fn grad_log_prob(&self, kind: TaskKind, features: &[f64], idx: usize) -> Result<HeadGrad> {
        let head = self.head(kind)?;
        let probs = head.probs(features)?;
        if idx >= probs.len() {
            return Err(Error::InvalidInput(format!(
                "candidate index {idx} out of range for K = {}",
                probs.len()
            )));
        }
        let mut grad = HeadGrad::zeros(head.shape());
        for (row, p) in probs.iter().enumerate() {
            let coeff = if row == idx { 1.0 - p } else { -p };
            grad.d_bias[row] = coeff;
            for (col, f) in features.iter().enumerate() {
                grad.d_weights[row * head.dim + col] = coeff * f;
            }
        }
        Ok(grad)
    }

    /// Exact categorical KL divergence `KL(self || reference)` at one context.
    /// Softmax probabilities are strictly positive, so the sum is always
    /// well-defined.
    pub fn kl_divergence(
        &self,
        reference: &Policy,
        kind: TaskKind,
        features: &[f64],
    ) -> Result<f64> {
        let p = self.log_probs(kind, features)?;
        let q = reference.log_probs(kind, features)?;
        if p.len() != q.len() {
            return Err(Error::InvalidInput(format!(
                "candidate counts differ between policies: {} vs {}",
                p.len(),
                q.len()
            )));
        }
        Ok(p.iter().zip(&q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum())
    }

    /// Gradient of `KL(self || reference)` with respect to this policy's head.
    /// Per logit j the derivative is `p_j * ((log p_j - log q_j) - KL)`.
    pub fn kl_grad(
        &self,
        reference: &Policy,
        kind: TaskKind,
        features: &[f64],
    ) -> Result<HeadGrad> {
        let head = self.head(kind)?;
        let p = head.log_probs(features)?;
        let q = reference.log_probs(kind, features)?;
        if p.len() != q.len() {
            return Err(Error::InvalidInput(format!(
                "candidate counts differ between policies: {} vs {}",
                p.len(),
                q.len()
            )));
        }
        let kl: f64 = p.iter().zip(&q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum();
        let mut grad = HeadGrad::zeros(head.shape());
        for (row, (lp, lq)) in p.iter().zip(&q).enumerate() {
            let coeff = lp.exp() * ((lp - lq) - kl);
            grad.d_bias[row] = coeff;
            for (col, f) in features.iter().enumerate() {
                grad.d_weights[row * head.dim + col] = coeff * f;
            }
        }
        Ok(grad)
    }

    /// Deep copy with a new version tag.
    pub fn snapshot(&self, version: PolicyVersion) -> Policy {
        let mut copy = self.clone();
        copy.version = version;
        copy
    }

    /// Write a checkpoint as pretty JSON via an atomic temp-file rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        atomic_write(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Policy> {
        if !path.exists() {
            return Err(Error::MissingInput(format!(
                "checkpoint {} not found",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let policy: Policy = serde_json::from_str(&text)?;
        if policy.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported checkpoint format version {}",
                policy.format_version
            )));
        }
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, max_rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_head(k: usize, dim: usize) -> Policy {
        Policy::uniform(&[(TaskKind::Match, HeadShape { k, dim })])
    }

    fn randomized_head(k: usize, dim: usize, seed: u64) -> Policy {
        let mut policy = single_head(k, dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = policy.head_mut(TaskKind::Match).unwrap();
        for w in &mut head.weights {
            *w = rng.gen_range(-1.0..1.0);
        }
        for b in &mut head.bias {
            *b = rng.gen_range(-1.0..1.0);
        }
        policy
    }

    #[test]
    fn uniform_log_prob() {
        let policy = single_head(4, 3);
        let lp = policy
            .log_prob(TaskKind::Match, &[0.3, -1.0, 2.0], 2)
            .unwrap();
        assert!((lp - (0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn known_softmax_value() {
        // logits (1, 0, 0) via bias only
        let mut policy = single_head(3, 1);
        policy.head_mut(TaskKind::Match).unwrap().bias[0] = 1.0;
        let lp = policy.log_prob(TaskKind::Match, &[0.0], 0).unwrap();
        let expected = (1f64.exp() / (1f64.exp() + 2.0)).ln();
        assert!((lp - expected).abs() < 1e-12);
        assert!((lp + 0.551444).abs() < 1e-6);
    }

    #[test]
    fn probabilities_normalize() {
        let policy = randomized_head(7, 4, 3);
        let feats = [0.2, -0.4, 1.5, 0.9];
        let total: f64 = policy
            .log_probs(TaskKind::Match, &feats)
            .unwrap()
            .iter()
            .map(|lp| lp.exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_index_is_error() {
        let policy = single_head(4, 2);
        assert!(policy.log_prob(TaskKind::Match, &[0.0, 0.0], 4).is_err());
        assert!(policy
            .grad_log_prob(TaskKind::Match, &[0.0, 0.0], 9)
            .is_err());
    }

    #[test]
    fn feature_dim_mismatch_is_error() {
        let policy = single_head(4, 2);
        assert!(policy.log_prob(TaskKind::Match, &[0.0], 0).is_err());
    }

    #[test]
    fn sampling_deterministic_under_seed() {
        let policy = randomized_head(5, 3, 9);
        let feats = [0.5, -0.2, 1.0];
        let a = policy
            .sample_group(
                TaskKind::Match,
                &feats,
                8,
                &mut ChaCha8Rng::seed_from_u64(42),
            )
            .unwrap();
        let b = policy
            .sample_group(
                TaskKind::Match,
                &feats,
                8,
                &mut ChaCha8Rng::seed_from_u64(42),
            )
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn dominant_logit_always_sampled() {
        let mut policy = single_head(4, 1);
        policy.head_mut(TaskKind::Match).unwrap().bias[2] = 20.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = policy
            .sample_group(TaskKind::Match, &[0.0], 10_000, &mut rng)
            .unwrap();
        assert!(draws.iter().all(|&i| i == 2));
    }

    #[test]
    fn empirical_frequencies_match_probs() {
        let policy = randomized_head(4, 2, 17);
        let feats = [0.4, -0.7];
        let probs = policy.head(TaskKind::Match).unwrap().probs(&feats).unwrap();
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = policy
            .sample_group(TaskKind::Match, &feats, n, &mut rng)
            .unwrap();
        let mut counts = vec![0usize; probs.len()];
        for d in draws {
            counts[d] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let freq = *c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (freq - p).abs() < 3.0 * se + 1e-9,
                "freq {freq} vs prob {p} (se {se})"
            );
        }
    }

    #[test]
    fn grad_log_prob_uniform_two_way() {
        let policy = single_head(2, 1);
        let grad = policy.grad_log_prob(TaskKind::Match, &[1.0], 0).unwrap();
        assert!((grad.d_bias[0] - 0.5).abs() < 1e-12);
        assert!((grad.d_bias[1] + 0.5).abs() < 1e-12);
        assert!((grad.d_weights[0] - 0.5).abs() < 1e-12);
        assert!((grad.d_weights[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn grad_components_sum_to_zero() {
        let policy = randomized_head(6, 3, 23);
        let feats = [1.0, -0.5, 0.25];
        let grad = policy.grad_log_prob(TaskKind::Match, &feats, 4).unwrap();
        assert!(grad.d_bias.iter().sum::<f64>().abs() < 1e-12);
        for col in 0..3 {
            let s: f64 = (0..6).map(|row| grad.d_weights[row * 3 + col]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn grad_log_prob_matches_finite_differences() {
        for seed in 0..20u64 {
            let policy = randomized_head(5, 3, seed);
            let feats = [0.7, -0.3, 1.2];
            let idx = (seed % 5) as usize;
            let analytic = policy.grad_log_prob(TaskKind::Match, &feats, idx).unwrap();
            let head = policy.head(TaskKind::Match).unwrap().clone();
            let mut flat: Vec<f64> = head.weights.clone();
            flat.extend_from_slice(&head.bias);
            let numeric = central_diff(
                |theta| {
                    let mut h = head.clone();
                    h.weights.copy_from_slice(&theta[..h.k * h.dim]);
                    h.bias.copy_from_slice(&theta[h.k * h.dim..]);
                    h.log_probs(&feats).unwrap()[idx]
                },
                &flat,
                1e-5,
            );
            let mut analytic_flat = analytic.d_weights.clone();
            analytic_flat.extend_from_slice(&analytic.d_bias);
            assert!(max_rel_error(&analytic_flat, &numeric) < 1e-5);
        }
    }

    #[test]
    fn kl_zero_on_identical_params() {
        let policy = randomized_head(6, 3, 31);
        let kl = policy
            .kl_divergence(&policy, TaskKind::Match, &[0.1, 0.2, 0.3])
            .unwrap();
        assert!(kl.abs() < 1e-14);
    }

    #[test]
    fn kl_hand_computed_binary_case() {
        // p = (0.75, 0.25), q = (0.5, 0.5)
        let mut p = single_head(2, 1);
        p.head_mut(TaskKind::Match).unwrap().bias[0] = (3.0f64).ln();
        let q = single_head(2, 1);
        let kl = p.kl_divergence(&q, TaskKind::Match, &[0.0]).unwrap();
        let expected = 0.75 * (1.5f64).ln() + 0.25 * (0.5f64).ln();
        assert!((kl - expected).abs() < 1e-12);
        assert!((kl - 0.130812).abs() < 1e-6);
    }

    #[test]
    fn kl_non_negative_over_random_pairs() {
        for seed in 0..1000u64 {
            let p = randomized_head(4, 2, seed);
            let q = randomized_head(4, 2, seed.wrapping_add(10_000));
            let feats = [0.3, -0.8];
            let kl = p.kl_divergence(&q, TaskKind::Match, &feats).unwrap();
            assert!(kl >= -1e-14, "negative KL {kl} at seed {seed}");
        }
    }

    #[test]
    fn kl_matches_sampled_estimator() {
        let p = randomized_head(5, 2, 77);
        let q = randomized_head(5, 2, 78);
        let feats = [0.6, -0.1];
        let exact = p.kl_divergence(&q, TaskKind::Match, &feats).unwrap();
        let lp = p.log_probs(TaskKind::Match, &feats).unwrap();
        let lq = q.log_probs(TaskKind::Match, &feats).unwrap();
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = p
            .sample_group(TaskKind::Match, &feats, n, &mut rng)
            .unwrap();
        let mean: f64 = draws.iter().map(|&i| lp[i] - lq[i]).sum::<f64>() / n as f64;
        let var: f64 = draws
            .iter()
            .map(|&i| {
                let v = lp[i] - lq[i] - mean;
                v * v
            })
            .sum::<f64>()
            / n as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se + 1e-6);
    }

    #[test]
    fn kl_grad_matches_finite_differences() {
        let p = randomized_head(5, 3, 41);
        let q = randomized_head(5, 3, 42);
        let feats = [0.7, -0.3, 1.2];
        let analytic = p.kl_grad(&q, TaskKind::Match, &feats).unwrap();
        let head = p.head(TaskKind::Match).unwrap().clone();
        let mut flat = head.weights.clone();
        flat.extend_from_slice(&head.bias);
        let numeric = central_diff(
            |theta| {
                let mut trial = p.clone();
                let h = trial.head_mut(TaskKind::Match).unwrap();
                h.weights.copy_from_slice(&theta[..h.k * h.dim]);
                h.bias.copy_from_slice(&theta[h.k * h.dim..]);
                trial.kl_divergence(&q, TaskKind::Match, &feats).unwrap()
            },
            &flat,
            1e-5,
        );
        let mut analytic_flat = analytic.d_weights.clone();
        analytic_flat.extend_from_slice(&analytic.d_bias);
        assert!(max_rel_error(&analytic_flat, &numeric) < 1e-5);
    }

    #[test]
    fn snapshot_is_independent() {
        let mut policy = randomized_head(3, 2, 55);
        let snap = policy.snapshot(PolicyVersion::OldSnapshot);
        policy.head_mut(TaskKind::Match).unwrap().bias[0] += 1.0;
        assert_eq!(snap.version, PolicyVersion::OldSnapshot);
        assert_ne!(
            snap.head(TaskKind::Match).unwrap().bias[0],
            policy.head(TaskKind::Match).unwrap().bias[0]
        );
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        let policy = randomized_head(4, 3, 61);
        policy.save(&path).unwrap();
        let loaded = Policy::load(&path).unwrap();
        assert_eq!(policy, loaded);
        assert!(Policy::load(&dir.path().join("missing.json")).is_err());
    }
}
