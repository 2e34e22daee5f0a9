//! Synthetic task generation, dataset persistence, and the difficulty filter.
//!
//! Generators produce samples whose features are a noisy encoding of the
//! ground truth plus a constant bias feature, so at noise 0 every sample is
//! solvable by a policy that reads the features. The difficulty filter drops
//! samples a probe policy solves always or never, keeping only those whose
//! mean probe reward falls strictly inside a configured band.
//!
//! ```
//! use grpo_lab::tasks::gen_temporal;
//!
//! let samples = gen_temporal(3, 0, 0.05, 10, 10.0).unwrap();
//! assert_eq!(samples.len(), 3);
//! assert_eq!(samples[0].candidate_count(), 90); // 45 intervals x 2 format variants
//! ```

use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{Candidate, CandidateSpec, GroundTruth, Payload, TaskKind};
use crate::error::{Error, Result};
use crate::pipeline::atomic_write;
use crate::policy::Policy;
use crate::reward::{RewardWeights, TimeInterval};
use crate::seed::derive_seed;

/// Default activity class set for the toy classification task.
pub const DEFAULT_ACTIVITY_CLASSES: [&str; 5] = [
    "Watch TV",
    "Reading",
    "Play on the Phone",
    "Play Esports",
    "Workout",
];

/// One query: an id, a feature vector, the ground truth, and the candidate
/// set the policy chooses from.
#[derive(Debug, Serialize, Deserialize)]
pub struct TaskSample {
    pub id: String,
    pub kind: TaskKind,
    pub features: Vec<f64>,
    pub truth: GroundTruth,
    pub candidates: CandidateSpec,
    #[serde(skip)]
    cache: OnceLock<Vec<Candidate>>,
}

impl Clone for TaskSample {
    fn clone(&self) -> Self {
        Self {
            id: self.id.clone(),
            kind: self.kind,
            features: self.features.clone(),
            truth: self.truth.clone(),
            candidates: self.candidates.clone(),
            cache: OnceLock::new(),
        }
    }
}

impl PartialEq for TaskSample {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.kind == other.kind
            && self.features == other.features
            && self.truth == other.truth
            && self.candidates == other.candidates
    }
}

impl TaskSample {
    pub fn new(
        id: String,
        kind: TaskKind,
        features: Vec<f64>,
        truth: GroundTruth,
        candidates: CandidateSpec,
    ) -> Self {
        Self {
            id,
            kind,
            features,
            truth,
            candidates,
            cache: OnceLock::new(),
        }
    }

    /// Materialized candidate list, built once per sample.
    pub fn candidate_list(&self) -> Result<&[Candidate]> {
        if self.cache.get().is_none() {
            let built = self.candidates.materialize()?;
            let _ = self.cache.set(built);
        }
        Ok(self.cache.get().expect("cache just initialized"))
    }

    /// Number of candidates (the policy head's K).
    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }
}

fn noisy(value: f64, noise: f64, rng: &mut impl Rng) -> f64 {
    if noise > 0.0 {
        value + rng.gen_range(-noise..noise)
    } else {
        value
    }
}

/// Temporal-grounding samples: the truth is a random interval from the grid,
/// features are `[start/horizon, end/horizon, 1]` with uniform noise.
pub fn gen_temporal(
    n: usize,
    seed: u64,
    noise: f64,
    bins: usize,
    horizon: f64,
) -> Result<Vec<TaskSample>> {
    let spec = CandidateSpec::TemporalGrid { bins, horizon };
    spec.materialize()?; // validate grid parameters up front
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "gen/temporal"));
    let step = horizon / (bins as f64 - 1.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s = rng.gen_range(0..bins - 1);
        let e = rng.gen_range(s + 1..bins);
        let truth = TimeInterval::new(s as f64 * step, e as f64 * step);
        let features = vec![
            noisy(truth.start / horizon, noise, &mut rng),
            noisy(truth.end / horizon, noise, &mut rng),
            1.0,
        ];
        out.push(TaskSample::new(
            format!("temporal-{i:05}"),
            TaskKind::Temporal,
            features,
            GroundTruth::Interval(truth),
            spec.clone(),
        ));
    }
    Ok(out)
}

/// GUI-grounding samples: the truth is a random fixed-size box from the
/// position grid, features are `[x_min, y_min, 1]` with uniform noise.
pub fn gen_box(n: usize, seed: u64, noise: f64, grid: usize, size: f64) -> Result<Vec<TaskSample>> {
    let spec = CandidateSpec::BoxGrid { grid, size };
    let cands = spec.materialize()?;
    let positions = grid * grid;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "gen/box"));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let pick = rng.gen_range(0..positions);
        let truth = match &cands[pick].payload {
            Payload::Box(b) => *b,
            _ => unreachable!("box grid holds box payloads"),
        };
        let features = vec![
            noisy(truth.x_min, noise, &mut rng),
            noisy(truth.y_min, noise, &mut rng),
            1.0,
        ];
        out.push(TaskSample::new(
            format!("box-{i:05}"),
            TaskKind::Box,
            features,
            GroundTruth::Box(truth),
            spec.clone(),
        ));
    }
    Ok(out)
}

fn answer_candidates(values: &[String], well_formed: bool) -> Vec<Candidate> {
    values
        .iter()
        .map(|v| Candidate {
            payload: Payload::Answer { value: v.clone() },
            well_formed,
        })
        .collect()
}

fn one_hot_features(target: usize, k: usize, noise: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut features: Vec<f64> = (0..k)
        .map(|j| noisy(if j == target { 1.0 } else { 0.0 }, noise, rng))
        .collect();
    features.push(1.0);
    features
}

fn gen_answer_samples(
    n: usize,
    seed_label: &str,
    id_prefix: &str,
    kind: TaskKind,
    seed: u64,
    values: &[String],
    noise: f64,
) -> Result<Vec<TaskSample>> {
    if values.len() < 2 {
        return Err(Error::Config(format!(
            "answer task needs at least 2 candidates, got {}",
            values.len()
        )));
    }
    let k = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, seed_label));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let target = rng.gen_range(0..k);
        let features = one_hot_features(target, k, noise, &mut rng);
        out.push(TaskSample::new(
            format!("{id_prefix}-{i:05}"),
            kind,
            features,
            GroundTruth::Answer {
                value: values[target].clone(),
            },
            CandidateSpec::Inline {
                candidates: answer_candidates(values, true),
            },
        ));
    }
    Ok(out)
}

/// Exact-match samples over `k` enumerated answer strings; features are a
/// noisy one-hot of the correct answer plus a bias feature.
pub fn gen_match(n: usize, seed: u64, k: usize, noise: f64) -> Result<Vec<TaskSample>> {
    let values: Vec<String> = (0..k).map(|j| format!("option-{j}")).collect();
    gen_answer_samples(
        n,
        "gen/match",
        "match",
        TaskKind::Match,
        seed,
        &values,
        noise,
    )
}

/// Activity-classification samples over a class-label set.
pub fn gen_activity(
    n: usize,
    seed: u64,
    classes: &[String],
    noise: f64,
) -> Result<Vec<TaskSample>> {
    gen_answer_samples(
        n,
        "gen/activity",
        "activity",
        TaskKind::Activity,
        seed,
        classes,
        noise,
    )
}

/// Trivial match samples: every candidate equals the truth, so every rollout
/// scores 1.0. Used to exercise the upper difficulty cutoff.
pub fn gen_trivial_match(n: usize, seed: u64, k: usize) -> Result<Vec<TaskSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "gen/trivial"));
    let truth = "option-0".to_string();
    let values = vec![truth.clone(); k];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let features = one_hot_features(0, k, 0.0, &mut rng);
        out.push(TaskSample::new(
            format!("trivial-{i:05}"),
            TaskKind::Match,
            features,
            GroundTruth::Answer {
                value: truth.clone(),
            },
            CandidateSpec::Inline {
                candidates: answer_candidates(&values, true),
            },
        ));
    }
    Ok(out)
}

/// Unsolvable match samples: no candidate matches the truth and all are
/// malformed, so every rollout scores 0. Used to exercise the lower cutoff.
pub fn gen_unsolvable_match(n: usize, seed: u64, k: usize) -> Result<Vec<TaskSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "gen/unsolvable"));
    let values: Vec<String> = (0..k).map(|j| format!("wrong-{j}")).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let features = one_hot_features(0, k, 0.0, &mut rng);
        out.push(TaskSample::new(
            format!("unsolvable-{i:05}"),
            TaskKind::Match,
            features,
            GroundTruth::Answer {
                value: "unreachable-target".to_string(),
            },
            CandidateSpec::Inline {
                candidates: answer_candidates(&values, false),
            },
        ));
    }
    Ok(out)
}

/// One row of the difficulty-filter report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyReport {
    pub sample_id: String,
    pub mean_reward: f64,
    pub kept: bool,
}

/// Probe each sample with `g` rollouts under `probe` and keep it iff the mean
/// total reward lies strictly inside `(lo, hi)`. Deterministic under `seed`;
/// per-sample seeds are derived from the sample id, so the outcome does not
/// depend on dataset order.
pub fn difficulty_filter(
    samples: &[TaskSample],
    probe: &Policy,
    g: usize,
    lo: f64,
    hi: f64,
    weights: &RewardWeights,
    seed: u64,
) -> Result<(Vec<TaskSample>, Vec<DifficultyReport>)> {
    if g == 0 {
        return Err(Error::Config("difficulty filter needs g >= 1".into()));
    }
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::Config(format!(
            "difficulty thresholds must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"
        )));
    }
    let mut kept = Vec::new();
    let mut reports = Vec::with_capacity(samples.len());
    for sample in samples {
        let cands = sample.candidate_list()?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("difficulty/{}", sample.id)));
        let draws = probe.sample_group(sample.kind, &sample.features, g, &mut rng)?;
        let mut total = 0.0;
        for idx in &draws {
            let cand = cands.get(*idx).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "probe policy emitted index {idx} beyond candidate set of {}",
                    sample.id
                ))
            })?;
            total += crate::candidates::score_candidate(cand, &sample.truth, weights)?.total;
        }
        let mean = total / g as f64;
        let keep = lo < mean && mean < hi;
        reports.push(DifficultyReport {
            sample_id: sample.id.clone(),
            mean_reward: mean,
            kept: keep,
        });
        if keep {
            kept.push(sample.clone());
        }
    }
    Ok((kept, reports))
}

/// Serialize the filter report as CSV.
pub fn difficulty_report_csv(reports: &[DifficultyReport]) -> String {
    let mut out = String::from("sample_id,mean_reward,kept\n");
    for r in reports {
        out.push_str(&format!("{},{},{}\n", r.sample_id, r.mean_reward, r.kept));
    }
    out
}

/// Write a dataset as one JSON record per line (atomic temp file + rename).
pub fn write_dataset(samples: &[TaskSample], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for sample in samples {
        serde_json::to_writer(&mut buf, sample)?;
        buf.write_all(b"\n")?;
    }
    atomic_write(path, &buf)
}

/// Read a dataset written by [`write_dataset`], validating every candidate
/// spec as it goes.
pub fn read_dataset(path: &Path) -> Result<Vec<TaskSample>> {
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "dataset {} not found",
            path.display()
        )));
    }
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TaskSample = serde_json::from_str(&line)?;
        sample.candidate_list()?;
        out.push(sample);
    }
    Ok(out)
}
