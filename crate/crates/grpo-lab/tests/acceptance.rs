//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured quantity. Oracles here are implemented
//! independently of the library code they check.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grpo_lab::candidates::TaskKind;
use grpo_lab::config::ExperimentConfig;
use grpo_lab::eval::{confusion, evaluate_policy, expected_reward, per_class_f1, Decode};
use grpo_lab::gradcheck::{central_diff, max_rel_error};
use grpo_lab::grpo::{
    clipped_surrogate, evaluate_objective, normalize_advantages, GrpoConfig, GrpoTrainer,
    SampleGroup,
};
use grpo_lab::pipeline::{self, head_shapes, RunPaths};
use grpo_lab::policy::{HeadShape, Policy};
use grpo_lab::reward::{
    box_iou, combined_reward, temporal_iou, BoundingBox, RewardWeights, TimeInterval,
};
use grpo_lab::sft::{oracle_demos, sft_loss, sft_train, SftConfig};
use grpo_lab::tasks::{
    difficulty_filter, gen_activity, gen_box, gen_match, gen_temporal, gen_trivial_match,
    gen_unsolvable_match, DEFAULT_ACTIVITY_CLASSES,
};

// ---------------------------------------------------------------------------
// Criterion 1: reward kernels vs counting / Monte-Carlo oracles
// ---------------------------------------------------------------------------

/// Count cells of width `step` whose midpoints fall in intersection/union.
/// Exact when all endpoints are multiples of `step`.
fn grid_iou_oracle(pred: &TimeInterval, gt: &TimeInterval, step: f64) -> f64 {
    let lo = pred.start.min(gt.start).min(0.0);
    let hi = pred.end.max(gt.end);
    let cells = ((hi - lo) / step).ceil() as usize + 1;
    let (mut inter, mut union) = (0u64, 0u64);
    for c in 0..cells {
        let x = lo + (c as f64 + 0.5) * step;
        let in_pred = x > pred.start && x < pred.end;
        let in_gt = x > gt.start && x < gt.end;
        if in_pred && in_gt {
            inter += 1;
        }
        if in_pred || in_gt {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn mc_box_iou_oracle(
    pred: &BoundingBox,
    gt: &BoundingBox,
    points: usize,
    rng: &mut rand::rngs::SmallRng,
) -> f64 {
    let x_lo = pred.x_min.min(gt.x_min);
    let x_hi = pred.x_max.max(gt.x_max);
    let y_lo = pred.y_min.min(gt.y_min);
    let y_hi = pred.y_max.max(gt.y_max);
    let (x_span, y_span) = (x_hi - x_lo, y_hi - y_lo);
    let (mut inter, mut union) = (0u64, 0u64);
    for _ in 0..points {
        let x = x_lo + rng.gen::<f64>() * x_span;
        let y = y_lo + rng.gen::<f64>() * y_span;
        let in_pred = x > pred.x_min && x < pred.x_max && y > pred.y_min && y < pred.y_max;
        let in_gt = x > gt.x_min && x < gt.x_max && y > gt.y_min && y < gt.y_max;
        if in_pred && in_gt {
            inter += 1;
        }
        if in_pred || in_gt {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn criterion_01_iou_oracle_equivalence() {
    let start = Instant::now();
    let step = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut max_temporal_err: f64 = 0.0;
    for _ in 0..10_000 {
        // Endpoints on the oracle grid so cell counting is exact.
        let snap = |v: f64| (v / step).round() * step;
        let gt_start = snap(rng.gen_range(0.0..8.0));
        let gt = TimeInterval::new(gt_start, snap(gt_start + rng.gen_range(0.5..2.0)));
        let ps = snap(rng.gen_range(0.0..9.0));
        let pred = TimeInterval::new(ps, snap(ps + rng.gen_range(-0.5..2.0)));
        let got = temporal_iou(&pred, &gt).unwrap();
        let oracle = grid_iou_oracle(&pred, &gt, step);
        max_temporal_err = max_temporal_err.max((got - oracle).abs());
    }
    assert!(
        max_temporal_err < 1e-3,
        "temporal IoU vs grid oracle: max err {max_temporal_err}"
    );

    let mut max_box_err: f64 = 0.0;
    let mut mc_rng = <rand::rngs::SmallRng as SeedableRng>::seed_from_u64(102);
    for _ in 0..1_000 {
        let bx = |rng: &mut ChaCha8Rng| {
            let x = rng.gen_range(0.0..0.6);
            let y = rng.gen_range(0.0..0.6);
            BoundingBox::new(
                x,
                y,
                x + rng.gen_range(0.1..0.4),
                y + rng.gen_range(0.1..0.4),
            )
        };
        let pred = bx(&mut rng);
        let gt = bx(&mut rng);
        let got = box_iou(&pred, &gt).unwrap();
        let oracle = mc_box_iou_oracle(&pred, &gt, 1_000_000, &mut mc_rng);
        max_box_err = max_box_err.max((got - oracle).abs());
    }
    assert!(
        max_box_err < 5e-3,
        "box IoU vs Monte-Carlo oracle: max err {max_box_err}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "runtime {elapsed:?} exceeds 30 s");
    println!(
        "ACCEPTANCE 1 PASS: temporal IoU err {max_temporal_err:.2e} (< 1e-3), \
         box IoU err {max_box_err:.2e} (< 5e-3), runtime {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: weighted-reward arithmetic
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_weighted_reward_values() {
    let w = RewardWeights::default();
    assert_eq!(w.accuracy, 0.9);
    assert_eq!(w.format, 0.1);
    assert_eq!(combined_reward(1.0, true, &w).unwrap().total, 1.0);
    assert_eq!(combined_reward(0.5, true, &w).unwrap().total, 0.55);
    println!("ACCEPTANCE 2 PASS: (1,1) -> 1.0 and (0.5,1) -> 0.55 exact with weights (0.9, 0.1)");
}

// ---------------------------------------------------------------------------
// Criterion 3: group-advantage standardization
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_advantage_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_mean: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    let mut worst_affine: f64 = 0.0;
    for _ in 0..10_000 {
        let g = rng.gen_range(2..=16);
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(0.0..1.0)).collect();
        let adv = normalize_advantages(&rewards);
        let n = g as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());

        let scale = rng.gen_range(0.1..10.0);
        let shift = rng.gen_range(-5.0..5.0);
        let transformed: Vec<f64> = rewards.iter().map(|r| scale * r + shift).collect();
        for (a, b) in adv.iter().zip(normalize_advantages(&transformed)) {
            worst_affine = worst_affine.max((a - b).abs());
        }
    }
    assert!(worst_mean < 1e-10, "max |mean| {worst_mean}");
    assert!(worst_std < 1e-8, "max |std - 1| {worst_std}");
    assert!(worst_affine < 1e-10, "max affine deviation {worst_affine}");
    assert_eq!(normalize_advantages(&[0.4; 8]), vec![0.0; 8]);
    println!(
        "ACCEPTANCE 3 PASS: over 10^4 groups |mean| <= {worst_mean:.2e}, \
         |std-1| <= {worst_std:.2e}, affine invariance <= {worst_affine:.2e}, all-equal -> zeros"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: analytic gradients vs central finite differences
// ---------------------------------------------------------------------------

fn random_match_policy(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Policy {
    let mut policy = Policy::uniform(&[(TaskKind::Match, HeadShape { k, dim })]);
    let head = policy.head_mut(TaskKind::Match).unwrap();
    for w in &mut head.weights {
        *w = rng.gen_range(-1.0..1.0);
    }
    for b in &mut head.bias {
        *b = rng.gen_range(-1.0..1.0);
    }
    policy
}

fn flatten(policy: &Policy) -> Vec<f64> {
    let head = policy.head(TaskKind::Match).unwrap();
    let mut flat = head.weights.clone();
    flat.extend_from_slice(&head.bias);
    flat
}

fn unflatten(template: &Policy, theta: &[f64]) -> Policy {
    let mut p = template.clone();
    let head = p.head_mut(TaskKind::Match).unwrap();
    let nw = head.k * head.dim;
    head.weights.copy_from_slice(&theta[..nw]);
    head.bias.copy_from_slice(&theta[nw..]);
    p
}

fn random_groups(policy: &Policy, n: usize, g: usize, rng: &mut ChaCha8Rng) -> Vec<SampleGroup> {
    let head = policy.head(TaskKind::Match).unwrap();
    (0..n)
        .map(|i| {
            let features: Vec<f64> = (0..head.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let indices = policy
                .sample_group(TaskKind::Match, &features, g, rng)
                .unwrap();
            let lps = policy.log_probs(TaskKind::Match, &features).unwrap();
            let old_log_probs: Vec<f64> = indices.iter().map(|&j| lps[j]).collect();
            let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(0.0..1.0)).collect();
            let advantages = normalize_advantages(&rewards);
            SampleGroup {
                sample_id: format!("acc-{i}"),
                kind: TaskKind::Match,
                features,
                indices,
                old_log_probs,
                rewards,
                advantages,
            }
        })
        .collect()
}

#[test]
fn criterion_04_gradient_fidelity() {
    let start = Instant::now();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;

    // grad_log_prob, 100 instances
    for _ in 0..100 {
        let policy = random_match_policy(5, 3, &mut rng);
        let features: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let idx = rng.gen_range(0..5);
        let analytic = policy
            .grad_log_prob(TaskKind::Match, &features, idx)
            .unwrap();
        let numeric = central_diff(
            |theta| {
                unflatten(&policy, theta)
                    .log_prob(TaskKind::Match, &features, idx)
                    .unwrap()
            },
            &flatten(&policy),
            h,
        );
        let mut flat = analytic.d_weights.clone();
        flat.extend_from_slice(&analytic.d_bias);
        worst = worst.max(max_rel_error(&flat, &numeric));
    }
    let logp_worst = worst;

    // sft_loss gradient, 100 instances
    worst = 0.0;
    for _ in 0..100 {
        let policy = random_match_policy(4, 3, &mut rng);
        let samples = gen_match(6, rng.gen(), 4, 0.2).unwrap();
        // 4-way match features are 5-dimensional; rebuild a 3-dim context by
        // using oracle demos against a 5-dim policy instead.
        let _ = samples;
        let demos: Vec<grpo_lab::sft::Demonstration> = (0..6)
            .map(|_| grpo_lab::sft::Demonstration {
                kind: TaskKind::Match,
                features: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                target: rng.gen_range(0..4),
            })
            .collect();
        let (_, grad) = sft_loss(&policy, &demos).unwrap();
        let numeric = central_diff(
            |theta| sft_loss(&unflatten(&policy, theta), &demos).unwrap().0,
            &flatten(&policy),
            h,
        );
        let hg = &grad.heads[&TaskKind::Match];
        let mut flat = hg.d_weights.clone();
        flat.extend_from_slice(&hg.d_bias);
        worst = worst.max(max_rel_error(&flat, &numeric));
    }
    let sft_worst = worst;

    // full surrogate objective gradient, 100 instances
    worst = 0.0;
    for _ in 0..100 {
        let old = random_match_policy(4, 2, &mut rng);
        let mut new = old.clone();
        {
            let head = new.head_mut(TaskKind::Match).unwrap();
            for w in &mut head.weights {
                *w += rng.gen_range(-0.05..0.05);
            }
            for b in &mut head.bias {
                *b += rng.gen_range(-0.05..0.05);
            }
        }
        let ref_policy = random_match_policy(4, 2, &mut rng);
        let groups = random_groups(&old, 4, 6, &mut rng);
        let eval = evaluate_objective(&new, &ref_policy, &groups, 0.2, 0.04).unwrap();
        let numeric = central_diff(
            |theta| {
                evaluate_objective(&unflatten(&new, theta), &ref_policy, &groups, 0.2, 0.04)
                    .unwrap()
                    .value
            },
            &flatten(&new),
            h,
        );
        let hg = &eval.grad.heads[&TaskKind::Match];
        let mut flat = hg.d_weights.clone();
        flat.extend_from_slice(&hg.d_bias);
        worst = worst.max(max_rel_error(&flat, &numeric));
    }
    let obj_worst = worst;

    assert!(logp_worst < 1e-4, "grad_log_prob rel err {logp_worst}");
    assert!(sft_worst < 1e-4, "sft_loss rel err {sft_worst}");
    assert!(obj_worst < 1e-4, "objective rel err {obj_worst}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "runtime {elapsed:?} exceeds 1 min");
    println!(
        "ACCEPTANCE 4 PASS: finite-difference rel err log-prob {logp_worst:.2e}, \
         sft {sft_worst:.2e}, objective {obj_worst:.2e} (all < 1e-4), runtime {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: surrogate-objective identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_objective_identities() {
    // Hand-derived clip values.
    assert!((clipped_surrogate(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
    assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let policy = random_match_policy(5, 3, &mut rng);
    let groups = random_groups(&policy, 8, 8, &mut rng);

    // At theta = theta_old with beta = 0 and standardized advantages.
    let at_old = evaluate_objective(&policy, &policy, &groups, 0.2, 0.0).unwrap();
    assert!(at_old.value.abs() < 1e-10, "objective {}", at_old.value);

    // KL term exactly 0 at theta = theta_ref, for any beta.
    let anchored = evaluate_objective(&policy, &policy, &groups, 0.2, 1000.0).unwrap();
    assert!(anchored.mean_kl.abs() < 1e-14);
    assert!((anchored.value - at_old.value).abs() < 1e-10);

    // Epsilon -> infinity reduces to the unclipped surrogate.
    let mut moved = policy.clone();
    {
        let head = moved.head_mut(TaskKind::Match).unwrap();
        for w in &mut head.weights {
            *w += rng.gen_range(-0.3..0.3);
        }
    }
    let wide = evaluate_objective(&moved, &policy, &groups, 1e12, 0.0).unwrap();
    let mut unclipped = 0.0;
    for group in &groups {
        let lps = moved.log_probs(TaskKind::Match, &group.features).unwrap();
        let mut s = 0.0;
        for ((&idx, &old_lp), &adv) in group
            .indices
            .iter()
            .zip(&group.old_log_probs)
            .zip(&group.advantages)
        {
            s += (lps[idx] - old_lp).exp() * adv;
        }
        unclipped += s / group.indices.len() as f64;
    }
    unclipped /= groups.len() as f64;
    assert!(
        (wide.value - unclipped).abs() < 1e-12,
        "wide-clip objective {} vs unclipped {}",
        wide.value,
        unclipped
    );
    println!(
        "ACCEPTANCE 5 PASS: J = {:.1e} at theta_old (|J| < 1e-10), KL = 0 at reference, \
         eps -> inf matches unclipped surrogate, clip point values exact",
        at_old.value
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: learning on the temporal toy task
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_desk_scale_learning() {
    let start = Instant::now();
    let weights = RewardWeights::default();
    let mut gains = Vec::new();
    for seed in 0..5u64 {
        let dataset = gen_temporal(500, 1000 + seed, 0.05, 10, 10.0).unwrap();
        let init = Policy::uniform(&[(TaskKind::Temporal, HeadShape { k: 90, dim: 3 })]);
        let config = GrpoConfig {
            seed,
            ..Default::default()
        };
        assert_eq!(config.iterations, 200);
        let (_, log) = grpo_lab::grpo::train_grpo(&config, &weights, &dataset, init).unwrap();
        let first = log.records.first().unwrap().mean_reward;
        let last = log.records.last().unwrap().mean_reward;
        gains.push(last - first);
    }
    gains.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = gains[2];
    let elapsed = start.elapsed();
    assert!(
        median >= 0.1,
        "median reward gain {median} < 0.1 (gains {gains:?})"
    );
    assert!(elapsed.as_secs() < 120, "runtime {elapsed:?} exceeds 2 min");
    println!(
        "ACCEPTANCE 6 PASS: median mean-reward gain {median:.3} over 5 seeds \
         (>= 0.1) in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: difficulty filter accelerates convergence
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_filter_accelerates_convergence() {
    let weights = RewardWeights::default();
    let threshold = 0.7;
    let max_iters = 400usize;
    let shapes = [(TaskKind::Match, HeadShape { k: 4, dim: 5 })];

    let iters_to_threshold = |dataset: &[grpo_lab::tasks::TaskSample],
                              eval: &[grpo_lab::tasks::TaskSample],
                              seed: u64| {
        let config = GrpoConfig {
            seed,
            iterations: max_iters,
            ..Default::default()
        };
        let mut trainer =
            GrpoTrainer::new(config, weights, dataset.to_vec(), Policy::uniform(&shapes)).unwrap();
        for iter in 0..max_iters {
            trainer.step().unwrap();
            let mean: f64 = eval
                .iter()
                .map(|s| expected_reward(trainer.policy(), s, &weights).unwrap())
                .sum::<f64>()
                / eval.len() as f64;
            if mean >= threshold {
                return iter + 1;
            }
        }
        max_iters + 1
    };

    let mut with_filter = Vec::new();
    let mut without_filter = Vec::new();
    for seed in 0..5u64 {
        // 40% solvable, 30% trivial, 30% unsolvable.
        let mut dataset = gen_match(80, 7000 + seed, 4, 0.1).unwrap();
        dataset.extend(gen_trivial_match(60, 7000 + seed, 4).unwrap());
        dataset.extend(gen_unsolvable_match(60, 7000 + seed, 4).unwrap());
        let eval = gen_match(50, 9000 + seed, 4, 0.1).unwrap();

        let probe = Policy::uniform(&shapes);
        let (kept, _) = difficulty_filter(&dataset, &probe, 8, 0.05, 0.95, &weights, seed).unwrap();
        assert!(kept.iter().all(|s| s.id.starts_with("match")));

        with_filter.push(iters_to_threshold(&kept, &eval, seed));
        without_filter.push(iters_to_threshold(&dataset, &eval, seed));
    }
    with_filter.sort_unstable();
    without_filter.sort_unstable();
    let med_with = with_filter[2];
    let med_without = without_filter[2];
    assert!(
        med_with < med_without,
        "filtered median {med_with} not below unfiltered {med_without} \
         (with {with_filter:?}, without {without_filter:?})"
    );
    println!(
        "ACCEPTANCE 7 PASS: iterations to reward {threshold}: median {med_with} with filter \
         vs {med_without} without (5 seeds)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: two-stage pipeline retains SFT knowledge
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_two_stage_retention() {
    let weights = RewardWeights::default();
    let classes: Vec<String> = DEFAULT_ACTIVITY_CLASSES.map(String::from).to_vec();
    let shapes = vec![
        (TaskKind::Temporal, HeadShape { k: 90, dim: 3 }),
        (TaskKind::Box, HeadShape { k: 26, dim: 3 }),
        (TaskKind::Activity, HeadShape { k: 5, dim: 6 }),
    ];

    let mut f1_drops = Vec::new();
    let mut reward_gains = Vec::new();
    for seed in 0..5u64 {
        // Stage 1: SFT on activity demonstrations.
        let demo_samples = gen_activity(300, 2000 + seed, &classes, 0.05).unwrap();
        let demos = oracle_demos(&demo_samples, &weights).unwrap();
        let sft_config = SftConfig {
            seed,
            ..Default::default()
        };
        let (sft_policy, _) = sft_train(&sft_config, &demos, Policy::uniform(&shapes)).unwrap();

        let activity_eval = gen_activity(200, 4000 + seed, &classes, 0.05).unwrap();
        let mut grounding_eval = gen_temporal(100, 5000 + seed, 0.05, 10, 10.0).unwrap();
        grounding_eval.extend(gen_box(100, 5000 + seed, 0.05, 5, 0.2).unwrap());

        let grounding_mean = |policy: &Policy| {
            let report =
                evaluate_policy(policy, &grounding_eval, Decode::Argmax, 0, &weights).unwrap();
            (report.mean_reward_by_kind["temporal"] + report.mean_reward_by_kind["box"]) / 2.0
        };
        let activity_f1 = |policy: &Policy| {
            evaluate_policy(policy, &activity_eval, Decode::Argmax, 0, &weights)
                .unwrap()
                .macro_f1
        };

        let f1_before = activity_f1(&sft_policy);
        let reward_before = grounding_mean(&sft_policy);

        // Stage 2: GRPO on grounding tasks only.
        let mut grpo_set = gen_temporal(200, 3000 + seed, 0.05, 10, 10.0).unwrap();
        grpo_set.extend(gen_box(200, 3000 + seed, 0.05, 5, 0.2).unwrap());
        let grpo_config = GrpoConfig {
            seed,
            ..Default::default()
        };
        let (trained, _) =
            grpo_lab::grpo::train_grpo(&grpo_config, &weights, &grpo_set, sft_policy).unwrap();

        f1_drops.push(f1_before - activity_f1(&trained));
        reward_gains.push(grounding_mean(&trained) - reward_before);
    }
    f1_drops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    reward_gains.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med_drop = f1_drops[2];
    let med_gain = reward_gains[2];
    assert!(
        med_drop < 0.05,
        "median activity F1 drop {med_drop} >= 0.05"
    );
    assert!(
        med_gain >= 0.1,
        "median grounding reward gain {med_gain} < 0.1"
    );
    println!(
        "ACCEPTANCE 8 PASS: median activity F1 drop {med_drop:.4} (< 0.05), \
         median grounding reward gain {med_gain:.3} (>= 0.1) over 5 seeds"
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: per-class F1 vs brute-force counting
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_f1_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let pool: Vec<String> = ["a", "b", "c", "d", "e"].map(String::from).to_vec();
    let mut trials = 0usize;
    while trials < 1_000 {
        let n_classes = rng.gen_range(2..=5);
        let classes = pool[..n_classes].to_vec();
        let n = rng.gen_range(1..=20);
        let preds: Vec<String> = (0..n)
            .map(|_| classes[rng.gen_range(0..n_classes)].clone())
            .collect();
        let gts: Vec<String> = (0..n)
            .map(|_| classes[rng.gen_range(0..n_classes)].clone())
            .collect();
        let cm = confusion(&preds, &gts, &classes).unwrap();
        for m in per_class_f1(&cm) {
            let tp = preds
                .iter()
                .zip(&gts)
                .filter(|(p, t)| **p == m.class && **t == m.class)
                .count() as f64;
            let fp = preds
                .iter()
                .zip(&gts)
                .filter(|(p, t)| **p == m.class && **t != m.class)
                .count() as f64;
            let fne = preds
                .iter()
                .zip(&gts)
                .filter(|(p, t)| **p != m.class && **t == m.class)
                .count() as f64;
            let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let recall = if tp + fne == 0.0 {
                0.0
            } else {
                tp / (tp + fne)
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            assert_eq!(m.precision, precision, "precision mismatch for {}", m.class);
            assert_eq!(m.recall, recall, "recall mismatch for {}", m.class);
            assert_eq!(m.f1, f1, "f1 mismatch for {}", m.class);
        }
        trials += 1;
    }
    println!("ACCEPTANCE 9 PASS: per-class F1 exactly matches brute-force counting on {trials} random instances");
}

// ---------------------------------------------------------------------------
// Criterion 10: byte-identical artifacts under identical config + seed
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_run_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig {
        seed: 31,
        ..Default::default()
    };
    config.gen.train_temporal = 40;
    config.gen.train_box = 30;
    config.gen.train_match = 30;
    config.gen.train_activity = 30;
    config.gen.demos_per_kind = 50;
    config.gen.eval_per_kind = 40;
    config.sft.epochs = 8;
    config.grpo.iterations = 15;
    assert_eq!(head_shapes(&config).len(), 4);

    let run = |name: &str| {
        let mut c = config.clone();
        c.out_dir = dir.path().join(name).display().to_string();
        pipeline::cmd_pipeline(&c).unwrap();
        RunPaths::new(&c.out_dir)
    };
    let a = run("a");
    let b = run("b");
    for (pa, pb, label) in [
        (a.train_log(), b.train_log(), "train log"),
        (
            a.difficulty_report(),
            b.difficulty_report(),
            "difficulty report",
        ),
        (a.metrics_json(), b.metrics_json(), "metrics report"),
        (a.metrics_table(), b.metrics_table(), "metrics table"),
    ] {
        let bytes_a = std::fs::read(&pa).unwrap();
        let bytes_b = std::fs::read(&pb).unwrap();
        assert_eq!(bytes_a, bytes_b, "{label} differs between identical runs");
    }
    println!(
        "ACCEPTANCE 10 PASS: train log, difficulty report, and metrics report \
         byte-identical across two identical runs"
    );
}
