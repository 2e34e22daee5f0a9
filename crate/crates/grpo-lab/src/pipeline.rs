//! Pipeline stages: generate -> sft -> filter -> grpo -> eval.
//!
//! Each stage reads files written by earlier stages and writes its own
//! outputs atomically (temp file + rename), never mutating its inputs. Every
//! stage also drops a resolved-config snapshot next to its outputs.

use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};

use crate::candidates::TaskKind;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::evaluate_policy;
use crate::grpo::train_grpo;
use crate::policy::{HeadShape, Policy};
use crate::seed::derive_seed;
use crate::sft::{loss_log_csv, oracle_demos, sft_train, Demonstration};
use crate::tasks::{
    difficulty_filter, difficulty_report_csv, gen_activity, gen_box, gen_match, gen_temporal,
    gen_trivial_match, gen_unsolvable_match, read_dataset, write_dataset, TaskSample,
};

/// Write `bytes` to `path` atomically: parent directories are created, the
/// data goes to a sibling temp file, and a rename makes it visible.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    if !parent.as_os_str().is_empty() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Canonical file layout of one run directory.
pub struct RunPaths {
    pub out_dir: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &str) -> Self {
        Self {
            out_dir: PathBuf::from(out_dir),
        }
    }

    pub fn train_set(&self) -> PathBuf {
        self.out_dir.join("train.jsonl")
    }
    pub fn demos(&self) -> PathBuf {
        self.out_dir.join("demos.jsonl")
    }
    pub fn eval_set(&self) -> PathBuf {
        self.out_dir.join("eval.jsonl")
    }
    pub fn sft_policy(&self) -> PathBuf {
        self.out_dir.join("sft_policy.json")
    }
    pub fn sft_loss(&self) -> PathBuf {
        self.out_dir.join("sft_loss.csv")
    }
    pub fn filtered_set(&self) -> PathBuf {
        self.out_dir.join("filtered.jsonl")
    }
    pub fn difficulty_report(&self) -> PathBuf {
        self.out_dir.join("difficulty.csv")
    }
    pub fn grpo_policy(&self) -> PathBuf {
        self.out_dir.join("grpo_policy.json")
    }
    pub fn train_log(&self) -> PathBuf {
        self.out_dir.join("train_log.csv")
    }
    pub fn metrics_json(&self) -> PathBuf {
        self.out_dir.join("metrics.json")
    }
    pub fn metrics_table(&self) -> PathBuf {
        self.out_dir.join("metrics.txt")
    }
    pub fn confusion_csv(&self) -> PathBuf {
        self.out_dir.join("confusion.csv")
    }
    pub fn config_snapshot(&self) -> PathBuf {
        self.out_dir.join("config_used.toml")
    }
}

/// Head shapes implied by the generation config; shared by every stage so
/// checkpoints and datasets stay consistent.
pub fn head_shapes(config: &ExperimentConfig) -> Vec<(TaskKind, HeadShape)> {
    let g = &config.gen;
    let classes = g.activity_classes.len();
    vec![
        (
            TaskKind::Temporal,
            HeadShape {
                k: g.temporal_bins * (g.temporal_bins - 1),
                dim: 3,
            },
        ),
        (
            TaskKind::Box,
            HeadShape {
                k: g.box_grid * g.box_grid + 1,
                dim: 3,
            },
        ),
        (
            TaskKind::Match,
            HeadShape {
                k: g.match_k,
                dim: g.match_k + 1,
            },
        ),
        (
            TaskKind::Activity,
            HeadShape {
                k: classes,
                dim: classes + 1,
            },
        ),
    ]
}

fn write_config_snapshot(config: &ExperimentConfig, paths: &RunPaths) -> Result<()> {
    atomic_write(&paths.config_snapshot(), config.to_toml()?.as_bytes())
}

fn write_demos(demos: &[Demonstration], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for demo in demos {
        serde_json::to_writer(&mut buf, demo)?;
        buf.push(b'\n');
    }
    atomic_write(path, &buf)
}

fn read_demos(path: &Path) -> Result<Vec<Demonstration>> {
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "demonstrations {} not found",
            path.display()
        )));
    }
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn generate_mixed(
    config: &ExperimentConfig,
    seed: u64,
    per_kind: usize,
) -> Result<Vec<TaskSample>> {
    let g = &config.gen;
    let mut out = gen_temporal(per_kind, seed, g.noise, g.temporal_bins, g.horizon)?;
    out.extend(gen_box(per_kind, seed, g.noise, g.box_grid, g.box_size)?);
    out.extend(gen_match(per_kind, seed, g.match_k, g.noise)?);
    out.extend(gen_activity(per_kind, seed, &g.activity_classes, g.noise)?);
    Ok(out)
}

/// Stage 1: write the RL training set, the SFT demonstrations, and the
/// held-out evaluation set.
pub fn cmd_gen(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let paths = RunPaths::new(&config.out_dir);
    let g = &config.gen;

    let train_seed = derive_seed(config.seed, "gen-train");
    let mut train = gen_temporal(
        g.train_temporal,
        train_seed,
        g.noise,
        g.temporal_bins,
        g.horizon,
    )?;
    train.extend(gen_box(
        g.train_box,
        train_seed,
        g.noise,
        g.box_grid,
        g.box_size,
    )?);
    train.extend(gen_match(g.train_match, train_seed, g.match_k, g.noise)?);
    train.extend(gen_activity(
        g.train_activity,
        train_seed,
        &g.activity_classes,
        g.noise,
    )?);
    train.extend(gen_trivial_match(g.train_trivial, train_seed, g.match_k)?);
    train.extend(gen_unsolvable_match(
        g.train_unsolvable,
        train_seed,
        g.match_k,
    )?);
    write_dataset(&train, &paths.train_set())?;

    let demo_samples = generate_mixed(
        config,
        derive_seed(config.seed, "gen-demos"),
        g.demos_per_kind,
    )?;
    let demos = oracle_demos(&demo_samples, &config.reward)?;
    write_demos(&demos, &paths.demos())?;

    let eval = generate_mixed(
        config,
        derive_seed(config.seed, "gen-eval"),
        g.eval_per_kind,
    )?;
    write_dataset(&eval, &paths.eval_set())?;

    write_config_snapshot(config, &paths)?;
    log::info!(
        "gen: {} train, {} demos, {} eval samples -> {}",
        train.len(),
        demos.len(),
        eval.len(),
        config.out_dir
    );
    Ok(())
}

/// Stage 2: cross-entropy training on the demonstrations, starting from a
/// uniform policy. Writes the checkpoint that later seeds GRPO.
pub fn cmd_sft(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let paths = RunPaths::new(&config.out_dir);
    let demos = read_demos(&paths.demos())?;
    let init = Policy::uniform(&head_shapes(config));
    let mut sft_config = config.sft.clone();
    sft_config.seed = derive_seed(config.seed, "sft");
    let (policy, losses) = sft_train(&sft_config, &demos, init)?;
    policy.save(&paths.sft_policy())?;
    atomic_write(&paths.sft_loss(), loss_log_csv(&losses).as_bytes())?;
    write_config_snapshot(config, &paths)?;
    log::info!(
        "sft: {} demos, final loss {:.6}",
        demos.len(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Stage 3: probe every training sample with the SFT policy and keep those
/// inside the difficulty band.
pub fn cmd_filter(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let paths = RunPaths::new(&config.out_dir);
    let train = read_dataset(&paths.train_set())?;
    let probe = Policy::load(&paths.sft_policy())?;
    let (kept, reports) = difficulty_filter(
        &train,
        &probe,
        config.filter.group_size,
        config.filter.lo,
        config.filter.hi,
        &config.reward,
        derive_seed(config.seed, "filter"),
    )?;
    write_dataset(&kept, &paths.filtered_set())?;
    atomic_write(
        &paths.difficulty_report(),
        difficulty_report_csv(&reports).as_bytes(),
    )?;
    write_config_snapshot(config, &paths)?;
    log::info!("filter: kept {}/{} samples", kept.len(), train.len());
    Ok(())
}

/// Stage 4: GRPO on the filtered set, initialized from (and KL-anchored to)
/// the SFT checkpoint.
pub fn cmd_grpo(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let paths = RunPaths::new(&config.out_dir);
    let dataset = read_dataset(&paths.filtered_set())?;
    let init = Policy::load(&paths.sft_policy())?;
    let mut grpo_config = config.grpo.clone();
    grpo_config.seed = derive_seed(config.seed, "grpo");
    let (policy, train_log) = train_grpo(&grpo_config, &config.reward, &dataset, init)?;
    policy.save(&paths.grpo_policy())?;
    train_log.write_csv(&paths.train_log())?;
    write_config_snapshot(config, &paths)?;
    if let (Some(first), Some(last)) = (train_log.records.first(), train_log.records.last()) {
        log::info!(
            "grpo: mean reward {:.4} -> {:.4} over {} iterations",
            first.mean_reward,
            last.mean_reward,
            train_log.records.len()
        );
    }
    Ok(())
}

/// Stage 5: score the trained policy on the held-out set and emit the
/// metrics report (JSON + table) and the activity confusion matrix.
pub fn cmd_eval(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    let paths = RunPaths::new(&config.out_dir);
    let eval_set = read_dataset(&paths.eval_set())?;
    let policy = Policy::load(&paths.grpo_policy())?;
    let report = evaluate_policy(
        &policy,
        &eval_set,
        config.eval.decode,
        derive_seed(config.seed, "eval"),
        &config.reward,
    )?;
    atomic_write(&paths.metrics_json(), report.to_json()?.as_bytes())?;
    atomic_write(&paths.metrics_table(), report.render_table().as_bytes())?;
    if let Some(cm) = &report.confusion {
        atomic_write(&paths.confusion_csv(), cm.to_csv().as_bytes())?;
    }
    write_config_snapshot(config, &paths)?;
    log::info!("eval: macro F1 {:.4}", report.macro_f1);
    Ok(())
}

/// All five stages in order, reusing the intermediate artifacts on disk.
pub fn cmd_pipeline(config: &ExperimentConfig) -> Result<()> {
    cmd_gen(config)?;
    cmd_sft(config)?;
    cmd_filter(config)?;
    cmd_grpo(config)?;
    cmd_eval(config)?;
    Ok(())
}
