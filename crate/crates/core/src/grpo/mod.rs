//! Simulated GRPO post-training loop: dataloader, rollout, reward,
//! reference, policy-update stub, and weight-sync stages, with per-iteration
//! metrics and a resumable checkpoint. Policy updates are recorded as JSONL,
//! never executed.

mod dispatch;

pub use dispatch::{progressive_dispatch, DispatchReport, JobTiming, LatencyModel, ScheduleStats};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{sample_rl_batch, shuffle_options, DatasetError, McqItem, Source};
use crate::harness::render_prompt;
use crate::reward::{
    kl_penalty, score_response, AnswerMode, FormatMode, RewardWeights, RewardedGroup,
};
use crate::rng::SeededRng;
use crate::rollout::{generate_batch, ChatMessage, CompletionBackend, GenerationRequest};

fn default_batch_questions() -> usize {
    128
}
fn default_group_size() -> usize {
    9
}
fn default_max_tokens() -> u32 {
    6144
}
fn default_learning_rate() -> f64 {
    4e-6
}
fn default_kl_coefficient() -> f64 {
    0.005
}
fn default_iterations() -> usize {
    500
}
fn default_accuracy_weight() -> f64 {
    1.0
}
fn default_format_weight() -> f64 {
    0.1
}
fn default_shuffle() -> bool {
    true
}
fn default_temperature() -> f64 {
    1.0
}
fn default_top_p() -> f64 {
    1.0
}

/// Loop hyperparameters. The learning rate and KL coefficient are recorded
/// in every metrics and update record; no parameter math happens here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub batch_questions: usize,
    pub group_size: usize,
    pub max_tokens: u32,
    pub learning_rate: f64,
    pub kl_coefficient: f64,
    pub iterations: usize,
    pub accuracy_weight: f64,
    pub format_weight: f64,
    pub shuffle: bool,
    pub temperature: f64,
    pub top_p: f64,
    pub answer_mode: AnswerMode,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            batch_questions: default_batch_questions(),
            group_size: default_group_size(),
            max_tokens: default_max_tokens(),
            learning_rate: default_learning_rate(),
            kl_coefficient: default_kl_coefficient(),
            iterations: default_iterations(),
            accuracy_weight: default_accuracy_weight(),
            format_weight: default_format_weight(),
            shuffle: default_shuffle(),
            temperature: default_temperature(),
            top_p: default_top_p(),
            answer_mode: AnswerMode::LetterOrText,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.group_size < 2 {
            return Err(LoopError::InvalidConfig(
                "group_size must be at least 2 (GRPO needs a cohort)".to_string(),
            ));
        }
        if self.batch_questions < 1 {
            return Err(LoopError::InvalidConfig(
                "batch_questions must be at least 1".to_string(),
            ));
        }
        if self.iterations < 1 {
            return Err(LoopError::InvalidConfig(
                "iterations must be at least 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn weights(&self) -> RewardWeights {
        RewardWeights {
            accuracy: self.accuracy_weight,
            format: self.format_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Dataloader,
    Rollout,
    Reward,
    Reference,
    PolicyUpdate,
    WeightSync,
}

/// One pipeline stage's span on the loop clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub stage: Stage,
    pub start: f64,
    pub end: f64,
    /// Items, completions, or bytes moved, depending on the stage.
    pub payload: usize,
}

/// Per-iteration observability record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_total_reward: f64,
    pub accuracy_rate: f64,
    pub format_rate: f64,
    pub mean_abs_advantage: f64,
    pub degenerate_group_fraction: f64,
    /// Absent when no reference logprobs were available; never zero-filled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_kl: Option<f64>,
    pub per_source_counts: BTreeMap<String, usize>,
    pub errored_groups: usize,
    pub learning_rate: f64,
    pub kl_coefficient: f64,
    pub wall_seconds: f64,
    pub simulated_idle_seconds: f64,
}

/// What a trainer would consume for one question group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyUpdateRecord {
    pub iteration: usize,
    pub question_id: String,
    pub advantages: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_kl: Option<f64>,
    pub lr: f64,
    pub kl_coefficient: f64,
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("invalid loop config: {0}")]
    InvalidConfig(String),
    #[error("invalid dispatch bounds: need 1 <= min_fill ({min_fill}) <= max_in_flight ({max_in_flight}) <= jobs ({jobs})")]
    InvalidBounds {
        min_fill: usize,
        max_in_flight: usize,
        jobs: usize,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint at {path}: {message}; refusing to resume")]
    CorruptCheckpoint { path: PathBuf, message: String },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Time source for stage events and wall metrics. The tick clock makes loop
/// output byte-reproducible in tests.
pub trait Clock {
    fn now(&mut self) -> f64;
}

pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Deterministic clock: advances a fixed step per reading.
pub struct TickClock {
    t: f64,
    step: f64,
}

impl TickClock {
    pub fn new(step: f64) -> Self {
        Self { t: 0.0, step }
    }
}

impl Clock for TickClock {
    fn now(&mut self) -> f64 {
        self.t += self.step;
        self.t
    }
}

/// Run one RL iteration: sample a batch, roll out `group_size` completions
/// per question, score and standardize rewards, estimate KL when reference
/// logprobs are available, record the policy update, and emit a weight-sync
/// event.
///
/// Rollout failures mark the affected group degenerate-with-error; its
/// completions are excluded from reward-rate metrics but the group still
/// counts toward the degenerate fraction.
#[allow(clippy::too_many_arguments)]
pub fn run_iteration(
    config: &LoopConfig,
    sources: &BTreeMap<Source, Vec<McqItem>>,
    policy: &dyn CompletionBackend,
    reference: Option<&dyn CompletionBackend>,
    max_in_flight: usize,
    rng: &mut SeededRng,
    iteration: usize,
    update_sink: &mut dyn Write,
    clock: &mut dyn Clock,
) -> Result<(IterationMetrics, Vec<StageEvent>), LoopError> {
    config.validate()?;
    let mut events = Vec::with_capacity(6);
    let iter_start = clock.now();

    // Dataloader: equal-probability source sampling plus per-item shuffle.
    let mut batch = sample_rl_batch(sources, config.batch_questions, rng)?;
    if config.shuffle {
        batch = batch.iter().map(|i| shuffle_options(i, rng)).collect();
    }
    let dataloader_end = clock.now();
    events.push(StageEvent {
        stage: Stage::Dataloader,
        start: iter_start,
        end: dataloader_end,
        payload: batch.len(),
    });

    // Rollout: one request per question, group_size samples each.
    let want_logprobs = reference.is_some();
    let requests: Vec<GenerationRequest> = batch
        .iter()
        .enumerate()
        .map(|(slot, item)| GenerationRequest {
            request_id: format!("{}#i{iteration}s{slot}", item.id),
            messages: vec![ChatMessage::user(render_prompt(item))],
            temperature: config.temperature,
            top_p: config.top_p,
            max_tokens: config.max_tokens,
            n_samples: config.group_size as u32,
            logprobs: want_logprobs,
        })
        .collect();
    let results = generate_batch(policy, max_in_flight, &requests);
    let completions_received: usize = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(Vec::len)
        .sum();
    let rollout_end = clock.now();
    events.push(StageEvent {
        stage: Stage::Rollout,
        start: dataloader_end,
        end: rollout_end,
        payload: completions_received,
    });

    // Reward: parse, score, and standardize per cohort.
    let weights = config.weights();
    let mut groups: Vec<RewardedGroup> = Vec::with_capacity(batch.len());
    let mut accuracy_hits = 0usize;
    let mut format_hits = 0usize;
    let mut scored = 0usize;
    let mut total_reward_sum = 0.0;
    let mut errored_groups = 0usize;
    let mut per_source_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (item, result) in batch.iter().zip(&results) {
        *per_source_counts
            .entry(item.source.machine_name().to_string())
            .or_insert(0) += 1;
        match result {
            Ok(completions) => {
                let rewards: Vec<f64> = completions
                    .iter()
                    .map(|c| {
                        let b = score_response(
                            &c.text,
                            item,
                            config.answer_mode,
                            FormatMode::Strict,
                            weights,
                        );
                        accuracy_hits += b.accuracy as usize;
                        format_hits += b.format as usize;
                        total_reward_sum += b.total;
                        scored += 1;
                        b.total
                    })
                    .collect();
                groups.push(
                    RewardedGroup::from_rewards(item.id.clone(), rewards)
                        .expect("group_size >= 2 validated"),
                );
            }
            Err(err) => {
                log::warn!("rollout failed for {}: {err}", item.id);
                errored_groups += 1;
                groups.push(RewardedGroup {
                    question_id: item.id.clone(),
                    rewards: Vec::new(),
                    advantages: vec![0.0; config.group_size],
                    degenerate: true,
                });
            }
        }
    }
    let reward_end = clock.now();
    events.push(StageEvent {
        stage: Stage::Reward,
        start: rollout_end,
        end: reward_end,
        payload: scored,
    });

    // Reference: KL only when both passes carry logprobs; skipped otherwise.
    let mut group_kls: Vec<Option<f64>> = vec![None; groups.len()];
    let mut kl_values: Vec<f64> = Vec::new();
    if let Some(reference_backend) = reference {
        let ref_requests: Vec<GenerationRequest> = requests
            .iter()
            .map(|r| GenerationRequest {
                request_id: format!("{}#ref", r.request_id),
                logprobs: true,
                ..r.clone()
            })
            .collect();
        let ref_results = generate_batch(reference_backend, max_in_flight, &ref_requests);
        for (slot, (policy_result, ref_result)) in results.iter().zip(&ref_results).enumerate() {
            let (Ok(policy_completions), Ok(ref_completions)) = (policy_result, ref_result) else {
                continue;
            };
            let mut kls = Vec::new();
            for (p, q) in policy_completions.iter().zip(ref_completions) {
                if let (Some(plp), Some(rlp)) = (&p.token_logprobs, &q.token_logprobs) {
                    if let Ok(kl) = kl_penalty(plp, rlp) {
                        kls.push(kl);
                    }
                }
            }
            if !kls.is_empty() {
                let mean = kls.iter().sum::<f64>() / kls.len() as f64;
                group_kls[slot] = Some(mean);
                kl_values.extend(kls);
            }
        }
    }
    let reference_end = clock.now();
    events.push(StageEvent {
        stage: Stage::Reference,
        start: reward_end,
        end: reference_end,
        payload: kl_values.len(),
    });

    // Policy-update stub: record what a trainer would consume.
    let mut bytes_written = 0usize;
    for (group, kl) in groups.iter().zip(&group_kls) {
        let record = PolicyUpdateRecord {
            iteration,
            question_id: group.question_id.clone(),
            advantages: group.advantages.clone(),
            mean_kl: *kl,
            lr: config.learning_rate,
            kl_coefficient: config.kl_coefficient,
        };
        let line = serde_json::to_string(&record)?;
        update_sink.write_all(line.as_bytes())?;
        update_sink.write_all(b"\n")?;
        bytes_written += line.len() + 1;
    }
    let update_end = clock.now();
    events.push(StageEvent {
        stage: Stage::PolicyUpdate,
        start: reference_end,
        end: update_end,
        payload: bytes_written,
    });

    // Weight sync strictly after the policy update.
    let sync_end = clock.now();
    events.push(StageEvent {
        stage: Stage::WeightSync,
        start: update_end,
        end: sync_end,
        payload: 0,
    });

    let degenerate = groups.iter().filter(|g| g.degenerate).count();
    let adv_abs_sum: f64 = groups
        .iter()
        .flat_map(|g| g.advantages.iter())
        .map(|a| a.abs())
        .sum();
    let adv_count: usize = groups.iter().map(|g| g.advantages.len()).sum();
    let metrics = IterationMetrics {
        iteration,
        mean_total_reward: if scored > 0 {
            total_reward_sum / scored as f64
        } else {
            0.0
        },
        accuracy_rate: if scored > 0 {
            accuracy_hits as f64 / scored as f64
        } else {
            0.0
        },
        format_rate: if scored > 0 {
            format_hits as f64 / scored as f64
        } else {
            0.0
        },
        mean_abs_advantage: if adv_count > 0 {
            adv_abs_sum / adv_count as f64
        } else {
            0.0
        },
        degenerate_group_fraction: degenerate as f64 / groups.len() as f64,
        mean_kl: if kl_values.is_empty() {
            None
        } else {
            Some(kl_values.iter().sum::<f64>() / kl_values.len() as f64)
        },
        per_source_counts,
        errored_groups,
        learning_rate: config.learning_rate,
        kl_coefficient: config.kl_coefficient,
        wall_seconds: sync_end - iter_start,
        simulated_idle_seconds: 0.0,
    };
    Ok((metrics, events))
}

/// Loop checkpoint: the next iteration to run and the RNG stream state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub next_iteration: usize,
    pub rng_state: u64,
}

/// Output locations for a loop run.
#[derive(Debug, Clone)]
pub struct LoopPaths {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub updates: PathBuf,
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub iterations_run: usize,
    pub total_iterations: usize,
}

fn load_checkpoint(path: &Path) -> Result<Option<Checkpoint>, LoopError> {
    if !path.exists() {
        return Ok(None);
    }
    let raw = std::fs::read_to_string(path)?;
    match serde_json::from_str::<Checkpoint>(&raw) {
        Ok(ckpt) => Ok(Some(ckpt)),
        Err(e) => Err(LoopError::CorruptCheckpoint {
            path: path.to_path_buf(),
            message: format!("{e} (line {}, column {})", e.line(), e.column()),
        }),
    }
}

fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), LoopError> {
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, serde_json::to_string(ckpt)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Drop any lines recorded for iterations >= `from`, keeping earlier ones.
/// Used on resume so a kill between a metrics write and a checkpoint write
/// cannot duplicate lines.
fn truncate_jsonl_from(path: &Path, from: usize, field: &str) -> Result<(), LoopError> {
    if !path.exists() {
        return Ok(());
    }
    let file = std::fs::File::open(path)?;
    let mut kept = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)?;
        let iter = value
            .get(field)
            .and_then(|v| v.as_u64())
            .unwrap_or(u64::MAX) as usize;
        if iter < from {
            kept.push(line);
        }
    }
    let mut out = kept.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Run (or resume) the full loop, emitting one metrics line per iteration.
///
/// A checkpoint carrying the next iteration and the RNG state is written
/// after every iteration; resuming reproduces exactly the stream an
/// uninterrupted run would have produced. A corrupt checkpoint refuses to
/// resume.
#[allow(clippy::too_many_arguments)]
pub fn run_loop(
    config: &LoopConfig,
    sources: &BTreeMap<Source, Vec<McqItem>>,
    policy: &dyn CompletionBackend,
    reference: Option<&dyn CompletionBackend>,
    max_in_flight: usize,
    seed: u64,
    paths: &LoopPaths,
    clock: &mut dyn Clock,
) -> Result<LoopOutcome, LoopError> {
    config.validate()?;
    let checkpoint = load_checkpoint(&paths.checkpoint)?;
    let (start, mut rng) = match checkpoint {
        Some(ckpt) => {
            log::info!("resuming from iteration {}", ckpt.next_iteration);
            (ckpt.next_iteration, SeededRng::new(ckpt.rng_state))
        }
        None => (0, SeededRng::new(seed)),
    };
    truncate_jsonl_from(&paths.metrics, start, "iteration")?;
    truncate_jsonl_from(&paths.updates, start, "iteration")?;

    let mut metrics_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&paths.metrics)?;
    let mut updates_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&paths.updates)?;

    let mut iterations_run = 0;
    for iteration in start..config.iterations {
        let (metrics, _events) = run_iteration(
            config,
            sources,
            policy,
            reference,
            max_in_flight,
            &mut rng,
            iteration,
            &mut updates_file,
            clock,
        )?;
        let line = serde_json::to_string(&metrics)?;
        metrics_file.write_all(line.as_bytes())?;
        metrics_file.write_all(b"\n")?;
        metrics_file.flush()?;
        updates_file.flush()?;
        write_checkpoint(
            &paths.checkpoint,
            &Checkpoint {
                next_iteration: iteration + 1,
                rng_state: rng.state(),
            },
        )?;
        iterations_run += 1;
        log::info!(
            "iteration {iteration}: reward {:.4}, accuracy {:.3}, degenerate {:.3}",
            metrics.mean_total_reward,
            metrics.accuracy_rate,
            metrics.degenerate_group_fraction
        );
    }
    Ok(LoopOutcome {
        iterations_run,
        total_iterations: config.iterations,
    })
}
