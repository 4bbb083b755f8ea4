//! Benchmark evaluation: the multi-inference protocol (n runs at fixed
//! temperature/top-p), per-source and per-category accuracy aggregation, and
//! report rendering.

use std::collections::{BTreeMap, BTreeSet};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{label_for, shuffle_options, McqItem, Source};
use crate::ontology::Category;
use crate::reward::{accuracy_reward, parse_response, AnswerMode, ParsedResponse};
use crate::rng::SeededRng;
use crate::rollout::{generate_batch, ChatMessage, CompletionBackend, GenerationRequest};

/// Instruction appended to every posed question.
pub const ANSWER_FORMAT_INSTRUCTION: &str = "Please answer the question in the following \
    format: <think> your reasoning </think> <answer> your answer </answer>.";

/// How to pull an answer out of a raw response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    /// Only a well-formed `<answer>` tag counts.
    TaggedOnly,
    /// Tagged answer if present, else the last standalone option letter in
    /// the response. Baselines prompted zero-shot rarely emit tags.
    #[default]
    Lenient,
}

/// Evaluation protocol parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRunSpec {
    pub n_runs: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub answer_mode: AnswerMode,
    pub extraction: ExtractionMode,
    /// Shuffle options per item with seed `base_seed + run`; off by default
    /// (manifest order).
    pub shuffle: bool,
    pub base_seed: u64,
}

impl Default for EvalRunSpec {
    fn default() -> Self {
        Self {
            n_runs: 5,
            temperature: 0.6,
            top_p: 0.95,
            max_tokens: 1024,
            answer_mode: AnswerMode::LetterOrText,
            extraction: ExtractionMode::Lenient,
            shuffle: false,
            base_seed: 0,
        }
    }
}

/// Accuracy tallies for one inference run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub per_source: BTreeMap<String, f64>,
    pub per_category: BTreeMap<String, f64>,
    pub correct: usize,
    pub total: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCounts {
    pub items: usize,
    pub runs: usize,
    pub errored_responses: usize,
}

/// Aggregated evaluation outcome. All accuracies are fractions in [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_run: Vec<RunSummary>,
    pub per_source_mean: BTreeMap<String, f64>,
    pub per_category_mean: BTreeMap<String, f64>,
    /// Unweighted mean over per-category means when the benchmark is a
    /// single tagged source, else over per-source means.
    pub overall: f64,
    pub counts: EvalCounts,
    pub config: EvalRunSpec,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("benchmark has no items")]
    EmptyBenchmark,
}

static STANDALONE_LETTER: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b([A-F])\b").unwrap());

/// Extract the effective answer from a raw response. In lenient mode an
/// untagged response falls back to its last standalone uppercase option
/// letter.
pub fn extract_answer(raw: &str, item: &McqItem, mode: ExtractionMode) -> ParsedResponse {
    let mut parsed = parse_response(raw);
    if parsed.answer.is_none() && mode == ExtractionMode::Lenient {
        let max_label = label_for(item.options.len() - 1);
        parsed.answer = STANDALONE_LETTER
            .captures_iter(raw)
            .filter_map(|c| {
                let letter = c[1].chars().next().unwrap();
                (letter <= max_label).then(|| letter.to_string())
            })
            .last();
    }
    parsed
}

/// Render the user prompt for an item: question, options line, and the
/// think/answer format instruction.
pub fn render_prompt(item: &McqItem) -> String {
    let options = item
        .options
        .iter()
        .map(|o| format!("{}: {}", o.label, o.text))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "{}\n\n{}\n\n{}",
        item.question, options, ANSWER_FORMAT_INSTRUCTION
    )
}

fn score_one(raw: &str, item: &McqItem, spec: &EvalRunSpec) -> u8 {
    let parsed = extract_answer(raw, item, spec.extraction);
    accuracy_reward(&parsed, item, spec.answer_mode)
}

fn categories_of(item: &McqItem) -> BTreeSet<Category> {
    item.common_sense_tags
        .as_deref()
        .unwrap_or_default()
        .iter()
        .map(|t| t.category())
        .collect()
}

/// Run the full evaluation protocol over `items`.
///
/// Each run poses every item once; responses are scored with the accuracy
/// reward; per-source (and per-category, for tagged items) accuracies are
/// averaged over runs. Errored items score 0 and are counted. The report is
/// deterministic for a fixed backend, spec, and seed.
pub fn run_eval(
    items: &[McqItem],
    spec: &EvalRunSpec,
    backend: &dyn CompletionBackend,
    max_in_flight: usize,
) -> Result<EvalReport, HarnessError> {
    if items.is_empty() {
        return Err(HarnessError::EmptyBenchmark);
    }
    let mut per_run = Vec::with_capacity(spec.n_runs);
    let mut errored_responses = 0;
    for run in 0..spec.n_runs {
        let presented: Vec<McqItem> = if spec.shuffle {
            let mut rng = SeededRng::new(spec.base_seed.wrapping_add(run as u64));
            items.iter().map(|i| shuffle_options(i, &mut rng)).collect()
        } else {
            items.to_vec()
        };
        let requests: Vec<GenerationRequest> = presented
            .iter()
            .map(|item| GenerationRequest {
                request_id: format!("{}#r{run}", item.id),
                messages: vec![ChatMessage::user(render_prompt(item))],
                temperature: spec.temperature,
                top_p: spec.top_p,
                max_tokens: spec.max_tokens,
                n_samples: 1,
                logprobs: false,
            })
            .collect();
        let results = generate_batch(backend, max_in_flight, &requests);

        let mut source_hits: BTreeMap<Source, (usize, usize)> = BTreeMap::new();
        let mut category_hits: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
        let mut correct = 0;
        let mut errored = 0;
        for (item, result) in presented.iter().zip(&results) {
            let score = match result {
                Ok(completions) => score_one(&completions[0].text, item, spec),
                Err(err) => {
                    log::warn!("item {} errored: {err}", item.id);
                    errored += 1;
                    0
                }
            };
            correct += score as usize;
            let s = source_hits.entry(item.source).or_insert((0, 0));
            s.0 += score as usize;
            s.1 += 1;
            for cat in categories_of(item) {
                let c = category_hits.entry(cat).or_insert((0, 0));
                c.0 += score as usize;
                c.1 += 1;
            }
        }
        errored_responses += errored;
        per_run.push(RunSummary {
            run,
            per_source: source_hits
                .iter()
                .map(|(s, (hit, total))| {
                    (s.machine_name().to_string(), *hit as f64 / *total as f64)
                })
                .collect(),
            per_category: category_hits
                .iter()
                .map(|(c, (hit, total))| {
                    (c.machine_name().to_string(), *hit as f64 / *total as f64)
                })
                .collect(),
            correct,
            total: presented.len(),
            errored,
        });
    }

    let mean_over_runs = |pick: fn(&RunSummary) -> &BTreeMap<String, f64>| {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for summary in &per_run {
            for (key, value) in pick(summary) {
                let slot = acc.entry(key.clone()).or_insert((0.0, 0));
                slot.0 += value;
                slot.1 += 1;
            }
        }
        acc.into_iter()
            .map(|(k, (sum, n))| (k, sum / n as f64))
            .collect::<BTreeMap<String, f64>>()
    };
    let per_source_mean = mean_over_runs(|r| &r.per_source);
    let per_category_mean = mean_over_runs(|r| &r.per_category);
    let overall = overall_mean(&per_source_mean, &per_category_mean);

    Ok(EvalReport {
        per_run,
        per_source_mean,
        per_category_mean,
        overall,
        counts: EvalCounts {
            items: items.len(),
            runs: spec.n_runs,
            errored_responses,
        },
        config: spec.clone(),
    })
}

/// Unweighted mean across categories when the benchmark is one tagged
/// source, else across sources.
pub fn overall_mean(
    per_source_mean: &BTreeMap<String, f64>,
    per_category_mean: &BTreeMap<String, f64>,
) -> f64 {
    let columns = if per_source_mean.len() <= 1 && !per_category_mean.is_empty() {
        per_category_mean
    } else {
        per_source_mean
    };
    if columns.is_empty() {
        return 0.0;
    }
    columns.values().sum::<f64>() / columns.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

fn display_column(key: &str) -> String {
    for source in Source::ALL {
        if source.machine_name() == key {
            return source.display_name().to_string();
        }
    }
    for category in Category::ALL {
        if category.machine_name() == key {
            return category.display_name().to_string();
        }
    }
    key.to_string()
}

/// Position of a column in the canonical table layout: categories first in
/// ontology order, then sources in declaration order, then anything else.
fn canonical_rank(key: &str) -> usize {
    if let Some(i) = Category::ALL.iter().position(|c| c.machine_name() == key) {
        return i;
    }
    if let Some(i) = Source::ALL.iter().position(|s| s.machine_name() == key) {
        return 100 + i;
    }
    1000
}

/// Columns the rendered table should show: categories for a single tagged
/// source, sources otherwise. Ordered canonically, not alphabetically.
fn report_columns(report: &EvalReport) -> Vec<(String, f64)> {
    let map = if report.per_source_mean.len() <= 1 && !report.per_category_mean.is_empty() {
        &report.per_category_mean
    } else {
        &report.per_source_mean
    };
    let mut columns: Vec<(String, f64)> = map.iter().map(|(k, v)| (k.clone(), *v)).collect();
    columns.sort_by_key(|(k, _)| canonical_rank(k));
    columns
}

fn pct(value: f64) -> String {
    format!("{:.1}", value * 100.0)
}

/// Render a report as markdown, CSV, or JSON. Markdown and CSV show one row
/// of per-column accuracies plus the overall average, as percentages to one
/// decimal.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Markdown => {
            let columns = report_columns(report);
            let mut out = String::from("# Evaluation Report\n\n");
            out.push_str(&format!(
                "- items: {}, runs: {}, errored responses: {}\n",
                report.counts.items, report.counts.runs, report.counts.errored_responses
            ));
            out.push_str(&format!(
                "- temperature: {}, top_p: {}, extraction: {:?}\n\n",
                report.config.temperature, report.config.top_p, report.config.extraction
            ));
            let headers: Vec<String> = columns
                .iter()
                .map(|(k, _)| display_column(k))
                .chain(std::iter::once("Avg.".to_string()))
                .collect();
            out.push_str(&format!("| {} |\n", headers.join(" | ")));
            out.push_str(&format!("|{}\n", " --- |".repeat(headers.len())));
            if report.per_run.is_empty() || columns.is_empty() {
                let cells = vec!["n/a".to_string(); headers.len()];
                out.push_str(&format!("| {} |\n", cells.join(" | ")));
            } else {
                let cells: Vec<String> = columns
                    .iter()
                    .map(|(_, v)| pct(*v))
                    .chain(std::iter::once(pct(report.overall)))
                    .collect();
                out.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            out
        }
        ReportFormat::Csv => {
            let columns = report_columns(report);
            let headers: Vec<String> = columns
                .iter()
                .map(|(k, _)| display_column(k))
                .chain(std::iter::once("Avg.".to_string()))
                .collect();
            let mut out = headers.join(",");
            out.push('\n');
            if report.per_run.is_empty() || columns.is_empty() {
                out.push_str(&vec!["n/a"; headers.len()].join(","));
            } else {
                let cells: Vec<String> = columns
                    .iter()
                    .map(|(_, v)| pct(*v))
                    .chain(std::iter::once(pct(report.overall)))
                    .collect();
                out.push_str(&cells.join(","));
            }
            out.push('\n');
            out
        }
    }
}

/// Build a report directly from known column means; used to check the
/// averaging and rendering semantics against published rows.
pub fn report_from_means(
    per_source_mean: BTreeMap<String, f64>,
    per_category_mean: BTreeMap<String, f64>,
) -> EvalReport {
    let overall = overall_mean(&per_source_mean, &per_category_mean);
    EvalReport {
        per_run: vec![RunSummary {
            run: 0,
            per_source: per_source_mean.clone(),
            per_category: per_category_mean.clone(),
            correct: 0,
            total: 0,
            errored: 0,
        }],
        per_source_mean,
        per_category_mean,
        overall,
        counts: EvalCounts {
            items: 0,
            runs: 1,
            errored_responses: 0,
        },
        config: EvalRunSpec::default(),
    }
}

/// One response to score from a `score` input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub question_id: String,
    pub response_text: String,
}

/// Output line of the scoring pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreRecord {
    Response {
        question_id: String,
        sample_index: usize,
        #[serde(flatten)]
        breakdown: crate::reward::RewardBreakdown,
    },
    Group(crate::reward::RewardedGroup),
}

/// Score a stream of responses against their items and build per-question
/// reward groups (in order of first appearance). Groups with fewer than two
/// responses get no group record.
pub fn score_responses(
    responses: &[ResponseRecord],
    items: &BTreeMap<String, McqItem>,
    answer_mode: AnswerMode,
    format_mode: crate::reward::FormatMode,
    weights: crate::reward::RewardWeights,
) -> Result<Vec<ScoreRecord>, String> {
    let mut records = Vec::new();
    let mut group_order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for response in responses {
        let item = items
            .get(&response.question_id)
            .ok_or_else(|| format!("unknown question_id '{}'", response.question_id))?;
        let breakdown = crate::reward::score_response(
            &response.response_text,
            item,
            answer_mode,
            format_mode,
            weights,
        );
        let rewards = groups
            .entry(response.question_id.clone())
            .or_insert_with(|| {
                group_order.push(response.question_id.clone());
                Vec::new()
            });
        rewards.push(breakdown.total);
        records.push(ScoreRecord::Response {
            question_id: response.question_id.clone(),
            sample_index: rewards.len() - 1,
            breakdown,
        });
    }
    for question_id in group_order {
        let rewards = groups.remove(&question_id).unwrap();
        if rewards.len() < 2 {
            log::warn!(
                "question '{question_id}' has {} response(s); skipping group record",
                rewards.len()
            );
            continue;
        }
        let group = crate::reward::RewardedGroup::from_rewards(question_id, rewards)
            .expect("group size checked");
        records.push(ScoreRecord::Group(group));
    }
    Ok(records)
}
