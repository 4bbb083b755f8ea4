//! Command-line front end: intuitive-physics task generation, manifest
//! validation, response scoring, benchmark evaluation, and the simulated
//! GRPO post-training loop.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Every subcommand
//! taking `--seed` is bit-reproducible for a fixed seed (loop timing fields
//! use the deterministic tick clock whenever the endpoint is a mock).

mod endpoints;
mod io_util;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use physrl_core::dataset::{validate_manifest, write_manifest, McqItem};
use physrl_core::fixtures;
use physrl_core::grpo::{run_loop, Clock, LoopConfig, LoopPaths, TickClock, WallClock};
use physrl_core::harness::{
    render_report, run_eval, EvalReport, EvalRunSpec, ExtractionMode, ReportFormat, ResponseRecord,
};
use physrl_core::reward::{AnswerMode, FormatMode, RewardWeights};
use physrl_core::rng::SeededRng;
use physrl_core::taskgen::{
    gen_aot_mcqs, gen_permanence_scene, gen_puzzle, permanence_to_mcq, split_into_patches,
    ClipRecord, Direction, PatchGrid, PermanenceConfig, Playback, PuzzleTask,
};

use endpoints::EndpointArgs;

#[derive(Parser)]
#[command(
    name = "physrl",
    version,
    about = "Verifiable-reward tooling for physical-AI reasoning models",
    max_term_width = 100
)]
struct Cli {
    /// Global RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Log level written to standard error.
    #[arg(long, global = true, default_value = "warn", value_parser = ["error", "warn", "info", "debug"])]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate intuitive-physics MCQ datasets.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Validate a benchmark manifest (header counts + item invariants).
    Validate(ValidateArgs),
    /// Score a responses file against its dataset; emit rewards and groups.
    Score(ScoreArgs),
    /// Evaluate an endpoint on a benchmark manifest.
    Eval(EvalArgs),
    /// Run the simulated GRPO post-training loop.
    Grpo(GrpoArgs),
    /// Re-render a saved evaluation report.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Spatial puzzles over shuffled 2x2 patches.
    Puzzle(GenPuzzleArgs),
    /// Forward/backward playback questions.
    Aot(GenAotArgs),
    /// Object-permanence scenes from synthesized occlusion logs.
    Permanence(GenPermanenceArgs),
    /// The full synthetic benchmark manifest (packaged per-source counts).
    Benchmark(GenBenchmarkArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output JSONL path (`-` for stdout).
    #[arg(long, default_value = "-")]
    out: String,
    /// Optional sidecar JSONL with hidden ground-truth provenance.
    #[arg(long)]
    truth: Option<String>,
}

#[derive(Args)]
struct GenPuzzleArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 7)]
    distractors: usize,
    #[arg(long, value_enum, default_value_t = TaskKind::Direction)]
    task: TaskKind,
    /// Fixed direction, or cycle through all four.
    #[arg(long, value_enum, default_value_t = DirectionArg::Cycle)]
    direction: DirectionArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskKind {
    Direction,
    Same2,
    Same3,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Left,
    Right,
    Top,
    Bottom,
    Cycle,
}

#[derive(Args)]
struct GenAotArgs {
    /// Number of clips to synthesize when no clip file is given.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Optional input clip records (JSONL of clip_id/playback/motion_summary).
    #[arg(long)]
    clips: Option<String>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct GenPermanenceArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 5)]
    objects: usize,
    #[arg(long, default_value_t = 0.8)]
    occlusion_prob: f64,
    #[arg(long, default_value_t = 0.35)]
    removal_prob: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct GenBenchmarkArgs {
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct ValidateArgs {
    /// Manifest path (`-` for stdin).
    #[arg(long)]
    manifest: String,
}

#[derive(Args)]
struct ScoreArgs {
    /// Responses JSONL: one {"question_id", "response_text"} per line.
    #[arg(long)]
    responses: String,
    /// Dataset JSONL (plain items or a manifest).
    #[arg(long)]
    dataset: String,
    /// Expected cohort size; deviations are logged.
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = AnswerModeArg::LetterOrText)]
    answer_mode: AnswerModeArg,
    #[arg(long, value_enum, default_value_t = FormatModeArg::Strict)]
    format_mode: FormatModeArg,
    #[arg(long, default_value_t = 1.0)]
    accuracy_weight: f64,
    #[arg(long, default_value_t = 0.1)]
    format_weight: f64,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnswerModeArg {
    LetterOrText,
    ExactSet,
}

impl From<AnswerModeArg> for AnswerMode {
    fn from(value: AnswerModeArg) -> Self {
        match value {
            AnswerModeArg::LetterOrText => AnswerMode::LetterOrText,
            AnswerModeArg::ExactSet => AnswerMode::ExactSet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatModeArg {
    Strict,
    Lenient,
}

impl From<FormatModeArg> for FormatMode {
    fn from(value: FormatModeArg) -> Self {
        match value {
            FormatModeArg::Strict => FormatMode::Strict,
            FormatModeArg::Lenient => FormatMode::Lenient,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: String,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 0.6)]
    temperature: f64,
    #[arg(long, default_value_t = 0.95)]
    top_p: f64,
    #[arg(long, default_value_t = 1024)]
    max_tokens: u32,
    /// Shuffle options per run with seed `seed + run`.
    #[arg(long, default_value_t = false)]
    shuffle: bool,
    #[arg(long, value_enum, default_value_t = AnswerModeArg::LetterOrText)]
    answer_mode: AnswerModeArg,
    #[arg(long, value_enum, default_value_t = ExtractionArg::Lenient)]
    extraction: ExtractionArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractionArg {
    Lenient,
    TaggedOnly,
}

impl From<ExtractionArg> for ExtractionMode {
    fn from(value: ExtractionArg) -> Self {
        match value {
            ExtractionArg::Lenient => ExtractionMode::Lenient,
            ExtractionArg::TaggedOnly => ExtractionMode::TaggedOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct GrpoArgs {
    /// TOML config mirroring the loop field names; flags override it.
    #[arg(long)]
    config: Option<String>,
    #[command(flatten)]
    endpoint: EndpointArgs,
    /// Reference endpoint for KL estimation (optional).
    #[arg(long)]
    reference_endpoint: Option<String>,
    /// Dataset JSONL(s); items are bucketed by their source field.
    #[arg(long, required = true)]
    dataset: Vec<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_questions: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    /// Metrics JSONL output path.
    #[arg(long, default_value = "metrics.jsonl")]
    out: PathBuf,
    #[arg(long, default_value = "loop.ckpt")]
    checkpoint: PathBuf,
    #[arg(long, default_value = "updates.jsonl")]
    updates: PathBuf,
    /// Clock for stage timings: tick is deterministic, wall is real time.
    /// Defaults to tick for mock endpoints, wall otherwise.
    #[arg(long, value_enum)]
    clock: Option<ClockArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Tick,
    Wall,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved JSON report (`-` for stdin).
    #[arg(long)]
    report: String,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    #[arg(long, default_value = "-")]
    out: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen(gen) => run_gen(gen, cli.seed),
        Command::Validate(args) => run_validate(args),
        Command::Score(args) => run_score(args),
        Command::Eval(args) => run_eval_cmd(args, cli.seed),
        Command::Grpo(args) => run_grpo(args, cli.seed),
        Command::Report(args) => run_report(args),
    }
}

const QUADRANT_NAMES: [&str; 4] = ["top left", "top right", "bottom left", "bottom right"];

const SCENE_MOTIFS: [&str; 8] = [
    "a man lifting a barbell in a gym",
    "a kitchen counter with steaming pots",
    "a snowy mountain trail",
    "a robot arm sorting produce",
    "a child stacking wooden blocks",
    "a busy intersection at dusk",
    "a workbench covered in tools",
    "a garden bed being watered",
];

fn synth_grid(image_id: String, motif: &str) -> PatchGrid {
    let descriptors: Vec<String> = QUADRANT_NAMES
        .iter()
        .map(|q| format!("{motif}, {q} quadrant"))
        .collect();
    split_into_patches(image_id, &descriptors).expect("four descriptors")
}

fn run_gen(gen: GenCommand, seed: u64) -> Result<ExitCode> {
    match gen {
        GenCommand::Puzzle(args) => {
            let mut items = Vec::with_capacity(args.count);
            let mut instances = Vec::with_capacity(args.count);
            for i in 0..args.count {
                let mut rng = SeededRng::derive(seed, "gen-puzzle", i as u64);
                let motif = SCENE_MOTIFS[i % SCENE_MOTIFS.len()];
                let target = synth_grid(format!("img-{i:05}-target"), motif);
                let distractors: Vec<PatchGrid> = (0..args.distractors)
                    .map(|d| {
                        synth_grid(
                            format!("img-{i:05}-d{d}"),
                            SCENE_MOTIFS[(i + d + 1) % SCENE_MOTIFS.len()],
                        )
                    })
                    .collect();
                let task = match args.task {
                    TaskKind::Same2 => PuzzleTask::SameImage(2),
                    TaskKind::Same3 => PuzzleTask::SameImage(3),
                    TaskKind::Direction => PuzzleTask::Direction(match args.direction {
                        DirectionArg::Left => Direction::Left,
                        DirectionArg::Right => Direction::Right,
                        DirectionArg::Top => Direction::Top,
                        DirectionArg::Bottom => Direction::Bottom,
                        DirectionArg::Cycle => Direction::ALL[i % 4],
                    }),
                };
                let mut instance = gen_puzzle(&target, &distractors, task, &mut rng)?;
                // Content hashes are unique per arrangement; prefix the
                // instance index so ids stay unique even on exact repeats.
                instance.mcq.id = format!("puzzle-{i:05}-{}", &instance.mcq.id[7..]);
                items.push(instance.mcq.clone());
                instances.push(instance);
            }
            let mut out = io_util::open_output(&args.out.out)?;
            io_util::write_jsonl_records(&mut *out, &items)?;
            if let Some(truth) = &args.out.truth {
                let mut sidecar = io_util::open_output(truth)?;
                io_util::write_jsonl_records(&mut *sidecar, &instances)?;
            }
            log::info!("generated {} puzzle items", items.len());
            Ok(ExitCode::SUCCESS)
        }
        GenCommand::Aot(args) => {
            let clips: Vec<ClipRecord> = match &args.clips {
                Some(path) => {
                    let raw = io_util::read_to_string(path)?;
                    raw.lines()
                        .filter(|l| !l.trim().is_empty())
                        .map(|l| serde_json::from_str(l).context("bad clip record"))
                        .collect::<Result<Vec<_>>>()?
                }
                None => (0..args.count)
                    .map(|i| ClipRecord {
                        clip_id: format!("clip-{i:05}"),
                        playback: Playback::Forward,
                        motion_summary: SCENE_MOTIFS[i % SCENE_MOTIFS.len()].to_string(),
                    })
                    .collect(),
            };
            let mut rng = SeededRng::new(seed);
            let items = gen_aot_mcqs(&clips, &mut rng);
            let mut out = io_util::open_output(&args.out.out)?;
            io_util::write_jsonl_records(&mut *out, &items)?;
            if let Some(truth) = &args.out.truth {
                // Recover the emitted playback from each item's correct text.
                let emitted: Vec<ClipRecord> = items
                    .iter()
                    .zip(&clips)
                    .map(|(item, clip)| ClipRecord {
                        clip_id: clip.clip_id.clone(),
                        playback: if item.correct_option().text == "forward" {
                            Playback::Forward
                        } else {
                            Playback::Backward
                        },
                        motion_summary: clip.motion_summary.clone(),
                    })
                    .collect();
                let mut sidecar = io_util::open_output(truth)?;
                io_util::write_jsonl_records(&mut *sidecar, &emitted)?;
            }
            log::info!("generated {} arrow-of-time items", items.len());
            Ok(ExitCode::SUCCESS)
        }
        GenCommand::Permanence(args) => {
            let config = PermanenceConfig {
                object_count: args.objects,
                occlusion_probability: args.occlusion_prob,
                removal_probability: args.removal_prob,
            };
            let mut items = Vec::with_capacity(args.count);
            let mut logs = Vec::with_capacity(args.count);
            for i in 0..args.count {
                let mut rng = SeededRng::derive(seed, "gen-permanence", i as u64);
                let log = gen_permanence_scene(&config, &mut rng);
                let mut mcq = permanence_to_mcq(&log)?;
                mcq.id = format!("perm-{i:05}-{}", &mcq.id[5..]);
                items.push(mcq);
                logs.push(log);
            }
            let mut out = io_util::open_output(&args.out.out)?;
            io_util::write_jsonl_records(&mut *out, &items)?;
            if let Some(truth) = &args.out.truth {
                let mut sidecar = io_util::open_output(truth)?;
                io_util::write_jsonl_records(&mut *sidecar, &logs)?;
            }
            log::info!("generated {} object-permanence items", items.len());
            Ok(ExitCode::SUCCESS)
        }
        GenCommand::Benchmark(args) => {
            let (header, items) = fixtures::synthetic_benchmark(seed);
            let mut out = io_util::open_output(&args.out)?;
            write_manifest(&mut *out, &header, &items)?;
            log::info!("generated benchmark manifest with {} items", items.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_validate(args: ValidateArgs) -> Result<ExitCode> {
    let input = io_util::open_input(&args.manifest)?;
    let report = validate_manifest(input)?;
    println!("total items: {}", report.total);
    for (source, count) in &report.per_source {
        println!("  {source}: {count}");
    }
    if report.is_valid() {
        println!("manifest OK");
        Ok(ExitCode::SUCCESS)
    } else {
        for m in &report.mismatches {
            println!(
                "count mismatch for {}: expected {}, found {}",
                m.source, m.expected, m.actual
            );
        }
        for v in &report.violations {
            println!("invalid item '{}' at line {}: {}", v.id, v.line, v.message);
        }
        Ok(ExitCode::from(1))
    }
}

fn run_score(args: ScoreArgs) -> Result<ExitCode> {
    let (_, items) = io_util::read_items_flexible(&args.dataset)?;
    for item in &items {
        item.validate()
            .with_context(|| format!("dataset item '{}'", item.id))?;
    }
    let items = io_util::items_by_id(items);
    let raw = io_util::read_to_string(&args.responses)?;
    let responses: Vec<ResponseRecord> = raw
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).context("bad response record"))
        .collect::<Result<Vec<_>>>()?;
    let weights = RewardWeights {
        accuracy: args.accuracy_weight,
        format: args.format_weight,
    };
    let records = physrl_core::harness::score_responses(
        &responses,
        &items,
        args.answer_mode.into(),
        args.format_mode.into(),
        weights,
    )
    .map_err(|e| anyhow::anyhow!(e))?;
    if let Some(expected) = args.group_size {
        for record in &records {
            if let physrl_core::harness::ScoreRecord::Group(group) = record {
                if group.rewards.len() != expected {
                    log::warn!(
                        "group '{}' has {} responses, expected {expected}",
                        group.question_id,
                        group.rewards.len()
                    );
                }
            }
        }
    }
    let mut out = io_util::open_output(&args.out)?;
    io_util::write_jsonl_records(&mut *out, &records)?;
    Ok(ExitCode::SUCCESS)
}

fn load_validated_manifest(path: &str) -> Result<Vec<McqItem>> {
    let (header, items) = io_util::read_items_flexible(path)?;
    for item in &items {
        item.validate()
            .with_context(|| format!("item '{}'", item.id))?;
    }
    if let Some(header) = header {
        let mut per_source: BTreeMap<physrl_core::dataset::Source, usize> = BTreeMap::new();
        for item in &items {
            *per_source.entry(item.source).or_insert(0) += 1;
        }
        for (source, expected) in &header.expected_counts {
            let actual = per_source.get(source).copied().unwrap_or(0);
            if actual != *expected {
                bail!("manifest count mismatch for {source}: expected {expected}, found {actual}");
            }
        }
    }
    Ok(items)
}

fn run_eval_cmd(args: EvalArgs, seed: u64) -> Result<ExitCode> {
    let items = load_validated_manifest(&args.manifest)?;
    let backend = args.endpoint.build(&items, seed)?;
    let spec = EvalRunSpec {
        n_runs: args.runs,
        temperature: args.temperature,
        top_p: args.top_p,
        max_tokens: args.max_tokens,
        answer_mode: args.answer_mode.into(),
        extraction: args.extraction.into(),
        shuffle: args.shuffle,
        base_seed: seed,
    };
    let report = run_eval(&items, &spec, backend.as_ref(), args.endpoint.max_in_flight)?;
    let rendered = render_report(&report, args.format.into());
    let mut out = io_util::open_output(&args.out)?;
    out.write_all(rendered.as_bytes())?;
    log::info!("overall accuracy {:.4}", report.overall);
    Ok(ExitCode::SUCCESS)
}

fn run_grpo(args: GrpoArgs, seed: u64) -> Result<ExitCode> {
    let mut config: LoopConfig = match &args.config {
        Some(path) => toml::from_str(&io_util::read_to_string(path)?)
            .with_context(|| format!("parsing {path}"))?,
        None => LoopConfig::default(),
    };
    if let Some(iterations) = args.iterations {
        config.iterations = iterations;
    }
    if let Some(batch) = args.batch_questions {
        config.batch_questions = batch;
    }
    if let Some(group) = args.group_size {
        config.group_size = group;
    }

    let mut all_items = Vec::new();
    for path in &args.dataset {
        let (_, items) = io_util::read_items_flexible(path)?;
        all_items.extend(items);
    }
    for item in &all_items {
        item.validate()
            .with_context(|| format!("item '{}'", item.id))?;
    }
    let sources = fixtures::sources_from_items(all_items.clone());

    let policy = args.endpoint.build(&all_items, seed)?;
    let reference = match &args.reference_endpoint {
        Some(url) => {
            let ref_args = EndpointArgs {
                endpoint: url.clone(),
                auth_env: args.endpoint.auth_env.clone(),
                timeout: args.endpoint.timeout,
                max_retries: args.endpoint.max_retries,
                backoff_base: args.endpoint.backoff_base,
                max_in_flight: args.endpoint.max_in_flight,
                model: args.endpoint.model.clone(),
            };
            Some(ref_args.build(&all_items, seed.wrapping_add(1))?)
        }
        None => None,
    };

    let is_mock = args.endpoint.endpoint.starts_with("mock://");
    let mut clock: Box<dyn Clock> = match args.clock {
        Some(ClockArg::Tick) => Box::new(TickClock::new(0.001)),
        Some(ClockArg::Wall) => Box::new(WallClock::new()),
        None if is_mock => Box::new(TickClock::new(0.001)),
        None => Box::new(WallClock::new()),
    };

    let paths = LoopPaths {
        metrics: args.out.clone(),
        checkpoint: args.checkpoint.clone(),
        updates: args.updates.clone(),
    };
    let outcome = run_loop(
        &config,
        &sources,
        policy.as_ref(),
        reference.as_deref(),
        args.endpoint.max_in_flight,
        seed,
        &paths,
        clock.as_mut(),
    )?;
    println!(
        "ran {} iteration(s) (total {}); metrics in {}",
        outcome.iterations_run,
        outcome.total_iterations,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_report(args: ReportArgs) -> Result<ExitCode> {
    let raw = io_util::read_to_string(&args.report)?;
    let report: EvalReport = serde_json::from_str(&raw).context("parsing report JSON")?;
    let rendered = render_report(&report, args.format.into());
    let mut out = io_util::open_output(&args.out)?;
    out.write_all(rendered.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}
