//! MCQ data model, JSONL persistence, deterministic option shuffling,
//! balance auditing, curation-text rewriting, and RL batch sampling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{CommonSenseTag, EmbodiedTag};
use crate::rng::SeededRng;

/// Where a question came from. Doubles as the per-source bucket key in
/// manifests, RL sampling, and evaluation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    CommonSense,
    BridgeV2,
    Robovqa,
    Robofail,
    Agibot,
    Holoassist,
    Av,
    Puzzle,
    Aot,
    ObjectPermanence,
}

impl Source {
    pub const ALL: [Source; 10] = [
        Source::CommonSense,
        Source::BridgeV2,
        Source::Robovqa,
        Source::Robofail,
        Source::Agibot,
        Source::Holoassist,
        Source::Av,
        Source::Puzzle,
        Source::Aot,
        Source::ObjectPermanence,
    ];

    pub fn machine_name(self) -> &'static str {
        match self {
            Source::CommonSense => "common_sense",
            Source::BridgeV2 => "bridge_v2",
            Source::Robovqa => "robovqa",
            Source::Robofail => "robofail",
            Source::Agibot => "agibot",
            Source::Holoassist => "holoassist",
            Source::Av => "av",
            Source::Puzzle => "puzzle",
            Source::Aot => "aot",
            Source::ObjectPermanence => "object_permanence",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Source::CommonSense => "Common Sense",
            Source::BridgeV2 => "BridgeData V2",
            Source::Robovqa => "RoboVQA",
            Source::Robofail => "RoboFail",
            Source::Agibot => "Agibot",
            Source::Holoassist => "HoloAssist",
            Source::Av => "AV",
            Source::Puzzle => "Spatial Puzzle",
            Source::Aot => "Arrow of Time",
            Source::ObjectPermanence => "Object Permanence",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.machine_name())
    }
}

/// Action-granularity level for embodied questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Action,
    Subtask,
    Goal,
}

/// One labelled answer option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqOption {
    pub label: char,
    pub text: String,
}

pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 6;

/// The label for option position `index` (0 -> 'A').
pub fn label_for(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// A multiple-choice question with a single correct answer.
///
/// `media_ref` is an opaque clip/image identifier; this crate never
/// dereferences it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub source: Source,
    pub media_ref: String,
    pub question: String,
    pub options: Vec<McqOption>,
    pub correct_label: char,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_sense_tags: Option<Vec<CommonSenseTag>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embodied_tag: Option<EmbodiedTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<Granularity>,
}

impl McqItem {
    /// Build an item from ordered option texts, labelling them A.. and
    /// validating all invariants.
    pub fn new(
        id: impl Into<String>,
        source: Source,
        media_ref: impl Into<String>,
        question: impl Into<String>,
        option_texts: Vec<String>,
        correct_index: usize,
    ) -> Result<Self, DatasetError> {
        let options: Vec<McqOption> = option_texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| McqOption {
                label: label_for(i),
                text,
            })
            .collect();
        let correct_label = label_for(correct_index);
        let item = Self {
            id: id.into(),
            source,
            media_ref: media_ref.into(),
            question: question.into(),
            options,
            correct_label,
            common_sense_tags: None,
            embodied_tag: None,
            granularity: None,
        };
        item.validate()?;
        Ok(item)
    }

    pub fn with_common_sense_tags(mut self, tags: Vec<CommonSenseTag>) -> Self {
        self.common_sense_tags = Some(tags);
        self
    }

    pub fn with_embodied_tag(mut self, tag: EmbodiedTag) -> Self {
        self.embodied_tag = Some(tag);
        self
    }

    pub fn with_granularity(mut self, granularity: Granularity) -> Self {
        self.granularity = Some(granularity);
        self
    }

    /// Check every item invariant; `Err` carries the first failure.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let n = self.options.len();
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&n) {
            return self.invalid(format!(
                "expected {MIN_OPTIONS}..={MAX_OPTIONS} options, found {n}"
            ));
        }
        for (i, opt) in self.options.iter().enumerate() {
            let want = label_for(i);
            if opt.label != want {
                return self.invalid(format!(
                    "option {i} labelled '{}', expected consecutive labels starting at 'A'",
                    opt.label
                ));
            }
        }
        if !self.options.iter().any(|o| o.label == self.correct_label) {
            return self.invalid(format!(
                "correct_label '{}' matches no option",
                self.correct_label
            ));
        }
        let mut seen: Vec<String> = Vec::with_capacity(n);
        for opt in &self.options {
            let norm = normalize_text(&opt.text);
            if seen.contains(&norm) {
                return self.invalid(format!(
                    "duplicate option text after normalization: '{norm}'"
                ));
            }
            seen.push(norm);
        }
        Ok(())
    }

    fn invalid(&self, message: String) -> Result<(), DatasetError> {
        Err(DatasetError::InvalidItem {
            id: self.id.clone(),
            message,
        })
    }

    /// The option holding the correct answer.
    pub fn correct_option(&self) -> &McqOption {
        self.options
            .iter()
            .find(|o| o.label == self.correct_label)
            .expect("validated item has a correct option")
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("item '{id}' violates invariants: {message}")]
    InvalidItem { id: String, message: String },
    #[error("empty input")]
    EmptyInput,
    #[error("all sources are empty")]
    AllSourcesEmpty,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Answer/option text normalization: trim, collapse whitespace, lowercase,
/// strip terminal punctuation.
pub fn normalize_text(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let lower = collapsed.to_lowercase();
    lower
        .trim_end_matches(|c: char| ".,;:!?".contains(c))
        .trim_end()
        .to_string()
}

/// Uniformly permute the option texts of `item`. Labels stay A.. in order;
/// `correct_label` follows the correct text to its new position. Everything
/// else is untouched.
pub fn shuffle_options(item: &McqItem, rng: &mut SeededRng) -> McqItem {
    let mut shuffled = item.clone();
    rng.shuffle(&mut shuffled.options);
    let new_correct = shuffled
        .options
        .iter()
        .position(|o| o.label == item.correct_label)
        .expect("correct option present");
    for (i, opt) in shuffled.options.iter_mut().enumerate() {
        opt.label = label_for(i);
    }
    shuffled.correct_label = label_for(new_correct);
    shuffled
}

/// Correct-answer position counts for one option-count bucket.
#[derive(Debug, Clone, Serialize)]
pub struct PositionBalance {
    /// counts[p] = how many items have their correct answer at position p.
    pub counts: Vec<usize>,
    pub total: usize,
    /// max over positions of |count/total - 1/k|.
    pub max_deviation: f64,
}

/// Balance audit over a set of items, bucketed by option count.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub buckets: BTreeMap<usize, PositionBalance>,
    pub total: usize,
    /// Worst deviation across all buckets.
    pub max_deviation: f64,
}

/// Count where the correct answer sits across `items`; flags skew that would
/// let a policy exploit a fixed answer slot.
pub fn balance_report(items: &[McqItem]) -> Result<BalanceReport, DatasetError> {
    if items.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let mut raw: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for item in items {
        let k = item.options.len();
        let pos = item
            .options
            .iter()
            .position(|o| o.label == item.correct_label)
            .expect("valid item");
        raw.entry(k).or_insert_with(|| vec![0; k])[pos] += 1;
    }
    let mut buckets = BTreeMap::new();
    let mut max_deviation = 0.0_f64;
    for (k, counts) in raw {
        let total: usize = counts.iter().sum();
        let uniform = 1.0 / k as f64;
        let dev = counts
            .iter()
            .map(|&c| (c as f64 / total as f64 - uniform).abs())
            .fold(0.0_f64, f64::max);
        max_deviation = max_deviation.max(dev);
        buckets.insert(
            k,
            PositionBalance {
                counts,
                total,
                max_deviation: dev,
            },
        );
    }
    Ok(BalanceReport {
        total: items.len(),
        buckets,
        max_deviation,
    })
}

static REWRITE_PHRASE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\bthe\s+(?:provided\s+)?(?:caption|description)s?\b").unwrap());
static RESIDUAL_WORD: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\b(?:caption|description)s?\b").unwrap());

/// Rewrite curation text so it refers to "the video" instead of the caption
/// or description it was generated from. Returns the rewritten text and a
/// residual flag set when a bare "caption"/"description" survives outside the
/// replaceable phrases.
pub fn rewrite_clean(text: &str) -> (String, bool) {
    let rewritten = REWRITE_PHRASE.replace_all(text, |caps: &regex::Captures<'_>| {
        if caps[0].starts_with('T') {
            "The video"
        } else {
            "the video"
        }
    });
    let residual = RESIDUAL_WORD.is_match(&rewritten);
    (rewritten.into_owned(), residual)
}

/// Draw `batch_size` items with replacement: first a source uniformly among
/// non-empty sources, then an item uniformly within it.
pub fn sample_rl_batch(
    sources: &BTreeMap<Source, Vec<McqItem>>,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<McqItem>, DatasetError> {
    let non_empty: Vec<(&Source, &Vec<McqItem>)> =
        sources.iter().filter(|(_, v)| !v.is_empty()).collect();
    if non_empty.is_empty() {
        return Err(DatasetError::AllSourcesEmpty);
    }
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let (_, pool) = non_empty[rng.gen_index(non_empty.len())];
        batch.push(pool[rng.gen_index(pool.len())].clone());
    }
    Ok(batch)
}

/// First line of a benchmark manifest: the expected per-source counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub expected_counts: BTreeMap<Source, usize>,
}

/// One expected-vs-actual count mismatch.
#[derive(Debug, Clone, Serialize)]
pub struct CountMismatch {
    pub source: Source,
    pub expected: usize,
    pub actual: usize,
}

/// One item that parsed but violates the MCQ invariants.
#[derive(Debug, Clone, Serialize)]
pub struct ItemViolation {
    pub line: usize,
    pub id: String,
    pub message: String,
}

/// Outcome of validating a manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestReport {
    pub per_source: BTreeMap<Source, usize>,
    pub total: usize,
    pub mismatches: Vec<CountMismatch>,
    pub violations: Vec<ItemViolation>,
}

impl ManifestReport {
    pub fn is_valid(&self) -> bool {
        self.mismatches.is_empty() && self.violations.is_empty()
    }
}

/// Write items as UTF-8 JSONL, one per line.
pub fn write_jsonl<W: Write>(mut w: W, items: &[McqItem]) -> Result<(), DatasetError> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| DatasetError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a plain item JSONL (no manifest header). Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<McqItem>, DatasetError> {
    let mut items = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let item: McqItem = serde_json::from_str(trimmed).map_err(|e| DatasetError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Write a manifest: header line followed by one item per line.
pub fn write_manifest<W: Write>(
    mut w: W,
    header: &ManifestHeader,
    items: &[McqItem],
) -> Result<(), DatasetError> {
    serde_json::to_writer(&mut w, header).map_err(|e| DatasetError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    w.write_all(b"\n")?;
    write_jsonl(w, items)
}

/// Parse a manifest into its header and items. Parse failures are hard
/// errors with a line number.
pub fn read_manifest<R: BufRead>(r: R) -> Result<(ManifestHeader, Vec<McqItem>), DatasetError> {
    let mut lines = r.lines().enumerate();
    let header: ManifestHeader = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                break serde_json::from_str(trimmed).map_err(|e| DatasetError::Parse {
                    line: idx + 1,
                    message: format!("manifest header: {e}"),
                })?;
            }
            None => {
                return Err(DatasetError::Parse {
                    line: 1,
                    message: "empty manifest: missing header line".to_string(),
                })
            }
        }
    };
    let mut items = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let item: McqItem = serde_json::from_str(trimmed).map_err(|e| DatasetError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok((header, items))
}

/// Validate a manifest: per-source counts against the header plus per-item
/// invariants.
pub fn validate_manifest<R: BufRead>(r: R) -> Result<ManifestReport, DatasetError> {
    let (header, items) = read_manifest(r)?;
    let mut per_source: BTreeMap<Source, usize> = BTreeMap::new();
    let mut violations = Vec::new();
    for (idx, item) in items.iter().enumerate() {
        *per_source.entry(item.source).or_insert(0) += 1;
        if let Err(DatasetError::InvalidItem { id, message }) = item.validate() {
            violations.push(ItemViolation {
                // Header occupies line 1; items start at line 2.
                line: idx + 2,
                id,
                message,
            });
        }
    }
    let mut mismatches = Vec::new();
    let mut keys: Vec<Source> = header.expected_counts.keys().copied().collect();
    for s in per_source.keys() {
        if !keys.contains(s) {
            keys.push(*s);
        }
    }
    keys.sort();
    for source in keys {
        let expected = header.expected_counts.get(&source).copied().unwrap_or(0);
        let actual = per_source.get(&source).copied().unwrap_or(0);
        if expected != actual {
            mismatches.push(CountMismatch {
                source,
                expected,
                actual,
            });
        }
    }
    Ok(ManifestReport {
        total: items.len(),
        per_source,
        mismatches,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_option_item(correct: usize) -> McqItem {
        McqItem::new(
            "q1",
            Source::CommonSense,
            "clip-001",
            "Which way does the ball roll?",
            vec![
                "left".to_string(),
                "right".to_string(),
                "up the slope".to_string(),
                "it stays put".to_string(),
            ],
            correct,
        )
        .unwrap()
    }

    fn binary_item() -> McqItem {
        McqItem::new(
            "b1",
            Source::ObjectPermanence,
            "scene-7",
            "Does the bowl reappear?",
            vec!["yes".to_string(), "no".to_string()],
            0,
        )
        .unwrap()
    }

    #[test]
    fn source_machine_names_are_stable() {
        for source in Source::ALL {
            let json = serde_json::to_string(&source).unwrap();
            assert_eq!(json, format!("\"{}\"", source.machine_name()));
        }
    }

    #[test]
    fn item_validation_catches_bad_shapes() {
        // Too few options.
        let err = McqItem::new("x", Source::Av, "m", "q", vec!["a".into()], 0).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidItem { .. }));
        // Duplicate texts after normalization.
        let err = McqItem::new(
            "x",
            Source::Av,
            "m",
            "q",
            vec!["Left".into(), "left.".into()],
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate option text"));
        // Non-consecutive labels.
        let mut item = binary_item();
        item.options[1].label = 'C';
        assert!(item.validate().is_err());
        // Correct label out of range.
        let mut item = binary_item();
        item.correct_label = 'D';
        assert!(item.validate().is_err());
    }

    #[test]
    fn shuffle_swap_seed_swaps_binary_item() {
        // Seed 3's first bounded draw is 0, which swaps a two-option item.
        let item = binary_item();
        let shuffled = shuffle_options(&item, &mut SeededRng::new(3));
        assert_eq!(shuffled.options[0].text, "no");
        assert_eq!(shuffled.options[1].text, "yes");
        assert_eq!(shuffled.correct_label, 'B');
        assert_eq!(shuffled.id, item.id);
        assert_eq!(shuffled.question, item.question);
    }

    #[test]
    fn shuffle_identity_seed_keeps_item_unchanged() {
        // Seed 0's first bounded draw is 1: the identity permutation on two.
        let item = binary_item();
        let shuffled = shuffle_options(&item, &mut SeededRng::new(0));
        assert_eq!(shuffled, item);
    }

    #[test]
    fn shuffle_preserves_text_multiset_and_correct_text() {
        let item = four_option_item(2);
        for seed in 0..500 {
            let shuffled = shuffle_options(&item, &mut SeededRng::new(seed));
            shuffled.validate().unwrap();
            let mut texts: Vec<&str> = shuffled.options.iter().map(|o| o.text.as_str()).collect();
            texts.sort_unstable();
            let mut orig: Vec<&str> = item.options.iter().map(|o| o.text.as_str()).collect();
            orig.sort_unstable();
            assert_eq!(texts, orig);
            assert_eq!(shuffled.correct_option().text, item.correct_option().text);
        }
    }

    #[test]
    fn balance_exactly_uniform() {
        let items: Vec<McqItem> = (0..4).map(four_option_item).collect();
        let report = balance_report(&items).unwrap();
        assert_eq!(report.total, 4);
        assert_eq!(report.max_deviation, 0.0);
        assert_eq!(report.buckets[&4].counts, vec![1, 1, 1, 1]);
    }

    #[test]
    fn balance_all_same_position() {
        let items: Vec<McqItem> = (0..4).map(|_| four_option_item(0)).collect();
        let report = balance_report(&items).unwrap();
        assert!((report.max_deviation - 0.75).abs() < 1e-12);
    }

    #[test]
    fn balance_single_item_is_one_minus_k_inverse() {
        for k in 2..=4 {
            let texts: Vec<String> = (0..k).map(|i| format!("opt {i}")).collect();
            let item = McqItem::new("s", Source::Av, "m", "q", texts, 0).unwrap();
            let report = balance_report(std::slice::from_ref(&item)).unwrap();
            let want = 1.0 - 1.0 / k as f64;
            assert!((report.max_deviation - want).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn balance_buckets_by_option_count() {
        let items = vec![binary_item(), four_option_item(1)];
        let report = balance_report(&items).unwrap();
        assert_eq!(report.buckets.len(), 2);
        assert_eq!(report.total, 2);
        assert_eq!(report.buckets[&2].total, 1);
        assert_eq!(report.buckets[&4].total, 1);
    }

    #[test]
    fn balance_rejects_empty_input() {
        assert!(matches!(balance_report(&[]), Err(DatasetError::EmptyInput)));
    }

    #[test]
    fn rewrite_replaces_caption_phrase() {
        let (text, residual) = rewrite_clean("Based on the caption, the man lifts the barbell.");
        assert_eq!(text, "Based on the video, the man lifts the barbell.");
        assert!(!residual);
    }

    #[test]
    fn rewrite_leaves_clean_text_alone() {
        let (text, residual) = rewrite_clean("The video shows a pot.");
        assert_eq!(text, "The video shows a pot.");
        assert!(!residual);
    }

    #[test]
    fn rewrite_flags_bare_residual_words() {
        let (text, residual) = rewrite_clean("Captions appear on screen.");
        assert_eq!(text, "Captions appear on screen.");
        assert!(residual);
    }

    #[test]
    fn rewrite_handles_provided_and_capitalized_forms() {
        let (text, residual) = rewrite_clean("The provided description mentions a dog.");
        assert_eq!(text, "The video mentions a dog.");
        assert!(!residual);
        let (text, residual) = rewrite_clean("See the descriptions above; the caption lies.");
        assert_eq!(text, "See the video above; the video lies.");
        assert!(!residual);
    }

    #[test]
    fn sample_single_source() {
        let mut sources = BTreeMap::new();
        sources.insert(
            Source::Puzzle,
            (0..5)
                .map(|i| {
                    McqItem::new(
                        format!("p{i}"),
                        Source::Puzzle,
                        "m",
                        "q",
                        vec![format!("a{i}"), format!("b{i}")],
                        0,
                    )
                    .unwrap()
                })
                .collect::<Vec<_>>(),
        );
        let batch = sample_rl_batch(&sources, 5, &mut SeededRng::new(1)).unwrap();
        assert_eq!(batch.len(), 5);
        assert!(batch.iter().all(|i| i.source == Source::Puzzle));
    }

    #[test]
    fn sample_rejects_all_empty() {
        let mut sources: BTreeMap<Source, Vec<McqItem>> = BTreeMap::new();
        sources.insert(Source::Puzzle, Vec::new());
        assert!(matches!(
            sample_rl_batch(&sources, 1, &mut SeededRng::new(0)),
            Err(DatasetError::AllSourcesEmpty)
        ));
    }

    #[test]
    fn sample_splits_evenly_across_sources() {
        let mut sources = BTreeMap::new();
        // Deliberately unequal pool sizes: selection is per-source uniform.
        for (source, pool) in [
            (Source::Aot, 100usize),
            (Source::Puzzle, 10),
            (Source::ObjectPermanence, 1000),
        ] {
            sources.insert(
                source,
                (0..pool)
                    .map(|i| {
                        McqItem::new(
                            format!("{}-{i}", source.machine_name()),
                            source,
                            "m",
                            "q",
                            vec![format!("a{i}"), format!("b{i}")],
                            0,
                        )
                        .unwrap()
                    })
                    .collect::<Vec<_>>(),
            );
        }
        let batch = sample_rl_batch(&sources, 9000, &mut SeededRng::new(17)).unwrap();
        let mut counts: BTreeMap<Source, i64> = BTreeMap::new();
        for item in &batch {
            *counts.entry(item.source).or_insert(0) += 1;
        }
        // 3 sigma of a Multinomial(9000, 1/3) component is ~134; the pinned
        // tolerance is 180.
        for (source, count) in counts {
            assert!(
                (count - 3000).abs() <= 180,
                "{source}: {count} outside 3000 +- 180"
            );
        }
    }

    #[test]
    fn sample_full_batch_from_nine_sources() {
        let mut sources = BTreeMap::new();
        for source in [
            Source::CommonSense,
            Source::BridgeV2,
            Source::Robovqa,
            Source::Agibot,
            Source::Holoassist,
            Source::Av,
            Source::Puzzle,
            Source::Aot,
            Source::ObjectPermanence,
        ] {
            sources.insert(
                source,
                (0..5)
                    .map(|i| {
                        McqItem::new(
                            format!("{}-{i}", source.machine_name()),
                            source,
                            "m",
                            "q",
                            vec![format!("a{i}"), format!("b{i}")],
                            0,
                        )
                        .unwrap()
                    })
                    .collect::<Vec<_>>(),
            );
        }
        let batch = sample_rl_batch(&sources, 128, &mut SeededRng::new(0)).unwrap();
        assert_eq!(batch.len(), 128);
    }

    #[test]
    fn sample_is_reproducible() {
        let mut sources = BTreeMap::new();
        for (si, source) in [Source::Aot, Source::Puzzle, Source::Robovqa]
            .into_iter()
            .enumerate()
        {
            sources.insert(
                source,
                (0..10)
                    .map(|i| {
                        McqItem::new(
                            format!("{source:?}-{si}-{i}"),
                            source,
                            "m",
                            "q",
                            vec![format!("a{i}"), format!("b{i}")],
                            0,
                        )
                        .unwrap()
                    })
                    .collect::<Vec<_>>(),
            );
        }
        let a = sample_rl_batch(&sources, 64, &mut SeededRng::new(9)).unwrap();
        let b = sample_rl_batch(&sources, 64, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jsonl_round_trip() {
        let items = vec![binary_item(), four_option_item(3)];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &items).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(items, back);
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let items = vec![binary_item(), four_option_item(0)];
        let mut header = ManifestHeader::default();
        header.expected_counts.insert(Source::ObjectPermanence, 1);
        header.expected_counts.insert(Source::CommonSense, 1);
        let mut buf = Vec::new();
        write_manifest(&mut buf, &header, &items).unwrap();
        let report = validate_manifest(buf.as_slice()).unwrap();
        assert!(report.is_valid());
        assert_eq!(report.total, 2);
    }

    #[test]
    fn manifest_count_mismatch_reported() {
        let items = vec![binary_item()];
        let mut header = ManifestHeader::default();
        header.expected_counts.insert(Source::ObjectPermanence, 2);
        let mut buf = Vec::new();
        write_manifest(&mut buf, &header, &items).unwrap();
        let report = validate_manifest(buf.as_slice()).unwrap();
        assert!(!report.is_valid());
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].expected, 2);
        assert_eq!(report.mismatches[0].actual, 1);
    }

    #[test]
    fn manifest_duplicate_label_is_item_violation() {
        let mut item = binary_item();
        item.options[1].label = 'A';
        let mut header = ManifestHeader::default();
        header.expected_counts.insert(Source::ObjectPermanence, 1);
        let mut buf = Vec::new();
        serde_json::to_writer(&mut buf, &header).unwrap();
        buf.push(b'\n');
        serde_json::to_writer(&mut buf, &item).unwrap();
        buf.push(b'\n');
        let report = validate_manifest(buf.as_slice()).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].id, "b1");
    }

    #[test]
    fn manifest_parse_error_carries_line_number() {
        let data = b"{\"expected_counts\":{}}\nnot json\n";
        let err = validate_manifest(&data[..]).unwrap_err();
        match err {
            DatasetError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn normalize_text_examples() {
        assert_eq!(normalize_text("b."), "b");
        assert_eq!(normalize_text("  B  "), "b");
        assert_eq!(normalize_text("The  Answer!"), "the answer");
        assert_eq!(normalize_text("frame 3, frame 7"), "frame 3, frame 7");
    }
}
