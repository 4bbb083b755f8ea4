//! Response parsing and rule-based verifiable rewards: accuracy and format
//! rewards over think/answer tags, group-relative advantage normalization,
//! and a KL-penalty estimator.

use std::collections::BTreeSet;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{normalize_text, McqItem};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

/// A model response split into its tagged segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think: Option<String>,
    pub answer: Option<String>,
    pub raw: String,
    /// True iff the whole text, modulo outer whitespace, is exactly one
    /// think pair followed by one answer pair.
    pub strict_format_ok: bool,
}

/// Inner text of the last well-formed `open..close` pair: the last close tag
/// paired with the nearest preceding open tag.
fn last_tag_pair(text: &str, open: &str, close: &str) -> Option<String> {
    let close_idx = text.rfind(close)?;
    let open_idx = text[..close_idx].rfind(open)?;
    Some(text[open_idx + open.len()..close_idx].to_string())
}

fn strict_format(text: &str) -> bool {
    let t = text.trim();
    let Some(rest) = t.strip_prefix(THINK_OPEN) else {
        return false;
    };
    let Some(tc) = rest.find(THINK_CLOSE) else {
        return false;
    };
    let think_inner = &rest[..tc];
    let between = &rest[tc + THINK_CLOSE.len()..];
    let Some(rest2) = between.trim_start().strip_prefix(ANSWER_OPEN) else {
        return false;
    };
    let Some(ac) = rest2.find(ANSWER_CLOSE) else {
        return false;
    };
    let answer_inner = &rest2[..ac];
    let tail = &rest2[ac + ANSWER_CLOSE.len()..];
    if !tail.trim().is_empty() {
        return false;
    }
    // Exactly one pair of each tag: no stray tags inside either segment.
    for tag in [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE] {
        if think_inner.contains(tag) || answer_inner.contains(tag) {
            return false;
        }
    }
    true
}

/// Decompose a raw response. Absent tags yield absent fields; multiple pairs
/// resolve last-wins.
pub fn parse_response(text: &str) -> ParsedResponse {
    ParsedResponse {
        think: last_tag_pair(text, THINK_OPEN, THINK_CLOSE),
        answer: last_tag_pair(text, ANSWER_OPEN, ANSWER_CLOSE),
        raw: text.to_string(),
        strict_format_ok: strict_format(text),
    }
}

/// How the format reward is judged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatMode {
    /// Whole response is exactly one think pair then one answer pair.
    #[default]
    Strict,
    /// Both tag pairs are present somewhere in the response.
    Lenient,
}

/// Binary format reward under the strict rule.
pub fn format_reward(parsed: &ParsedResponse) -> u8 {
    format_reward_with_mode(parsed, FormatMode::Strict)
}

pub fn format_reward_with_mode(parsed: &ParsedResponse, mode: FormatMode) -> u8 {
    let ok = match mode {
        FormatMode::Strict => parsed.strict_format_ok,
        FormatMode::Lenient => parsed.think.is_some() && parsed.answer.is_some(),
    };
    ok as u8
}

/// Answer-matching rule for the accuracy reward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    /// Answer equals the correct label, "label: text", or the correct
    /// option's text (all after normalization).
    #[default]
    LetterOrText,
    /// Answer's set of "Frame N" mentions equals the correct option's set
    /// exactly (free-form same-image answers).
    ExactSet,
}

static FRAME_MENTION: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)frame\s+(\d+)").unwrap());

/// The set of frame numbers mentioned in `text`.
pub fn frame_mentions(text: &str) -> BTreeSet<u64> {
    FRAME_MENTION
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

/// Binary accuracy reward by string matching against the presented item.
pub fn accuracy_reward(parsed: &ParsedResponse, item: &McqItem, mode: AnswerMode) -> u8 {
    let Some(answer) = parsed.answer.as_deref() else {
        return 0;
    };
    let norm = normalize_text(answer);
    if norm.is_empty() {
        return 0;
    }
    let correct = item.correct_option();
    let hit = match mode {
        AnswerMode::LetterOrText => {
            let label = normalize_text(&correct.label.to_string());
            let labelled = normalize_text(&format!("{}: {}", correct.label, correct.text));
            let text = normalize_text(&correct.text);
            norm == label || norm == labelled || norm == text
        }
        AnswerMode::ExactSet => {
            let truth = frame_mentions(&correct.text);
            !truth.is_empty() && frame_mentions(&norm) == truth
        }
    };
    hit as u8
}

/// Relative weight of the two rule-based rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub accuracy: f64,
    pub format: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            accuracy: 1.0,
            format: 0.1,
        }
    }
}

/// Weighted sum of the binary rewards.
pub fn total_reward(accuracy: u8, format: u8, weights: RewardWeights) -> f64 {
    weights.accuracy * accuracy as f64 + weights.format * format as f64
}

/// Both rule-based rewards for one response, plus their weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: u8,
    pub format: u8,
    pub total: f64,
    pub weights: RewardWeights,
}

/// Parse and fully score one response against an item.
pub fn score_response(
    text: &str,
    item: &McqItem,
    answer_mode: AnswerMode,
    format_mode: FormatMode,
    weights: RewardWeights,
) -> RewardBreakdown {
    let parsed = parse_response(text);
    let accuracy = accuracy_reward(&parsed, item, answer_mode);
    let format = format_reward_with_mode(&parsed, format_mode);
    RewardBreakdown {
        accuracy,
        format,
        total: total_reward(accuracy, format, weights),
        weights,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("GRPO group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("logprob sequences differ in length: {policy} vs {reference}")]
    LengthMismatch { policy: usize, reference: usize },
    #[error("logprob sequences are empty")]
    EmptySequence,
}

/// Population std below this makes a group degenerate (all-tie cohort).
pub const DEGENERACY_EPSILON: f64 = 1e-12;

/// Group-standardized advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages {
    pub advantages: Vec<f64>,
    pub mean: f64,
    pub pop_std: f64,
    pub degenerate: bool,
}

/// Standardize rewards within one cohort: `A_i = (R_i - mean) / pop_std`.
/// Cohorts whose population std falls below `epsilon` are degenerate and get
/// all-zero advantages.
pub fn grpo_advantages(rewards: &[f64], epsilon: f64) -> Result<GroupAdvantages, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let pop_std = var.sqrt();
    if pop_std < epsilon {
        return Ok(GroupAdvantages {
            advantages: vec![0.0; rewards.len()],
            mean,
            pop_std,
            degenerate: true,
        });
    }
    Ok(GroupAdvantages {
        advantages: rewards.iter().map(|r| (r - mean) / pop_std).collect(),
        mean,
        pop_std,
        degenerate: false,
    })
}

/// A cohort of rewarded responses for one question, with its advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardedGroup {
    pub question_id: String,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub degenerate: bool,
}

impl RewardedGroup {
    pub fn from_rewards(
        question_id: impl Into<String>,
        rewards: Vec<f64>,
    ) -> Result<Self, RewardError> {
        let adv = grpo_advantages(&rewards, DEGENERACY_EPSILON)?;
        Ok(Self {
            question_id: question_id.into(),
            rewards,
            advantages: adv.advantages,
            degenerate: adv.degenerate,
        })
    }
}

/// Non-negative per-token KL estimate between policy and frozen reference:
/// mean over tokens of `exp(r) - r - 1` with `r = ref_logprob - policy_logprob`.
pub fn kl_penalty(policy_logprobs: &[f64], ref_logprobs: &[f64]) -> Result<f64, RewardError> {
    if policy_logprobs.len() != ref_logprobs.len() {
        return Err(RewardError::LengthMismatch {
            policy: policy_logprobs.len(),
            reference: ref_logprobs.len(),
        });
    }
    if policy_logprobs.is_empty() {
        return Err(RewardError::EmptySequence);
    }
    let sum: f64 = policy_logprobs
        .iter()
        .zip(ref_logprobs)
        .map(|(p, r)| {
            let d = r - p;
            d.exp() - d - 1.0
        })
        .sum();
    Ok(sum / policy_logprobs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Source;
    use crate::rng::SeededRng;

    fn item_abcd() -> McqItem {
        McqItem::new(
            "q",
            Source::Av,
            "m",
            "What happens next?",
            vec![
                "turn right".into(),
                "turn left".into(),
                "change to right lane".into(),
                "change to left lane".into(),
            ],
            1,
        )
        .unwrap()
    }

    fn binary_aot() -> McqItem {
        McqItem::new(
            "a",
            Source::Aot,
            "clip",
            "Forward or backward?",
            vec!["forward".into(), "backward".into()],
            1,
        )
        .unwrap()
    }

    #[test]
    fn parse_canonical_response() {
        let p = parse_response("<think>t</think> <answer>A</answer>");
        assert_eq!(p.think.as_deref(), Some("t"));
        assert_eq!(p.answer.as_deref(), Some("A"));
        assert!(p.strict_format_ok);
    }

    #[test]
    fn parse_untagged_response() {
        let p = parse_response("The answer is A");
        assert_eq!(p.think, None);
        assert_eq!(p.answer, None);
        assert!(!p.strict_format_ok);
    }

    #[test]
    fn parse_last_answer_wins() {
        let p = parse_response("<answer>A</answer> x <answer>B</answer>");
        assert_eq!(p.answer.as_deref(), Some("B"));
        assert!(!p.strict_format_ok);
    }

    #[test]
    fn parse_unclosed_tags_yield_none() {
        assert_eq!(parse_response("<answer>A").answer, None);
        assert_eq!(parse_response("A</answer>").answer, None);
    }

    #[test]
    fn strict_rejects_answer_before_think() {
        let p = parse_response("<answer>A</answer><think>t</think>");
        assert_eq!(format_reward(&p), 0);
        assert_eq!(format_reward_with_mode(&p, FormatMode::Lenient), 1);
    }

    #[test]
    fn strict_rejects_trailing_prose() {
        let p = parse_response("<think>t</think><answer>A</answer> therefore A");
        assert_eq!(format_reward(&p), 0);
    }

    #[test]
    fn strict_rejects_duplicate_tags() {
        let p = parse_response("<think>a</think><think>b</think><answer>A</answer>");
        assert!(!p.strict_format_ok);
        let p = parse_response("<think>t</think><answer>A</answer><answer>B</answer>");
        assert!(!p.strict_format_ok);
    }

    #[test]
    fn strict_allows_outer_and_inner_whitespace() {
        let p = parse_response("  <think>\n reasoning \n</think>\n\n<answer> B </answer>\n");
        assert!(p.strict_format_ok);
        assert_eq!(format_reward(&p), 1);
    }

    #[test]
    fn format_one_implies_both_segments_recovered() {
        for text in [
            "<think>t</think><answer>A</answer>",
            " <think>x</think> <answer>no</answer> ",
        ] {
            let p = parse_response(text);
            if format_reward(&p) == 1 {
                assert!(p.think.is_some() && p.answer.is_some());
            }
        }
    }

    #[test]
    fn accuracy_matches_letter() {
        let item = item_abcd();
        let p = parse_response("<think>.</think><answer>B</answer>");
        assert_eq!(accuracy_reward(&p, &item, AnswerMode::LetterOrText), 1);
    }

    #[test]
    fn accuracy_rejects_option_refusal() {
        let item = item_abcd();
        let p = parse_response("<answer>the answer is none</answer>");
        assert_eq!(accuracy_reward(&p, &item, AnswerMode::LetterOrText), 0);
    }

    #[test]
    fn accuracy_normalizes_punctuation_and_case() {
        let item = item_abcd();
        for ans in ["b.", "B", " b ", "B!"] {
            let p = parse_response(&format!("<answer>{ans}</answer>"));
            assert_eq!(
                accuracy_reward(&p, &item, AnswerMode::LetterOrText),
                1,
                "{ans}"
            );
        }
    }

    #[test]
    fn accuracy_matches_option_text_and_labelled_form() {
        let item = binary_aot();
        for ans in ["backward", "Backward.", "B: backward"] {
            let p = parse_response(&format!("<answer>{ans}</answer>"));
            assert_eq!(
                accuracy_reward(&p, &item, AnswerMode::LetterOrText),
                1,
                "{ans}"
            );
        }
        let p = parse_response("<answer>forward</answer>");
        assert_eq!(accuracy_reward(&p, &item, AnswerMode::LetterOrText), 0);
    }

    #[test]
    fn accuracy_absent_answer_is_zero() {
        let item = item_abcd();
        let p = parse_response("B");
        assert_eq!(accuracy_reward(&p, &item, AnswerMode::LetterOrText), 0);
    }

    #[test]
    fn accuracy_exact_set_mode() {
        let item = McqItem::new(
            "s",
            Source::Puzzle,
            "img",
            "Which frames share the image?",
            vec![
                "Frame 3, Frame 7, Frame 19".into(),
                "Frame 2, Frame 7, Frame 19".into(),
                "Frame 3, Frame 8, Frame 19".into(),
                "Frame 4, Frame 5, Frame 6".into(),
            ],
            0,
        )
        .unwrap();
        let hit = parse_response("<answer>Same image: Frame 19, Frame 3, Frame 7</answer>");
        assert_eq!(accuracy_reward(&hit, &item, AnswerMode::ExactSet), 1);
        let missing = parse_response("<answer>Frame 3, Frame 7</answer>");
        assert_eq!(accuracy_reward(&missing, &item, AnswerMode::ExactSet), 0);
        let extra = parse_response("<answer>Frame 3, Frame 7, Frame 19, Frame 2</answer>");
        assert_eq!(accuracy_reward(&extra, &item, AnswerMode::ExactSet), 0);
    }

    #[test]
    fn total_reward_examples() {
        let w = RewardWeights::default();
        assert!((total_reward(1, 1, w) - 1.1).abs() < 1e-12);
        assert!((total_reward(0, 1, w) - 0.1).abs() < 1e-12);
        let no_format = RewardWeights {
            accuracy: 1.0,
            format: 0.0,
        };
        assert!((total_reward(1, 0, no_format) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn advantages_two_element_group() {
        let g = grpo_advantages(&[1.0, 0.0], DEGENERACY_EPSILON).unwrap();
        assert!(!g.degenerate);
        assert!((g.advantages[0] - 1.0).abs() < 1e-12);
        assert!((g.advantages[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn advantages_three_element_group() {
        let g = grpo_advantages(&[1.0, 0.0, 0.0], DEGENERACY_EPSILON).unwrap();
        let want = [1.414214, -0.707107, -0.707107];
        for (a, w) in g.advantages.iter().zip(want) {
            assert!((a - w).abs() < 1e-6, "got {a}, want {w}");
        }
    }

    #[test]
    fn degenerate_group_zeroes_out() {
        let g = grpo_advantages(&[0.5, 0.5, 0.5], DEGENERACY_EPSILON).unwrap();
        assert!(g.degenerate);
        assert!(g.advantages.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn group_too_small_rejected() {
        assert_eq!(
            grpo_advantages(&[1.0], DEGENERACY_EPSILON).unwrap_err(),
            RewardError::GroupTooSmall(1)
        );
    }

    #[test]
    fn advantages_standardized_over_random_groups() {
        let mut rng = SeededRng::new(2024);
        for _ in 0..500 {
            let n = 2 + rng.gen_index(63);
            let rewards: Vec<f64> = (0..n).map(|_| rng.next_f64() * 3.0 - 1.0).collect();
            let g = grpo_advantages(&rewards, DEGENERACY_EPSILON).unwrap();
            if g.degenerate {
                continue;
            }
            let mean: f64 = g.advantages.iter().sum::<f64>() / n as f64;
            let var: f64 = g.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 1e-9);
            assert!((var.sqrt() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn advantages_invariant_under_positive_affine_transform() {
        let mut rng = SeededRng::new(77);
        for _ in 0..200 {
            let n = 2 + rng.gen_index(30);
            let rewards: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let a = 0.1 + rng.next_f64() * 5.0;
            let b = rng.next_f64() * 10.0 - 5.0;
            let transformed: Vec<f64> = rewards.iter().map(|r| a * r + b).collect();
            let g1 = grpo_advantages(&rewards, DEGENERACY_EPSILON).unwrap();
            let g2 = grpo_advantages(&transformed, DEGENERACY_EPSILON).unwrap();
            assert_eq!(g1.degenerate, g2.degenerate);
            for (x, y) in g1.advantages.iter().zip(&g2.advantages) {
                assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn kl_identical_sequences_is_zero() {
        let lp = vec![-0.5, -1.2, -0.01];
        assert_eq!(kl_penalty(&lp, &lp).unwrap(), 0.0);
    }

    #[test]
    fn kl_constant_shift_closed_form() {
        for n in [1usize, 5, 64] {
            let policy = vec![-1.0; n];
            let reference = vec![-0.9; n];
            let got = kl_penalty(&policy, &reference).unwrap();
            let want = 0.1f64.exp() - 1.1;
            assert!((got - want).abs() < 1e-7, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = SeededRng::new(31);
        for _ in 0..200 {
            let n = 1 + rng.gen_index(32);
            let policy: Vec<f64> = (0..n).map(|_| -3.0 * rng.next_f64()).collect();
            let reference: Vec<f64> = (0..n).map(|_| -3.0 * rng.next_f64()).collect();
            assert!(kl_penalty(&policy, &reference).unwrap() >= 0.0);
        }
    }

    #[test]
    fn kl_error_paths() {
        assert_eq!(
            kl_penalty(&[0.0], &[0.0, 0.0]).unwrap_err(),
            RewardError::LengthMismatch {
                policy: 1,
                reference: 2
            }
        );
        assert_eq!(
            kl_penalty(&[], &[]).unwrap_err(),
            RewardError::EmptySequence
        );
    }

    #[test]
    fn accuracy_survives_option_shuffle_for_text_answers() {
        let item = binary_aot();
        let mut rng = SeededRng::new(5);
        for _ in 0..50 {
            let shuffled = crate::dataset::shuffle_options(&item, &mut rng);
            let p = parse_response("<answer>backward</answer>");
            assert_eq!(accuracy_reward(&p, &shuffled, AnswerMode::LetterOrText), 1);
        }
    }
}
