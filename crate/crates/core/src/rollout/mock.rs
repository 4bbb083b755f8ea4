//! In-process mock endpoint with two behaviors: scripted fixture replay and
//! a rigged responder that answers correctly with a configured probability.
//! Fully deterministic given (seed, request id, sample index), with a
//! concurrency gauge for in-flight-limit tests.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use super::{Completion, CompletionBackend, FinishReason, GenerationRequest, RolloutError};
use crate::dataset::McqItem;
use crate::rng::SeededRng;
use crate::taskgen::fnv1a64 as fnv;

/// Per-question key the rigged mode needs: the option labels, the correct
/// label in the item's stored order, and the correct option's text (so the
/// mock can locate the right letter when a prompt presents shuffled options).
#[derive(Debug, Clone)]
pub struct AnswerKey {
    pub labels: Vec<char>,
    pub correct: char,
    pub correct_text: String,
}

enum Behavior {
    Scripted,
    Rigged { p: f64 },
}

pub struct MockEndpoint {
    behavior: Behavior,
    seed: u64,
    fixtures: BTreeMap<u64, String>,
    answer_key: BTreeMap<String, AnswerKey>,
    logprob_len: Option<usize>,
    latency: Option<Duration>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    completions_served: AtomicUsize,
    requests_served: AtomicUsize,
}

impl MockEndpoint {
    /// Replay canned responses keyed by a hash of the last user message.
    pub fn scripted(seed: u64) -> Self {
        Self::new(Behavior::Scripted, seed)
    }

    /// Answer correctly with probability `p` per (question, seed, sample),
    /// in strict think/answer format with the chosen option letter.
    pub fn rigged(p: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&p), "p must be in [0, 1]");
        Self::new(Behavior::Rigged { p }, seed)
    }

    fn new(behavior: Behavior, seed: u64) -> Self {
        Self {
            behavior,
            seed,
            fixtures: BTreeMap::new(),
            answer_key: BTreeMap::new(),
            logprob_len: None,
            latency: None,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            completions_served: AtomicUsize::new(0),
            requests_served: AtomicUsize::new(0),
        }
    }

    /// Script the response for requests whose last user message is `message`.
    pub fn with_fixture(mut self, message: &str, response: &str) -> Self {
        self.fixtures
            .insert(fnv(message.as_bytes()), response.to_string());
        self
    }

    /// Load the rigged answer key from a set of items.
    pub fn with_answer_key(mut self, items: &[McqItem]) -> Self {
        for item in items {
            self.answer_key.insert(
                item.id.clone(),
                AnswerKey {
                    labels: item.options.iter().map(|o| o.label).collect(),
                    correct: item.correct_label,
                    correct_text: item.correct_option().text.clone(),
                },
            );
        }
        self
    }

    /// Emit deterministic fake token logprobs of this length.
    pub fn with_logprobs(mut self, len: usize) -> Self {
        self.logprob_len = Some(len);
        self
    }

    /// Hold each request for `latency` so concurrency is observable.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Highest number of requests ever outstanding at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn completions_served(&self) -> usize {
        self.completions_served.load(Ordering::SeqCst)
    }

    pub fn requests_served(&self) -> usize {
        self.requests_served.load(Ordering::SeqCst)
    }

    fn sample_text(
        &self,
        request: &GenerationRequest,
        sample: u32,
    ) -> Result<String, RolloutError> {
        match &self.behavior {
            Behavior::Scripted => {
                let message = request.last_user_message().unwrap_or("");
                let key = fnv(message.as_bytes());
                self.fixtures
                    .get(&key)
                    .cloned()
                    .ok_or(RolloutError::UnknownFixtureKey(key))
            }
            Behavior::Rigged { p } => {
                // The question id is the request id up to the first '#';
                // suffixes distinguish runs/slots without changing the key.
                let question_id = request
                    .request_id
                    .split('#')
                    .next()
                    .unwrap_or(&request.request_id);
                let key = self
                    .answer_key
                    .get(question_id)
                    .ok_or_else(|| RolloutError::UnknownQuestion(question_id.to_string()))?;
                // Read the presented option order from the prompt, like a
                // model would; prompts may shuffle options per run.
                let correct = request
                    .last_user_message()
                    .and_then(|m| presented_correct_label(m, key))
                    .unwrap_or(key.correct);
                let mut rng = SeededRng::derive(self.seed, &request.request_id, sample as u64);
                let label = if rng.next_f64() < *p {
                    correct
                } else {
                    let wrong: Vec<char> = key
                        .labels
                        .iter()
                        .copied()
                        .filter(|l| *l != correct)
                        .collect();
                    wrong[rng.gen_index(wrong.len())]
                };
                Ok(format!(
                    "<think>Weighing the options against the clip evidence.</think><answer>{label}</answer>"
                ))
            }
        }
    }
}

/// Find which presented label carries the key's correct text. Scans the
/// prompt for `"{label}: "` markers in label order and compares the text
/// between markers (normalized) against the correct text.
fn presented_correct_label(message: &str, key: &AnswerKey) -> Option<char> {
    let mut markers: Vec<(usize, char)> = Vec::new();
    for &label in &key.labels {
        let pattern = format!("{label}: ");
        let from = markers.last().map(|(i, _)| *i + 3).unwrap_or(0);
        let idx = message[from..].find(&pattern)? + from;
        markers.push((idx, label));
    }
    let want = crate::dataset::normalize_text(&key.correct_text);
    for (i, (start, label)) in markers.iter().enumerate() {
        let text_start = start + 3;
        let text_end = if i + 1 < markers.len() {
            markers[i + 1].0
        } else {
            message[text_start..]
                .find('\n')
                .map(|e| text_start + e)
                .unwrap_or(message.len())
        };
        let text = message[text_start..text_end]
            .trim_end()
            .trim_end_matches(',');
        if crate::dataset::normalize_text(text) == want {
            return Some(*label);
        }
    }
    None
}

/// Decrements the in-flight gauge even if a request panics.
struct GaugeGuard<'a>(&'a AtomicUsize);

impl Drop for GaugeGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl CompletionBackend for MockEndpoint {
    fn generate(&self, request: &GenerationRequest) -> Result<Vec<Completion>, RolloutError> {
        request.validate()?;
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let _guard = GaugeGuard(&self.in_flight);
        if let Some(latency) = self.latency {
            std::thread::sleep(latency);
        }
        let mut completions = Vec::with_capacity(request.n_samples as usize);
        for sample in 0..request.n_samples {
            let text = self.sample_text(request, sample)?;
            let token_logprobs = self.logprob_len.map(|len| {
                let mut rng =
                    SeededRng::derive(self.seed ^ 0xA5A5, &request.request_id, sample as u64);
                (0..len).map(|_| -(0.05 + rng.next_f64() * 2.0)).collect()
            });
            completions.push(Completion {
                request_id: request.request_id.clone(),
                sample_index: sample,
                text,
                token_logprobs,
                finish_reason: FinishReason::Stop,
            });
        }
        self.requests_served.fetch_add(1, Ordering::SeqCst);
        self.completions_served
            .fetch_add(completions.len(), Ordering::SeqCst);
        Ok(completions)
    }
}
