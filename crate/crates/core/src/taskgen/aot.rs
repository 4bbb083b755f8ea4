//! Arrow-of-time task: forward/backward playback MCQs over video clips.

use serde::{Deserialize, Serialize};

use crate::dataset::{McqItem, Source};
use crate::rng::SeededRng;

pub const AOT_QUESTION: &str =
    "Detect whether the video plays forward or backward with confidence.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Playback {
    Forward,
    Backward,
}

impl Playback {
    pub fn flipped(self) -> Playback {
        match self {
            Playback::Forward => Playback::Backward,
            Playback::Backward => Playback::Forward,
        }
    }

    pub fn answer_text(self) -> &'static str {
        match self {
            Playback::Forward => "forward",
            Playback::Backward => "backward",
        }
    }
}

/// A clip and its playback direction. The motion summary is descriptive
/// metadata only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub playback: Playback,
    pub motion_summary: String,
}

/// Toggle the playback flag; clip id and motion summary are untouched.
pub fn reverse_clip(clip: &ClipRecord) -> ClipRecord {
    ClipRecord {
        clip_id: clip.clip_id.clone(),
        playback: clip.playback.flipped(),
        motion_summary: clip.motion_summary.clone(),
    }
}

/// One forward/backward MCQ per clip. If the input labels are imbalanced,
/// the generator reverses an rng-chosen half of the surplus so the emitted
/// label counts differ by at most one.
pub fn gen_aot_mcqs(clips: &[ClipRecord], rng: &mut SeededRng) -> Vec<McqItem> {
    let mut clips: Vec<ClipRecord> = clips.to_vec();
    let (forward, backward): (Vec<usize>, Vec<usize>) =
        (0..clips.len()).partition(|&i| clips[i].playback == Playback::Forward);
    let surplus = if forward.len() >= backward.len() {
        forward
    } else {
        backward
    };
    let diff = surplus.len() - (clips.len() - surplus.len());
    let flips = diff / 2;
    for pick in rng.sample_indices(surplus.len(), flips) {
        let idx = surplus[pick];
        clips[idx] = reverse_clip(&clips[idx]);
    }

    clips
        .iter()
        .map(|clip| {
            let correct = match clip.playback {
                Playback::Forward => 0,
                Playback::Backward => 1,
            };
            McqItem::new(
                format!("aot:{}:{}", clip.clip_id, clip.playback.answer_text()),
                Source::Aot,
                clip.clip_id.clone(),
                AOT_QUESTION,
                vec!["forward".to_string(), "backward".to_string()],
                correct,
            )
            .expect("aot item is structurally valid")
        })
        .collect()
}
