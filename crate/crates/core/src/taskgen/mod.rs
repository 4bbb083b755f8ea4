//! Deterministic generators and ground-truth labelers for the three
//! intuitive-physics tasks: spatial puzzles, arrow of time, and object
//! permanence. Every generator emits MCQs in the dataset format while
//! keeping the ground-truth provenance available for audit.

mod aot;
mod permanence;
mod puzzle;

pub use aot::{gen_aot_mcqs, reverse_clip, ClipRecord, Playback, AOT_QUESTION};
pub use permanence::{
    gen_permanence_scene, label_permanence, permanence_to_mcq, EventKind, PermanenceConfig,
    SceneEvent, SceneEventLog, DEFAULT_CLIP_END, PERMANENCE_QUESTION,
};
pub use puzzle::{
    gen_puzzle, split_into_patches, Direction, FrameRecord, PatchGrid, Position, PuzzleInstance,
    PuzzleTask,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskGenError {
    #[error("expected {expected} patch descriptors, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("duplicate image id '{0}' among target and distractors")]
    DuplicateImageId(String),
    #[error("same-image group size must be 2 or 3, got {0}")]
    UnsupportedGroupSize(usize),
    #[error("not enough distractor material: needed {needed}, available {available}")]
    NotEnoughDistractors { needed: usize, available: usize },
    #[error("invalid scene event log: {0}")]
    InvalidLog(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// FNV-1a over bytes; content-derived ids for generated instances.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
