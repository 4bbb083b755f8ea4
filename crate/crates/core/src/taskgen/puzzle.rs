//! Spatial puzzles over shuffled 2x2 image patches.
//!
//! A target image and a set of distractor images are each split into four
//! patches. Frame 1 exposes one target patch (the anchor); the remaining
//! patches are shuffled behind it. Direction tasks ask which frame sits at a
//! named side of the anchor in the original image; same-image tasks ask
//! which k frames come from the anchor's image. Ground truth is defined by
//! patch provenance, never by frame order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{fnv1a64, TaskGenError};
use crate::dataset::{McqItem, Source};
use crate::rng::SeededRng;

/// Quadrant of a 2x2 patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Position {
    pub const ALL: [Position; 4] = [
        Position::TopLeft,
        Position::TopRight,
        Position::BottomLeft,
        Position::BottomRight,
    ];

    /// Strict 2x2 adjacency: the patch one step in `direction`, if any.
    pub fn neighbor(self, direction: Direction) -> Option<Position> {
        use Direction::*;
        use Position::*;
        match (self, direction) {
            (TopLeft, Right) => Some(TopRight),
            (TopLeft, Bottom) => Some(BottomLeft),
            (TopRight, Left) => Some(TopLeft),
            (TopRight, Bottom) => Some(BottomRight),
            (BottomLeft, Top) => Some(TopLeft),
            (BottomLeft, Right) => Some(BottomRight),
            (BottomRight, Top) => Some(TopRight),
            (BottomRight, Left) => Some(BottomLeft),
            _ => None,
        }
    }
}

/// A side of the anchor patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Top,
    Bottom,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Left,
        Direction::Right,
        Direction::Top,
        Direction::Bottom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Top => "top",
            Direction::Bottom => "bottom",
        }
    }
}

/// One image split into four described patches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub image_id: String,
    /// Descriptors in fixed order: TL, TR, BL, BR.
    descriptors: [String; 4],
}

impl PatchGrid {
    pub fn descriptor(&self, position: Position) -> &str {
        let idx = Position::ALL.iter().position(|p| *p == position).unwrap();
        &self.descriptors[idx]
    }
}

/// Assign four descriptors (ordered TL, TR, BL, BR) to a grid.
pub fn split_into_patches(
    image_id: impl Into<String>,
    quadrant_descriptors: &[String],
) -> Result<PatchGrid, TaskGenError> {
    if quadrant_descriptors.len() != 4 {
        return Err(TaskGenError::WrongArity {
            expected: 4,
            got: quadrant_descriptors.len(),
        });
    }
    Ok(PatchGrid {
        image_id: image_id.into(),
        descriptors: [
            quadrant_descriptors[0].clone(),
            quadrant_descriptors[1].clone(),
            quadrant_descriptors[2].clone(),
            quadrant_descriptors[3].clone(),
        ],
    })
}

/// What the puzzle asks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PuzzleTask {
    Direction(Direction),
    /// Identify the k (2 or 3) frames sharing the anchor's image.
    SameImage(usize),
}

/// One shuffled frame with its hidden provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// 1-based frame index as presented.
    pub index: usize,
    pub image_id: String,
    pub position: Position,
    pub descriptor: String,
}

/// A generated puzzle: presented frames, the MCQ, and the hidden truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuzzleInstance {
    pub frames: Vec<FrameRecord>,
    /// Always 1: the anchor is the first presented frame.
    pub anchor_index: usize,
    pub task: PuzzleTask,
    pub mcq: McqItem,
    pub ground_truth_frames: BTreeSet<usize>,
}

impl PuzzleInstance {
    /// Frame count this instance must have given its task and distractor
    /// count: 4 per image, minus one withheld target patch for SameImage(2).
    pub fn expected_frame_count(task: PuzzleTask, distractor_count: usize) -> usize {
        let full = 4 * (1 + distractor_count);
        match task {
            PuzzleTask::SameImage(2) => full - 1,
            _ => full,
        }
    }

    /// Re-check the structural invariants.
    pub fn validate(&self, target_image_id: &str, distractor_count: usize) -> Result<(), String> {
        if self.anchor_index != 1 {
            return Err(format!("anchor_index {} != 1", self.anchor_index));
        }
        let expected = Self::expected_frame_count(self.task, distractor_count);
        if self.frames.len() != expected {
            return Err(format!("{} frames, expected {expected}", self.frames.len()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.index != i + 1 {
                return Err(format!("frame at slot {i} has index {}", f.index));
            }
        }
        if self.frames[0].image_id != target_image_id {
            return Err("frame 1 is not from the target image".to_string());
        }
        let want_truth = match self.task {
            PuzzleTask::Direction(_) => 1,
            PuzzleTask::SameImage(k) => k,
        };
        if self.ground_truth_frames.len() != want_truth {
            return Err(format!(
                "{} ground-truth frames, expected {want_truth}",
                self.ground_truth_frames.len()
            ));
        }
        self.mcq.validate().map_err(|e| e.to_string())?;
        // Exactly one option must encode the ground truth.
        let truth_text = match self.task {
            PuzzleTask::Direction(_) => {
                frame_option_text(*self.ground_truth_frames.iter().next().unwrap())
            }
            PuzzleTask::SameImage(_) => frame_set_option_text(&self.ground_truth_frames),
        };
        let hits = self
            .mcq
            .options
            .iter()
            .filter(|o| o.text == truth_text)
            .count();
        if hits != 1 {
            return Err(format!("{hits} options encode the ground truth"));
        }
        if self.mcq.correct_option().text != truth_text {
            return Err("correct option does not encode the ground truth".to_string());
        }
        Ok(())
    }
}

fn frame_option_text(index: usize) -> String {
    format!("Frame {index}")
}

fn frame_set_option_text(indices: &BTreeSet<usize>) -> String {
    indices
        .iter()
        .map(|i| frame_option_text(*i))
        .collect::<Vec<_>>()
        .join(", ")
}

fn direction_question(frame_count: usize, direction: Direction) -> String {
    format!(
        "You are given {frame_count} frames from different contexts. Looking at the first frame, \
         which other frame is most likely to be at {} of the first frame?",
        direction.name()
    )
}

fn same_image_question(frame_count: usize, k: usize) -> String {
    let word = if k == 2 { "two" } else { "three" };
    format!(
        "You are given {frame_count} frames from different contexts. Which {word} of the \
         remaining frames are most likely to be from the same image as the first frame?"
    )
}

/// Generate one puzzle instance.
///
/// The anchor patch is drawn uniformly among the target positions compatible
/// with the task; the remaining patches are a uniform shuffle. Direction
/// MCQs use 4 frame options with at least two decoys drawn from distractor
/// images (at most one same-image decoy); same-image MCQs use 4 frame-index
/// sets of size k, exactly one of which is the true set.
pub fn gen_puzzle(
    target: &PatchGrid,
    distractors: &[PatchGrid],
    task: PuzzleTask,
    rng: &mut SeededRng,
) -> Result<PuzzleInstance, TaskGenError> {
    let mut seen_ids: Vec<&str> = vec![&target.image_id];
    for d in distractors {
        if seen_ids.contains(&d.image_id.as_str()) {
            return Err(TaskGenError::DuplicateImageId(d.image_id.clone()));
        }
        seen_ids.push(&d.image_id);
    }
    if let PuzzleTask::SameImage(k) = task {
        if !(k == 2 || k == 3) {
            return Err(TaskGenError::UnsupportedGroupSize(k));
        }
    }

    // Anchor: uniform over target positions whose neighbor set contains the
    // requested direction; any position for same-image tasks.
    let anchor = match task {
        PuzzleTask::Direction(d) => {
            let candidates: Vec<Position> = Position::ALL
                .into_iter()
                .filter(|p| p.neighbor(d).is_some())
                .collect();
            candidates[rng.gen_index(candidates.len())]
        }
        PuzzleTask::SameImage(_) => Position::ALL[rng.gen_index(4)],
    };

    // Pool of hidden patches behind frame 1. For SameImage(2) one non-anchor
    // target patch is withheld so that exactly two frames share the anchor's
    // image and the true set is unique.
    let mut target_positions: Vec<Position> =
        Position::ALL.into_iter().filter(|p| *p != anchor).collect();
    if let PuzzleTask::SameImage(2) = task {
        let drop = rng.gen_index(target_positions.len());
        target_positions.remove(drop);
    }
    let mut pool: Vec<(String, Position)> = target_positions
        .into_iter()
        .map(|p| (target.image_id.clone(), p))
        .collect();
    for d in distractors {
        for p in Position::ALL {
            pool.push((d.image_id.clone(), p));
        }
    }
    rng.shuffle(&mut pool);

    let grid_for = |image_id: &str| -> &PatchGrid {
        if image_id == target.image_id {
            target
        } else {
            distractors.iter().find(|d| d.image_id == image_id).unwrap()
        }
    };
    let mut frames = Vec::with_capacity(1 + pool.len());
    frames.push(FrameRecord {
        index: 1,
        image_id: target.image_id.clone(),
        position: anchor,
        descriptor: target.descriptor(anchor).to_string(),
    });
    for (slot, (image_id, position)) in pool.into_iter().enumerate() {
        let descriptor = grid_for(&image_id).descriptor(position).to_string();
        frames.push(FrameRecord {
            index: slot + 2,
            image_id,
            position,
            descriptor,
        });
    }
    let frame_count = frames.len();

    let ground_truth_frames: BTreeSet<usize> = match task {
        PuzzleTask::Direction(d) => {
            let truth_pos = anchor.neighbor(d).expect("anchor chosen to be compatible");
            let idx = frames
                .iter()
                .find(|f| f.image_id == target.image_id && f.position == truth_pos)
                .expect("target patch present in pool")
                .index;
            BTreeSet::from([idx])
        }
        PuzzleTask::SameImage(_) => frames
            .iter()
            .skip(1)
            .filter(|f| f.image_id == target.image_id)
            .map(|f| f.index)
            .collect(),
    };

    let (question, option_texts, correct_text) = match task {
        PuzzleTask::Direction(d) => {
            let truth = *ground_truth_frames.iter().next().unwrap();
            let same_pool: Vec<usize> = frames
                .iter()
                .skip(1)
                .filter(|f| f.image_id == target.image_id && f.index != truth)
                .map(|f| f.index)
                .collect();
            let dis_pool: Vec<usize> = frames
                .iter()
                .skip(1)
                .filter(|f| f.image_id != target.image_id)
                .map(|f| f.index)
                .collect();
            if dis_pool.len() < 2 {
                return Err(TaskGenError::NotEnoughDistractors {
                    needed: 2,
                    available: dis_pool.len(),
                });
            }
            // At most one same-image decoy; forced to one when only two
            // distractor frames exist, otherwise a coin flip.
            let mut same_count = if !same_pool.is_empty() && rng.gen_range(2) == 1 {
                1
            } else {
                0
            };
            if dis_pool.len() < 3 {
                same_count = 1;
            }
            let mut decoys: Vec<usize> = rng
                .sample_indices(same_pool.len(), same_count)
                .into_iter()
                .map(|i| same_pool[i])
                .collect();
            decoys.extend(
                rng.sample_indices(dis_pool.len(), 3 - same_count)
                    .into_iter()
                    .map(|i| dis_pool[i]),
            );
            let mut texts: Vec<String> = std::iter::once(truth)
                .chain(decoys)
                .map(frame_option_text)
                .collect();
            rng.shuffle(&mut texts);
            (
                direction_question(frame_count, d),
                texts,
                frame_option_text(truth),
            )
        }
        PuzzleTask::SameImage(k) => {
            let candidates = frame_count - 1;
            if n_choose_k(candidates, k) < 4 {
                return Err(TaskGenError::NotEnoughDistractors {
                    needed: 4,
                    available: n_choose_k(candidates, k),
                });
            }
            let truth_text = frame_set_option_text(&ground_truth_frames);
            let mut texts = vec![truth_text.clone()];
            while texts.len() < 4 {
                let set: BTreeSet<usize> = rng
                    .sample_indices(candidates, k)
                    .into_iter()
                    .map(|i| i + 2)
                    .collect();
                let text = frame_set_option_text(&set);
                if !texts.contains(&text) {
                    texts.push(text);
                }
            }
            rng.shuffle(&mut texts);
            (same_image_question(frame_count, k), texts, truth_text)
        }
    };

    let correct_index = option_texts
        .iter()
        .position(|t| *t == correct_text)
        .expect("truth option present");

    // Content-derived id: stable for a given arrangement.
    let mut digest = Vec::new();
    digest.extend_from_slice(target.image_id.as_bytes());
    for f in &frames {
        digest.extend_from_slice(f.image_id.as_bytes());
        digest.push(Position::ALL.iter().position(|p| *p == f.position).unwrap() as u8);
    }
    digest.extend_from_slice(question.as_bytes());
    let id = format!("puzzle-{:016x}", fnv1a64(&digest));

    let mcq = McqItem::new(
        id.clone(),
        Source::Puzzle,
        format!("frames:{id}"),
        question,
        option_texts,
        correct_index,
    )?;

    Ok(PuzzleInstance {
        frames,
        anchor_index: 1,
        task,
        mcq,
        ground_truth_frames,
    })
}

fn n_choose_k(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}
