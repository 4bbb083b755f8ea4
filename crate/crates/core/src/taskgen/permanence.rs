//! Object-permanence scenes: synthesized occlusion event logs over a
//! simulated tabletop, with a rule-based violation labeler.
//!
//! A scene is a time-ordered event log per object. Objects may be occluded
//! while the camera orbits; an occluded object may be removed, in which case
//! it never becomes visible again. Non-removed occluded objects always
//! reappear before the clip ends.

use serde::{Deserialize, Serialize};

use super::{fnv1a64, TaskGenError};
use crate::dataset::{McqItem, Source};
use crate::rng::SeededRng;

pub const DEFAULT_CLIP_END: f64 = 10.0;

pub const CAMERA_NOTE: &str =
    "The camera moves around the scene and then returns to a position near its initial location.";

/// The full question template posed for a permanence scene.
pub const PERMANENCE_QUESTION: &str = "This is a video of a robotic simulation environment. \
    The robotic arm moves and may occlude objects. The camera moves around the scene and then \
    returns to a position near its initial location. Occlusion can also occur due to the \
    camera's movement. Is there an object that becomes temporarily occluded but does not \
    reappear in the end, contradicting object permanence?";

/// Tabletop object names used for synthesized scenes.
const OBJECT_POOL: [&str; 12] = [
    "akita black bowl",
    "cookies",
    "glazed rim porcelain ramekin",
    "plate",
    "wooden cabinet",
    "flat stove",
    "ketchup bottle",
    "cream cheese box",
    "chocolate pudding",
    "orange juice carton",
    "alphabet soup can",
    "basket",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Visible,
    OccludedStart,
    OccludedEnd,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEvent {
    pub time: f64,
    pub object: String,
    pub kind: EventKind,
}

/// Time-ordered occlusion/removal history of one synthesized clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEventLog {
    pub objects: Vec<String>,
    pub events: Vec<SceneEvent>,
    pub clip_end: f64,
    pub camera_note: String,
}

impl SceneEventLog {
    /// Check the structural invariants: ordered in-range times, matched
    /// occlusion events, and legal removal placement.
    pub fn validate(&self) -> Result<(), TaskGenError> {
        let invalid = |msg: String| Err(TaskGenError::InvalidLog(msg));
        if self.clip_end.is_nan() || self.clip_end <= 0.0 {
            return invalid(format!("clip_end {} must be positive", self.clip_end));
        }
        let mut prev = 0.0_f64;
        for (i, e) in self.events.iter().enumerate() {
            if !e.time.is_finite() || e.time < 0.0 || e.time > self.clip_end {
                return invalid(format!(
                    "event {i} time {} out of [0, {}]",
                    e.time, self.clip_end
                ));
            }
            if e.time < prev {
                return invalid(format!("event {i} time {} precedes {prev}", e.time));
            }
            prev = e.time;
            if !self.objects.iter().any(|o| o == &e.object) {
                return invalid(format!("event {i} names unknown object '{}'", e.object));
            }
        }
        for object in &self.objects {
            let mut depth: u32 = 0;
            let mut removed = false;
            for (i, e) in self
                .events
                .iter()
                .filter(|e| &e.object == object)
                .enumerate()
            {
                match e.kind {
                    EventKind::OccludedStart => {
                        if removed {
                            return invalid(format!(
                                "'{object}' occluded again after removal (event {i})"
                            ));
                        }
                        depth += 1;
                    }
                    EventKind::OccludedEnd => {
                        if depth == 0 {
                            return invalid(format!(
                                "'{object}' has OccludedEnd without matching start"
                            ));
                        }
                        depth -= 1;
                    }
                    EventKind::Removed => {
                        if removed {
                            return invalid(format!("'{object}' removed twice"));
                        }
                        if depth == 0 {
                            return invalid(format!("'{object}' removed while not occluded"));
                        }
                        removed = true;
                    }
                    EventKind::Visible => {
                        if removed {
                            return invalid(format!("'{object}' visible after removal"));
                        }
                        if depth > 0 {
                            return invalid(format!("'{object}' visible while occluded"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Knobs for scene synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermanenceConfig {
    pub object_count: usize,
    pub occlusion_probability: f64,
    pub removal_probability: f64,
}

impl Default for PermanenceConfig {
    fn default() -> Self {
        Self {
            object_count: 5,
            occlusion_probability: 0.8,
            removal_probability: 0.35,
        }
    }
}

fn object_name(index: usize) -> String {
    let base = OBJECT_POOL[index % OBJECT_POOL.len()];
    if index < OBJECT_POOL.len() {
        base.to_string()
    } else {
        format!("{base} {}", index / OBJECT_POOL.len() + 1)
    }
}

/// Synthesize one scene log. Every object starts visible; with
/// `occlusion_probability` it goes through one occlusion episode, and an
/// occluded object is removed with `removal_probability`. Objects that are
/// not removed reappear before the clip ends.
pub fn gen_permanence_scene(config: &PermanenceConfig, rng: &mut SeededRng) -> SceneEventLog {
    assert!(config.object_count >= 1, "need at least one object");
    assert!(
        (0.0..=1.0).contains(&config.occlusion_probability),
        "occlusion_probability must be in [0,1]"
    );
    assert!(
        (0.0..=1.0).contains(&config.removal_probability),
        "removal_probability must be in [0,1]"
    );
    let clip_end = DEFAULT_CLIP_END;
    let objects: Vec<String> = (0..config.object_count).map(object_name).collect();
    let mut events: Vec<SceneEvent> = Vec::new();
    let push = |events: &mut Vec<SceneEvent>, time: f64, object: &str, kind: EventKind| {
        events.push(SceneEvent {
            time,
            object: object.to_string(),
            kind,
        });
    };
    for object in &objects {
        push(&mut events, 0.0, object, EventKind::Visible);
        if rng.next_f64() >= config.occlusion_probability {
            continue;
        }
        // Episode times inside (5%, 95%) of the clip, sorted.
        let lo = 0.05 * clip_end;
        let hi = 0.95 * clip_end;
        let mut ts: Vec<f64> = (0..4).map(|_| lo + rng.next_f64() * (hi - lo)).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let removed = rng.next_f64() < config.removal_probability;
        push(&mut events, ts[0], object, EventKind::OccludedStart);
        if removed {
            push(&mut events, ts[1], object, EventKind::Removed);
            push(&mut events, ts[2], object, EventKind::OccludedEnd);
        } else {
            push(&mut events, ts[2], object, EventKind::OccludedEnd);
            push(&mut events, ts[3], object, EventKind::Visible);
        }
    }
    events.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
    SceneEventLog {
        objects,
        events,
        clip_end,
        camera_note: CAMERA_NOTE.to_string(),
    }
}

/// True iff the scene violates object permanence: some object was removed
/// while occluded (and by construction never became visible again).
pub fn label_permanence(log: &SceneEventLog) -> Result<bool, TaskGenError> {
    log.validate()?;
    Ok(log.events.iter().any(|e| e.kind == EventKind::Removed))
}

/// Binary MCQ for a scene: "Yes" is correct iff the log violates permanence.
pub fn permanence_to_mcq(log: &SceneEventLog) -> Result<McqItem, TaskGenError> {
    let violated = label_permanence(log)?;
    let mut digest = Vec::new();
    for e in &log.events {
        digest.extend_from_slice(e.object.as_bytes());
        digest.extend_from_slice(&e.time.to_bits().to_le_bytes());
        digest.push(e.kind as u8);
    }
    let id = format!("perm-{:016x}", fnv1a64(&digest));
    Ok(McqItem::new(
        id.clone(),
        Source::ObjectPermanence,
        format!("scene:{id}"),
        PERMANENCE_QUESTION,
        vec!["Yes".to_string(), "No".to_string()],
        if violated { 0 } else { 1 },
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(time: f64, object: &str, kind: EventKind) -> SceneEvent {
        SceneEvent {
            time,
            object: object.to_string(),
            kind,
        }
    }

    fn base_log(events: Vec<SceneEvent>) -> SceneEventLog {
        SceneEventLog {
            objects: vec!["akita black bowl".into(), "plate".into()],
            events,
            clip_end: DEFAULT_CLIP_END,
            camera_note: CAMERA_NOTE.to_string(),
        }
    }

    #[test]
    fn zero_removal_probability_never_removes() {
        let config = PermanenceConfig {
            object_count: 6,
            occlusion_probability: 1.0,
            removal_probability: 0.0,
        };
        for seed in 0..200 {
            let log = gen_permanence_scene(&config, &mut SeededRng::new(seed));
            assert!(!log.events.iter().any(|e| e.kind == EventKind::Removed));
            assert!(!label_permanence(&log).unwrap());
        }
    }

    #[test]
    fn certain_removal_removes_every_occluded_object() {
        let config = PermanenceConfig {
            object_count: 3,
            occlusion_probability: 1.0,
            removal_probability: 1.0,
        };
        for seed in 0..200 {
            let log = gen_permanence_scene(&config, &mut SeededRng::new(seed));
            let removed = log
                .events
                .iter()
                .filter(|e| e.kind == EventKind::Removed)
                .count();
            assert_eq!(removed, 3, "seed {seed}");
            assert!(label_permanence(&log).unwrap());
        }
    }

    #[test]
    fn generated_scenes_always_validate() {
        let config = PermanenceConfig::default();
        for seed in 0..2000 {
            let log = gen_permanence_scene(&config, &mut SeededRng::new(seed));
            log.validate()
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        }
    }

    #[test]
    fn non_removed_objects_reappear() {
        let config = PermanenceConfig {
            object_count: 8,
            occlusion_probability: 1.0,
            removal_probability: 0.5,
        };
        for seed in 0..500 {
            let log = gen_permanence_scene(&config, &mut SeededRng::new(seed));
            for object in &log.objects {
                let events: Vec<&SceneEvent> =
                    log.events.iter().filter(|e| &e.object == object).collect();
                let removed = events.iter().any(|e| e.kind == EventKind::Removed);
                let occluded_at = events
                    .iter()
                    .position(|e| e.kind == EventKind::OccludedStart);
                if let Some(start) = occluded_at {
                    let visible_after =
                        events[start..].iter().any(|e| e.kind == EventKind::Visible);
                    assert_eq!(visible_after, !removed, "seed {seed} object {object}");
                }
            }
        }
    }

    #[test]
    fn label_true_for_occluded_then_removed() {
        let log = base_log(vec![
            event(0.0, "akita black bowl", EventKind::Visible),
            event(0.0, "plate", EventKind::Visible),
            event(3.0, "akita black bowl", EventKind::OccludedStart),
            event(4.0, "akita black bowl", EventKind::Removed),
            event(5.0, "akita black bowl", EventKind::OccludedEnd),
        ]);
        assert!(label_permanence(&log).unwrap());
    }

    #[test]
    fn label_false_when_everything_reappears() {
        let log = base_log(vec![
            event(0.0, "akita black bowl", EventKind::Visible),
            event(0.0, "plate", EventKind::Visible),
            event(2.0, "plate", EventKind::OccludedStart),
            event(6.0, "plate", EventKind::OccludedEnd),
            event(7.0, "plate", EventKind::Visible),
        ]);
        assert!(!label_permanence(&log).unwrap());
    }

    #[test]
    fn label_false_for_empty_event_list() {
        let log = base_log(Vec::new());
        assert!(!label_permanence(&log).unwrap());
    }

    #[test]
    fn validate_rejects_malformed_logs() {
        // Unmatched OccludedEnd.
        let log = base_log(vec![event(1.0, "plate", EventKind::OccludedEnd)]);
        assert!(log.validate().is_err());
        // Removed while visible.
        let log = base_log(vec![
            event(0.0, "plate", EventKind::Visible),
            event(1.0, "plate", EventKind::Removed),
        ]);
        assert!(log.validate().is_err());
        // Out-of-order times.
        let log = base_log(vec![
            event(2.0, "plate", EventKind::Visible),
            event(1.0, "plate", EventKind::OccludedStart),
        ]);
        assert!(log.validate().is_err());
        // Time past clip_end.
        let log = base_log(vec![event(11.0, "plate", EventKind::Visible)]);
        assert!(log.validate().is_err());
        // Visible after removal.
        let log = base_log(vec![
            event(1.0, "plate", EventKind::OccludedStart),
            event(2.0, "plate", EventKind::Removed),
            event(3.0, "plate", EventKind::OccludedEnd),
            event(4.0, "plate", EventKind::Visible),
        ]);
        assert!(log.validate().is_err());
        // Unknown object.
        let log = base_log(vec![event(1.0, "ghost", EventKind::Visible)]);
        assert!(log.validate().is_err());
    }

    #[test]
    fn label_propagates_invalid_log() {
        let log = base_log(vec![event(1.0, "plate", EventKind::OccludedEnd)]);
        assert!(matches!(
            label_permanence(&log),
            Err(TaskGenError::InvalidLog(_))
        ));
    }

    #[test]
    fn mcq_correct_answer_tracks_label() {
        let violating = base_log(vec![
            event(1.0, "plate", EventKind::OccludedStart),
            event(2.0, "plate", EventKind::Removed),
        ]);
        let mcq = permanence_to_mcq(&violating).unwrap();
        assert_eq!(mcq.correct_option().text, "Yes");
        assert_eq!(mcq.correct_label, 'A');

        let clean = base_log(Vec::new());
        let mcq = permanence_to_mcq(&clean).unwrap();
        assert_eq!(mcq.correct_option().text, "No");
        assert_eq!(mcq.correct_label, 'B');
        assert!(mcq.question.contains(CAMERA_NOTE));
    }

    #[test]
    fn object_names_are_unique_past_pool_size() {
        let config = PermanenceConfig {
            object_count: 30,
            occlusion_probability: 0.0,
            removal_probability: 0.0,
        };
        let log = gen_permanence_scene(&config, &mut SeededRng::new(1));
        let mut names = log.objects.clone();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 30);
    }
}
