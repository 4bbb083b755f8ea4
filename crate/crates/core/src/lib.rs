//! Verifiable-reward tooling for post-training physical-AI reasoning models:
//! rule-based rewards with GRPO advantage normalization, self-supervised
//! intuitive-physics task generators, an MCQ benchmark evaluation harness,
//! and a simulated RL iteration loop. The model under test is an external
//! OpenAI-compatible text endpoint; a deterministic in-process mock stands
//! in for it offline.

pub mod dataset;
pub mod fixtures;
pub mod grpo;
pub mod harness;
pub mod ontology;
pub mod reward;
pub mod rng;
pub mod rollout;
pub mod taskgen;

pub use rng::SeededRng;
