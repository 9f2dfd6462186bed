//! Bootstrapped self-improvement for multi-agent language-model systems.
//!
//! Agents wired into a communication DAG solve problems; trajectories whose
//! reward clears a threshold become per-agent fine-tuning data, and failed
//! trajectories are repaired through feedback, regeneration and rephrasing
//! before export. The [`games`] module adds three two-player negotiation
//! environments with a strict tag-based message grammar.

pub mod augmentation;
pub mod experience;
pub mod games;
pub mod model;
pub mod topology;
pub mod train;
