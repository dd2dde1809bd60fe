//! Design optimization for hybrid phase-change-material (PCM) and
//! active-cooling thermal loops.
//!
//! - [`plant`]: the lumped thermal network and its coolant balances.
//! - [`scenario`]: profiles, bounds, weights and configuration files.
//! - [`simulate`]: forward-Euler rollouts producing full trajectories.
//! - [`objective`]: dynamic and static energy objectives.
//! - [`transcription`]: the simultaneous NLP over design, controls and states.
//! - [`solver`]: multi-start augmented-Lagrangian solver and verification.

pub mod linalg;
pub mod objective;
pub mod plant;
pub mod scenario;
pub mod simulate;
pub mod solver;
pub mod sparse;
pub mod transcription;
