//! Trust-aware recommendation planning for human-robot teams.
//!
//! The crate estimates a partner's trust with an experience-based Beta model,
//! plans recommendations by finite-horizon value iteration over a reward that
//! pays for earning trust, simulates or hosts reconnaissance missions, and
//! analyzes the resulting trust trajectories.

pub mod analytics;
pub mod archetype;
pub mod error;
pub mod fit;
pub mod model;
pub mod planner;
pub mod service;
pub mod sim;

pub use archetype::Archetype;
pub use error::{Error, Result};
pub use model::{Action, Performance, RewardConfig, TrustParams, TrustState};
