//! Deterministic simulation of a petition deployment.
//!
//! A [`ScenarioScript`] describes the petition, its users and a timeline of
//! faults; [`run_scenario`] plays it out and returns the chain file, a JSON
//! lines event log and what any corrupted coalition managed to learn.

pub mod adversary;
pub mod router;
pub mod scenario;
pub mod world;

use petition_core::group::{Ristretto255, ToyGroup};

pub use adversary::AdversaryReport;
pub use router::{Envelope, Router};
pub use scenario::{Action, Backend, HoneypotMode, PetitionSpec, ScenarioScript, ScriptEvent};
pub use world::{run_world, ScenarioOutcome, SignResult, SignStatus, World};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("bad scenario: {0}")]
    Script(String),
    #[error(transparent)]
    Core(#[from] petition_core::Error),
}

pub fn run_scenario(script: &ScenarioScript) -> Result<ScenarioOutcome, SimError> {
    match script.backend {
        Backend::Toy => run_world::<ToyGroup>(script),
        Backend::Prod => run_world::<Ristretto255>(script),
    }
}
