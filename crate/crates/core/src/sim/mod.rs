//! Event-driven stochastic SEIR simulator with daily time steps.
//!
//! Flow: `S → E → {A, P}`, `P → {Sm, Ss}`, `A, Sm → R`, `Ss → H → {C, R}`,
//! `C → {Hp, D}`, `Hp → R`. The infectious states A, P, Sm and Ss come in
//! undetected/detected pairs; detection is decided on entry and takes effect
//! after a fixed delay (or on the day of leaving, if sooner). Branch targets
//! and stay lengths are drawn when individuals enter a state and stored as
//! batched pending events, so a checkpoint carries every in-flight transition.

mod checkpoint;
mod params;
mod sojourn;
mod state;

pub use checkpoint::{restore, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use params::{DetectionParams, ParamOverrides, SimParams, SojournParams};
pub use sojourn::{StayPmf, StayTables};
pub use state::{
    Compartment, EventKey, EventKind, ModelState, Totals, Trajectory, NUM_COMPARTMENTS,
};

/// Convenience wrapper matching the usual call shape.
pub fn init_state(
    population: u64,
    initial_exposed: u64,
    params: SimParams,
    seed: u64,
) -> crate::Result<ModelState> {
    ModelState::init(population, initial_exposed, params, seed)
}
