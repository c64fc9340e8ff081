//! Deterministic simulation and verification of randomized wait-free
//! fine-grained tryLocks: a step-level simulated shared memory, the
//! active set and multi active set objects, capsule-structured idempotent
//! thunks, the known-bounds and adaptive lock algorithms, history
//! checkers for their safety and fairness properties, and an exhaustive
//! interleaving explorer.

pub mod aset;
pub mod calibrate;
pub mod engine;
pub mod explore;
pub mod history;
pub mod lock;
pub mod lock_adaptive;
pub mod maset;
pub mod mem;
pub mod policy;
pub mod schedule;
pub mod thunk;
pub mod verify;
pub mod workload;

pub use engine::{run_sim, RunOutput, ScriptOp, Sim, SimConfig, SimFault, StopRule};
pub use history::{Event, EventKind, History, LockVariant, OpDesc, RetVal};
pub use lock::LockSetup;
pub use mem::{ASetId, CellId, DescId, ItemId, ProcId, Status, Word};
pub use policy::{PlayerPolicy, PolicyDecision};
pub use schedule::{make_schedule, Schedule, ScheduleKind};
