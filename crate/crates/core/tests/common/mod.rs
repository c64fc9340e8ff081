//! Shared helpers for the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use wflock_core::engine::{run_sim, RunOutput, Sim, SimConfig};
use wflock_core::history::{EventKind, History, MemAccess};
use wflock_core::mem::{ASetId, CellId, Word};
use wflock_core::policy::PlayerPolicy;
use wflock_core::schedule::Schedule;
use wflock_core::workload::Workload;

pub fn sim_of(w: &Arc<Workload>, seed: u64) -> Sim {
    Sim::new(w.clone(), PlayerPolicy::ImmediateRetry, &SimConfig::new(seed, u64::MAX)).unwrap()
}

pub fn run_rr(w: &Arc<Workload>, horizon: u64) -> RunOutput {
    let s = Schedule::round_robin(w.procs(), horizon);
    run_sim(&s, &PlayerPolicy::ImmediateRetry, w, &SimConfig::new(0, horizon)).unwrap()
}

pub fn run_random(w: &Arc<Workload>, seed: u64, horizon: u64) -> RunOutput {
    let s = Schedule::uniform_random(seed, w.procs(), horizon);
    run_sim(&s, &PlayerPolicy::ImmediateRetry, w, &SimConfig::new(seed, horizon)).unwrap()
}

/// Cells of one active set, read off a probe build of the workload.
/// Allocation order is deterministic, so ids match any run of the same
/// workload.
pub fn aset_cells(w: &Arc<Workload>, aset: ASetId) -> (Vec<CellId>, Vec<CellId>) {
    let sim = sim_of(w, 0);
    let obj = sim.aset_obj(aset);
    let owners = (0..obj.capacity()).map(|i| obj.owner_cell(i)).collect();
    let sets = (0..obj.capacity()).map(|i| obj.set_cell(i)).collect();
    (owners, sets)
}

/// Value timeline of one cell reconstructed from history events.
/// Only plain memory mutations are folded (writes, CAS/CAM/MCAM,
/// store-conditionals), which covers active-set owner and set cells.
pub struct CellTrace {
    timeline: Vec<(u64, Word)>,
}

impl CellTrace {
    pub fn from_history(history: &History, cell: CellId, init: Word) -> Self {
        let mut timeline = vec![(0, init)];
        for ev in history.iter() {
            let access = match &ev.kind {
                EventKind::MemOp { access, .. } => access,
                EventKind::ThunkStep {
                    action: wflock_core::history::ThunkAction::Mem { access, .. },
                    ..
                } => access,
                _ => continue,
            };
            if access.cell() != cell || !access.mutated() {
                continue;
            }
            let value = match access {
                MemAccess::Write { value, .. } => *value,
                MemAccess::Cas { new, .. }
                | MemAccess::Cam { new, .. }
                | MemAccess::Mcam { new, .. }
                | MemAccess::Lsc { new, .. } => *new,
                MemAccess::Read { .. } | MemAccess::Lll { .. } => unreachable!(),
            };
            timeline.push((ev.tick, value));
        }
        CellTrace { timeline }
    }

    /// Value held by the cell at the END of `tick` (after that tick's
    /// mutation, if any).
    pub fn at(&self, tick: u64) -> Word {
        self.timeline
            .iter()
            .rev()
            .find(|(t, _)| *t <= tick)
            .map(|(_, v)| *v)
            .expect("timeline has an initial value")
    }
}

/// Count successful store-conditionals on a cell.
pub fn lsc_successes(history: &History, cell: CellId) -> usize {
    history
        .iter()
        .filter(|ev| match &ev.kind {
            EventKind::MemOp { access: MemAccess::Lsc { cell: c, ok: true, .. }, .. } => *c == cell,
            EventKind::ThunkStep {
                action:
                    wflock_core::history::ThunkAction::Mem {
                        access: MemAccess::Lsc { cell: c, ok: true, .. },
                        ..
                    },
                ..
            } => *c == cell,
            _ => false,
        })
        .count()
}
