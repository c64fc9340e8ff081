//! Exhaustive interleaving exploration over the deterministic kernel.
//!
//! A schedule is enumerated as a tree of scheduler choices: at each tick
//! the explorer either branches over every runnable process or follows a
//! single run-to-completion path. Branching can be limited two ways:
//!
//! - `preemptions`: at most this many switches away from a process that
//!   could have continued (unlimited when `None`). With `None` and an
//!   unlimited branch window the walk is every interleaving, full stop.
//! - `max_branch_ticks`: branch only while the global tick is below this;
//!   beyond it the run is completed deterministically.
//!
//! The explorer snapshots the simulation at branch points (the whole
//! kernel is plain data), so each leaf costs one tick-by-tick run without
//! replaying prefixes.

use crate::engine::{Sim, SimFault};
use crate::mem::ProcId;

#[derive(Debug, Clone, Copy)]
pub struct Explorer {
    pub max_branch_ticks: u64,
    pub preemptions: Option<u32>,
    pub max_runs: usize,
}

impl Default for Explorer {
    fn default() -> Self {
        Explorer { max_branch_ticks: u64::MAX, preemptions: None, max_runs: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOutcome {
    /// Completed runs visited.
    pub runs: usize,
    /// True when `max_runs` cut the walk short: the result is a bounded
    /// exploration, not an exhaustive one.
    pub bounded_out: bool,
}

impl Explorer {
    pub fn exhaustive() -> Self {
        Explorer::default()
    }

    pub fn with_preemptions(k: u32) -> Self {
        Explorer { preemptions: Some(k), ..Explorer::default() }
    }

    /// Visit every schedule in the bounded family, calling `visit` with
    /// each completed simulation.
    pub fn for_each<F>(&self, base: &Sim, mut visit: F) -> Result<ExploreOutcome, SimFault>
    where
        F: FnMut(&Sim),
    {
        let mut outcome = ExploreOutcome { runs: 0, bounded_out: false };
        self.walk(base.clone(), None, 0, &mut visit, &mut outcome)?;
        Ok(outcome)
    }

    fn walk<F>(
        &self,
        sim: Sim,
        last: Option<ProcId>,
        switches: u32,
        visit: &mut F,
        outcome: &mut ExploreOutcome,
    ) -> Result<(), SimFault>
    where
        F: FnMut(&Sim),
    {
        if outcome.bounded_out {
            return Ok(());
        }
        let runnable = sim.runnable();
        if runnable.is_empty() {
            outcome.runs += 1;
            if outcome.runs >= self.max_runs {
                outcome.bounded_out = true;
            }
            visit(&sim);
            return Ok(());
        }
        let last_runnable = last.map_or(false, |l| runnable.contains(&l));
        let budget_spent =
            self.preemptions.map_or(false, |k| switches >= k) && last_runnable;
        let may_branch =
            sim.tick() < self.max_branch_ticks && runnable.len() > 1 && !budget_spent;
        let choices: Vec<ProcId> = if may_branch {
            runnable.clone()
        } else if last_runnable {
            vec![last.unwrap()]
        } else {
            vec![runnable[0]]
        };
        for c in choices {
            let mut child = sim.clone();
            child.step_proc(c)?;
            let sw = switches + u32::from(last_runnable && last != Some(c));
            self.walk(child, Some(c), sw, visit, outcome)?;
            if outcome.bounded_out {
                break;
            }
        }
        Ok(())
    }
}

/// Deterministically finish a simulation: keep stepping the lowest-id
/// runnable process until everything parks.
pub fn run_to_completion(sim: &mut Sim, max_ticks: u64) -> Result<(), SimFault> {
    for _ in 0..max_ticks {
        let runnable = sim.runnable();
        let Some(&p) = runnable.first() else { return Ok(()) };
        sim.step_proc(p)?;
    }
    Ok(())
}
