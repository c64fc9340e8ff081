//! Idempotence sweep: enumerate interleavings of k helpers over one
//! shared thunk and require every completed execution to be equivalent
//! to a single run — final memory equal to the solo oracle, the done
//! flag set by the time the first run finishes, exactly one successful
//! store-conditional per attempted site, and every run within the
//! constant per-op expansion budget.

use std::collections::HashMap;
use std::sync::Arc;

use crate::engine::{Sim, SimConfig};
use crate::explore::{run_to_completion, Explorer};
use crate::history::{EventKind, MemAccess, OpDesc, RetVal, ThunkAction, ThunkSite};
use crate::mem::Word;
use crate::policy::PlayerPolicy;
use crate::thunk::ThunkProgram;
use crate::verify::{spans, Verdict};
use crate::workload;

#[derive(Debug, Clone, Copy)]
pub struct IdemParams {
    pub helpers: usize,
    /// Preemption bound for the schedule enumeration: the sweep is
    /// exhaustive over every schedule with at most this many switches
    /// away from a runnable process.
    pub preemptions: u32,
    pub max_runs: usize,
}

impl Default for IdemParams {
    fn default() -> Self {
        IdemParams { helpers: 2, preemptions: 3, max_runs: 2_000_000 }
    }
}

/// Run the sweep for `program` over cells initialized to `init`.
pub fn check_idempotence(program: &ThunkProgram, init: &[Word], params: IdemParams) -> Verdict {
    let mut verdict = Verdict::pass();

    // Solo oracle: one helper, run to completion deterministically.
    let solo = match solo_run(program, init) {
        Ok(s) => s,
        Err(e) => {
            verdict.push("thunk-faulted", vec![], format!("solo run faulted: {e}"));
            return verdict;
        }
    };

    let w = Arc::new(workload::thunk_helpers(program.clone(), init.to_vec(), params.helpers));
    let base = match Sim::new(w, PlayerPolicy::ImmediateRetry, &SimConfig::new(0, u64::MAX)) {
        Ok(s) => s,
        Err(e) => {
            // Statically rejected program: the placement/race rules are
            // themselves part of the construction.
            verdict.push("thunk-invalid", vec![], e.to_string());
            return verdict;
        }
    };
    let explorer = Explorer {
        max_branch_ticks: u64::MAX,
        preemptions: Some(params.preemptions),
        max_runs: params.max_runs,
    };
    let solo_ticks = program.solo_ticks();
    let outcome = explorer.for_each(&base, |sim| {
        check_one(sim, &solo, solo_ticks, &mut verdict);
    });
    match outcome {
        Ok(o) => {
            if o.bounded_out {
                verdict.merge(Verdict::bounded_out(format!(
                    "interleaving enumeration stopped at {} runs",
                    o.runs
                )));
            } else {
                verdict.note(format!(
                    "checked {} interleavings of {} helpers (preemption bound {})",
                    o.runs, params.helpers, params.preemptions
                ));
            }
        }
        Err(e) => verdict.push("thunk-faulted", vec![e.tick], e.to_string()),
    }
    verdict
}

fn solo_run(program: &ThunkProgram, init: &[Word]) -> Result<Vec<Word>, crate::engine::SimFault> {
    let w = Arc::new(workload::thunk_helpers(program.clone(), init.to_vec(), 1));
    let mut sim = Sim::new(w, PlayerPolicy::ImmediateRetry, &SimConfig::new(0, u64::MAX))?;
    run_to_completion(&mut sim, 1_000_000)?;
    Ok(sim.shared_cell_values())
}

fn check_one(sim: &Sim, solo: &[Word], solo_ticks: u64, verdict: &mut Verdict) {
    let history = sim.history();
    // (1) Final shared data equals the solo oracle.
    let finals = sim.shared_cell_values();
    if finals != *solo {
        verdict.push(
            "idem-final-state",
            vec![history.len() as u64],
            format!("final cells {finals:?} differ from the solo run's {solo:?}"),
        );
    }
    // (2) Done flag set, and set no later than the first finished run.
    let inst = &sim.thunk_instances()[0];
    if sim.mem().peek(inst.done_cell) != Word::Bool(true) {
        verdict.push("idem-done-flag", vec![], "done flag not set after all runs finished".into());
    }
    let first_finish = spans(history)
        .iter()
        .filter(|s| matches!(s.op, OpDesc::RunThunk { .. }) && s.ret == Some(RetVal::Unit))
        .filter_map(|s| s.resp_tick)
        .min();
    let done_tick = history.iter().find_map(|ev| match &ev.kind {
        EventKind::ThunkStep { action: ThunkAction::Done { ok: true }, .. } => Some(ev.tick),
        _ => None,
    });
    match (done_tick, first_finish) {
        (Some(d), Some(f)) if d > f => verdict.push(
            "idem-done-flag",
            vec![d, f],
            format!("done flag set at tick {d}, after the first finished run at {f}"),
        ),
        (None, Some(f)) => verdict.push(
            "idem-done-flag",
            vec![f],
            "a run finished but no successful done write exists".into(),
        ),
        _ => {}
    }
    // (3) Per attempted site: exactly one success. (4) Per run: tick count
    // within the solo budget (constant per-op expansion).
    let mut sites: HashMap<ThunkSite, (u64, u64, u64)> = HashMap::new();
    let mut per_run: HashMap<u64, u64> = HashMap::new();
    for ev in history.iter() {
        if let EventKind::ThunkStep { run_seq, action, .. } = &ev.kind {
            *per_run.entry(*run_seq).or_insert(0) += 1;
            if let ThunkAction::Mem { access: MemAccess::Lsc { ok, .. }, site: Some(site) } = action
            {
                let e = sites.entry(*site).or_insert((0, 0, ev.tick));
                e.0 += 1;
                if *ok {
                    e.1 += 1;
                }
            }
        }
    }
    for (site, (attempts, successes, tick)) in &sites {
        if *successes != 1 {
            verdict.push(
                "idem-site-once",
                vec![*tick],
                format!(
                    "site {site:?}: {attempts} store-conditional attempts, {successes} successes \
                     (want exactly 1)"
                ),
            );
        }
    }
    for (run, ticks) in &per_run {
        // +2 covers the run's invocation and response steps, which are
        // not thunk-step events.
        if ticks + 2 > solo_ticks {
            verdict.push(
                "idem-constant-overhead",
                vec![],
                format!(
                    "run {run} took {} ticks, above the solo budget of {solo_ticks}",
                    ticks + 2
                ),
            );
        }
    }
}
