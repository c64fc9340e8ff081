//! Mutual exclusion with idempotence, plus the status-transition and
//! return-value contracts of tryLocks.
//!
//! For every attempt the checker gathers its thunk runs (run-thunk
//! invocations tagged with the descriptor), the successful per-site
//! store-conditionals inside them, and its status changes, then asserts:
//!
//! 1. a descriptor's status changes at most once, and the attempt's
//!    return value matches its final status;
//! 2. winners have a finished thunk run; the thunk interval (first step
//!    of any run to the last step of the first finished run) of two
//!    descriptors with intersecting lock sets never overlaps;
//! 3. per store-conditional site with at least one attempt, exactly one
//!    success (the effect lands exactly once);
//! 4. losers have no thunk steps at all.

use std::collections::HashMap;

use crate::history::{EventKind, History, LockVariant, MemAccess, OpDesc, RetVal, ThunkAction, ThunkSite};
use crate::mem::{ASetId, DescId, Status, ThunkId};

use super::{spans, Verdict};

#[derive(Debug, Default, Clone)]
struct DescView {
    locks: Vec<ASetId>,
    variant: Option<LockVariant>,
    start_tick: Option<u64>,
    ret: Option<bool>,
    resp_tick: Option<u64>,
    status_changes: Vec<(u64, Status, Status)>,
    run_invs: Vec<u64>,
    run_resps: Vec<u64>,
    thunk_steps: u64,
    thunk: Option<ThunkId>,
}

pub fn check_mutex_idempotence(history: &History) -> Verdict {
    let mut verdict = Verdict::pass();
    let mut descs: HashMap<DescId, DescView> = HashMap::new();
    let mut sites: HashMap<(ThunkId, ThunkSite), (u64, u64, u64)> = HashMap::new(); // attempts, successes, first tick

    for ev in history.iter() {
        match &ev.kind {
            EventKind::AttemptStart { desc, locks, variant, .. } => {
                let d = descs.entry(*desc).or_default();
                d.locks = locks.clone();
                d.variant = Some(*variant);
                d.start_tick = Some(ev.tick);
            }
            EventKind::StatusChange { desc, from, to } => {
                descs.entry(*desc).or_default().status_changes.push((ev.tick, *from, *to));
            }
            EventKind::ThunkStep { thunk, desc, action, .. } => {
                if let Some(d) = desc {
                    let v = descs.entry(*d).or_default();
                    v.thunk_steps += 1;
                    v.thunk = Some(*thunk);
                }
                if let ThunkAction::Mem { access: MemAccess::Lsc { ok, .. }, site: Some(site) } =
                    action
                {
                    let e = sites.entry((*thunk, *site)).or_insert((0, 0, ev.tick));
                    e.0 += 1;
                    if *ok {
                        e.1 += 1;
                    }
                }
            }
            _ => {}
        }
    }

    for s in spans(history) {
        match &s.op {
            OpDesc::TryLocks { desc, .. } => {
                if let Some(RetVal::Bool(won)) = s.ret {
                    let d = descs.entry(*desc).or_default();
                    d.ret = Some(won);
                    d.resp_tick = s.resp_tick;
                }
            }
            OpDesc::RunThunk { desc: Some(d), .. } => {
                let v = descs.entry(*d).or_default();
                v.run_invs.push(s.inv_tick);
                if let Some(r) = s.resp_tick {
                    v.run_resps.push(r);
                }
            }
            _ => {}
        }
    }

    // (1) status single-transition + return/status agreement.
    for (id, d) in &descs {
        if d.status_changes.len() > 1 {
            verdict.push(
                "status-single-transition",
                d.status_changes.iter().map(|c| c.0).collect(),
                format!("descriptor {id:?} changed status {} times", d.status_changes.len()),
            );
        }
        if let Some(won) = d.ret {
            let final_status = d.status_changes.last().map(|c| c.2);
            let expected = if won { Some(Status::Won) } else { Some(Status::Lost) };
            if final_status != expected {
                verdict.push(
                    "return-matches-status",
                    vec![d.resp_tick.unwrap_or_default()],
                    format!(
                        "descriptor {id:?} returned {won} but its recorded status is {final_status:?}"
                    ),
                );
            }
        }
    }

    // (2) winner intervals pairwise disjoint on intersecting lock sets.
    let mut intervals: Vec<(DescId, u64, u64, &Vec<ASetId>)> = Vec::new();
    for (id, d) in &descs {
        if d.run_invs.is_empty() {
            continue;
        }
        let start = *d.run_invs.iter().min().expect("nonempty");
        match d.run_resps.iter().min() {
            Some(&end) => intervals.push((*id, start, end, &d.locks)),
            None => {
                if d.ret == Some(true) {
                    verdict.push(
                        "winner-thunk-finished",
                        vec![start],
                        format!("descriptor {id:?} won but no thunk run finished"),
                    );
                }
            }
        }
    }
    intervals.sort_by_key(|(_, s, ..)| *s);
    for i in 0..intervals.len() {
        for j in i + 1..intervals.len() {
            let (a, sa, ea, la) = &intervals[i];
            let (b, sb, eb, lb) = &intervals[j];
            if *sb > *ea {
                break; // sorted by start: no later interval can overlap a
            }
            if la.iter().any(|l| lb.contains(l)) {
                verdict.push(
                    "thunk-intervals-disjoint",
                    vec![*sa, *ea, *sb, *eb],
                    format!(
                        "descriptors {a:?} and {b:?} share a lock but their thunk intervals \
                         [{sa},{ea}] and [{sb},{eb}] overlap"
                    ),
                );
            }
        }
    }

    // Winners must have a finished run.
    for (id, d) in &descs {
        if d.ret == Some(true) && d.run_resps.is_empty() {
            verdict.push(
                "winner-thunk-finished",
                vec![d.resp_tick.unwrap_or_default()],
                format!("descriptor {id:?} returned true without a finished thunk run"),
            );
        }
    }

    // (3) exactly-once effects per attempted site.
    for ((thunk, site), (attempts, successes, tick)) in &sites {
        if *attempts > 0 && *successes != 1 {
            verdict.push(
                "effect-exactly-once",
                vec![*tick],
                format!(
                    "thunk {thunk:?} site {site:?}: {attempts} store-conditional attempts, \
                     {successes} succeeded (want exactly 1)"
                ),
            );
        }
    }

    // (4) losers are effect-free.
    for (id, d) in &descs {
        if d.ret == Some(false) && (d.thunk_steps > 0 || !d.run_invs.is_empty()) {
            verdict.push(
                "loser-effect-free",
                vec![d.resp_tick.unwrap_or_default()],
                format!(
                    "descriptor {id:?} lost its attempt yet has {} thunk steps and {} runs",
                    d.thunk_steps,
                    d.run_invs.len()
                ),
            );
        }
    }

    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::Event;
    use crate::mem::ProcId;

    struct Builder {
        h: History,
        seq: u64,
    }

    impl Builder {
        fn new() -> Self {
            Builder { h: History::new(4, 0), seq: 0 }
        }

        fn push(&mut self, proc: u32, kind: EventKind) -> u64 {
            let tick = self.h.len() as u64;
            self.h.push(Event { tick, proc: ProcId(proc), local_step: tick + 1, kind });
            tick
        }

        fn attempt(&mut self, proc: u32, desc: u32, locks: Vec<u32>) -> u64 {
            let seq = self.seq;
            self.seq += 1;
            self.push(
                proc,
                EventKind::AttemptStart {
                    desc: DescId(desc),
                    locks: locks.into_iter().map(ASetId).collect(),
                    variant: LockVariant::Known,
                    seq,
                },
            );
            seq
        }

        fn finish_attempt(&mut self, proc: u32, desc: u32, seq: u64, won: bool) {
            self.push(
                proc,
                EventKind::Respond {
                    op: OpDesc::TryLocks {
                        desc: DescId(desc),
                        locks: vec![],
                        variant: LockVariant::Known,
                    },
                    seq,
                    ret: RetVal::Bool(won),
                },
            );
        }

        fn status(&mut self, proc: u32, desc: u32, to: Status) {
            self.push(
                proc,
                EventKind::StatusChange { desc: DescId(desc), from: Status::Active, to },
            );
        }

        fn thunk_run(&mut self, proc: u32, desc: u32, thunk: u32) {
            let seq = self.seq;
            self.seq += 1;
            let op = OpDesc::RunThunk { thunk: ThunkId(thunk), desc: Some(DescId(desc)) };
            self.push(proc, EventKind::Invoke { op: op.clone(), seq, warn: None });
            self.push(
                proc,
                EventKind::ThunkStep {
                    thunk: ThunkId(thunk),
                    desc: Some(DescId(desc)),
                    run_seq: seq,
                    action: ThunkAction::Mem {
                        access: MemAccess::Lsc {
                            cell: crate::mem::CellId(0),
                            label: 0,
                            new: crate::mem::Word::Int(1),
                            ok: true,
                        },
                        site: Some(ThunkSite { capsule: 0, instr: 0 }),
                    },
                },
            );
            self.push(proc, EventKind::Respond { op, seq, ret: RetVal::Unit });
        }
    }

    #[test]
    fn clean_winner_and_loser_pass() {
        let mut b = Builder::new();
        let s0 = b.attempt(0, 0, vec![0, 1]);
        let s1 = b.attempt(1, 1, vec![1, 2]);
        b.status(0, 0, Status::Won);
        b.thunk_run(0, 0, 0);
        b.finish_attempt(0, 0, s0, true);
        b.status(1, 1, Status::Lost);
        b.finish_attempt(1, 1, s1, false);
        let v = check_mutex_idempotence(&b.h);
        assert!(v.ok, "{:?}", v.violations);
    }

    #[test]
    fn overlapping_thunk_intervals_on_shared_lock_violate() {
        let mut b = Builder::new();
        let s0 = b.attempt(0, 0, vec![0]);
        let s1 = b.attempt(1, 1, vec![0]);
        b.status(0, 0, Status::Won);
        b.status(1, 1, Status::Won);
        // Interleave the two runs so the intervals overlap.
        let seq_a = b.seq;
        b.seq += 1;
        let op_a = OpDesc::RunThunk { thunk: ThunkId(0), desc: Some(DescId(0)) };
        b.push(0, EventKind::Invoke { op: op_a.clone(), seq: seq_a, warn: None });
        let seq_b = b.seq;
        b.seq += 1;
        let op_b = OpDesc::RunThunk { thunk: ThunkId(1), desc: Some(DescId(1)) };
        b.push(1, EventKind::Invoke { op: op_b.clone(), seq: seq_b, warn: None });
        b.push(0, EventKind::Respond { op: op_a, seq: seq_a, ret: RetVal::Unit });
        b.push(1, EventKind::Respond { op: op_b, seq: seq_b, ret: RetVal::Unit });
        b.finish_attempt(0, 0, s0, true);
        b.finish_attempt(1, 1, s1, true);
        let v = check_mutex_idempotence(&b.h);
        assert!(v.violations.iter().any(|x| x.rule == "thunk-intervals-disjoint"));
    }

    #[test]
    fn loser_with_thunk_steps_violates() {
        let mut b = Builder::new();
        let s0 = b.attempt(0, 0, vec![0]);
        b.status(0, 0, Status::Lost);
        b.thunk_run(0, 0, 0);
        b.finish_attempt(0, 0, s0, false);
        let v = check_mutex_idempotence(&b.h);
        assert!(v.violations.iter().any(|x| x.rule == "loser-effect-free"));
    }

    #[test]
    fn double_status_transition_violates() {
        let mut b = Builder::new();
        let s0 = b.attempt(0, 0, vec![0]);
        b.status(0, 0, Status::Lost);
        b.status(0, 0, Status::Won);
        b.thunk_run(0, 0, 0);
        b.finish_attempt(0, 0, s0, true);
        let v = check_mutex_idempotence(&b.h);
        assert!(v.violations.iter().any(|x| x.rule == "status-single-transition"));
    }

    #[test]
    fn double_effect_violates() {
        let mut b = Builder::new();
        let s0 = b.attempt(0, 0, vec![0]);
        b.status(0, 0, Status::Won);
        b.thunk_run(0, 0, 0);
        b.thunk_run(0, 0, 0); // replays the same site successfully: two effects
        b.finish_attempt(0, 0, s0, true);
        let v = check_mutex_idempotence(&b.h);
        assert!(v.violations.iter().any(|x| x.rule == "effect-exactly-once"));
    }
}
