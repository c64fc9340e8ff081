//! History checkers: linearizability of the active set, set regularity of
//! the multi active set, mutual exclusion with idempotence, fixed-step
//! delays, the slot-index/point-contention bound, and the idempotence
//! sweep. All are pure functions of a recorded history (the idempotence
//! checker additionally drives its own bounded sweeps), so verdicts can
//! be recomputed offline from serialized histories.

mod idem;
mod lin;
mod mutex;
mod regularity;
mod slots;
mod steps;

pub use idem::{check_idempotence, IdemParams};
pub use lin::{check_linearizable_active_set, LinLimits};
pub use mutex::check_mutex_idempotence;
pub use regularity::check_set_regularity;
pub use slots::check_slot_bound;
pub use steps::{check_fixed_steps, check_pow2_reveals};

use serde::{Deserialize, Serialize};

use crate::history::{EventKind, History, OpDesc, RetVal};
use crate::mem::ProcId;

pub const RULE_BOUNDED_OUT: &str = "bounded-out";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub ticks: Vec<u64>,
    pub explanation: String,
}

/// Checker outcome: ok iff no violations. A search that exceeded its
/// bounds reports a `bounded-out` violation rather than passing silently.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn pass() -> Self {
        Verdict { ok: true, violations: Vec::new(), notes: Vec::new() }
    }

    pub fn violation(rule: &str, ticks: Vec<u64>, explanation: String) -> Self {
        let mut v = Verdict::pass();
        v.push(rule, ticks, explanation);
        v
    }

    pub fn push(&mut self, rule: &str, ticks: Vec<u64>, explanation: String) {
        self.ok = false;
        self.violations.push(Violation { rule: rule.into(), ticks, explanation });
    }

    pub fn note(&mut self, note: String) {
        self.notes.push(note);
    }

    pub fn bounded_out(reason: String) -> Self {
        Verdict::violation(RULE_BOUNDED_OUT, vec![], reason)
    }

    pub fn merge(&mut self, other: Verdict) {
        self.ok &= other.ok;
        self.violations.extend(other.violations);
        self.notes.extend(other.notes);
    }
}

/// One operation occurrence reconstructed from invocation/response events
/// (or a single tagged memory op, whose endpoints coincide).
#[derive(Debug, Clone)]
pub struct Span {
    pub op: OpDesc,
    pub proc: ProcId,
    pub seq: u64,
    pub inv_tick: u64,
    pub inv_local: u64,
    pub resp_tick: Option<u64>,
    pub resp_local: Option<u64>,
    pub ret: Option<RetVal>,
}

impl Span {
    pub fn completed(&self) -> bool {
        self.resp_tick.is_some()
    }
}

/// Reconstruct all operation spans from a history, in invocation order.
pub fn spans(history: &History) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    let mut open: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    for ev in history.iter() {
        match &ev.kind {
            EventKind::Invoke { op, seq, .. } => {
                open.insert(*seq, out.len());
                out.push(Span {
                    op: op.clone(),
                    proc: ev.proc,
                    seq: *seq,
                    inv_tick: ev.tick,
                    inv_local: ev.local_step,
                    resp_tick: None,
                    resp_local: None,
                    ret: None,
                });
            }
            EventKind::AttemptStart { desc, locks, variant, seq } => {
                open.insert(*seq, out.len());
                out.push(Span {
                    op: OpDesc::TryLocks { desc: *desc, locks: locks.clone(), variant: *variant },
                    proc: ev.proc,
                    seq: *seq,
                    inv_tick: ev.tick,
                    inv_local: ev.local_step,
                    resp_tick: None,
                    resp_local: None,
                    ret: None,
                });
            }
            EventKind::Respond { seq, ret, .. } => {
                if let Some(&i) = open.get(seq) {
                    out[i].resp_tick = Some(ev.tick);
                    out[i].resp_local = Some(ev.local_step);
                    out[i].ret = Some(ret.clone());
                    open.remove(seq);
                }
            }
            EventKind::MemOp { op: Some((op, ret)), .. } => {
                out.push(Span {
                    op: op.clone(),
                    proc: ev.proc,
                    seq: u64::MAX,
                    inv_tick: ev.tick,
                    inv_local: ev.local_step,
                    resp_tick: Some(ev.tick),
                    resp_local: Some(ev.local_step),
                    ret: Some(ret.clone()),
                });
            }
            _ => {}
        }
    }
    out
}
