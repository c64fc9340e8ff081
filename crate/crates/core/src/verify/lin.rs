//! Wing–Gong linearizability search for one active set against its
//! sequential specification.
//!
//! The sequential spec: getSet returns exactly the items inserted but not
//! yet removed; insert requires the item absent, remove requires it
//! present. The search linearizes operations one at a time: an operation
//! may go next iff no other remaining operation responded before it was
//! invoked. Search states are memoized by the mask of linearized
//! operations (the set state is a function of the mask), which makes the
//! search complete for the bounded sizes used — no false positives or
//! negatives within bounds; anything larger is reported bounded-out.

use std::collections::{BTreeSet, HashSet};

use crate::history::{History, OpDesc, RetVal};
use crate::mem::{ASetId, ItemId};

use super::{spans, Span, Verdict};

#[derive(Debug, Clone, Copy)]
pub struct LinLimits {
    pub max_procs: usize,
    pub max_ops: usize,
}

impl Default for LinLimits {
    fn default() -> Self {
        LinLimits { max_procs: 3, max_ops: 6 }
    }
}

#[derive(Debug, Clone)]
enum SetOp {
    Insert(ItemId),
    Remove(ItemId),
    GetSet(BTreeSet<ItemId>),
}

struct LinOp {
    op: SetOp,
    inv: u64,
    resp: Option<u64>,
    tick: u64,
}

fn extract(history: &History, aset: ASetId) -> Vec<LinOp> {
    let mut out = Vec::new();
    for s in spans(history) {
        let Span { op, inv_tick, resp_tick, ret, .. } = s;
        match op {
            OpDesc::Insert { aset: a, item } if a == aset => {
                out.push(LinOp { op: SetOp::Insert(item), inv: inv_tick, resp: resp_tick, tick: inv_tick });
            }
            OpDesc::Remove { aset: a, item, .. } if a == aset => {
                out.push(LinOp { op: SetOp::Remove(item), inv: inv_tick, resp: resp_tick, tick: inv_tick });
            }
            OpDesc::GetSet { aset: a } if a == aset => {
                let items = match ret {
                    Some(RetVal::Items(v)) => v.into_iter().collect(),
                    _ => BTreeSet::new(),
                };
                out.push(LinOp {
                    op: SetOp::GetSet(items),
                    inv: inv_tick,
                    resp: resp_tick,
                    tick: inv_tick,
                });
            }
            _ => {}
        }
    }
    out
}

fn apply(state: &BTreeSet<ItemId>, op: &SetOp) -> Option<BTreeSet<ItemId>> {
    match op {
        SetOp::Insert(x) => {
            if state.contains(x) {
                None
            } else {
                let mut s = state.clone();
                s.insert(*x);
                Some(s)
            }
        }
        SetOp::Remove(x) => {
            if state.contains(x) {
                let mut s = state.clone();
                s.remove(x);
                Some(s)
            } else {
                None
            }
        }
        SetOp::GetSet(result) => {
            if result == state {
                Some(state.clone())
            } else {
                None
            }
        }
    }
}

fn search(ops: &[LinOp]) -> bool {
    let completed: u64 = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.resp.is_some())
        .map(|(i, _)| 1u64 << i)
        .sum();
    let mut visited: HashSet<u64> = HashSet::new();
    fn go(
        ops: &[LinOp],
        mask: u64,
        state: &BTreeSet<ItemId>,
        completed: u64,
        visited: &mut HashSet<u64>,
    ) -> bool {
        if mask & completed == completed {
            return true;
        }
        if !visited.insert(mask) {
            return false;
        }
        for (i, op) in ops.iter().enumerate() {
            let bit = 1u64 << i;
            if mask & bit != 0 {
                continue;
            }
            // op i may linearize next iff no other remaining op responded
            // before i's invocation.
            let blocked = ops.iter().enumerate().any(|(j, o)| {
                j != i && mask & (1 << j) == 0 && o.resp.map_or(false, |r| r < op.inv)
            });
            if blocked {
                continue;
            }
            if let Some(next) = apply(state, &op.op) {
                if go(ops, mask | bit, &next, completed, visited) {
                    return true;
                }
            }
        }
        false
    }
    go(ops, 0, &BTreeSet::new(), completed, &mut visited)
}

/// Check every active-set operation on `aset` in `history` for
/// linearizability against the sequential set specification.
pub fn check_linearizable_active_set(
    history: &History,
    aset: ASetId,
    limits: LinLimits,
) -> Verdict {
    let ops = extract(history, aset);
    if ops.is_empty() {
        return Verdict::pass();
    }
    if ops.len() > limits.max_ops || history.meta.procs as usize > limits.max_procs {
        return Verdict::bounded_out(format!(
            "{} ops across {} processes exceeds the exhaustive-search bound ({} ops, {} processes)",
            ops.len(),
            history.meta.procs,
            limits.max_ops,
            limits.max_procs
        ));
    }
    if search(&ops) {
        Verdict::pass()
    } else {
        let ticks = ops.iter().map(|o| o.tick).collect();
        Verdict::violation(
            "linearizability",
            ticks,
            format!("no legal sequential order exists for {} active-set operations", ops.len()),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Event, EventKind, MemAccess};
    use crate::mem::{CellId, ProcId, Word};

    struct Builder {
        h: History,
        seq: u64,
    }

    impl Builder {
        fn new(procs: u32) -> Self {
            Builder { h: History::new(procs, 0), seq: 0 }
        }

        fn tick(&self) -> u64 {
            self.h.len() as u64
        }

        fn invoke(&mut self, proc: u32, op: OpDesc) -> u64 {
            let seq = self.seq;
            self.seq += 1;
            self.h.push(Event {
                tick: self.tick(),
                proc: ProcId(proc),
                local_step: self.tick() + 1,
                kind: EventKind::Invoke { op, seq, warn: None },
            });
            seq
        }

        fn respond(&mut self, proc: u32, op: OpDesc, seq: u64, ret: RetVal) {
            self.h.push(Event {
                tick: self.tick(),
                proc: ProcId(proc),
                local_step: self.tick() + 1,
                kind: EventKind::Respond { op, seq, ret },
            });
        }

        fn getset(&mut self, proc: u32, aset: ASetId, items: Vec<ItemId>) {
            self.h.push(Event {
                tick: self.tick(),
                proc: ProcId(proc),
                local_step: self.tick() + 1,
                kind: EventKind::MemOp {
                    access: MemAccess::Read { cell: CellId(0), value: Word::Null },
                    op: Some((OpDesc::GetSet { aset }, RetVal::Items(items))),
                },
            });
        }
    }

    const A: ASetId = ASetId(0);

    #[test]
    fn sequential_insert_then_getset_is_linearizable() {
        let mut b = Builder::new(1);
        let op = OpDesc::Insert { aset: A, item: ItemId(1) };
        let s = b.invoke(0, op.clone());
        b.respond(0, op, s, RetVal::Slot(0));
        b.getset(0, A, vec![ItemId(1)]);
        assert!(check_linearizable_active_set(&b.h, A, LinLimits::default()).ok);
    }

    #[test]
    fn getset_before_any_insert_must_be_empty() {
        let mut b = Builder::new(1);
        b.getset(0, A, vec![ItemId(1)]);
        let op = OpDesc::Insert { aset: A, item: ItemId(1) };
        let s = b.invoke(0, op.clone());
        b.respond(0, op, s, RetVal::Slot(0));
        let v = check_linearizable_active_set(&b.h, A, LinLimits::default());
        assert!(!v.ok);
        assert_eq!(v.violations[0].rule, "linearizability");
    }

    #[test]
    fn overlapping_insert_may_or_may_not_be_seen() {
        // insert(1) overlaps two getSets; one sees it, one does not:
        // both orders are legal, so this is linearizable.
        let mut b = Builder::new(3);
        let op = OpDesc::Insert { aset: A, item: ItemId(1) };
        let s = b.invoke(0, op.clone());
        b.getset(1, A, vec![]);
        b.getset(2, A, vec![ItemId(1)]);
        b.respond(0, op, s, RetVal::Slot(0));
        assert!(check_linearizable_active_set(&b.h, A, LinLimits::default()).ok);
    }

    #[test]
    fn getset_cannot_unsee_a_completed_insert() {
        let mut b = Builder::new(2);
        let op = OpDesc::Insert { aset: A, item: ItemId(1) };
        let s = b.invoke(0, op.clone());
        b.respond(0, op, s, RetVal::Slot(0));
        b.getset(1, A, vec![]);
        let v = check_linearizable_active_set(&b.h, A, LinLimits::default());
        assert!(!v.ok);
    }

    #[test]
    fn too_many_ops_reports_bounded_out_not_a_pass() {
        let mut b = Builder::new(1);
        for i in 0..7 {
            b.getset(0, A, vec![]);
            let _ = i;
        }
        let v = check_linearizable_active_set(&b.h, A, LinLimits::default());
        assert!(!v.ok);
        assert_eq!(v.violations[0].rule, super::super::RULE_BOUNDED_OUT);
    }

    #[test]
    fn pending_insert_may_be_dropped() {
        let mut b = Builder::new(2);
        let _ = b.invoke(0, OpDesc::Insert { aset: A, item: ItemId(1) });
        b.getset(1, A, vec![]);
        assert!(check_linearizable_active_set(&b.h, A, LinLimits::default()).ok);
    }
}
