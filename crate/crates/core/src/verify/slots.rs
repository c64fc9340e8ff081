//! Contention adaptivity: an insert that lands in slot i must have seen
//! membership point contention of at least i+1 at some instant of its
//! interval. The checker recomputes the membership point contention from
//! operation endpoints: an item is counted from its insert's invocation
//! until its remove's response (ongoing inserts count, matching the
//! definition of membership point contention).

use std::collections::HashMap;

use crate::history::{History, OpDesc, RetVal};
use crate::mem::{ASetId, ItemId};

use super::{spans, Verdict};

pub fn check_slot_bound(history: &History) -> Verdict {
    let mut verdict = Verdict::pass();
    // Presence windows per aset: (start, end) per item.
    let mut windows: HashMap<ASetId, Vec<(u64, u64)>> = HashMap::new();
    // Completed inserts to check: (aset, item, slot, inv, resp).
    let mut inserts: Vec<(ASetId, ItemId, usize, u64, u64)> = Vec::new();
    let mut removes: HashMap<(ASetId, ItemId), u64> = HashMap::new();

    let all = spans(history);
    for s in &all {
        if let OpDesc::Remove { aset, item, .. } = &s.op {
            if let Some(r) = s.resp_tick {
                removes.insert((*aset, *item), r);
            }
        }
    }
    for s in &all {
        if let OpDesc::Insert { aset, item } = &s.op {
            let end = removes.get(&(*aset, *item)).copied().unwrap_or(u64::MAX);
            windows.entry(*aset).or_default().push((s.inv_tick, end));
            if let (Some(resp), Some(RetVal::Slot(slot))) = (s.resp_tick, &s.ret) {
                inserts.push((*aset, *item, *slot, s.inv_tick, resp));
            }
        }
    }

    for (aset, item, slot, inv, resp) in inserts {
        let Some(ws) = windows.get(&aset) else { continue };
        // Membership point contention within [inv, resp]: sweep window
        // endpoints clamped to the insert's interval.
        let mut best = 0usize;
        for &(t, _) in ws.iter() {
            let probe = t.clamp(inv, resp);
            let k = ws.iter().filter(|&&(s, e)| s <= probe && probe <= e).count();
            best = best.max(k);
        }
        // Also probe the interval endpoints themselves.
        for probe in [inv, resp] {
            let k = ws.iter().filter(|&&(s, e)| s <= probe && probe <= e).count();
            best = best.max(k);
        }
        if best < slot + 1 {
            verdict.push(
                "slot-contention-bound",
                vec![inv, resp],
                format!(
                    "insert of {item:?} into {aset:?} won slot {slot}, but membership point \
                     contention never exceeded {best} during its interval (need >= {})",
                    slot + 1
                ),
            );
        }
    }
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Event, EventKind};
    use crate::mem::ProcId;

    const A: ASetId = ASetId(0);

    struct Builder {
        h: History,
        seq: u64,
    }

    impl Builder {
        fn new() -> Self {
            Builder { h: History::new(4, 0), seq: 0 }
        }

        fn push(&mut self, proc: u32, kind: EventKind) {
            let tick = self.h.len() as u64;
            self.h.push(Event { tick, proc: ProcId(proc), local_step: tick + 1, kind });
        }

        fn insert_open(&mut self, proc: u32, item: u64) -> u64 {
            let seq = self.seq;
            self.seq += 1;
            self.push(
                proc,
                EventKind::Invoke {
                    op: OpDesc::Insert { aset: A, item: ItemId(item) },
                    seq,
                    warn: None,
                },
            );
            seq
        }

        fn insert_close(&mut self, proc: u32, item: u64, seq: u64, slot: usize) {
            self.push(
                proc,
                EventKind::Respond {
                    op: OpDesc::Insert { aset: A, item: ItemId(item) },
                    seq,
                    ret: RetVal::Slot(slot),
                },
            );
        }
    }

    #[test]
    fn solo_insert_in_slot_zero_passes() {
        let mut b = Builder::new();
        let s = b.insert_open(0, 1);
        b.insert_close(0, 1, s, 0);
        assert!(check_slot_bound(&b.h).ok);
    }

    #[test]
    fn three_way_race_justifies_slot_two() {
        let mut b = Builder::new();
        let s0 = b.insert_open(0, 1);
        let s1 = b.insert_open(1, 2);
        let s2 = b.insert_open(2, 3);
        b.insert_close(0, 1, s0, 0);
        b.insert_close(1, 2, s1, 1);
        b.insert_close(2, 3, s2, 2);
        assert!(check_slot_bound(&b.h).ok);
    }

    #[test]
    fn teleported_slot_violates() {
        // Two overlapping inserts at most: a slot-5 landing is impossible.
        let mut b = Builder::new();
        let s0 = b.insert_open(0, 1);
        let s1 = b.insert_open(1, 2);
        b.insert_close(0, 1, s0, 0);
        b.insert_close(1, 2, s1, 5);
        let v = check_slot_bound(&b.h);
        assert!(!v.ok);
        assert!(v.violations[0].explanation.contains("slot 5"));
    }
}
