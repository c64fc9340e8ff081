//! Set regularity, checked at operation endpoints: a filtered getSet
//! invoked after a multiInsert's response and responding before the
//! matching multiRemove's invocation must include the item; one
//! responding before the multiInsert's invocation, or invoked after the
//! multiRemove's response, must exclude it. Overlapping getSets may do
//! either.

use std::collections::HashMap;

use crate::history::{History, OpDesc, RetVal};
use crate::mem::{ASetId, ItemId};

use super::{spans, Verdict};

struct MultiOp {
    sets: Vec<ASetId>,
    inv: u64,
    resp: Option<u64>,
}

pub fn check_set_regularity(history: &History) -> Verdict {
    let mut verdict = Verdict::pass();
    let mut inserts: HashMap<ItemId, MultiOp> = HashMap::new();
    let mut removes: HashMap<ItemId, MultiOp> = HashMap::new();
    let mut getsets: Vec<(ASetId, u64, Option<u64>, Vec<ItemId>, u64)> = Vec::new();

    for s in spans(history) {
        match &s.op {
            OpDesc::MultiInsert { item, sets } => {
                if inserts
                    .insert(*item, MultiOp { sets: sets.clone(), inv: s.inv_tick, resp: s.resp_tick })
                    .is_some()
                {
                    verdict.push(
                        "set-regularity",
                        vec![s.inv_tick],
                        format!("item {item:?} multi-inserted twice; epochs must be fresh items"),
                    );
                }
            }
            OpDesc::MultiRemove { item, sets } => {
                removes.insert(
                    *item,
                    MultiOp { sets: sets.clone(), inv: s.inv_tick, resp: s.resp_tick },
                );
            }
            OpDesc::GetSetFiltered { aset } => {
                let items = match &s.ret {
                    Some(RetVal::Items(v)) => v.clone(),
                    _ => {
                        if s.completed() {
                            vec![]
                        } else {
                            continue; // truncated scan: no result to judge
                        }
                    }
                };
                getsets.push((*aset, s.inv_tick, s.resp_tick, items, s.inv_tick));
            }
            _ => {}
        }
    }

    for (item, mi) in &inserts {
        let mr = removes.get(item);
        for (aset, g_inv, g_resp, items, tick) in &getsets {
            if !mi.sets.contains(aset) {
                continue;
            }
            let Some(g_resp) = g_resp else { continue };
            let contains = items.contains(item);
            // Responded before the insert was even invoked: must exclude.
            if *g_resp < mi.inv && contains {
                verdict.push(
                    "set-regularity",
                    vec![*tick, mi.inv],
                    format!(
                        "getSet on {aset:?} responded at {g_resp} before multiInsert({item:?}) \
                         was invoked at {} yet returned the item",
                        mi.inv
                    ),
                );
            }
            // Invoked strictly inside the inserted window: must include.
            if let Some(mi_resp) = mi.resp {
                let before_remove = mr.map_or(true, |r| *g_resp < r.inv);
                if *g_inv > mi_resp && before_remove && !contains {
                    verdict.push(
                        "set-regularity",
                        vec![*tick, mi_resp],
                        format!(
                            "getSet on {aset:?} invoked at {g_inv} after multiInsert({item:?}) \
                             responded at {mi_resp} and responding before the multiRemove, \
                             yet omitted the item"
                        ),
                    );
                }
            }
            // Invoked after the remove completed: must exclude.
            if let Some(r) = mr {
                if let Some(r_resp) = r.resp {
                    if *g_inv > r_resp && contains {
                        verdict.push(
                            "set-regularity",
                            vec![*tick, r_resp],
                            format!(
                                "getSet on {aset:?} invoked at {g_inv} after \
                                 multiRemove({item:?}) responded at {r_resp} yet returned the item"
                            ),
                        );
                    }
                }
            }
        }
    }
    verdict
}
