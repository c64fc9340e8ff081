//! Set-regular multi active set layered on active sets via a per-item
//! flag: multiInsert inserts into every set and then sets the flag (its
//! linearization point), multiRemove clears the flag first (its
//! linearization point) and then removes, and the filtered getSet reads
//! one active-set head and drops flag-false items during the scan.
//!
//! The flag accessor is a parameter: generic items use a boolean cell,
//! lock descriptors reuse their priority word (flag = priority > 0, with
//! TBD also counting for the adaptive variant), so one implementation
//! serves both.

use crate::engine::{Ctx, Frame, StepOut};
use crate::history::{LocalKind, OpDesc, RetVal};
use crate::mem::{ASetId, CellId, ItemId, NodeRef, Word};

/// How an item's flag is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagCfg {
    Bool { cell: CellId },
    Priority { cell: CellId, adaptive: bool },
}

impl FlagCfg {
    pub fn cell(&self) -> CellId {
        match *self {
            FlagCfg::Bool { cell } | FlagCfg::Priority { cell, .. } => cell,
        }
    }

    /// getFlag: interpret a word read from the flag cell.
    pub fn is_set(&self, w: Word) -> bool {
        match *self {
            FlagCfg::Bool { .. } => w == Word::Bool(true),
            FlagCfg::Priority { adaptive, .. } => match w {
                Word::Int(v) => v > 0,
                Word::Tbd => adaptive,
                _ => false,
            },
        }
    }

    /// clearFlag value.
    pub fn clear_word(&self) -> Word {
        match self {
            FlagCfg::Bool { .. } => Word::Bool(false),
            FlagCfg::Priority { .. } => Word::Int(-1),
        }
    }
}

/// How multiInsert's setFlag behaves for this item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevealSpec {
    /// Generic item: a plain write of true.
    Bool,
    /// Calibration probe: draw and write the priority with no delay.
    Immediate,
    /// Known-bounds lock: delay so the priority write lands exactly at
    /// local step `at`, then draw a random priority.
    Known { at: u64 },
    /// Adaptive lock: delay so the participation reveal lands on the next
    /// power-of-two local step, then write TBD.
    Adaptive,
}

#[derive(Debug, Clone)]
pub(crate) struct MultiInsertFrame {
    pub item: ItemId,
    pub sets: Vec<ASetId>,
    pub seq: u64,
    reveal: RevealSpec,
    set_idx: usize,
    slots: Vec<usize>,
    phase: MiPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MiPhase {
    ClearFlag,
    Inserts,
    SetFlag,
    Done,
}

impl MultiInsertFrame {
    pub(crate) fn new(item: ItemId, sets: Vec<ASetId>, reveal: RevealSpec) -> Self {
        MultiInsertFrame {
            item,
            sets,
            seq: 0,
            reveal,
            set_idx: 0,
            slots: Vec::new(),
            phase: MiPhase::ClearFlag,
        }
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            MiPhase::ClearFlag => {
                let flag = ctx.item(self.item).flag;
                ctx.write(flag.cell(), flag.clear_word());
                self.phase = MiPhase::Inserts;
                StepOut::Continue
            }
            MiPhase::Inserts => {
                if self.set_idx < self.sets.len() {
                    let aset = self.sets[self.set_idx];
                    StepOut::Call(Frame::Insert(crate::aset::InsertFrame::new(aset, self.item)))
                } else {
                    self.phase = MiPhase::SetFlag;
                    self.step(ctx)
                }
            }
            MiPhase::SetFlag => match self.reveal {
                RevealSpec::Bool => {
                    let flag = ctx.item(self.item).flag;
                    ctx.write(flag.cell(), Word::Bool(true));
                    self.phase = MiPhase::Done;
                    StepOut::Continue
                }
                RevealSpec::Immediate => {
                    let desc = ctx.item(self.item).desc.expect("priority flag on a descriptor");
                    let p = ctx.draw_priority();
                    ctx.write_reveal(desc, Word::Int(p), false);
                    self.phase = MiPhase::Done;
                    StepOut::Continue
                }
                RevealSpec::Known { at } => {
                    let steps = ctx.steps_taken();
                    if steps + 1 > at {
                        return StepOut::Fault(crate::engine::FaultKind::DelayOverrun {
                            target: at,
                            at: steps + 1,
                        });
                    }
                    if steps + 1 < at {
                        ctx.delay(at);
                        return StepOut::Continue;
                    }
                    let desc = ctx.item(self.item).desc.expect("priority flag on a descriptor");
                    let p = ctx.draw_priority();
                    ctx.write_reveal(desc, Word::Int(p), false);
                    self.phase = MiPhase::Done;
                    StepOut::Continue
                }
                RevealSpec::Adaptive => {
                    let steps = ctx.steps_taken();
                    let target = (steps + 1).next_power_of_two();
                    if steps + 1 < target {
                        ctx.delay(target);
                        return StepOut::Continue;
                    }
                    let desc = ctx.item(self.item).desc.expect("priority flag on a descriptor");
                    ctx.write_reveal(desc, Word::Tbd, true);
                    self.phase = MiPhase::Done;
                    StepOut::Continue
                }
            },
            MiPhase::Done => StepOut::Ret(RetVal::Slots(self.slots.clone())),
        }
    }

    pub(crate) fn deliver(&mut self, v: RetVal) {
        if let RetVal::Slot(s) = v {
            self.slots.push(s);
        }
        self.set_idx += 1;
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MultiRemoveFrame {
    pub item: ItemId,
    pub sets: Vec<ASetId>,
    pub seq: u64,
    slots: Vec<usize>,
    set_idx: usize,
    phase: MrPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MrPhase {
    ClearFlag,
    Removes,
    Done,
}

impl MultiRemoveFrame {
    pub(crate) fn new(item: ItemId, sets: Vec<ASetId>, slots: Vec<usize>) -> Self {
        MultiRemoveFrame { item, sets, seq: 0, slots, set_idx: 0, phase: MrPhase::ClearFlag }
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            MrPhase::ClearFlag => {
                let flag = ctx.item(self.item).flag;
                ctx.write(flag.cell(), flag.clear_word());
                self.phase = MrPhase::Removes;
                StepOut::Continue
            }
            MrPhase::Removes => {
                if self.set_idx < self.sets.len() {
                    let aset = self.sets[self.set_idx];
                    let slot = self.slots[self.set_idx];
                    StepOut::Call(Frame::Remove(crate::aset::RemoveFrame::new(
                        aset, slot, self.item,
                    )))
                } else {
                    self.phase = MrPhase::Done;
                    self.step(ctx)
                }
            }
            MrPhase::Done => StepOut::Ret(RetVal::Unit),
        }
    }

    pub(crate) fn deliver(&mut self, _v: RetVal) {
        self.set_idx += 1;
    }
}

/// Filtered getSet: one read of slot 0's set (the underlying constant
/// time getSet, recorded as its own operation), then a scan that hops
/// list nodes and reads each item's flag, keeping flag-true items.
#[derive(Debug, Clone)]
pub(crate) struct GsfFrame {
    pub aset: ASetId,
    pub seq: u64,
    cursor: Option<NodeRef>,
    current: Option<ItemId>,
    kept: Vec<ItemId>,
    phase: GsfPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GsfPhase {
    ReadHead,
    Walk,
    Flag,
    Done,
}

impl GsfFrame {
    pub(crate) fn new(aset: ASetId) -> Self {
        GsfFrame {
            aset,
            seq: 0,
            cursor: None,
            current: None,
            kept: Vec::new(),
            phase: GsfPhase::ReadHead,
        }
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            GsfPhase::ReadHead => {
                let head_cell = ctx.aset(self.aset).set_cell(0);
                let head = ctx.peek(head_cell);
                let resolved = match head {
                    Word::Node(r) => ctx.mem().list_items(Some(r)),
                    _ => vec![],
                };
                ctx.read_op(
                    head_cell,
                    OpDesc::GetSet { aset: self.aset },
                    RetVal::Items(resolved),
                );
                self.cursor = match head {
                    Word::Node(r) => Some(r),
                    _ => None,
                };
                self.phase = GsfPhase::Walk;
                StepOut::Continue
            }
            GsfPhase::Walk => match self.cursor {
                None => {
                    self.phase = GsfPhase::Done;
                    self.step(ctx)
                }
                Some(r) => {
                    let node = ctx.mem().node(r);
                    self.current = Some(node.item);
                    self.cursor = node.next;
                    ctx.local(LocalKind::ListWalk);
                    self.phase = GsfPhase::Flag;
                    StepOut::Continue
                }
            },
            GsfPhase::Flag => {
                let item = self.current.expect("walk sets current");
                let flag = ctx.item(item).flag;
                let w = ctx.read(flag.cell());
                if flag.is_set(w) {
                    self.kept.push(item);
                }
                self.phase = GsfPhase::Walk;
                StepOut::Continue
            }
            GsfPhase::Done => StepOut::Ret(RetVal::Items(self.kept.clone())),
        }
    }

    pub(crate) fn deliver(&mut self, _v: RetVal) {
        unreachable!("filtered getSet has no children")
    }
}
