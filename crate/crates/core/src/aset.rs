//! Linearizable contention-adaptive active set.
//!
//! An announcements array of C slots, each holding an owner cell and a
//! set cell pointing at an immutable cons list. Insert CASes the item
//! into the first ownerless slot and climbs; remove nulls the owner and
//! climbs. Climb walks from the starting slot down to slot 0, twice per
//! level, rebuilding each slot's list as (next slot's list) consed with
//! the slot's current owner, so getSet is a single read of slot 0's set
//! cell.
//!
//! Linearization points (checked by the verifier, not assumed):
//! - getSet at its read of slot 0's set pointer;
//! - insert at the first successful CAS on slot 0's set whose new list
//!   contains the item;
//! - remove at the first successful CAS on slot 0's set after the remove
//!   began whose new list omits the item.

use crate::engine::{Ctx, FaultKind, Frame, StepOut};
use crate::history::RetVal;
use crate::mem::{ASetId, CellId, ItemId, Mem, NodeRef, Word};

/// Runtime state of one active set object.
#[derive(Debug, Clone)]
pub struct AsetObj {
    owners: Vec<CellId>,
    sets: Vec<CellId>,
}

impl AsetObj {
    pub fn alloc(mem: &mut Mem, capacity: u32) -> Self {
        AsetObj {
            owners: (0..capacity).map(|_| mem.alloc(Word::Null)).collect(),
            sets: (0..capacity).map(|_| mem.alloc(Word::Null)).collect(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.owners.len()
    }

    pub fn owner_cell(&self, slot: usize) -> CellId {
        self.owners[slot]
    }

    pub fn set_cell(&self, slot: usize) -> CellId {
        self.sets[slot]
    }
}

/// Insert: scan for an ownerless slot, CAS the item in, climb from there.
#[derive(Debug, Clone)]
pub(crate) struct InsertFrame {
    pub aset: ASetId,
    pub item: ItemId,
    pub seq: u64,
    slot: usize,
    phase: InsertPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InsertPhase {
    TryCas,
    StartClimb,
    Done,
}

impl InsertFrame {
    pub(crate) fn new(aset: ASetId, item: ItemId) -> Self {
        InsertFrame { aset, item, seq: 0, slot: 0, phase: InsertPhase::TryCas }
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            InsertPhase::TryCas => {
                let capacity = ctx.aset(self.aset).capacity();
                if self.slot >= capacity {
                    return StepOut::Fault(FaultKind::CapacityExceeded {
                        aset: self.aset,
                        capacity: capacity as u32,
                    });
                }
                let owner = ctx.aset(self.aset).owner_cell(self.slot);
                if ctx.cas(owner, Word::Null, Word::Item(self.item)) {
                    self.phase = InsertPhase::StartClimb;
                } else {
                    self.slot += 1;
                }
                StepOut::Continue
            }
            InsertPhase::StartClimb => {
                StepOut::Call(Frame::Climb(ClimbFrame::new(self.aset, self.slot)))
            }
            InsertPhase::Done => StepOut::Ret(RetVal::Slot(self.slot)),
        }
    }

    pub(crate) fn deliver(&mut self, _v: RetVal) {
        self.phase = InsertPhase::Done;
    }
}

/// Remove: null the owner of the slot this item's insert claimed, climb.
#[derive(Debug, Clone)]
pub(crate) struct RemoveFrame {
    pub aset: ASetId,
    pub slot: usize,
    pub item: ItemId,
    pub seq: u64,
    phase: RemovePhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RemovePhase {
    ClearOwner,
    StartClimb,
    Done,
}

impl RemoveFrame {
    pub(crate) fn new(aset: ASetId, slot: usize, item: ItemId) -> Self {
        RemoveFrame { aset, slot, item, seq: 0, phase: RemovePhase::ClearOwner }
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            RemovePhase::ClearOwner => {
                let owner = ctx.aset(self.aset).owner_cell(self.slot);
                ctx.write(owner, Word::Null);
                self.phase = RemovePhase::StartClimb;
                StepOut::Continue
            }
            RemovePhase::StartClimb => {
                StepOut::Call(Frame::Climb(ClimbFrame::new(self.aset, self.slot)))
            }
            RemovePhase::Done => StepOut::Ret(RetVal::Unit),
        }
    }

    pub(crate) fn deliver(&mut self, _v: RetVal) {
        self.phase = RemovePhase::Done;
    }
}

/// Climb from `from` down to 0, two CAS attempts per level. Each attempt
/// reads the level's current set, the base set (next level up, or the
/// level's own set at the top of the array), and the level's owner, then
/// conses the owner onto the base and CASes, ignoring the outcome.
#[derive(Debug, Clone)]
pub(crate) struct ClimbFrame {
    pub aset: ASetId,
    pub from: usize,
    pub seq: u64,
    j: usize,
    attempt: u8,
    cur: Word,
    base: Option<NodeRef>,
    owner: Word,
    new_head: Word,
    phase: ClimbPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClimbPhase {
    ReadCur,
    ReadBase,
    ReadOwner,
    Cons,
    DoCas,
    Finished,
}

impl ClimbFrame {
    pub(crate) fn new(aset: ASetId, from: usize) -> Self {
        ClimbFrame {
            aset,
            from,
            seq: 0,
            j: from,
            attempt: 1,
            cur: Word::Null,
            base: None,
            owner: Word::Null,
            new_head: Word::Null,
            phase: ClimbPhase::ReadCur,
        }
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            ClimbPhase::ReadCur => {
                self.cur = ctx.read(ctx.aset(self.aset).set_cell(self.j));
                self.phase = ClimbPhase::ReadBase;
                StepOut::Continue
            }
            ClimbPhase::ReadBase => {
                let aset = ctx.aset(self.aset);
                // Top-of-array corner case: no slot above, base is the
                // level's own set.
                let base_cell = if self.j + 1 < aset.capacity() {
                    aset.set_cell(self.j + 1)
                } else {
                    aset.set_cell(self.j)
                };
                let base = ctx.read(base_cell);
                self.base = match base {
                    Word::Null => None,
                    Word::Node(r) => Some(r),
                    other => {
                        return StepOut::Fault(FaultKind::Config(format!(
                            "set cell held non-list word {other:?}"
                        )))
                    }
                };
                self.phase = ClimbPhase::ReadOwner;
                StepOut::Continue
            }
            ClimbPhase::ReadOwner => {
                self.owner = ctx.read(ctx.aset(self.aset).owner_cell(self.j));
                match self.owner {
                    Word::Null => {
                        self.new_head = match self.base {
                            Some(r) => Word::Node(r),
                            None => Word::Null,
                        };
                        self.phase = ClimbPhase::DoCas;
                    }
                    Word::Item(_) => self.phase = ClimbPhase::Cons,
                    other => {
                        return StepOut::Fault(FaultKind::Config(format!(
                            "owner cell held non-item word {other:?}"
                        )))
                    }
                }
                StepOut::Continue
            }
            ClimbPhase::Cons => {
                let Word::Item(item) = self.owner else { unreachable!() };
                let node = ctx.mem_mut().publish_node(item, self.base);
                ctx.local(crate::history::LocalKind::Cons);
                self.new_head = Word::Node(node);
                self.phase = ClimbPhase::DoCas;
                StepOut::Continue
            }
            ClimbPhase::DoCas => {
                let cell = ctx.aset(self.aset).set_cell(self.j);
                ctx.cas(cell, self.cur, self.new_head);
                if self.attempt == 1 {
                    self.attempt = 2;
                    self.phase = ClimbPhase::ReadCur;
                } else if self.j == 0 {
                    self.phase = ClimbPhase::Finished;
                } else {
                    self.j -= 1;
                    self.attempt = 1;
                    self.phase = ClimbPhase::ReadCur;
                }
                StepOut::Continue
            }
            ClimbPhase::Finished => StepOut::Ret(RetVal::Unit),
        }
    }

    pub(crate) fn deliver(&mut self, _v: RetVal) {
        unreachable!("climb has no children")
    }
}
