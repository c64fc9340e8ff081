//! The unknown-bounds tryLock variant: the reveal is split into a
//! participation reveal (priority -1 -> TBD, landing on a power-of-two
//! local step) and a priority reveal (a CAS TBD -> random value that any
//! helper may land). run snapshots every lock's filtered set before the
//! priority reveal and never queries the active sets afterwards; the
//! comparison loop walks the cached sets, and the attempt's post delay is
//! numContenders · T ticks.

use crate::engine::{Ctx, FaultKind, Frame, StepOut};
use crate::history::{LocalKind, RetVal};
use crate::mem::{ASetId, DescId, ItemId, Status, Word};

/// Helping core for the adaptive variant. Returns the total cached-set
/// size (numContenders).
#[derive(Debug, Clone)]
pub(crate) struct RunAdaptiveFrame {
    pub subject: DescId,
    pub locks: Vec<ASetId>,
    pub seq: u64,
    cached: Vec<Vec<ItemId>>,
    lock_idx: usize,
    member_idx: usize,
    my_priority: Word,
    other_priority: Word,
    phase: RaPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RaPhase {
    Snapshot,
    RevealCas,
    CheckActive,
    MemberStatus,
    ReadMyPriority,
    ReadOtherPriority,
    Branch,
    CelebrateCheck,
    CelebrateRun,
    Decide,
    SelfCelebrateCheck,
    SelfCelebrateRun,
    Finish,
}

impl RunAdaptiveFrame {
    pub(crate) fn new(subject: DescId, locks: Vec<ASetId>) -> Self {
        RunAdaptiveFrame {
            subject,
            locks,
            seq: 0,
            cached: Vec::new(),
            lock_idx: 0,
            member_idx: 0,
            my_priority: Word::Null,
            other_priority: Word::Null,
            phase: RaPhase::Snapshot,
        }
    }

    fn num_contenders(&self) -> usize {
        self.cached.iter().map(Vec::len).sum()
    }

    fn members(&self) -> &[ItemId] {
        &self.cached[self.lock_idx]
    }

    fn current_member(&self, ctx: &Ctx<'_>) -> Result<DescId, FaultKind> {
        let item = self.members()[self.member_idx];
        ctx.item(item)
            .desc
            .ok_or_else(|| FaultKind::Config("non-descriptor item in a lock's active set".into()))
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            RaPhase::Snapshot => {
                if self.cached.len() < self.locks.len() {
                    StepOut::Call(Frame::GetSetFiltered(crate::maset::GsfFrame::new(
                        self.locks[self.cached.len()],
                    )))
                } else {
                    self.phase = RaPhase::RevealCas;
                    self.step(ctx)
                }
            }
            RaPhase::RevealCas => {
                // Priority reveal: only the first CAS lands; helpers each
                // offer a draw from their own stream.
                let draw = ctx.draw_priority();
                ctx.cas_reveal(self.subject, Word::Int(draw));
                self.lock_idx = 0;
                self.phase = RaPhase::CheckActive;
                StepOut::Continue
            }
            RaPhase::CheckActive => {
                if self.lock_idx >= self.locks.len() {
                    self.phase = RaPhase::Decide;
                    return self.step(ctx);
                }
                let cell = ctx.desc(self.subject).status_cell;
                let active = ctx.read(cell) == Word::Status(Status::Active);
                if active && !self.members().is_empty() {
                    self.member_idx = 0;
                    self.phase = RaPhase::MemberStatus;
                } else {
                    self.lock_idx += 1;
                }
                StepOut::Continue
            }
            RaPhase::MemberStatus => {
                if self.member_idx >= self.members().len() {
                    self.lock_idx += 1;
                    self.phase = RaPhase::CheckActive;
                    return self.step(ctx);
                }
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                let cell = ctx.desc(other).status_cell;
                let active = ctx.read(cell) == Word::Status(Status::Active);
                self.phase = if active { RaPhase::ReadMyPriority } else { RaPhase::CelebrateCheck };
                StepOut::Continue
            }
            RaPhase::ReadMyPriority => {
                let cell = ctx.desc(self.subject).priority_cell;
                self.my_priority = ctx.read(cell);
                self.phase = RaPhase::ReadOtherPriority;
                StepOut::Continue
            }
            RaPhase::ReadOtherPriority => {
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                let cell = ctx.desc(other).priority_cell;
                self.other_priority = ctx.read(cell);
                self.phase = RaPhase::Branch;
                StepOut::Continue
            }
            RaPhase::Branch => {
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                self.phase = RaPhase::CelebrateCheck;
                match (self.my_priority, self.other_priority) {
                    // TBD has no order against integers: skip the pair and
                    // leave the elimination obligation to the other
                    // descriptor's own run.
                    (Word::Tbd, _) | (_, Word::Tbd) => {
                        ctx.local(LocalKind::Compare);
                    }
                    (Word::Int(mine), Word::Int(theirs)) if mine > theirs => {
                        ctx.cas_status(other, Status::Active, Status::Lost);
                    }
                    _ if other != self.subject => {
                        ctx.cas_status(self.subject, Status::Active, Status::Lost);
                    }
                    _ => {
                        ctx.local(LocalKind::Compare);
                    }
                }
                StepOut::Continue
            }
            RaPhase::CelebrateCheck => {
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                let cell = ctx.desc(other).status_cell;
                let won = ctx.read(cell) == Word::Status(Status::Won);
                if won {
                    self.phase = RaPhase::CelebrateRun;
                } else {
                    self.member_idx += 1;
                    self.phase = RaPhase::MemberStatus;
                }
                StepOut::Continue
            }
            RaPhase::CelebrateRun => {
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                let thunk = ctx.desc(other).thunk;
                StepOut::Call(Frame::RunThunk(crate::thunk::RunThunkFrame::new(
                    thunk,
                    Some(other),
                )))
            }
            RaPhase::Decide => {
                ctx.cas_status(self.subject, Status::Active, Status::Won);
                self.phase = RaPhase::SelfCelebrateCheck;
                StepOut::Continue
            }
            RaPhase::SelfCelebrateCheck => {
                let cell = ctx.desc(self.subject).status_cell;
                let won = ctx.read(cell) == Word::Status(Status::Won);
                self.phase = if won { RaPhase::SelfCelebrateRun } else { RaPhase::Finish };
                StepOut::Continue
            }
            RaPhase::SelfCelebrateRun => {
                let thunk = ctx.desc(self.subject).thunk;
                StepOut::Call(Frame::RunThunk(crate::thunk::RunThunkFrame::new(
                    thunk,
                    Some(self.subject),
                )))
            }
            RaPhase::Finish => StepOut::Ret(RetVal::Count(self.num_contenders())),
        }
    }

    pub(crate) fn deliver(&mut self, v: RetVal) {
        match self.phase {
            RaPhase::Snapshot => {
                if let RetVal::Items(items) = v {
                    self.cached.push(items);
                }
            }
            RaPhase::CelebrateRun => {
                self.member_idx += 1;
                self.phase = RaPhase::MemberStatus;
            }
            RaPhase::SelfCelebrateRun => {
                self.phase = RaPhase::Finish;
            }
            _ => unreachable!("no children in phase {:?}", self.phase),
        }
    }
}
