//! The known-bounds randomized wait-free tryLock.
//!
//! An attempt: create a descriptor (status active, priority -1); help
//! every revealed descriptor on every lock in the list; multiInsert with
//! the reveal as setFlag, delayed so the priority write lands exactly
//! T0 = c0·kappa²·L²·T local steps after the attempt started; run the
//! descriptor's own competition; multiRemove; then delay so the attempt's
//! response lands exactly T1 = c1·kappa·L·T steps after the reveal.
//! Every attempt therefore takes the same number of initiator steps from
//! start to reveal, and from reveal to response, regardless of schedule.
//!
//! The run function is the helping core: any process may execute it for
//! any descriptor. It compares priorities of active descriptors on each
//! lock, eliminates the lower one (ties eliminate the caller's subject),
//! decides, and celebrates winners by running their idempotent thunks —
//! both for competitors it saw and for the subject itself, which is what
//! makes a winner's thunk finish before a later conflicting winner's.

use crate::engine::{Ctx, FaultKind, Frame, StepOut};
use crate::history::{LocalKind, LockVariant, RetVal};
use crate::mem::{ASetId, DescId, ItemId, Status, Word};

/// Lock-algorithm configuration. The delay constants c0/c1 come from the
/// calibration oracle; the formulas T0/T1 are fixed here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockSetup {
    /// kappa: max point contention per lock.
    pub kappa: u64,
    /// L: max locks per attempt.
    pub max_locks: u64,
    /// T: max ticks of one thunk run.
    pub max_thunk_ticks: u64,
    /// Pre-reveal delay constant.
    pub c0: u64,
    /// Post-reveal delay constant.
    pub c1: u64,
    /// M: priorities are drawn uniformly from [1, M].
    pub priority_range: u64,
    pub variant: LockVariant,
    /// Announcements-array capacity override; defaults to kappa for the
    /// known variant and P for the adaptive one.
    pub capacity_override: Option<u32>,
    /// Calibration probe: reveal immediately and skip the post delay so
    /// organic step counts can be measured.
    pub probe: bool,
}

impl LockSetup {
    pub fn known(kappa: u64, max_locks: u64, max_thunk_ticks: u64) -> Self {
        LockSetup {
            kappa,
            max_locks,
            max_thunk_ticks,
            c0: 1,
            c1: 1,
            priority_range: 0,
            variant: LockVariant::Known,
            capacity_override: None,
            probe: false,
        }
    }

    pub fn adaptive(kappa: u64, max_locks: u64, max_thunk_ticks: u64) -> Self {
        LockSetup { variant: LockVariant::Adaptive, ..Self::known(kappa, max_locks, max_thunk_ticks) }
    }

    /// M polynomial in the process count: P³.
    pub fn with_priority_range_for(mut self, procs: u32) -> Self {
        self.priority_range = (procs as u64).pow(3).max(2);
        self
    }

    pub fn with_constants(mut self, c0: u64, c1: u64) -> Self {
        self.c0 = c0;
        self.c1 = c1;
        self
    }

    pub fn as_probe(mut self) -> Self {
        self.probe = true;
        self
    }

    /// Fixed initiator steps from attempt start to the reveal.
    pub fn t0(&self) -> u64 {
        self.c0 * self.kappa * self.kappa * self.max_locks * self.max_locks * self.max_thunk_ticks
    }

    /// Fixed initiator steps from the reveal to the attempt's response.
    pub fn t1(&self) -> u64 {
        self.c1 * self.kappa * self.max_locks * self.max_thunk_ticks
    }

    pub fn aset_capacity(&self, procs: u32) -> u32 {
        if let Some(c) = self.capacity_override {
            return c;
        }
        match self.variant {
            LockVariant::Known => self.kappa as u32,
            LockVariant::Adaptive => procs,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kappa == 0 || self.max_locks == 0 || self.max_thunk_ticks == 0 {
            return Err("kappa, max_locks and max_thunk_ticks must be >= 1".into());
        }
        if self.c0 == 0 || self.c1 == 0 {
            return Err("delay constants must be >= 1".into());
        }
        if self.priority_range < 2 {
            return Err("priority range must be >= 2".into());
        }
        Ok(())
    }
}

/// One tryLock attempt, from descriptor creation to the fixed-length
/// post-delay. Handles both variants; they differ in the reveal, the run
/// frame, and the post-delay shape.
#[derive(Debug, Clone)]
pub(crate) struct TryLocksFrame {
    pub desc: DescId,
    pub locks: Vec<ASetId>,
    pub variant: LockVariant,
    pub seq: u64,
    /// Local step ordinal of the attempt-start event.
    pub start_step: u64,
    lock_idx: usize,
    members: Vec<ItemId>,
    member_idx: usize,
    slots: Vec<usize>,
    num_contenders: usize,
    post_delay_left: Option<u64>,
    won: bool,
    phase: TlPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TlPhase {
    HelpGetSet,
    HelpRun,
    MultiIns,
    SelfRun,
    MultiRem,
    PostDelay,
    ReadStatus,
    Finish,
}

impl TryLocksFrame {
    pub(crate) fn new(desc: DescId, locks: Vec<ASetId>, variant: LockVariant) -> Self {
        TryLocksFrame {
            desc,
            locks,
            variant,
            seq: 0,
            start_step: 0,
            lock_idx: 0,
            members: Vec::new(),
            member_idx: 0,
            slots: Vec::new(),
            num_contenders: 0,
            post_delay_left: None,
            won: false,
            phase: TlPhase::HelpGetSet,
        }
    }

    fn run_frame_for(&self, ctx: &Ctx<'_>, subject: DescId) -> Frame {
        let locks = ctx.desc(subject).locks.clone();
        match self.variant {
            LockVariant::Known => Frame::Run(RunFrame::new(subject, locks)),
            LockVariant::Adaptive => Frame::RunAdaptive(
                crate::lock_adaptive::RunAdaptiveFrame::new(subject, locks),
            ),
        }
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            TlPhase::HelpGetSet => {
                if self.lock_idx < self.locks.len() {
                    StepOut::Call(Frame::GetSetFiltered(crate::maset::GsfFrame::new(
                        self.locks[self.lock_idx],
                    )))
                } else {
                    self.phase = TlPhase::MultiIns;
                    self.step(ctx)
                }
            }
            TlPhase::HelpRun => {
                if self.member_idx < self.members.len() {
                    let item = self.members[self.member_idx];
                    self.member_idx += 1;
                    let Some(other) = ctx.item(item).desc else {
                        return StepOut::Fault(FaultKind::Config(
                            "non-descriptor item in a lock's active set".into(),
                        ));
                    };
                    StepOut::Call(self.run_frame_for(ctx, other))
                } else {
                    self.lock_idx += 1;
                    self.phase = TlPhase::HelpGetSet;
                    self.step(ctx)
                }
            }
            TlPhase::MultiIns => {
                let item = ctx.desc(self.desc).item;
                let setup = ctx.lock_setup().expect("lock workload");
                let reveal = match self.variant {
                    LockVariant::Known if setup.probe => crate::maset::RevealSpec::Immediate,
                    LockVariant::Known => {
                        crate::maset::RevealSpec::Known { at: self.start_step + setup.t0() }
                    }
                    LockVariant::Adaptive => crate::maset::RevealSpec::Adaptive,
                };
                StepOut::Call(Frame::MultiInsert(crate::maset::MultiInsertFrame::new(
                    item,
                    self.locks.clone(),
                    reveal,
                )))
            }
            TlPhase::SelfRun => StepOut::Call(self.run_frame_for(ctx, self.desc)),
            TlPhase::MultiRem => {
                let item = ctx.desc(self.desc).item;
                StepOut::Call(Frame::MultiRemove(crate::maset::MultiRemoveFrame::new(
                    item,
                    self.locks.clone(),
                    self.slots.clone(),
                )))
            }
            TlPhase::PostDelay => match self.variant {
                LockVariant::Known => {
                    let setup = ctx.lock_setup().expect("lock workload");
                    if setup.probe {
                        self.phase = TlPhase::ReadStatus;
                        return self.step(ctx);
                    }
                    // Response lands exactly at start + T0 + T1: leave one
                    // tick for the status read and one for the response.
                    let target = self.start_step + setup.t0() + setup.t1() - 2;
                    let steps = ctx.steps_taken();
                    if steps > target {
                        return StepOut::Fault(FaultKind::DelayOverrun { target, at: steps });
                    }
                    if steps < target {
                        ctx.delay(target);
                        return StepOut::Continue;
                    }
                    self.phase = TlPhase::ReadStatus;
                    self.step(ctx)
                }
                LockVariant::Adaptive => {
                    let setup = ctx.lock_setup().expect("lock workload");
                    let left = self.post_delay_left.get_or_insert(
                        self.num_contenders as u64 * setup.max_thunk_ticks,
                    );
                    if *left > 0 {
                        let target = ctx.steps_taken() + *left;
                        *left -= 1;
                        ctx.delay(target);
                        return StepOut::Continue;
                    }
                    self.phase = TlPhase::ReadStatus;
                    self.step(ctx)
                }
            },
            TlPhase::ReadStatus => {
                let cell = ctx.desc(self.desc).status_cell;
                self.won = ctx.read(cell) == Word::Status(Status::Won);
                self.phase = TlPhase::Finish;
                StepOut::Continue
            }
            TlPhase::Finish => StepOut::Ret(RetVal::Bool(self.won)),
        }
    }

    pub(crate) fn deliver(&mut self, v: RetVal) {
        match self.phase {
            TlPhase::HelpGetSet => {
                if let RetVal::Items(items) = v {
                    self.members = items;
                    self.member_idx = 0;
                    self.phase = TlPhase::HelpRun;
                }
            }
            TlPhase::HelpRun => {}
            TlPhase::MultiIns => {
                if let RetVal::Slots(slots) = v {
                    self.slots = slots;
                }
                self.phase = TlPhase::SelfRun;
            }
            TlPhase::SelfRun => {
                if let RetVal::Count(n) = v {
                    self.num_contenders = n;
                }
                self.phase = TlPhase::MultiRem;
            }
            TlPhase::MultiRem => {
                self.phase = TlPhase::PostDelay;
            }
            _ => unreachable!("no children in phase {:?}", self.phase),
        }
    }
}

/// The helping core for the known variant: compare against every active
/// descriptor on every lock, decide, celebrate.
#[derive(Debug, Clone)]
pub(crate) struct RunFrame {
    pub subject: DescId,
    pub locks: Vec<ASetId>,
    pub seq: u64,
    lock_idx: usize,
    members: Vec<ItemId>,
    member_idx: usize,
    my_priority: Word,
    other_priority: Word,
    phase: RunPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunPhase {
    GetSet,
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

impl RunFrame {
    pub(crate) fn new(subject: DescId, locks: Vec<ASetId>) -> Self {
        RunFrame {
            subject,
            locks,
            seq: 0,
            lock_idx: 0,
            members: Vec::new(),
            member_idx: 0,
            my_priority: Word::Null,
            other_priority: Word::Null,
            phase: RunPhase::GetSet,
        }
    }

    fn current_member(&self, ctx: &Ctx<'_>) -> Result<DescId, FaultKind> {
        let item = self.members[self.member_idx];
        ctx.item(item)
            .desc
            .ok_or_else(|| FaultKind::Config("non-descriptor item in a lock's active set".into()))
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.phase {
            RunPhase::GetSet => {
                if self.lock_idx < self.locks.len() {
                    StepOut::Call(Frame::GetSetFiltered(crate::maset::GsfFrame::new(
                        self.locks[self.lock_idx],
                    )))
                } else {
                    self.phase = RunPhase::Decide;
                    self.step(ctx)
                }
            }
            RunPhase::CheckActive => {
                let cell = ctx.desc(self.subject).status_cell;
                let active = ctx.read(cell) == Word::Status(Status::Active);
                if active && !self.members.is_empty() {
                    self.member_idx = 0;
                    self.phase = RunPhase::MemberStatus;
                } else {
                    self.lock_idx += 1;
                    self.phase = RunPhase::GetSet;
                }
                StepOut::Continue
            }
            RunPhase::MemberStatus => {
                if self.member_idx >= self.members.len() {
                    self.lock_idx += 1;
                    self.phase = RunPhase::GetSet;
                    return self.step(ctx);
                }
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                let cell = ctx.desc(other).status_cell;
                let active = ctx.read(cell) == Word::Status(Status::Active);
                self.phase = if active { RunPhase::ReadMyPriority } else { RunPhase::CelebrateCheck };
                StepOut::Continue
            }
            RunPhase::ReadMyPriority => {
                let cell = ctx.desc(self.subject).priority_cell;
                self.my_priority = ctx.read(cell);
                self.phase = RunPhase::ReadOtherPriority;
                StepOut::Continue
            }
            RunPhase::ReadOtherPriority => {
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                let cell = ctx.desc(other).priority_cell;
                self.other_priority = ctx.read(cell);
                self.phase = RunPhase::Branch;
                StepOut::Continue
            }
            RunPhase::Branch => {
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                self.phase = RunPhase::CelebrateCheck;
                match (self.my_priority, self.other_priority) {
                    (Word::Int(mine), Word::Int(theirs)) if mine > theirs => {
                        ctx.cas_status(other, Status::Active, Status::Lost);
                    }
                    _ if other != self.subject => {
                        ctx.cas_status(self.subject, Status::Active, Status::Lost);
                    }
                    _ => {
                        // Self-comparison: nobody to eliminate.
                        ctx.local(LocalKind::Compare);
                    }
                }
                StepOut::Continue
            }
            RunPhase::CelebrateCheck => {
                let other = match self.current_member(ctx) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                let cell = ctx.desc(other).status_cell;
                let won = ctx.read(cell) == Word::Status(Status::Won);
                self.phase = if won { RunPhase::CelebrateRun } else { RunPhase::MemberStatus };
                if !won {
                    self.member_idx += 1;
                }
                StepOut::Continue
            }
            RunPhase::CelebrateRun => {
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
            RunPhase::Decide => {
                ctx.cas_status(self.subject, Status::Active, Status::Won);
                self.phase = RunPhase::SelfCelebrateCheck;
                StepOut::Continue
            }
            RunPhase::SelfCelebrateCheck => {
                let cell = ctx.desc(self.subject).status_cell;
                let won = ctx.read(cell) == Word::Status(Status::Won);
                self.phase = if won { RunPhase::SelfCelebrateRun } else { RunPhase::Finish };
                StepOut::Continue
            }
            RunPhase::SelfCelebrateRun => {
                let thunk = ctx.desc(self.subject).thunk;
                StepOut::Call(Frame::RunThunk(crate::thunk::RunThunkFrame::new(
                    thunk,
                    Some(self.subject),
                )))
            }
            RunPhase::Finish => StepOut::Ret(RetVal::Unit),
        }
    }

    pub(crate) fn deliver(&mut self, v: RetVal) {
        match self.phase {
            RunPhase::GetSet => {
                if let RetVal::Items(items) = v {
                    self.members = items;
                    self.phase = RunPhase::CheckActive;
                }
            }
            RunPhase::CelebrateRun => {
                self.member_idx += 1;
                self.phase = RunPhase::MemberStatus;
            }
            RunPhase::SelfCelebrateRun => {
                self.phase = RunPhase::Finish;
            }
            _ => unreachable!("no children in phase {:?}", self.phase),
        }
    }
}
