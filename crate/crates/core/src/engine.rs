//! Deterministic cooperative execution kernel.
//!
//! Logical processes are resumable step machines: each holds a stack of
//! frames, and the engine advances exactly one frame transition per tick
//! granted by the oblivious schedule. A tick covers exactly one memory
//! operation, one local operation, one delay tick, or one operation
//! invocation/response, and appends exactly one event to the history, so
//! per-process event counts always equal step counters.
//!
//! # Invariants
//!
//! - `run_sim` is a pure function of (schedule, policy, workload, config):
//!   identical inputs produce identical histories.
//! - The schedule is consumed in order and never mutated.
//! - Random priorities come from per-process streams split from the run
//!   seed; the schedule never observes them.
//! - The player policy is consulted only with the strict prefix of the
//!   history before the current tick.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aset::{AsetObj, ClimbFrame, InsertFrame, RemoveFrame};
use crate::history::{
    Event, EventKind, History, LocalKind, LockVariant, MemAccess, OpDesc, RetVal, ThunkAction,
    ThunkSite,
};
use crate::lock::{LockSetup, RunFrame, TryLocksFrame};
use crate::lock_adaptive::RunAdaptiveFrame;
use crate::maset::{FlagCfg, GsfFrame, MultiInsertFrame, MultiRemoveFrame, RevealSpec};
use crate::mem::{
    ASetId, CellId, DescId, ItemId, LabeledValue, Mem, ProcId, Status, ThunkId, Word,
};
use crate::policy::{PlayerPolicy, PolicyDecision};
use crate::schedule::{Schedule, ScheduleError};
use crate::thunk::{RunThunkFrame, ThunkInstance, ThunkProgram};
use crate::workload::{CellBinding, ProcProgram, Workload};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultKind {
    #[error("label taken from cell {from:?} presented to lsc on {cell:?}")]
    ForeignLabel { cell: CellId, from: CellId },
    #[error("lsc issued without a captured label for cell {cell:?}")]
    MissingLabel { cell: CellId },
    #[error("all {capacity} slots of active set {aset:?} are owned")]
    CapacityExceeded { aset: ASetId, capacity: u32 },
    #[error("delay target {target} already passed at local step {at}")]
    DelayOverrun { target: u64, at: u64 },
    #[error("remove of slot {slot} in {aset:?} not owned by the caller's item")]
    RemoveNotOwner { aset: ASetId, slot: usize },
    #[error("thunk runtime error: {0}")]
    ThunkRuntime(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("simulation fault at tick {tick}, process {proc:?}: {kind}")]
pub struct SimFault {
    pub kind: FaultKind,
    pub tick: u64,
    pub proc: ProcId,
}

impl From<ScheduleError> for SimFault {
    fn from(e: ScheduleError) -> Self {
        SimFault { kind: FaultKind::Config(e.to_string()), tick: 0, proc: ProcId(0) }
    }
}

/// When a run stops (the horizon always caps it as well).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Stop when every process has parked.
    AllDone,
    /// Stop once this many tryLock attempts have completed.
    CompletedAttempts(u64),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon: u64,
    pub stop: StopRule,
}

impl SimConfig {
    pub fn new(seed: u64, horizon: u64) -> Self {
        SimConfig { seed, horizon, stop: StopRule::AllDone }
    }

    pub fn until_attempts(seed: u64, horizon: u64, attempts: u64) -> Self {
        SimConfig { seed, horizon, stop: StopRule::CompletedAttempts(attempts) }
    }
}

/// Registry record for one insertable item.
#[derive(Debug, Clone)]
pub struct ItemInfo {
    pub flag: FlagCfg,
    pub desc: Option<DescId>,
}

/// Registry record for one tryLock descriptor.
#[derive(Debug, Clone)]
pub struct DescInfo {
    pub item: ItemId,
    pub initiator: ProcId,
    pub locks: Vec<ASetId>,
    pub thunk: ThunkId,
    pub status_cell: CellId,
    pub priority_cell: CellId,
    pub variant: LockVariant,
}

#[derive(Debug, Clone)]
struct ProcState {
    stack: Vec<Frame>,
    steps: u64,
    attempts_done: u64,
    successes: u64,
    priority_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    done: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ProcStats {
    pub attempts: u64,
    pub successes: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub per_proc: Vec<ProcStats>,
    pub completed_attempts: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub history: History,
    pub mem: Mem,
    pub stats: RunStats,
    pub truncated: bool,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// The full simulation state. Plain data: cloning yields an independent
/// snapshot, which the interleaving explorer uses for branching.
#[derive(Debug, Clone)]
pub struct Sim {
    pub workload: Arc<Workload>,
    policy: PlayerPolicy,
    mem: Mem,
    procs: Vec<ProcState>,
    pub(crate) asets: Vec<AsetObj>,
    items: Vec<ItemInfo>,
    descs: Vec<DescInfo>,
    thunks: Vec<ThunkInstance>,
    history: History,
    tick: u64,
    op_seq: u64,
    completed_attempts: u64,
    fault: Option<SimFault>,
    /// Open standalone simulated writes/CAMs per cell, for the
    /// restricted-model race diagnostic.
    open_sim_ops: HashMap<CellId, (u32, u32)>,
    pub(crate) shared_cell_ids: Vec<CellId>,
}

impl Sim {
    pub fn new(
        workload: Arc<Workload>,
        policy: PlayerPolicy,
        config: &SimConfig,
    ) -> Result<Sim, SimFault> {
        let config_err =
            |msg: String| SimFault { kind: FaultKind::Config(msg), tick: 0, proc: ProcId(0) };
        let procs = workload.programs.len();
        if procs == 0 {
            return Err(config_err("workload defines no processes".into()));
        }
        if let Some(setup) = &workload.lock_setup {
            setup.validate().map_err(config_err)?;
            for (i, rule) in workload.attempt_rules.iter().enumerate() {
                if setup.variant == LockVariant::Known
                    && rule.locks.len() as u64 > setup.max_locks
                {
                    return Err(config_err(format!(
                        "process {i} lists {} locks, max_locks = {}",
                        rule.locks.len(),
                        setup.max_locks
                    )));
                }
                for l in &rule.locks {
                    if l.0 as usize >= workload.asets.len() {
                        return Err(config_err(format!("process {i} names unregistered lock {l:?}")));
                    }
                }
            }
            let needs_rules = workload
                .programs
                .iter()
                .any(|p| matches!(p, ProcProgram::LockLoop));
            if needs_rules && workload.attempt_rules.len() != procs {
                return Err(config_err("lock-loop workload needs one attempt rule per process".into()));
            }
        }
        for t in &workload.thunk_templates {
            t.program
                .validate()
                .map_err(|e| config_err(format!("thunk template invalid: {e}")))?;
        }

        let policy_seed = policy.seed();
        let mut mem = Mem::new();
        let shared_cell_ids: Vec<CellId> =
            workload.shared_cells.iter().map(|w| mem.alloc(*w)).collect();
        let asets: Vec<AsetObj> = workload
            .asets
            .iter()
            .map(|spec| AsetObj::alloc(&mut mem, spec.capacity))
            .collect();
        let items: Vec<ItemInfo> = workload
            .items
            .iter()
            .map(|_| ItemInfo { flag: FlagCfg::Bool { cell: mem.alloc(Word::Bool(false)) }, desc: None })
            .collect();

        let mut sim = Sim {
            policy,
            mem,
            procs: (0..procs)
                .map(|i| ProcState {
                    stack: Vec::new(),
                    steps: 0,
                    attempts_done: 0,
                    successes: 0,
                    priority_rng: ChaCha8Rng::seed_from_u64(splitmix(
                        config.seed ^ splitmix(0x5052 + i as u64),
                    )),
                    policy_rng: ChaCha8Rng::seed_from_u64(splitmix(
                        policy_seed ^ splitmix(0x706f + i as u64),
                    )),
                    done: false,
                })
                .collect(),
            asets,
            items,
            descs: Vec::new(),
            thunks: Vec::new(),
            history: History::new(procs as u32, config.seed),
            tick: 0,
            op_seq: 0,
            completed_attempts: 0,
            fault: None,
            open_sim_ops: HashMap::new(),
            shared_cell_ids,
            workload: workload.clone(),
        };

        for spec in &workload.script_thunks {
            let cells = sim.resolve_binding(spec.template, ProcId(0))?;
            sim.create_thunk_instance(spec.template, cells, None);
        }
        for (i, prog) in workload.programs.iter().enumerate() {
            let frame = match prog {
                ProcProgram::LockLoop => Frame::LockLoop(LockLoopFrame::new()),
                ProcProgram::Script(ops) => Frame::Script(ScriptFrame::new(ops.clone())),
            };
            sim.procs[i].stack.push(frame);
        }
        Ok(sim)
    }

    fn resolve_binding(&self, template: usize, proc: ProcId) -> Result<Vec<CellId>, SimFault> {
        let t = self.workload.thunk_templates.get(template).ok_or(SimFault {
            kind: FaultKind::Config(format!("unknown thunk template {template}")),
            tick: self.tick,
            proc,
        })?;
        let idxs: Vec<usize> = match &t.binding {
            CellBinding::Shared(v) => v.clone(),
            CellBinding::PerProc { base, per } => {
                let start = base + proc.0 as usize * per;
                (start..start + per).collect()
            }
        };
        idxs.iter()
            .map(|&i| {
                self.shared_cell_ids.get(i).copied().ok_or(SimFault {
                    kind: FaultKind::Config(format!("cell binding index {i} out of range")),
                    tick: self.tick,
                    proc,
                })
            })
            .collect()
    }

    fn create_thunk_instance(
        &mut self,
        template: usize,
        cells: Vec<CellId>,
        desc: Option<DescId>,
    ) -> ThunkId {
        let program = &self.workload.thunk_templates[template].program;
        let init = crate::mem::CtxRecord {
            pc: 0,
            capsule_no: 0,
            regs: vec![Word::Null; program.regs as usize],
        };
        let h = self.mem.publish_ctx(init);
        let ctx_cell = self.mem.alloc(Word::Ctx(h));
        let done_cell = self.mem.alloc(Word::Bool(false));
        let id = ThunkId(self.thunks.len() as u32);
        self.thunks.push(ThunkInstance { program: template, ctx_cell, done_cell, cells, desc });
        id
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn mem(&self) -> &Mem {
        &self.mem
    }

    pub fn descs(&self) -> &[DescInfo] {
        &self.descs
    }

    pub fn items(&self) -> &[ItemInfo] {
        &self.items
    }

    pub fn thunk_instances(&self) -> &[ThunkInstance] {
        &self.thunks
    }

    pub fn aset_obj(&self, a: ASetId) -> &AsetObj {
        &self.asets[a.0 as usize]
    }

    /// Publish an immutable snapshot record before the run starts, for
    /// scripts that race handle installations.
    pub fn publish_snapshot(&mut self, item: ItemId) -> crate::mem::NodeRef {
        self.mem.publish_node(item, None)
    }

    pub fn completed_attempts(&self) -> u64 {
        self.completed_attempts
    }

    /// Current values of the workload's shared data cells.
    pub fn shared_cell_values(&self) -> Vec<Word> {
        self.shared_cell_ids.iter().map(|&c| self.mem.peek(c)).collect()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Step `proc` until the event just emitted satisfies `pred`.
    /// Returns false if the process parks or `max` ticks pass first.
    pub fn run_until(
        &mut self,
        proc: ProcId,
        max: u64,
        pred: impl Fn(&Event) -> bool,
    ) -> Result<bool, SimFault> {
        for _ in 0..max {
            if !self.step_proc(proc)? {
                return Ok(false);
            }
            if self.history.events.last().map_or(false, &pred) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn proc_done(&self, p: ProcId) -> bool {
        self.procs[p.0 as usize].done
    }

    pub fn all_done(&self) -> bool {
        self.procs.iter().all(|p| p.done)
    }

    pub fn runnable(&self) -> Vec<ProcId> {
        (0..self.procs.len() as u32).map(ProcId).filter(|p| !self.proc_done(*p)).collect()
    }

    pub fn fault(&self) -> Option<&SimFault> {
        self.fault.as_ref()
    }

    /// Execute one tick for `proc`. Returns Ok(false) if the process has
    /// already parked (no tick consumed).
    pub fn step_proc(&mut self, proc: ProcId) -> Result<bool, SimFault> {
        if let Some(f) = &self.fault {
            return Err(f.clone());
        }
        let pi = proc.0 as usize;
        if self.procs[pi].done {
            return Ok(false);
        }
        let mut frame = self.procs[pi].stack.pop().expect("live proc has a frame");
        let thunk_tag = match &frame {
            Frame::RunThunk(f) => {
                let desc = self.thunks[f.thunk.0 as usize].desc;
                Some((f.thunk, desc, f.seq))
            }
            _ => None,
        };
        let mut ctx = Ctx { sim: self, proc, charged: false, thunk_tag };
        let out = frame.step(&mut ctx);
        let charged = ctx.charged;
        match out {
            StepOut::Continue => {
                debug_assert!(charged, "Continue without charging a tick");
                self.procs[pi].stack.push(frame);
            }
            StepOut::Call(child) => {
                debug_assert!(!charged, "Call must not also charge");
                self.procs[pi].stack.push(frame);
                self.push_child(proc, child);
            }
            StepOut::Ret(v) => {
                debug_assert!(!charged, "Ret must not also charge");
                self.finish_frame(proc, frame, v);
            }
            StepOut::Done => {
                debug_assert!(!charged, "Done must not also charge");
                self.emit(proc, EventKind::Local(LocalKind::Park));
                self.procs[pi].done = true;
            }
            StepOut::Fault(kind) => {
                let fault = SimFault { kind, tick: self.tick, proc };
                self.fault = Some(fault.clone());
                return Err(fault);
            }
        }
        Ok(true)
    }

    fn push_child(&mut self, proc: ProcId, mut child: Frame) {
        let seq = self.op_seq;
        self.op_seq += 1;
        child.set_seq(seq);
        let warn = self.sim_op_open(&child);
        match &child {
            Frame::TryLocks(f) => {
                let d = &self.descs[f.desc.0 as usize];
                self.emit(
                    proc,
                    EventKind::AttemptStart {
                        desc: f.desc,
                        locks: d.locks.clone(),
                        variant: d.variant,
                        seq,
                    },
                );
            }
            other => {
                let op = other.describe().expect("child frames describe themselves");
                self.emit(proc, EventKind::Invoke { op, seq, warn });
            }
        }
        if let Frame::TryLocks(f) = &mut child {
            f.start_step = self.procs[proc.0 as usize].steps;
        }
        self.procs[proc.0 as usize].stack.push(child);
    }

    fn finish_frame(&mut self, proc: ProcId, frame: Frame, ret: RetVal) {
        let pi = proc.0 as usize;
        let op = frame.describe().expect("returning frames describe themselves");
        let seq = frame.seq();
        self.sim_op_close(&frame);
        if let OpDesc::TryLocks { .. } = &op {
            self.completed_attempts += 1;
            self.procs[pi].attempts_done += 1;
            if ret == RetVal::Bool(true) {
                self.procs[pi].successes += 1;
            }
        }
        self.emit(proc, EventKind::Respond { op, seq, ret: ret.clone() });
        match self.procs[pi].stack.last_mut() {
            Some(parent) => parent.deliver(ret),
            None => self.procs[pi].done = true,
        }
    }

    fn sim_op_open(&mut self, frame: &Frame) -> Option<String> {
        let (cell, is_write) = match frame {
            Frame::SimWrite(f) => (f.cell, true),
            Frame::SimCam(f) => (f.cell, false),
            _ => return None,
        };
        let entry = self.open_sim_ops.entry(cell).or_insert((0, 0));
        let warn = if is_write && entry.1 > 0 {
            Some(format!("restricted-model violation: write racing CAM on {cell:?}"))
        } else if !is_write && entry.0 > 0 {
            Some(format!("restricted-model violation: CAM racing write on {cell:?}"))
        } else {
            None
        };
        if is_write {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
        warn
    }

    fn sim_op_close(&mut self, frame: &Frame) {
        let (cell, is_write) = match frame {
            Frame::SimWrite(f) => (f.cell, true),
            Frame::SimCam(f) => (f.cell, false),
            _ => return,
        };
        if let Some(entry) = self.open_sim_ops.get_mut(&cell) {
            if is_write {
                entry.0 -= 1;
            } else {
                entry.1 -= 1;
            }
        }
    }

    fn emit(&mut self, proc: ProcId, kind: EventKind) {
        let p = &mut self.procs[proc.0 as usize];
        p.steps += 1;
        let ev = Event { tick: self.tick, proc, local_step: p.steps, kind };
        self.history.push(ev);
        self.tick += 1;
    }

    pub fn stats(&self) -> RunStats {
        RunStats {
            per_proc: self
                .procs
                .iter()
                .map(|p| ProcStats { attempts: p.attempts_done, successes: p.successes })
                .collect(),
            completed_attempts: self.completed_attempts,
        }
    }

    pub fn into_output(mut self, truncated: bool) -> RunOutput {
        self.history.meta.truncated = truncated;
        RunOutput { stats: self.stats(), truncated, history: self.history, mem: self.mem }
    }

    fn stop_reached(&self, config: &SimConfig) -> bool {
        match config.stop {
            StopRule::AllDone => self.all_done(),
            StopRule::CompletedAttempts(n) => self.completed_attempts >= n || self.all_done(),
        }
    }

    /// Any process mid-operation (a pending attempt or unfinished script)?
    pub fn work_pending(&self) -> bool {
        self.procs.iter().any(|p| {
            !p.done
                && (p.stack.len() > 1
                    || p.stack.first().map_or(false, |f| match f {
                        Frame::Script(s) => s.started(),
                        _ => false,
                    }))
        })
    }
}

/// Run a complete simulation under an oblivious schedule.
pub fn run_sim(
    schedule: &Schedule,
    policy: &PlayerPolicy,
    workload: &Arc<Workload>,
    config: &SimConfig,
) -> Result<RunOutput, SimFault> {
    schedule.validate(workload.procs())?;
    let mut sim = Sim::new(workload.clone(), policy.clone(), config)?;
    let mut cursor = schedule.cursor();
    let mut executed = 0u64;
    let exhausted = loop {
        if sim.stop_reached(config) {
            break false;
        }
        if executed >= schedule.horizon.min(config.horizon) {
            break true;
        }
        let Some(p) = cursor.next(schedule) else {
            break true;
        };
        if sim.proc_done(p) {
            continue;
        }
        sim.step_proc(p)?;
        executed += 1;
    };
    let truncated = exhausted && sim.work_pending();
    Ok(sim.into_output(truncated))
}

/// What one frame transition produced.
#[derive(Debug)]
pub(crate) enum StepOut {
    /// One tick consumed by the frame itself.
    Continue,
    /// Push a child operation; the engine charges the invocation tick.
    Call(Frame),
    /// Pop this frame; the engine charges the response tick.
    Ret(RetVal),
    /// Top-level driver finished; the engine charges a park tick.
    Done,
    Fault(FaultKind),
}

impl StepOut {
    pub(crate) fn fault(msg: String) -> StepOut {
        StepOut::Fault(FaultKind::ThunkRuntime(msg))
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Frame {
    LockLoop(LockLoopFrame),
    Script(ScriptFrame),
    TryLocks(TryLocksFrame),
    Run(RunFrame),
    RunAdaptive(RunAdaptiveFrame),
    MultiInsert(MultiInsertFrame),
    MultiRemove(MultiRemoveFrame),
    GetSetFiltered(GsfFrame),
    Insert(InsertFrame),
    Remove(RemoveFrame),
    Climb(ClimbFrame),
    RunThunk(RunThunkFrame),
    SimWrite(SimWriteFrame),
    SimCam(SimCamFrame),
}

impl Frame {
    fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self {
            Frame::LockLoop(f) => f.step(ctx),
            Frame::Script(f) => f.step(ctx),
            Frame::TryLocks(f) => f.step(ctx),
            Frame::Run(f) => f.step(ctx),
            Frame::RunAdaptive(f) => f.step(ctx),
            Frame::MultiInsert(f) => f.step(ctx),
            Frame::MultiRemove(f) => f.step(ctx),
            Frame::GetSetFiltered(f) => f.step(ctx),
            Frame::Insert(f) => f.step(ctx),
            Frame::Remove(f) => f.step(ctx),
            Frame::Climb(f) => f.step(ctx),
            Frame::RunThunk(f) => f.step(ctx),
            Frame::SimWrite(f) => f.step(ctx),
            Frame::SimCam(f) => f.step(ctx),
        }
    }

    fn deliver(&mut self, v: RetVal) {
        match self {
            Frame::LockLoop(f) => f.deliver(v),
            Frame::Script(f) => f.deliver(v),
            Frame::TryLocks(f) => f.deliver(v),
            Frame::Run(f) => f.deliver(v),
            Frame::RunAdaptive(f) => f.deliver(v),
            Frame::MultiInsert(f) => f.deliver(v),
            Frame::MultiRemove(f) => f.deliver(v),
            Frame::GetSetFiltered(f) => f.deliver(v),
            Frame::Insert(f) => f.deliver(v),
            Frame::Remove(f) => f.deliver(v),
            Frame::Climb(f) => f.deliver(v),
            Frame::RunThunk(_) | Frame::SimWrite(_) | Frame::SimCam(_) => {
                unreachable!("leaf frames have no children")
            }
        }
    }

    fn describe(&self) -> Option<OpDesc> {
        match self {
            Frame::LockLoop(_) | Frame::Script(_) => None,
            Frame::TryLocks(f) => Some(OpDesc::TryLocks {
                desc: f.desc,
                locks: f.locks.clone(),
                variant: f.variant,
            }),
            Frame::Run(f) => Some(OpDesc::Run { desc: f.subject }),
            Frame::RunAdaptive(f) => Some(OpDesc::RunAdaptive { desc: f.subject }),
            Frame::MultiInsert(f) => {
                Some(OpDesc::MultiInsert { item: f.item, sets: f.sets.clone() })
            }
            Frame::MultiRemove(f) => {
                Some(OpDesc::MultiRemove { item: f.item, sets: f.sets.clone() })
            }
            Frame::GetSetFiltered(f) => Some(OpDesc::GetSetFiltered { aset: f.aset }),
            Frame::Insert(f) => Some(OpDesc::Insert { aset: f.aset, item: f.item }),
            Frame::Remove(f) => {
                Some(OpDesc::Remove { aset: f.aset, item: f.item, slot: f.slot })
            }
            Frame::Climb(f) => Some(OpDesc::Climb { aset: f.aset, from: f.from }),
            Frame::RunThunk(f) => Some(OpDesc::RunThunk { thunk: f.thunk, desc: f.desc_tag }),
            Frame::SimWrite(f) => Some(OpDesc::SimWrite { cell: f.cell, value: f.value }),
            Frame::SimCam(f) => Some(OpDesc::SimCam { cell: f.cell, old: f.old, new: f.new }),
        }
    }

    fn set_seq(&mut self, seq: u64) {
        match self {
            Frame::LockLoop(_) | Frame::Script(_) => {}
            Frame::TryLocks(f) => f.seq = seq,
            Frame::Run(f) => f.seq = seq,
            Frame::RunAdaptive(f) => f.seq = seq,
            Frame::MultiInsert(f) => f.seq = seq,
            Frame::MultiRemove(f) => f.seq = seq,
            Frame::GetSetFiltered(f) => f.seq = seq,
            Frame::Insert(f) => f.seq = seq,
            Frame::Remove(f) => f.seq = seq,
            Frame::Climb(f) => f.seq = seq,
            Frame::RunThunk(f) => f.seq = seq,
            Frame::SimWrite(f) => f.seq = seq,
            Frame::SimCam(f) => f.seq = seq,
        }
    }

    fn seq(&self) -> u64 {
        match self {
            Frame::LockLoop(_) | Frame::Script(_) => 0,
            Frame::TryLocks(f) => f.seq,
            Frame::Run(f) => f.seq,
            Frame::RunAdaptive(f) => f.seq,
            Frame::MultiInsert(f) => f.seq,
            Frame::MultiRemove(f) => f.seq,
            Frame::GetSetFiltered(f) => f.seq,
            Frame::Insert(f) => f.seq,
            Frame::Remove(f) => f.seq,
            Frame::Climb(f) => f.seq,
            Frame::RunThunk(f) => f.seq,
            Frame::SimWrite(f) => f.seq,
            Frame::SimCam(f) => f.seq,
        }
    }
}

/// Per-tick view handed to frames. Every memory/local/delay method
/// charges exactly one tick; a frame must charge exactly once per step
/// unless it returns Call/Ret/Done/Fault.
pub(crate) struct Ctx<'a> {
    sim: &'a mut Sim,
    pub proc: ProcId,
    pub(crate) charged: bool,
    thunk_tag: Option<(ThunkId, Option<DescId>, u64)>,
}

impl<'a> Ctx<'a> {
    fn charge(&mut self, kind: EventKind) {
        assert!(!self.charged, "frame charged more than one tick in a step");
        self.charged = true;
        self.sim.emit(self.proc, kind);
    }

    fn charge_mem(&mut self, access: MemAccess, op: Option<(OpDesc, RetVal)>, site: Option<ThunkSite>) {
        match self.thunk_tag {
            Some((thunk, desc, run_seq)) => self.charge(EventKind::ThunkStep {
                thunk,
                desc,
                run_seq,
                action: ThunkAction::Mem { access, site },
            }),
            None => self.charge(EventKind::MemOp { access, op }),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.sim.procs[self.proc.0 as usize].steps
    }

    pub fn mem(&self) -> &Mem {
        &self.sim.mem
    }

    pub fn mem_mut(&mut self) -> &mut Mem {
        &mut self.sim.mem
    }

    pub fn read(&mut self, c: CellId) -> Word {
        let v = self.sim.mem.read(c);
        self.charge_mem(MemAccess::Read { cell: c, value: v }, None, None);
        v
    }

    /// A read that is itself a complete recorded operation (active-set
    /// getSet).
    pub fn read_op(&mut self, c: CellId, op: OpDesc, ret: RetVal) -> Word {
        let v = self.sim.mem.read(c);
        self.charge_mem(MemAccess::Read { cell: c, value: v }, Some((op, ret)), None);
        v
    }

    pub fn write(&mut self, c: CellId, v: Word) {
        self.sim.mem.write(c, v);
        self.charge_mem(MemAccess::Write { cell: c, value: v }, None, None);
    }

    pub fn cas(&mut self, c: CellId, old: Word, new: Word) -> bool {
        let ok = self.sim.mem.cas(c, old, new);
        self.charge_mem(MemAccess::Cas { cell: c, old, new, ok }, None, None);
        ok
    }

    pub fn cam(&mut self, c: CellId, old: Word, new: Word) {
        let ok = self.sim.mem.cas(c, old, new);
        self.charge_mem(MemAccess::Cam { cell: c, old, new, ok }, None, None);
    }

    /// Multiword CAM via indirection: old/new are handles to immutable
    /// snapshot records.
    pub fn mcam(&mut self, c: CellId, old: Word, new: Word) {
        debug_assert!(matches!(old, Word::Ctx(_) | Word::Node(_) | Word::Null));
        debug_assert!(matches!(new, Word::Ctx(_) | Word::Node(_)));
        let ok = self.sim.mem.cas(c, old, new);
        self.charge_mem(MemAccess::Mcam { cell: c, old, new, ok }, None, None);
    }

    pub fn lll(&mut self, c: CellId) -> LabeledValue {
        self.lll_site(c, None)
    }

    pub fn lll_site(&mut self, c: CellId, site: Option<ThunkSite>) -> LabeledValue {
        let lv = self.sim.mem.lll(c);
        self.charge_mem(
            MemAccess::Lll { cell: c, label: lv.label, value: lv.value },
            None,
            site,
        );
        lv
    }

    /// A labeled load that is itself a complete standalone simulated read.
    pub fn lll_op(&mut self, c: CellId) -> LabeledValue {
        let lv = self.sim.mem.lll(c);
        self.charge_mem(
            MemAccess::Lll { cell: c, label: lv.label, value: lv.value },
            Some((OpDesc::SimRead { cell: c }, RetVal::Word(lv.value))),
            None,
        );
        lv
    }

    /// Store-conditional. `from` is the cell the label was captured on;
    /// a foreign label is a hard fault.
    pub fn lsc(
        &mut self,
        c: CellId,
        from: CellId,
        label: u64,
        new: Word,
    ) -> Result<(), FaultKind> {
        self.lsc_site_checked(c, from, label, new, None)
    }

    pub fn lsc_site(&mut self, c: CellId, label: u64, new: Word, site: Option<ThunkSite>) {
        // Label provenance is validated by the thunk interpreter before
        // calling in.
        let ok = self.sim.mem.lsc(c, label, new);
        self.charge_mem(MemAccess::Lsc { cell: c, label, new, ok }, None, site);
    }

    fn lsc_site_checked(
        &mut self,
        c: CellId,
        from: CellId,
        label: u64,
        new: Word,
        site: Option<ThunkSite>,
    ) -> Result<(), FaultKind> {
        if from != c {
            return Err(FaultKind::ForeignLabel { cell: c, from });
        }
        let ok = self.sim.mem.lsc(c, label, new);
        self.charge_mem(MemAccess::Lsc { cell: c, label, new, ok }, None, site);
        Ok(())
    }

    /// Status CAS: emits a status-change event when it lands.
    pub fn cas_status(&mut self, desc: DescId, from: Status, to: Status) {
        let cell = self.sim.descs[desc.0 as usize].status_cell;
        let ok = self.sim.mem.cas(cell, Word::Status(from), Word::Status(to));
        if ok {
            self.charge(EventKind::StatusChange { desc, from, to });
        } else {
            self.charge_mem(
                MemAccess::Cas { cell, old: Word::Status(from), new: Word::Status(to), ok },
                None,
                None,
            );
        }
    }

    /// The reveal step: write a descriptor's priority word.
    pub fn write_reveal(&mut self, desc: DescId, priority: Word, participation: bool) {
        let cell = self.sim.descs[desc.0 as usize].priority_cell;
        self.sim.mem.write(cell, priority);
        self.charge(EventKind::Reveal { desc, priority, participation });
    }

    /// The adaptive priority-reveal CAS (TBD -> random value).
    pub fn cas_reveal(&mut self, desc: DescId, new: Word) {
        let cell = self.sim.descs[desc.0 as usize].priority_cell;
        let ok = self.sim.mem.cas(cell, Word::Tbd, new);
        if ok {
            self.charge(EventKind::Reveal { desc, priority: new, participation: false });
        } else {
            self.charge_mem(
                MemAccess::Cas { cell, old: Word::Tbd, new, ok },
                None,
                None,
            );
        }
    }

    pub fn local(&mut self, k: LocalKind) {
        match self.thunk_tag {
            Some((thunk, desc, run_seq)) => self.charge(EventKind::ThunkStep {
                thunk,
                desc,
                run_seq,
                action: ThunkAction::Local(k),
            }),
            None => self.charge(EventKind::Local(k)),
        }
    }

    pub fn delay(&mut self, target: u64) {
        self.charge(EventKind::DelayTick { target });
    }

    /// Final CAM on a thunk's done flag.
    pub fn thunk_done(&mut self, done_cell: CellId) -> bool {
        let ok = self.sim.mem.cas(done_cell, Word::Bool(false), Word::Bool(true));
        match self.thunk_tag {
            Some((thunk, desc, run_seq)) => self.charge(EventKind::ThunkStep {
                thunk,
                desc,
                run_seq,
                action: ThunkAction::Done { ok },
            }),
            None => self.charge_mem(
                MemAccess::Cam {
                    cell: done_cell,
                    old: Word::Bool(false),
                    new: Word::Bool(true),
                    ok,
                },
                None,
                None,
            ),
        }
        ok
    }

    pub fn peek(&self, c: CellId) -> Word {
        self.sim.mem.peek(c)
    }

    pub fn aset(&self, a: ASetId) -> &AsetObj {
        &self.sim.asets[a.0 as usize]
    }

    pub fn item(&self, i: ItemId) -> &ItemInfo {
        &self.sim.items[i.0 as usize]
    }

    pub fn desc(&self, d: DescId) -> &DescInfo {
        &self.sim.descs[d.0 as usize]
    }

    pub fn thunk_instance(&self, t: ThunkId) -> &ThunkInstance {
        &self.sim.thunks[t.0 as usize]
    }

    pub fn thunk_program(&self, idx: usize) -> &ThunkProgram {
        &self.sim.workload.thunk_templates[idx].program
    }

    pub fn lock_setup(&self) -> Option<&LockSetup> {
        self.sim.workload.lock_setup.as_ref()
    }

    pub fn draw_priority(&mut self) -> i64 {
        let m = self
            .sim
            .workload
            .lock_setup
            .as_ref()
            .map(|s| s.priority_range)
            .unwrap_or(1)
            .max(1);
        self.sim.procs[self.proc.0 as usize].priority_rng.gen_range(1..=m as i64)
    }

    /// Mint a descriptor, its cells, its item entry, and its thunk
    /// instance. Registry work only; the caller charges the tick.
    pub fn create_descriptor(
        &mut self,
        locks: Vec<ASetId>,
        template: usize,
    ) -> Result<DescId, FaultKind> {
        let setup = self
            .sim
            .workload
            .lock_setup
            .clone()
            .ok_or_else(|| FaultKind::Config("tryLocks without a lock setup".into()))?;
        if setup.variant == LockVariant::Known && locks.len() as u64 > setup.max_locks {
            return Err(FaultKind::Config(format!(
                "attempt lists {} locks, max_locks = {}",
                locks.len(),
                setup.max_locks
            )));
        }
        for l in &locks {
            if l.0 as usize >= self.sim.asets.len() {
                return Err(FaultKind::Config(format!("attempt names unregistered lock {l:?}")));
            }
        }
        let desc = DescId(self.sim.descs.len() as u32);
        let status_cell = self.sim.mem.alloc(Word::Status(Status::Active));
        let priority_cell = self.sim.mem.alloc(Word::Int(-1));
        let item = ItemId(self.sim.items.len() as u64);
        self.sim.items.push(ItemInfo {
            flag: FlagCfg::Priority {
                cell: priority_cell,
                adaptive: setup.variant == LockVariant::Adaptive,
            },
            desc: Some(desc),
        });
        let cells = self
            .sim
            .resolve_binding(template, self.proc)
            .map_err(|f| f.kind)?;
        let thunk = self.sim.create_thunk_instance(template, cells, Some(desc));
        self.sim.descs.push(DescInfo {
            item,
            initiator: self.proc,
            locks,
            thunk,
            status_cell,
            priority_cell,
            variant: setup.variant,
        });
        Ok(desc)
    }

    fn policy_decide(&mut self, attempts_done: u64, after_think: bool) -> PolicyDecision {
        let sim = &mut *self.sim;
        let rng = &mut sim.procs[self.proc.0 as usize].policy_rng;
        if after_think {
            sim.policy.decide_after_think(&sim.history, self.proc, attempts_done, rng)
        } else {
            sim.policy.decide(&sim.history, self.proc, attempts_done, rng)
        }
    }

    fn attempts_done(&self) -> u64 {
        self.sim.procs[self.proc.0 as usize].attempts_done
    }

    fn attempt_rule(&self) -> (Vec<ASetId>, usize) {
        let rule = &self.sim.workload.attempt_rules[self.proc.0 as usize];
        (rule.locks.clone(), rule.template)
    }
}

/// Top-level driver: consult the player policy when idle, run attempts.
#[derive(Debug, Clone)]
pub(crate) struct LockLoopFrame {
    state: LoopState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LoopState {
    Idle,
    Thinking { left: u32 },
}

impl LockLoopFrame {
    pub(crate) fn new() -> Self {
        LockLoopFrame { state: LoopState::Idle }
    }

    fn start_attempt(ctx: &mut Ctx<'_>, locks: Option<Vec<ASetId>>) -> StepOut {
        let (default_locks, template) = ctx.attempt_rule();
        let locks = locks.unwrap_or(default_locks);
        let variant = match ctx.lock_setup() {
            Some(s) => s.variant,
            None => return StepOut::Fault(FaultKind::Config("lock loop without lock setup".into())),
        };
        let desc = match ctx.create_descriptor(locks.clone(), template) {
            Ok(d) => d,
            Err(e) => return StepOut::Fault(e),
        };
        StepOut::Call(Frame::TryLocks(TryLocksFrame::new(desc, locks, variant)))
    }

    fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.state {
            LoopState::Idle => {
                let decision = ctx.policy_decide(ctx.attempts_done(), false);
                match decision {
                    PolicyDecision::Start { locks } => Self::start_attempt(ctx, locks),
                    PolicyDecision::Think { ticks } => {
                        ctx.local(LocalKind::Think);
                        if ticks > 1 {
                            self.state = LoopState::Thinking { left: ticks - 1 };
                        } else {
                            self.state = LoopState::Thinking { left: 0 };
                        }
                        StepOut::Continue
                    }
                    PolicyDecision::Stop => StepOut::Done,
                }
            }
            LoopState::Thinking { left } => {
                if left > 0 {
                    ctx.local(LocalKind::Think);
                    self.state = LoopState::Thinking { left: left - 1 };
                    StepOut::Continue
                } else {
                    self.state = LoopState::Idle;
                    match ctx.policy_decide(ctx.attempts_done(), true) {
                        PolicyDecision::Start { locks } => Self::start_attempt(ctx, locks),
                        PolicyDecision::Stop => StepOut::Done,
                        PolicyDecision::Think { ticks } => {
                            ctx.local(LocalKind::Think);
                            self.state = LoopState::Thinking { left: ticks.saturating_sub(1) };
                            StepOut::Continue
                        }
                    }
                }
            }
        }
    }

    fn deliver(&mut self, _v: RetVal) {
        self.state = LoopState::Idle;
    }
}

/// One scripted operation for test-driver processes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptOp {
    Read(CellId),
    Write(CellId, Word),
    Cas(CellId, Word, Word),
    Cam(CellId, Word, Word),
    Mcam(CellId, Word, Word),
    Lll(CellId),
    /// Store-conditional using the label from this process's most recent
    /// Lll on `label_from`. `label_from != cell` exercises the foreign
    /// label fault.
    Lsc { cell: CellId, label_from: CellId, new: Word },
    SimRead(CellId),
    SimWrite(CellId, Word),
    SimCam { cell: CellId, old: Word, new: Word },
    Think(u32),
    Insert { aset: ASetId, item: usize },
    Remove { aset: ASetId, item: usize },
    GetSet { aset: ASetId },
    MultiInsert { item: usize, sets: Vec<ASetId> },
    MultiRemove { item: usize, sets: Vec<ASetId> },
    GetSetFiltered { aset: ASetId },
    RunThunk { thunk: usize },
    TryLocks { locks: Vec<ASetId> },
}

#[derive(Debug, Clone)]
pub(crate) struct ScriptFrame {
    ops: Vec<ScriptOp>,
    idx: usize,
    waiting: bool,
    think_left: u32,
    labels: HashMap<CellId, u64>,
    insert_slots: HashMap<(u32, usize), usize>,
    multi_slots: HashMap<usize, Vec<usize>>,
    /// Results delivered by child ops, in completion order (for tests).
    pub results: Vec<RetVal>,
}

impl ScriptFrame {
    pub(crate) fn new(ops: Vec<ScriptOp>) -> Self {
        ScriptFrame {
            ops,
            idx: 0,
            waiting: false,
            think_left: 0,
            labels: HashMap::new(),
            insert_slots: HashMap::new(),
            multi_slots: HashMap::new(),
            results: Vec::new(),
        }
    }

    pub(crate) fn started(&self) -> bool {
        self.idx > 0 && self.idx < self.ops.len()
    }

    fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        debug_assert!(!self.waiting, "script stepped while waiting on a child");
        if self.think_left > 0 {
            self.think_left -= 1;
            ctx.local(LocalKind::Think);
            return StepOut::Continue;
        }
        let Some(op) = self.ops.get(self.idx).cloned() else {
            return StepOut::Done;
        };
        match op {
            ScriptOp::Read(c) => {
                ctx.read(c);
                self.advance();
                StepOut::Continue
            }
            ScriptOp::Write(c, v) => {
                ctx.write(c, v);
                self.advance();
                StepOut::Continue
            }
            ScriptOp::Cas(c, old, new) => {
                ctx.cas(c, old, new);
                self.advance();
                StepOut::Continue
            }
            ScriptOp::Cam(c, old, new) => {
                ctx.cam(c, old, new);
                self.advance();
                StepOut::Continue
            }
            ScriptOp::Mcam(c, old, new) => {
                ctx.mcam(c, old, new);
                self.advance();
                StepOut::Continue
            }
            ScriptOp::Lll(c) => {
                let lv = ctx.lll(c);
                self.labels.insert(c, lv.label);
                self.advance();
                StepOut::Continue
            }
            ScriptOp::Lsc { cell, label_from, new } => {
                let Some(&label) = self.labels.get(&label_from) else {
                    return StepOut::Fault(FaultKind::MissingLabel { cell });
                };
                match ctx.lsc(cell, label_from, label, new) {
                    Ok(()) => {
                        self.advance();
                        StepOut::Continue
                    }
                    Err(e) => StepOut::Fault(e),
                }
            }
            ScriptOp::SimRead(c) => {
                ctx.lll_op(c);
                self.advance();
                StepOut::Continue
            }
            ScriptOp::SimWrite(c, v) => {
                self.waiting = true;
                StepOut::Call(Frame::SimWrite(SimWriteFrame::new(c, v)))
            }
            ScriptOp::SimCam { cell, old, new } => {
                self.waiting = true;
                StepOut::Call(Frame::SimCam(SimCamFrame::new(cell, old, new)))
            }
            ScriptOp::Think(n) => {
                self.think_left = n.saturating_sub(1);
                self.advance_now();
                ctx.local(LocalKind::Think);
                StepOut::Continue
            }
            ScriptOp::Insert { aset, item } => {
                self.waiting = true;
                StepOut::Call(Frame::Insert(InsertFrame::new(aset, ItemId(item as u64))))
            }
            ScriptOp::Remove { aset, item } => {
                let Some(&slot) = self.insert_slots.get(&(aset.0, item)) else {
                    return StepOut::Fault(FaultKind::RemoveNotOwner { aset, slot: usize::MAX });
                };
                let owner_cell = ctx.aset(aset).owner_cell(slot);
                if ctx.peek(owner_cell) != Word::Item(ItemId(item as u64)) {
                    return StepOut::Fault(FaultKind::RemoveNotOwner { aset, slot });
                }
                self.waiting = true;
                StepOut::Call(Frame::Remove(RemoveFrame::new(aset, slot, ItemId(item as u64))))
            }
            ScriptOp::GetSet { aset } => {
                let head_cell = ctx.aset(aset).set_cell(0);
                let head = ctx.peek(head_cell);
                let items = match head {
                    Word::Node(r) => ctx.mem().list_items(Some(r)),
                    _ => vec![],
                };
                ctx.read_op(head_cell, OpDesc::GetSet { aset }, RetVal::Items(items.clone()));
                self.results.push(RetVal::Items(items));
                self.advance_now();
                StepOut::Continue
            }
            ScriptOp::MultiInsert { item, sets } => {
                self.waiting = true;
                StepOut::Call(Frame::MultiInsert(MultiInsertFrame::new(
                    ItemId(item as u64),
                    sets,
                    RevealSpec::Bool,
                )))
            }
            ScriptOp::MultiRemove { item, sets } => {
                let Some(slots) = self.multi_slots.get(&item).cloned() else {
                    return StepOut::Fault(FaultKind::Config(format!(
                        "multiRemove of item {item} without a prior multiInsert"
                    )));
                };
                if slots.len() != sets.len() {
                    return StepOut::Fault(FaultKind::Config(format!(
                        "multiRemove of item {item} names {} sets, inserted into {}",
                        sets.len(),
                        slots.len()
                    )));
                }
                self.waiting = true;
                StepOut::Call(Frame::MultiRemove(MultiRemoveFrame::new(
                    ItemId(item as u64),
                    sets,
                    slots,
                )))
            }
            ScriptOp::GetSetFiltered { aset } => {
                self.waiting = true;
                StepOut::Call(Frame::GetSetFiltered(GsfFrame::new(aset)))
            }
            ScriptOp::RunThunk { thunk } => {
                self.waiting = true;
                let id = ThunkId(thunk as u32);
                let desc = ctx.thunk_instance(id).desc;
                StepOut::Call(Frame::RunThunk(RunThunkFrame::new(id, desc)))
            }
            ScriptOp::TryLocks { locks } => {
                let variant = match ctx.lock_setup() {
                    Some(s) => s.variant,
                    None => {
                        return StepOut::Fault(FaultKind::Config(
                            "scripted tryLocks without lock setup".into(),
                        ))
                    }
                };
                let desc = match ctx.create_descriptor(locks.clone(), 0) {
                    Ok(d) => d,
                    Err(e) => return StepOut::Fault(e),
                };
                self.waiting = true;
                StepOut::Call(Frame::TryLocks(TryLocksFrame::new(desc, locks, variant)))
            }
        }
    }

    fn advance(&mut self) {
        self.idx += 1;
    }

    fn advance_now(&mut self) {
        self.idx += 1;
    }

    fn deliver(&mut self, v: RetVal) {
        debug_assert!(self.waiting);
        self.waiting = false;
        let op = self.ops[self.idx].clone();
        match (&op, &v) {
            (ScriptOp::Insert { aset, item }, RetVal::Slot(slot)) => {
                self.insert_slots.insert((aset.0, *item), *slot);
            }
            (ScriptOp::MultiInsert { item, .. }, RetVal::Slots(slots)) => {
                self.multi_slots.insert(*item, slots.clone());
            }
            _ => {}
        }
        self.results.push(v);
        self.idx += 1;
    }
}

/// Standalone simulated write: labeled load then store-conditional.
#[derive(Debug, Clone)]
pub(crate) struct SimWriteFrame {
    pub cell: CellId,
    pub value: Word,
    pub seq: u64,
    label: Option<u64>,
    stored: bool,
}

impl SimWriteFrame {
    fn new(cell: CellId, value: Word) -> Self {
        SimWriteFrame { cell, value, seq: 0, label: None, stored: false }
    }

    fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.label {
            None => {
                let lv = ctx.lll(self.cell);
                self.label = Some(lv.label);
                StepOut::Continue
            }
            Some(label) => {
                if self.stored {
                    return StepOut::Ret(RetVal::Unit);
                }
                if let Err(e) = ctx.lsc(self.cell, self.cell, label, self.value) {
                    return StepOut::Fault(e);
                }
                self.stored = true;
                StepOut::Continue
            }
        }
    }
}

/// Standalone simulated CAM: labeled load, guard, conditional store.
#[derive(Debug, Clone)]
pub(crate) struct SimCamFrame {
    pub cell: CellId,
    pub old: Word,
    pub new: Word,
    pub seq: u64,
    loaded: Option<LabeledValue>,
    stored: bool,
}

impl SimCamFrame {
    fn new(cell: CellId, old: Word, new: Word) -> Self {
        SimCamFrame { cell, old, new, seq: 0, loaded: None, stored: false }
    }

    fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        match self.loaded {
            None => {
                self.loaded = Some(ctx.lll(self.cell));
                StepOut::Continue
            }
            Some(lv) => {
                if self.stored {
                    return StepOut::Ret(RetVal::Unit);
                }
                if self.new != self.old && lv.value == self.old {
                    if let Err(e) = ctx.lsc(self.cell, self.cell, lv.label, self.new) {
                        return StepOut::Fault(e);
                    }
                    self.stored = true;
                    StepOut::Continue
                } else {
                    // Guard failed: no store-conditional is issued.
                    StepOut::Ret(RetVal::Unit)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::make_schedule;
    use crate::schedule::ScheduleKind;
    use crate::workload;

    fn int(v: i64) -> Word {
        Word::Int(v)
    }

    #[test]
    fn racing_cas_exactly_one_wins_under_both_orders() {
        let w = Arc::new(workload::mem_scripts(
            vec![int(0)],
            vec![
                vec![ScriptOp::Cas(CellId(0), int(0), int(1))],
                vec![ScriptOp::Cas(CellId(0), int(0), int(2))],
            ],
        ));
        let cfg = SimConfig::new(0, 1000);
        for order in [[0u32, 1], [1, 0]] {
            let script: Vec<ProcId> = order
                .iter()
                .flat_map(|&p| std::iter::repeat(ProcId(p)).take(10))
                .collect();
            let s = Schedule::scripted(script).unwrap();
            let out = run_sim(&s, &PlayerPolicy::ImmediateRetry, &w, &cfg).unwrap();
            let expected = if order[0] == 0 { int(1) } else { int(2) };
            assert_eq!(out.mem.peek(CellId(0)), expected);
            let successes = out
                .history
                .iter()
                .filter(|e| {
                    matches!(
                        &e.kind,
                        EventKind::MemOp { access: MemAccess::Cas { ok: true, .. }, .. }
                    )
                })
                .count();
            assert_eq!(successes, 1);
        }
    }

    #[test]
    fn run_sim_is_deterministic() {
        let w = Arc::new(workload::mem_scripts(
            vec![int(0), int(5)],
            vec![
                vec![
                    ScriptOp::Write(CellId(0), int(7)),
                    ScriptOp::Read(CellId(1)),
                    ScriptOp::Cas(CellId(1), int(5), int(6)),
                ],
                vec![ScriptOp::Read(CellId(0)), ScriptOp::Cam(CellId(0), int(7), int(8))],
            ],
        ));
        let s = make_schedule(ScheduleKind::UniformRandom, 42, 2, 100, None).unwrap();
        let cfg = SimConfig::new(9, 100);
        let a = run_sim(&s, &PlayerPolicy::ImmediateRetry, &w, &cfg).unwrap();
        let b = run_sim(&s, &PlayerPolicy::ImmediateRetry, &w, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.history.write_text(&mut buf_a).unwrap();
        b.history.write_text(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn step_accounting_matches_event_counts() {
        let w = Arc::new(workload::mem_scripts(
            vec![int(0)],
            vec![
                vec![ScriptOp::Write(CellId(0), int(1)), ScriptOp::Think(3), ScriptOp::Read(CellId(0))],
                vec![ScriptOp::SimWrite(CellId(0), int(9))],
            ],
        ));
        let s = make_schedule(ScheduleKind::RoundRobin, 0, 2, 100, None).unwrap();
        let out = run_sim(&s, &PlayerPolicy::ImmediateRetry, &w, &SimConfig::new(0, 100)).unwrap();
        let counts = out.history.events_per_proc();
        let max_steps: Vec<u64> = (0..2)
            .map(|p| {
                out.history
                    .iter()
                    .filter(|e| e.proc == ProcId(p))
                    .map(|e| e.local_step)
                    .max()
                    .unwrap()
            })
            .collect();
        assert_eq!(counts, max_steps);
        // Ticks strictly increasing and dense.
        for (i, ev) in out.history.iter().enumerate() {
            assert_eq!(ev.tick, i as u64);
        }
    }

    #[test]
    fn foreign_label_lsc_faults() {
        let w = Arc::new(workload::mem_scripts(
            vec![int(0), int(0)],
            vec![vec![
                ScriptOp::Lll(CellId(1)),
                ScriptOp::Lsc { cell: CellId(0), label_from: CellId(1), new: int(3) },
            ]],
        ));
        let s = make_schedule(ScheduleKind::RoundRobin, 0, 1, 100, None).unwrap();
        let err = run_sim(&s, &PlayerPolicy::ImmediateRetry, &w, &SimConfig::new(0, 100))
            .unwrap_err();
        assert!(matches!(err.kind, FaultKind::ForeignLabel { .. }));
    }

    #[test]
    fn horizon_truncation_is_flagged() {
        let w = Arc::new(workload::mem_scripts(
            vec![int(0)],
            vec![vec![
                ScriptOp::Write(CellId(0), int(1)),
                ScriptOp::Think(50),
                ScriptOp::Write(CellId(0), int(2)),
            ]],
        ));
        let s = make_schedule(ScheduleKind::RoundRobin, 0, 1, 10, None).unwrap();
        let out = run_sim(&s, &PlayerPolicy::ImmediateRetry, &w, &SimConfig::new(0, 10)).unwrap();
        assert!(out.truncated);
        assert!(out.history.meta.truncated);
        assert_eq!(out.mem.peek(CellId(0)), int(1));
    }

    #[test]
    fn solo_thunk_run_matches_static_tick_count() {
        let program = workload::increment_thunk(0);
        let expected = program.solo_ticks();
        let w = Arc::new(workload::thunk_helpers(program, vec![int(0)], 1));
        let s = make_schedule(ScheduleKind::RoundRobin, 0, 1, 10_000, None).unwrap();
        let out = run_sim(&s, &PlayerPolicy::ImmediateRetry, &w, &SimConfig::new(0, 10_000)).unwrap();
        // Shared cells allocate first, so the data cell is CellId(0).
        assert_eq!(out.mem.peek(CellId(0)), int(1));
        // The park tick is the only event outside the run.
        assert_eq!(out.history.len() as u64, expected + 1);
    }

    #[test]
    fn mcam_installs_exactly_one_of_n_racers() {
        // Three processes race mcam from the same snapshot handle.
        let w = Arc::new(workload::mem_scripts(
            vec![Word::Null],
            vec![
                vec![ScriptOp::Mcam(CellId(0), Word::Null, Word::Node(crate::mem::NodeRef(0)))],
                vec![ScriptOp::Mcam(CellId(0), Word::Null, Word::Node(crate::mem::NodeRef(1)))],
                vec![ScriptOp::Mcam(CellId(0), Word::Null, Word::Node(crate::mem::NodeRef(2)))],
            ],
        ));
        let mut sim = Sim::new(w, PlayerPolicy::ImmediateRetry, &SimConfig::new(0, 100)).unwrap();
        for i in 0..3 {
            sim.mem.publish_node(ItemId(i), None);
        }
        for p in [0u32, 1, 2] {
            sim.step_proc(ProcId(p)).unwrap();
        }
        let installs = sim
            .history()
            .iter()
            .filter(|e| {
                matches!(&e.kind, EventKind::MemOp { access: MemAccess::Mcam { ok: true, .. }, .. })
            })
            .count();
        assert_eq!(installs, 1);
        assert_eq!(sim.mem().peek(CellId(0)), Word::Node(crate::mem::NodeRef(0)));
    }
}
