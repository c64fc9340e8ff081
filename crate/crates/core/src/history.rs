//! The recorded event log every checker consumes.
//!
//! Exactly one event is appended per simulator tick, so for every process
//! the number of events attributed to it equals its final step counter.
//! Global ticks are strictly increasing; `local_step` is the 1-based
//! ordinal of the tick within its process.
//!
//! Two on-disk forms are provided, both carrying a schema tag: a
//! line-delimited text format (one JSON event per line after a header
//! line) and a compact length-prefixed binary format.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::mem::{ASetId, CellId, DescId, ItemId, ProcId, Status, ThunkId, Word};

pub const TEXT_SCHEMA: &str = "wflock-history/v1";
pub const BIN_MAGIC: &[u8; 4] = b"WFLH";
pub const BIN_VERSION: u16 = 1;

/// Raw memory-primitive detail carried by a memory-op event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemAccess {
    Read { cell: CellId, value: Word },
    Write { cell: CellId, value: Word },
    Cas { cell: CellId, old: Word, new: Word, ok: bool },
    Cam { cell: CellId, old: Word, new: Word, ok: bool },
    /// Multiword CAM via indirection: a CAM whose old/new are handles to
    /// immutable snapshot records.
    Mcam { cell: CellId, old: Word, new: Word, ok: bool },
    Lll { cell: CellId, label: u64, value: Word },
    Lsc { cell: CellId, label: u64, new: Word, ok: bool },
}

impl MemAccess {
    pub fn cell(&self) -> CellId {
        match *self {
            MemAccess::Read { cell, .. }
            | MemAccess::Write { cell, .. }
            | MemAccess::Cas { cell, .. }
            | MemAccess::Cam { cell, .. }
            | MemAccess::Mcam { cell, .. }
            | MemAccess::Lll { cell, .. }
            | MemAccess::Lsc { cell, .. } => cell,
        }
    }

    /// Did this access mutate the cell (and bump its label)?
    pub fn mutated(&self) -> bool {
        match *self {
            MemAccess::Read { .. } | MemAccess::Lll { .. } => false,
            MemAccess::Write { .. } => true,
            MemAccess::Cas { ok, .. }
            | MemAccess::Cam { ok, .. }
            | MemAccess::Mcam { ok, .. }
            | MemAccess::Lsc { ok, .. } => ok,
        }
    }
}

/// Which lock algorithm variant an attempt runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LockVariant {
    Known,
    Adaptive,
}

/// Identity of a framed operation, recorded on its invocation and
/// response events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpDesc {
    TryLocks { desc: DescId, locks: Vec<ASetId>, variant: LockVariant },
    Run { desc: DescId },
    RunAdaptive { desc: DescId },
    MultiInsert { item: ItemId, sets: Vec<ASetId> },
    MultiRemove { item: ItemId, sets: Vec<ASetId> },
    GetSetFiltered { aset: ASetId },
    Insert { aset: ASetId, item: ItemId },
    Remove { aset: ASetId, item: ItemId, slot: usize },
    /// Single-tick active-set getSet; the event doubles as its own
    /// invocation and response.
    GetSet { aset: ASetId },
    /// Single-tick standalone simulated read (a bare labeled load).
    SimRead { cell: CellId },
    Climb { aset: ASetId, from: usize },
    RunThunk { thunk: ThunkId, desc: Option<DescId> },
    SimWrite { cell: CellId, value: Word },
    SimCam { cell: CellId, old: Word, new: Word },
}

/// Results carried on response events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetVal {
    Unit,
    Bool(bool),
    Word(Word),
    Slot(usize),
    /// Slot indices, parallel to a multiInsert's set list.
    Slots(Vec<usize>),
    Items(Vec<ItemId>),
    Count(usize),
}

/// Local (non-memory) work performed in one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalKind {
    /// Descriptor + thunk-instance creation at the start of an attempt.
    CreateDescriptor,
    /// Allocate a cons node before trying to install it.
    Cons,
    /// A priority comparison that eliminated nobody (self-comparison).
    Compare,
    /// Walk one cons-list node during a filtered scan.
    ListWalk,
    /// Player-policy think step.
    Think,
    /// Register/computation step inside a thunk.
    ThunkLocal,
    /// Build and publish a new context record before the CAM.
    CtxBuild,
    /// Load a context record into the register file.
    CtxLoad,
    /// Script-level padding step.
    Nop,
    /// A process with nothing left to run parks on this tick.
    Park,
}

/// Site of an instruction inside a thunk program, for per-site
/// mutation accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThunkSite {
    pub capsule: u32,
    pub instr: u32,
}

/// What one thunk tick did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThunkAction {
    Mem { access: MemAccess, site: Option<ThunkSite> },
    Local(LocalKind),
    /// Final CAM on the done flag.
    Done { ok: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    MemOp {
        access: MemAccess,
        /// Set when this single memory op is itself a complete operation
        /// (an active-set getSet or a standalone simulated read).
        op: Option<(OpDesc, RetVal)>,
    },
    Invoke {
        op: OpDesc,
        seq: u64,
        warn: Option<String>,
    },
    Respond {
        op: OpDesc,
        seq: u64,
        ret: RetVal,
    },
    AttemptStart {
        desc: DescId,
        locks: Vec<ASetId>,
        variant: LockVariant,
        seq: u64,
    },
    /// The priority write that makes an attempt visible to competitors.
    Reveal {
        desc: DescId,
        priority: Word,
        participation: bool,
    },
    /// A successful CAS that moved a descriptor's status.
    StatusChange {
        desc: DescId,
        from: Status,
        to: Status,
    },
    ThunkStep {
        thunk: ThunkId,
        desc: Option<DescId>,
        run_seq: u64,
        action: ThunkAction,
    },
    DelayTick {
        target: u64,
    },
    Local(LocalKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub proc: ProcId,
    pub local_step: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryMeta {
    pub procs: u32,
    pub seed: u64,
    pub truncated: bool,
}

/// The complete event log of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    pub meta: HistoryMeta,
    pub events: Vec<Event>,
}

impl History {
    pub fn new(procs: u32, seed: u64) -> Self {
        History { meta: HistoryMeta { procs, seed, truncated: false }, events: Vec::new() }
    }

    pub fn push(&mut self, ev: Event) {
        debug_assert!(self.events.last().map_or(true, |p| p.tick < ev.tick));
        self.events.push(ev);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    /// Per-process event counts, for the step-accounting invariant.
    pub fn events_per_proc(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.meta.procs as usize];
        for ev in &self.events {
            counts[ev.proc.0 as usize] += 1;
        }
        counts
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            schema: &'static str,
            meta: &'a HistoryMeta,
        }
        let header = Header { schema: TEXT_SCHEMA, meta: &self.meta };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> io::Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            schema: String,
            meta: HistoryMeta,
        }
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty history file"))??;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        if header.schema != TEXT_SCHEMA {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported history schema {:?}, expected {:?}", header.schema, TEXT_SCHEMA),
            ));
        }
        let mut events = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: Event =
                serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            events.push(ev);
        }
        Ok(History { meta: header.meta, events })
    }

    /// Compact replay format: magic, version, then a length-prefixed JSON
    /// header and one length-prefixed JSON blob per event. Lengths are
    /// little-endian u32.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(BIN_MAGIC)?;
        w.write_all(&BIN_VERSION.to_le_bytes())?;
        let put = |w: &mut W, bytes: &[u8]| -> io::Result<()> {
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)
        };
        put(&mut w, &serde_json::to_vec(&self.meta)?)?;
        w.write_all(&(self.events.len() as u64).to_le_bytes())?;
        for ev in &self.events {
            put(&mut w, &serde_json::to_vec(ev)?)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BIN_MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic; not a binary history"));
        }
        let mut ver = [0u8; 2];
        r.read_exact(&mut ver)?;
        let ver = u16::from_le_bytes(ver);
        if ver != BIN_VERSION {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported binary history version {ver}, expected {BIN_VERSION}"),
            ));
        }
        let get = |r: &mut R| -> io::Result<Vec<u8>> {
            let mut len = [0u8; 4];
            r.read_exact(&mut len)?;
            let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
            r.read_exact(&mut buf)?;
            Ok(buf)
        };
        let meta: HistoryMeta = serde_json::from_slice(&get(&mut r)?)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let mut count = [0u8; 8];
        r.read_exact(&mut count)?;
        let count = u64::from_le_bytes(count);
        let mut events = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let ev: Event = serde_json::from_slice(&get(&mut r)?)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            events.push(ev);
        }
        Ok(History { meta, events })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> History {
        let mut h = History::new(2, 42);
        h.push(Event {
            tick: 0,
            proc: ProcId(0),
            local_step: 1,
            kind: EventKind::MemOp {
                access: MemAccess::Read { cell: CellId(0), value: Word::Int(0) },
                op: None,
            },
        });
        h.push(Event {
            tick: 1,
            proc: ProcId(1),
            local_step: 1,
            kind: EventKind::Invoke {
                op: OpDesc::Insert { aset: ASetId(0), item: ItemId(7) },
                seq: 1,
                warn: None,
            },
        });
        h.push(Event {
            tick: 2,
            proc: ProcId(1),
            local_step: 2,
            kind: EventKind::StatusChange { desc: DescId(3), from: Status::Active, to: Status::Won },
        });
        h
    }

    #[test]
    fn text_round_trip() {
        let h = sample();
        let mut buf = Vec::new();
        h.write_text(&mut buf).unwrap();
        let back = History::read_text(&buf[..]).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn binary_round_trip() {
        let h = sample();
        let mut buf = Vec::new();
        h.write_binary(&mut buf).unwrap();
        let back = History::read_binary(&buf[..]).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let mut buf = Vec::new();
        sample().write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(TEXT_SCHEMA, "other/v0");
        let err = History::read_text(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("schema"));
    }
}
