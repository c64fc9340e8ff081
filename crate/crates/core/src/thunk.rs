//! Capsule-structured idempotent thunks.
//!
//! A thunk is authored as an ordered list of capsules. Each capsule may
//! open with a batch of store-conditionals on distinct cells and then
//! runs straight-line code (labeled loads, local register ops). Crossing
//! a capsule boundary publishes a context update: the register file, the
//! next capsule index, and a uniqueness counter are CAMed into the shared
//! context cell, and every helper reloads whatever context won before
//! continuing. All helpers therefore converge to one winning context per
//! boundary, and a store-conditional replayed by a late helper always
//! fails because its label predates the winner's mutation.
//!
//! Programs using more local state than the register file can spill into
//! per-thunk shared cells declared on the program; accesses to those go
//! through the same labeled load / store-conditional path.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Ctx, StepOut};
use crate::history::{LocalKind, RetVal, ThunkSite};
use crate::mem::{CellId, CtxRecord, DescId, ThunkId, Word};

/// Expression over the register file and read-only parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Const(Word),
    Reg(u8),
    /// Static data captured by the thunk; not part of the shared context.
    Param(u8),
    /// regs[r] + k, both as integers.
    AddConst(u8, i64),
    /// Bool: regs[r] == params[p], by tagged equality.
    EqParam(u8, u8),
}

/// Reference to one of the cells bound at instance creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRef(pub u8);

/// Why the original code issued this store-conditional. Used only for the
/// construction-time race check between writes and compare-and-modifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LscIntent {
    Write,
    Cam,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LscInstr {
    pub cell: CellRef,
    /// Register holding the label captured before the capsule boundary.
    pub label_reg: u8,
    pub value: Expr,
    /// Register holding a Bool; false skips the store. None = always.
    pub guard: Option<u8>,
    pub intent: LscIntent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyInstr {
    /// Labeled load: value into `val_reg`, label into `label_reg`.
    Lll { cell: CellRef, val_reg: u8, label_reg: u8 },
    /// Simulated read: labeled load, label discarded.
    Read { cell: CellRef, dst: u8 },
    Local { dst: u8, expr: Expr },
    Nop,
    /// A store-conditional not at a capsule start. Rejected by
    /// `validate`; representable so the idempotence checker can
    /// demonstrate why the placement rule exists.
    MisplacedLsc(LscInstr),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capsule {
    pub lscs: Vec<LscInstr>,
    pub body: Vec<BodyInstr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThunkProgram {
    /// Register file size R; fixed per thunk.
    pub regs: u8,
    /// Number of bound cells (targets of loads/stores).
    pub cells: u8,
    /// Read-only words available via `Expr::Param`.
    pub params: Vec<Word>,
    pub capsules: Vec<Capsule>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThunkBuildError {
    #[error("register r{0} out of range (R = {1})")]
    RegOutOfRange(u8, u8),
    #[error("cell c{0} out of range ({1} bound)")]
    CellOutOfRange(u8, u8),
    #[error("param {0} out of range ({1} declared)")]
    ParamOutOfRange(u8, u8),
    #[error("store-conditional must be at a capsule start (capsule {0}, body index {1})")]
    LscNotAtCapsuleStart(u32, u32),
    #[error("capsule {0} issues two store-conditionals on cell c{1}")]
    DuplicateLscCell(u32, u8),
    #[error("cell c{0} is the target of both write- and CAM-intent stores")]
    WriteCamRace(u8),
    #[error("thunk has no capsules")]
    Empty,
}

impl ThunkProgram {
    /// Construction-time checks for the restricted model.
    pub fn validate(&self) -> Result<(), ThunkBuildError> {
        if self.capsules.is_empty() {
            return Err(ThunkBuildError::Empty);
        }
        let reg = |r: u8| {
            if r >= self.regs {
                Err(ThunkBuildError::RegOutOfRange(r, self.regs))
            } else {
                Ok(())
            }
        };
        let cell = |c: CellRef| {
            if c.0 >= self.cells {
                Err(ThunkBuildError::CellOutOfRange(c.0, self.cells))
            } else {
                Ok(())
            }
        };
        let expr = |e: &Expr| match *e {
            Expr::Reg(r) | Expr::AddConst(r, _) => reg(r),
            Expr::EqParam(r, p) => {
                reg(r)?;
                if p as usize >= self.params.len() {
                    Err(ThunkBuildError::ParamOutOfRange(p, self.params.len() as u8))
                } else {
                    Ok(())
                }
            }
            Expr::Param(p) => {
                if p as usize >= self.params.len() {
                    Err(ThunkBuildError::ParamOutOfRange(p, self.params.len() as u8))
                } else {
                    Ok(())
                }
            }
            Expr::Const(_) => Ok(()),
        };
        let mut write_cells = vec![false; self.cells as usize];
        let mut cam_cells = vec![false; self.cells as usize];
        for (ci, cap) in self.capsules.iter().enumerate() {
            let mut seen = vec![false; self.cells as usize];
            for l in &cap.lscs {
                cell(l.cell)?;
                reg(l.label_reg)?;
                expr(&l.value)?;
                if let Some(g) = l.guard {
                    reg(g)?;
                }
                if seen[l.cell.0 as usize] {
                    return Err(ThunkBuildError::DuplicateLscCell(ci as u32, l.cell.0));
                }
                seen[l.cell.0 as usize] = true;
                match l.intent {
                    LscIntent::Write => write_cells[l.cell.0 as usize] = true,
                    LscIntent::Cam => cam_cells[l.cell.0 as usize] = true,
                }
            }
            for (bi, b) in cap.body.iter().enumerate() {
                match b {
                    BodyInstr::Lll { cell: c, val_reg, label_reg } => {
                        cell(*c)?;
                        reg(*val_reg)?;
                        reg(*label_reg)?;
                    }
                    BodyInstr::Read { cell: c, dst } => {
                        cell(*c)?;
                        reg(*dst)?;
                    }
                    BodyInstr::Local { dst, expr: e } => {
                        reg(*dst)?;
                        expr(e)?;
                    }
                    BodyInstr::Nop => {}
                    BodyInstr::MisplacedLsc(_) => {
                        return Err(ThunkBuildError::LscNotAtCapsuleStart(ci as u32, bi as u32));
                    }
                }
            }
        }
        for c in 0..self.cells as usize {
            if write_cells[c] && cam_cells[c] {
                return Err(ThunkBuildError::WriteCamRace(c as u8));
            }
        }
        Ok(())
    }

    /// Exact tick count of a solo (uncontended) run, including the run's
    /// invocation and response steps.
    pub fn solo_ticks(&self) -> u64 {
        // invoke + context read + context load ... done CAM + respond
        let mut t = 3u64;
        for cap in &self.capsules {
            t += cap.lscs.len() as u64 + cap.body.len() as u64;
            t += 4; // boundary: build, CAM, re-read, re-load
        }
        t + 2
    }

    /// Worst-case ticks any single simulated instruction can expand to,
    /// counting the capsule-boundary machinery against the instruction
    /// that precedes it. Constant by construction.
    pub const MAX_OP_EXPANSION: u64 = 5;

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "thunk v1 regs={} cells={}", self.regs, self.cells);
        for p in &self.params {
            let _ = writeln!(s, "param {}", word_to_text(*p));
        }
        for cap in &self.capsules {
            let _ = writeln!(s, "capsule");
            for l in &cap.lscs {
                let _ = writeln!(s, "  {}", lsc_to_text(l, false));
            }
            for b in &cap.body {
                match b {
                    BodyInstr::Lll { cell, val_reg, label_reg } => {
                        let _ = writeln!(s, "  lll c{} r{} r{}", cell.0, val_reg, label_reg);
                    }
                    BodyInstr::Read { cell, dst } => {
                        let _ = writeln!(s, "  read c{} r{}", cell.0, dst);
                    }
                    BodyInstr::Local { dst, expr } => {
                        let _ = writeln!(s, "  local r{} {}", dst, expr_to_text(expr));
                    }
                    BodyInstr::Nop => {
                        let _ = writeln!(s, "  nop");
                    }
                    BodyInstr::MisplacedLsc(l) => {
                        let _ = writeln!(s, "  {}", lsc_to_text(l, true));
                    }
                }
            }
            let _ = writeln!(s, "end");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ThunkParseError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| ThunkParseError::new(0, "empty input"))?;
        let mut regs = None;
        let mut cells = None;
        {
            let mut toks = header.split_whitespace();
            if toks.next() != Some("thunk") || toks.next() != Some("v1") {
                return Err(ThunkParseError::new(1, "expected `thunk v1` header"));
            }
            for t in toks {
                if let Some(v) = t.strip_prefix("regs=") {
                    regs = v.parse().ok();
                } else if let Some(v) = t.strip_prefix("cells=") {
                    cells = v.parse().ok();
                }
            }
        }
        let regs = regs.ok_or_else(|| ThunkParseError::new(1, "missing regs="))?;
        let cells = cells.ok_or_else(|| ThunkParseError::new(1, "missing cells="))?;
        let mut program =
            ThunkProgram { regs, cells, params: Vec::new(), capsules: Vec::new() };
        let mut current: Option<Capsule> = None;
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let mut toks = line.split_whitespace();
            let head = toks.next().unwrap();
            let rest: Vec<&str> = toks.collect();
            match head {
                "param" => {
                    if current.is_some() {
                        return Err(ThunkParseError::new(lineno, "param inside capsule"));
                    }
                    program.params.push(word_from_text(rest.first().copied().unwrap_or(""), lineno)?);
                }
                "capsule" => {
                    if current.is_some() {
                        return Err(ThunkParseError::new(lineno, "nested capsule"));
                    }
                    current = Some(Capsule::default());
                }
                "end" => {
                    let cap = current
                        .take()
                        .ok_or_else(|| ThunkParseError::new(lineno, "end outside capsule"))?;
                    program.capsules.push(cap);
                }
                "lsc" | "lsc!" => {
                    let cap = current
                        .as_mut()
                        .ok_or_else(|| ThunkParseError::new(lineno, "instruction outside capsule"))?;
                    let l = lsc_from_text(&rest, lineno)?;
                    if head == "lsc!" {
                        cap.body.push(BodyInstr::MisplacedLsc(l));
                    } else if cap.body.is_empty() {
                        cap.lscs.push(l);
                    } else {
                        cap.body.push(BodyInstr::MisplacedLsc(l));
                    }
                }
                "lll" => {
                    let cap = current
                        .as_mut()
                        .ok_or_else(|| ThunkParseError::new(lineno, "instruction outside capsule"))?;
                    let c = parse_cell(rest.first().copied(), lineno)?;
                    let v = parse_reg(rest.get(1).copied(), lineno)?;
                    let l = parse_reg(rest.get(2).copied(), lineno)?;
                    cap.body.push(BodyInstr::Lll { cell: c, val_reg: v, label_reg: l });
                }
                "read" => {
                    let cap = current
                        .as_mut()
                        .ok_or_else(|| ThunkParseError::new(lineno, "instruction outside capsule"))?;
                    let c = parse_cell(rest.first().copied(), lineno)?;
                    let d = parse_reg(rest.get(1).copied(), lineno)?;
                    cap.body.push(BodyInstr::Read { cell: c, dst: d });
                }
                "local" => {
                    let cap = current
                        .as_mut()
                        .ok_or_else(|| ThunkParseError::new(lineno, "instruction outside capsule"))?;
                    let d = parse_reg(rest.first().copied(), lineno)?;
                    let e = expr_from_text(rest.get(1).copied().unwrap_or(""), lineno)?;
                    cap.body.push(BodyInstr::Local { dst: d, expr: e });
                }
                "nop" => {
                    let cap = current
                        .as_mut()
                        .ok_or_else(|| ThunkParseError::new(lineno, "instruction outside capsule"))?;
                    cap.body.push(BodyInstr::Nop);
                }
                other => return Err(ThunkParseError::new(lineno, format!("unknown opcode `{other}`"))),
            }
        }
        if current.is_some() {
            return Err(ThunkParseError::new(0, "unterminated capsule"));
        }
        Ok(program)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("thunk text, line {line}: {msg}")]
pub struct ThunkParseError {
    pub line: usize,
    pub msg: String,
}

impl ThunkParseError {
    fn new(line: usize, msg: impl Into<String>) -> Self {
        ThunkParseError { line, msg: msg.into() }
    }
}

fn lsc_to_text(l: &LscInstr, misplaced: bool) -> String {
    let mut s = format!(
        "{} c{} r{} {}",
        if misplaced { "lsc!" } else { "lsc" },
        l.cell.0,
        l.label_reg,
        expr_to_text(&l.value)
    );
    if let Some(g) = l.guard {
        let _ = write!(s, " guard=r{g}");
    }
    let _ = write!(s, " intent={}", if l.intent == LscIntent::Write { "write" } else { "cam" });
    s
}

fn lsc_from_text(rest: &[&str], lineno: usize) -> Result<LscInstr, ThunkParseError> {
    let cell = parse_cell(rest.first().copied(), lineno)?;
    let label_reg = parse_reg(rest.get(1).copied(), lineno)?;
    let value = expr_from_text(rest.get(2).copied().unwrap_or(""), lineno)?;
    let mut guard = None;
    let mut intent = LscIntent::Write;
    for t in &rest[3.min(rest.len())..] {
        if let Some(g) = t.strip_prefix("guard=r") {
            guard = Some(
                g.parse().map_err(|_| ThunkParseError::new(lineno, "bad guard register"))?,
            );
        } else if let Some(i) = t.strip_prefix("intent=") {
            intent = match i {
                "write" => LscIntent::Write,
                "cam" => LscIntent::Cam,
                _ => return Err(ThunkParseError::new(lineno, "intent must be write|cam")),
            };
        }
    }
    Ok(LscInstr { cell, label_reg, value, guard, intent })
}

fn parse_cell(tok: Option<&str>, lineno: usize) -> Result<CellRef, ThunkParseError> {
    tok.and_then(|t| t.strip_prefix('c'))
        .and_then(|t| t.parse().ok())
        .map(CellRef)
        .ok_or_else(|| ThunkParseError::new(lineno, "expected cell `cN`"))
}

fn parse_reg(tok: Option<&str>, lineno: usize) -> Result<u8, ThunkParseError> {
    tok.and_then(|t| t.strip_prefix('r'))
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| ThunkParseError::new(lineno, "expected register `rN`"))
}

fn word_to_text(w: Word) -> String {
    match w {
        Word::Null => "null".into(),
        Word::Int(v) => format!("int:{v}"),
        Word::Bool(b) => format!("bool:{b}"),
        Word::Tbd => "tbd".into(),
        other => panic!("word {other:?} has no textual program form"),
    }
}

fn word_from_text(t: &str, lineno: usize) -> Result<Word, ThunkParseError> {
    if t == "null" {
        return Ok(Word::Null);
    }
    if t == "tbd" {
        return Ok(Word::Tbd);
    }
    if let Some(v) = t.strip_prefix("int:") {
        return v
            .parse()
            .map(Word::Int)
            .map_err(|_| ThunkParseError::new(lineno, "bad int literal"));
    }
    if let Some(v) = t.strip_prefix("bool:") {
        return v
            .parse()
            .map(Word::Bool)
            .map_err(|_| ThunkParseError::new(lineno, "bad bool literal"));
    }
    Err(ThunkParseError::new(lineno, format!("unknown word literal `{t}`")))
}

fn expr_to_text(e: &Expr) -> String {
    match e {
        Expr::Const(w) => format!("const:{}", word_to_text(*w)),
        Expr::Reg(r) => format!("reg:{r}"),
        Expr::Param(p) => format!("param:{p}"),
        Expr::AddConst(r, k) => format!("addc:{r}:{k}"),
        Expr::EqParam(r, p) => format!("eqp:{r}:{p}"),
    }
}

fn expr_from_text(t: &str, lineno: usize) -> Result<Expr, ThunkParseError> {
    if let Some(v) = t.strip_prefix("const:") {
        return Ok(Expr::Const(word_from_text(v, lineno)?));
    }
    if let Some(v) = t.strip_prefix("reg:") {
        return v
            .parse()
            .map(Expr::Reg)
            .map_err(|_| ThunkParseError::new(lineno, "bad register index"));
    }
    if let Some(v) = t.strip_prefix("param:") {
        return v
            .parse()
            .map(Expr::Param)
            .map_err(|_| ThunkParseError::new(lineno, "bad param index"));
    }
    if let Some(v) = t.strip_prefix("eqp:") {
        let mut parts = v.split(':');
        let r = parts
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| ThunkParseError::new(lineno, "bad eqp register"))?;
        let p = parts
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| ThunkParseError::new(lineno, "bad eqp param"))?;
        return Ok(Expr::EqParam(r, p));
    }
    if let Some(v) = t.strip_prefix("addc:") {
        let mut parts = v.split(':');
        let r = parts
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| ThunkParseError::new(lineno, "bad addc register"))?;
        let k = parts
            .next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| ThunkParseError::new(lineno, "bad addc constant"))?;
        return Ok(Expr::AddConst(r, k));
    }
    Err(ThunkParseError::new(lineno, format!("unknown expr `{t}`")))
}

/// One shared-thunk instance: a program bound to concrete cells, with the
/// context cell all helpers synchronize through and a done flag.
#[derive(Debug, Clone)]
pub struct ThunkInstance {
    pub program: usize,
    pub ctx_cell: CellId,
    pub done_cell: CellId,
    pub cells: Vec<CellId>,
    pub desc: Option<DescId>,
}

/// A helper's run of a shared thunk. Pure data; resumable one tick at a
/// time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunThunkFrame {
    pub thunk: ThunkId,
    /// Descriptor whose attempt owns this thunk, for event tagging.
    pub desc_tag: Option<DescId>,
    pub seq: u64,
    prev_ctx: Word,
    pc: u32,
    capsule_no: u64,
    regs: Vec<Word>,
    phase: ThunkPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ThunkPhase {
    ReadCtx,
    LoadCtx,
    Lsc { i: u32 },
    Body { i: u32 },
    BoundaryBuild,
    BoundaryCam { new_ctx: Word },
    BoundaryReread,
    Finish,
    Finished,
}

impl RunThunkFrame {
    pub fn new(thunk: ThunkId, desc_tag: Option<DescId>) -> Self {
        RunThunkFrame {
            thunk,
            desc_tag,
            seq: 0,
            prev_ctx: Word::Null,
            pc: 0,
            capsule_no: 0,
            regs: Vec::new(),
            phase: ThunkPhase::ReadCtx,
        }
    }

    fn eval(&self, e: &Expr, params: &[Word]) -> Result<Word, String> {
        match *e {
            Expr::Const(w) => Ok(w),
            Expr::Reg(r) => Ok(self.regs[r as usize]),
            Expr::Param(p) => Ok(params[p as usize]),
            Expr::AddConst(r, k) => match self.regs[r as usize] {
                Word::Int(v) => Ok(Word::Int(v + k)),
                other => Err(format!("addc on non-integer register value {other:?}")),
            },
            Expr::EqParam(r, p) => {
                Ok(Word::Bool(self.regs[r as usize] == params[p as usize]))
            }
        }
    }

    pub(crate) fn step(&mut self, ctx: &mut Ctx<'_>) -> StepOut {
        let inst = ctx.thunk_instance(self.thunk).clone();
        let program = ctx.thunk_program(inst.program).clone();
        match self.phase {
            ThunkPhase::ReadCtx => {
                self.prev_ctx = ctx.read(inst.ctx_cell);
                self.phase = ThunkPhase::LoadCtx;
                StepOut::Continue
            }
            ThunkPhase::LoadCtx => {
                let h = match self.prev_ctx {
                    Word::Ctx(h) => h,
                    other => {
                        return StepOut::fault(format!("context cell held {other:?}"));
                    }
                };
                let rec = ctx.mem().ctx(h).clone();
                self.pc = rec.pc;
                self.capsule_no = rec.capsule_no;
                self.regs = rec.regs;
                ctx.local(LocalKind::CtxLoad);
                self.phase = if self.pc as usize >= program.capsules.len() {
                    ThunkPhase::Finish
                } else {
                    ThunkPhase::Lsc { i: 0 }
                };
                StepOut::Continue
            }
            ThunkPhase::Lsc { i } => {
                let cap = &program.capsules[self.pc as usize];
                if let Some(l) = cap.lscs.get(i as usize) {
                    let site = ThunkSite { capsule: self.pc, instr: i };
                    match self.exec_lsc(ctx, &inst, &program, l, site) {
                        Ok(()) => {}
                        Err(e) => return StepOut::fault(e),
                    }
                    self.phase = ThunkPhase::Lsc { i: i + 1 };
                } else {
                    self.phase = ThunkPhase::Body { i: 0 };
                    return self.step(ctx);
                }
                StepOut::Continue
            }
            ThunkPhase::Body { i } => {
                let cap = &program.capsules[self.pc as usize];
                if let Some(b) = cap.body.get(i as usize) {
                    let site =
                        ThunkSite { capsule: self.pc, instr: cap.lscs.len() as u32 + i };
                    match b {
                        BodyInstr::Lll { cell, val_reg, label_reg } => {
                            let lv = ctx.lll_site(inst.cells[cell.0 as usize], Some(site));
                            self.regs[*val_reg as usize] = lv.value;
                            self.regs[*label_reg as usize] =
                                Word::Label { cell: lv.cell, label: lv.label };
                        }
                        BodyInstr::Read { cell, dst } => {
                            let lv = ctx.lll_site(inst.cells[cell.0 as usize], Some(site));
                            self.regs[*dst as usize] = lv.value;
                        }
                        BodyInstr::Local { dst, expr } => {
                            match self.eval(expr, &program.params) {
                                Ok(w) => self.regs[*dst as usize] = w,
                                Err(e) => return StepOut::fault(e),
                            }
                            ctx.local(LocalKind::ThunkLocal);
                        }
                        BodyInstr::Nop => ctx.local(LocalKind::ThunkLocal),
                        BodyInstr::MisplacedLsc(l) => {
                            match self.exec_lsc(ctx, &inst, &program, l, site) {
                                Ok(()) => {}
                                Err(e) => return StepOut::fault(e),
                            }
                        }
                    }
                    self.phase = ThunkPhase::Body { i: i + 1 };
                } else {
                    self.phase = ThunkPhase::BoundaryBuild;
                    return self.step(ctx);
                }
                StepOut::Continue
            }
            ThunkPhase::BoundaryBuild => {
                let rec = CtxRecord {
                    pc: self.pc + 1,
                    capsule_no: self.capsule_no + 1,
                    regs: self.regs.clone(),
                };
                let h = ctx.mem_mut().publish_ctx(rec);
                ctx.local(LocalKind::CtxBuild);
                self.phase = ThunkPhase::BoundaryCam { new_ctx: Word::Ctx(h) };
                StepOut::Continue
            }
            ThunkPhase::BoundaryCam { new_ctx } => {
                ctx.mcam(inst.ctx_cell, self.prev_ctx, new_ctx);
                self.phase = ThunkPhase::BoundaryReread;
                StepOut::Continue
            }
            ThunkPhase::BoundaryReread => {
                // Trailing run(): reload whatever context won the boundary.
                self.prev_ctx = ctx.read(inst.ctx_cell);
                self.phase = ThunkPhase::LoadCtx;
                StepOut::Continue
            }
            ThunkPhase::Finish => {
                ctx.thunk_done(inst.done_cell);
                self.phase = ThunkPhase::Finished;
                StepOut::Continue
            }
            ThunkPhase::Finished => StepOut::Ret(RetVal::Unit),
        }
    }

    fn exec_lsc(
        &mut self,
        ctx: &mut Ctx<'_>,
        inst: &ThunkInstance,
        program: &ThunkProgram,
        l: &LscInstr,
        site: ThunkSite,
    ) -> Result<(), String> {
        if let Some(g) = l.guard {
            match self.regs[g as usize] {
                Word::Bool(true) => {}
                Word::Bool(false) => {
                    ctx.local(LocalKind::ThunkLocal);
                    return Ok(());
                }
                other => return Err(format!("guard register r{g} held {other:?}, not a Bool")),
            }
        }
        let target = inst.cells[l.cell.0 as usize];
        let label = match self.regs[l.label_reg as usize] {
            Word::Label { cell, label } => {
                if cell != target {
                    return Err(format!(
                        "label taken from {cell:?} presented to {target:?}"
                    ));
                }
                label
            }
            other => return Err(format!("label register held {other:?}, not a label")),
        };
        let value = self.eval(&l.value, &program.params)?;
        ctx.lsc_site(target, label, value, Some(site));
        Ok(())
    }
}
