//! Workload definitions: what each logical process runs, which active
//! sets and locks exist, and the thunk templates attempts execute.
//! Builders for the standard benchmark families live here too.

use crate::engine::ScriptOp;
use crate::history::LockVariant;
use crate::lock::LockSetup;
use crate::mem::{ASetId, Word};
use crate::thunk::{BodyInstr, Capsule, CellRef, Expr, LscInstr, LscIntent, ThunkProgram};

/// One active set object; capacity is the announcements-array size C.
#[derive(Debug, Clone)]
pub struct AsetSpec {
    pub capacity: u32,
}

/// How a thunk template's cells bind to the workload's shared cells when
/// an instance is created.
#[derive(Debug, Clone)]
pub enum CellBinding {
    /// Fixed cells, shared by all instances.
    Shared(Vec<usize>),
    /// Process i binds `per` consecutive cells starting at `base + i*per`.
    PerProc { base: usize, per: usize },
}

#[derive(Debug, Clone)]
pub struct ThunkTemplate {
    pub program: ThunkProgram,
    pub binding: CellBinding,
}

/// Default attempt shape for a process running the lock loop.
#[derive(Debug, Clone)]
pub struct AttemptRule {
    pub locks: Vec<ASetId>,
    pub template: usize,
}

#[derive(Debug, Clone)]
pub enum ProcProgram {
    /// Repeatedly consult the player policy and run tryLock attempts.
    LockLoop,
    /// A fixed list of operations (test driver).
    Script(Vec<ScriptOp>),
}

/// Pre-declared item for script workloads; gets a boolean flag cell.
#[derive(Debug, Clone, Default)]
pub struct ItemSpec;

/// Thunk instances available to scripts, created at build time.
#[derive(Debug, Clone)]
pub struct ScriptThunkSpec {
    pub template: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Workload {
    pub asets: Vec<AsetSpec>,
    pub shared_cells: Vec<Word>,
    pub items: Vec<ItemSpec>,
    pub thunk_templates: Vec<ThunkTemplate>,
    pub script_thunks: Vec<ScriptThunkSpec>,
    pub lock_setup: Option<LockSetup>,
    pub attempt_rules: Vec<AttemptRule>,
    pub programs: Vec<ProcProgram>,
}

impl Workload {
    pub fn procs(&self) -> u32 {
        self.programs.len() as u32
    }
}

/// An increment thunk on one cell, padded with `pad` no-ops in its first
/// capsule. Two capsules: load + compute, then the store-conditional.
pub fn increment_thunk(pad: usize) -> ThunkProgram {
    let mut body = vec![
        BodyInstr::Lll { cell: CellRef(0), val_reg: 0, label_reg: 1 },
        BodyInstr::Local { dst: 2, expr: Expr::AddConst(0, 1) },
    ];
    body.extend(std::iter::repeat(BodyInstr::Nop).take(pad));
    ThunkProgram {
        regs: 4,
        cells: 1,
        params: vec![],
        capsules: vec![
            Capsule { lscs: vec![], body },
            Capsule {
                lscs: vec![LscInstr {
                    cell: CellRef(0),
                    label_reg: 1,
                    value: Expr::Reg(2),
                    guard: None,
                    intent: LscIntent::Write,
                }],
                body: vec![],
            },
        ],
    }
}

/// Swap the contents of two cells: both loads in capsule 0, both
/// store-conditionals batched at the start of capsule 1.
pub fn swap_thunk() -> ThunkProgram {
    ThunkProgram {
        regs: 4,
        cells: 2,
        params: vec![],
        capsules: vec![
            Capsule {
                lscs: vec![],
                body: vec![
                    BodyInstr::Lll { cell: CellRef(0), val_reg: 0, label_reg: 1 },
                    BodyInstr::Lll { cell: CellRef(1), val_reg: 2, label_reg: 3 },
                ],
            },
            Capsule {
                lscs: vec![
                    LscInstr {
                        cell: CellRef(0),
                        label_reg: 1,
                        value: Expr::Reg(2),
                        guard: None,
                        intent: LscIntent::Write,
                    },
                    LscInstr {
                        cell: CellRef(1),
                        label_reg: 3,
                        value: Expr::Reg(0),
                        guard: None,
                        intent: LscIntent::Write,
                    },
                ],
                body: vec![],
            },
        ],
    }
}

/// Conditional CAM: if cell 0 currently holds `params[0]`, store
/// `params[1]`; otherwise do nothing. The guard is computed in capsule 0
/// against the loaded value, the conditional store opens capsule 1.
pub fn conditional_cam_thunk(old: Word, new: Word) -> ThunkProgram {
    ThunkProgram {
        regs: 4,
        cells: 1,
        params: vec![old, new],
        capsules: vec![
            Capsule {
                lscs: vec![],
                body: vec![
                    BodyInstr::Lll { cell: CellRef(0), val_reg: 0, label_reg: 1 },
                    BodyInstr::Local { dst: 2, expr: Expr::EqParam(0, 0) },
                ],
            },
            Capsule {
                lscs: vec![LscInstr {
                    cell: CellRef(0),
                    label_reg: 1,
                    value: Expr::Param(1),
                    guard: Some(2),
                    intent: LscIntent::Cam,
                }],
                body: vec![],
            },
        ],
    }
}

/// Dining philosophers: n processes, n chopstick locks, process i takes
/// chopsticks {i, (i+1) mod n}. Point contention per lock is 2 and every
/// attempt takes 2 locks. Each attempt's thunk increments the
/// philosopher's own meal counter (one shared cell per process).
pub fn philosophers(n: u32, setup: LockSetup, thunk_pad: usize) -> Workload {
    let program = increment_thunk(thunk_pad);
    Workload {
        asets: (0..n).map(|_| AsetSpec { capacity: setup.aset_capacity(n) }).collect(),
        shared_cells: vec![Word::Int(0); n as usize],
        items: vec![],
        thunk_templates: vec![ThunkTemplate {
            program,
            binding: CellBinding::PerProc { base: 0, per: 1 },
        }],
        script_thunks: vec![],
        lock_setup: Some(setup),
        attempt_rules: (0..n)
            .map(|i| AttemptRule { locks: vec![ASetId(i), ASetId((i + 1) % n)], template: 0 })
            .collect(),
        programs: vec![ProcProgram::LockLoop; n as usize],
    }
}

/// Graph locking: one process per node, lock set = own node's lock plus
/// each out-neighbor's lock. `adjacency[i]` lists node i's neighbors.
pub fn graph_locking(adjacency: &[Vec<u32>], setup: LockSetup, thunk_pad: usize) -> Workload {
    let n = adjacency.len() as u32;
    let program = increment_thunk(thunk_pad);
    Workload {
        asets: (0..n).map(|_| AsetSpec { capacity: setup.aset_capacity(n) }).collect(),
        shared_cells: vec![Word::Int(0); n as usize],
        items: vec![],
        thunk_templates: vec![ThunkTemplate {
            program,
            binding: CellBinding::PerProc { base: 0, per: 1 },
        }],
        script_thunks: vec![],
        lock_setup: Some(setup),
        attempt_rules: adjacency
            .iter()
            .enumerate()
            .map(|(i, nbrs)| {
                let mut locks = vec![ASetId(i as u32)];
                locks.extend(nbrs.iter().map(|&j| ASetId(j)));
                AttemptRule { locks, template: 0 }
            })
            .collect(),
        programs: vec![ProcProgram::LockLoop; n as usize],
    }
}

/// The directed ring on n nodes: node i's single out-neighbor is i+1, so
/// lock sets are {i, i+1 mod n}, the philosophers pattern.
pub fn ring_adjacency(n: u32) -> Vec<Vec<u32>> {
    (0..n).map(|i| vec![(i + 1) % n]).collect()
}

/// Star on n nodes: node 0 is the hub, adjacent to every leaf; each leaf
/// is adjacent to the hub only.
pub fn star_adjacency(n: u32) -> Vec<Vec<u32>> {
    (0..n)
        .map(|i| if i == 0 { (1..n).collect() } else { vec![0] })
        .collect()
}

/// Saturated conflict workload for calibration: kappa processes all
/// contending for the same `max_locks` locks with maximal-length thunks.
/// Per-lock point contention is exactly kappa.
pub fn saturated(setup: LockSetup, thunk_pad: usize) -> Workload {
    let kappa = setup.kappa as u32;
    let locks: Vec<ASetId> = (0..setup.max_locks as u32).map(ASetId).collect();
    let program = increment_thunk(thunk_pad);
    Workload {
        asets: locks.iter().map(|_| AsetSpec { capacity: setup.aset_capacity(kappa) }).collect(),
        shared_cells: vec![Word::Int(0); kappa as usize],
        items: vec![],
        thunk_templates: vec![ThunkTemplate {
            program,
            binding: CellBinding::PerProc { base: 0, per: 1 },
        }],
        script_thunks: vec![],
        lock_setup: Some(setup),
        attempt_rules: (0..kappa)
            .map(|_| AttemptRule { locks: locks.clone(), template: 0 })
            .collect(),
        programs: vec![ProcProgram::LockLoop; kappa as usize],
    }
}

/// Script workload over one shared active set, for interleaving sweeps.
pub fn aset_scripts(capacity: u32, items: usize, scripts: Vec<Vec<ScriptOp>>) -> Workload {
    Workload {
        asets: vec![AsetSpec { capacity }],
        shared_cells: vec![],
        items: vec![ItemSpec; items],
        thunk_templates: vec![],
        script_thunks: vec![],
        lock_setup: None,
        attempt_rules: vec![],
        programs: scripts.into_iter().map(ProcProgram::Script).collect(),
    }
}

/// Script workload with raw shared cells only.
pub fn mem_scripts(cells: Vec<Word>, scripts: Vec<Vec<ScriptOp>>) -> Workload {
    Workload {
        asets: vec![],
        shared_cells: cells,
        items: vec![],
        thunk_templates: vec![],
        script_thunks: vec![],
        lock_setup: None,
        attempt_rules: vec![],
        programs: scripts.into_iter().map(ProcProgram::Script).collect(),
    }
}

/// k helper processes all running the same shared thunk instance.
pub fn thunk_helpers(program: ThunkProgram, cells: Vec<Word>, helpers: usize) -> Workload {
    let n_cells = program.cells as usize;
    assert_eq!(cells.len(), n_cells, "initial values must match program cells");
    Workload {
        asets: vec![],
        shared_cells: cells,
        items: vec![],
        thunk_templates: vec![ThunkTemplate {
            program,
            binding: CellBinding::Shared((0..n_cells).collect()),
        }],
        script_thunks: vec![ScriptThunkSpec { template: 0 }],
        lock_setup: None,
        attempt_rules: vec![],
        programs: vec![ProcProgram::Script(vec![ScriptOp::RunThunk { thunk: 0 }]); helpers],
    }
}

/// Multi-active-set script workload: `sets` active sets, `items` flagged
/// items.
pub fn maset_scripts(
    sets: u32,
    capacity: u32,
    items: usize,
    scripts: Vec<Vec<ScriptOp>>,
) -> Workload {
    Workload {
        asets: (0..sets).map(|_| AsetSpec { capacity }).collect(),
        shared_cells: vec![],
        items: vec![ItemSpec; items],
        thunk_templates: vec![],
        script_thunks: vec![],
        lock_setup: None,
        attempt_rules: vec![],
        programs: scripts.into_iter().map(ProcProgram::Script).collect(),
    }
}

/// Lock-loop workload where every attempt is scripted through the player
/// policy; used by directed lock tests.
pub fn lock_scripts(
    locks: u32,
    setup: LockSetup,
    rules: Vec<AttemptRule>,
    thunk_pad: usize,
) -> Workload {
    let n = rules.len();
    let program = increment_thunk(thunk_pad);
    Workload {
        asets: (0..locks).map(|_| AsetSpec { capacity: setup.aset_capacity(n as u32) }).collect(),
        shared_cells: vec![Word::Int(0); n],
        items: vec![],
        thunk_templates: vec![ThunkTemplate {
            program,
            binding: CellBinding::PerProc { base: 0, per: 1 },
        }],
        script_thunks: vec![],
        lock_setup: Some(setup),
        attempt_rules: rules,
        programs: vec![ProcProgram::LockLoop; n],
    }
}

/// True when the workload's lock variant is adaptive.
pub fn variant_of(w: &Workload) -> Option<LockVariant> {
    w.lock_setup.as_ref().map(|s| s.variant)
}
