//! Simulated shared memory: single-word cells with version labels, plus
//! arenas of immutable published records (cons-list nodes and thunk
//! contexts) referenced from cells by handle.
//!
//! Every mutating primitive bumps the target cell's label, so an `lsc`
//! succeeds exactly when no mutation landed on the cell since the `lll`
//! that produced its label. Labels carry the cell id they were read from;
//! presenting a label to a different cell is a hard fault rather than
//! undefined behavior.

use serde::{Deserialize, Serialize};

/// Index of one logical process. P is fixed for a run; ids are dense in [0, P).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProcId(pub u32);

/// Handle to one shared single-word cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub u32);

/// Identity of an item inserted into an active set. Re-insertions mint a
/// fresh id, so ids are unique per insertion epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u64);

/// One active set object (a lock is represented by exactly one of these).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ASetId(pub u32);

/// A tryLock descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DescId(pub u32);

/// A shared-thunk instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThunkId(pub u32);

/// Handle to an immutable cons-list node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef(pub u32);

/// Handle to a published (immutable) thunk context snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CtxRef(pub u32);

/// Descriptor status word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Active,
    Won,
    Lost,
}

/// The value held by a cell or register: a tagged union so the sentinel
/// comparisons (null owner, -1 priority, TBD) are all well-typed.
/// Equality is tagged equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Word {
    Null,
    Int(i64),
    Bool(bool),
    /// Participation-revealed but priority not yet drawn (adaptive lock).
    Tbd,
    Status(Status),
    Item(ItemId),
    /// Head of an immutable cons list; `Null` plays the role of nil.
    Node(NodeRef),
    Ctx(CtxRef),
    /// A label returned by `lll`, tagged with the cell it came from.
    Label { cell: CellId, label: u64 },
}

impl Word {
    pub fn as_int(self) -> Option<i64> {
        match self {
            Word::Int(v) => Some(v),
            _ => None,
        }
    }
}

/// Label + value pair returned by `lll`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledValue {
    pub cell: CellId,
    pub label: u64,
    pub value: Word,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellState {
    value: Word,
    label: u64,
}

/// Immutable cons-list node. Nodes are never mutated after publication;
/// a set's identity is its head handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsNode {
    pub item: ItemId,
    pub next: Option<NodeRef>,
}

/// Published thunk context: capsule index, register file, uniqueness tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtxRecord {
    pub pc: u32,
    pub capsule_no: u64,
    pub regs: Vec<Word>,
}

/// The whole shared store. All operations are applied by the
/// single-threaded engine, so per-tick atomicity holds by construction.
#[derive(Debug, Clone, Default)]
pub struct Mem {
    cells: Vec<CellState>,
    cons: Vec<ConsNode>,
    ctxs: Vec<CtxRecord>,
}

impl Mem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, init: Word) -> CellId {
        let id = CellId(self.cells.len() as u32);
        self.cells.push(CellState { value: init, label: 0 });
        id
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn peek(&self, c: CellId) -> Word {
        self.cells[c.0 as usize].value
    }

    pub fn peek_label(&self, c: CellId) -> u64 {
        self.cells[c.0 as usize].label
    }

    pub(crate) fn read(&self, c: CellId) -> Word {
        self.peek(c)
    }

    pub(crate) fn write(&mut self, c: CellId, v: Word) {
        let s = &mut self.cells[c.0 as usize];
        s.value = v;
        s.label += 1;
    }

    pub(crate) fn cas(&mut self, c: CellId, old: Word, new: Word) -> bool {
        let s = &mut self.cells[c.0 as usize];
        if s.value == old {
            s.value = new;
            s.label += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn lll(&self, c: CellId) -> LabeledValue {
        let s = &self.cells[c.0 as usize];
        LabeledValue { cell: c, label: s.label, value: s.value }
    }

    /// Store-conditional against a label from `lll`. Succeeds iff the cell
    /// has not been mutated since that label was issued. The caller never
    /// observes the success flag; it is returned here only for the event
    /// record.
    pub(crate) fn lsc(&mut self, c: CellId, label: u64, new: Word) -> bool {
        let s = &mut self.cells[c.0 as usize];
        if s.label == label {
            s.value = new;
            s.label += 1;
            true
        } else {
            false
        }
    }

    pub fn publish_node(&mut self, item: ItemId, next: Option<NodeRef>) -> NodeRef {
        let r = NodeRef(self.cons.len() as u32);
        self.cons.push(ConsNode { item, next });
        r
    }

    pub fn node(&self, r: NodeRef) -> ConsNode {
        self.cons[r.0 as usize]
    }

    /// Materialize the items of a cons list, head first.
    pub fn list_items(&self, head: Option<NodeRef>) -> Vec<ItemId> {
        let mut out = Vec::new();
        let mut cur = head;
        while let Some(r) = cur {
            let n = self.node(r);
            out.push(n.item);
            cur = n.next;
        }
        out
    }

    pub fn publish_ctx(&mut self, rec: CtxRecord) -> CtxRef {
        let r = CtxRef(self.ctxs.len() as u32);
        self.ctxs.push(rec);
        r
    }

    pub fn ctx(&self, r: CtxRef) -> &CtxRecord {
        &self.ctxs[r.0 as usize]
    }

    /// Structural comparison of two words across two stores, chasing
    /// handles into the arenas. Handle indices may differ between runs
    /// that allocated in different orders; structure is what matters.
    pub fn structural_eq(&self, a: Word, other: &Mem, b: Word) -> bool {
        match (a, b) {
            (Word::Node(x), Word::Node(y)) => {
                self.list_items(Some(x)) == other.list_items(Some(y))
            }
            (Word::Ctx(x), Word::Ctx(y)) => self.ctx(x) == other.ctx(y),
            _ => a == b,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_cell_reads_initial_value() {
        let mut m = Mem::new();
        let c = m.alloc(Word::Int(0));
        assert_eq!(m.read(c), Word::Int(0));
        let lv = m.lll(c);
        assert_eq!((lv.label, lv.value), (0, Word::Int(0)));
    }

    #[test]
    fn cas_success_and_failure() {
        let mut m = Mem::new();
        let c = m.alloc(Word::Int(5));
        assert!(m.cas(c, Word::Int(5), Word::Int(9)));
        assert_eq!(m.read(c), Word::Int(9));
        assert!(!m.cas(c, Word::Int(4), Word::Int(7)));
        assert_eq!(m.read(c), Word::Int(9));
    }

    #[test]
    fn labels_count_mutations() {
        let mut m = Mem::new();
        let c = m.alloc(Word::Int(0));
        m.write(c, Word::Int(1));
        assert_eq!(m.peek_label(c), 1);
        m.cas(c, Word::Int(0), Word::Int(2)); // fails, no bump
        assert_eq!(m.peek_label(c), 1);
        m.cas(c, Word::Int(1), Word::Int(2));
        assert_eq!(m.peek_label(c), 2);
    }

    #[test]
    fn lsc_succeeds_only_without_intervening_mutation() {
        let mut m = Mem::new();
        let c = m.alloc(Word::Int(0));
        let lv = m.lll(c);
        assert!(m.lsc(c, lv.label, Word::Int(1)));
        assert_eq!(m.read(c), Word::Int(1));
        // Stale label: a mutation intervened.
        assert!(!m.lsc(c, lv.label, Word::Int(2)));
        assert_eq!(m.read(c), Word::Int(1));
    }

    #[test]
    fn equal_label_second_lsc_always_fails() {
        let mut m = Mem::new();
        let c = m.alloc(Word::Int(0));
        let lv = m.lll(c);
        assert!(m.lsc(c, lv.label, Word::Int(7)));
        assert!(!m.lsc(c, lv.label, Word::Int(7)));
        assert_eq!(m.peek_label(c), 1);
    }

    #[test]
    fn cons_lists_are_persistent() {
        let mut m = Mem::new();
        let n1 = m.publish_node(ItemId(1), None);
        let n2 = m.publish_node(ItemId(2), Some(n1));
        assert_eq!(m.list_items(Some(n2)), vec![ItemId(2), ItemId(1)]);
        assert_eq!(m.list_items(Some(n1)), vec![ItemId(1)]);
        assert_eq!(m.list_items(None), Vec::<ItemId>::new());
    }
}
