//! Simulated RDMA-accessible shared memory.
//!
//! Memory is a set of word-sized atomic registers partitioned across nodes.
//! A process on the same node as a register may use the local operations
//! ([`Memory::read`], [`Memory::write`], [`Memory::cas`]); any process may
//! use the remote operations ([`Memory::r_read`], [`Memory::r_write`],
//! [`Memory::r_cas`]), which model going through the NIC — including
//! loopback to the caller's own node. Every operation is tallied per
//! process, so lock implementations can be audited for their exact
//! local/remote footprint.
//!
//! Two backends control atomicity between local and remote accesses:
//!
//! * [`Backend::SeqCst`]: every operation is a single atomic step in one
//!   total order per register.
//! * [`Backend::Hazard`]: a remote CAS is split into two scheduler-visible
//!   phases, observe and conditional store. Between them, local writes and
//!   local CAS operations on the same register may slip in (and be silently
//!   overwritten by the store phase), while local reads and all remote
//!   operations on that register are held off until the store completes.
//!   This models NICs that serialize remote read-modify-writes internally
//!   but provide no atomicity against the host's own read-modify-writes.

use std::collections::BTreeMap;
use std::fmt;

use parking_lot::Mutex;
use thiserror::Error;

/// A machine in the simulated cluster. Registers live on exactly one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A process, pinned to one node for its lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcId {
    pub node: NodeId,
    pub index: u32,
}

impl ProcId {
    pub fn new(node: u32, index: u32) -> Self {
        ProcId { node: NodeId(node), index }
    }
}

impl fmt::Display for ProcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.p{}", self.node, self.index)
    }
}

/// A word-sized register slot inside a node's memory partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegisterId {
    pub node: NodeId,
    pub slot: u32,
}

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.r{}", self.node, self.slot)
    }
}

/// Register contents: null, a small signed integer, or a reference to a
/// register (the head register of a queue descriptor). Null is distinct
/// from every integer and every reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Word {
    #[default]
    Null,
    Int(i64),
    Ref(RegisterId),
}

impl Word {
    pub fn is_null(self) -> bool {
        self == Word::Null
    }

    pub fn as_int(self) -> Option<i64> {
        match self {
            Word::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_register(self) -> Option<RegisterId> {
        match self {
            Word::Ref(r) => Some(r),
            _ => None,
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Null => write!(f, "null"),
            Word::Int(v) => write!(f, "{v}"),
            Word::Ref(r) => write!(f, "&{r}"),
        }
    }
}

/// Atomicity model for remote read-modify-write operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    SeqCst,
    Hazard,
}

/// Classification of a single memory operation, used for metrics, traces
/// and the hazard gating rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Read,
    Write,
    Cas,
    RRead,
    RWrite,
    RCas,
}

impl OpKind {
    pub fn is_remote(self) -> bool {
        matches!(self, OpKind::RRead | OpKind::RWrite | OpKind::RCas)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OpKind::Read => "read",
            OpKind::Write => "write",
            OpKind::Cas => "cas",
            OpKind::RRead => "rread",
            OpKind::RWrite => "rwrite",
            OpKind::RCas => "rcas",
        };
        f.write_str(s)
    }
}

/// Per-process operation counters. Monotonically non-decreasing until
/// [`Memory::reset_counts`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub local_reads: u64,
    pub local_writes: u64,
    pub local_cas: u64,
    pub remote_reads: u64,
    pub remote_writes: u64,
    pub remote_cas: u64,
}

impl OpCounts {
    pub fn local_total(&self) -> u64 {
        self.local_reads + self.local_writes + self.local_cas
    }

    pub fn remote_total(&self) -> u64 {
        self.remote_reads + self.remote_writes + self.remote_cas
    }

    fn bump(&mut self, kind: OpKind) {
        match kind {
            OpKind::Read => self.local_reads += 1,
            OpKind::Write => self.local_writes += 1,
            OpKind::Cas => self.local_cas += 1,
            OpKind::RRead => self.remote_reads += 1,
            OpKind::RWrite => self.remote_writes += 1,
            OpKind::RCas => self.remote_cas += 1,
        }
    }
}

/// Full counter table, one row per process that has touched memory.
pub type OpMetrics = BTreeMap<ProcId, OpCounts>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown register {0}")]
    UnknownRegister(RegisterId),
    #[error("locality violation: {proc} used a local operation on {register}")]
    LocalityViolation { proc: ProcId, register: RegisterId },
}

/// An in-flight remote CAS under the hazard backend: the observe phase has
/// run, the conditional store has not. The store decision is made from
/// `observed`, not from whatever the register holds at commit time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PendingRcas {
    pub register: RegisterId,
    pub observed: Word,
    pub expected: Word,
    pub swap: Word,
}

/// Single-owner memory instance. Drive it directly from a scheduler (the
/// checker, a scripted test), or wrap it in [`SharedMemory`] for one-thread-
/// per-process use.
#[derive(Debug, Clone)]
pub struct Memory {
    backend: Backend,
    partitions: Vec<Vec<Word>>,
    pending: BTreeMap<ProcId, PendingRcas>,
    metrics: OpMetrics,
    remote_tick_cost: u64,
    ticks: u64,
}

impl Memory {
    pub fn new(backend: Backend, nodes: u32) -> Self {
        Memory {
            backend,
            partitions: vec![Vec::new(); nodes as usize],
            pending: BTreeMap::new(),
            metrics: OpMetrics::new(),
            remote_tick_cost: 0,
            ticks: 0,
        }
    }

    /// Extra simulated latency charged per remote operation, on top of the
    /// one tick every operation costs. Purely for throughput illustration.
    pub fn set_remote_tick_cost(&mut self, cost: u64) {
        self.remote_tick_cost = cost;
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn node_count(&self) -> u32 {
        self.partitions.len() as u32
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn alloc_register(&mut self, node: NodeId, init: Word) -> Result<RegisterId, MemError> {
        let part = self
            .partitions
            .get_mut(node.0 as usize)
            .ok_or(MemError::UnknownNode(node))?;
        let slot = part.len() as u32;
        part.push(init);
        Ok(RegisterId { node, slot })
    }

    fn cell(&self, r: RegisterId) -> Result<Word, MemError> {
        self.partitions
            .get(r.node.0 as usize)
            .and_then(|p| p.get(r.slot as usize))
            .copied()
            .ok_or(MemError::UnknownRegister(r))
    }

    fn cell_mut(&mut self, r: RegisterId) -> Result<&mut Word, MemError> {
        self.partitions
            .get_mut(r.node.0 as usize)
            .and_then(|p| p.get_mut(r.slot as usize))
            .ok_or(MemError::UnknownRegister(r))
    }

    fn check_local(&self, p: ProcId, r: RegisterId) -> Result<(), MemError> {
        if p.node != r.node {
            return Err(MemError::LocalityViolation { proc: p, register: r });
        }
        Ok(())
    }

    fn count(&mut self, p: ProcId, kind: OpKind) {
        self.metrics.entry(p).or_default().bump(kind);
        self.ticks += 1 + if kind.is_remote() { self.remote_tick_cost } else { 0 };
    }

    fn assert_unblocked(&self, kind: OpKind, r: RegisterId) {
        assert!(
            !self.blocks(kind, r),
            "{kind} on {r} issued while a remote CAS is in flight there; \
             the scheduler must gate on Memory::blocks"
        );
    }

    /// Metrics-free inspection, for guards, invariant checks and traces.
    pub fn peek(&self, r: RegisterId) -> Result<Word, MemError> {
        self.cell(r)
    }

    /// Local read. Enabled only for processes on the register's node.
    pub fn read(&mut self, p: ProcId, r: RegisterId) -> Result<Word, MemError> {
        self.check_local(p, r)?;
        let v = self.cell(r)?;
        self.assert_unblocked(OpKind::Read, r);
        self.count(p, OpKind::Read);
        Ok(v)
    }

    /// Local write.
    pub fn write(&mut self, p: ProcId, r: RegisterId, v: Word) -> Result<(), MemError> {
        self.check_local(p, r)?;
        *self.cell_mut(r)? = v;
        self.count(p, OpKind::Write);
        Ok(())
    }

    /// Local compare-and-swap. Returns the value observed immediately before
    /// the operation; stores `swap` iff that value equals `expected`.
    pub fn cas(
        &mut self,
        p: ProcId,
        r: RegisterId,
        expected: Word,
        swap: Word,
    ) -> Result<Word, MemError> {
        self.check_local(p, r)?;
        let cell = self.cell_mut(r)?;
        let old = *cell;
        if old == expected {
            *cell = swap;
        }
        self.count(p, OpKind::Cas);
        Ok(old)
    }

    /// Remote read. Enabled for every process, including loopback.
    pub fn r_read(&mut self, p: ProcId, r: RegisterId) -> Result<Word, MemError> {
        let v = self.cell(r)?;
        self.assert_unblocked(OpKind::RRead, r);
        self.count(p, OpKind::RRead);
        Ok(v)
    }

    /// Remote write.
    pub fn r_write(&mut self, p: ProcId, r: RegisterId, v: Word) -> Result<(), MemError> {
        self.assert_unblocked(OpKind::RWrite, r);
        *self.cell_mut(r)? = v;
        self.count(p, OpKind::RWrite);
        Ok(())
    }

    /// Remote compare-and-swap as a single step. Only valid under
    /// [`Backend::SeqCst`]; the hazard backend exposes the two phases via
    /// [`Memory::r_cas_observe`] and [`Memory::r_cas_commit`] instead.
    pub fn r_cas(
        &mut self,
        p: ProcId,
        r: RegisterId,
        expected: Word,
        swap: Word,
    ) -> Result<Word, MemError> {
        assert_eq!(
            self.backend,
            Backend::SeqCst,
            "single-step r_cas is a SeqCst operation; use the observe/commit phases under Hazard"
        );
        let cell = self.cell_mut(r)?;
        let old = *cell;
        if old == expected {
            *cell = swap;
        }
        self.count(p, OpKind::RCas);
        Ok(old)
    }

    /// Observe phase of a hazard-backend remote CAS. Reads the register,
    /// records the in-flight operation, and counts one remote CAS attempt.
    pub fn r_cas_observe(
        &mut self,
        p: ProcId,
        r: RegisterId,
        expected: Word,
        swap: Word,
    ) -> Result<(), MemError> {
        assert_eq!(self.backend, Backend::Hazard, "observe/commit phases are hazard-only");
        assert!(
            self.pending.get(&p).is_none(),
            "{p} already has a remote CAS in flight"
        );
        let observed = self.cell(r)?;
        self.assert_unblocked(OpKind::RCas, r);
        self.pending.insert(
            p,
            PendingRcas { register: r, observed, expected, swap },
        );
        self.count(p, OpKind::RCas);
        Ok(())
    }

    /// Store phase. Writes `swap` iff the *observed* value matched
    /// `expected` — updates that landed between the phases are overwritten.
    /// Returns the observed value, i.e. what the CAS reports.
    pub fn r_cas_commit(&mut self, p: ProcId) -> Result<Word, MemError> {
        let pd = self
            .pending
            .remove(&p)
            .expect("r_cas_commit without a pending observe phase");
        if pd.observed == pd.expected {
            *self.cell_mut(pd.register)? = pd.swap;
        }
        Ok(pd.observed)
    }

    pub fn pending_for(&self, p: ProcId) -> Option<PendingRcas> {
        self.pending.get(&p).copied()
    }

    pub fn pending_on(&self, r: RegisterId) -> Option<ProcId> {
        self.pending
            .iter()
            .find(|(_, pd)| pd.register == r)
            .map(|(p, _)| *p)
    }

    /// Whether an operation of `kind` on `r` must wait for an in-flight
    /// remote CAS there. Local writes and local CAS are the two accesses a
    /// commodity NIC does not serialize against; everything else is held.
    pub fn blocks(&self, kind: OpKind, r: RegisterId) -> bool {
        match kind {
            OpKind::Write | OpKind::Cas => false,
            _ => self.pending_on(r).is_some(),
        }
    }

    pub fn op_counts(&self, p: ProcId) -> OpCounts {
        self.metrics.get(&p).copied().unwrap_or_default()
    }

    pub fn metrics(&self) -> &OpMetrics {
        &self.metrics
    }

    pub fn reset_counts(&mut self) {
        self.metrics.clear();
        self.ticks = 0;
    }

    pub(crate) fn snapshot_parts(&self) -> (Vec<Vec<Word>>, Vec<(ProcId, PendingRcas)>) {
        (
            self.partitions.clone(),
            self.pending.iter().map(|(p, pd)| (*p, *pd)).collect(),
        )
    }

    pub(crate) fn restore_parts(
        &mut self,
        partitions: &[Vec<Word>],
        pending: &[(ProcId, PendingRcas)],
    ) {
        for (dst, src) in self.partitions.iter_mut().zip(partitions) {
            dst.clone_from(src);
        }
        self.pending.clear();
        self.pending.extend(pending.iter().copied());
    }
}

/// Thread-safe wrapper for concurrent mode: every operation takes the inner
/// lock, so each is one atomic step in a single total order. SeqCst only —
/// the hazard phases are meaningful only under a controlled scheduler.
#[derive(Debug)]
pub struct SharedMemory {
    inner: Mutex<Memory>,
}

impl SharedMemory {
    pub fn new(mem: Memory) -> Self {
        assert_eq!(
            mem.backend(),
            Backend::SeqCst,
            "concurrent mode requires the SeqCst backend"
        );
        SharedMemory { inner: Mutex::new(mem) }
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut Memory) -> R) -> R {
        f(&mut self.inner.lock())
    }

    pub fn alloc_register(&self, node: NodeId, init: Word) -> Result<RegisterId, MemError> {
        self.with(|m| m.alloc_register(node, init))
    }

    pub fn op_counts(&self, p: ProcId) -> OpCounts {
        self.with(|m| m.op_counts(p))
    }

    pub fn metrics(&self) -> OpMetrics {
        self.with(|m| m.metrics().clone())
    }

    pub fn reset_counts(&self) {
        self.with(|m| m.reset_counts());
    }

    pub fn ticks(&self) -> u64 {
        self.with(|m| m.ticks())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn alloc_returns_fresh_slots_holding_init() {
        let mut m = Memory::new(Backend::SeqCst, 2);
        let a = m.alloc_register(n(0), Word::Null).unwrap();
        let b = m.alloc_register(n(0), Word::Int(0)).unwrap();
        let c = m.alloc_register(n(1), Word::Int(0)).unwrap();
        assert_ne!(a, b);
        assert_eq!(c.node, n(1));
        assert_eq!(m.peek(a).unwrap(), Word::Null);
        assert_eq!(m.peek(b).unwrap(), Word::Int(0));
    }

    #[test]
    fn alloc_on_unknown_node_fails() {
        let mut m = Memory::new(Backend::SeqCst, 1);
        assert_eq!(
            m.alloc_register(n(3), Word::Null),
            Err(MemError::UnknownNode(n(3)))
        );
    }

    #[test]
    fn local_ops_enforce_locality() {
        let mut m = Memory::new(Backend::SeqCst, 2);
        let r = m.alloc_register(n(0), Word::Int(5)).unwrap();
        let remote = ProcId::new(1, 0);
        for res in [
            m.read(remote, r).err(),
            m.write(remote, r, Word::Int(1)).err(),
            m.cas(remote, r, Word::Int(5), Word::Int(1)).err(),
        ] {
            assert_eq!(
                res,
                Some(MemError::LocalityViolation { proc: remote, register: r })
            );
        }
        // The same process may always go through the NIC, loopback included.
        assert_eq!(m.r_read(remote, r).unwrap(), Word::Int(5));
    }

    #[test]
    fn cas_success_and_failure() {
        let mut m = Memory::new(Backend::SeqCst, 1);
        let p = ProcId::new(0, 0);
        let r = m.alloc_register(n(0), Word::Int(5)).unwrap();
        assert_eq!(m.cas(p, r, Word::Int(5), Word::Int(7)).unwrap(), Word::Int(5));
        assert_eq!(m.peek(r).unwrap(), Word::Int(7));
        assert_eq!(m.cas(p, r, Word::Int(3), Word::Int(9)).unwrap(), Word::Int(7));
        assert_eq!(m.peek(r).unwrap(), Word::Int(7));
    }

    #[test]
    fn write_then_read_program_order() {
        let mut m = Memory::new(Backend::SeqCst, 1);
        let p = ProcId::new(0, 0);
        let r = m.alloc_register(n(0), Word::Null).unwrap();
        m.write(p, r, Word::Int(42)).unwrap();
        assert_eq!(m.read(p, r).unwrap(), Word::Int(42));
    }

    #[test]
    fn remote_cas_on_empty_tail() {
        let mut m = Memory::new(Backend::SeqCst, 2);
        let p = ProcId::new(1, 0);
        let tail = m.alloc_register(n(0), Word::Null).unwrap();
        let d = m.alloc_register(n(1), Word::Int(-1)).unwrap();
        assert_eq!(m.r_cas(p, tail, Word::Null, Word::Ref(d)).unwrap(), Word::Null);
        assert_eq!(m.peek(tail).unwrap(), Word::Ref(d));
    }

    #[test]
    fn counters_start_zero_and_track_ops_separately() {
        let mut m = Memory::new(Backend::SeqCst, 2);
        let local = ProcId::new(0, 0);
        let remote = ProcId::new(1, 0);
        let r = m.alloc_register(n(0), Word::Int(0)).unwrap();
        assert_eq!(m.op_counts(local), OpCounts::default());

        m.write(local, r, Word::Int(1)).unwrap();
        assert_eq!(m.op_counts(local).local_writes, 1);
        assert_eq!(m.op_counts(local).remote_total(), 0);

        m.r_cas(remote, r, Word::Int(1), Word::Int(2)).unwrap();
        let rc = m.op_counts(remote);
        assert_eq!(rc.remote_cas, 1);
        assert_eq!(rc.local_total() + rc.remote_reads + rc.remote_writes, 0);

        m.reset_counts();
        assert_eq!(m.op_counts(local), OpCounts::default());
        assert_eq!(m.op_counts(remote), OpCounts::default());
    }

    #[test]
    fn loopback_counts_as_remote() {
        let mut m = Memory::new(Backend::SeqCst, 1);
        let p = ProcId::new(0, 0);
        let r = m.alloc_register(n(0), Word::Int(0)).unwrap();
        m.r_cas(p, r, Word::Int(0), Word::Int(1)).unwrap();
        m.r_write(p, r, Word::Int(0)).unwrap();
        m.r_read(p, r).unwrap();
        let c = m.op_counts(p);
        assert_eq!((c.remote_cas, c.remote_writes, c.remote_reads), (1, 1, 1));
        assert_eq!(c.local_total(), 0);
    }

    #[test]
    fn remote_tick_cost_is_charged_per_remote_op() {
        let mut m = Memory::new(Backend::SeqCst, 2);
        m.set_remote_tick_cost(10);
        let local = ProcId::new(0, 0);
        let remote = ProcId::new(1, 0);
        let r = m.alloc_register(n(0), Word::Int(0)).unwrap();
        m.read(local, r).unwrap();
        assert_eq!(m.ticks(), 1);
        m.r_read(remote, r).unwrap();
        assert_eq!(m.ticks(), 12);
    }

    #[test]
    fn hazard_pending_gates_reads_but_not_local_rmw() {
        let mut m = Memory::new(Backend::Hazard, 2);
        let local = ProcId::new(0, 0);
        let remote = ProcId::new(1, 0);
        let r = m.alloc_register(n(0), Word::Int(0)).unwrap();
        m.r_cas_observe(remote, r, Word::Int(0), Word::Int(1)).unwrap();
        assert!(m.blocks(OpKind::Read, r));
        assert!(m.blocks(OpKind::RRead, r));
        assert!(m.blocks(OpKind::RWrite, r));
        assert!(m.blocks(OpKind::RCas, r));
        assert!(!m.blocks(OpKind::Write, r));
        assert!(!m.blocks(OpKind::Cas, r));
        // Local CAS slips in, then the store phase overwrites it.
        assert_eq!(m.cas(local, r, Word::Int(0), Word::Int(2)).unwrap(), Word::Int(0));
        assert_eq!(m.r_cas_commit(remote).unwrap(), Word::Int(0));
        assert_eq!(m.peek(r).unwrap(), Word::Int(1));
    }

    #[test]
    #[should_panic(expected = "SeqCst operation")]
    fn single_step_r_cas_rejected_under_hazard() {
        let mut m = Memory::new(Backend::Hazard, 1);
        let p = ProcId::new(0, 0);
        let r = m.alloc_register(n(0), Word::Int(0)).unwrap();
        let _ = m.r_cas(p, r, Word::Int(0), Word::Int(1));
    }

    #[test]
    #[should_panic(expected = "SeqCst backend")]
    fn shared_memory_rejects_hazard() {
        let _ = SharedMemory::new(Memory::new(Backend::Hazard, 1));
    }

    /// Exhaustive two-process litmus harness: process A runs `a_ops`,
    /// process B runs `b_ops`, and every interleaving of their scheduler-
    /// visible steps is enumerated. Outcomes are (final register value,
    /// A's returns, B's returns). The serializable reference is the same
    /// enumeration with every operation forced atomic (SeqCst backend).
    mod litmus {
        use super::*;
        use std::collections::BTreeSet;

        #[derive(Clone, Copy, Debug)]
        enum LOp {
            Read,
            Write(Word),
            Cas(Word, Word),
            RRead,
            RWrite(Word),
            RCas(Word, Word),
        }

        type Outcome = (Word, Vec<Word>, Vec<Word>);

        #[derive(Clone)]
        struct Run {
            mem: Memory,
            pos: [usize; 2],
            rets: [Vec<Word>; 2],
        }

        fn procs() -> [ProcId; 2] {
            [ProcId::new(0, 0), ProcId::new(1, 0)]
        }

        fn exec(
            run: &mut Run,
            reg: RegisterId,
            who: usize,
            op: LOp,
        ) -> bool {
            // Returns false when the op is still mid-flight (observe phase).
            let p = procs()[who];
            let m = &mut run.mem;
            let ret = match op {
                LOp::Read => Some(m.read(p, reg).unwrap()),
                LOp::Write(v) => {
                    m.write(p, reg, v).unwrap();
                    Some(Word::Null)
                }
                LOp::Cas(e, s) => Some(m.cas(p, reg, e, s).unwrap()),
                LOp::RRead => Some(m.r_read(p, reg).unwrap()),
                LOp::RWrite(v) => {
                    m.r_write(p, reg, v).unwrap();
                    Some(Word::Null)
                }
                LOp::RCas(e, s) => {
                    if m.backend() == Backend::SeqCst {
                        Some(m.r_cas(p, reg, e, s).unwrap())
                    } else if m.pending_for(p).is_some() {
                        Some(m.r_cas_commit(p).unwrap())
                    } else {
                        m.r_cas_observe(p, reg, e, s).unwrap();
                        None
                    }
                }
            };
            match ret {
                Some(v) => {
                    run.rets[who].push(v);
                    true
                }
                None => false,
            }
        }

        fn op_enabled(m: &Memory, reg: RegisterId, p: ProcId, op: LOp) -> bool {
            if m.pending_for(p).is_some() {
                return true; // commit phase always runs
            }
            let kind = match op {
                LOp::Read => OpKind::Read,
                LOp::Write(_) => OpKind::Write,
                LOp::Cas(..) => OpKind::Cas,
                LOp::RRead => OpKind::RRead,
                LOp::RWrite(_) => OpKind::RWrite,
                LOp::RCas(..) => OpKind::RCas,
            };
            !m.blocks(kind, reg)
        }

        fn enumerate(
            backend: Backend,
            init: Word,
            a_ops: &[LOp],
            b_ops: &[LOp],
        ) -> BTreeSet<Outcome> {
            let mut mem = Memory::new(backend, 2);
            let reg = mem.alloc_register(NodeId(0), init).unwrap();
            let mut out = BTreeSet::new();
            let start = Run { mem, pos: [0, 0], rets: [Vec::new(), Vec::new()] };
            let ops = [a_ops, b_ops];
            // An op mid-flight (observe done) keeps its position until the
            // commit runs, so ops[who][pos] stays the step to take.
            fn go(
                run: &Run,
                reg: RegisterId,
                ops: &[&[LOp]; 2],
                out: &mut BTreeSet<Outcome>,
            ) {
                let mut progressed = false;
                for who in 0..2 {
                    if run.pos[who] >= ops[who].len() {
                        continue;
                    }
                    let op = ops[who][run.pos[who]];
                    if !op_enabled(&run.mem, reg, procs()[who], op) {
                        continue;
                    }
                    progressed = true;
                    let mut next = run.clone();
                    if exec(&mut next, reg, who, op) {
                        next.pos[who] += 1;
                    }
                    go(&next, reg, ops, out);
                }
                if !progressed {
                    out.insert((
                        run.mem.peek(reg).unwrap(),
                        run.rets[0].clone(),
                        run.rets[1].clone(),
                    ));
                }
            }
            go(&start, reg, &ops, &mut out);
            out
        }

        /// Serializable reference: whole-op interleavings on SeqCst.
        fn serial(init: Word, a_ops: &[LOp], b_ops: &[LOp]) -> BTreeSet<Outcome> {
            enumerate(Backend::SeqCst, init, a_ops, b_ops)
        }

        #[test]
        fn local_cas_vs_remote_cas_loses_an_update_under_hazard() {
            // The executable content of the "No" cell for RMW vs remote RMW:
            // both CAS operations report success and the local update is lost.
            let a = [LOp::Cas(Word::Int(0), Word::Int(2))];
            let b = [LOp::RCas(Word::Int(0), Word::Int(1))];
            let hazard = enumerate(Backend::Hazard, Word::Int(0), &a, &b);
            let atomic = serial(Word::Int(0), &a, &b);
            let lost_update: Outcome =
                (Word::Int(1), vec![Word::Int(0)], vec![Word::Int(0)]);
            assert!(hazard.contains(&lost_update), "hazard outcomes: {hazard:?}");
            assert!(!atomic.contains(&lost_update));
            // Under SeqCst exactly one of the two CAS ops succeeds, always.
            for (_, a_rets, b_rets) in &atomic {
                let a_ok = a_rets == &vec![Word::Int(0)];
                let b_ok = b_rets == &vec![Word::Int(0)];
                assert!(a_ok ^ b_ok);
            }
        }

        #[test]
        fn local_write_vs_remote_cas_is_not_atomic_under_hazard() {
            let a = [LOp::Write(Word::Int(5))];
            let b = [LOp::RCas(Word::Int(0), Word::Int(1))];
            let hazard = enumerate(Backend::Hazard, Word::Int(0), &a, &b);
            let atomic = serial(Word::Int(0), &a, &b);
            assert!(
                hazard.difference(&atomic).next().is_some(),
                "expected a non-serializable outcome"
            );
        }

        #[test]
        fn atomic_pairs_stay_serializable_under_hazard() {
            // Every "Yes" cell: enumeration under Hazard must be a subset of
            // the atomic reference.
            let rcas = LOp::RCas(Word::Int(0), Word::Int(1));
            let cases: Vec<([LOp; 1], [LOp; 1])> = vec![
                ([LOp::Read], [rcas]),
                ([LOp::Read], [LOp::RRead]),
                ([LOp::Read], [LOp::RWrite(Word::Int(7))]),
                ([LOp::Write(Word::Int(5))], [LOp::RRead]),
                ([LOp::Write(Word::Int(5))], [LOp::RWrite(Word::Int(7))]),
                ([LOp::Cas(Word::Int(0), Word::Int(2))], [LOp::RRead]),
                ([LOp::Cas(Word::Int(0), Word::Int(2))], [LOp::RWrite(Word::Int(7))]),
            ];
            for (a, b) in cases {
                let hazard = enumerate(Backend::Hazard, Word::Int(0), &a, &b);
                let atomic = serial(Word::Int(0), &a, &b);
                assert!(
                    hazard.is_subset(&atomic),
                    "non-serializable outcome for {a:?} vs {b:?}: {:?}",
                    hazard.difference(&atomic).collect::<Vec<_>>()
                );
            }
        }

        #[test]
        fn remote_rmws_serialize_against_each_other() {
            let a = [LOp::RCas(Word::Int(0), Word::Int(2))];
            let b = [LOp::RCas(Word::Int(0), Word::Int(1))];
            let hazard = enumerate(Backend::Hazard, Word::Int(0), &a, &b);
            let atomic = serial(Word::Int(0), &a, &b);
            assert!(hazard.is_subset(&atomic));
        }
    }
}
