//! Labeled-step execution of the lock protocols.
//!
//! Every lock in this crate is a small state machine: each label is one
//! atomic transition containing at most one access to a register another
//! process can contend on. One transition function drives the blocking lock
//! API, the random scheduler, and the exhaustive checker, so each protocol
//! has exactly one encoding.
//!
//! Label map for the combined lock:
//!
//! * body: `ncs` → `enter` → cohort acquire → `p2` (leaders continue into
//!   the global protocol) → `cs` → `exit` → cohort release → `ncs`
//! * cohort acquire: `c1` (descriptor reset), `swap` (tail CAS loop),
//!   `cwait` (branch on predecessor), `c2` (link), `c3` (budget wait),
//!   `c4`..`c7` (budget-exhaustion path through the global reacquire),
//!   `c8`..`c10` (leader path)
//! * global protocol: `g1` (victim write), `gwait`/`g2`/`g3` (wait loop),
//!   `g4` (return)
//! * cohort release: `cas` (tail CAS), `r1` (wait for successor link),
//!   `r2` (budget handoff), `r3` (return)

use std::fmt;

use thiserror::Error;

use crate::memory::{
    Backend, MemError, Memory, NodeId, OpKind, ProcId, RegisterId, SharedMemory, Word,
};
use crate::peterson::{get_cid, ClassId};
use crate::{baselines, mcs, peterson};

/// The lock protocols the machine can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LockKind {
    /// The combined lock: per-class queue cohorts embedded in a two-party
    /// victim protocol. Local processes never touch the NIC.
    ALock,
    /// Test-and-set spinlock where every process, local ones included, spins
    /// with remote CAS (loopback for locals).
    NaiveRcas,
    /// Test-and-set where local processes use local CAS and remote processes
    /// remote CAS on the same flag. Unsafe under the hazard backend.
    MixedCas,
    /// The bare two-party victim protocol with one flag per class; requires
    /// exactly one local and one remote process.
    Peterson2,
}

impl fmt::Display for LockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LockKind::ALock => "alock",
            LockKind::NaiveRcas => "naive-rcas",
            LockKind::MixedCas => "mixed-cas",
            LockKind::Peterson2 => "peterson2",
        };
        f.write_str(s)
    }
}

/// Whether a process reaches shared lock state through local operations or
/// through the NIC. Accesses to a process's own descriptor are always local
/// in both modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessMode {
    Local,
    Remote,
}

/// Program labels. One label = one atomic step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[allow(clippy::upper_case_acronyms)]
pub enum Label {
    Ncs,
    Enter,
    C1,
    Swap,
    Cwait,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    P2,
    G1,
    Gwait,
    G2,
    G3,
    G4,
    Cs,
    Exit,
    Cas,
    R1,
    R2,
    R3,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Ncs => "ncs",
            Label::Enter => "enter",
            Label::C1 => "c1",
            Label::Swap => "swap",
            Label::Cwait => "cwait",
            Label::C2 => "c2",
            Label::C3 => "c3",
            Label::C4 => "c4",
            Label::C5 => "c5",
            Label::C6 => "c6",
            Label::C7 => "c7",
            Label::C8 => "c8",
            Label::C9 => "c9",
            Label::C10 => "c10",
            Label::P2 => "p2",
            Label::G1 => "g1",
            Label::Gwait => "gwait",
            Label::G2 => "g2",
            Label::G3 => "g3",
            Label::G4 => "g4",
            Label::Cs => "cs",
            Label::Exit => "exit",
            Label::Cas => "cas",
            Label::R1 => "r1",
            Label::R2 => "r2",
            Label::R3 => "r3",
        }
    }

    /// The one label exempt from weak fairness: a process may stay out of
    /// the protocol forever.
    pub fn is_ncs(self) -> bool {
        self == Label::Ncs
    }

    /// Parked in the global wait loop with the victim write already done.
    pub fn in_global_wait(self) -> bool {
        matches!(self, Label::Gwait | Label::G2 | Label::G3)
    }

    /// Between a successful tail swap and the completion of the release:
    /// the process's descriptor is part of its cohort queue.
    pub fn in_cohort_episode(self) -> bool {
        !matches!(
            self,
            Label::Ncs | Label::Enter | Label::C1 | Label::Swap | Label::R3
        )
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the global-protocol return step jumps back to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ret {
    None,
    /// Returning from the budget-exhaustion reacquire inside the cohort
    /// acquire.
    ToC6,
    /// Returning from the leader path into the critical section.
    ToCs,
}

/// Per-process protocol state: program counter plus scratch locals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProcState {
    pub pc: Label,
    /// Running expected value of the tail CAS loop.
    pub curr: Word,
    /// Predecessor captured by the successful tail swap.
    pub pred: Word,
    /// True when the cohort lock was handed over by a predecessor; leaders
    /// (false) must still run the global protocol.
    pub passed: bool,
    pub ret: Ret,
}

impl ProcState {
    pub fn idle() -> Self {
        ProcState {
            pc: Label::Ncs,
            curr: Word::Null,
            pred: Word::Null,
            passed: false,
            ret: Ret::None,
        }
    }
}

/// Immutable per-process wiring.
#[derive(Debug, Clone, Copy)]
pub struct ProcInfo {
    pub id: ProcId,
    pub class: ClassId,
    pub mode: AccessMode,
    /// Queue descriptor registers, present for queue-based locks.
    pub desc: Option<mcs::Descriptor>,
}

impl ProcInfo {
    pub fn descriptor(&self) -> mcs::Descriptor {
        self.desc.expect("process has no queue descriptor")
    }
}

/// The shared registers of one lock instance.
#[derive(Debug, Clone)]
pub enum LockRegs {
    /// Victim register plus one queue tail per class.
    Queue {
        victim: RegisterId,
        tails: [RegisterId; 2],
    },
    /// Single test-and-set flag.
    Flag(RegisterId),
    /// Victim register plus one boolean flag per class.
    TwoFlag {
        victim: RegisterId,
        flags: [RegisterId; 2],
    },
}

impl LockRegs {
    pub fn victim(&self) -> RegisterId {
        match self {
            LockRegs::Queue { victim, .. } | LockRegs::TwoFlag { victim, .. } => *victim,
            LockRegs::Flag(_) => panic!("flag lock has no victim register"),
        }
    }

    /// The register announcing that `class` wants or holds the lock, and the
    /// value meaning "not held".
    pub fn indicator(&self, class: ClassId) -> (RegisterId, Word) {
        match self {
            LockRegs::Queue { tails, .. } => (tails[class.0 as usize], Word::Null),
            LockRegs::TwoFlag { flags, .. } => (flags[class.0 as usize], Word::Int(0)),
            LockRegs::Flag(_) => panic!("flag lock has no per-class indicator"),
        }
    }

    pub fn tail(&self, class: ClassId) -> RegisterId {
        match self {
            LockRegs::Queue { tails, .. } => tails[class.0 as usize],
            _ => panic!("not a queue lock"),
        }
    }
}

/// Immutable description of one lock instance.
#[derive(Debug, Clone)]
pub struct LockCtx {
    pub kind: LockKind,
    pub home: NodeId,
    /// Acquisitions granted per global-lock tenure before a class must offer
    /// the lock to the other class.
    pub budget: i64,
    pub regs: LockRegs,
}

/// A single register access performed by a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpEvent {
    pub kind: OpKind,
    pub register: RegisterId,
    pub before: Word,
    pub after: Word,
}

/// Phase marker for a hazard-backend remote CAS.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Micro {
    Observe,
    Commit,
}

impl fmt::Display for Micro {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Micro::Observe => "observe",
            Micro::Commit => "commit",
        })
    }
}

/// What one executed step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub label: Label,
    pub micro: Option<Micro>,
    pub ops: Vec<OpEvent>,
    pub to: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Advanced(StepRecord),
    /// The process's next step is an await whose condition is false, or its
    /// memory access must wait for an in-flight remote CAS.
    Blocked,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("budget must be at least 1, got {0}")]
    InvalidBudget(i64),
    #[error("at least one process is required")]
    NoProcesses,
    #[error("peterson2 requires exactly one local and one remote process")]
    Peterson2Shape,
    #[error(transparent)]
    Mem(#[from] MemError),
}

// ---------------------------------------------------------------------------
// Mode-dispatched register access. Each helper performs exactly one memory
// operation and records it.

pub(crate) fn mode_read(
    mem: &mut Memory,
    info: &ProcInfo,
    r: RegisterId,
    rec: &mut StepRecord,
) -> Word {
    let v = match info.mode {
        AccessMode::Local => mem.read(info.id, r),
        AccessMode::Remote => mem.r_read(info.id, r),
    }
    .expect("lock register access");
    let kind = match info.mode {
        AccessMode::Local => OpKind::Read,
        AccessMode::Remote => OpKind::RRead,
    };
    rec.ops.push(OpEvent { kind, register: r, before: v, after: v });
    v
}

pub(crate) fn mode_write(
    mem: &mut Memory,
    info: &ProcInfo,
    r: RegisterId,
    v: Word,
    rec: &mut StepRecord,
) {
    let before = mem.peek(r).expect("lock register access");
    match info.mode {
        AccessMode::Local => mem.write(info.id, r, v),
        AccessMode::Remote => mem.r_write(info.id, r, v),
    }
    .expect("lock register access");
    let kind = match info.mode {
        AccessMode::Local => OpKind::Write,
        AccessMode::Remote => OpKind::RWrite,
    };
    rec.ops.push(OpEvent { kind, register: r, before, after: v });
}

/// Always-local access to the process's own descriptor registers.
pub(crate) fn local_read(
    mem: &mut Memory,
    info: &ProcInfo,
    r: RegisterId,
    rec: &mut StepRecord,
) -> Word {
    let v = mem.read(info.id, r).expect("own-descriptor access");
    rec.ops.push(OpEvent { kind: OpKind::Read, register: r, before: v, after: v });
    v
}

pub(crate) fn local_write(
    mem: &mut Memory,
    info: &ProcInfo,
    r: RegisterId,
    v: Word,
    rec: &mut StepRecord,
) {
    let before = mem.peek(r).expect("own-descriptor access");
    mem.write(info.id, r, v).expect("own-descriptor access");
    rec.ops.push(OpEvent { kind: OpKind::Write, register: r, before, after: v });
}

pub(crate) enum CasOutcome {
    /// The operation completed this step; the payload is the observed value.
    Done(Word),
    /// Hazard backend: the observe phase ran; the commit is the next step.
    ObservePhase,
}

/// One CAS attempt in the caller's access mode. Under the hazard backend a
/// remote attempt spans two scheduler steps.
pub(crate) fn mode_cas(
    mem: &mut Memory,
    info: &ProcInfo,
    r: RegisterId,
    expected: Word,
    swap: Word,
    rec: &mut StepRecord,
) -> CasOutcome {
    match info.mode {
        AccessMode::Local => {
            let old = mem.cas(info.id, r, expected, swap).expect("lock register access");
            let after = if old == expected { swap } else { old };
            rec.ops.push(OpEvent { kind: OpKind::Cas, register: r, before: old, after });
            CasOutcome::Done(old)
        }
        AccessMode::Remote => {
            if mem.backend() == Backend::Hazard {
                if mem.pending_for(info.id).is_some() {
                    let before = mem
                        .peek(mem.pending_for(info.id).unwrap().register)
                        .expect("lock register access");
                    let observed = mem.r_cas_commit(info.id).expect("lock register access");
                    let after = mem.peek(r).expect("lock register access");
                    rec.micro = Some(Micro::Commit);
                    rec.ops.push(OpEvent { kind: OpKind::RCas, register: r, before, after });
                    CasOutcome::Done(observed)
                } else {
                    mem.r_cas_observe(info.id, r, expected, swap)
                        .expect("lock register access");
                    let v = mem.peek(r).expect("lock register access");
                    rec.micro = Some(Micro::Observe);
                    rec.ops.push(OpEvent { kind: OpKind::RCas, register: r, before: v, after: v });
                    CasOutcome::ObservePhase
                }
            } else {
                let old = mem.r_cas(info.id, r, expected, swap).expect("lock register access");
                let after = if old == expected { swap } else { old };
                rec.ops.push(OpEvent { kind: OpKind::RCas, register: r, before: old, after });
                CasOutcome::Done(old)
            }
        }
    }
}

fn cas_kind(mode: AccessMode) -> OpKind {
    match mode {
        AccessMode::Local => OpKind::Cas,
        AccessMode::Remote => OpKind::RCas,
    }
}

fn read_kind(mode: AccessMode) -> OpKind {
    match mode {
        AccessMode::Local => OpKind::Read,
        AccessMode::Remote => OpKind::RRead,
    }
}

fn write_kind(mode: AccessMode) -> OpKind {
    match mode {
        AccessMode::Local => OpKind::Write,
        AccessMode::Remote => OpKind::RWrite,
    }
}

/// The first contended register access the process's next step would
/// perform, for hazard gating. Own-descriptor accesses never collide with an
/// in-flight remote CAS (no CAS ever targets descriptor registers), so steps
/// touching only those return `None`.
fn step_op_target(
    ctx: &LockCtx,
    info: &ProcInfo,
    st: &ProcState,
    mem: &Memory,
) -> Option<(OpKind, RegisterId)> {
    match (ctx.kind, st.pc) {
        (LockKind::ALock, Label::Swap) | (LockKind::ALock, Label::Cas) => {
            Some((cas_kind(info.mode), ctx.regs.tail(info.class)))
        }
        (LockKind::ALock, Label::C2) => {
            let pred = st.pred.as_register().expect("predecessor set at c2");
            Some((write_kind(info.mode), mcs::Descriptor::next_of(pred)))
        }
        (LockKind::ALock, Label::R2) => {
            let succ = mem
                .peek(info.descriptor().next)
                .expect("own descriptor")
                .as_register()
                .expect("successor linked at r2");
            Some((write_kind(info.mode), succ))
        }
        (_, Label::G1) => Some((write_kind(info.mode), ctx.regs.victim())),
        (_, Label::G2) => {
            let (reg, _) = ctx.regs.indicator(info.class.other());
            Some((read_kind(info.mode), reg))
        }
        (_, Label::G3) => Some((read_kind(info.mode), ctx.regs.victim())),
        (LockKind::NaiveRcas | LockKind::MixedCas, Label::Enter) => match ctx.regs {
            LockRegs::Flag(flag) => Some((cas_kind(info.mode), flag)),
            _ => unreachable!(),
        },
        (LockKind::NaiveRcas | LockKind::MixedCas, Label::Exit) => match ctx.regs {
            LockRegs::Flag(flag) => Some((write_kind(info.mode), flag)),
            _ => unreachable!(),
        },
        (LockKind::Peterson2, Label::Enter | Label::Exit) => {
            let (reg, _) = ctx.regs.indicator(info.class);
            Some((write_kind(info.mode), reg))
        }
        _ => None,
    }
}

/// Whether the process's next step can run in the current state.
pub fn enabled(ctx: &LockCtx, info: &ProcInfo, st: &ProcState, mem: &Memory) -> bool {
    // A process mid remote-CAS always gets to finish the store phase.
    if mem.pending_for(info.id).is_some() {
        return true;
    }
    match (ctx.kind, st.pc) {
        // await budget >= 0
        (LockKind::ALock, Label::C3) => {
            matches!(mem.peek(info.descriptor().budget), Ok(Word::Int(b)) if b >= 0)
        }
        // await next != null
        (LockKind::ALock, Label::R1) => {
            matches!(mem.peek(info.descriptor().next), Ok(w) if !w.is_null())
        }
        _ => match step_op_target(ctx, info, st, mem) {
            Some((kind, reg)) => !mem.blocks(kind, reg),
            None => true,
        },
    }
}

/// Execute one atomic step for the process, or report it blocked.
pub fn step(
    ctx: &LockCtx,
    info: &ProcInfo,
    st: &mut ProcState,
    mem: &mut Memory,
) -> StepOutcome {
    if !enabled(ctx, info, st, mem) {
        return StepOutcome::Blocked;
    }
    let label = st.pc;
    let mut rec = StepRecord { label, micro: None, ops: Vec::new(), to: label };
    match (ctx.kind, label) {
        (_, Label::Ncs) => st.pc = Label::Enter,
        (_, Label::Cs) => st.pc = Label::Exit,
        (LockKind::ALock, Label::Enter) => st.pc = Label::C1,
        (LockKind::ALock, Label::P2) => {
            if st.passed {
                st.pc = Label::Cs;
            } else {
                st.ret = Ret::ToCs;
                st.pc = Label::G1;
            }
        }
        (
            LockKind::ALock,
            Label::C1
            | Label::Swap
            | Label::Cwait
            | Label::C2
            | Label::C3
            | Label::C4
            | Label::C5
            | Label::C6
            | Label::C7
            | Label::C8
            | Label::C9
            | Label::C10
            | Label::Exit
            | Label::Cas
            | Label::R1
            | Label::R2
            | Label::R3,
        ) => mcs::step(ctx, info, st, mem, &mut rec),
        (_, Label::G1 | Label::Gwait | Label::G2 | Label::G3 | Label::G4) => {
            peterson::step(ctx, info, st, mem, &mut rec)
        }
        (LockKind::NaiveRcas | LockKind::MixedCas, Label::Enter | Label::Exit) => {
            baselines::step_flag_lock(ctx, info, st, mem, &mut rec)
        }
        (LockKind::Peterson2, Label::Enter | Label::Exit) => {
            baselines::step_two_flag(ctx, info, st, mem, &mut rec)
        }
        (kind, label) => unreachable!("label {label} is not part of {kind}"),
    }
    rec.to = st.pc;
    StepOutcome::Advanced(rec)
}

// ---------------------------------------------------------------------------
// Scenario construction.

/// A concrete system configuration: one lock, its processes, one backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub kind: LockKind,
    pub n_local: u32,
    pub n_remote: u32,
    pub budget: i64,
    pub backend: Backend,
    pub initial_victim: u8,
    pub remote_tick_cost: u64,
}

impl Scenario {
    pub fn new(kind: LockKind, n_local: u32, n_remote: u32) -> Self {
        Scenario {
            kind,
            n_local,
            n_remote,
            budget: 1,
            backend: Backend::SeqCst,
            initial_victim: 0,
            remote_tick_cost: 0,
        }
    }

    pub fn budget(mut self, b: i64) -> Self {
        self.budget = b;
        self
    }

    pub fn backend(mut self, b: Backend) -> Self {
        self.backend = b;
        self
    }

    pub fn initial_victim(mut self, v: u8) -> Self {
        self.initial_victim = v;
        self
    }

    pub fn proc_count(&self) -> usize {
        (self.n_local + self.n_remote) as usize
    }
}

/// A complete stepwise system: lock wiring, process states, and the memory.
/// This is what scripted tests, the random scheduler and the checker drive.
#[derive(Debug, Clone)]
pub struct World {
    pub scenario: Scenario,
    pub ctx: LockCtx,
    pub infos: Vec<ProcInfo>,
    pub procs: Vec<ProcState>,
    pub mem: Memory,
}

impl World {
    /// Lay out registers and processes for a scenario. Local processes live
    /// on the lock's home node; each remote process gets its own node, so
    /// descriptor links between remote processes are genuinely remote.
    pub fn new(sc: Scenario) -> Result<World, BuildError> {
        if sc.budget < 1 {
            return Err(BuildError::InvalidBudget(sc.budget));
        }
        if sc.proc_count() == 0 {
            return Err(BuildError::NoProcesses);
        }
        if sc.kind == LockKind::Peterson2 && (sc.n_local != 1 || sc.n_remote != 1) {
            return Err(BuildError::Peterson2Shape);
        }
        let home = NodeId(0);
        let mut mem = Memory::new(sc.backend, 1 + sc.n_remote);
        mem.set_remote_tick_cost(sc.remote_tick_cost);
        let regs = match sc.kind {
            LockKind::ALock => LockRegs::Queue {
                victim: mem.alloc_register(home, Word::Int(sc.initial_victim as i64))?,
                tails: [
                    mem.alloc_register(home, Word::Null)?,
                    mem.alloc_register(home, Word::Null)?,
                ],
            },
            LockKind::NaiveRcas | LockKind::MixedCas => {
                LockRegs::Flag(mem.alloc_register(home, Word::Int(0))?)
            }
            LockKind::Peterson2 => LockRegs::TwoFlag {
                victim: mem.alloc_register(home, Word::Int(sc.initial_victim as i64))?,
                flags: [
                    mem.alloc_register(home, Word::Int(0))?,
                    mem.alloc_register(home, Word::Int(0))?,
                ],
            },
        };
        let ctx = LockCtx { kind: sc.kind, home, budget: sc.budget, regs };
        let mut infos = Vec::with_capacity(sc.proc_count());
        for i in 0..sc.n_local {
            infos.push(make_proc(&ctx, &mut mem, ProcId::new(0, i))?);
        }
        for k in 0..sc.n_remote {
            infos.push(make_proc(&ctx, &mut mem, ProcId::new(1 + k, 0))?);
        }
        let procs = vec![ProcState::idle(); infos.len()];
        Ok(World { scenario: sc, ctx, infos, procs, mem })
    }

    pub fn proc_count(&self) -> usize {
        self.infos.len()
    }

    pub fn label(&self, i: usize) -> Label {
        self.procs[i].pc
    }

    pub fn enabled(&self, i: usize) -> bool {
        enabled(&self.ctx, &self.infos[i], &self.procs[i], &self.mem)
    }

    pub fn step(&mut self, i: usize) -> StepOutcome {
        step(&self.ctx, &self.infos[i], &mut self.procs[i], &mut self.mem)
    }

    /// Step only process `i` until it sits at `target`. Panics if the
    /// process blocks (nobody else is scheduled to unblock it) or fails to
    /// arrive within `max` steps.
    pub fn run_to(&mut self, i: usize, target: Label) {
        let max = 10_000;
        for _ in 0..max {
            if self.procs[i].pc == target {
                return;
            }
            match self.step(i) {
                StepOutcome::Advanced(_) => {}
                StepOutcome::Blocked => panic!(
                    "process {i} blocked at {} while driving to {target}",
                    self.procs[i].pc
                ),
            }
        }
        panic!("process {i} did not reach {target} within {max} steps");
    }

    /// Number of processes currently at the critical-section label.
    pub fn cs_count(&self) -> usize {
        self.procs.iter().filter(|p| p.pc == Label::Cs).count()
    }
}

fn make_proc(ctx: &LockCtx, mem: &mut Memory, id: ProcId) -> Result<ProcInfo, BuildError> {
    let class = get_cid(id, ctx.home);
    let mode = match ctx.kind {
        // The naive lock routes everyone through the NIC, locals by loopback.
        LockKind::NaiveRcas => AccessMode::Remote,
        _ => {
            if class.0 == 0 {
                AccessMode::Local
            } else {
                AccessMode::Remote
            }
        }
    };
    let desc = match ctx.kind {
        LockKind::ALock => Some(mcs::Descriptor::alloc(mem, id.node)?),
        _ => None,
    };
    Ok(ProcInfo { id, class, mode, desc })
}

// ---------------------------------------------------------------------------
// Blocking driver for concurrent mode.

/// Drives one process's steps against a shared memory, spinning politely
/// whenever the next step is blocked.
pub struct Driver<'a> {
    pub ctx: &'a LockCtx,
    pub info: &'a ProcInfo,
    pub st: &'a mut ProcState,
    pub shared: &'a SharedMemory,
}

impl Driver<'_> {
    /// Step until the process sits at `stop`.
    pub fn run_to(&mut self, stop: Label) {
        let mut spins = 0u32;
        while self.st.pc != stop {
            let out = self
                .shared
                .with(|m| step(self.ctx, self.info, self.st, m));
            match out {
                StepOutcome::Advanced(_) => spins = 0,
                StepOutcome::Blocked => {
                    spins += 1;
                    if spins % 64 == 0 {
                        std::thread::yield_now();
                    } else {
                        std::hint::spin_loop();
                    }
                }
            }
        }
    }
}
