//! Explicit-state interleaving checker.
//!
//! Executes the labeled step machines over every reachable interleaving of
//! a small configuration and verifies safety (mutual exclusion plus the
//! queue-structure invariants), liveness (starvation freedom and friends,
//! via fair-cycle search), and the first-come ordering properties. Violated
//! verdicts carry a replayable counterexample trace.

mod explore;
mod liveness;
mod random;

use std::fmt;

use crate::machine::{Scenario, StepOutcome, StepRecord, World};
use crate::memory::{Backend, PendingRcas, ProcId, Word};
use crate::LockKind;

pub use explore::{check_invariants, check_safety, check_safety_bundle, reachable_count, Order};
pub use liveness::check_liveness;
pub use random::{random_fair_run, RandomRunOutcome};

/// Which initial victim values to explore. The protocol must be safe for
/// either; the checker can sweep both in one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialVictim {
    Zero,
    One,
    Both,
}

/// One checking job: a lock kind, a process population, and the model
/// parameters.
#[derive(Debug, Clone, Copy)]
pub struct CheckConfig {
    pub lock: LockKind,
    pub n_local: u32,
    pub n_remote: u32,
    pub budget: i64,
    pub backend: Backend,
    pub initial_victim: InitialVictim,
    /// Exploration stops with an inconclusive verdict past this many states.
    pub state_cap: usize,
}

impl CheckConfig {
    pub fn new(lock: LockKind, n_local: u32, n_remote: u32) -> Self {
        CheckConfig {
            lock,
            n_local,
            n_remote,
            budget: 1,
            backend: Backend::SeqCst,
            initial_victim: InitialVictim::Both,
            state_cap: 5_000_000,
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

    pub fn initial_victim(mut self, v: InitialVictim) -> Self {
        self.initial_victim = v;
        self
    }

    pub fn state_cap(mut self, cap: usize) -> Self {
        self.state_cap = cap;
        self
    }

    /// The scenario used by non-exhaustive modes (victim 0 unless pinned).
    pub fn base_scenario(&self) -> Scenario {
        let mut sc = Scenario::new(self.lock, self.n_local, self.n_remote)
            .budget(self.budget)
            .backend(self.backend);
        sc.initial_victim = match self.initial_victim {
            InitialVictim::One => 1,
            _ => 0,
        };
        sc
    }

    pub(crate) fn scenarios(&self) -> Vec<Scenario> {
        let base = Scenario::new(self.lock, self.n_local, self.n_remote)
            .budget(self.budget)
            .backend(self.backend);
        let victims: &[u8] = match self.initial_victim {
            InitialVictim::Zero => &[0],
            InitialVictim::One => &[1],
            InitialVictim::Both => &[0, 1],
        };
        victims.iter().map(|&v| base.initial_victim(v)).collect()
    }
}

/// A full system snapshot: every register, every in-flight remote CAS, and
/// every process's program counter and locals. Canonical and hashable, so
/// visited-set deduplication is exact. Operation counters are deliberately
/// not part of state identity — they are path-dependent bookkeeping and
/// would make every state unique.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledState {
    pub regs: Vec<Vec<Word>>,
    pub pending: Vec<(ProcId, PendingRcas)>,
    pub procs: Vec<crate::machine::ProcState>,
}

pub fn snapshot(w: &World) -> LabeledState {
    let (regs, pending) = w.mem.snapshot_parts();
    LabeledState { regs, pending, procs: w.procs.clone() }
}

pub fn restore(w: &mut World, s: &LabeledState) {
    w.mem.restore_parts(&s.regs, &s.pending);
    w.procs.clone_from(&s.procs);
}

/// All enabled one-step successors of `s`, as (process index, state) pairs.
/// `w` is a scratch world of the matching layout. Blocked processes
/// contribute nothing; under the hazard backend a remote CAS contributes
/// its two phases across two successive calls.
pub fn successors(w: &mut World, s: &LabeledState) -> Vec<(usize, LabeledState)> {
    let mut out = Vec::new();
    for p in 0..w.proc_count() {
        restore(w, s);
        match w.step(p) {
            StepOutcome::Advanced(_) => out.push((p, snapshot(w))),
            StepOutcome::Blocked => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive-cap-hit",
        })
    }
}

/// One step of a counterexample trace.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub index: usize,
    pub proc: usize,
    pub proc_id: ProcId,
    pub record: StepRecord,
}

/// A replayable violation witness: the scenario it starts from, the step
/// sequence, and (for liveness) where the repeating cycle begins.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub scenario: Scenario,
    pub steps: Vec<TraceStep>,
    pub loop_start: Option<usize>,
    pub violating: LabeledState,
}

/// Outcome of checking one property over one configuration.
#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub property: String,
    pub verdict: Verdict,
    pub states: usize,
    pub elapsed: std::time::Duration,
    pub counterexample: Option<Counterexample>,
    pub note: Option<String>,
}

impl PropertyReport {
    pub(crate) fn new(property: &str, verdict: Verdict, states: usize) -> Self {
        PropertyReport {
            property: property.to_string(),
            verdict,
            states,
            elapsed: std::time::Duration::ZERO,
            counterexample: None,
            note: None,
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Re-execute a move sequence from a fresh world. Returns the trace records
/// and the final state; panics if any move is not enabled, so a successful
/// replay certifies the trace.
pub fn replay(scenario: Scenario, moves: &[usize]) -> (Vec<TraceStep>, LabeledState) {
    let mut w = World::new(scenario).expect("replay scenario");
    let mut steps = Vec::with_capacity(moves.len());
    for (index, &p) in moves.iter().enumerate() {
        match w.step(p) {
            StepOutcome::Advanced(record) => steps.push(TraceStep {
                index,
                proc: p,
                proc_id: w.infos[p].id,
                record,
            }),
            StepOutcome::Blocked => panic!(
                "invalid trace: process {p} blocked at move {index} (label {})",
                w.procs[p].pc
            ),
        }
    }
    let end = snapshot(&w);
    (steps, end)
}
