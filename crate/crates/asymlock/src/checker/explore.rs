//! Reachable-state enumeration and the safety checks that run over it.

use std::time::Instant;

use indexmap::IndexSet;

use crate::machine::{Label, Scenario, StepOutcome, World};
use crate::memory::Word;
use crate::peterson::ClassId;
use crate::LockKind;

use super::{
    replay, restore, snapshot, CheckConfig, Counterexample, LabeledState, PropertyReport, Verdict,
};

/// Worklist discipline. Both visit the same states; breadth-first finds
/// counterexamples of minimal depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Bfs,
    Dfs,
}

/// A (state, stepping process) pair identifying one transition.
pub(crate) type Edge = (u32, u8);

pub(crate) struct Exploration {
    pub scenario_roots: Vec<(u32, Scenario)>,
    pub states: IndexSet<LabeledState>,
    /// How each state was first reached; roots have no parent.
    pub parent: Vec<Option<Edge>>,
    /// Outgoing transitions per state, when graph mode was requested.
    pub edges: Option<Vec<Vec<(u8, u32)>>>,
    /// Per-state bitmask of enabled processes, in graph mode.
    pub enabled: Option<Vec<u16>>,
    pub capped: bool,
    pub me_violation: Option<u32>,
    pub queue_violation: Option<u32>,
    pub handoff_violation: Option<u32>,
    pub budget_violation: Option<u32>,
    /// A step by a class-0 process that touched the NIC (state, proc).
    pub purity_violation: Option<Edge>,
    /// A budget- or link-wait read that left the waiter's partition.
    pub locality_violation: Option<Edge>,
}

impl Exploration {
    pub(crate) fn scenario_of(&self, mut id: u32) -> Scenario {
        while let Some((p, _)) = self.parent[id as usize] {
            id = p;
        }
        self.scenario_roots
            .iter()
            .find(|(root, _)| *root == id)
            .map(|(_, sc)| *sc)
            .expect("every state descends from a root")
    }

    /// Move sequence from the owning root to `id`, via first-visit parents.
    pub(crate) fn path_to(&self, id: u32) -> Vec<usize> {
        let mut moves = Vec::new();
        let mut cur = id;
        while let Some((p, proc)) = self.parent[cur as usize] {
            moves.push(proc as usize);
            cur = p;
        }
        moves.reverse();
        moves
    }

    pub(crate) fn counterexample_at(&self, id: u32) -> Counterexample {
        let scenario = self.scenario_of(id);
        let moves = self.path_to(id);
        let (steps, end) = replay(scenario, &moves);
        debug_assert_eq!(&end, self.states.get_index(id as usize).unwrap());
        Counterexample { scenario, steps, loop_start: None, violating: end }
    }

    /// Counterexample for a step audit: the path to the state plus the
    /// offending step itself.
    pub(crate) fn counterexample_step(&self, at: Edge) -> Counterexample {
        let (id, proc) = at;
        let scenario = self.scenario_of(id);
        let mut moves = self.path_to(id);
        moves.push(proc as usize);
        let (steps, end) = replay(scenario, &moves);
        Counterexample { scenario, steps, loop_start: None, violating: end }
    }
}

pub(crate) fn explore(cfg: &CheckConfig, order: Order, graph: bool) -> Exploration {
    let scenarios = cfg.scenarios();
    let mut scratch = World::new(scenarios[0]).expect("checker scenario");
    let np = scratch.proc_count();
    assert!(np <= 16, "enabled bitmask holds at most 16 processes");

    let mut ex = Exploration {
        scenario_roots: Vec::new(),
        states: IndexSet::new(),
        parent: Vec::new(),
        edges: if graph { Some(Vec::new()) } else { None },
        enabled: if graph { Some(Vec::new()) } else { None },
        capped: false,
        me_violation: None,
        queue_violation: None,
        handoff_violation: None,
        budget_violation: None,
        purity_violation: None,
        locality_violation: None,
    };

    let mut worklist = std::collections::VecDeque::new();
    for sc in &scenarios {
        let w = World::new(*sc).expect("checker scenario");
        let s0 = snapshot(&w);
        let (id, new) = ex.states.insert_full(s0);
        if new {
            ex.parent.push(None);
            if let Some(e) = ex.edges.as_mut() {
                e.push(Vec::new());
            }
            check_state(&scratch, &mut ex, id as u32);
            worklist.push_back(id as u32);
        }
        ex.scenario_roots.push((id as u32, *sc));
    }

    while let Some(id) = match order {
        Order::Bfs => worklist.pop_front(),
        Order::Dfs => worklist.pop_back(),
    } {
        if ex.states.len() > cfg.state_cap {
            ex.capped = true;
            break;
        }
        let state = ex.states.get_index(id as usize).unwrap().clone();
        let mut mask = 0u16;
        for p in 0..np {
            restore(&mut scratch, &state);
            if !scratch.enabled(p) {
                continue;
            }
            mask |= 1 << p;
            let rec = match scratch.step(p) {
                StepOutcome::Advanced(rec) => rec,
                StepOutcome::Blocked => unreachable!("enabled step blocked"),
            };
            audit_step(&scratch, &mut ex, id, p, &rec);
            let succ = snapshot(&scratch);
            let (tid, new) = ex.states.insert_full(succ);
            if new {
                ex.parent.push(Some((id, p as u8)));
                if let Some(e) = ex.edges.as_mut() {
                    e.push(Vec::new());
                }
                check_state(&scratch, &mut ex, tid as u32);
                worklist.push_back(tid as u32);
            }
            if let Some(e) = ex.edges.as_mut() {
                e[id as usize].push((p as u8, tid as u32));
            }
        }
        if let Some(en) = ex.enabled.as_mut() {
            while en.len() <= id as usize {
                en.push(0);
            }
            en[id as usize] = mask;
        }
    }
    ex
}

/// Per-state invariants, recorded at first violation.
fn check_state(w: &World, ex: &mut Exploration, id: u32) {
    let s = ex.states.get_index(id as usize).unwrap();
    if ex.me_violation.is_none() {
        let in_cs = s.procs.iter().filter(|p| p.pc == Label::Cs).count();
        if in_cs > 1 {
            ex.me_violation = Some(id);
        }
    }
    if w.ctx.kind != LockKind::ALock {
        return;
    }
    if ex.budget_violation.is_none() && !budgets_in_range(w, s) {
        ex.budget_violation = Some(id);
    }
    if ex.queue_violation.is_none() && !queues_intact(w, s) {
        ex.queue_violation = Some(id);
    }
    if ex.handoff_violation.is_none() && !handoff_exclusive(w, s) {
        ex.handoff_violation = Some(id);
    }
}

fn reg_value(s: &LabeledState, r: crate::memory::RegisterId) -> Word {
    s.regs[r.node.0 as usize][r.slot as usize]
}

fn budgets_in_range(w: &World, s: &LabeledState) -> bool {
    w.infos.iter().all(|info| {
        let Some(d) = info.desc else { return true };
        matches!(reg_value(s, d.budget), Word::Int(b) if (-1..=w.ctx.budget).contains(&b))
    })
}

/// The descriptors of each cohort's in-episode processes form a simple
/// chain ending at the tail: the tail's descriptor has no successor, every
/// descriptor is linked to at most once, and links stay within the class.
fn queues_intact(w: &World, s: &LabeledState) -> bool {
    for class in [ClassId(0), ClassId(1)] {
        let tail = reg_value(s, w.ctx.regs.tail(class));
        let members: Vec<usize> = (0..w.infos.len())
            .filter(|&i| w.infos[i].class == class && s.procs[i].pc.in_cohort_episode())
            .collect();
        match tail {
            Word::Null => {
                if !members.is_empty() {
                    return false;
                }
            }
            Word::Int(_) => return false,
            Word::Ref(head_reg) => {
                let Some(owner) = w
                    .infos
                    .iter()
                    .position(|i| i.desc.map(|d| d.budget) == Some(head_reg))
                else {
                    return false;
                };
                if w.infos[owner].class != class || !members.contains(&owner) {
                    return false;
                }
                if !reg_value(s, w.infos[owner].descriptor().next).is_null() {
                    return false;
                }
            }
        }
        // Successor links: at most one referrer per descriptor, targets are
        // same-class members, and following them never cycles.
        let mut referenced = std::collections::BTreeSet::new();
        for &i in &members {
            let next = reg_value(s, w.infos[i].descriptor().next);
            if next.is_null() {
                continue;
            }
            let Word::Ref(target) = next else { return false };
            if !referenced.insert(target) {
                return false;
            }
            let Some(t) = w
                .infos
                .iter()
                .position(|inf| inf.desc.map(|d| d.budget) == Some(target))
            else {
                return false;
            };
            if w.infos[t].class != class || !members.contains(&t) {
                return false;
            }
        }
        for &i in &members {
            let mut hops = 0;
            let mut cur = i;
            while let Word::Ref(target) = reg_value(s, w.infos[cur].descriptor().next) {
                let Some(t) = w
                    .infos
                    .iter()
                    .position(|inf| inf.desc.map(|d| d.budget) == Some(target))
                else {
                    return false;
                };
                cur = t;
                hops += 1;
                if hops > w.infos.len() {
                    return false;
                }
            }
        }
    }
    true
}

/// At most one in-episode descriptor per cohort carries a granted budget.
fn handoff_exclusive(w: &World, s: &LabeledState) -> bool {
    for class in [ClassId(0), ClassId(1)] {
        let granted = (0..w.infos.len())
            .filter(|&i| w.infos[i].class == class && s.procs[i].pc.in_cohort_episode())
            .filter(|&i| {
                matches!(reg_value(s, w.infos[i].descriptor().budget), Word::Int(b) if b >= 0)
            })
            .count();
        if granted > 1 {
            return false;
        }
    }
    true
}

/// Step-level audits: class-0 processes never touch the NIC (for locks that
/// promise it), and the budget/link waits read only the waiter's partition.
fn audit_step(
    w: &World,
    ex: &mut Exploration,
    from: u32,
    p: usize,
    rec: &crate::machine::StepRecord,
) {
    let info = &w.infos[p];
    if ex.purity_violation.is_none()
        && w.ctx.kind != LockKind::NaiveRcas
        && info.class == ClassId(0)
        && rec.ops.iter().any(|op| op.kind.is_remote())
    {
        ex.purity_violation = Some((from, p as u8));
    }
    if ex.locality_violation.is_none()
        && matches!(rec.label, Label::C3 | Label::R1)
        && rec.ops.iter().any(|op| op.register.node != info.id.node)
    {
        ex.locality_violation = Some((from, p as u8));
    }
}

/// Number of distinct reachable states, used as a traversal-order oracle.
pub fn reachable_count(cfg: &CheckConfig, order: Order) -> usize {
    explore(cfg, order, false).states.len()
}

fn report(
    ex: &Exploration,
    property: &str,
    state_violation: Option<u32>,
    step_violation: Option<Edge>,
    note: Option<&str>,
) -> PropertyReport {
    let verdict = if state_violation.is_some() || step_violation.is_some() {
        Verdict::Violated
    } else if ex.capped {
        Verdict::Inconclusive
    } else {
        Verdict::Holds
    };
    let mut r = PropertyReport::new(property, verdict, ex.states.len());
    r.counterexample = state_violation
        .map(|id| ex.counterexample_at(id))
        .or_else(|| step_violation.map(|e| ex.counterexample_step(e)));
    r.note = note.map(str::to_string);
    r
}

/// Mutual exclusion plus the structural invariants, in one exploration.
/// The first report is always MutualExclusion.
pub fn check_safety_bundle(cfg: &CheckConfig) -> Vec<PropertyReport> {
    let start = Instant::now();
    let ex = explore(cfg, Order::Bfs, false);
    let queue_note = (cfg.lock != LockKind::ALock).then_some("no queue registers in this lock");
    let purity_note =
        (cfg.lock == LockKind::NaiveRcas).then_some("naive lock routes locals through loopback");
    let mut out = vec![
        report(&ex, "MutualExclusion", ex.me_violation, None, None),
        report(&ex, "QueueIntegrity", ex.queue_violation, None, queue_note),
        report(&ex, "HandoffExclusivity", ex.handoff_violation, None, queue_note),
        report(&ex, "BudgetBound", ex.budget_violation, None, queue_note),
        report(&ex, "LocalPurity", None, ex.purity_violation, purity_note),
        report(&ex, "LocalWaitLocality", None, ex.locality_violation, queue_note),
    ];
    let elapsed = start.elapsed();
    for r in &mut out {
        r.elapsed = elapsed;
    }
    out
}

/// Exhaustively verify that no reachable state has two processes in their
/// critical sections.
pub fn check_safety(cfg: &CheckConfig) -> PropertyReport {
    check_safety_bundle(cfg).into_iter().next().unwrap()
}

/// The structural invariants of the queue cohorts and the access-footprint
/// audits, without the mutual-exclusion report.
pub fn check_invariants(cfg: &CheckConfig) -> Vec<PropertyReport> {
    check_safety_bundle(cfg).into_iter().skip(1).collect()
}
