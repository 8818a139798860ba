//! Liveness and fairness verdicts over the explored state graph.
//!
//! The temporal properties are decided by fair-cycle search: a violation of
//! `P leads-to Q` is a reachable state satisfying `P` from which an infinite
//! fair run avoids `Q` forever — in a finite graph, a cycle (or a state with
//! no successors at all) inside the `Q`-free subgraph, reachable from the
//! `P` state without leaving that subgraph.
//!
//! Fairness is weak and per process: a cycle is fair unless some process
//! takes no step in it while being runnable at every state of the cycle.
//! "Runnable" excludes a process parked at `ncs` — that label carries no
//! fairness obligation, a process may simply never request the lock — except
//! for the infinitely-often property, which is only meaningful for processes
//! that keep requesting and therefore treats `ncs` as fair too.
//!
//! The two first-come properties are ordering checks and need no fairness:
//! once a waiter has completed its doorway (the cohort swap, or the global
//! victim write), a process still at `enter` must not reach the critical
//! section first.

use std::collections::VecDeque;
use std::time::Instant;

use crate::machine::Label;
use crate::peterson::ClassId;

use super::explore::{explore, Exploration, Order};
use super::{replay, CheckConfig, Counterexample, LabeledState, PropertyReport, Verdict};

/// Check the five liveness/fairness properties for one configuration.
/// Reports come back in a fixed order: StarvationFree, DeadAndLivelockFree,
/// ExecsCriticalSectionInfinitelyOften, CohortFairness, GlobalFairness.
pub fn check_liveness(cfg: &CheckConfig) -> Vec<PropertyReport> {
    let start = Instant::now();
    let ex = explore(cfg, Order::Bfs, true);
    let names = [
        "StarvationFree",
        "DeadAndLivelockFree",
        "ExecsCriticalSectionInfinitelyOften",
        "CohortFairness",
        "GlobalFairness",
    ];
    let mut out = if ex.capped {
        names
            .iter()
            .map(|n| PropertyReport::new(n, Verdict::Inconclusive, ex.states.len()))
            .collect::<Vec<_>>()
    } else {
        let live = Live::new(&ex);
        vec![
            live.starvation_free(),
            live.dead_and_livelock_free(),
            live.execs_cs_infinitely_often(),
            live.cohort_fairness(),
            live.global_fairness(),
        ]
    };
    let elapsed = start.elapsed();
    for r in &mut out {
        r.elapsed = elapsed;
    }
    out
}

struct Live<'a> {
    ex: &'a Exploration,
    np: usize,
}

/// A subgraph to search for fair lassos: the avoid-free states, optionally
/// restricted to those reachable from a source set without leaving the
/// subgraph (with the BFS tree kept for witness paths).
struct Region {
    in_r: Vec<bool>,
    parent: Vec<Option<(u32, u8)>>,
    rooted: bool,
}

#[derive(Debug)]
enum Witness {
    /// A fair cycle: entry state and the cycle's edge walk.
    Cycle { entry: u32, cycle: Vec<(u32, u8, u32)> },
    /// A state with no successors at all: a terminal stutter.
    Dead(u32),
}

impl<'a> Live<'a> {
    fn new(ex: &'a Exploration) -> Self {
        let np = ex.states.get_index(0).unwrap().procs.len();
        Live { ex, np }
    }

    fn state(&self, id: u32) -> &LabeledState {
        self.ex.states.get_index(id as usize).unwrap()
    }

    fn pc(&self, id: u32, p: usize) -> Label {
        self.state(id).procs[p].pc
    }

    fn edges(&self) -> &Vec<Vec<(u8, u32)>> {
        self.ex.edges.as_ref().expect("graph mode")
    }

    fn enabled_mask(&self, id: u32) -> u16 {
        self.ex.enabled.as_ref().expect("graph mode")[id as usize]
    }

    fn all_ids(&self) -> impl Iterator<Item = u32> + 'a {
        0..self.ex.states.len() as u32
    }

    // -- property drivers ---------------------------------------------------

    fn starvation_free(&self) -> PropertyReport {
        let n = self.ex.states.len();
        for i in 0..self.np {
            let sources: Vec<u32> = self
                .all_ids()
                .filter(|&s| self.pc(s, i) == Label::Enter)
                .collect();
            let region = self.region_from(&sources, &|s| self.pc(s, i) == Label::Cs);
            if let Some(w) = self.fair_lasso(&region, false) {
                let mut r = PropertyReport::new("StarvationFree", Verdict::Violated, n);
                r.note = Some(format!("process {i} can starve after reaching enter"));
                r.counterexample = Some(self.witness_trace(&w, &region));
                return r;
            }
        }
        PropertyReport::new("StarvationFree", Verdict::Holds, n)
    }

    fn dead_and_livelock_free(&self) -> PropertyReport {
        let n = self.ex.states.len();
        let avoid = |s: u32| (0..self.np).any(|p| self.pc(s, p) == Label::Cs);
        let sources: Vec<u32> = self
            .all_ids()
            .filter(|&s| (0..self.np).any(|p| self.pc(s, p) == Label::Enter))
            .collect();
        let region = self.region_from(&sources, &avoid);
        match self.fair_lasso(&region, false) {
            Some(w) => {
                let mut r = PropertyReport::new("DeadAndLivelockFree", Verdict::Violated, n);
                r.counterexample = Some(self.witness_trace(&w, &region));
                r
            }
            None => PropertyReport::new("DeadAndLivelockFree", Verdict::Holds, n),
        }
    }

    fn execs_cs_infinitely_often(&self) -> PropertyReport {
        let n = self.ex.states.len();
        for i in 0..self.np {
            let region = self.region_all(&|s| self.pc(s, i) == Label::Cs);
            if let Some(w) = self.fair_lasso(&region, true) {
                let mut r =
                    PropertyReport::new("ExecsCriticalSectionInfinitelyOften", Verdict::Violated, n);
                r.note = Some(format!(
                    "process {i} can be excluded forever even while requesting"
                ));
                r.counterexample = Some(self.witness_trace(&w, &region));
                return r;
            }
        }
        let mut r = PropertyReport::new("ExecsCriticalSectionInfinitelyOften", Verdict::Holds, n);
        r.note = Some("checked with every process continually requesting (ncs fair)".into());
        r
    }

    fn cohort_fairness(&self) -> PropertyReport {
        // Classes are positional: locals first, then remotes.
        let sc = self.ex.scenario_roots[0].1;
        let class = |p: usize| if (p as u32) < sc.n_local { ClassId(0) } else { ClassId(1) };
        self.ordering_property("CohortFairness", Label::Cwait, &|i, j| class(i) == class(j))
    }

    fn global_fairness(&self) -> PropertyReport {
        self.ordering_property("GlobalFairness", Label::Gwait, &|_, _| true)
    }

    /// First-come ordering: from any state where `i` sits at `wait_label`
    /// (doorway complete) while `j` sits at `enter`, `j` must not reach the
    /// critical section strictly before `i` does.
    fn ordering_property(
        &self,
        name: &str,
        wait_label: Label,
        pair_filter: &dyn Fn(usize, usize) -> bool,
    ) -> PropertyReport {
        let n = self.ex.states.len();
        for i in 0..self.np {
            for j in 0..self.np {
                if i == j || !pair_filter(i, j) {
                    continue;
                }
                let sources: Vec<u32> = self
                    .all_ids()
                    .filter(|&s| self.pc(s, i) == wait_label && self.pc(s, j) == Label::Enter)
                    .collect();
                if sources.is_empty() {
                    continue;
                }
                let region = self.region_from(&sources, &|s| self.pc(s, i) == Label::Cs);
                let overtake = (0..n as u32)
                    .find(|&s| region.in_r[s as usize] && self.pc(s, j) == Label::Cs);
                if let Some(bad) = overtake {
                    let moves = self.prefix_moves(&region, bad);
                    let scenario = self.ex.scenario_of(root_of(&region, bad));
                    let (steps, end) = replay(scenario, &moves);
                    let mut r = PropertyReport::new(name, Verdict::Violated, n);
                    r.note = Some(format!(
                        "process {j} (at enter) reaches cs before waiting process {i}"
                    ));
                    r.counterexample =
                        Some(Counterexample { scenario, steps, loop_start: None, violating: end });
                    return r;
                }
            }
        }
        PropertyReport::new(name, Verdict::Holds, n)
    }

    // -- graph machinery ----------------------------------------------------

    fn region_all(&self, avoid: &dyn Fn(u32) -> bool) -> Region {
        let n = self.ex.states.len();
        Region {
            in_r: (0..n as u32).map(|s| !avoid(s)).collect(),
            parent: vec![None; n],
            rooted: false,
        }
    }

    fn region_from(&self, sources: &[u32], avoid: &dyn Fn(u32) -> bool) -> Region {
        let n = self.ex.states.len();
        let edges = self.edges();
        let mut in_r = vec![false; n];
        let mut parent = vec![None; n];
        let mut queue = VecDeque::new();
        for &s in sources {
            if !avoid(s) && !in_r[s as usize] {
                in_r[s as usize] = true;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &(p, v) in &edges[u as usize] {
                if !avoid(v) && !in_r[v as usize] {
                    in_r[v as usize] = true;
                    parent[v as usize] = Some((u, p));
                    queue.push_back(v);
                }
            }
        }
        Region { in_r, parent, rooted: true }
    }

    /// Moves from an initial state to `target`: first-visit path to the
    /// region's root source, then the in-region BFS tree.
    fn prefix_moves(&self, region: &Region, target: u32) -> Vec<usize> {
        let mut tail = Vec::new();
        let mut cur = target;
        if region.rooted {
            while let Some((u, p)) = region.parent[cur as usize] {
                tail.push(p as usize);
                cur = u;
            }
            tail.reverse();
        }
        let mut moves = self.ex.path_to(cur);
        moves.extend(tail);
        moves
    }

    /// Find a fair lasso inside the region. `ncs_fair` upgrades the ncs
    /// label to a fair step.
    fn fair_lasso(&self, region: &Region, ncs_fair: bool) -> Option<Witness> {
        let n = self.ex.states.len();
        let edges = self.edges();
        // A state with no successors at all is a terminal stutter: fair by
        // vacuity and avoid-free forever.
        for s in 0..n as u32 {
            if region.in_r[s as usize] && edges[s as usize].is_empty() {
                return Some(Witness::Dead(s));
            }
        }
        for scc in tarjan_sccs(n, edges, &region.in_r) {
            let trivial = scc.len() == 1
                && !edges[scc[0] as usize]
                    .iter()
                    .any(|&(_, v)| v == scc[0]);
            if trivial {
                continue;
            }
            if self.scc_is_fair(&scc, &region.in_r, ncs_fair) {
                let cycle = self.cycle_through(&scc, &region.in_r);
                return Some(Witness::Cycle { entry: cycle[0].0, cycle });
            }
        }
        None
    }

    /// A component admits a fair cycle iff every process either takes some
    /// step inside it or is un-runnable (blocked, or parked at an exempt
    /// ncs) at some state of it; the all-edges walk is then a fair cycle.
    /// Conversely a process runnable everywhere that never steps starves in
    /// every cycle of the component.
    fn scc_is_fair(&self, scc: &[u32], in_r: &[bool], ncs_fair: bool) -> bool {
        let edges = self.edges();
        for p in 0..self.np {
            let steps = scc.iter().any(|&u| {
                edges[u as usize].iter().any(|&(q, v)| {
                    q as usize == p && in_r[v as usize] && scc.binary_search(&v).is_ok()
                })
            });
            if steps {
                continue;
            }
            let relieved = scc.iter().any(|&u| {
                self.enabled_mask(u) & (1 << p) == 0
                    || (!ncs_fair && self.pc(u, p) == Label::Ncs)
            });
            if !relieved {
                return false;
            }
        }
        true
    }

    /// A closed walk through every edge of the component; visiting every
    /// edge is what makes the fairness argument constructive.
    fn cycle_through(&self, scc: &[u32], in_r: &[bool]) -> Vec<(u32, u8, u32)> {
        let edges = self.edges();
        let scc_edges: Vec<(u32, u8, u32)> = scc
            .iter()
            .flat_map(|&u| {
                edges[u as usize]
                    .iter()
                    .filter(|&&(_, v)| in_r[v as usize] && scc.binary_search(&v).is_ok())
                    .map(move |&(p, v)| (u, p, v))
            })
            .collect();
        let start = scc_edges[0].0;
        let mut walk = Vec::new();
        let mut cur = start;
        for &(u, p, v) in &scc_edges {
            walk.extend(self.path_within(cur, u, scc, in_r));
            walk.push((u, p, v));
            cur = v;
        }
        walk.extend(self.path_within(cur, start, scc, in_r));
        walk
    }

    /// BFS path between two states of one strongly connected component.
    fn path_within(&self, from: u32, to: u32, scc: &[u32], in_r: &[bool]) -> Vec<(u32, u8, u32)> {
        if from == to {
            return Vec::new();
        }
        let edges = self.edges();
        let mut prev: std::collections::BTreeMap<u32, (u32, u8)> = Default::default();
        let mut queue = VecDeque::from([from]);
        loop {
            let u = queue.pop_front().expect("states of one SCC are mutually reachable");
            for &(p, v) in &edges[u as usize] {
                if !in_r[v as usize] || scc.binary_search(&v).is_err() {
                    continue;
                }
                if v != from && !prev.contains_key(&v) {
                    prev.insert(v, (u, p));
                    if v == to {
                        let mut path = Vec::new();
                        let mut cur = to;
                        while cur != from {
                            let (pu, pp) = prev[&cur];
                            path.push((pu, pp, cur));
                            cur = pu;
                        }
                        path.reverse();
                        return path;
                    }
                    queue.push_back(v);
                }
            }
        }
    }

    /// Assemble a lasso witness into a replayable trace: a prefix from the
    /// initial state to the cycle entry, then one turn of the cycle. A dead
    /// state gets an empty cycle: the lasso is the terminal stutter there.
    fn witness_trace(&self, w: &Witness, region: &Region) -> Counterexample {
        let (target, cycle_moves) = match w {
            Witness::Dead(s) => (*s, Vec::new()),
            Witness::Cycle { entry, cycle } => {
                (*entry, cycle.iter().map(|&(_, p, _)| p as usize).collect())
            }
        };
        let mut moves = self.prefix_moves(region, target);
        let prefix = moves.len();
        moves.extend(cycle_moves);
        let scenario = self.ex.scenario_of(root_of(region, target));
        let (steps, _) = replay(scenario, &moves);
        Counterexample {
            scenario,
            steps,
            loop_start: Some(prefix),
            violating: self.state(target).clone(),
        }
    }
}

/// The exploration-graph ancestor whose scenario a witness at `target`
/// belongs to: the region BFS root if rooted, else the state itself.
fn root_of(region: &Region, target: u32) -> u32 {
    let mut cur = target;
    if region.rooted {
        while let Some((u, _)) = region.parent[cur as usize] {
            cur = u;
        }
    }
    cur
}

/// Iterative Tarjan over the `keep`-induced subgraph. Components come back
/// sorted internally (for binary search) and ordered by their smallest
/// state id, so verdicts are deterministic.
fn tarjan_sccs(n: usize, edges: &[Vec<(u8, u32)>], keep: &[bool]) -> Vec<Vec<u32>> {
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut next = 0u32;
    let mut out: Vec<Vec<u32>> = Vec::new();

    let mut frames: Vec<(u32, usize)> = Vec::new();
    for root in 0..n as u32 {
        if !keep[root as usize] || index[root as usize] != UNSET {
            continue;
        }
        frames.push((root, 0));
        index[root as usize] = next;
        low[root as usize] = next;
        next += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        while let Some(&mut (u, ref mut cursor)) = frames.last_mut() {
            let mut descended = false;
            while *cursor < edges[u as usize].len() {
                let (_, v) = edges[u as usize][*cursor];
                *cursor += 1;
                if !keep[v as usize] {
                    continue;
                }
                if index[v as usize] == UNSET {
                    index[v as usize] = next;
                    low[v as usize] = next;
                    next += 1;
                    stack.push(v);
                    on_stack[v as usize] = true;
                    frames.push((v, 0));
                    descended = true;
                    break;
                } else if on_stack[v as usize] {
                    low[u as usize] = low[u as usize].min(index[v as usize]);
                }
            }
            if descended {
                continue;
            }
            frames.pop();
            if let Some(&mut (parent, _)) = frames.last_mut() {
                low[parent as usize] = low[parent as usize].min(low[u as usize]);
            }
            if low[u as usize] == index[u as usize] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w as usize] = false;
                    comp.push(w);
                    if w == u {
                        break;
                    }
                }
                comp.sort_unstable();
                out.push(comp);
            }
        }
    }
    out.sort_by_key(|c| c[0]);
    out
}
