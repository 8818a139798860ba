//! Two-party global lock between the class leaders.
//!
//! The classic two-process victim protocol, with the per-party "I want in"
//! flags replaced by the cohort indicators: a class wants or holds the lock
//! exactly when its cohort slot is occupied. A leader writes the victim
//! register and then waits until the other class is idle or has volunteered
//! to go last. `p_reacquire` releases and immediately re-acquires the lock
//! by the same wait, giving a waiting leader of the other class priority.
//!
//! Class-1 (remote) leaders run the wait loop with remote reads; class-0
//! leaders never leave their node.

use crate::machine::{
    mode_read, mode_write, AccessMode, Driver, Label, LockCtx, ProcInfo, ProcState, Ret,
    StepRecord,
};
use crate::memory::{Memory, NodeId, ProcId, Word};

/// Which cohort a process competes in: 0 on the lock's home node, 1 off it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u8);

impl ClassId {
    pub fn other(self) -> ClassId {
        ClassId(1 - self.0)
    }

    pub fn word(self) -> Word {
        Word::Int(self.0 as i64)
    }
}

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Class of a process relative to a lock's home node.
pub fn get_cid(p: ProcId, home: NodeId) -> ClassId {
    if p.node == home {
        ClassId(0)
    } else {
        ClassId(1)
    }
}

pub(crate) fn step(
    ctx: &LockCtx,
    info: &ProcInfo,
    st: &mut ProcState,
    mem: &mut Memory,
    rec: &mut StepRecord,
) {
    let me = info.class;
    let victim = ctx.regs.victim();
    match st.pc {
        // Doorway: volunteer to go last.
        Label::G1 => {
            mode_write(mem, info, victim, me.word(), rec);
            st.pc = Label::Gwait;
        }
        Label::Gwait => st.pc = Label::G2,
        // The two halves of the wait condition are separate reads; the
        // indicator is checked first, the victim second.
        Label::G2 => {
            let (reg, empty) = ctx.regs.indicator(me.other());
            let v = mode_read(mem, info, reg, rec);
            st.pc = if v == empty { Label::G4 } else { Label::G3 };
        }
        Label::G3 => {
            let v = mode_read(mem, info, victim, rec);
            st.pc = if v != me.word() { Label::G4 } else { Label::Gwait };
        }
        Label::G4 => {
            st.pc = match st.ret {
                Ret::ToC6 => Label::C6,
                Ret::ToCs => Label::Cs,
                Ret::None => unreachable!("global return target unset"),
            };
        }
        other => unreachable!("{other} is not a global-protocol label"),
    }
}

// ---------------------------------------------------------------------------
// Blocking entry points (concurrent mode).

/// Acquire the lock end to end: cohort first, then — for the leader — the
/// global protocol. Leaves the process at the critical-section label.
pub fn p_lock(d: &mut Driver<'_>) {
    assert_eq!(d.st.pc, Label::Ncs, "p_lock requires an idle process");
    d.st.pc = Label::C1;
    d.run_to(Label::Cs);
}

/// Release the lock by releasing the caller's cohort lock.
pub fn p_unlock(d: &mut Driver<'_>) {
    assert_eq!(d.st.pc, Label::Cs, "p_unlock requires the lock to be held");
    d.st.pc = Label::Exit;
    d.run_to(Label::Ncs);
}

/// Yield the global lock to a waiting leader of the other class, then take
/// it back. The caller's class must hold the global lock.
pub fn p_reacquire(d: &mut Driver<'_>) {
    assert_eq!(d.st.pc, Label::Cs, "p_reacquire is called from inside the critical section");
    let (own, empty) = d.ctx.regs.indicator(d.info.class);
    let held = d.shared.with(|m| m.peek(own).expect("cohort indicator")) != empty;
    assert!(held, "p_reacquire requires the caller's cohort slot to be set");
    d.st.ret = Ret::ToCs;
    d.st.pc = Label::G1;
    d.run_to(Label::Cs);
}

/// Convenience for tests and tools: read both wait-condition inputs through
/// the caller's mode, mirroring one pass of the wait loop.
pub fn wait_condition(
    ctx: &LockCtx,
    info: &ProcInfo,
    mem: &mut Memory,
) -> bool {
    let mut rec = StepRecord { label: Label::G2, micro: None, ops: Vec::new(), to: Label::G2 };
    let (reg, empty) = ctx.regs.indicator(info.class.other());
    let other_locked = mode_read(mem, info, reg, &mut rec) != empty;
    let victim = mode_read(mem, info, ctx.regs.victim(), &mut rec);
    other_locked && victim == info.class.word()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_is_zero_exactly_on_home_node() {
        let home = NodeId(0);
        assert_eq!(get_cid(ProcId::new(0, 0), home), ClassId(0));
        assert_eq!(get_cid(ProcId::new(0, 7), home), ClassId(0));
        assert_eq!(get_cid(ProcId::new(1, 0), home), ClassId(1));
        assert_eq!(get_cid(ProcId::new(2, 0), home), ClassId(1));
        // Two processes on the same non-home node share a class.
        assert_eq!(
            get_cid(ProcId::new(3, 0), home),
            get_cid(ProcId::new(3, 1), home)
        );
    }

    #[test]
    fn other_flips_class() {
        assert_eq!(ClassId(0).other(), ClassId(1));
        assert_eq!(ClassId(1).other(), ClassId(0));
    }
}
