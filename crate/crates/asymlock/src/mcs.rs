//! Budgeted queue cohort lock.
//!
//! Each class of processes (local or remote) competes in its own queue
//! lock. A process enqueues with a CAS loop on the class tail register,
//! links itself into its predecessor's `next` field, and then spins on the
//! budget register of its own descriptor — which lives in its own memory
//! partition, so the wait never touches the NIC. The budget handed down the
//! queue bounds how many times a class may pass the lock internally before
//! the receiving process must re-arbitrate through the global protocol.
//!
//! Remote processes use remote operations for the tail, the predecessor
//! link and the successor's budget; accesses to a process's own descriptor
//! are local in both flavors. The local flavor is the same algorithm with
//! every remote access replaced by a local one.

use crate::machine::{
    local_read, local_write, mode_cas, mode_read, mode_write, CasOutcome, Driver, Label, LockCtx,
    ProcInfo, ProcState, Ret, StepRecord,
};
use crate::memory::{MemError, Memory, NodeId, RegisterId, SharedMemory, Word};
use crate::peterson::ClassId;

/// A per-acquisition queue record: a budget register and a successor link,
/// allocated adjacently in the owning process's partition. A descriptor is
/// referenced by the id of its budget register; the link register is always
/// the next slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Descriptor {
    pub budget: RegisterId,
    pub next: RegisterId,
}

impl Descriptor {
    /// Budget starts at the waiting sentinel and the link empty, matching
    /// the reset performed at the top of every acquisition.
    pub fn alloc(mem: &mut Memory, node: NodeId) -> Result<Descriptor, MemError> {
        let budget = mem.alloc_register(node, Word::Int(-1))?;
        let next = mem.alloc_register(node, Word::Null)?;
        debug_assert_eq!(next.slot, budget.slot + 1);
        Ok(Descriptor { budget, next })
    }

    /// The word other processes use to name this descriptor.
    pub fn head(self) -> Word {
        Word::Ref(self.budget)
    }

    /// Recover the link register from a descriptor reference.
    pub fn next_of(head: RegisterId) -> RegisterId {
        RegisterId { node: head.node, slot: head.slot + 1 }
    }
}

/// One class's slice of a lock: which tail to queue on, with the global
/// registers reachable through the shared context for the budget-exhaustion
/// path.
#[derive(Debug, Clone, Copy)]
pub struct CohortHandle {
    pub class: ClassId,
}

impl CohortHandle {
    pub fn tail(&self, ctx: &LockCtx) -> RegisterId {
        ctx.regs.tail(self.class)
    }
}

pub(crate) fn step(
    ctx: &LockCtx,
    info: &ProcInfo,
    st: &mut ProcState,
    mem: &mut Memory,
    rec: &mut StepRecord,
) {
    let desc = info.descriptor();
    let tail = ctx.regs.tail(info.class);
    match st.pc {
        // Reset the descriptor: parked budget, no successor. Nobody else can
        // reach these registers until the swap publishes them.
        Label::C1 => {
            local_write(mem, info, desc.budget, Word::Int(-1), rec);
            local_write(mem, info, desc.next, Word::Null, rec);
            st.curr = Word::Null;
            st.pc = Label::Swap;
        }
        // One CAS attempt of the swap loop; the expected value is refreshed
        // from each failed attempt's return.
        Label::Swap => match mode_cas(mem, info, tail, st.curr, desc.head(), rec) {
            CasOutcome::ObservePhase => {}
            CasOutcome::Done(old) => {
                if old == st.curr {
                    st.pred = old;
                    st.curr = Word::Null;
                    st.pc = Label::Cwait;
                } else {
                    st.curr = old;
                }
            }
        },
        Label::Cwait => {
            st.pc = if st.pred.is_null() { Label::C8 } else { Label::C2 };
        }
        // Publish ourselves to the predecessor.
        Label::C2 => {
            let pred = st.pred.as_register().expect("predecessor set on the queue path");
            mode_write(mem, info, Descriptor::next_of(pred), desc.head(), rec);
            st.pc = Label::C3;
        }
        // Busy wait locally; enabled() holds this step until budget >= 0.
        Label::C3 => {
            local_read(mem, info, desc.budget, rec);
            st.pc = Label::C4;
        }
        Label::C4 => {
            let b = local_read(mem, info, desc.budget, rec);
            st.pc = if b == Word::Int(0) { Label::C5 } else { Label::C7 };
        }
        // Budget exhausted: offer the lock to the other class, then resume.
        Label::C5 => {
            st.ret = Ret::ToC6;
            st.pc = Label::G1;
        }
        Label::C6 => {
            local_write(mem, info, desc.budget, Word::Int(ctx.budget), rec);
            st.pc = Label::C7;
        }
        Label::C7 => {
            st.passed = true;
            st.pc = Label::C10;
        }
        // Leader path: the queue was empty.
        Label::C8 => {
            local_write(mem, info, desc.budget, Word::Int(ctx.budget), rec);
            st.pc = Label::C9;
        }
        Label::C9 => {
            st.passed = false;
            st.pc = Label::C10;
        }
        Label::C10 => st.pc = Label::P2,

        // Release. The successor check reads our own link register; only a
        // process queued behind us ever writes it.
        Label::Exit => {
            let next = local_read(mem, info, desc.next, rec);
            st.pc = if next.is_null() { Label::Cas } else { Label::R2 };
        }
        Label::Cas => match mode_cas(mem, info, tail, desc.head(), Word::Null, rec) {
            CasOutcome::ObservePhase => {}
            CasOutcome::Done(old) => {
                // Success empties the cohort slot, which also releases the
                // global lock. Failure means someone swapped in behind us
                // and is about to link.
                st.pc = if old == desc.head() { Label::R3 } else { Label::R1 };
            }
        },
        Label::R1 => {
            local_read(mem, info, desc.next, rec);
            st.pc = Label::R2;
        }
        // Pass the lock: hand the successor our budget minus one.
        Label::R2 => {
            let b = local_read(mem, info, desc.budget, rec)
                .as_int()
                .expect("budget is an integer");
            let succ = local_read(mem, info, desc.next, rec)
                .as_register()
                .expect("successor linked before the handoff");
            mode_write(mem, info, succ, Word::Int(b - 1), rec);
            st.pc = Label::R3;
        }
        Label::R3 => {
            st.curr = Word::Null;
            st.pred = Word::Null;
            st.passed = false;
            st.ret = Ret::None;
            st.pc = Label::Ncs;
        }
        other => unreachable!("{other} is not a cohort label"),
    }
}

// ---------------------------------------------------------------------------
// Blocking entry points (concurrent mode). Thin drivers over the same steps.

/// Acquire the caller's cohort lock. Returns `true` iff the queue was empty
/// at the successful swap — the caller is the cohort leader and must still
/// acquire the global lock. Returns `false` when the lock was handed over by
/// a predecessor (re-arbitrating through the global protocol itself if the
/// received budget was exhausted).
pub fn q_lock(d: &mut Driver<'_>) -> bool {
    assert_eq!(d.st.pc, Label::Ncs, "q_lock requires an idle process");
    d.st.pc = Label::C1;
    d.run_to(Label::P2);
    !d.st.passed
}

/// Release the caller's cohort lock, handing it to a queued successor when
/// one exists.
pub fn q_unlock(d: &mut Driver<'_>) {
    assert_eq!(d.st.pc, Label::P2, "q_unlock requires the cohort lock to be held");
    d.st.pc = Label::Exit;
    d.run_to(Label::Ncs);
}

/// Whether the cohort's slot is occupied. Read through the caller's access
/// mode; no side effects beyond the metered read.
pub fn q_is_locked(
    ctx: &LockCtx,
    info: &ProcInfo,
    shared: &SharedMemory,
    class: ClassId,
) -> bool {
    let tail = ctx.regs.tail(class);
    let mut rec = StepRecord { label: Label::Ncs, micro: None, ops: Vec::new(), to: Label::Ncs };
    !shared.with(|m| mode_read(m, info, tail, &mut rec)).is_null()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{Backend, Memory};

    #[test]
    fn descriptor_registers_are_adjacent_in_owner_partition() {
        let mut m = Memory::new(Backend::SeqCst, 2);
        let d = Descriptor::alloc(&mut m, NodeId(1)).unwrap();
        assert_eq!(d.budget.node, NodeId(1));
        assert_eq!(Descriptor::next_of(d.budget), d.next);
        assert_eq!(m.peek(d.budget).unwrap(), Word::Int(-1));
        assert_eq!(m.peek(d.next).unwrap(), Word::Null);
    }
}
