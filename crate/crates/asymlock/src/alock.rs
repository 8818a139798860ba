//! The user-facing combined lock.
//!
//! An [`ALock`] owns the shared registers (victim plus the two cohort
//! tails) on its home node. Each simulated process gets a handle; a handle
//! routes its owner to the local or remote flavor of the cohort lock by
//! node, and drives the same labeled steps the checker verifies. Handles
//! are one-per-thread in concurrent mode; all shared state lives in the
//! memory.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::machine::{
    AccessMode, BuildError, Driver, Label, LockCtx, LockKind, LockRegs, ProcInfo, ProcState,
};
use crate::mcs::Descriptor;
use crate::memory::{NodeId, ProcId, SharedMemory, Word};
use crate::peterson::{self, get_cid};

/// The combined lock: queue cohorts embedded in the two-party global
/// protocol, everything resident on one home node.
pub struct ALock {
    ctx: Arc<LockCtx>,
    shared: Arc<SharedMemory>,
    next_index: Mutex<Vec<u32>>,
    token_seq: Arc<AtomicU64>,
}

/// Proof of a successful [`AlockHandle::acquire`], consumed by
/// [`AlockHandle::release`]. Catches release-without-acquire and
/// cross-handle mixups at run time.
#[must_use = "a held lock must be released"]
#[derive(Debug)]
pub struct HeldToken {
    proc: ProcId,
    seq: u64,
}

impl ALock {
    /// Allocate a lock on `home`. `k_init_budget` is the number of
    /// acquisitions a class may perform per global-lock tenure.
    pub fn new(
        shared: Arc<SharedMemory>,
        home: NodeId,
        k_init_budget: i64,
    ) -> Result<ALock, BuildError> {
        if k_init_budget < 1 {
            return Err(BuildError::InvalidBudget(k_init_budget));
        }
        let (victim, t0, t1) = shared.with(|m| {
            let victim = m.alloc_register(home, Word::Int(0))?;
            let t0 = m.alloc_register(home, Word::Null)?;
            let t1 = m.alloc_register(home, Word::Null)?;
            Ok::<_, crate::memory::MemError>((victim, t0, t1))
        })?;
        let ctx = LockCtx {
            kind: LockKind::ALock,
            home,
            budget: k_init_budget,
            regs: LockRegs::Queue { victim, tails: [t0, t1] },
        };
        let nodes = shared.with(|m| m.node_count());
        Ok(ALock {
            ctx: Arc::new(ctx),
            shared,
            next_index: Mutex::new(vec![0; nodes as usize]),
            token_seq: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn ctx(&self) -> &LockCtx {
        &self.ctx
    }

    /// Register a process on `node` and return its handle. The descriptor
    /// registers are allocated in the process's own partition.
    pub fn handle(&self, node: NodeId) -> Result<AlockHandle, BuildError> {
        let index = {
            let mut next = self.next_index.lock();
            let slot = next
                .get_mut(node.0 as usize)
                .ok_or(crate::memory::MemError::UnknownNode(node))?;
            let i = *slot;
            *slot += 1;
            i
        };
        let id = ProcId { node, index };
        let class = get_cid(id, self.ctx.home);
        let mode = if class.0 == 0 { AccessMode::Local } else { AccessMode::Remote };
        let desc = self.shared.with(|m| Descriptor::alloc(m, node))?;
        Ok(AlockHandle {
            ctx: Arc::clone(&self.ctx),
            shared: Arc::clone(&self.shared),
            info: ProcInfo { id, class, mode, desc: Some(desc) },
            st: ProcState::idle(),
            token_seq: Arc::clone(&self.token_seq),
        })
    }
}

/// One simulated process's view of an [`ALock`]. Not shareable: one handle,
/// one thread.
pub struct AlockHandle {
    ctx: Arc<LockCtx>,
    shared: Arc<SharedMemory>,
    info: ProcInfo,
    st: ProcState,
    token_seq: Arc<AtomicU64>,
}

impl AlockHandle {
    pub fn proc_id(&self) -> ProcId {
        self.info.id
    }

    pub fn class(&self) -> peterson::ClassId {
        self.info.class
    }

    pub fn label(&self) -> Label {
        self.st.pc
    }

    /// Block until the lock is held. Returns the token release consumes.
    pub fn acquire(&mut self) -> HeldToken {
        assert_eq!(self.st.pc, Label::Ncs, "acquire on a process already in the protocol");
        let mut d = Driver {
            ctx: &self.ctx,
            info: &self.info,
            st: &mut self.st,
            shared: &self.shared,
        };
        d.run_to(Label::Cs);
        HeldToken {
            proc: self.info.id,
            seq: self.token_seq.fetch_add(1, Ordering::Relaxed),
        }
    }

    /// Release a held lock. The token must come from this handle's most
    /// recent acquire.
    pub fn release(&mut self, token: HeldToken) {
        assert_eq!(
            token.proc, self.info.id,
            "token {} from {} released through {}",
            token.seq, token.proc, self.info.id
        );
        assert_eq!(self.st.pc, Label::Cs, "release without a held lock");
        let mut d = Driver {
            ctx: &self.ctx,
            info: &self.info,
            st: &mut self.st,
            shared: &self.shared,
        };
        d.run_to(Label::Ncs);
    }

    /// Whether this process's cohort slot is currently occupied.
    pub fn cohort_locked(&self) -> bool {
        let (reg, empty) = self.ctx.regs.indicator(self.info.class);
        self.shared.with(|m| m.peek(reg).expect("cohort indicator")) != empty
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::{Backend, Memory};

    fn setup() -> (Arc<SharedMemory>, ALock) {
        let shared = Arc::new(SharedMemory::new(Memory::new(Backend::SeqCst, 3)));
        let lock = ALock::new(Arc::clone(&shared), NodeId(0), 2).unwrap();
        (shared, lock)
    }

    #[test]
    fn new_lock_has_both_cohorts_empty() {
        let (_shared, lock) = setup();
        let local = lock.handle(NodeId(0)).unwrap();
        let remote = lock.handle(NodeId(1)).unwrap();
        assert!(!local.cohort_locked());
        assert!(!remote.cohort_locked());
        assert_eq!(local.class().0, 0);
        assert_eq!(remote.class().0, 1);
    }

    #[test]
    fn budget_below_one_is_rejected() {
        let shared = Arc::new(SharedMemory::new(Memory::new(Backend::SeqCst, 1)));
        assert!(matches!(
            ALock::new(shared, NodeId(0), 0),
            Err(BuildError::InvalidBudget(0))
        ));
    }

    #[test]
    fn acquire_release_cycle_restores_idle_state() {
        let (_shared, lock) = setup();
        let mut h = lock.handle(NodeId(1)).unwrap();
        let t = h.acquire();
        assert_eq!(h.label(), Label::Cs);
        assert!(h.cohort_locked());
        h.release(t);
        assert_eq!(h.label(), Label::Ncs);
        assert!(!h.cohort_locked());
    }

    #[test]
    #[should_panic(expected = "released through")]
    fn cross_handle_token_is_rejected() {
        let (_shared, lock) = setup();
        let mut a = lock.handle(NodeId(0)).unwrap();
        let mut b = lock.handle(NodeId(0)).unwrap();
        let t = a.acquire();
        b.release(t);
    }
}
