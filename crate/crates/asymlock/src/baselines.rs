//! Comparison locks: designs the combined lock improves on.
//!
//! * `naive-rcas` — everyone, including processes on the lock's home node,
//!   spins with remote CAS on one flag. Safe under both backends (the NIC
//!   serializes remote RMWs) but pays loopback for locals and is unfair.
//! * `mixed-cas` — locals use local CAS, remotes use remote CAS on the same
//!   flag. Safe only when local and remote RMWs are mutually atomic; under
//!   the hazard backend a local CAS can land between the two phases of a
//!   remote CAS and both "succeed".
//! * `peterson2` — the bare two-party victim protocol with one flag per
//!   class, i.e. cohorts of size one.

use crate::machine::{
    mode_cas, mode_write, CasOutcome, Label, LockCtx, LockRegs, ProcInfo, ProcState, Ret,
    StepRecord,
};
use crate::memory::{Memory, Word};

pub(crate) fn step_flag_lock(
    ctx: &LockCtx,
    info: &ProcInfo,
    st: &mut ProcState,
    mem: &mut Memory,
    rec: &mut StepRecord,
) {
    let LockRegs::Flag(flag) = ctx.regs else {
        unreachable!("flag lock without a flag register")
    };
    match st.pc {
        // Spin: one CAS attempt per step, staying at enter on failure.
        Label::Enter => match mode_cas(mem, info, flag, Word::Int(0), Word::Int(1), rec) {
            CasOutcome::ObservePhase => {}
            CasOutcome::Done(old) => {
                if old == Word::Int(0) {
                    st.pc = Label::Cs;
                }
            }
        },
        Label::Exit => {
            mode_write(mem, info, flag, Word::Int(0), rec);
            st.pc = Label::Ncs;
        }
        other => unreachable!("{other} is not a flag-lock label"),
    }
}

pub(crate) fn step_two_flag(
    ctx: &LockCtx,
    info: &ProcInfo,
    st: &mut ProcState,
    mem: &mut Memory,
    rec: &mut StepRecord,
) {
    let (own, _) = ctx.regs.indicator(info.class);
    match st.pc {
        Label::Enter => {
            mode_write(mem, info, own, Word::Int(1), rec);
            st.ret = Ret::ToCs;
            st.pc = Label::G1;
        }
        Label::Exit => {
            mode_write(mem, info, own, Word::Int(0), rec);
            st.ret = Ret::None;
            st.pc = Label::Ncs;
        }
        other => unreachable!("{other} is not a two-flag label"),
    }
}
