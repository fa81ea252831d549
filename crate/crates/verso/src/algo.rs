//! Algorithm selection and the lock-based reference object.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use verso_core::instrument::Instrument;
use verso_core::oracle::{OracleState, VmOp, VmResult};
use verso_core::{
    CapacityError, DataHandle, LockFreeVm, ProcessId, VersionId, VersionMaintenance, WaitFreeVm,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Waitfree,
    Lockfree,
    LockedOracle,
}

impl Algo {
    pub fn max_processes(self) -> usize {
        match self {
            Algo::Waitfree => verso_core::waitfree::MAX_PROCESSES,
            Algo::Lockfree => verso_core::lockfree::MAX_PROCESSES,
            Algo::LockedOracle => usize::MAX,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Waitfree => "waitfree",
            Algo::Lockfree => "lockfree",
            Algo::LockedOracle => "locked-oracle",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The sequential specification behind one global lock.
///
/// `set` carries no process id, so the object is told up front which
/// process writes. Protocol violations panic.
#[derive(Debug)]
pub struct LockedOracleVm {
    state: Mutex<OracleState>,
    writer: ProcessId,
}

impl LockedOracleVm {
    pub fn new(processes: usize, initial: DataHandle, writer: ProcessId) -> Self {
        LockedOracleVm {
            state: Mutex::new(OracleState::new(processes, initial)),
            writer,
        }
    }

    fn apply(&self, op: VmOp) -> VmResult {
        let mut s = self.state.lock().unwrap_or_else(|p| p.into_inner());
        match s.apply(op) {
            Ok(r) => r,
            Err(e) => panic!("locked oracle: {e}"),
        }
    }
}

impl VersionMaintenance for LockedOracleVm {
    fn processes(&self) -> usize {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).processes()
    }

    fn acquire_version(&self, k: ProcessId) -> (VersionId, DataHandle) {
        let mut s = self.state.lock().unwrap_or_else(|p| p.into_inner());
        match s.apply(VmOp::Acquire(k)) {
            Ok(VmResult::Data(d)) => (s.held_by(k).expect("just acquired"), d),
            Ok(r) => unreachable!("acquire returned {r:?}"),
            Err(e) => panic!("locked oracle: {e}"),
        }
    }

    fn release(&self, k: ProcessId) -> bool {
        match self.apply(VmOp::Release(k)) {
            VmResult::Released(b) => b,
            r => unreachable!("release returned {r:?}"),
        }
    }

    fn set(&self, d: DataHandle) {
        self.apply(VmOp::Set(self.writer, d));
    }

    fn occupied_slots(&self) -> usize {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).live_set().len()
    }
}

/// Builds the selected object with `inst` attached (ignored by the
/// locked oracle, whose writer is process 0).
pub fn build_vm<I: Instrument + 'static>(
    algo: Algo,
    processes: usize,
    initial: DataHandle,
    seed: u64,
    inst: I,
) -> Result<Box<dyn VersionMaintenance>, CapacityError> {
    Ok(match algo {
        Algo::Waitfree => Box::new(WaitFreeVm::with_instrument(processes, initial, inst)?),
        Algo::Lockfree => Box::new(LockFreeVm::with_instrument(processes, initial, seed, inst)?),
        Algo::LockedOracle => {
            if processes == 0 {
                return Err(CapacityError {
                    requested: 0,
                    max: usize::MAX,
                });
            }
            Box::new(LockedOracleVm::new(processes, initial, ProcessId(0)))
        }
    })
}
