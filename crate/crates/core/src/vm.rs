//! The version maintenance interface.

use thiserror::Error;

use crate::instrument::CounterSnapshot;
use crate::version::{DataHandle, ProcessId, VersionId};

/// Requested process count does not fit the packed slot index.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Error)]
#[error("{requested} processes requested, at most {max} supported (and at least 1)")]
pub struct CapacityError {
    pub requested: usize,
    pub max: usize,
}

/// A single-writer version maintenance object shared by `P` processes.
///
/// Callers must alternate `acquire(k)` / `release(k)` per process, and
/// only one process at a time may call `set`, between its own acquire and
/// release of the current version. Implementations do not check this.
pub trait VersionMaintenance: Send + Sync {
    fn processes(&self) -> usize;

    /// Reserves the current version for `k` and returns its data.
    fn acquire(&self, k: ProcessId) -> DataHandle {
        self.acquire_version(k).1
    }

    /// Like [`acquire`](Self::acquire), also naming the reserved version.
    fn acquire_version(&self, k: ProcessId) -> (VersionId, DataHandle);

    /// Ends `k`'s reservation. Returns true exactly when the version stops
    /// being live here; the caller then owns its reclamation.
    fn release(&self, k: ProcessId) -> bool;

    /// Installs `d` as the data of a fresh current version.
    fn set(&self, d: DataHandle);

    /// Number of occupied status slots, i.e. versions not yet reclaimed.
    /// Not linearizable; meant for the writer's sampling.
    fn occupied_slots(&self) -> usize;

    /// Instrumentation totals, when the object carries counters.
    fn counters(&self) -> Option<CounterSnapshot> {
        None
    }
}

macro_rules! forward_vm {
    ($($ptr:ident)::+) => {
        impl<T: VersionMaintenance + ?Sized> VersionMaintenance for $($ptr)::+<T> {
            fn processes(&self) -> usize {
                (**self).processes()
            }

            fn acquire(&self, k: ProcessId) -> DataHandle {
                (**self).acquire(k)
            }

            fn acquire_version(&self, k: ProcessId) -> (VersionId, DataHandle) {
                (**self).acquire_version(k)
            }

            fn release(&self, k: ProcessId) -> bool {
                (**self).release(k)
            }

            fn set(&self, d: DataHandle) {
                (**self).set(d)
            }

            fn occupied_slots(&self) -> usize {
                (**self).occupied_slots()
            }

            fn counters(&self) -> Option<CounterSnapshot> {
                (**self).counters()
            }
        }
    };
}

forward_vm!(alloc::boxed::Box);
forward_vm!(alloc::sync::Arc);
