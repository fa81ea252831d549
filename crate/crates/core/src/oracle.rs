//! Executable sequential specification of the version maintenance object.
//!
//! The concurrent objects in [`crate::waitfree`] and [`crate::lockfree`]
//! are correct when every history they produce can be reordered into a
//! sequence that this oracle accepts with the same results. The oracle also
//! checks the calling protocol (acquire/release alternation, single writer),
//! which the concurrent objects leave to their callers.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::version::{DataHandle, ProcessId, VersionId};

/// One operation applied to the object.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum VmOp {
    Acquire(ProcessId),
    Release(ProcessId),
    Set(ProcessId, DataHandle),
}

impl VmOp {
    pub fn process(&self) -> ProcessId {
        match *self {
            VmOp::Acquire(k) | VmOp::Release(k) | VmOp::Set(k, _) => k,
        }
    }
}

/// What an operation returned.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum VmResult {
    Data(DataHandle),
    Released(bool),
    Unit,
}

/// A broken calling protocol. This signals a faulty caller or test
/// generator, never a fault in the object itself.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Error)]
pub enum ProtocolViolation {
    #[error("process {0} is outside 0..{1}")]
    UnknownProcess(ProcessId, usize),
    #[error("{0} acquired while still holding a version")]
    AcquireWhileHolding(ProcessId),
    #[error("{0} released without a preceding acquire")]
    ReleaseWithoutAcquire(ProcessId),
    #[error("{0} called set outside an acquire/release pair")]
    SetOutsideAcquire(ProcessId),
    #[error("{0} called set while {1} has a write in flight")]
    ConcurrentWriter(ProcessId, ProcessId),
    #[error("{0} called set twice within one acquire/release pair")]
    DoubleSet(ProcessId),
    #[error("{0} called set while holding a superseded version")]
    StaleWriter(ProcessId),
}

/// State of the sequential object.
///
/// Only live versions keep an entry in the data map, so its key set is
/// exactly the live set.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OracleState {
    current: VersionId,
    data_of: BTreeMap<VersionId, DataHandle>,
    holds: Vec<Option<VersionId>>,
    /// Process whose acquire/set/release trio is in flight after its set.
    writer: Option<ProcessId>,
}

impl OracleState {
    /// Fresh object for `processes` processes whose current version
    /// `(0, 0)` carries `initial`.
    pub fn new(processes: usize, initial: DataHandle) -> Self {
        let current = VersionId::new(0, 0);
        let mut data_of = BTreeMap::new();
        data_of.insert(current, initial);
        OracleState {
            current,
            data_of,
            holds: vec![None; processes],
            writer: None,
        }
    }

    pub fn processes(&self) -> usize {
        self.holds.len()
    }

    pub fn current(&self) -> VersionId {
        self.current
    }

    /// Data of a live version.
    pub fn data_of(&self, v: VersionId) -> Option<DataHandle> {
        self.data_of.get(&v).copied()
    }

    pub fn held_by(&self, k: ProcessId) -> Option<VersionId> {
        self.holds.get(k.get()).copied().flatten()
    }

    /// `v` is live iff it is current or some process holds it.
    pub fn is_live(&self, v: VersionId) -> bool {
        !v.is_empty() && (v == self.current || self.holds.contains(&Some(v)))
    }

    pub fn live_set(&self) -> BTreeSet<VersionId> {
        let mut live: BTreeSet<VersionId> = self.holds.iter().flatten().copied().collect();
        live.insert(self.current);
        live
    }

    /// Applies `op`. On a protocol violation the state is left unchanged.
    pub fn apply(&mut self, op: VmOp) -> Result<VmResult, ProtocolViolation> {
        let k = op.process();
        if k.get() >= self.holds.len() {
            return Err(ProtocolViolation::UnknownProcess(k, self.holds.len()));
        }
        match op {
            VmOp::Acquire(k) => {
                if self.holds[k.get()].is_some() {
                    return Err(ProtocolViolation::AcquireWhileHolding(k));
                }
                self.holds[k.get()] = Some(self.current);
                Ok(VmResult::Data(self.data_of[&self.current]))
            }
            VmOp::Release(k) => {
                let v = self.holds[k.get()]
                    .take()
                    .ok_or(ProtocolViolation::ReleaseWithoutAcquire(k))?;
                if self.writer == Some(k) {
                    self.writer = None;
                }
                let dead = !self.is_live(v);
                if dead {
                    self.data_of.remove(&v);
                }
                Ok(VmResult::Released(dead))
            }
            VmOp::Set(k, d) => {
                let held = self.holds[k.get()].ok_or(ProtocolViolation::SetOutsideAcquire(k))?;
                match self.writer {
                    Some(w) if w == k => return Err(ProtocolViolation::DoubleSet(k)),
                    Some(w) => return Err(ProtocolViolation::ConcurrentWriter(k, w)),
                    None => {}
                }
                if held != self.current {
                    return Err(ProtocolViolation::StaleWriter(k));
                }
                let index = (0u32..)
                    .find(|i| !self.data_of.keys().any(|v| v.index == *i))
                    .expect("u32 index space exhausted");
                let fresh = VersionId::new(self.current.timestamp + 1, index);
                self.data_of.insert(fresh, d);
                self.current = fresh;
                self.writer = Some(k);
                Ok(VmResult::Unit)
            }
        }
    }
}
