//! Recorded version maintenance histories.

use alloc::vec::Vec;

use thiserror::Error;

use crate::oracle::{VmOp, VmResult};
use crate::version::ProcessId;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VmEventKind {
    Invoke(VmOp),
    Respond(VmResult),
}

/// One invocation or response, stamped from a global counter.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct VmEvent {
    pub seq: u64,
    pub process: ProcessId,
    pub kind: VmEventKind,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Error)]
pub enum HistoryError {
    #[error("event {seq}: {process} responds without a pending invocation")]
    OrphanResponse { seq: u64, process: ProcessId },
    #[error("event {seq}: {process} invokes while its previous operation is pending")]
    OverlappingInvocation { seq: u64, process: ProcessId },
    #[error("event {seq}: {process} invokes an operation naming another process")]
    ForeignOperation { seq: u64, process: ProcessId },
    #[error("event {seq}: sequence numbers must strictly increase")]
    Unordered { seq: u64 },
}

/// An invocation paired with its response, if any.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Operation {
    pub op: VmOp,
    pub invoked: u64,
    /// `None` for a pending operation.
    pub responded: Option<(u64, VmResult)>,
}

/// A history in global order.
#[derive(Clone, Default, PartialEq, Eq, Debug)]
pub struct VmHistory {
    events: Vec<VmEvent>,
}

impl VmHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// History from events in any order; they are sorted by `seq`.
    pub fn from_events(mut events: Vec<VmEvent>) -> Self {
        events.sort_by_key(|e| e.seq);
        VmHistory { events }
    }

    pub fn push(&mut self, event: VmEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[VmEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The first `n` events.
    pub fn prefix(&self, n: usize) -> VmHistory {
        VmHistory {
            events: self.events[..n.min(self.events.len())].to_vec(),
        }
    }

    /// Number of processes mentioned: one past the largest id.
    pub fn processes(&self) -> usize {
        self.events.iter().map(|e| e.process.get() + 1).max().unwrap_or(0)
    }

    /// Pairs invocations with responses, checking well-formedness.
    pub fn operations(&self) -> Result<Vec<Operation>, HistoryError> {
        let mut ops: Vec<Operation> = Vec::new();
        let mut pending: Vec<Option<usize>> = Vec::new();
        let mut last_seq = None;
        for e in &self.events {
            if last_seq.is_some_and(|s| e.seq <= s) {
                return Err(HistoryError::Unordered { seq: e.seq });
            }
            last_seq = Some(e.seq);
            let k = e.process.get();
            if pending.len() <= k {
                pending.resize(k + 1, None);
            }
            match e.kind {
                VmEventKind::Invoke(op) => {
                    if op.process() != e.process {
                        return Err(HistoryError::ForeignOperation { seq: e.seq, process: e.process });
                    }
                    if pending[k].is_some() {
                        return Err(HistoryError::OverlappingInvocation { seq: e.seq, process: e.process });
                    }
                    pending[k] = Some(ops.len());
                    ops.push(Operation {
                        op,
                        invoked: e.seq,
                        responded: None,
                    });
                }
                VmEventKind::Respond(result) => {
                    let i = pending[k]
                        .take()
                        .ok_or(HistoryError::OrphanResponse { seq: e.seq, process: e.process })?;
                    ops[i].responded = Some((e.seq, result));
                }
            }
        }
        Ok(ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::version::DataHandle;

    fn ev(seq: u64, k: usize, kind: VmEventKind) -> VmEvent {
        VmEvent {
            seq,
            process: ProcessId(k),
            kind,
        }
    }

    #[test]
    fn pairs_and_leaves_pending() {
        let h = VmHistory::from_events(vec![
            ev(2, 1, VmEventKind::Invoke(VmOp::Release(ProcessId(1)))),
            ev(0, 0, VmEventKind::Invoke(VmOp::Acquire(ProcessId(0)))),
            ev(1, 0, VmEventKind::Respond(VmResult::Data(DataHandle(3)))),
        ]);
        let ops = h.operations().unwrap();
        assert_eq!(ops.len(), 2);
        assert_eq!(ops[0].responded, Some((1, VmResult::Data(DataHandle(3)))));
        assert_eq!(ops[1].responded, None);
        assert_eq!(h.processes(), 2);
    }

    #[test]
    fn rejects_malformed() {
        let orphan = VmHistory::from_events(vec![ev(0, 0, VmEventKind::Respond(VmResult::Unit))]);
        assert!(matches!(orphan.operations(), Err(HistoryError::OrphanResponse { .. })));
        let overlap = VmHistory::from_events(vec![
            ev(0, 0, VmEventKind::Invoke(VmOp::Acquire(ProcessId(0)))),
            ev(1, 0, VmEventKind::Invoke(VmOp::Release(ProcessId(0)))),
        ]);
        assert!(matches!(overlap.operations(), Err(HistoryError::OverlappingInvocation { .. })));
        let foreign = VmHistory::from_events(vec![ev(0, 0, VmEventKind::Invoke(VmOp::Acquire(ProcessId(1))))]);
        assert!(matches!(foreign.operations(), Err(HistoryError::ForeignOperation { .. })));
        let mut dup = VmHistory::new();
        dup.push(ev(1, 0, VmEventKind::Invoke(VmOp::Acquire(ProcessId(0)))));
        dup.push(ev(1, 0, VmEventKind::Respond(VmResult::Unit)));
        assert!(matches!(dup.operations(), Err(HistoryError::Unordered { .. })));
    }
}
