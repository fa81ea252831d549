//! Offline checkers: linearizability of version maintenance histories,
//! strict serializability of transaction histories, and reclamation
//! audits of a tuple store.

mod audit;
mod history;
mod lincheck;
mod serial;

use alloc::vec::Vec;

use thiserror::Error;

pub use audit::{audit_store, reclamation_audit, AuditReport};
pub use history::{HistoryError, Operation, VmEvent, VmEventKind, VmHistory};
pub use lincheck::{check_linearizable, check_linearizable_bounded, DEFAULT_OP_BOUND};
pub use serial::{check_strict_serializable, CommitLog, CompletedRead, ReadMatch, ReadViolation};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Pass,
    Fail,
}

/// Evidence behind a verdict.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Witness {
    /// Operation indices (into [`VmHistory::operations`]) in an order the
    /// sequential object accepts. Pending operations left out took no
    /// effect.
    Linearization(Vec<usize>),
    /// The shortest prefix of the history that is already not
    /// linearizable. Replays through the checker to the same verdict.
    ViolatingPrefix(VmHistory),
    /// For each completed read, the commit its answer matched.
    Serialization(Vec<ReadMatch>),
    /// A read whose answer matched no commit of its real-time window.
    UnmatchedRead(ReadViolation),
    /// Store contents compared with what the roots reach.
    Reclamation(AuditReport),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub witness: Witness,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// The checker declined to run.
#[derive(Clone, PartialEq, Eq, Debug, Error)]
pub enum CheckError {
    #[error("history has {ops} operations; the exhaustive checker is bounded at {bound}")]
    TooLarge { ops: usize, bound: usize },
    #[error(transparent)]
    Malformed(#[from] HistoryError),
    #[error("transaction {txn} has no recorded digest")]
    MissingDigest { txn: u64 },
    #[error("no initial state digest in the transaction history")]
    NoInitialState,
    #[error("process {0} is still inside a transaction")]
    NotQuiescent(usize),
}
