//! Snapshot toolkit for one writer and many readers.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the algorithmic
//! core:
//!
//! * [`waitfree`] and [`lockfree`]: two concurrent implementations of the
//!   version maintenance object (`acquire` / `release` / `set`).
//! * [`oracle`]: the sequential specification of that object, executable.
//! * [`store`]: reference-counted immutable tuples with precise reclamation.
//! * [`ptree`]: a path-copied, sum-augmented treap built from tuples.
//! * [`txn`]: read and write transactions combining the pieces above.
//! * [`verify`]: linearizability, strict serializability and reclamation
//!   checkers used by tests and by the `verso` harness.
#![cfg_attr(not(test), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod instrument;
pub mod lockfree;
pub mod mix;
pub mod oracle;
pub mod ptree;
pub mod store;
pub mod txn;
pub mod verify;
pub mod version;
pub mod vm;
pub mod waitfree;
mod pad;
mod ticket;

pub use instrument::{CounterSnapshot, Instrument, NoInstrument, StepCounters};
pub use lockfree::LockFreeVm;
pub use oracle::{OracleState, ProtocolViolation, VmOp, VmResult};
pub use store::{CreationLog, StoreError, StoreStats, TaggedValue, TupleHandle, TupleStore};
pub use txn::{CommitInfo, ReadOutcome, TxnConfig, TxnError, TxnEvent, TxnEventKind, TxnEventSink, TxnRuntime};
pub use version::{DataHandle, ProcessId, VersionId};
pub use vm::{CapacityError, VersionMaintenance};
pub use waitfree::WaitFreeVm;
