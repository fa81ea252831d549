//! Single-writer transactions over a version maintenance object and a
//! tuple store.
//!
//! A read transaction acquires the current version, runs user code on its
//! root, releases, and collects the version if its release was the true
//! one. A write transaction additionally builds a new root in a private
//! [`CreationLog`], publishes it with `output`, and installs it with `set`
//! before releasing the version it started from. Write transactions are
//! serialized by an internal fair ticket lock; read transactions never
//! wait and never abort.
//!
//! With a [`TxnEventSink`] attached, every transaction reports its phases
//! as [`TxnEvent`]s stamped from one global sequence counter, which is what
//! the strict serializability checker consumes.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use thiserror::Error;

use crate::pad::CachePadded;
use crate::ptree::{self, TreeRoot, TreeView};
use crate::store::{CollectWork, CreationLog, StoreError, TaggedValue, TupleStore};
use crate::ticket::TicketLock;
use crate::version::{ProcessId, VersionId};
use crate::vm::VersionMaintenance;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Error)]
pub enum TxnError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("process {0} is outside 0..{1}")]
    UnknownProcess(usize, usize),
    #[error("process {0} is already running a transaction")]
    ProcessBusy(usize),
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum TxnEventKind {
    /// The state the runtime was built with; behaves as a commit that
    /// completed before everything else.
    Initial,
    ReadBegin,
    ReadVersionObserved,
    ReadRespond,
    ReadEnd,
    WriteBegin,
    /// Stamped immediately before `set`.
    WriteCommit,
    WriteEnd,
}

/// One phase boundary of one transaction.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TxnEvent {
    /// Global order index; unique across all events of a runtime.
    pub seq: u64,
    /// Transaction id: the `seq` of the transaction's first event.
    pub txn: u64,
    pub kind: TxnEventKind,
    pub process: ProcessId,
    /// The acquired version, from `ReadVersionObserved` on.
    pub version: Option<VersionId>,
    /// Reader answer digest on `ReadRespond`; committed state digest on
    /// `WriteCommit` and `Initial`.
    pub digest: Option<u64>,
}

/// Receiver of transaction events. Called concurrently from every
/// transaction thread.
pub trait TxnEventSink: Send + Sync {
    fn record(&self, event: TxnEvent);
}

impl<T: TxnEventSink + ?Sized> TxnEventSink for alloc::sync::Arc<T> {
    fn record(&self, event: TxnEvent) {
        (**self).record(event)
    }
}

/// Digest of a committed tree: the wrapping sum of its values.
pub fn sum_digest(store: &TupleStore, root: TreeRoot) -> u64 {
    ptree::total(store, root) as u64
}

pub struct TxnConfig {
    pub sink: Option<Box<dyn TxnEventSink>>,
    /// Digest recorded with each commit when a sink is attached.
    pub digest: fn(&TupleStore, TreeRoot) -> u64,
    /// When false, true releases do not collect (superseded versions leak).
    pub collect: bool,
    /// Called while a writer waits for the writer token.
    pub relax: fn(),
}

impl Default for TxnConfig {
    fn default() -> Self {
        TxnConfig {
            sink: None,
            digest: sum_digest,
            collect: true,
            relax: core::hint::spin_loop,
        }
    }
}

impl core::fmt::Debug for TxnConfig {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TxnConfig")
            .field("sink", &self.sink.is_some())
            .field("collect", &self.collect)
            .finish_non_exhaustive()
    }
}

/// What a read transaction observed and cleaned up.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ReadOutcome<A> {
    pub answer: A,
    pub version: VersionId,
    /// Collection performed because this read's release was the true one.
    pub collected: CollectWork,
    /// Tuples of the reader's private log freed at the end.
    pub local_freed: usize,
}

/// Result of a committed write transaction.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct CommitInfo {
    /// The version the writer started from (now superseded).
    pub superseded: VersionId,
    /// Occupied version slots right after `set`.
    pub live_after_set: usize,
    /// Tuples of the run phase freed by `output` as unreachable.
    pub orphans_freed: usize,
    /// Collection of the superseded version, when the writer's release was
    /// the true one.
    pub collected: CollectWork,
}

pub struct TxnRuntime<V> {
    vm: V,
    store: TupleStore,
    writer: TicketLock,
    busy: Vec<CachePadded<AtomicBool>>,
    seq: AtomicU64,
    commits: AtomicU64,
    cfg: TxnConfig,
}

impl<V: VersionMaintenance> core::fmt::Debug for TxnRuntime<V> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TxnRuntime")
            .field("processes", &self.vm.processes())
            .field("store", &self.store)
            .field("commits", &self.commits.load(Ordering::Relaxed))
            .field("cfg", &self.cfg)
            .finish()
    }
}

/// Clears a process's busy flag.
struct Claim<'a>(&'a AtomicBool);

impl Drop for Claim<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

/// Owns an acquired version until it is released, also on unwind.
struct Session<'a, V: VersionMaintenance> {
    rt: &'a TxnRuntime<V>,
    k: ProcessId,
    root: TreeRoot,
    log: CreationLog,
    /// Output but not yet installed.
    unpublished: Option<TreeRoot>,
    armed: bool,
}

impl<V: VersionMaintenance> Session<'_, V> {
    fn finish(&mut self) -> (CollectWork, usize) {
        self.armed = false;
        let local_freed = self.rt.store.discard(&mut self.log);
        if let Some(r) = self.unpublished.take() {
            self.rt.store.collect(r);
        }
        let mut work = CollectWork::default();
        if self.rt.vm.release(self.k) && self.rt.cfg.collect {
            work = self.rt.store.collect_with_work(self.root);
        }
        (work, local_freed)
    }
}

impl<V: VersionMaintenance> Drop for Session<'_, V> {
    fn drop(&mut self) {
        if self.armed {
            self.finish();
        }
    }
}

impl<V: VersionMaintenance> TxnRuntime<V> {
    /// Builds the initial tree with `init`, then the version maintenance
    /// object around its root with `make_vm`.
    pub fn build<E>(
        store: TupleStore,
        cfg: TxnConfig,
        init: impl FnOnce(&TupleStore, &mut CreationLog) -> Result<TreeRoot, StoreError>,
        make_vm: impl FnOnce(crate::version::DataHandle) -> Result<V, E>,
    ) -> Result<Self, E>
    where
        E: From<StoreError>,
    {
        let mut log = CreationLog::new();
        let root = match init(&store, &mut log) {
            Ok(r) => r,
            Err(e) => {
                store.discard(&mut log);
                return Err(e.into());
            }
        };
        let root = store.output(root, &mut log)?.root;
        let vm = match make_vm(root.to_root_handle()) {
            Ok(vm) => vm,
            Err(e) => {
                store.collect(root);
                return Err(e);
            }
        };
        let busy = (0..vm.processes())
            .map(|_| CachePadded(AtomicBool::new(false)))
            .collect();
        let rt = TxnRuntime {
            vm,
            store,
            writer: TicketLock::new(),
            busy,
            seq: AtomicU64::new(0),
            commits: AtomicU64::new(0),
            cfg,
        };
        if rt.cfg.sink.is_some() {
            let digest = (rt.cfg.digest)(&rt.store, root);
            let seq = rt.stamp();
            rt.emit(seq, seq, TxnEventKind::Initial, ProcessId(0), None, Some(digest));
        }
        Ok(rt)
    }

    pub fn vm(&self) -> &V {
        &self.vm
    }

    pub fn store(&self) -> &TupleStore {
        &self.store
    }

    pub fn processes(&self) -> usize {
        self.vm.processes()
    }

    /// Number of committed write transactions.
    pub fn commits(&self) -> u64 {
        self.commits.load(Ordering::Relaxed)
    }

    pub fn collects(&self) -> bool {
        self.cfg.collect
    }

    fn try_claim(&self, k: ProcessId) -> Result<Claim<'_>, TxnError> {
        let flag = self
            .busy
            .get(k.get())
            .ok_or(TxnError::UnknownProcess(k.get(), self.busy.len()))?;
        if flag.swap(true, Ordering::Acquire) {
            return Err(TxnError::ProcessBusy(k.get()));
        }
        Ok(Claim(flag))
    }

    fn claim(&self, k: ProcessId) -> Claim<'_> {
        match self.try_claim(k) {
            Ok(c) => c,
            Err(e) => panic!("{e}"),
        }
    }

    #[inline]
    fn stamp(&self) -> u64 {
        self.seq.fetch_add(1, Ordering::SeqCst)
    }

    #[inline]
    fn emit(
        &self,
        seq: u64,
        txn: u64,
        kind: TxnEventKind,
        process: ProcessId,
        version: Option<VersionId>,
        digest: Option<u64>,
    ) {
        if let Some(sink) = &self.cfg.sink {
            sink.record(TxnEvent {
                seq,
                txn,
                kind,
                process,
                version,
                digest,
            });
        }
    }

    /// Stamps and emits; returns the stamp (0 without a sink).
    #[inline]
    fn event(
        &self,
        txn: Option<u64>,
        kind: TxnEventKind,
        k: ProcessId,
        version: Option<VersionId>,
        digest: Option<u64>,
    ) -> u64 {
        if self.cfg.sink.is_none() {
            return 0;
        }
        let seq = self.stamp();
        self.emit(seq, txn.unwrap_or(seq), kind, k, version, digest);
        seq
    }

    fn read_inner<A>(
        &self,
        k: ProcessId,
        f: impl FnOnce(&TupleStore, TreeRoot, &mut CreationLog) -> (A, Option<u64>),
    ) -> ReadOutcome<A> {
        let _claim = self.claim(k);
        let txn = self.event(None, TxnEventKind::ReadBegin, k, None, None);
        let (version, data) = self.vm.acquire_version(k);
        let mut session = Session {
            rt: self,
            k,
            root: TaggedValue::from_root_handle(data),
            log: CreationLog::new(),
            unpublished: None,
            armed: true,
        };
        self.event(Some(txn), TxnEventKind::ReadVersionObserved, k, Some(version), None);
        let (answer, digest) = f(&self.store, session.root, &mut session.log);
        self.event(Some(txn), TxnEventKind::ReadRespond, k, Some(version), digest);
        let (collected, local_freed) = session.finish();
        self.event(Some(txn), TxnEventKind::ReadEnd, k, Some(version), None);
        ReadOutcome {
            answer,
            version,
            collected,
            local_freed,
        }
    }

    /// Runs `f` on the current tree as process `k`.
    ///
    /// Panics if `k` is out of range or already inside a transaction. If
    /// `f` panics, the version is still released (and collected when due)
    /// before the panic continues.
    pub fn read_txn<A>(&self, k: ProcessId, f: impl FnOnce(TreeView<'_>) -> A) -> A {
        self.read_inner(k, |s, r, _| (f(TreeView::new(s, r)), None))
            .answer
    }

    /// Like [`read_txn`](Self::read_txn); `f` also returns a digest of its
    /// answer, recorded for the serializability checker.
    pub fn read_txn_digest<A>(
        &self,
        k: ProcessId,
        f: impl FnOnce(TreeView<'_>) -> (A, u64),
    ) -> ReadOutcome<A> {
        self.read_inner(k, |s, r, _| {
            let (a, d) = f(TreeView::new(s, r));
            (a, Some(d))
        })
    }

    /// A read transaction that may build private versions from the acquired
    /// root. Everything created in `log` is freed when `f` returns.
    pub fn read_txn_local<A>(
        &self,
        k: ProcessId,
        f: impl FnOnce(&TupleStore, TreeRoot, &mut CreationLog) -> A,
    ) -> ReadOutcome<A> {
        self.read_inner(k, |s, r, log| (f(s, r, log), None))
    }

    /// Runs `f` on the current tree as process `k` and installs the root it
    /// returns. `f` must return `Nil` or a tuple it created in `log`.
    ///
    /// On error nothing is published, the run phase's tuples are freed, and
    /// the acquired version is released as in a read.
    pub fn write_txn(
        &self,
        k: ProcessId,
        f: impl FnOnce(&TupleStore, TreeRoot, &mut CreationLog) -> Result<TreeRoot, StoreError>,
    ) -> Result<CommitInfo, TxnError> {
        let _claim = self.try_claim(k)?;
        let _token = self.writer.lock(self.cfg.relax);
        let txn = self.event(None, TxnEventKind::WriteBegin, k, None, None);
        let (version, data) = self.vm.acquire_version(k);
        let mut session = Session {
            rt: self,
            k,
            root: TaggedValue::from_root_handle(data),
            log: CreationLog::new(),
            unpublished: None,
            armed: true,
        };
        let published = f(&self.store, session.root, &mut session.log)
            .and_then(|root| self.store.output(root, &mut session.log));
        let published = match published {
            Ok(p) => p,
            Err(e) => {
                session.finish();
                self.event(Some(txn), TxnEventKind::WriteEnd, k, Some(version), None);
                return Err(e.into());
            }
        };
        session.unpublished = Some(published.root);
        let digest = self
            .cfg
            .sink
            .as_ref()
            .map(|_| (self.cfg.digest)(&self.store, published.root));
        self.event(Some(txn), TxnEventKind::WriteCommit, k, Some(version), digest);
        self.vm.set(published.root.to_root_handle());
        session.unpublished = None;
        self.commits.fetch_add(1, Ordering::Relaxed);
        let live_after_set = self.vm.occupied_slots();
        let (collected, _) = session.finish();
        self.event(Some(txn), TxnEventKind::WriteEnd, k, Some(version), None);
        Ok(CommitInfo {
            superseded: version,
            live_after_set,
            orphans_freed: published.orphans_freed,
            collected,
        })
    }

    /// Root of the current version, read as process 0. Requires that no
    /// transaction is running.
    pub fn quiescent_root(&self) -> Result<TreeRoot, TxnError> {
        if let Some(k) = self.busy.iter().position(|b| b.load(Ordering::Acquire)) {
            return Err(TxnError::ProcessBusy(k));
        }
        let k = ProcessId(0);
        let _claim = self.try_claim(k)?;
        let root = TaggedValue::from_root_handle(self.vm.acquire(k));
        let released = self.vm.release(k);
        debug_assert!(!released, "the current version cannot die on a read");
        Ok(root)
    }

    /// Index of a process that is inside a transaction, if any.
    pub fn busy_process(&self) -> Option<ProcessId> {
        self.busy
            .iter()
            .position(|b| b.load(Ordering::Acquire))
            .map(ProcessId)
    }
}
