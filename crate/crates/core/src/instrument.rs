//! Step and contention instrumentation for the version maintenance objects.
//!
//! The objects are generic over an [`Instrument`]. With [`NoInstrument`]
//! every hook is a no-op and the per-call tallies compile away, so the
//! uninstrumented object performs exactly the shared accesses of the
//! algorithm. [`StepCounters`] records per-call shared-access counts,
//! CAS outcomes, and CAS traffic on each announcement slot.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::pad::CachePadded;
use crate::version::ProcessId;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpClass {
    Acquire,
    Release,
    Set,
}

/// Observer of one object's shared-memory traffic.
pub trait Instrument: Send + Sync {
    /// When false, call sites skip all tallying.
    const ENABLED: bool;

    /// Runs before every shared-memory access of an instrumented object.
    /// Schedulers hook in here to inject yields or step operations.
    #[inline]
    fn before_access(&self) {}

    /// Completion of one operation with its local tallies.
    #[inline]
    fn on_op(&self, _class: OpClass, _k: Option<ProcessId>, _tally: &Tally) {}

    /// A CAS (successful or not) on announcement slot `slot`.
    #[inline]
    fn on_announcement_cas(&self, _slot: usize) {}

    /// Current totals, for instruments that keep any.
    fn snapshot(&self) -> Option<CounterSnapshot> {
        None
    }
}

/// Instrumentation switched off.
#[derive(Clone, Copy, Default, Debug)]
pub struct NoInstrument;

impl Instrument for NoInstrument {
    const ENABLED: bool = false;
}

/// Per-call counts kept on the caller's stack.
#[derive(Clone, Copy, Default, Debug, PartialEq, Eq)]
pub struct Tally {
    pub accesses: u32,
    pub failed_cas: u32,
    pub successful_cas: u32,
}

/// Tally bound to an instrument for the duration of one call.
pub(crate) struct Probe<'a, I: Instrument> {
    inst: &'a I,
    pub(crate) tally: Tally,
}

impl<'a, I: Instrument> Probe<'a, I> {
    #[inline]
    pub(crate) fn new(inst: &'a I) -> Self {
        Probe {
            inst,
            tally: Tally::default(),
        }
    }

    #[inline]
    pub(crate) fn access(&mut self) {
        if I::ENABLED {
            self.inst.before_access();
            self.tally.accesses += 1;
        }
    }

    /// Accounts for a CAS that has already been counted as an access.
    #[inline]
    pub(crate) fn cas(&mut self, ok: bool) {
        if I::ENABLED {
            if ok {
                self.tally.successful_cas += 1;
            } else {
                self.tally.failed_cas += 1;
            }
        }
    }

    #[inline]
    pub(crate) fn announcement_cas(&self, slot: usize) {
        if I::ENABLED {
            self.inst.on_announcement_cas(slot);
        }
    }

    #[inline]
    pub(crate) fn finish(self, class: OpClass, k: Option<ProcessId>) {
        if I::ENABLED {
            self.inst.on_op(class, k, &self.tally);
        }
    }
}

#[derive(Debug, Default)]
struct OpCounters {
    calls: AtomicU64,
    total_accesses: AtomicU64,
    max_accesses: AtomicU64,
    failed_cas: AtomicU64,
    successful_cas: AtomicU64,
}

impl OpCounters {
    fn record(&self, t: &Tally) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.total_accesses
            .fetch_add(u64::from(t.accesses), Ordering::Relaxed);
        self.max_accesses
            .fetch_max(u64::from(t.accesses), Ordering::Relaxed);
        self.failed_cas
            .fetch_add(u64::from(t.failed_cas), Ordering::Relaxed);
        self.successful_cas
            .fetch_add(u64::from(t.successful_cas), Ordering::Relaxed);
    }

    fn add_to(&self, s: &mut OpStats) {
        s.calls += self.calls.load(Ordering::Relaxed);
        s.total_accesses += self.total_accesses.load(Ordering::Relaxed);
        s.max_accesses = s.max_accesses.max(self.max_accesses.load(Ordering::Relaxed));
        s.failed_cas += self.failed_cas.load(Ordering::Relaxed);
        s.successful_cas += self.successful_cas.load(Ordering::Relaxed);
    }
}

#[derive(Debug, Default)]
struct Shard {
    acquire: OpCounters,
    release: OpCounters,
    set: OpCounters,
}

/// Counting instrument. Counters are sharded per process (plus one shard
/// for `set`), so counting adds no cross-process cache traffic beyond the
/// announcement slot tallies.
#[derive(Debug)]
pub struct StepCounters {
    shards: Vec<CachePadded<Shard>>,
    announcement_cas: Vec<CachePadded<AtomicU64>>,
}

impl StepCounters {
    pub fn new(processes: usize) -> Self {
        StepCounters {
            shards: (0..=processes).map(|_| CachePadded(Shard::default())).collect(),
            announcement_cas: (0..processes).map(|_| CachePadded(AtomicU64::new(0))).collect(),
        }
    }

    fn shard(&self, k: Option<ProcessId>) -> &Shard {
        let last = self.shards.len() - 1;
        &self.shards[k.map_or(last, |k| k.get().min(last))]
    }

    pub fn totals(&self) -> CounterSnapshot {
        let mut snap = CounterSnapshot::default();
        for shard in &self.shards {
            shard.acquire.add_to(&mut snap.acquire);
            shard.release.add_to(&mut snap.release);
            shard.set.add_to(&mut snap.set);
        }
        snap.acquires_by_process = self.shards[..self.announcement_cas.len()]
            .iter()
            .map(|s| s.acquire.calls.load(Ordering::Relaxed))
            .collect();
        snap.announcement_cas = self
            .announcement_cas
            .iter()
            .map(|a| a.load(Ordering::Relaxed))
            .collect();
        snap
    }
}

impl Instrument for StepCounters {
    const ENABLED: bool = true;

    fn on_op(&self, class: OpClass, k: Option<ProcessId>, tally: &Tally) {
        let shard = self.shard(k);
        match class {
            OpClass::Acquire => shard.acquire.record(tally),
            OpClass::Release => shard.release.record(tally),
            OpClass::Set => shard.set.record(tally),
        }
    }

    fn on_announcement_cas(&self, slot: usize) {
        self.announcement_cas[slot].fetch_add(1, Ordering::Relaxed);
    }

    fn snapshot(&self) -> Option<CounterSnapshot> {
        Some(self.totals())
    }
}

/// Totals for one operation class.
#[derive(Clone, Copy, Default, Debug, PartialEq, Eq)]
pub struct OpStats {
    pub calls: u64,
    pub total_accesses: u64,
    pub max_accesses: u64,
    pub failed_cas: u64,
    pub successful_cas: u64,
}

/// Plain copy of a [`StepCounters`].
#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub acquire: OpStats,
    pub release: OpStats,
    pub set: OpStats,
    pub acquires_by_process: Vec<u64>,
    pub announcement_cas: Vec<u64>,
}

impl CounterSnapshot {
    /// Slots whose CAS traffic exceeds `8 x` their owner's acquires.
    pub fn announcement_budget_violations(&self) -> Vec<usize> {
        self.announcement_cas
            .iter()
            .zip(&self.acquires_by_process)
            .enumerate()
            .filter(|(_, (cas, acq))| **cas > 8 * **acq)
            .map(|(k, _)| k)
            .collect()
    }
}

impl<T: Instrument> Instrument for alloc::sync::Arc<T> {
    const ENABLED: bool = T::ENABLED;

    #[inline]
    fn before_access(&self) {
        (**self).before_access()
    }

    #[inline]
    fn on_op(&self, class: OpClass, k: Option<ProcessId>, tally: &Tally) {
        (**self).on_op(class, k, tally)
    }

    #[inline]
    fn on_announcement_cas(&self, slot: usize) {
        (**self).on_announcement_cas(slot)
    }

    fn snapshot(&self) -> Option<CounterSnapshot> {
        (**self).snapshot()
    }
}
