//! Lock-free version maintenance with a counted status table.
//!
//! Each of the `2P` status slots holds `<version, count>` where `count` is
//! the number of processes that acquired the version and have not released
//! it. `acquire` retries its increment until it lands on the version it
//! read from `V`, so it is only lock-free: a fast writer can starve it.
//! `set` probes linearly from a random start for a free slot; with at most
//! `P + 1` live versions in `2P` slots a probe is expected to be short.

use alloc::boxed::Box;
use core::sync::atomic::{AtomicU64, Ordering::SeqCst};

use crate::instrument::{CounterSnapshot, Instrument, NoInstrument, OpClass, Probe};
use crate::mix::SharedSplitMix;
use crate::pad::CachePadded;
use crate::version::{DataHandle, ProcessId, VersionId};
use crate::vm::{CapacityError, VersionMaintenance};

/// `2P` slots must be addressable by the 8-bit packed index.
pub const MAX_PROCESSES: usize = 128;

const TS_BITS: u32 = 40;
const TS_MASK: u64 = (1 << TS_BITS) - 1;
const INDEX_MASK: u64 = 0xff;
const COUNT_SHIFT: u32 = 48;

/// `count (16) | index (8) | timestamp (40)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct CountedStatus(u64);

impl CountedStatus {
    const FREE: CountedStatus = CountedStatus((INDEX_MASK << TS_BITS) | TS_MASK);

    #[inline]
    fn new(v: VersionId, count: u16) -> Self {
        CountedStatus((u64::from(count) << COUNT_SHIFT) | pack(v))
    }

    #[inline]
    fn version(self) -> VersionId {
        unpack(self.0)
    }

    #[inline]
    fn count(self) -> u16 {
        (self.0 >> COUNT_SHIFT) as u16
    }
}

#[inline]
fn pack(v: VersionId) -> u64 {
    if v.is_empty() {
        return (INDEX_MASK << TS_BITS) | TS_MASK;
    }
    debug_assert!(v.timestamp < TS_MASK, "timestamp overflow");
    (u64::from(v.index) << TS_BITS) | v.timestamp
}

#[inline]
fn unpack(w: u64) -> VersionId {
    let index = (w >> TS_BITS) & INDEX_MASK;
    let ts = w & TS_MASK;
    if index == INDEX_MASK && ts == TS_MASK {
        VersionId::EMPTY
    } else {
        VersionId::new(ts, index as u32)
    }
}

/// The lock-free version maintenance object.
pub struct LockFreeVm<I: Instrument = NoInstrument> {
    current: CachePadded<AtomicU64>,
    status: Box<[CachePadded<AtomicU64>]>,
    data: Box<[CachePadded<AtomicU64>]>,
    /// Last version acquired by each process; written only by its owner.
    last: Box<[CachePadded<AtomicU64>]>,
    rng: SharedSplitMix,
    inst: I,
}

impl<I: Instrument> core::fmt::Debug for LockFreeVm<I> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("LockFreeVm")
            .field("processes", &self.last.len())
            .field("current", &unpack(self.current.load(SeqCst)))
            .finish_non_exhaustive()
    }
}

impl LockFreeVm<NoInstrument> {
    pub fn new(processes: usize, initial: DataHandle, seed: u64) -> Result<Self, CapacityError> {
        Self::with_instrument(processes, initial, seed, NoInstrument)
    }
}

impl<I: Instrument> LockFreeVm<I> {
    /// Object for `processes` processes whose version `(0, 0)` carries
    /// `initial`; `seed` drives the writer's probe start positions.
    pub fn with_instrument(processes: usize, initial: DataHandle, seed: u64, inst: I) -> Result<Self, CapacityError> {
        if processes == 0 || processes > MAX_PROCESSES {
            return Err(CapacityError {
                requested: processes,
                max: MAX_PROCESSES,
            });
        }
        let words = |n: usize, init: u64| -> Box<[CachePadded<AtomicU64>]> {
            (0..n).map(|_| CachePadded(AtomicU64::new(init))).collect()
        };
        let v0 = VersionId::new(0, 0);
        let status = words(2 * processes, CountedStatus::FREE.0);
        status[0].store(CountedStatus::new(v0, 0).0, SeqCst);
        let data = words(2 * processes, 0);
        data[0].store(initial.0, SeqCst);
        Ok(LockFreeVm {
            current: CachePadded(AtomicU64::new(pack(v0))),
            status,
            data,
            last: words(processes, pack(VersionId::EMPTY)),
            rng: SharedSplitMix::new(seed),
            inst,
        })
    }

    pub fn instrument(&self) -> &I {
        &self.inst
    }

    pub fn slots(&self) -> usize {
        self.status.len()
    }

    #[inline]
    fn load_status(&self, slot: usize, probe: &mut Probe<'_, I>) -> CountedStatus {
        probe.access();
        CountedStatus(self.status[slot].load(SeqCst))
    }

    #[inline]
    fn cas_status(&self, slot: usize, old: CountedStatus, new: CountedStatus, probe: &mut Probe<'_, I>) -> bool {
        probe.access();
        let ok = self.status[slot]
            .compare_exchange(old.0, new.0, SeqCst, SeqCst)
            .is_ok();
        probe.cas(ok);
        ok
    }

    fn acquire_inner(&self, k: usize, probe: &mut Probe<'_, I>) -> (VersionId, DataHandle) {
        let v = loop {
            probe.access();
            let v = unpack(self.current.load(SeqCst));
            let slot = v.index as usize;
            let s = self.load_status(slot, probe);
            let count = s.count();
            if self.cas_status(
                slot,
                CountedStatus::new(v, count),
                CountedStatus::new(v, count + 1),
                probe,
            ) {
                break v;
            }
        };
        probe.access();
        self.last[k].store(pack(v), SeqCst);
        probe.access();
        (v, DataHandle(self.data[v.index as usize].load(SeqCst)))
    }

    fn release_inner(&self, k: usize, probe: &mut Probe<'_, I>) -> bool {
        probe.access();
        let v = unpack(self.last[k].load(SeqCst));
        debug_assert!(!v.is_empty(), "release({k}) without a preceding acquire");
        let slot = v.index as usize;
        let mut last;
        loop {
            let s = self.load_status(slot, probe);
            debug_assert_eq!(s.version(), v, "held version left its slot");
            debug_assert!(s.count() > 0, "count underflow");
            last = s.count() == 1;
            if self.cas_status(slot, s, CountedStatus::new(s.version(), s.count() - 1), probe) {
                break;
            }
        }
        probe.access();
        if v == unpack(self.current.load(SeqCst)) || !last {
            return false;
        }
        let s = self.load_status(slot, probe);
        if s != CountedStatus::new(v, 0) {
            return false;
        }
        self.cas_status(slot, s, CountedStatus::FREE, probe)
    }

    fn find_free(&self, probe: &mut Probe<'_, I>) -> usize {
        let n = self.status.len();
        let mut slot = self.rng.below(n);
        for _ in 0..n {
            if self.load_status(slot, probe) == CountedStatus::FREE {
                return slot;
            }
            slot = (slot + 1) % n;
        }
        panic!("no free status slot: more than P + 1 versions are live");
    }

    fn set_inner(&self, d: DataHandle, probe: &mut Probe<'_, I>) {
        let slot = self.find_free(probe);
        probe.access();
        let base = unpack(self.current.load(SeqCst));
        let v = VersionId::new(base.timestamp + 1, slot as u32);
        probe.access();
        self.status[slot].store(CountedStatus::new(v, 0).0, SeqCst);
        probe.access();
        self.data[slot].store(d.0, SeqCst);
        probe.access();
        self.current.store(pack(v), SeqCst);
    }
}

impl<I: Instrument> VersionMaintenance for LockFreeVm<I> {
    fn processes(&self) -> usize {
        self.last.len()
    }

    fn acquire_version(&self, k: ProcessId) -> (VersionId, DataHandle) {
        let mut probe = Probe::new(&self.inst);
        let out = self.acquire_inner(k.get(), &mut probe);
        probe.finish(OpClass::Acquire, Some(k));
        out
    }

    fn release(&self, k: ProcessId) -> bool {
        let mut probe = Probe::new(&self.inst);
        let out = self.release_inner(k.get(), &mut probe);
        probe.finish(OpClass::Release, Some(k));
        out
    }

    fn set(&self, d: DataHandle) {
        let mut probe = Probe::new(&self.inst);
        self.set_inner(d, &mut probe);
        probe.finish(OpClass::Set, None);
    }

    fn occupied_slots(&self) -> usize {
        self.status
            .iter()
            .filter(|s| CountedStatus(s.load(SeqCst)) != CountedStatus::FREE)
            .count()
    }

    fn counters(&self) -> Option<CounterSnapshot> {
        self.inst.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::StepCounters;
    use proptest::prelude::*;

    const D0: DataHandle = DataHandle(7);

    fn p(k: usize) -> ProcessId {
        ProcessId(k)
    }

    proptest! {
        #[test]
        fn packing_round_trips(ts in 0u64..TS_MASK, index in 0u32..256, count: u16) {
            let s = CountedStatus::new(VersionId::new(ts, index), count);
            prop_assert_eq!(s.version(), VersionId::new(ts, index));
            prop_assert_eq!(s.count(), count);
        }
    }

    #[test]
    fn construction() {
        let vm = LockFreeVm::new(4, D0, 1).unwrap();
        assert_eq!(vm.acquire(p(0)), D0);
        assert_eq!(LockFreeVm::new(1, D0, 1).unwrap().slots(), 2);
        assert_eq!(
            LockFreeVm::new(300, D0, 1).unwrap_err(),
            CapacityError { requested: 300, max: 128 }
        );
        assert!(LockFreeVm::new(128, D0, 1).is_ok());
        assert_eq!(CountedStatus::FREE.version(), VersionId::EMPTY);
    }

    #[test]
    fn release_semantics() {
        let vm = LockFreeVm::new(2, D0, 3).unwrap();
        vm.acquire(p(0));
        assert!(!vm.release(p(0)));

        vm.acquire(p(0));
        vm.set(DataHandle(8));
        assert!(vm.release(p(0)));
        assert_eq!(vm.acquire(p(1)), DataHandle(8));
        assert!(!vm.release(p(1)));
    }

    #[test]
    fn set_increments_timestamp() {
        let vm = LockFreeVm::new(3, D0, 9).unwrap();
        vm.set(DataHandle(1));
        let (v, d) = vm.acquire_version(p(0));
        assert_eq!((v.timestamp, d), (1, DataHandle(1)));
    }

    #[test]
    fn counts_track_holders() {
        let vm = LockFreeVm::new(3, D0, 5).unwrap();
        vm.acquire(p(0));
        vm.acquire(p(1));
        assert_eq!(CountedStatus(vm.status[0].load(SeqCst)).count(), 2);
        vm.set(DataHandle(1));
        assert!(!vm.release(p(1)));
        assert_eq!(CountedStatus(vm.status[0].load(SeqCst)).count(), 1);
        assert!(vm.release(p(0)));
        assert_eq!(CountedStatus(vm.status[0].load(SeqCst)), CountedStatus::FREE);
    }

    #[test]
    fn occupancy_stays_bounded_over_many_writes() {
        let processes = 4;
        let vm = LockFreeVm::new(processes, D0, 11).unwrap();
        let mut holding = vec![false; processes];
        let mut max_occupied = 0;
        for round in 1..=1000u64 {
            // Readers pile onto a few versions, then drain.
            let reader = 1 + (round as usize % (processes - 1));
            vm.acquire(p(0));
            if round % 3 == 0 && !holding[reader] {
                vm.acquire(p(reader));
                holding[reader] = true;
            }
            vm.set(DataHandle(round));
            vm.release(p(0));
            max_occupied = max_occupied.max(vm.occupied_slots());
            if round % 7 == 0 {
                for (r, held) in holding.iter_mut().enumerate().skip(1) {
                    if std::mem::take(held) {
                        vm.release(p(r));
                    }
                }
            }
        }
        assert!(max_occupied <= processes + 1, "occupancy {max_occupied}");
    }

    #[test]
    fn probe_terminates_with_readers_on_p_versions() {
        let processes = 6;
        let vm = LockFreeVm::with_instrument(processes, D0, 13, StepCounters::new(processes)).unwrap();
        // Readers 1..P each pin a distinct version; the writer keeps writing.
        for r in 1..processes {
            vm.acquire(p(0));
            vm.set(DataHandle(r as u64));
            vm.release(p(0));
            vm.acquire(p(r));
        }
        for round in 0..200 {
            vm.acquire(p(0));
            vm.set(DataHandle(1000 + round));
            vm.release(p(0));
        }
        assert!(vm.occupied_slots() <= processes + 1);
        let c = vm.counters().unwrap();
        // Probes plus read V, write S, write D, write V.
        assert!(c.set.max_accesses <= 2 * processes as u64 + 4);
    }
}
