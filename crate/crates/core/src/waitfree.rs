//! Wait-free version maintenance with announcement-array helping.
//!
//! Shared state:
//!
//! * `current`: the current version `V`.
//! * `status[P + 2]`: `<version, h>` per slot, `h` in `{0, 1, 2}`; a slot is
//!   free when it holds `<EMPTY, 0>`.
//! * `data[P + 2]`: the data handle of the version occupying each slot.
//! * `announce[P]`: `<help, version>` per process.
//!
//! `acquire` performs a constant number of shared accesses, `release` and
//! `set` a number linear in `P`. `acquire` may be helped to commit a version
//! by a concurrent `set` (three CAS attempts per flagged slot) or by the
//! `release` that wins the right to retire the announced version.
//!
//! All accesses are sequentially consistent.

use alloc::boxed::Box;
use core::sync::atomic::{AtomicU64, Ordering::SeqCst};

use crate::instrument::{CounterSnapshot, Instrument, NoInstrument, OpClass, Probe};
use crate::pad::CachePadded;
use crate::version::{DataHandle, ProcessId, VersionId};
use crate::vm::{CapacityError, VersionMaintenance};

/// Largest supported process count: `P + 2` slots must be addressable by
/// the 8-bit packed index.
pub const MAX_PROCESSES: usize = 254;

const INDEX_BITS: u32 = 8;
const INDEX_MASK: u64 = (1 << INDEX_BITS) - 1;

/// Packs a version into `index << ts_bits | timestamp`. EMPTY is all ones.
#[inline]
fn pack_version(v: VersionId, ts_bits: u32) -> u64 {
    let ts_mask = (1u64 << ts_bits) - 1;
    if v.is_empty() {
        return (INDEX_MASK << ts_bits) | ts_mask;
    }
    debug_assert!(v.timestamp < ts_mask, "timestamp overflow");
    debug_assert!(u64::from(v.index) <= INDEX_MASK);
    (u64::from(v.index) << ts_bits) | v.timestamp
}

#[inline]
fn unpack_version(word: u64, ts_bits: u32) -> VersionId {
    let ts_mask = (1u64 << ts_bits) - 1;
    let index = (word >> ts_bits) & INDEX_MASK;
    let ts = word & ts_mask;
    if index == INDEX_MASK && ts == ts_mask {
        VersionId::EMPTY
    } else {
        VersionId::new(ts, index as u32)
    }
}

const ANN_TS_BITS: u32 = 55;
const STATUS_TS_BITS: u32 = 54;

/// `help (1) | index (8) | timestamp (55)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct Announcement(u64);

impl Announcement {
    #[inline]
    fn new(help: bool, v: VersionId) -> Self {
        Announcement((u64::from(help) << 63) | pack_version(v, ANN_TS_BITS))
    }

    #[inline]
    fn help(self) -> bool {
        self.0 >> 63 == 1
    }

    #[inline]
    fn version(self) -> VersionId {
        unpack_version(self.0 & !(1 << 63), ANN_TS_BITS)
    }
}

/// `h (2) | index (8) | timestamp (54)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct Status(u64);

impl Status {
    const FREE: Status = Status((INDEX_MASK << STATUS_TS_BITS) | ((1 << STATUS_TS_BITS) - 1));

    #[inline]
    fn new(v: VersionId, h: u8) -> Self {
        debug_assert!(h <= 2);
        Status((u64::from(h) << 62) | pack_version(v, STATUS_TS_BITS))
    }

    #[inline]
    fn h(self) -> u8 {
        (self.0 >> 62) as u8
    }

    #[inline]
    fn version(self) -> VersionId {
        unpack_version(self.0 & !(3 << 62), STATUS_TS_BITS)
    }
}

/// Version word stored in `V` (same layout as an announcement without help).
#[inline]
fn pack_current(v: VersionId) -> u64 {
    pack_version(v, ANN_TS_BITS)
}

#[inline]
fn unpack_current(w: u64) -> VersionId {
    unpack_version(w, ANN_TS_BITS)
}

/// The wait-free version maintenance object.
pub struct WaitFreeVm<I: Instrument = NoInstrument> {
    current: CachePadded<AtomicU64>,
    status: Box<[CachePadded<AtomicU64>]>,
    data: Box<[CachePadded<AtomicU64>]>,
    announce: Box<[CachePadded<AtomicU64>]>,
    inst: I,
}

impl<I: Instrument> core::fmt::Debug for WaitFreeVm<I> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("WaitFreeVm")
            .field("processes", &self.announce.len())
            .field("current", &unpack_current(self.current.load(SeqCst)))
            .finish_non_exhaustive()
    }
}

impl WaitFreeVm<NoInstrument> {
    pub fn new(processes: usize, initial: DataHandle) -> Result<Self, CapacityError> {
        Self::with_instrument(processes, initial, NoInstrument)
    }
}

impl<I: Instrument> WaitFreeVm<I> {
    /// Object for `processes` processes whose version `(0, 0)` carries
    /// `initial`.
    pub fn with_instrument(processes: usize, initial: DataHandle, inst: I) -> Result<Self, CapacityError> {
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
        let status = words(processes + 2, Status::FREE.0);
        status[0].store(Status::new(v0, 0).0, SeqCst);
        let data = words(processes + 2, 0);
        data[0].store(initial.0, SeqCst);
        Ok(WaitFreeVm {
            current: CachePadded(AtomicU64::new(pack_current(v0))),
            status,
            data,
            announce: words(processes, Announcement::new(false, VersionId::EMPTY).0),
            inst,
        })
    }

    pub fn instrument(&self) -> &I {
        &self.inst
    }

    /// Number of status and data slots (`P + 2`).
    pub fn slots(&self) -> usize {
        self.status.len()
    }

    #[inline]
    fn load_current(&self, probe: &mut Probe<'_, I>) -> VersionId {
        probe.access();
        unpack_current(self.current.load(SeqCst))
    }

    #[inline]
    fn cas_announcement(&self, slot: usize, old: Announcement, new: Announcement, probe: &mut Probe<'_, I>) -> bool {
        probe.access();
        let ok = self.announce[slot]
            .compare_exchange(old.0, new.0, SeqCst, SeqCst)
            .is_ok();
        probe.cas(ok);
        probe.announcement_cas(slot);
        ok
    }

    #[inline]
    fn cas_status(&self, slot: usize, old: Status, new: Status, probe: &mut Probe<'_, I>) -> bool {
        probe.access();
        let ok = self.status[slot]
            .compare_exchange(old.0, new.0, SeqCst, SeqCst)
            .is_ok();
        probe.cas(ok);
        ok
    }

    /// Reads the committed version of `k` and its data.
    #[inline]
    fn get_data(&self, k: usize, probe: &mut Probe<'_, I>) -> (VersionId, DataHandle) {
        probe.access();
        let a = Announcement(self.announce[k].load(SeqCst));
        debug_assert!(!a.help(), "get_data before the committing CAS");
        let v = a.version();
        probe.access();
        (v, DataHandle(self.data[v.index as usize].load(SeqCst)))
    }

    fn acquire_inner(&self, k: usize, probe: &mut Probe<'_, I>) -> (VersionId, DataHandle) {
        let requesting = Announcement::new(true, VersionId::EMPTY);
        probe.access();
        self.announce[k].store(requesting.0, SeqCst);

        let v = self.load_current(probe);
        if !self.cas_announcement(k, requesting, Announcement::new(true, v), probe) {
            return self.get_data(k, probe);
        }
        if v != self.load_current(probe) {
            let w = self.load_current(probe);
            if !self.cas_announcement(k, Announcement::new(true, v), Announcement::new(true, w), probe) {
                return self.get_data(k, probe);
            }
            if w != self.load_current(probe) {
                // Two sets happened; one of them committed a version for us.
                return self.get_data(k, probe);
            }
            self.cas_announcement(k, Announcement::new(true, w), Announcement::new(false, w), probe);
            return self.get_data(k, probe);
        }
        self.cas_announcement(k, Announcement::new(true, v), Announcement::new(false, v), probe);
        self.get_data(k, probe)
    }

    fn release_inner(&self, k: usize, probe: &mut Probe<'_, I>) -> bool {
        probe.access();
        let v = Announcement(self.announce[k].load(SeqCst)).version();
        debug_assert!(!v.is_empty(), "release({k}) without a preceding acquire");
        probe.access();
        self.announce[k].store(Announcement::new(false, VersionId::EMPTY).0, SeqCst);

        if v == self.load_current(probe) {
            return false;
        }
        let slot = v.index as usize;
        probe.access();
        let mut s = Status(self.status[slot].load(SeqCst));
        if s.version() != v {
            return false;
        }
        if s.h() == 0 {
            if !self.cas_status(slot, s, Status::new(v, 1), probe) {
                return false;
            }
            // Sole helper: commit every pending announcement of v.
            let announced = Announcement::new(true, v);
            for i in 0..self.announce.len() {
                probe.access();
                if Announcement(self.announce[i].load(SeqCst)) == announced {
                    self.cas_announcement(i, announced, Announcement::new(false, v), probe);
                }
            }
            s = Status::new(v, 2);
            probe.access();
            self.status[slot].store(s.0, SeqCst);
        }
        if s.h() == 2 {
            let committed = Announcement::new(false, v);
            for i in 0..self.announce.len() {
                probe.access();
                if Announcement(self.announce[i].load(SeqCst)) == committed {
                    return false;
                }
            }
            return self.cas_status(slot, s, Status::FREE, probe);
        }
        false
    }

    fn set_inner(&self, d: DataHandle, probe: &mut Probe<'_, I>) {
        let base = self.load_current(probe);
        let mut fresh = None;
        for (i, slot) in self.status.iter().enumerate() {
            probe.access();
            if Status(slot.load(SeqCst)) == Status::FREE {
                let v = VersionId::new(base.timestamp + 1, i as u32);
                probe.access();
                slot.store(Status::new(v, 0).0, SeqCst);
                probe.access();
                self.data[i].store(d.0, SeqCst);
                fresh = Some(v);
                break;
            }
        }
        let fresh = fresh.expect("no free status slot: more than P + 1 versions are live");
        probe.access();
        self.current.store(pack_current(fresh), SeqCst);

        // The writer is unique, so `fresh` is what `V` still holds.
        for i in 0..self.announce.len() {
            for _ in 0..3 {
                probe.access();
                let a = Announcement(self.announce[i].load(SeqCst));
                if !a.help() {
                    break;
                }
                if self.cas_announcement(i, a, Announcement::new(false, fresh), probe) {
                    break;
                }
            }
        }
    }
}

impl<I: Instrument> VersionMaintenance for WaitFreeVm<I> {
    fn processes(&self) -> usize {
        self.announce.len()
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
            .filter(|s| Status(s.load(SeqCst)) != Status::FREE)
            .count()
    }

    fn counters(&self) -> Option<CounterSnapshot> {
        self.inst.snapshot()
    }
}
