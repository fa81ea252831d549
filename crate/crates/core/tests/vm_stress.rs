//! Short multi-threaded runs of both objects with per-version accounting.

use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};

use verso_core::{
    DataHandle, LockFreeVm, ProcessId, StepCounters, VersionMaintenance, WaitFreeVm,
};

const SETS: usize = 20_000;

/// Drives `vm` with one writer (process 0) and `P - 1` readers. Returns the
/// true-release count of every version timestamp.
fn run<V: VersionMaintenance>(vm: &V) -> Vec<u32> {
    let p = vm.processes();
    let true_releases: Vec<AtomicU32> = (0..=SETS).map(|_| AtomicU32::new(0)).collect();
    let done = AtomicBool::new(false);
    std::thread::scope(|s| {
        for k in 1..p {
            let (vm, true_releases, done) = (vm, &true_releases, &done);
            s.spawn(move || {
                while !done.load(Ordering::Relaxed) {
                    let (v, d) = vm.acquire_version(ProcessId(k));
                    assert_eq!(d.0, v.timestamp, "data of {v:?}");
                    if vm.release(ProcessId(k)) {
                        true_releases[v.timestamp as usize].fetch_add(1, Ordering::Relaxed);
                    }
                }
            });
        }
        for ts in 1..=SETS {
            let (v, _) = vm.acquire_version(ProcessId(0));
            vm.set(DataHandle(ts as u64));
            assert!(vm.occupied_slots() <= p + 1);
            if vm.release(ProcessId(0)) {
                true_releases[v.timestamp as usize].fetch_add(1, Ordering::Relaxed);
            }
        }
        done.store(true, Ordering::Relaxed);
    });
    true_releases.into_iter().map(AtomicU32::into_inner).collect()
}

fn assert_exactly_once(counts: &[u32]) {
    let (last, superseded) = counts.split_last().unwrap();
    assert_eq!(*last, 0, "current version released as dead");
    let bad: Vec<(usize, u32)> = superseded
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 1)
        .map(|(ts, &c)| (ts, c))
        .take(10)
        .collect();
    assert!(bad.is_empty(), "timestamps with a true-release count other than 1: {bad:?}");
}

#[test]
fn waitfree_every_superseded_version_is_released_once() {
    let vm = WaitFreeVm::with_instrument(6, DataHandle(0), StepCounters::new(6)).unwrap();
    assert_exactly_once(&run(&vm));
    assert_eq!(vm.occupied_slots(), 1);
    let c = vm.instrument().totals();
    assert!(c.acquire.max_accesses <= 10, "{:?}", c.acquire);
    assert!(c.release.max_accesses <= 4 * 6 + 16, "{:?}", c.release);
    assert!(c.set.max_accesses <= 4 * 6 + 16, "{:?}", c.set);
    assert!(c.announcement_budget_violations().is_empty());
}

#[test]
fn lockfree_every_superseded_version_is_released_once() {
    let vm = LockFreeVm::with_instrument(6, DataHandle(0), 11, StepCounters::new(6)).unwrap();
    assert_exactly_once(&run(&vm));
    assert_eq!(vm.occupied_slots(), 1);
}

#[test]
fn uninstrumented_objects_agree() {
    assert_exactly_once(&run(&WaitFreeVm::new(4, DataHandle(0)).unwrap()));
    assert_exactly_once(&run(&LockFreeVm::new(4, DataHandle(0), 5).unwrap()));
}
