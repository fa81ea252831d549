//! Concurrent transactions over both objects: reader answers are checked
//! against committed digests and the store is audited afterwards.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use verso_core::mix::SharedSplitMix;
use verso_core::ptree::{self, NODE_ARITY};
use verso_core::txn::{TxnConfig, TxnEvent, TxnEventSink, TxnRuntime};
use verso_core::verify::{check_strict_serializable, reclamation_audit, CheckError, Witness};
use verso_core::{LockFreeVm, ProcessId, StoreError, TupleStore, VersionMaintenance, WaitFreeVm};

#[derive(Default)]
struct Events(Vec<Mutex<Vec<TxnEvent>>>);

impl TxnEventSink for &'static Events {
    fn record(&self, e: TxnEvent) {
        self.0[e.process.get()].lock().unwrap().push(e);
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct BuildError(String);

impl From<StoreError> for BuildError {
    fn from(e: StoreError) -> Self {
        BuildError(e.to_string())
    }
}

/// Range sums over a random partition of the key space; their sum is the
/// tree total, used as the answer digest.
fn partition_sums(t: verso_core::ptree::TreeView<'_>, rng: &SharedSplitMix, parts: usize) -> (Vec<i64>, u64) {
    let mut cuts: Vec<i64> = (1..parts).map(|_| rng.below(4000) as i64).collect();
    cuts.sort_unstable();
    let mut lo = i64::MIN;
    let mut answers = Vec::with_capacity(parts);
    for c in cuts {
        answers.push(if c > lo { t.range_sum(lo, c - 1) } else { 0 });
        lo = c;
    }
    answers.push(t.range_sum(lo, i64::MAX));
    let digest = answers.iter().fold(0i64, |a, &x| a.wrapping_add(x)) as u64;
    (answers, digest)
}

fn run<V: VersionMaintenance + 'static>(make_vm: impl FnOnce(verso_core::DataHandle) -> V) {
    let p = 5;
    let events: &'static Events = Box::leak(Box::new(Events((0..p).map(|_| Mutex::default()).collect())));
    let cfg = TxnConfig {
        sink: Some(Box::new(events)),
        ..TxnConfig::default()
    };
    let rng = SharedSplitMix::new(99);
    let init: Vec<(i64, i64)> = (0..2000).map(|_| (rng.below(4000) as i64, rng.next_u64() as i64)).collect();
    let rt = TxnRuntime::build(
        TupleStore::new(NODE_ARITY),
        cfg,
        |s, log| ptree::build(s, &init, log),
        |d| Ok::<_, BuildError>(make_vm(d)),
    )
    .unwrap();
    let done = AtomicBool::new(false);
    std::thread::scope(|s| {
        for k in 1..p {
            let (rt, done) = (&rt, &done);
            s.spawn(move || {
                let rng = SharedSplitMix::new(k as u64);
                while !done.load(Ordering::Relaxed) {
                    rt.read_txn_digest(ProcessId(k), |t| partition_sums(t, &rng, 8));
                }
            });
        }
        let rng = SharedSplitMix::new(1000);
        for _ in 0..3000 {
            rt.write_txn(ProcessId(0), |s, r, log| {
                let key = rng.below(4000) as i64;
                if rng.below(3) == 0 {
                    ptree::delete(s, r, key, log)
                } else {
                    ptree::insert(s, r, key, rng.next_u64() as i64, log)
                }
            })
            .unwrap();
        }
        done.store(true, Ordering::Relaxed);
    });
    let all: Vec<TxnEvent> = events.0.iter().flat_map(|v| v.lock().unwrap().clone()).collect();
    let report = check_strict_serializable(&all).unwrap();
    assert!(report.passed(), "{:?}", report.witness);
    let Witness::Serialization(m) = report.witness else { panic!() };
    assert!(!m.is_empty());

    let audit = reclamation_audit(&rt).unwrap();
    assert!(audit.passed(), "{:?}", audit.witness);
    let root = rt.quiescent_root().unwrap();
    assert!(ptree::validate(rt.store(), root).is_ok());
}

#[test]
fn waitfree_runtime_is_strictly_serializable_and_precise() {
    run(|d| WaitFreeVm::new(5, d).unwrap());
}

#[test]
fn lockfree_runtime_is_strictly_serializable_and_precise() {
    run(|d| LockFreeVm::new(5, d, 3).unwrap());
}

#[test]
fn audit_refuses_while_a_transaction_runs() {
    let rt = TxnRuntime::build(
        TupleStore::new(NODE_ARITY),
        TxnConfig::default(),
        |s, log| ptree::build(s, &[(1, 1)], log),
        |d| Ok::<_, BuildError>(WaitFreeVm::new(2, d).unwrap()),
    )
    .unwrap();
    let inside = rt.read_txn(ProcessId(1), |_| reclamation_audit(&rt));
    assert_eq!(inside.unwrap_err(), CheckError::NotQuiescent(1));
    assert!(reclamation_audit(&rt).unwrap().passed());
}
